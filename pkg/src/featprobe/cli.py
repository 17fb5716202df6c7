"""Command-line pipeline: validate -> probe -> fhs -> diagnose, plus compare.

Exit codes: 0 success, 2 validation failure (including duplicate compare
keys), 3 probe training failure at one or more sites, 4 incomplete inputs
(missing module curve or final performance), 1 anything else. Nonzero
exits print a machine-readable JSON error object. Scheduling knobs
(--jobs) never influence emitted bytes.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import reports
from .diagnose import (
    DiagnoseThresholds,
    classify_curve_shape,
    comprehension_utilization_gap,
    detect_failure_modes,
)
from .health import (
    FhsConfig,
    FhsProfile,
    ModuleCurve,
    four_score_profile,
    render_profile_percent,
)
from .probe import METRIC_FIELDS, LayerProbeResult, ProbeConfig, probe_site_sweep
from .tensor_store import ABSTAIN, RunManifest, load_manifest, validate_manifest

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VALIDATION = 2
EXIT_TRAINING = 3
EXIT_INCOMPLETE = 4

# Preference order when one (module, layer) was dumped under several
# aggregations: image-token means are the canonical curve representation.
_AGG_PRIORITY = ("mean_image_tokens", "raw", "last_input_token")


@dataclass
class RunConfig:
    """Effective configuration of one CLI invocation."""

    manifest_path: str
    probe: ProbeConfig
    fhs: FhsConfig
    diagnose: DiagnoseThresholds
    metric_basis: str
    output_dir: str

    def to_dict(self) -> dict:
        return {
            "manifest_path": self.manifest_path,
            "probe": self.probe.to_dict(),
            "fhs": self.fhs.to_dict(),
            "diagnose": self.diagnose.to_dict(),
            "metric_basis": self.metric_basis,
        }


def _fail(code: int, error: str, **details) -> int:
    print(json.dumps({"error": error, **details}, sort_keys=True))
    return code


def _load_run_config(args) -> RunConfig:
    raw = {}
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    probe_cfg = ProbeConfig.from_dict(raw.get("probe", {}))
    if getattr(args, "seed", None) is not None:
        probe_cfg = ProbeConfig.from_dict({**probe_cfg.to_dict(), "seed": args.seed})
    metric = raw.get("metric_basis", "accuracy")
    if getattr(args, "metric", None):
        metric = args.metric
    if metric not in METRIC_FIELDS:
        raise ValueError(f"unknown metric {metric!r}")
    return RunConfig(
        manifest_path=getattr(args, "manifest", "") or "",
        probe=probe_cfg,
        fhs=FhsConfig.from_dict(raw.get("fhs", {})),
        diagnose=DiagnoseThresholds.from_dict(raw.get("diagnose", {})),
        metric_basis=metric,
        output_dir=getattr(args, "out", "") or "",
    )


def _write_provenance(out_dir: str, command: str, files: list[str], config: RunConfig) -> None:
    reports.write_json(
        os.path.join(out_dir, "provenance.json"),
        {
            "schema_version": reports.REPORT_SCHEMA_VERSION,
            "command": command,
            "files": sorted(files),
            "config": config.to_dict(),
        },
    )


def cmd_validate(args) -> int:
    manifest = load_manifest(args.manifest)
    report = validate_manifest(manifest, os.path.dirname(os.path.abspath(args.manifest)))
    print(json.dumps({"passed": report.passed, "violations": report.violations}, sort_keys=True))
    return EXIT_OK if report.passed else EXIT_VALIDATION


def cmd_probe(args) -> int:
    config = _load_run_config(args)
    manifest = load_manifest(args.manifest)
    base_dir = os.path.dirname(os.path.abspath(args.manifest))
    report = validate_manifest(manifest, base_dir)
    if not report.passed:
        return _fail(EXIT_VALIDATION, "manifest validation failed", violations=report.violations)

    sweep = probe_site_sweep(manifest, base_dir, config.probe, jobs=args.jobs)
    out = args.out
    os.makedirs(out, exist_ok=True)
    payload = {
        "schema_version": reports.REPORT_SCHEMA_VERSION,
        "kind": "layer_results",
        "model_name": manifest.model_name,
        "dataset_name": manifest.dataset_name,
        "config": {"probe": config.probe.to_dict()},
        "results": [r.to_dict() for r in sweep.results],
        "errors": [{"site_id": e.site_id, "message": e.message} for e in sweep.errors],
    }
    reports.write_json(os.path.join(out, "layer_results.json"), payload)
    reports.write_csv(
        os.path.join(out, "layer_results.csv"),
        reports.LAYER_RESULT_COLUMNS,
        reports.layer_results_csv_rows(sweep.results),
    )
    _write_provenance(out, "probe", ["layer_results.json", "layer_results.csv"], config)
    if sweep.errors:
        return _fail(
            EXIT_TRAINING,
            "training failed at one or more sites",
            sites=[{"site_id": e.site_id, "message": e.message} for e in sweep.errors],
        )
    return EXIT_OK


def _module_curves(results: list[LayerProbeResult], basis: str) -> dict[str, list[float]]:
    curves: dict[str, list[float]] = {}
    for module in ("V", "C", "L"):
        per_layer: dict[int, dict[str, float]] = {}
        for r in results:
            if r.module != module:
                continue
            per_layer.setdefault(r.layer_index, {})[r.aggregation] = getattr(r.metrics, basis)
        if not per_layer:
            continue
        values = []
        for idx in sorted(per_layer):
            by_agg = per_layer[idx]
            for agg in _AGG_PRIORITY:
                if agg in by_agg:
                    values.append(by_agg[agg])
                    break
        curves[module] = values
    return curves


def _gap_curves(results: list[LayerProbeResult], basis: str) -> dict[str, list[float]] | None:
    comp = {r.layer_index: getattr(r.metrics, basis) for r in results
            if r.module == "L" and r.aggregation == "mean_image_tokens"}
    util = {r.layer_index: getattr(r.metrics, basis) for r in results
            if r.module == "L" and r.aggregation == "last_input_token"}
    if not comp or not util or sorted(comp) != sorted(util):
        return None
    idxs = sorted(comp)
    return {
        "comprehension": [comp[i] for i in idxs],
        "utilization": [util[i] for i in idxs],
    }


def _final_performance(
    manifest: RunManifest, results: list[LayerProbeResult], basis: str
) -> tuple[float | None, str | None]:
    if manifest.final_predictions is not None:
        mask = manifest.test_mask()
        labels = np.asarray(manifest.labels)[mask]
        preds = np.asarray(manifest.final_predictions)[mask]
        # Abstentions carry the sentinel and never match a true label.
        correct = (preds != ABSTAIN) & (preds == labels)
        return float(np.mean(correct)), "final_predictions"
    final_sites = sorted(
        (r for r in results if r.module == "FINAL"), key=lambda r: r.layer_index
    )
    if final_sites:
        return getattr(final_sites[-1].metrics, basis), "final_probe_site"
    return None, None


def cmd_fhs(args) -> int:
    config = _load_run_config(args)
    doc = reports.read_json(args.results)
    results = [LayerProbeResult.from_dict(d) for d in doc["results"]]
    manifest = load_manifest(args.manifest)

    curves = _module_curves(results, config.metric_basis)
    gap = _gap_curves(results, config.metric_basis)
    p_final, p_final_source = _final_performance(manifest, results, config.metric_basis)

    module_curves = {
        m: ModuleCurve(m, np.asarray(vals)) for m, vals in curves.items()
    }
    profile = four_score_profile(
        module_curves.get("V"),
        module_curves.get("C"),
        module_curves.get("L"),
        p_final,
        config.fhs,
        metric_basis=config.metric_basis,
    )

    out = args.out
    os.makedirs(out, exist_ok=True)
    payload = {
        "schema_version": reports.REPORT_SCHEMA_VERSION,
        "kind": "fhs_profile",
        "model_name": doc.get("model_name", manifest.model_name),
        "dataset_name": doc.get("dataset_name", manifest.dataset_name),
        "metric_basis": config.metric_basis,
        "config": {"fhs": config.fhs.to_dict()},
        "profile": profile.to_dict(),
        "curves": curves,
        "gap_curves": gap,
        "p_final_source": p_final_source,
        "render_percent": render_profile_percent(profile),
    }
    reports.write_json(os.path.join(out, "profile.json"), payload)
    reports.write_csv(
        os.path.join(out, "curves.csv"), reports.CURVE_COLUMNS, reports.curve_csv_rows(curves)
    )
    _write_provenance(out, "fhs", ["profile.json", "curves.csv"], config)
    if profile.partial:
        return _fail(EXIT_INCOMPLETE, "profile is partial", missing=list(profile.missing))
    return EXIT_OK


def _curves_from_csv(path: str) -> dict[str, ModuleCurve]:
    _, rows = reports.read_csv(path)
    per_module: dict[str, dict[int, float]] = {}
    for module, layer_index, value in rows:
        per_module.setdefault(module, {})[int(layer_index)] = float(value)
    return {
        m: ModuleCurve(m, np.asarray([vals[i] for i in sorted(vals)]))
        for m, vals in per_module.items()
    }


def cmd_diagnose(args) -> int:
    config = _load_run_config(args)
    doc = reports.read_json(args.profile)
    profile = FhsProfile.from_dict(doc["profile"])
    curves = _curves_from_csv(args.curves)
    thresholds = config.diagnose

    shape_tags = {m: classify_curve_shape(curves[m], thresholds) for m in sorted(curves)}

    failure = None
    missing = [m for m in ("V", "C", "L") if m not in curves]
    if profile.p_final is None:
        missing.append("FINAL")
    if not missing:
        failure = detect_failure_modes(profile, curves, profile.p_final, thresholds)

    gap = None
    if doc.get("gap_curves"):
        gc = doc["gap_curves"]
        gap = comprehension_utilization_gap(
            ModuleCurve("L", np.asarray(gc["comprehension"])),
            ModuleCurve("L", np.asarray(gc["utilization"])),
            thresholds,
        )

    summary = []
    for m, tag in sorted(shape_tags.items()):
        summary.append(f"{m}: {tag.tag}")
    if failure is not None:
        if failure.modes:
            summary.append("failure modes: " + ", ".join(failure.modes))
        else:
            summary.append("failure modes: none detected")
        for mode in failure.not_evaluated:
            summary.append(f"{mode}: not evaluated (threshold input missing)")
    else:
        summary.append(f"failure modes: not evaluated (missing {', '.join(missing)})")
    if gap is not None:
        crossing = "none" if gap.crossing_layer is None else f"layer {gap.crossing_layer}"
        summary.append(
            f"utilization crossing: {crossing}; comprehension ceiling "
            f"{gap.comprehension_ceiling:.4f}; ceiling violation: "
            f"{'yes' if gap.ceiling_violation else 'no'}"
        )

    out = args.out
    os.makedirs(out, exist_ok=True)
    payload = {
        "schema_version": reports.REPORT_SCHEMA_VERSION,
        "kind": "diagnosis",
        "model_name": doc.get("model_name"),
        "dataset_name": doc.get("dataset_name"),
        "thresholds": thresholds.to_dict(),
        "shape_tags": {m: t.to_dict() for m, t in sorted(shape_tags.items())},
        "failure_modes": failure.to_dict() if failure is not None else None,
        "gap": gap.to_dict() if gap is not None else None,
        "summary": summary,
    }
    reports.write_json(os.path.join(out, "diagnosis.json"), payload)
    reports._atomic_write_text(os.path.join(out, "summary.txt"), "\n".join(summary) + "\n")
    _write_provenance(out, "diagnose", ["diagnosis.json", "summary.txt"], config)
    for line in summary:
        print(line)
    if missing:
        return _fail(EXIT_INCOMPLETE, "diagnosis incomplete", missing=sorted(set(missing)))
    return EXIT_OK


def _fmt_pct(value: float | None) -> str:
    return "" if value is None else f"{value * 100:.2f}"


def cmd_compare(args) -> int:
    rows = []
    for path in args.profiles:
        doc = reports.read_json(path)
        profile = FhsProfile.from_dict(doc["profile"])
        fhs_v, fhs_c, fhs_l, p_final = profile.four_scores()
        rows.append(
            {
                "model": doc.get("model_name") or "",
                "dataset": doc.get("dataset_name") or "",
                "fhs_v": fhs_v,
                "fhs_c": fhs_c,
                "fhs_l": fhs_l,
                "p_final": p_final,
            }
        )
    keys = [(r["model"], r["dataset"]) for r in rows]
    dupes = sorted({k for k in keys if keys.count(k) > 1})
    if dupes:
        return _fail(
            EXIT_VALIDATION,
            "duplicate (model, dataset) keys",
            duplicates=[list(k) for k in dupes],
        )
    rows.sort(key=lambda r: (r["model"], r["dataset"]))

    score_cols = ("fhs_v", "fhs_c", "fhs_l", "p_final")
    datasets = sorted({r["dataset"] for r in rows})
    flags: dict[int, dict[str, list[str]]] = {i: {"best": [], "worst": []} for i in range(len(rows))}
    averages: dict[str, dict[str, float | None]] = {}
    for ds in datasets:
        idxs = [i for i, r in enumerate(rows) if r["dataset"] == ds]
        averages[ds] = {}
        for col in score_cols:
            vals = [(i, rows[i][col]) for i in idxs if rows[i][col] is not None]
            if not vals:
                averages[ds][col] = None
                continue
            averages[ds][col] = float(np.mean([v for _, v in vals]))
            best = max(v for _, v in vals)
            worst = min(v for _, v in vals)
            for i, v in vals:
                if v == best:
                    flags[i]["best"].append(col)
                if v == worst:
                    flags[i]["worst"].append(col)

    csv_rows = [
        (r["model"], r["dataset"], *(_fmt_pct(r[c]) for c in score_cols)) for r in rows
    ]
    for ds in datasets:
        csv_rows.append(("Average", ds, *(_fmt_pct(averages[ds][c]) for c in score_cols)))

    lines = []
    for ds in datasets:
        lines.append(f"dataset: {ds}")
        lines.append(f"{'model':<28}{'fhs_v':>10}{'fhs_c':>10}{'fhs_l':>10}{'p_final':>10}")
        for i, r in enumerate(rows):
            if r["dataset"] != ds:
                continue
            cells = []
            for col in score_cols:
                mark = "*" if col in flags[i]["best"] else ("!" if col in flags[i]["worst"] else "")
                cells.append(f"{_fmt_pct(r[col])}{mark}")
            lines.append(f"{r['model']:<28}" + "".join(f"{c:>10}" for c in cells))
        lines.append(
            f"{'Average':<28}" + "".join(f"{_fmt_pct(averages[ds][c]):>10}" for c in score_cols)
        )
        lines.append("")
    lines.append("(* dataset best, ! dataset worst)")
    text = "\n".join(lines) + "\n"

    out = args.out
    os.makedirs(out, exist_ok=True)
    reports.write_csv(os.path.join(out, "compare.csv"), reports.COMPARE_COLUMNS, csv_rows)
    reports._atomic_write_text(os.path.join(out, "compare.txt"), text)
    reports.write_json(
        os.path.join(out, "compare.json"),
        {
            "schema_version": reports.REPORT_SCHEMA_VERSION,
            "kind": "comparison",
            "rows": [
                {**{k: rows[i][k] for k in ("model", "dataset", *score_cols)}, **flags[i]}
                for i in range(len(rows))
            ],
            "averages": averages,
        },
    )
    reports.write_json(
        os.path.join(out, "provenance.json"),
        {
            "schema_version": reports.REPORT_SCHEMA_VERSION,
            "command": "compare",
            "files": ["compare.csv", "compare.json", "compare.txt"],
            "config": {"profiles": sorted(str(p) for p in args.profiles)},
        },
    )
    print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="featprobe",
        description="Layer-wise probing, feature-health scoring, and failure diagnosis",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_val = sub.add_parser("validate", help="check a run manifest and its dumps")
    p_val.add_argument("--manifest", required=True)
    p_val.set_defaults(func=cmd_validate)

    p_probe = sub.add_parser("probe", help="train probes at every site of a run")
    p_probe.add_argument("--manifest", required=True)
    p_probe.add_argument("--config", help="JSON config file")
    p_probe.add_argument("--seed", type=int)
    p_probe.add_argument("--jobs", type=int, default=1)
    p_probe.add_argument("--out", required=True)
    p_probe.set_defaults(func=cmd_probe)

    p_fhs = sub.add_parser("fhs", help="feature health scores from layer results")
    p_fhs.add_argument("results", help="layer_results.json from the probe command")
    p_fhs.add_argument("--manifest", required=True)
    p_fhs.add_argument("--config", help="JSON config file")
    p_fhs.add_argument("--metric", choices=METRIC_FIELDS)
    p_fhs.add_argument("--out", required=True)
    p_fhs.set_defaults(func=cmd_fhs)

    p_diag = sub.add_parser("diagnose", help="shape tags, failure modes, gap analysis")
    p_diag.add_argument("profile", help="profile.json from the fhs command")
    p_diag.add_argument("curves", help="curves.csv from the fhs command")
    p_diag.add_argument("--config", help="JSON config file")
    p_diag.add_argument("--out", required=True)
    p_diag.set_defaults(func=cmd_diagnose)

    p_cmp = sub.add_parser("compare", help="tabulate profiles across runs")
    p_cmp.add_argument("profiles", nargs="+", help="profile.json files")
    p_cmp.add_argument("--out", required=True)
    p_cmp.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        return _fail(EXIT_ERROR, "file not found", path=str(exc.filename or exc))
    except (ValueError, KeyError) as exc:
        return _fail(EXIT_ERROR, "invalid input", message=str(exc))


if __name__ == "__main__":
    sys.exit(main())
