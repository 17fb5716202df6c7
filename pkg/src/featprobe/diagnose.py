"""Qualitative readouts over probing curves: shapes, failure modes, gaps.

The numeric thresholds here operationalize observations that are
qualitative in nature; every reported tag and mode carries the statistics
that triggered it so the cutoffs stay inspectable rather than baked in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .health import FhsProfile, ModuleCurve

FLAT = "flat"
SUSTAINED_DECLINE = "sustained_decline"
DROP_THEN_RECOVER = "drop_then_recover"
RISE_AND_FLUCTUATE = "rise_and_fluctuate"
IRREGULAR = "irregular"

VISUAL_QUALITY_LIMITATION = "visual_quality_limitation"
CONNECTOR_FIDELITY_LOSS = "connector_fidelity_loss"
LLM_COMPREHENSION_DEFICIT = "llm_comprehension_deficit"
SEMANTIC_MAPPING_MISALIGNMENT = "semantic_mapping_misalignment"

NOT_EVALUATED = "not_evaluated"

# Guard against float dust when comparing curve values against thresholds.
_TOL = 1e-12


@dataclass(frozen=True)
class DiagnoseThresholds:
    """Numeric cutoffs for the shape and failure-mode rules.

    ``delta_drop`` is the minimum change treated as meaningful (fraction
    scale, 0.03 = 3 points in percent terms). ``visual_floor`` is an
    externally supplied reference accuracy (e.g. a conventional supervised
    baseline) against which the vision tower's endpoint is judged; without
    it that mode is reported as not evaluated.
    """

    delta_drop: float = 0.03
    flat_band: float = 0.01
    visual_floor: float | None = None
    crossing_min_layers: int = 2

    def __post_init__(self) -> None:
        if self.delta_drop < 0 or self.flat_band < 0:
            raise ValueError("thresholds must be >= 0")
        if self.visual_floor is not None and self.visual_floor < 0:
            raise ValueError("visual_floor must be >= 0")
        if self.crossing_min_layers < 1:
            raise ValueError("crossing_min_layers must be >= 1")

    def to_dict(self) -> dict:
        return {
            "delta_drop": self.delta_drop,
            "flat_band": self.flat_band,
            "visual_floor": self.visual_floor,
            "crossing_min_layers": self.crossing_min_layers,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiagnoseThresholds":
        return cls(
            delta_drop=d.get("delta_drop", 0.03),
            flat_band=d.get("flat_band", 0.01),
            visual_floor=d.get("visual_floor"),
            crossing_min_layers=d.get("crossing_min_layers", 2),
        )


@dataclass(frozen=True)
class ShapeTag:
    tag: str
    evidence: dict

    def to_dict(self) -> dict:
        return {"tag": self.tag, "evidence": self.evidence}


def classify_curve_shape(
    curve: ModuleCurve, thresholds: DiagnoseThresholds = DiagnoseThresholds()
) -> ShapeTag:
    """Assign exactly one shape tag to a curve; rules apply in order.

    1. flat: max - min <= flat_band (single-layer curves are flat).
    2. sustained_decline: least-squares slope < 0 and the endpoint sits
       at least delta_drop below the start.
    3. drop_then_recover: the second layer falls delta_drop below the
       first and the endpoint recovers delta_drop above the minimum.
    4. rise_and_fluctuate: the peak (first layer within flat_band of the
       maximum) clears the start by delta_drop, lands before the final
       ceil(n/4) layers, and the curve stays within a 2*delta_drop band
       from the peak onward.
    5. irregular otherwise.
    """
    v = curve.values
    n = curve.n
    rng = float(v.max() - v.min())
    if n == 1 or rng <= thresholds.flat_band + _TOL:
        return ShapeTag(FLAT, {"range": rng, "flat_band": thresholds.flat_band})

    slope = float(np.polyfit(np.arange(n), v, 1)[0])
    end_drop = float(v[0] - v[-1])
    if slope < 0 and v[-1] <= v[0] - thresholds.delta_drop + _TOL:
        return ShapeTag(
            SUSTAINED_DECLINE,
            {"slope": slope, "end_drop": end_drop, "delta_drop": thresholds.delta_drop},
        )

    recovered = float(v[-1] - v.min())
    if v[1] <= v[0] - thresholds.delta_drop + _TOL and recovered >= thresholds.delta_drop - _TOL:
        return ShapeTag(
            DROP_THEN_RECOVER,
            {
                "first_drop": float(v[0] - v[1]),
                "recovered": recovered,
                "delta_drop": thresholds.delta_drop,
            },
        )

    peak_idx = int(np.argmax(v.max() - v <= thresholds.flat_band + _TOL))
    last_quarter_start = n - math.ceil(n / 4)
    post_peak_range = float(v[peak_idx:].max() - v[peak_idx:].min())
    if (
        v.max() >= v[0] + thresholds.delta_drop - _TOL
        and peak_idx < last_quarter_start
        and post_peak_range <= 2 * thresholds.delta_drop + _TOL
    ):
        return ShapeTag(
            RISE_AND_FLUCTUATE,
            {
                "peak_index": peak_idx,
                "rise": float(v.max() - v[0]),
                "post_peak_range": post_peak_range,
                "delta_drop": thresholds.delta_drop,
            },
        )

    return ShapeTag(
        IRREGULAR,
        {"range": rng, "slope": slope, "peak_index": peak_idx},
    )


@dataclass(frozen=True)
class FailureModeReport:
    """Detected failure modes, each with the numeric evidence that fired it."""

    modes: tuple[str, ...]
    evidence: dict
    not_evaluated: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "modes": list(self.modes),
            "evidence": self.evidence,
            "not_evaluated": list(self.not_evaluated),
        }


def detect_failure_modes(
    profile: FhsProfile,
    curves: dict[str, ModuleCurve],
    p_final: float,
    thresholds: DiagnoseThresholds = DiagnoseThresholds(),
) -> FailureModeReport:
    """Apply the four boundary rules over module endpoint performances.

    Rules compare raw probe values at module boundaries (health scores ride
    along as supporting evidence only):

    * visual_quality_limitation: vision endpoint falls delta_drop below the
      supplied visual_floor (reported as not evaluated when no floor given);
    * connector_fidelity_loss: connector endpoint at least delta_drop below
      the vision endpoint;
    * llm_comprehension_deficit: the first LLM layer loses delta_drop
      against the connector endpoint, or the LLM ends strictly below its
      own first layer;
    * semantic_mapping_misalignment: final-answer performance deviates from
      the last LLM layer by delta_drop or more, in either direction.
    """
    for m in ("V", "C", "L"):
        if m not in curves:
            raise ValueError(f"missing module curve {m}")
    v_end = float(curves["V"].values[-1])
    c_end = float(curves["C"].values[-1])
    l_first = float(curves["L"].values[0])
    l_end = float(curves["L"].values[-1])
    delta = thresholds.delta_drop

    modes: list[str] = []
    not_evaluated: list[str] = []
    evidence: dict = {
        "v_end": v_end,
        "c_end": c_end,
        "l_first": l_first,
        "l_end": l_end,
        "p_final": p_final,
        "delta_drop": delta,
        "fhs": {m: h.fhs for m, h in sorted(profile.modules.items())},
    }

    if thresholds.visual_floor is None:
        not_evaluated.append(VISUAL_QUALITY_LIMITATION)
        evidence["visual_floor"] = None
    else:
        evidence["visual_floor"] = thresholds.visual_floor
        evidence["visual_gap"] = v_end - thresholds.visual_floor
        if v_end < thresholds.visual_floor - delta - _TOL:
            modes.append(VISUAL_QUALITY_LIMITATION)

    evidence["connector_delta"] = c_end - v_end
    if c_end <= v_end - delta + _TOL:
        modes.append(CONNECTOR_FIDELITY_LOSS)

    evidence["llm_entry_delta"] = l_first - c_end
    evidence["llm_net_delta"] = l_end - l_first
    # Strict decline on the second clause: an LLM that merely holds its
    # entry performance is not a deficit.
    if l_first <= c_end - delta + _TOL or l_end < l_first - _TOL:
        modes.append(LLM_COMPREHENSION_DEFICIT)

    evidence["semantic_gap"] = p_final - l_end
    if abs(p_final - l_end) >= delta - _TOL:
        modes.append(SEMANTIC_MAPPING_MISALIGNMENT)

    return FailureModeReport(tuple(modes), evidence, tuple(not_evaluated))


@dataclass(frozen=True)
class GapReport:
    """Per-layer utilization-minus-comprehension gaps over the LLM layers."""

    gaps: tuple[float, ...]
    crossing_layer: int | None
    comprehension_ceiling: float
    ceiling_violation: bool
    evidence: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "gaps": list(self.gaps),
            "crossing_layer": self.crossing_layer,
            "comprehension_ceiling": self.comprehension_ceiling,
            "ceiling_violation": self.ceiling_violation,
            "evidence": self.evidence,
        }


def comprehension_utilization_gap(
    comp_curve: ModuleCurve,
    util_curve: ModuleCurve,
    thresholds: DiagnoseThresholds = DiagnoseThresholds(),
) -> GapReport:
    """Compare image-token-mean probes against final-input-token probes.

    The crossing layer is the first (1-based) layer where utilization
    reaches comprehension and holds for ``crossing_min_layers`` consecutive
    layers (capped at the curve length). A ceiling violation flags
    utilization exceeding the comprehension maximum by more than
    delta_drop.
    """
    comp = comp_curve.values
    util = util_curve.values
    if len(comp) != len(util):
        raise ValueError(f"curve length mismatch: {len(comp)} vs {len(util)}")
    n = len(comp)
    gaps = util - comp
    at_or_above = gaps >= -_TOL

    run_len = min(thresholds.crossing_min_layers, n)
    crossing: int | None = None
    for i in range(n - run_len + 1):
        if bool(at_or_above[i : i + run_len].all()):
            crossing = i + 1
            break

    ceiling = float(comp.max())
    violation = bool(util.max() > ceiling + thresholds.delta_drop + _TOL)
    return GapReport(
        gaps=tuple(float(g) for g in gaps),
        crossing_layer=crossing,
        comprehension_ceiling=ceiling,
        ceiling_violation=violation,
        evidence={
            "utilization_max": float(util.max()),
            "crossing_min_layers": thresholds.crossing_min_layers,
            "delta_drop": thresholds.delta_drop,
        },
    )
