"""Feature-health scoring of per-module probe performance curves.

A module's curve is the ordered sequence of probe performances at its
layers, as fractions. Three quantities summarize it:

* growth factor ``GF = ln(P_end / sqrt(P_start * P_min))``: net gain of
  the last layer over the first and worst layers;
* volatility penalty ``VP = exp(-lam * total_variation / P_end)``: decays
  from 1 as the curve oscillates;
* feature health score ``FHS = P_end * (1 + GF) * VP``: high only for
  strong, improving, stable modules.

All three are scale-equivariant: rescaling a curve by c > 0 leaves GF and
VP unchanged and rescales FHS by c, so fraction-vs-percent bookkeeping is
a pure display concern. Internally everything is a fraction; percent
appears only in rendering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CURVE_MODULES = ("V", "C", "L")


@dataclass(frozen=True)
class FhsConfig:
    lam: float = 0.2
    epsilon_clamp: float = 1e-6

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.epsilon_clamp <= 0:
            raise ValueError("epsilon_clamp must be > 0")

    def to_dict(self) -> dict:
        return {"lam": self.lam, "epsilon_clamp": self.epsilon_clamp}

    @classmethod
    def from_dict(cls, d: dict) -> "FhsConfig":
        return cls(lam=d.get("lam", 0.2), epsilon_clamp=d.get("epsilon_clamp", 1e-6))


@dataclass(frozen=True)
class ModuleCurve:
    """Ordered per-layer probe performances for one module, each in [0, 1].

    Zeros are tolerated here and clamped up to ``epsilon_clamp`` by the
    scoring functions (with a warning in the profile) so one dead layer
    cannot abort a diagnostic run.
    """

    module: str
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 1 or len(vals) < 1:
            raise ValueError("curve needs at least one value")
        if not np.all(np.isfinite(vals)):
            raise ValueError("curve values must be finite")
        if vals.min() < 0.0 or vals.max() > 1.0:
            raise ValueError("curve values must lie in [0, 1]")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return len(self.values)


def _clamped(curve: ModuleCurve, eps: float) -> tuple[np.ndarray, bool]:
    vals = np.maximum(curve.values, eps)
    return vals, bool(np.any(curve.values < eps))


def growth_factor(curve: ModuleCurve, config: FhsConfig = FhsConfig()) -> float:
    """ln(P_end / sqrt(P_start * P_min)); 0 for any constant curve."""
    vals, _ = _clamped(curve, config.epsilon_clamp)
    return float(np.log(vals[-1] / np.sqrt(vals[0] * vals.min())))


def volatility_penalty(curve: ModuleCurve, config: FhsConfig = FhsConfig()) -> float:
    """exp(-lam * sum |P_{i+1} - P_i| / P_end); 1 for a single-layer curve."""
    vals, _ = _clamped(curve, config.epsilon_clamp)
    tv = float(np.abs(np.diff(vals)).sum())
    return float(np.exp(-config.lam * tv / vals[-1]))


def feature_health_score(
    curve: ModuleCurve, config: FhsConfig = FhsConfig()
) -> tuple[float, float, float]:
    """(GF, VP, FHS) for one module curve, FHS = P_end * (1 + GF) * VP."""
    vals, _ = _clamped(curve, config.epsilon_clamp)
    gf = growth_factor(curve, config)
    vp = volatility_penalty(curve, config)
    return gf, vp, float(vals[-1] * (1.0 + gf) * vp)


@dataclass(frozen=True)
class ModuleHealth:
    gf: float
    vp: float
    fhs: float
    p_end: float
    clamped: bool = False

    def to_dict(self) -> dict:
        return {
            "gf": self.gf,
            "vp": self.vp,
            "fhs": self.fhs,
            "p_end": self.p_end,
            "clamped": self.clamped,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModuleHealth":
        return cls(d["gf"], d["vp"], d["fhs"], d["p_end"], bool(d.get("clamped", False)))


@dataclass
class FhsProfile:
    """The four-score summary of one run: FHS per module plus P_final.

    ``metric_basis`` records which probe metric fed the curves. A missing
    module (or missing final performance) marks the profile partial and is
    listed in ``missing`` rather than raising.
    """

    modules: dict[str, ModuleHealth]
    p_final: float | None
    metric_basis: str = "accuracy"
    missing: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()

    @property
    def partial(self) -> bool:
        return bool(self.missing)

    def to_dict(self) -> dict:
        return {
            "modules": {m: h.to_dict() for m, h in sorted(self.modules.items())},
            "p_final": self.p_final,
            "metric_basis": self.metric_basis,
            "partial": self.partial,
            "missing": list(self.missing),
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FhsProfile":
        return cls(
            modules={m: ModuleHealth.from_dict(h) for m, h in d["modules"].items()},
            p_final=d.get("p_final"),
            metric_basis=d.get("metric_basis", "accuracy"),
            missing=tuple(d.get("missing", ())),
            warnings=tuple(d.get("warnings", ())),
        )

    def four_scores(self) -> tuple[float | None, float | None, float | None, float | None]:
        get = lambda m: self.modules[m].fhs if m in self.modules else None
        return (get("V"), get("C"), get("L"), self.p_final)


def four_score_profile(
    curve_v: ModuleCurve | None,
    curve_c: ModuleCurve | None,
    curve_l: ModuleCurve | None,
    p_final: float | None,
    config: FhsConfig = FhsConfig(),
    metric_basis: str = "accuracy",
) -> FhsProfile:
    """Assemble the (FHS_V, FHS_C, FHS_L, P_final) profile from curves."""
    if p_final is not None and not 0.0 <= p_final <= 1.0:
        raise ValueError("p_final must lie in [0, 1]")
    modules: dict[str, ModuleHealth] = {}
    missing: list[str] = []
    warnings: list[str] = []
    for name, curve in (("V", curve_v), ("C", curve_c), ("L", curve_l)):
        if curve is None:
            missing.append(name)
            continue
        if curve.module != name:
            raise ValueError(f"curve for slot {name} is labeled {curve.module!r}")
        vals, clamped = _clamped(curve, config.epsilon_clamp)
        gf, vp, fhs = feature_health_score(curve, config)
        if clamped:
            warnings.append(
                f"module {name}: values below {config.epsilon_clamp} clamped before scoring"
            )
        modules[name] = ModuleHealth(gf, vp, fhs, float(vals[-1]), clamped)
    if p_final is None:
        missing.append("FINAL")
    return FhsProfile(
        modules=modules,
        p_final=p_final,
        metric_basis=metric_basis,
        missing=tuple(missing),
        warnings=tuple(warnings),
    )


def render_profile_percent(profile: FhsProfile) -> str:
    """Arrow-joined percent rendering, e.g. ``91.42 -> 88.41 -> 81.21 -> 81.33``
    (with a real arrow); absent scores render as ``--``."""
    parts = []
    for score in profile.four_scores():
        parts.append("--" if score is None else f"{score * 100:.2f}")
    return " → ".join(parts)
