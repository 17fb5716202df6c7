"""Growth factor, volatility penalty, and the feature health score.

Walks the three formulas on hand-picked curves, then assembles a full
four-score profile and renders it in percent.
"""

import numpy as np

from featprobe import (
    FhsConfig,
    ModuleCurve,
    feature_health_score,
    four_score_profile,
    growth_factor,
    render_profile_percent,
    volatility_penalty,
)

examples = {
    "flat":         [0.75, 0.75, 0.75, 0.75],
    "improving":    [0.55, 0.65, 0.75, 0.85],
    "dip+recover":  [0.50, 0.40, 0.70],
    "oscillating":  [0.70, 0.45, 0.72, 0.48, 0.70],
    "collapsing":   [0.85, 0.75, 0.60, 0.50],
}

print(f"{'curve':<14}{'GF':>9}{'VP':>9}{'FHS':>9}")
for name, values in examples.items():
    curve = ModuleCurve("V", np.asarray(values))
    gf, vp, fhs = feature_health_score(curve)
    print(f"{name:<14}{gf:>9.4f}{vp:>9.4f}{fhs:>9.4f}")

# A flat curve scores exactly its level: no growth, no volatility.
# Oscillation is punished through the total-variation term; the penalty
# strength is the lam knob.
curve = ModuleCurve("V", np.asarray(examples["oscillating"]))
for lam in (0.0, 0.2, 1.0):
    print(f"lam={lam}: VP = {volatility_penalty(curve, FhsConfig(lam=lam)):.4f}")

# Scale equivariance: percent vs fraction bookkeeping cannot change the
# story, only the displayed magnitude.
small = ModuleCurve("V", np.asarray([0.50, 0.40, 0.70]))
half = ModuleCurve("V", np.asarray([0.25, 0.20, 0.35]))
print("\nGF unchanged under x0.5:", growth_factor(small) == growth_factor(half))

# The four-score profile ties the three module curves and the final-answer
# accuracy together.
profile = four_score_profile(
    ModuleCurve("V", np.asarray([0.55, 0.70, 0.86, 0.84])),
    ModuleCurve("C", np.asarray([0.84, 0.83])),
    ModuleCurve("L", np.asarray([0.76, 0.80, 0.82, 0.83])),
    p_final=0.78,
)
print("profile:", render_profile_percent(profile))
for module, health in sorted(profile.modules.items()):
    print(f"  {module}: GF={health.gf:.4f} VP={health.vp:.4f} FHS={health.fhs:.4f}")
