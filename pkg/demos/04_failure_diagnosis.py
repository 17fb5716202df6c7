"""Curve shapes, failure modes, and the comprehension/utilization gap.

Feeds handcrafted curves through the diagnose stage to show each rule
firing, including the evidence attached to every finding.
"""

import numpy as np

from featprobe import (
    DiagnoseThresholds,
    ModuleCurve,
    classify_curve_shape,
    comprehension_utilization_gap,
    detect_failure_modes,
    four_score_profile,
)

shapes = {
    "flat":              [0.70, 0.70, 0.71],
    "rise+fluctuate":    [0.50, 0.60, 0.80, 0.79, 0.81, 0.80],
    "sustained decline": [0.80, 0.70, 0.60, 0.50],
    "drop then recover": [0.80, 0.60, 0.55, 0.79],
}
for name, values in shapes.items():
    tag = classify_curve_shape(ModuleCurve("L", np.asarray(values)))
    print(f"{name:<18} -> {tag.tag:<20} {tag.evidence}")

# A run whose connector loses signal and whose answers trail the last
# LLM layer: two failure modes with numeric evidence.
curves = {
    "V": ModuleCurve("V", np.asarray([0.70, 0.82, 0.85])),
    "C": ModuleCurve("C", np.asarray([0.78])),             # 0.07 below V's end
    "L": ModuleCurve("L", np.asarray([0.77, 0.82, 0.90])),
}
p_final = 0.84                                              # 0.06 below L's end
profile = four_score_profile(curves["V"], curves["C"], curves["L"], p_final)
report = detect_failure_modes(profile, curves, p_final,
                              DiagnoseThresholds(visual_floor=0.92))
print("\nmodes:", report.modes)
for key in ("visual_gap", "connector_delta", "llm_entry_delta", "semantic_gap"):
    print(f"  {key}: {report.evidence[key]:+.3f}")

# Comprehension (image-token means) vs utilization (final input token)
# over the same LLM layers: where does utilization catch up?
comp = ModuleCurve("L", np.asarray([0.62, 0.70, 0.76, 0.80, 0.80]))
util = ModuleCurve("L", np.asarray([0.45, 0.58, 0.74, 0.80, 0.81]))
gap = comprehension_utilization_gap(comp, util)
print("\nper-layer gaps:", [round(g, 2) for g in gap.gaps])
print("crossing layer:", gap.crossing_layer,
      "| comprehension ceiling:", gap.comprehension_ceiling,
      "| ceiling violation:", gap.ceiling_violation)
