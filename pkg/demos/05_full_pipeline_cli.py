"""The whole pipeline end to end through the CLI, on a synthetic run.

Plants a known per-layer signal profile (weak vision layers, lossless
connector, recovering LLM), dumps it to disk, then drives
validate -> probe -> fhs -> diagnose -> compare exactly as one would on
real extracted features.
"""

import json
import os
import tempfile

from featprobe.cli import main
from featprobe.synth import PlantedSite, make_planted_run

work = tempfile.mkdtemp(prefix="featprobe-demo5-")
print("working in", work)

sites = [
    PlantedSite("V", 0, 0.8),
    PlantedSite("V", 1, 1.6),
    PlantedSite("V", 2, 2.4),
    PlantedSite("C", 0, 2.4),
    PlantedSite("L", 0, 1.2),   # entry drop into the LLM
    PlantedSite("L", 1, 2.0),
    PlantedSite("L", 2, 2.8),
]
manifest = make_planted_run(
    os.path.join(work, "run"), sites,
    n_train=150, n_test=100, dim=12, seed=0, final_accuracy=0.72,
)
config = os.path.join(work, "config.json")
with open(config, "w") as fh:
    json.dump({"probe": {"repeats": 2, "seed": 3}}, fh)

steps = [
    ["validate", "--manifest", manifest],
    ["probe", "--manifest", manifest, "--config", config,
     "--jobs", "2", "--out", os.path.join(work, "results")],
    ["fhs", os.path.join(work, "results", "layer_results.json"),
     "--manifest", manifest, "--out", os.path.join(work, "health")],
    ["diagnose", os.path.join(work, "health", "profile.json"),
     os.path.join(work, "health", "curves.csv"),
     "--out", os.path.join(work, "diagnosis")],
    ["compare", os.path.join(work, "health", "profile.json"),
     "--out", os.path.join(work, "comparison")],
]
for argv in steps:
    print(f"\n$ featprobe {' '.join(os.path.basename(a) if os.sep in str(a) else str(a) for a in argv)}")
    rc = main([str(a) for a in argv])
    assert rc == 0, f"exit {rc}"

profile = json.load(open(os.path.join(work, "health", "profile.json")))
print("\nfour-score profile:", profile["render_percent"])
print("curves:", {m: [round(v, 3) for v in vs] for m, vs in profile["curves"].items()})
