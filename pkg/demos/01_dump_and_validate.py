"""Feature dumps and run manifests, from bytes up.

Writes a couple of FTD files by hand, inspects their exact byte layout,
assembles a manifest around them, and runs validation.
"""

import json
import os
import tempfile

import numpy as np

from featprobe import (
    FeatureTensor,
    RunManifest,
    SiteDescriptor,
    read_ftd,
    save_manifest,
    validate_manifest,
    write_ftd,
)

work = tempfile.mkdtemp(prefix="featprobe-demo1-")
print("working in", work)

# An FTD file is a fixed 22-byte header plus row-major float32 payload.
rng = np.random.default_rng(0)
features = rng.standard_normal((6, 4)).astype(np.float32)
path = os.path.join(work, "V0.ftd")
write_ftd(FeatureTensor(features), path)

raw = open(path, "rb").read()
print("file size:", len(raw), "bytes (22 header + 6*4*4 payload)")
print("magic:", raw[:4], "| format code:", raw[4], "| ndim:", raw[5])
print("dims:", int.from_bytes(raw[6:14], "little"), "x", int.from_bytes(raw[14:22], "little"))

back = read_ftd(path)
print("round-trip bit-exact:", back.data.tobytes() == features.tobytes())

# A second site, then a manifest that binds dumps + labels + split together.
write_ftd(FeatureTensor(rng.standard_normal((6, 4)).astype(np.float32)),
          os.path.join(work, "V1.ftd"))

manifest = RunManifest(
    model_name="demo-model",
    dataset_name="demo-data",
    class_names=["healthy", "lesion"],
    labels=[0, 1, 0, 1, 0, 1],
    split=["train", "train", "train", "train", "test", "test"],
    sites=[
        SiteDescriptor("V0", "V", 0, "mean_image_tokens", "V0.ftd"),
        SiteDescriptor("V1", "V", 1, "mean_image_tokens", "V1.ftd"),
    ],
    final_predictions=[0, 1, 0, 0, 0, 1],  # the model's parsed answers
)
manifest_path = os.path.join(work, "manifest.json")
save_manifest(manifest, manifest_path)
print("\nmanifest:")
print(json.dumps(json.load(open(manifest_path)), indent=2)[:400], "...")

report = validate_manifest(manifest, work)
print("\nvalidation passed:", report.passed)

# Break it on purpose: drop a dump and re-validate.
os.remove(os.path.join(work, "V1.ftd"))
report = validate_manifest(manifest, work)
print("after deleting V1.ftd:", report.passed, report.violations)
