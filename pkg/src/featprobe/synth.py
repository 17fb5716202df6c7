"""Synthetic probing runs with a planted, per-site class signal.

Each site's features are unit-variance Gaussian noise plus a class mean of
controllable strength: class means sit at ``strength / sqrt(2)`` along
orthonormal directions, so every pair of classes is ``strength`` apart and
the Bayes accuracy for two classes is ``Phi(strength / 2)``. Stronger
sites are strictly easier to probe, which makes the planted strength
ordering an oracle for the recovered accuracy curve.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .tensor_store import (
    FeatureTensor,
    RunManifest,
    SiteDescriptor,
    save_manifest,
    write_ftd,
)


@dataclass(frozen=True)
class PlantedSite:
    module: str
    layer_index: int
    strength: float
    aggregation: str = "mean_image_tokens"

    @property
    def site_id(self) -> str:
        return f"{self.module}{self.layer_index}_{self.aggregation}"


def make_planted_run(
    out_dir: str | os.PathLike,
    sites: list[PlantedSite],
    n_train: int,
    n_test: int,
    dim: int = 16,
    n_classes: int = 2,
    seed: int = 0,
    model_name: str = "synthetic",
    dataset_name: str = "planted",
    final_accuracy: float | None = None,
) -> str:
    """Write FTD dumps plus a manifest under *out_dir*; returns the manifest path.

    ``n_train``/``n_test`` are per class. When ``final_accuracy`` is given,
    per-sample final predictions are sampled to be correct with that
    probability (uniformly wrong otherwise).
    """
    out = os.fspath(out_dir)
    os.makedirs(out, exist_ok=True)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))

    per_class = n_train + n_test
    labels = np.repeat(np.arange(n_classes), per_class)
    split = np.array(
        (["train"] * n_train + ["test"] * n_test) * n_classes, dtype=object
    )
    order = rng.permutation(len(labels))
    labels = labels[order]
    split = split[order]
    n = len(labels)

    descriptors = []
    for site in sites:
        # Orthonormal class directions, drawn independently per site.
        raw = rng.normal(size=(dim, n_classes))
        q, _ = np.linalg.qr(raw)
        means = (site.strength / np.sqrt(2.0)) * q[:, :n_classes].T
        feats = rng.normal(size=(n, dim)) + means[labels]
        fname = f"{site.site_id}.ftd"
        write_ftd(FeatureTensor(feats.astype(np.float32)), os.path.join(out, fname))
        descriptors.append(
            SiteDescriptor(
                site_id=site.site_id,
                module=site.module,
                layer_index=site.layer_index,
                aggregation=site.aggregation,
                file=fname,
            )
        )

    final_predictions = None
    if final_accuracy is not None:
        correct = rng.random(n) < final_accuracy
        wrong = (labels + 1 + rng.integers(0, n_classes - 1, size=n)) % n_classes
        final_predictions = [int(l if c else w) for l, c, w in zip(labels, correct, wrong)]

    manifest = RunManifest(
        model_name=model_name,
        dataset_name=dataset_name,
        class_names=[f"class{i}" for i in range(n_classes)],
        labels=[int(l) for l in labels],
        split=list(split),
        sites=descriptors,
        final_predictions=final_predictions,
    )
    path = os.path.join(out, "manifest.json")
    save_manifest(manifest, path)
    return path
