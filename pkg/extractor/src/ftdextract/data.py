"""Class-per-subdirectory image datasets."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image


@dataclass(frozen=True)
class Sample:
    path: str
    rel_path: str
    label: int


@dataclass
class ImageFolderDataset:
    """Images under ``root/<class_name>/*``; class order is sorted names."""

    root: str
    class_names: list[str]
    samples: list[Sample]

    @classmethod
    def scan(cls, root: str | os.PathLike, sample_limit: int | None = None) -> "ImageFolderDataset":
        root = os.fspath(root)
        class_names = sorted(
            d for d in os.listdir(root) if os.path.isdir(os.path.join(root, d))
        )
        if len(class_names) < 2:
            raise ValueError(f"need >= 2 class subdirectories under {root}")
        per_class: list[list[Sample]] = []
        for idx, name in enumerate(class_names):
            cdir = os.path.join(root, name)
            files = sorted(
                f for f in os.listdir(cdir)
                if f.lower().endswith((".png", ".jpg", ".jpeg", ".bmp"))
            )
            if not files:
                raise ValueError(f"class directory {cdir} holds no images")
            per_class.append(
                [Sample(os.path.join(cdir, f), os.path.join(name, f), idx) for f in files]
            )
        # Interleave classes so a sample limit keeps the classes balanced.
        samples: list[Sample] = []
        for i in range(max(len(c) for c in per_class)):
            for c in per_class:
                if i < len(c):
                    samples.append(c[i])
        if sample_limit is not None:
            samples = samples[:sample_limit]
        labels_present = {s.label for s in samples}
        if len(labels_present) < 2:
            raise ValueError("sample limit left fewer than 2 classes")
        return cls(root=root, class_names=class_names, samples=samples)

    def __len__(self) -> int:
        return len(self.samples)


def load_image(path: str, size: int) -> np.ndarray:
    """Load an image as float32 (C=1, size, size) in [0, 1], grayscale."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L").resize((size, size), Image.BILINEAR))
    return (arr.astype(np.float32) / 255.0)[None, :, :]


def stratified_split(labels: list[int], train_fraction: float, seed: int) -> list[str]:
    """Deterministic per-class train/test assignment.

    Every class contributes at least one test sample (and at least one
    train sample when it has two or more).
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 71])))
    labels_arr = np.asarray(labels)
    split = np.empty(len(labels_arr), dtype=object)
    for cls in np.unique(labels_arr):
        idx = np.flatnonzero(labels_arr == cls)
        idx = idx[rng.permutation(len(idx))]
        n_train = int(round(train_fraction * len(idx)))
        n_train = min(max(n_train, 1 if len(idx) > 1 else 0), len(idx) - 1)
        split[idx[:n_train]] = "train"
        split[idx[n_train:]] = "test"
    return list(split)
