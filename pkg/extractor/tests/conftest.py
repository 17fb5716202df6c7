import os

import numpy as np
import pytest
from PIL import Image


def write_toy_dataset(root, n_per_class=4, size=16, seed=0, class_names=("no", "yes")):
    """Two-class grayscale images with a class-dependent brightness pattern."""
    rng = np.random.default_rng(seed)
    for ci, cname in enumerate(class_names):
        cdir = os.path.join(root, cname)
        os.makedirs(cdir, exist_ok=True)
        for i in range(n_per_class):
            img = rng.integers(0, 80, (size, size), dtype=np.uint8)
            if ci == 1:
                img = img + 120  # bright class
            Image.fromarray(img.astype(np.uint8)).save(os.path.join(cdir, f"img{i}.png"))
    return root


@pytest.fixture()
def toy_dataset(tmp_path):
    return write_toy_dataset(str(tmp_path / "data"))
