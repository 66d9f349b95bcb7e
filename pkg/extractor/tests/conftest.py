import csv

import numpy as np
import pytest
from PIL import Image

CLASS_COLORS = {
    "optimism": (210, 180, 40),
    "suffering": (30, 40, 120),
}


def make_image(path, color, seed, size=(48, 32)):
    rng = np.random.default_rng(seed)
    base = np.tile(np.array(color, dtype=np.float64), (size[1], size[0], 1))
    noisy = np.clip(base + rng.normal(0, 18, size=base.shape), 0, 255).astype(np.uint8)
    Image.fromarray(noisy, mode="RGB").save(path)
    return path


@pytest.fixture
def image_listing(tmp_path):
    """Ten class-colored PNGs plus their path,id,label CSV listing."""
    rows = []
    for i in range(10):
        label = "optimism" if i % 2 == 0 else "suffering"
        path = tmp_path / f"img_{i}.png"
        make_image(path, CLASS_COLORS[label], seed=i)
        rows.append((str(path), f"img-{i}", label))
    listing = tmp_path / "listing.csv"
    with open(listing, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "id", "label"])
        writer.writerows(rows)
    return listing, rows
