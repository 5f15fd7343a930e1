import numpy as np
import pytest

from relaxnav.semantic_map import RegionClass, SemanticGrid

TABLE3 = (("sidewalk", RegionClass.FREE),
          ("grass", RegionClass.SOFT),
          ("building", RegionClass.HARD))


def make_grid(labels, table=TABLE3, resolution=1.0) -> SemanticGrid:
    lab = np.asarray(labels, dtype=np.uint8)
    h, w = lab.shape
    return SemanticGrid(w, h, resolution, lab, table)


def uniform_grid(h, w, label=0, table=TABLE3, resolution=1.0) -> SemanticGrid:
    return make_grid(np.full((h, w), label, dtype=np.uint8), table, resolution)


@pytest.fixture
def grid10():
    """10x10 all-sidewalk map at 1 m/cell."""
    return uniform_grid(10, 10)


@pytest.fixture
def split_grid():
    """10x10 map: left half sidewalk, right half grass."""
    lab = np.zeros((10, 10), dtype=np.uint8)
    lab[:, 5:] = 1
    return make_grid(lab)


def random_multilabel_grid(rng, h=24, w=24, table=TABLE3):
    """Random blobs of every label over a sidewalk field."""
    lab = np.zeros((h, w), dtype=np.uint8)
    for _ in range(6):
        label = int(rng.integers(0, len(table)))
        ph, pw = int(rng.integers(2, 6)), int(rng.integers(2, 6))
        r0 = int(rng.integers(0, h - ph))
        c0 = int(rng.integers(0, w - pw))
        lab[r0:r0 + ph, c0:c0 + pw] = label
    lab[0, 0] = 0  # keep at least one free cell
    return make_grid(lab, table)
