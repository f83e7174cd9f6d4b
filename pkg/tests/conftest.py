import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mitopipe.geometry import Box, CellClass, Detection, Point


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_detections(rng, n, extent=1000.0, classes=(CellClass.MITOSIS,)):
    dets = []
    for _ in range(n):
        c = Point(float(rng.uniform(0, extent)), float(rng.uniform(0, extent)))
        w = float(rng.uniform(10, 80))
        h = float(rng.uniform(10, 80))
        cls = int(rng.choice(classes))
        score = float(rng.random())
        dets.append(Detection(Box(c, w, h), cls, score))
    return dets
