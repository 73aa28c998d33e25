import numpy as np
import pytest

from trianglevec.imagegrid import Image
from trianglevec.synthtri import SigmoidParams, TriangleParams


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def triangle_params():
    """Walls at b=54 with a 45 degree diagonal at b=40."""
    return TriangleParams(
        SigmoidParams(1.0, -2.0, 54.0),
        SigmoidParams(1.0, -2.0, 54.0),
        SigmoidParams(0.6, -1.5, 40.0),
        np.pi / 4,
    )


def random_image(rng, h=64, w=64):
    return Image(rng.random((h, w)))
