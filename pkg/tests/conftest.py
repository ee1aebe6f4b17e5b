import numpy as np
import pytest

from locator import REFERENCE_GEOMETRY
from signal_core import MultichannelRecord


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def geometry():
    return REFERENCE_GEOMETRY


def delayed_pair(base: np.ndarray, length: int, delay: int, margin: int = 128, sample_rate: float = 1.0e6):
    """Two channels where channel 2 is channel 1 delayed by `delay` samples."""
    x1 = base[margin : margin + length]
    x2 = base[margin - delay : margin - delay + length]
    return MultichannelRecord.from_array(np.vstack([x1, x2]), sample_rate)


@pytest.fixture
def make_delayed_pair():
    return delayed_pair
