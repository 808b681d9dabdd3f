import numpy as np
import pytest

from ssdss.bench import make_assembly_analog


def rel_err(a, b, floor=0.0):
    """Largest entry-wise deviation over the largest reference magnitude."""
    a = np.asarray(a)
    b = np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), floor))


def rel_rms(a, b):
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(b))


@pytest.fixture(scope="session")
def assembly():
    return make_assembly_analog()
