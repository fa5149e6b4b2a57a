import numpy as np
import pytest


def random_orthogonal(k: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-ish orthogonal matrix via QR with sign fix."""
    q, r = np.linalg.qr(rng.standard_normal((k, k)))
    return q * np.sign(np.diag(r))


@pytest.fixture
def rng():
    return np.random.default_rng(20240401)
