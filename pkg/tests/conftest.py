import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from normsurf import norms

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def shipped_norms():
    """One instance per family and a few dimensions."""
    q = norms.QuadraticNorm([[2.0, 0.3, 0.0], [0.3, 1.0, 0.1], [0.0, 0.1, 1.5]])
    out = {
        "euclid2": norms.euclidean(2),
        "quad3": q,
        "quartic2": norms.QuarticPerturbedNorm.diagonal(2, 0.1),
        "quartic3": norms.QuarticPerturbedNorm.diagonal(3, 0.3, weights=[1.0, 0.5, 2.0]),
        "quartic4": norms.QuarticPerturbedNorm.diagonal(4, 0.1),
        "radial2": norms.RadialSampledNorm.from_norm(norms.QuarticPerturbedNorm.diagonal(2, 0.2)),
    }
    return out


def rng_vectors(seed, n, dim):
    return np.random.default_rng(seed).standard_normal((n, dim))
