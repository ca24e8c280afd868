import numpy as np
import pytest

from nnmix import copulas, geom, marginals, weights


@pytest.fixture
def small_ref():
    """A 6-site reference set on the unit square, fixed ordering."""
    rng = np.random.default_rng(42)
    return geom.build_reference(rng.random((6, 2)), L=3)


@pytest.fixture
def poisson_marg():
    return marginals.PoissonMarginal(5.0)


@pytest.fixture
def wparams():
    return weights.WeightParams(np.array([-0.5, 0.2, -0.1]), 0.8, 0.25)


def copula_param_grid(family, k=10):
    """k parameter values spanning each family's working range."""
    if family == "gaussian":
        return np.linspace(0.05, 0.95, k)
    if family == "gumbel":
        return np.concatenate([[1.0 + 1e-9], np.geomspace(1.1, 48.0, k - 1)])
    return np.concatenate([[0.01], np.geomspace(0.1, 90.0, k - 1)])


def interior_grid(m):
    """m^2 interior points of the unit square, away from the boundary."""
    g = np.linspace(0.04, 0.96, m)
    t1, t2 = np.meshgrid(g, g)
    return t1.ravel(), t2.ravel()
