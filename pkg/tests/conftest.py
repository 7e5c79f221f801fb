import numpy as np
import pytest

from simr import Dataset, generate_model_a, intraslice_moments, slice_by_response, standardize


def random_dataset(seed, n=120, p=3, correlated=True):
    """Generic continuous dataset with a mild dependence of y on x."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    if correlated:
        mix = rng.standard_normal((p, p)) * 0.4 + np.eye(p)
        x = x @ mix + rng.standard_normal(p)
    y = x[:, 0] + 0.5 * x[:, -1] ** 2 + rng.standard_normal(n)
    return Dataset(x=x, y=y)


def moments_for(data, n_slices):
    sd = standardize(data)
    sa = slice_by_response(data.y, n_slices)
    return sd, sa, intraslice_moments(sd, sa)


@pytest.fixture(scope="session")
def model_a_400():
    """The fixed-seed benchmark replicate used across tests (seed 11)."""
    return generate_model_a(400, seed=11)


@pytest.fixture(scope="session")
def model_a_large():
    return generate_model_a(50_000, seed=123)
