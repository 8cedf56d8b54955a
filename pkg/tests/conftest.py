import numpy as np
import pytest

from addfit import (
    AdditiveModel,
    FrfDataset,
    MatrixNumerator,
    ScalarDenominator,
    Submodel,
    WeightingScheme,
)


def random_model(rng, K=None, n_y=None, n_u=None, with_integrator=None) -> AdditiveModel:
    """Random valid additive model.

    Denominators are stable second-order pairs with well-separated natural
    frequencies; an optional double-integrator submodel (constant
    denominator) comes first, matching the canonical rigid-body shape.
    """
    K = K if K is not None else int(rng.integers(1, 5))
    n_y = n_y if n_y is not None else int(rng.integers(1, 4))
    n_u = n_u if n_u is not None else int(rng.integers(1, 4))
    if with_integrator is None:
        with_integrator = bool(rng.integers(0, 2))
    subs = []
    for i in range(K):
        if i == 0 and with_integrator:
            subs.append(
                Submodel(
                    ell=2,
                    den=ScalarDenominator(np.zeros(0)),
                    num=MatrixNumerator(rng.standard_normal((1, n_y, n_u))),
                )
            )
            continue
        w0 = float(rng.uniform(0.6, 1.6)) * 2.2**i
        z = float(rng.uniform(0.05, 0.5))
        m = int(rng.integers(0, 2))
        num = rng.standard_normal((m + 1, n_y, n_u))
        subs.append(
            Submodel(
                ell=0,
                den=ScalarDenominator(np.array([2 * z / w0, 1 / w0**2])),
                num=MatrixNumerator(num),
            )
        )
    return AdditiveModel(submodels=tuple(subs))


def random_dataset(rng, n_y, n_u, n_points=40, f_lo=0.05, f_hi=1.2) -> FrfDataset:
    """Random complex responses on a log grid (Hz)."""
    f = np.geomspace(f_lo, f_hi, n_points)
    G = rng.standard_normal((n_points, n_y, n_u)) + 1j * rng.standard_normal(
        (n_points, n_y, n_u)
    )
    return FrfDataset.from_hz(f, G)


def random_diagonal_weighting(rng, n, n_points) -> WeightingScheme:
    W = np.zeros((n_points, n, n), dtype=complex)
    idx = np.arange(n)
    W[:, idx, idx] = rng.uniform(0.2, 3.0, size=(n_points, n))
    return WeightingScheme(matrices=W, kind="custom")


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
