import numpy as np
import pytest

from addfit import (
    EmptyBandError,
    FrfDataset,
    FrfParseError,
    SingularWeightError,
    WeightContractError,
    WeightingScheme,
    band_select,
    delay_compensate,
    estimate_delay,
    identity_weighting,
    inverse_magnitude_weighting,
    load_frf,
    save_frf,
)
from conftest import random_dataset


def siso_dataset(freq_hz, values):
    return FrfDataset.from_hz(np.asarray(freq_hz, float), np.asarray(values, complex)[:, None, None])


# ---------------------------------------------------------------------------
# file formats


def test_csv_two_point_roundtrip(tmp_path):
    ds = siso_dataset([1.0, 2.0], [1.0 + 0j, 1.0 + 0j])
    path = tmp_path / "d.csv"
    save_frf(ds, path)
    back = load_frf(path)
    assert back.n_points == 2
    assert np.array_equal(back.freq_hz, ds.freq_hz)
    assert np.array_equal(back.response, ds.response)


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_save_load_save_is_byte_identical(rng, tmp_path, fmt):
    ds = random_dataset(rng, n_y=3, n_u=2, n_points=12)
    first = tmp_path / f"a.{fmt}"
    second = tmp_path / f"b.{fmt}"
    save_frf(ds, first)
    save_frf(load_frf(first), second)
    assert first.read_bytes() == second.read_bytes()


def test_csv_rejects_duplicate_frequency(tmp_path):
    path = tmp_path / "dup.csv"
    path.write_text(
        "freq_hz,out,in,re,im\n1.0,1,1,1.0,0.0\n1.0,1,1,2.0,0.0\n"
    )
    with pytest.raises(FrfParseError, match="duplicate|non-increasing"):
        load_frf(path)


def test_csv_rejects_decreasing_frequency(tmp_path):
    path = tmp_path / "dec.csv"
    path.write_text(
        "freq_hz,out,in,re,im\n2.0,1,1,1.0,0.0\n1.0,1,1,1.0,0.0\n"
    )
    with pytest.raises(FrfParseError, match="non-increasing frequency"):
        load_frf(path)


def test_csv_rejects_nan(tmp_path):
    path = tmp_path / "nan.csv"
    path.write_text("freq_hz,out,in,re,im\n1.0,1,1,nan,0.0\n")
    with pytest.raises(FrfParseError, match="line 2"):
        load_frf(path)


def test_csv_rejects_missing_entries(tmp_path):
    path = tmp_path / "miss.csv"
    # declares a 2x1 system (out index 2 appears) but frequency 2.0 has one record
    path.write_text(
        "freq_hz,out,in,re,im\n"
        "1.0,1,1,1.0,0.0\n1.0,2,1,1.0,0.0\n2.0,1,1,1.0,0.0\n"
    )
    with pytest.raises(FrfParseError):
        load_frf(path)


def test_csv_rejects_wrong_header(tmp_path):
    path = tmp_path / "hdr.csv"
    path.write_text("freq,out,in,re,im\n1.0,1,1,1.0,0.0\n")
    with pytest.raises(FrfParseError, match="header"):
        load_frf(path)


def test_json_roundtrip_values(rng, tmp_path):
    ds = random_dataset(rng, n_y=2, n_u=3, n_points=9)
    path = tmp_path / "d.json"
    save_frf(ds, path)
    back = load_frf(path)
    assert np.array_equal(back.freq_hz, ds.freq_hz)
    assert np.array_equal(back.response, ds.response)


def test_dataset_invariants():
    with pytest.raises(ValueError, match="positive"):
        siso_dataset([0.0, 1.0], [1, 1])
    with pytest.raises(ValueError, match="non-increasing"):
        siso_dataset([1.0, 1.0], [1, 1])
    with pytest.raises(ValueError, match="NaN|Inf"):
        siso_dataset([1.0, 2.0], [1, np.nan])


# ---------------------------------------------------------------------------
# preprocessing


def test_delay_compensate_zero_is_identity(rng):
    ds = random_dataset(rng, 2, 2, n_points=8)
    out = delay_compensate(ds, 0.0)
    assert np.array_equal(out.response, ds.response)
    assert out.delay_compensated


def test_delay_compensate_cancels_pure_delay():
    f = np.linspace(1.0, 50.0, 60)
    tau = 1e-3
    ds = siso_dataset(f, np.exp(-1j * 2 * np.pi * f * tau))
    out = delay_compensate(ds, tau)
    assert np.allclose(out.response, 1.0, atol=1e-12)


def test_delay_compensate_preserves_magnitude(rng):
    ds = random_dataset(rng, 2, 1, n_points=10)
    out = delay_compensate(ds, 0.37)
    assert np.allclose(np.abs(out.response), np.abs(ds.response), rtol=1e-13)


def test_delay_compensate_inverts(rng):
    ds = random_dataset(rng, 1, 2, n_points=11)
    back = delay_compensate(delay_compensate(ds, 0.02), -0.02)
    assert np.allclose(back.response, ds.response, rtol=1e-12, atol=1e-12)


def test_band_select_counts():
    f = np.arange(1.0, 101.0)  # 1..100 Hz
    ds = siso_dataset(f, np.ones(100))
    out = band_select(ds, 20.0, 100.0)
    assert out.n_points == 81
    assert out.freq_hz[0] == 20.0


def test_band_select_full_range_is_identity(rng):
    ds = random_dataset(rng, 1, 1, n_points=16)
    out = band_select(ds, 0.0, np.inf)
    assert np.array_equal(out.freq_hz, ds.freq_hz)
    assert np.array_equal(out.response, ds.response)


def test_band_select_empty_band():
    ds = siso_dataset([1.0, 2.0], [1, 1])
    with pytest.raises(EmptyBandError):
        band_select(ds, 5.0, 6.0)


def test_band_select_wide_grid_discard_low():
    # 4000-point grid over 0.25..2000 Hz, drop below 20 Hz
    f = np.linspace(0.25, 2000.0, 4000)
    ds = siso_dataset(f, np.ones(4000))
    out = band_select(ds, 20.0, 2000.0)
    assert out.n_points == int(np.count_nonzero(f >= 20.0))
    assert out.freq_hz[0] >= 20.0


def test_estimate_delay_recovers_known_delay():
    f = np.geomspace(50.0, 2000.0, 600)
    w = 2 * np.pi * f
    tau = 4.2e-4
    # first-order dynamics (phase settled well below the fit band) plus a delay
    G = (1.0 / (1 + 1j * w / (2 * np.pi * 2.0))) * np.exp(-1j * w * tau)
    ds = siso_dataset(f, G)
    est = estimate_delay(ds)
    assert est == pytest.approx(tau, rel=0.05)


# ---------------------------------------------------------------------------
# weighting


def test_identity_weighting_matches_plain_sum(rng):
    from addfit import cost
    from conftest import random_model

    for _ in range(3):
        model = random_model(rng, K=2, n_y=2, n_u=2)
        ds = random_dataset(rng, 2, 2, n_points=15)
        W = identity_weighting(2, 2, 15)
        from addfit import residual_all

        E = residual_all(ds, model)
        plain = np.sum(np.abs(E) ** 2) / (2 * ds.n_points)
        assert cost(ds, W, model) == pytest.approx(plain, rel=1e-12)


def test_inverse_magnitude_siso_value():
    ds = siso_dataset([1.0], [2.0 + 0j])
    W = inverse_magnitude_weighting(ds, floor=0.0)
    # squared-reciprocal magnitude: |E|^2 / |G|^2 inside the criterion
    assert W.matrices[0] == pytest.approx(np.array([[0.25 + 0j]]))


def test_inverse_magnitude_column_vector():
    G = np.array([[[1.0], [4.0]]], dtype=complex)  # 2x1 system, one point
    ds = FrfDataset.from_hz([1.0], G)
    W = inverse_magnitude_weighting(ds, floor=0.0)
    assert np.allclose(np.diag(W.matrices[0]).real, [1.0, 1.0 / 16.0])


def test_inverse_magnitude_floor_handles_zero():
    ds = siso_dataset([1.0, 2.0], [0.0 + 0j, 1.0 + 0j])
    W = inverse_magnitude_weighting(ds, floor=1e-6)
    assert W.matrices[0, 0, 0].real == pytest.approx(1e12)
    with pytest.raises(SingularWeightError):
        inverse_magnitude_weighting(ds, floor=0.0)


def test_inverse_magnitude_is_diagonal_positive(rng):
    ds = random_dataset(rng, 2, 2, n_points=9)
    W = inverse_magnitude_weighting(ds, floor=1e-12)
    diag = np.diagonal(W.matrices, axis1=1, axis2=2).real
    assert np.all(diag > 0)
    off = W.matrices - np.einsum("kp,pq->kpq", diag, np.eye(4))
    assert np.abs(off).max() == 0.0


def test_inverse_magnitude_vec_ordering():
    # distinct magnitudes per entry: diagonal must follow column stacking
    G = np.array([[[1.0, 3.0], [2.0, 4.0]]], dtype=complex)
    ds = FrfDataset.from_hz([1.0], G)
    W = inverse_magnitude_weighting(ds, floor=0.0)
    assert np.allclose(
        np.diag(W.matrices[0]).real, [1.0, 1.0 / 4.0, 1.0 / 9.0, 1.0 / 16.0]
    )


def test_cost_invariant_under_joint_rescaling(rng):
    """Relative-error semantics: scaling data and model together is free."""
    from addfit import cost
    from conftest import random_model

    model = random_model(rng, K=2, n_y=2, n_u=2, with_integrator=False)
    ds = random_dataset(rng, 2, 2, n_points=20)
    base = cost(ds, inverse_magnitude_weighting(ds, floor=0.0), model)
    for c in (0.1, 10.0):
        from addfit.model import AdditiveModel, MatrixNumerator, Submodel

        scaled_model = AdditiveModel(
            submodels=tuple(
                Submodel(ell=s.ell, den=s.den, num=MatrixNumerator(c * s.num.coeffs))
                for s in model.submodels
            )
        )
        scaled_ds = FrfDataset.from_hz(ds.freq_hz, c * ds.response)
        scaled = cost(scaled_ds, inverse_magnitude_weighting(scaled_ds, floor=0.0), scaled_model)
        assert scaled == pytest.approx(base, rel=1e-12)


def test_weighting_scheme_rejects_non_hermitian():
    W = np.zeros((1, 2, 2), dtype=complex)
    W[0] = [[1.0, 1.0], [0.0, 1.0]]
    with pytest.raises(WeightContractError):
        WeightingScheme(matrices=W, kind="custom")


def test_weighting_scheme_rejects_indefinite():
    W = np.zeros((1, 2, 2), dtype=complex)
    W[0] = [[1.0, 0.0], [0.0, -1.0]]
    with pytest.raises(WeightContractError):
        WeightingScheme(matrices=W, kind="custom")
