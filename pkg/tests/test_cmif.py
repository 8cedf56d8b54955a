import numpy as np
import pytest

from addfit import (
    FrfDataset,
    ModalSpec,
    PeakOptions,
    compute_cmif,
    detect_peaks,
    pick_modes,
)
from addfit.cmif import export_cmif_csv, with_peaks
from addfit.synth import GridSpec, SynthSpec, simulate_frf


def test_identity_matrices_give_unit_cmif():
    G = np.broadcast_to(np.eye(2, dtype=complex), (5, 2, 2)).copy()
    ds = FrfDataset.from_hz(np.arange(1.0, 6.0), G)
    cm = compute_cmif(ds)
    assert np.allclose(cm.values, 1.0)


def test_siso_cmif_is_squared_magnitude(rng):
    G = rng.standard_normal((8, 1, 1)) + 1j * rng.standard_normal((8, 1, 1))
    ds = FrfDataset.from_hz(np.arange(1.0, 9.0), G)
    cm = compute_cmif(ds)
    assert np.allclose(cm.values[:, 0], np.abs(G[:, 0, 0]) ** 2, rtol=1e-12)


def test_rank_one_response():
    u = np.array([3.0, 4.0]) / 5.0
    v = np.array([1.0, 1.0j]) / np.sqrt(2)
    G = np.outer(u, v.conj())[None]
    ds = FrfDataset.from_hz([1.0], G)
    cm = compute_cmif(ds)
    assert cm.values[0] == pytest.approx([1.0, 0.0], abs=1e-14)


def test_tracks_sorted_descending(rng):
    G = rng.standard_normal((30, 3, 2)) + 1j * rng.standard_normal((30, 3, 2))
    ds = FrfDataset.from_hz(np.linspace(1, 30, 30), G)
    cm = compute_cmif(ds)
    assert np.all(np.diff(cm.values, axis=1) <= 0)
    assert np.all(cm.values >= 0)


def test_unitary_invariance(rng):
    G = rng.standard_normal((12, 3, 3)) + 1j * rng.standard_normal((12, 3, 3))
    ds = FrfDataset.from_hz(np.linspace(1, 12, 12), G)
    Q1, _ = np.linalg.qr(rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)))
    Q2, _ = np.linalg.qr(rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)))
    rotated = FrfDataset.from_hz(ds.freq_hz, np.einsum("pq,kqr,rs->kps", Q1, G, Q2))
    assert np.allclose(
        compute_cmif(rotated).values, compute_cmif(ds).values, rtol=1e-10, atol=1e-12
    )


def test_single_mode_peak_at_damped_resonance():
    from addfit.model import eval_submodel, modal_to_submodel

    omega0, zeta = 100.0, 0.01
    omega = np.linspace(10.0, 300.0, 581)  # step 0.5 rad/s, contains 100 exactly
    sub = modal_to_submodel(ModalSpec(omega=omega0, zeta=zeta, residue=[[1.0]]))
    ds = FrfDataset.from_omega(omega, eval_submodel(sub, omega))
    cm = compute_cmif(ds)
    peaks = detect_peaks(cm)
    assert len(peaks) == 1
    # magnitude of a second-order section peaks at omega0 * sqrt(1 - 2 zeta^2)
    f_peak = omega0 * np.sqrt(1 - 2 * zeta**2) / (2 * np.pi)
    expected = int(np.argmin(np.abs(cm.freq_hz - f_peak)))
    assert peaks[0].index == expected


def test_flat_response_has_no_peaks():
    ds = FrfDataset.from_hz(np.linspace(1, 40, 40), np.ones((40, 1, 1), dtype=complex))
    modes = pick_modes(compute_cmif(ds))
    assert modes == []


def test_pick_modes_returns_sorted_seeds():
    spec = SynthSpec(
        n_u=2,
        n_y=2,
        grid=GridSpec(f_start=1.0, f_stop=400.0, n=900, spacing="log"),
        modes=(
            ModalSpec(omega=2 * np.pi * 30.0, zeta=0.01, residue=[[1.0, 0.2], [0.2, 0.5]]),
            ModalSpec(omega=2 * np.pi * 170.0, zeta=0.01, residue=[[0.4, -1.0], [-1.0, 0.3]]),
        ),
    )
    ds = simulate_frf(spec)
    seeds = pick_modes(compute_cmif(ds), PeakOptions(default_zeta=0.02))
    assert len(seeds) == 2
    assert seeds[0].omega < seeds[1].omega
    for seed in seeds:
        assert seed.zeta == 0.02
        assert seed.residue.shape == (2, 2)
        assert not seed.residue.any()


def test_pick_modes_needs_enough_points():
    ds = FrfDataset.from_hz([1.0, 2.0], np.ones((2, 1, 1), dtype=complex))
    with pytest.raises(ValueError):
        pick_modes(compute_cmif(ds))


def test_export_csv_with_peaks_section(tmp_path, rng):
    G = rng.standard_normal((6, 2, 2)) + 1j * rng.standard_normal((6, 2, 2))
    ds = FrfDataset.from_hz(np.linspace(1, 6, 6), G)
    cm = with_peaks(compute_cmif(ds))
    path = tmp_path / "cmif.csv"
    export_cmif_csv(cm, path)
    text = path.read_text().splitlines()
    assert text[0] == "freq_hz,sv_index,cmif_value"
    assert "# peaks" in text
    assert len([ln for ln in text if not ln.startswith("#")]) == 1 + 6 * 2 + len(cm.peaks)
