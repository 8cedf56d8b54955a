"""Synthetic ground-truth systems and FRF simulation.

Generates benchmark datasets with known parameters: an optional
rigid-body double integrator plus a set of underdamped flexible modes,
sampled on a linear or logarithmic frequency grid, optionally delayed
and corrupted by circular complex Gaussian noise at a prescribed
per-element SNR.

The noise source is the Philox counter-based generator (numpy's
implementation of Philox4x32-10), so a dataset is reproducible from
(spec, seed) alone, including across languages that provide the same
generator. Draw order: one standard-normal array of shape
(N, n_y, n_u, 2), last axis = (real, imaginary).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import StructureError
from .estimator import cost as _cost
from .estimator import init_numerators
from .frf import TWO_PI, FrfDataset
from .model import (
    AdditiveModel,
    MatrixNumerator,
    ModalSpec,
    ScalarDenominator,
    Submodel,
    eval_model,
    modal_to_submodel,
    pack_parameters,
)
from .weighting import WeightingScheme, identity_weighting

__all__ = [
    "SynthSpec",
    "GridSpec",
    "NoiseSpec",
    "build_truth",
    "simulate_frf",
    "BruteForceResult",
    "modal_denominator_grid",
    "brute_force_siso_fit",
]


@dataclass(frozen=True)
class GridSpec:
    """Frequency grid: f_start..f_stop Hz, n points, linear or log spacing."""

    f_start: float
    f_stop: float
    n: int
    spacing: str = "linear"

    def __post_init__(self):
        if not (0 < self.f_start < self.f_stop):
            raise ValueError("need 0 < f_start < f_stop")
        if self.n < 2:
            raise ValueError("grid needs at least 2 points")
        if self.spacing not in ("linear", "log"):
            raise ValueError(f"spacing must be 'linear' or 'log', got {self.spacing!r}")

    def frequencies_hz(self) -> np.ndarray:
        if self.spacing == "linear":
            return np.linspace(self.f_start, self.f_stop, self.n)
        return np.geomspace(self.f_start, self.f_stop, self.n)


@dataclass(frozen=True)
class NoiseSpec:
    """Measurement noise: none, or complex Gaussian at snr_db per element."""

    kind: str = "none"
    snr_db: float = 40.0

    def __post_init__(self):
        if self.kind not in ("none", "complex-gaussian"):
            raise ValueError(f"noise kind must be 'none' or 'complex-gaussian', got {self.kind!r}")
        if self.kind != "none" and not math.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")


@dataclass(frozen=True)
class SynthSpec:
    """Complete description of a synthetic benchmark system and measurement."""

    n_u: int
    n_y: int
    grid: GridSpec
    modes: tuple = ()
    rigid_body: np.ndarray | None = None
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    delay: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_u < 1 or self.n_y < 1:
            raise ValueError("n_u and n_y must be positive")
        object.__setattr__(self, "modes", tuple(self.modes))
        freqs = [m.omega for m in self.modes]
        if len(set(freqs)) != len(freqs):
            raise StructureError("mode frequencies must be pairwise distinct")
        for m in self.modes:
            if m.residue.shape != (self.n_y, self.n_u):
                raise StructureError(
                    f"mode residue must be {self.n_y}x{self.n_u}, got {m.residue.shape}"
                )
        if self.rigid_body is not None:
            rb = np.atleast_2d(np.asarray(self.rigid_body, dtype=float))
            if rb.shape != (self.n_y, self.n_u):
                raise StructureError(
                    f"rigid-body residue must be {self.n_y}x{self.n_u}, got {rb.shape}"
                )
            rb.flags.writeable = False
            object.__setattr__(self, "rigid_body", rb)
        if not math.isfinite(self.delay):
            raise ValueError("delay must be finite")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


def build_truth(spec: SynthSpec) -> AdditiveModel:
    """Ground-truth model: optional rigid-body term, then one submodel per mode."""
    subs = []
    if spec.rigid_body is not None:
        subs.append(
            Submodel(
                ell=2,
                den=ScalarDenominator(np.zeros(0)),
                num=MatrixNumerator(spec.rigid_body[None]),
            )
        )
    subs.extend(modal_to_submodel(m) for m in spec.modes)
    if not subs:
        raise StructureError("spec describes an empty model (no rigid body, no modes)")
    return AdditiveModel(submodels=tuple(subs))


def simulate_frf(spec: SynthSpec) -> FrfDataset:
    """Simulate the FRF measurement described by the spec.

    G_k = P(j omega_k) * exp(-j omega_k delay) + V_k. For Gaussian noise
    each element's amplitude is set so its SNR (relative to that element's
    RMS response over the grid) equals snr_db; V is circular complex and
    independent across frequencies and elements.
    """
    truth = build_truth(spec)
    f_hz = spec.grid.frequencies_hz()
    omega = TWO_PI * f_hz
    G = eval_model(truth, omega) * np.exp(-1j * omega * spec.delay)[:, None, None]
    if spec.noise.kind == "complex-gaussian":
        rms = np.sqrt(np.mean(np.abs(G) ** 2, axis=0))  # (n_y, n_u)
        scale = rms * 10.0 ** (-spec.noise.snr_db / 20.0)
        rng = np.random.Generator(np.random.Philox(key=spec.seed))
        z = rng.standard_normal((spec.grid.n, spec.n_y, spec.n_u, 2))
        G = G + scale[None] * (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)
    return FrfDataset.from_hz(f_hz, G)


# ---------------------------------------------------------------------------
# exhaustive oracle for SISO problems


@dataclass(frozen=True)
class BruteForceResult:
    """Grid minimizer of the cost over candidate denominators."""

    best_model: AdditiveModel
    best_beta: np.ndarray
    best_cost: float
    best_index: int
    costs: np.ndarray


def modal_denominator_grid(omega_values, zeta_values):
    """Cartesian (omega, zeta) grid as denominator coefficient pairs.

    Returns (coeff list, shape); reshape the flat cost array of
    :func:`brute_force_siso_fit` with `shape` to get the (omega, zeta)
    cost surface.
    """
    omega_values = np.asarray(omega_values, dtype=float)
    zeta_values = np.asarray(zeta_values, dtype=float)
    grid = [
        np.array([2.0 * z / w, 1.0 / w**2])
        for w in omega_values
        for z in zeta_values
    ]
    return grid, (omega_values.size, zeta_values.size)


def brute_force_siso_fit(
    dataset: FrfDataset,
    structure,
    den_grid,
    weighting: WeightingScheme | None = None,
) -> BruteForceResult:
    """Exhaustive cost evaluation over a grid of candidate denominators.

    For every candidate the numerator is solved by linear least squares
    under the same weighting (variable projection), so each grid point's
    cost is the best achievable with that denominator. Useful as an
    independent check that an iterative fit reached a comparable or lower
    cost than the best grid point.

    Parameters
    ----------
    dataset : FrfDataset
        Must be single-input single-output.
    structure : (n, m, ell)
        Denominator degree, numerator degree, poles at the origin.
    den_grid : sequence of coefficient arrays
        Candidate denominator coefficients (each of length n), e.g. from
        :func:`modal_denominator_grid`.
    weighting : WeightingScheme, optional (identity)
    """
    if (dataset.n_y, dataset.n_u) != (1, 1):
        raise StructureError("brute-force fitting is implemented for SISO data only")
    n, m, ell = structure
    if weighting is None:
        weighting = identity_weighting(1, 1, dataset.n_points)

    costs = np.empty(len(den_grid))
    best = (np.inf, -1, None)
    for idx, coeffs in enumerate(den_grid):
        den = ScalarDenominator(np.asarray(coeffs, dtype=float))
        if den.degree != n:
            raise ValueError(f"grid entry {idx} has degree {den.degree}, expected {n}")
        model = init_numerators(
            dataset, [(ell, den, m)], weighting=weighting, use_weighting=True
        )
        c = _cost(dataset, weighting, model)
        costs[idx] = c
        if c < best[0]:
            best = (c, idx, model)
    best_cost, best_index, best_model = best
    return BruteForceResult(
        best_model=best_model,
        best_beta=pack_parameters(best_model).entries,
        best_cost=float(best_cost),
        best_index=int(best_index),
        costs=costs,
    )
