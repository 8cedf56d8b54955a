"""Weighted least-squares estimation of additive models from FRF data.

The criterion is V(beta) = (1/2N) sum_k vec(E_k)^H W_k vec(E_k) with
E_k = G_k - P(j omega_k, beta). The residual of each submodel admits a
pseudolinear regression

    vec(E_k) = gf_i(k) - Phi_i(k)^T theta_i,

where gf_i is the residual plant of submodel i filtered by 1/A_i and
Phi_i collects the filtered data and input directions. Stacking the K
regressions and iterating a weighted instrumental-variable solve

    Bhat = [sum_k Re{Phihat W Phi^T}]^{-1} sum_k Re{Phihat W Upsilon^T}

with the instrument Phihat built from the model (instead of the data)
yields an estimator whose fixed points satisfy the first-order optimality
condition of V: refined instrumental variables. Replacing the instrument
with the (conjugated) regressor gives the classical Sanathanan-Koerner
iteration, which lacks that stationarity property.

Numerator-only estimation with fixed denominators is an ordinary linear
least-squares problem and serves as the convex initializer.

All frequencies are normalized by the median grid frequency inside the
iteration; this conditions the s^r powers and is exact (the solve is
algebraically equivalent in the scaled variables).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ._jsonutil import write_json
from .errors import (
    ConditioningError,
    DivergenceError,
    SingularFilterError,
    StructureError,
)
from .frf import FrfDataset
from .model import (
    AdditiveModel,
    MatrixNumerator,
    ModelStructure,
    ParameterVector,
    ScalarDenominator,
    Submodel,
    check_stability,
    eval_model,
    eval_submodel,
    pack_parameters,
    scale_frequency,
    unpack_parameters,
    validate_structure,
)
from .weighting import WeightingScheme, identity_weighting

__all__ = [
    "EstimationOptions",
    "EstimationReport",
    "RegressionWorkspace",
    "BlockDiagonalParameters",
    "residual",
    "residual_all",
    "cost",
    "residual_plant",
    "regressor_block",
    "instrument_block",
    "assemble_stacked",
    "optimality_residual",
    "init_numerators",
    "iterate_once",
    "estimate",
    "report_to_json",
]

#: Solves are refused above this condition number.
MAX_CONDITION = 1e14

#: Divergence guard: abort when the cost exceeds this multiple of the start.
DIVERGENCE_RATIO = 1e6


@dataclass(frozen=True)
class EstimationOptions:
    """Iteration controls.

    instrument : "riv" uses the model-based gradient instrument; "sk" the
        conjugated data regressor (Sanathanan-Koerner).
    stabilization : "reflect" mirrors unstable denominator roots into the
        left half-plane after every update; "none" leaves them.
    ridge : optional Tikhonov term added to the normal matrix.
    """

    max_iterations: int = 100
    tol_beta: float = 1e-9
    tol_grad: float = 1e-8
    instrument: str = "riv"
    stabilization: str = "reflect"
    ridge: float = 0.0

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if not (self.tol_beta > 0 and self.tol_grad > 0):
            raise ValueError("tolerances must be positive")
        if self.instrument not in ("riv", "sk"):
            raise ValueError(f"instrument must be 'riv' or 'sk', got {self.instrument!r}")
        if self.stabilization not in ("reflect", "none"):
            raise ValueError(
                f"stabilization must be 'reflect' or 'none', got {self.stabilization!r}"
            )
        if self.ridge < 0:
            raise ValueError("ridge must be >= 0")

    @classmethod
    def from_mapping(cls, mapping: dict) -> "EstimationOptions":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(mapping) - known
        if unknown:
            raise ValueError(f"unknown estimator options: {sorted(unknown)}")
        return cls(**mapping)


@dataclass
class EstimationReport:
    """Per-iteration history of :func:`estimate`.

    The lists include the initial point, so their length is
    ``iterations + 1``. ``offblock`` holds the largest discarded
    off-block-diagonal coefficient per solve (length ``iterations``); it
    vanishes at exact fixed points.
    """

    cost: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    beta_trajectory: list = field(default_factory=list)
    offblock: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    reason: str = "not-run"


def report_to_json(report: EstimationReport) -> dict:
    return {
        "iterations": report.iterations,
        "converged": report.converged,
        "reason": report.reason,
        "cost": [float(c) for c in report.cost],
        "grad_norm": [float(g) for g in report.grad_norm],
        "beta_trajectory": [[float(x) for x in b] for b in report.beta_trajectory],
    }


def save_report(report: EstimationReport, path) -> None:
    write_json(path, report_to_json(report))


def load_report(path) -> EstimationReport:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return EstimationReport(
        cost=list(doc["cost"]),
        grad_norm=list(doc["grad_norm"]),
        beta_trajectory=[np.asarray(b, float) for b in doc["beta_trajectory"]],
        iterations=int(doc["iterations"]),
        converged=bool(doc["converged"]),
        reason=str(doc["reason"]),
    )


# ---------------------------------------------------------------------------
# residuals & cost


def _check_dims(dataset: FrfDataset, model: AdditiveModel) -> None:
    if (dataset.n_y, dataset.n_u) != (model.n_y, model.n_u):
        raise StructureError(
            f"dataset is {dataset.n_y}x{dataset.n_u} but model is "
            f"{model.n_y}x{model.n_u}"
        )


def residual_all(dataset: FrfDataset, model: AdditiveModel) -> np.ndarray:
    """E_k = G_k - P(j omega_k) for all k; shape (N, n_y, n_u)."""
    _check_dims(dataset, model)
    return dataset.response - eval_model(model, dataset.omega)


def residual(dataset: FrfDataset, model: AdditiveModel, k: int) -> np.ndarray:
    """Residual matrix at grid point k."""
    _check_dims(dataset, model)
    n = dataset.n_points
    if not -n <= k < n:
        raise IndexError(f"frequency index {k} out of range for {n} points")
    return dataset.response[k] - eval_model(model, dataset.omega[k])


def _vec_all(M: np.ndarray) -> np.ndarray:
    # per-matrix column stacking, vectorized over the leading axis
    return M.transpose(0, 2, 1).reshape(M.shape[0], -1)


def _check_weighting(dataset: FrfDataset, weighting: WeightingScheme) -> None:
    n = dataset.n_u * dataset.n_y
    if weighting.size != n or weighting.n_points != dataset.n_points:
        raise StructureError(
            f"weighting is {weighting.n_points} x {weighting.size}^2 but dataset "
            f"needs {dataset.n_points} x {n}^2"
        )


def cost(dataset: FrfDataset, weighting: WeightingScheme, model: AdditiveModel) -> float:
    """Weighted least-squares criterion (1/2N) sum_k vec(E)^H W vec(E)."""
    _check_weighting(dataset, weighting)
    e = _vec_all(residual_all(dataset, model))
    vals = np.einsum("kp,kpq,kq->k", e.conj(), weighting.matrices, e)
    return float(vals.real.sum() / (2.0 * dataset.n_points))


def residual_plant(dataset: FrfDataset, model: AdditiveModel, i: int, k: int) -> np.ndarray:
    """Gtilde_i(k) = G_k minus every submodel except i."""
    _check_dims(dataset, model)
    out = dataset.response[k].astype(complex)
    for j, sub in enumerate(model.submodels):
        if j != i:
            out = out - eval_submodel(sub, dataset.omega[k])
    return out


# ---------------------------------------------------------------------------
# regressors and instruments


def _den_values(model: AdditiveModel, omega: np.ndarray) -> list:
    """A_i(j omega) arrays, refusing grids that touch a denominator root."""
    xi = 1j * omega
    vals = []
    for i, sub in enumerate(model.submodels):
        A = sub.den(xi)
        bad = np.flatnonzero(A == 0)
        if bad.size:
            raise SingularFilterError(
                f"denominator of submodel {i} vanishes at frequency index {bad[0]}"
            )
        vals.append(A)
    return vals


def _num_rows(xi: np.ndarray, ell: int, m: int, A: np.ndarray, n: int) -> np.ndarray:
    """Rows xi^r I / (xi^ell A) for r = 0..m; shape (N, (m+1) n, n)."""
    N = xi.size
    base = 1.0 / (xi**ell * A)
    factors = np.empty((N, m + 1), dtype=complex)
    factors[:, 0] = base
    for r in range(1, m + 1):
        factors[:, r] = factors[:, r - 1] * xi
    eye = np.eye(n, dtype=complex)
    return (factors[:, :, None, None] * eye[None, None]).reshape(N, (m + 1) * n, n)


def _den_rows(xi: np.ndarray, n_den: int, filt: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Rows -xi^r * target / filt for r = 1..n_den; shape (N, n_den, n)."""
    N = xi.size
    factors = np.empty((N, n_den), dtype=complex)
    if n_den:
        factors[:, 0] = -xi / filt
        for r in range(1, n_den):
            factors[:, r] = factors[:, r - 1] * xi
    return factors[:, :, None] * target[:, None, :]


def _assemble_arrays(omega: np.ndarray, G: np.ndarray, model: AdditiveModel, instrument: str):
    """Stacked regressor, instrument, and filtered outputs for the whole grid.

    Returns (Phi, Phihat, Upsilon) with shapes (N, n_beta, n), (N, n_beta, n)
    and (N, K, n); n = n_u * n_y. Block rows follow the packed parameter
    layout. The instrument rows carry the complex conjugation of the
    Hermitian-transposed gradient; the data regressor does not.
    """
    st = ModelStructure.from_model(model)
    n = st.n_u * st.n_y
    N = omega.size
    xi = 1j * omega
    Avals = _den_values(model, omega)
    P_subs = [eval_submodel(sub, omega) for sub in model.submodels]
    total = np.sum(P_subs, axis=0)

    Phi = np.empty((N, st.n_beta, n), dtype=complex)
    Phihat = np.empty((N, st.n_beta, n), dtype=complex)
    Upsilon = np.empty((N, st.K, n), dtype=complex)

    for i, sub in enumerate(model.submodels):
        ell, n_den, m = st.blocks[i]
        A = Avals[i]
        gtil = _vec_all(G - (total - P_subs[i]))
        sl = st.block_slice(i)
        num = _num_rows(xi, ell, m, A, n)

        Phi[:, sl, :] = np.concatenate(
            (_den_rows(xi, n_den, A, gtil), num), axis=1
        )
        p_i = _vec_all(P_subs[i])
        if instrument == "riv":
            hat = np.concatenate(
                (_den_rows(xi, n_den, xi**ell * A, p_i), num), axis=1
            )
            Phihat[:, sl, :] = np.conj(hat)
        else:  # Sanathanan-Koerner: conjugated data regressor
            Phihat[:, sl, :] = np.conj(Phi[:, sl, :])
        Upsilon[:, i, :] = gtil / A[:, None]
    return Phi, Phihat, Upsilon


def regressor_block(dataset: FrfDataset, model: AdditiveModel, i: int, k: int) -> np.ndarray:
    """Pseudolinear regressor Phi_i at grid point k.

    Shape (n_i + (m_i+1) n_u n_y, n_u n_y). Rows 1..n_i are
    -xi^r vec(Gtilde_i)/A_i; the remaining rows are xi^r I/(xi^ell A_i).
    Satisfies vec(E_k) = vec(Gtilde_i)/A_i - Phi_i^T theta_i identically.
    """
    _check_dims(dataset, model)
    st = ModelStructure.from_model(model)
    w = np.atleast_1d(dataset.omega[k])
    G = dataset.response[k][None]
    try:
        Phi, _, _ = _assemble_arrays(w, G, model, instrument="sk")
    except SingularFilterError:
        raise SingularFilterError(
            f"denominator of submodel {i} vanishes at frequency index {k}"
        ) from None
    return Phi[0, st.block_slice(i), :]


def instrument_block(model: AdditiveModel, i: int, omega: float) -> np.ndarray:
    """Gradient-based instrument Phihat_i at frequency omega (rad/s).

    Same layout as :func:`regressor_block` with the data replaced by the
    model response and the whole block conjugated; equals the Hermitian
    transpose of d vec(P)/d theta_i, i.e. minus the residual Jacobian.
    """
    st = ModelStructure.from_model(model)
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    G = np.zeros((1, model.n_y, model.n_u), dtype=complex)  # unused by the instrument
    _, Phihat, _ = _assemble_arrays(w, G, model, instrument="riv")
    return Phihat[0, st.block_slice(i), :]


@dataclass(frozen=True)
class RegressionWorkspace:
    """Stacked per-frequency regression quantities.

    Phi, Phihat : (N, n_beta, n) complex
    Upsilon : (N, K, n) complex, rows are the filtered residual plants.
    """

    omega: np.ndarray
    Phi: np.ndarray
    Phihat: np.ndarray
    Upsilon: np.ndarray
    weighting: WeightingScheme
    structure: ModelStructure


def assemble_stacked(
    dataset: FrfDataset,
    weighting: WeightingScheme,
    model: AdditiveModel,
    instrument: str = "riv",
) -> RegressionWorkspace:
    """Build the full-grid regressor/instrument/output stacks."""
    _check_dims(dataset, model)
    _check_weighting(dataset, weighting)
    Phi, Phihat, Upsilon = _assemble_arrays(
        dataset.omega, dataset.response, model, instrument
    )
    return RegressionWorkspace(
        omega=dataset.omega,
        Phi=Phi,
        Phihat=Phihat,
        Upsilon=Upsilon,
        weighting=weighting,
        structure=ModelStructure.from_model(model),
    )


@dataclass(frozen=True)
class BlockDiagonalParameters:
    """n_beta x K matrix with theta_i in block row i of column i."""

    matrix: np.ndarray
    structure: ModelStructure

    @classmethod
    def from_parameters(cls, beta: ParameterVector) -> "BlockDiagonalParameters":
        st = beta.structure
        M = np.zeros((st.n_beta, st.K))
        for i in range(st.K):
            sl = st.block_slice(i)
            M[sl, i] = beta.entries[sl]
        return cls(matrix=M, structure=st)

    def extract(self) -> ParameterVector:
        """Block-diagonal entries as a packed vector (off-block entries dropped)."""
        st = self.structure
        parts = [self.matrix[st.block_slice(i), i] for i in range(st.K)]
        return ParameterVector(entries=np.concatenate(parts), structure=st)

    def max_offblock(self) -> float:
        st = self.structure
        out = 0.0
        for i in range(st.K):
            off = np.delete(self.matrix[st.block_slice(i)], i, axis=1)
            if off.size:
                out = max(out, float(np.abs(off).max()))
        return out


# ---------------------------------------------------------------------------
# optimality condition


def optimality_residual(
    dataset: FrfDataset, weighting: WeightingScheme, model: AdditiveModel
):
    """First-order optimality vector and its scale-normalized norm.

    The vector is (1/N) sum_k Re{Phihat_k W_k vec(E_k)}; it equals the
    negated gradient of :func:`cost` with respect to the packed parameters
    (for models whose origin-pole submodels have constant denominators).
    The reported norm is ||vector|| / (1 + ||beta||).
    """
    _check_dims(dataset, model)
    _check_weighting(dataset, weighting)
    _, Phihat, _ = _assemble_arrays(
        dataset.omega, dataset.response, model, instrument="riv"
    )
    e = _vec_all(residual_all(dataset, model))
    vec_sum = np.einsum("kpq,kqr,kr->p", Phihat, weighting.matrices, e)
    g = vec_sum.real / dataset.n_points
    beta = pack_parameters(model).entries
    norm = float(np.linalg.norm(g) / (1.0 + np.linalg.norm(beta)))
    return g, norm


# ---------------------------------------------------------------------------
# convex initialization


def _weight_sqrt(weighting: WeightingScheme) -> np.ndarray:
    """Hermitian square roots L_k with L_k^H L_k = W_k."""
    W = weighting.matrices
    if weighting.kind in ("identity", "inverse-magnitude"):
        diag = np.sqrt(np.diagonal(W, axis1=1, axis2=2).real)
        L = np.zeros_like(W)
        idx = np.arange(W.shape[1])
        L[:, idx, idx] = diag
        return L
    vals, vecs = np.linalg.eigh(W)
    vals = np.clip(vals, 0.0, None)
    return np.einsum("kpq,kq,krq->kpr", vecs, np.sqrt(vals), vecs.conj())


def _normalize_structure(fixed_denominators) -> list:
    out = []
    for entry in fixed_denominators:
        if len(entry) == 2:
            ell, den = entry
            m = 0
        else:
            ell, den, m = entry
        if not isinstance(den, ScalarDenominator):
            den = ScalarDenominator(np.asarray(den, dtype=float))
        out.append((int(ell), den, int(m)))
    return out


def init_numerators(
    dataset: FrfDataset,
    fixed_denominators,
    weighting: WeightingScheme | None = None,
    use_weighting: bool = False,
) -> AdditiveModel:
    """Linear least-squares numerators for fixed denominator polynomials.

    With the poles frozen the model is linear in the numerator matrices, so
    vec(G_k) ~ Phi^T(omega_k) eta is an ordinary least-squares problem in
    the stacked numerator coefficients eta. By default the plain 2-norm is
    minimized; pass ``use_weighting=True`` to weight the rows by W^(1/2)
    and minimize the same criterion as :func:`cost`.

    Parameters
    ----------
    dataset : FrfDataset
    fixed_denominators : sequence of (ell, den) or (ell, den, m)
        Denominators as :class:`ScalarDenominator` (or coefficient arrays);
        m is the numerator degree for that submodel (default 0).
    weighting : WeightingScheme, required when ``use_weighting``
    use_weighting : bool

    Returns
    -------
    AdditiveModel
        Full model with the given denominators and the estimated numerators.
    """
    entries = _normalize_structure(fixed_denominators)
    for i, (ell, den, _) in enumerate(entries):
        stable, roots = check_stability(den)
        if not stable:
            raise StructureError(
                f"fixed denominator {i} is unstable (roots {np.round(roots, 6)})"
            )
    n = dataset.n_u * dataset.n_y
    N = dataset.n_points

    # condition the powers of j*omega by working on a scaled grid
    fac = float(np.median(dataset.omega))
    omega_s = dataset.omega / fac
    xi = 1j * omega_s
    scaled = [
        (ell, ScalarDenominator(den.coeffs * fac ** np.arange(1, den.degree + 1)), m)
        for ell, den, m in entries
    ]

    cols = []
    for ell, den, m in scaled:
        A = den(xi)
        bad = np.flatnonzero((xi**ell * A) == 0)
        if bad.size:
            raise SingularFilterError(
                f"fixed denominator vanishes on the grid at index {bad[0]}"
            )
        cols.append(_num_rows(xi, ell, m, A, n))
    M = np.concatenate(cols, axis=1).transpose(0, 2, 1)  # (N, n, n_eta) = Phi^T
    y = _vec_all(dataset.response)

    if use_weighting:
        if weighting is None:
            raise ValueError("use_weighting=True requires a weighting")
        _check_weighting(dataset, weighting)
        L = _weight_sqrt(weighting)
        M = np.einsum("kpq,kqr->kpr", L, M)
        y = np.einsum("kpq,kq->kp", L, y)

    n_eta = M.shape[2]
    rows = M.reshape(N * n, n_eta)
    rhs = y.reshape(N * n)
    stacked = np.vstack((rows.real, rows.imag))
    target = np.concatenate((rhs.real, rhs.imag))
    eta, _, rank, sv = np.linalg.lstsq(stacked, target, rcond=None)
    if rank < n_eta:
        cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
        raise ConditioningError(
            f"numerator regression is rank-deficient ({rank}/{n_eta}), "
            f"condition number {cond:.3g}",
            condition_number=cond,
        )

    subs = []
    pos = 0
    for (ell, den, m), (_, den_s, _) in zip(entries, scaled):
        mats = np.empty((m + 1, dataset.n_y, dataset.n_u))
        for r in range(m + 1):
            block = eta[pos : pos + n]
            # undo the frequency scaling of the numerator coefficients
            mats[r] = block.reshape((dataset.n_y, dataset.n_u), order="F") * fac ** (
                ell - r
            )
            pos += n
        subs.append(Submodel(ell=ell, den=den, num=MatrixNumerator(mats)))
    return AdditiveModel(submodels=tuple(subs))


# ---------------------------------------------------------------------------
# the iteration


def _reflect_unstable(den: ScalarDenominator) -> ScalarDenominator:
    """Mirror roots with non-negative real part across the imaginary axis."""
    if den.degree == 0:
        return den
    roots = den.roots()
    unstable = roots.real > 0
    if not np.any(unstable):
        return den
    roots[unstable] = -np.conj(roots[unstable])
    poly = np.poly(roots)  # monic, descending powers
    const = poly[-1]
    if const == 0 or not np.all(np.isfinite(poly)):
        raise ConditioningError("stabilized denominator has a root at the origin")
    coeffs = (poly[:-1] / const)[::-1].real
    return ScalarDenominator(coeffs)


def _stabilize(model: AdditiveModel, policy: str) -> AdditiveModel:
    if policy == "none":
        return model
    subs = tuple(
        Submodel(ell=s.ell, den=_reflect_unstable(s.den), num=s.num)
        for s in model.submodels
    )
    return AdditiveModel(submodels=subs)


def _iterate(
    dataset: FrfDataset,
    weighting: WeightingScheme,
    model: AdditiveModel,
    options: EstimationOptions,
):
    """One block IV solve; returns (next model, max off-block coefficient)."""
    _check_dims(dataset, model)
    _check_weighting(dataset, weighting)
    fac = float(np.median(dataset.omega))
    omega_s = dataset.omega / fac
    model_s = scale_frequency(model, fac)

    Phi, Phihat, Upsilon = _assemble_arrays(
        omega_s, dataset.response, model_s, options.instrument
    )
    W = weighting.matrices
    S1 = np.einsum("kpq,kqr,ksr->ps", Phihat, W, Phi).real
    S2 = np.einsum("kpq,kqr,ksr->ps", Phihat, W, Upsilon).real
    if options.ridge:
        S1 = S1 + options.ridge * np.eye(S1.shape[0])

    cond = np.linalg.cond(S1)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise ConditioningError(
            f"normal matrix is numerically singular (condition number {cond:.3g}); "
            "check for coinciding poles or a grid touching a resonance",
            condition_number=float(cond),
        )
    # column-pivoted orthogonal factorization; never forms an inverse
    Bmat = scipy.linalg.lstsq(S1, S2, lapack_driver="gelsy")[0]

    st = ModelStructure.from_model(model)
    block = BlockDiagonalParameters(matrix=Bmat, structure=st)
    beta_s = block.extract()
    next_scaled = unpack_parameters(beta_s)
    next_model = scale_frequency(next_scaled, 1.0 / fac)
    return _stabilize(next_model, options.stabilization), block.max_offblock()


def iterate_once(
    dataset: FrfDataset,
    weighting: WeightingScheme,
    model: AdditiveModel,
    options: EstimationOptions | None = None,
) -> AdditiveModel:
    """One refined-IV (or SK) update of every submodel's parameters."""
    opts = options or EstimationOptions()
    next_model, _ = _iterate(dataset, weighting, model, opts)
    return next_model


def estimate(
    dataset: FrfDataset,
    weighting: WeightingScheme | None,
    initial_model: AdditiveModel,
    options: EstimationOptions | None = None,
):
    """Iterate from an initial model until convergence.

    Runs :func:`iterate_once` until (a) the relative parameter change drops
    below ``tol_beta``, (b) the scale-normalized optimality-residual norm
    drops below ``tol_grad``, or (c) ``max_iterations`` is reached. The
    parameter change is measured in the frequency-normalized parameter
    space (coefficients made dimensionless by powers of the median grid
    frequency); in raw units the denominator coefficients are orders of
    magnitude smaller than the numerator entries and a plain norm would
    stop while the poles still move.

    A small step does not by itself mean the iteration is done: the update
    solves a heavily weighted normal system, so steps in stiff directions
    are damped and can fall under ``tol_beta`` a few iterations before the
    remaining error has contracted away. With the "riv" instrument the
    step test (a) is therefore only accepted once the optimality residual
    is also below ``tol_grad``; a converged "riv" run is a verified
    stationary point of the cost. The "sk" instrument has no stationarity
    property, so (a) alone terminates it and its runs are reported
    converged only if they happen to end at a stationary point.

    Parameters
    ----------
    dataset : FrfDataset
    weighting : WeightingScheme or None (identity)
    initial_model : AdditiveModel
        Must pass :func:`validate_structure` and have stable denominators.
    options : EstimationOptions

    Returns
    -------
    (AdditiveModel, EstimationReport)

    Raises
    ------
    DivergenceError
        When the cost exceeds one million times the initial cost; the
        partial report is attached.
    """
    opts = options or EstimationOptions()
    if weighting is None:
        weighting = identity_weighting(dataset.n_u, dataset.n_y, dataset.n_points)

    check = validate_structure(initial_model)
    if not check.ok:
        raise StructureError(f"initial model is invalid: {check}")
    for i, sub in enumerate(initial_model.submodels):
        stable, roots = check_stability(sub.den)
        if not stable:
            raise StructureError(
                f"initial denominator {i} is unstable (roots {np.round(roots, 6)})"
            )

    report = EstimationReport(reason="max_iterations")
    model = initial_model
    fac = float(np.median(dataset.omega))
    beta = pack_parameters(model).entries
    beta_n = pack_parameters(scale_frequency(model, fac)).entries
    c0 = cost(dataset, weighting, model)
    _, gnorm = optimality_residual(dataset, weighting, model)
    report.cost.append(c0)
    report.grad_norm.append(gnorm)
    report.beta_trajectory.append(beta.copy())

    # divergence floor: a perfect start (c0 = 0) must not trip the guard,
    # so the reference never drops below roundoff on the data power
    e0 = _vec_all(dataset.response)
    data_cost = float(
        np.einsum("kp,kpq,kq->", e0.conj(), weighting.matrices, e0).real
    ) / (2.0 * dataset.n_points)
    divergence_limit = DIVERGENCE_RATIO * max(c0, np.finfo(float).eps * data_cost)
    terminated = None
    for _ in range(opts.max_iterations):
        model_next, offmax = _iterate(dataset, weighting, model, opts)
        beta_next = pack_parameters(model_next).entries
        beta_n_next = pack_parameters(scale_frequency(model_next, fac)).entries
        c = cost(dataset, weighting, model_next)
        _, gnorm = optimality_residual(dataset, weighting, model_next)
        report.cost.append(c)
        report.grad_norm.append(gnorm)
        report.beta_trajectory.append(beta_next.copy())
        report.offblock.append(offmax)
        report.iterations += 1

        delta = np.linalg.norm(beta_n_next - beta_n) / (1.0 + np.linalg.norm(beta_n))
        model, beta, beta_n = model_next, beta_next, beta_n_next
        if c > divergence_limit:
            report.reason = "diverged"
            raise DivergenceError(
                f"cost grew to {c:.6g} from {c0:.6g}; aborting", report=report
            )
        step_done = delta < opts.tol_beta
        if opts.instrument == "riv":
            step_done = step_done and gnorm < opts.tol_grad
        if step_done:
            terminated = "parameter_change"
            break
        if gnorm < opts.tol_grad:
            terminated = "stationarity"
            break

    if terminated is not None:
        report.reason = terminated
        report.converged = bool(report.grad_norm[-1] < opts.tol_grad)
    else:
        report.reason = "max_iterations"
        report.converged = False
    return model, report
