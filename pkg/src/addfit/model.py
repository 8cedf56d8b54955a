"""Additive continuous-time MIMO transfer-function models.

A model is a sum of K submodels

    P(s) = sum_i  B_i(s) / (s^ell_i * A_i(s)),

where each A_i is a scalar polynomial with constant term fixed to 1,
B_i is a matrix polynomial with real n_y x n_u coefficient matrices, and
ell_i counts poles at the origin (at most one submodel may have ell_i > 0).
This is the natural parameterization for lightly damped mechanical
structures: one double-integrator rigid-body term plus one second-order
term per flexible mode.

The module provides evaluation, packing of all coefficients into a flat
real parameter vector (and back), conversion between second-order
submodels and modal (omega, zeta, residue) form, structural validation,
and JSON serialization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ._jsonutil import write_json
from .errors import SingularityError, StructureError

__all__ = [
    "ScalarDenominator",
    "MatrixNumerator",
    "Submodel",
    "AdditiveModel",
    "ModelStructure",
    "ParameterVector",
    "ModalSpec",
    "ValidationReport",
    "eval_submodel",
    "eval_model",
    "pack_parameters",
    "unpack_parameters",
    "modal_to_submodel",
    "submodel_to_modal",
    "validate_structure",
    "check_stability",
    "scale_frequency",
    "vec",
    "unvec",
    "model_to_json",
    "model_from_json",
    "save_model",
    "load_model",
]

#: Base tolerance for root-separation and coprimeness checks. The actual
#: threshold is scaled by (1 + largest root magnitude involved).
DEFAULT_ROOT_TOL = 1e-8


def vec(M: np.ndarray) -> np.ndarray:
    """Stack the columns of a matrix into a vector."""
    return np.asarray(M).reshape(-1, order="F")


def unvec(v: np.ndarray, n_y: int, n_u: int) -> np.ndarray:
    """Inverse of :func:`vec` for an n_y x n_u matrix."""
    return np.asarray(v).reshape((n_y, n_u), order="F")


def _as_float_array(x, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite, got {x!r}")
    return arr


@dataclass(frozen=True)
class ScalarDenominator:
    """Polynomial A(s) = 1 + a_1 s + ... + a_n s^n.

    The constant term is fixed to 1 by convention and not stored; only the
    coefficients ``a_1 .. a_n`` are kept (ascending powers). An empty
    coefficient array represents A(s) = 1.
    """

    coeffs: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.coeffs, dtype=float).reshape(-1)
        if arr.size and not np.all(np.isfinite(arr)):
            raise ValueError("denominator coefficients must be finite")
        if arr.size and arr[-1] == 0.0:
            raise ValueError("leading denominator coefficient must be nonzero")
        arr.flags.writeable = False
        object.__setattr__(self, "coeffs", arr)

    @property
    def degree(self) -> int:
        return self.coeffs.size

    def __call__(self, s):
        """Evaluate A(s) by Horner's scheme; `s` may be scalar or array."""
        s = np.asarray(s, dtype=complex)
        acc = np.zeros_like(s)
        for a in self.coeffs[::-1]:
            acc = acc * s + a
        return 1.0 + s * acc

    def roots(self) -> np.ndarray:
        """Roots of A(s), via eigenvalues of the companion matrix."""
        if self.degree == 0:
            return np.zeros(0, dtype=complex)
        # np.roots wants descending powers including the constant term 1
        return np.roots(np.concatenate((self.coeffs[::-1], [1.0])))


@dataclass(frozen=True)
class MatrixNumerator:
    """Matrix polynomial B(s) = B_0 + B_1 s + ... + B_m s^m.

    ``coeffs`` has shape (m + 1, n_y, n_u); all coefficient matrices are
    real and share their dimensions. The leading matrix must be nonzero
    when m > 0.
    """

    coeffs: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.coeffs, dtype=float)
        if arr.ndim != 3:
            raise ValueError(
                "numerator coefficients must have shape (m+1, n_y, n_u), "
                f"got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("numerator coefficients must be finite")
        if arr.shape[0] > 1 and not np.any(arr[-1]):
            raise ValueError("leading numerator coefficient matrix is zero")
        arr.flags.writeable = False
        object.__setattr__(self, "coeffs", arr)

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def n_y(self) -> int:
        return self.coeffs.shape[1]

    @property
    def n_u(self) -> int:
        return self.coeffs.shape[2]

    def __call__(self, s):
        """Evaluate B(s); scalar s gives (n_y, n_u), array s gives (N, n_y, n_u)."""
        s = np.asarray(s, dtype=complex)
        scalar = s.ndim == 0
        s = np.atleast_1d(s)[:, None, None]
        acc = np.zeros((s.shape[0],) + self.coeffs.shape[1:], dtype=complex)
        for r in range(self.degree, -1, -1):
            acc = acc * s + self.coeffs[r]
        return acc[0] if scalar else acc


@dataclass(frozen=True)
class Submodel:
    """One additive term B(s) / (s^ell * A(s))."""

    ell: int
    den: ScalarDenominator
    num: MatrixNumerator

    def __post_init__(self):
        if int(self.ell) != self.ell or self.ell < 0:
            raise ValueError(f"ell must be a non-negative integer, got {self.ell}")
        object.__setattr__(self, "ell", int(self.ell))

    @property
    def n_y(self) -> int:
        return self.num.n_y

    @property
    def n_u(self) -> int:
        return self.num.n_u

    @property
    def n_params(self) -> int:
        return self.den.degree + (self.num.degree + 1) * self.n_y * self.n_u


@dataclass(frozen=True)
class AdditiveModel:
    """Sum of submodels with consistent input/output dimensions."""

    submodels: tuple

    def __post_init__(self):
        subs = tuple(self.submodels)
        if not subs:
            raise StructureError("model needs at least one submodel")
        ny, nu = subs[0].n_y, subs[0].n_u
        for i, sub in enumerate(subs):
            if (sub.n_y, sub.n_u) != (ny, nu):
                raise StructureError(
                    f"submodel {i} has dimensions {sub.n_y}x{sub.n_u}, "
                    f"expected {ny}x{nu}"
                )
        object.__setattr__(self, "submodels", subs)

    @property
    def K(self) -> int:
        return len(self.submodels)

    @property
    def n_y(self) -> int:
        return self.submodels[0].n_y

    @property
    def n_u(self) -> int:
        return self.submodels[0].n_u

    @property
    def structure(self) -> "ModelStructure":
        return ModelStructure.from_model(self)


@dataclass(frozen=True)
class ModelStructure:
    """Shape descriptor (ell_i, n_i, m_i) per submodel plus (n_u, n_y).

    Fixes the layout of the packed parameter vector: per submodel, the
    denominator coefficients a_1..a_n followed by vec(B_0)..vec(B_m),
    submodels concatenated in order.
    """

    blocks: tuple
    n_u: int
    n_y: int

    @classmethod
    def from_model(cls, model: AdditiveModel) -> "ModelStructure":
        blocks = tuple(
            (sub.ell, sub.den.degree, sub.num.degree) for sub in model.submodels
        )
        return cls(blocks=blocks, n_u=model.n_u, n_y=model.n_y)

    @property
    def K(self) -> int:
        return len(self.blocks)

    def block_size(self, i: int) -> int:
        ell, n, m = self.blocks[i]
        return n + (m + 1) * self.n_u * self.n_y

    @property
    def n_beta(self) -> int:
        return sum(self.block_size(i) for i in range(self.K))

    def block_slice(self, i: int) -> slice:
        start = sum(self.block_size(j) for j in range(i))
        return slice(start, start + self.block_size(i))


@dataclass(frozen=True)
class ParameterVector:
    """Flat real parameter vector together with its structure descriptor."""

    entries: np.ndarray
    structure: ModelStructure

    def __post_init__(self):
        arr = np.asarray(self.entries, dtype=float).reshape(-1)
        if arr.size != self.structure.n_beta:
            raise StructureError(
                f"parameter vector has {arr.size} entries, structure "
                f"requires {self.structure.n_beta}"
            )
        arr.flags.writeable = False
        object.__setattr__(self, "entries", arr)


@dataclass(frozen=True)
class ModalSpec:
    """Underdamped second-order mode: natural frequency, damping, residue.

    Describes the term  residue / (s^2/omega^2 + (2 zeta/omega) s + 1).
    """

    omega: float
    zeta: float
    residue: np.ndarray

    def __post_init__(self):
        if not (self.omega > 0):
            raise ValueError(f"omega must be positive, got {self.omega}")
        if not (0 < self.zeta < 1):
            raise ValueError(f"zeta must lie in (0, 1), got {self.zeta}")
        arr = np.atleast_2d(np.asarray(self.residue, dtype=float))
        if not np.all(np.isfinite(arr)):
            raise ValueError("residue must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "residue", arr)


# ---------------------------------------------------------------------------
# evaluation


def eval_submodel(sub: Submodel, omega) -> np.ndarray:
    """Evaluate one submodel at real frequency omega (rad/s).

    Parameters
    ----------
    sub : Submodel
    omega : float or 1d array
        Frequency in rad/s. Negative values are allowed (the response of a
        real-coefficient model at -omega is the conjugate of the one at
        +omega); omega = 0 is rejected when the submodel has poles at the
        origin.

    Returns
    -------
    ndarray
        Complex (n_y, n_u) matrix for scalar omega, (N, n_y, n_u) for an
        array.
    """
    omega = np.asarray(omega, dtype=float)
    scalar = omega.ndim == 0
    w = np.atleast_1d(omega)
    s = 1j * w
    den = s**sub.ell * sub.den(s)
    if np.any(den == 0):
        if sub.ell > 0 and np.any(w == 0):
            raise SingularityError("submodel with poles at the origin evaluated at omega = 0")
        raise SingularityError("denominator vanishes at a requested frequency")
    out = sub.num(s) / den[:, None, None]
    return out[0] if scalar else out


def eval_model(model: AdditiveModel, omega) -> np.ndarray:
    """Evaluate the full additive model (sum over submodels) at omega."""
    out = eval_submodel(model.submodels[0], omega)
    for sub in model.submodels[1:]:
        out = out + eval_submodel(sub, omega)
    return out


# ---------------------------------------------------------------------------
# parameter packing


def pack_parameters(model: AdditiveModel) -> ParameterVector:
    """Pack all coefficients into a flat real vector.

    Per submodel the layout is [a_1, ..., a_n, vec(B_0), ..., vec(B_m)]
    with column-major vec; submodels are concatenated in order.
    """
    parts = []
    for sub in model.submodels:
        parts.append(sub.den.coeffs)
        for r in range(sub.num.degree + 1):
            parts.append(vec(sub.num.coeffs[r]))
    return ParameterVector(
        entries=np.concatenate(parts) if parts else np.zeros(0),
        structure=ModelStructure.from_model(model),
    )


def unpack_parameters(beta: ParameterVector) -> AdditiveModel:
    """Rebuild the model from a packed parameter vector (inverse of pack)."""
    st = beta.structure
    entries = beta.entries
    subs = []
    pos = 0
    for ell, n, m in st.blocks:
        a = entries[pos : pos + n]
        pos += n
        mats = np.empty((m + 1, st.n_y, st.n_u))
        for r in range(m + 1):
            mats[r] = unvec(entries[pos : pos + st.n_u * st.n_y], st.n_y, st.n_u)
            pos += st.n_u * st.n_y
        subs.append(Submodel(ell=ell, den=ScalarDenominator(a), num=MatrixNumerator(mats)))
    return AdditiveModel(submodels=tuple(subs))


# ---------------------------------------------------------------------------
# modal form


def modal_to_submodel(spec: ModalSpec) -> Submodel:
    """Second-order submodel for an underdamped mode.

    A(s) = 1 + (2 zeta / omega) s + (1 / omega^2) s^2, B(s) = residue.
    """
    a1 = 2.0 * spec.zeta / spec.omega
    a2 = 1.0 / spec.omega**2
    return Submodel(
        ell=0,
        den=ScalarDenominator(np.array([a1, a2])),
        num=MatrixNumerator(spec.residue[None, :, :]),
    )


def submodel_to_modal(sub: Submodel) -> ModalSpec:
    """Inverse of :func:`modal_to_submodel`.

    Requires ell = 0, denominator degree 2, constant numerator, and a
    complex-conjugate (underdamped) stable root pair.
    """
    if sub.ell != 0 or sub.den.degree != 2 or sub.num.degree != 0:
        raise StructureError(
            "modal form requires ell=0, denominator degree 2 and a constant numerator"
        )
    a1, a2 = sub.den.coeffs
    if a2 <= 0 or a1 <= 0:
        raise StructureError("denominator is not a stable underdamped pair")
    omega = 1.0 / np.sqrt(a2)
    zeta = 0.5 * a1 * omega
    if not zeta < 1.0:
        raise StructureError(
            f"denominator roots are real (zeta = {zeta:.6g}); not an underdamped mode"
        )
    return ModalSpec(omega=omega, zeta=zeta, residue=sub.num.coeffs[0])


# ---------------------------------------------------------------------------
# structural checks


def check_stability(den: ScalarDenominator):
    """Return (stable, roots): stable iff every root has negative real part.

    A degree-0 denominator is trivially stable with an empty root list.
    """
    roots = den.roots()
    return bool(np.all(roots.real < 0)), roots


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of :func:`validate_structure`: a list of violation messages."""

    violations: tuple = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self):
        if self.ok:
            return "structure ok"
        return "; ".join(self.violations)


def _relative_degree(sub: Submodel) -> int:
    return sub.den.degree + sub.ell - sub.num.degree


def validate_structure(model: AdditiveModel, tol_root: float = DEFAULT_ROOT_TOL) -> ValidationReport:
    """Check the structural rules that make the decomposition unique.

    Reported violations: more than one submodel with poles at the origin,
    more than one biproper (or improper) submodel, shared denominator roots
    between submodels, a common numerator/denominator root within a
    submodel, and inconsistent matrix dimensions.

    `tol_root`: base tolerance for root comparisons, scaled by
    (1 + largest root magnitude involved).
    """
    v = []
    subs = model.submodels

    integrators = [i for i, s in enumerate(subs) if s.ell > 0]
    if len(integrators) > 1:
        v.append(f"multiple integrator submodels (indices {integrators})")

    biproper = [i for i, s in enumerate(subs) if _relative_degree(s) <= 0]
    if len(biproper) > 1:
        v.append(f"multiple biproper submodels (indices {biproper})")

    roots = [s.den.roots() for s in subs]
    for i in range(len(subs)):
        for j in range(i + 1, len(subs)):
            if roots[i].size == 0 or roots[j].size == 0:
                continue
            dist = np.abs(roots[i][:, None] - roots[j][None, :]).min()
            scale = 1.0 + max(np.abs(roots[i]).max(), np.abs(roots[j]).max())
            if dist <= tol_root * scale:
                v.append(f"shared denominator roots between submodels {i} and {j}")

    for i, sub in enumerate(subs):
        if roots[i].size == 0:
            continue
        if sub.num.degree == 0:
            # a constant numerator has no roots; only the zero matrix is degenerate
            if not sub.num.coeffs.any():
                v.append(f"common numerator/denominator root in submodel {i} (zero numerator)")
            continue
        bvals = sub.num(roots[i])  # (n_roots, n_y, n_u)
        bscale = 1.0 + np.abs(sub.num.coeffs).max()
        for r, z in enumerate(roots[i]):
            zmag = (1.0 + abs(z)) ** sub.num.degree
            if np.abs(bvals[r]).max() <= tol_root * bscale * zmag:
                v.append(
                    f"common numerator/denominator root in submodel {i} near {z:.6g}"
                )
                break

    dims = {(s.n_y, s.n_u) for s in subs}
    if len(dims) > 1:
        v.append(f"inconsistent numerator dimensions: {sorted(dims)}")

    return ValidationReport(violations=tuple(v))


# ---------------------------------------------------------------------------
# frequency scaling


def scale_frequency(model: AdditiveModel, c: float) -> AdditiveModel:
    """Model of the scaled variable: returns Q with Q(s) = P(c * s).

    Used to condition regression problems: with c equal to a typical grid
    frequency, the scaled model lives on a grid of order one. Undo with
    ``scale_frequency(q, 1/c)``.
    """
    if not (c > 0 and np.isfinite(c)):
        raise ValueError(f"scale factor must be positive and finite, got {c}")
    subs = []
    for sub in model.submodels:
        powers = c ** np.arange(1, sub.den.degree + 1)
        a = sub.den.coeffs * powers
        bpow = c ** (np.arange(sub.num.degree + 1.0) - sub.ell)
        B = sub.num.coeffs * bpow[:, None, None]
        subs.append(Submodel(ell=sub.ell, den=ScalarDenominator(a), num=MatrixNumerator(B)))
    return AdditiveModel(submodels=tuple(subs))


# ---------------------------------------------------------------------------
# serialization


def model_to_json(model: AdditiveModel) -> dict:
    """Plain-dict form: {n_u, n_y, submodels:[{ell, den, num}]}.

    Numerator coefficient matrices are row-major lists of rows, one per
    polynomial order.
    """
    return {
        "n_u": model.n_u,
        "n_y": model.n_y,
        "submodels": [
            {
                "ell": sub.ell,
                "den": [float(a) for a in sub.den.coeffs],
                "num": [
                    [[float(x) for x in row] for row in sub.num.coeffs[r]]
                    for r in range(sub.num.degree + 1)
                ],
            }
            for sub in model.submodels
        ],
    }


def model_from_json(doc: dict) -> AdditiveModel:
    """Inverse of :func:`model_to_json`."""
    try:
        n_u, n_y = int(doc["n_u"]), int(doc["n_y"])
        subs = []
        for entry in doc["submodels"]:
            num = np.asarray(entry["num"], dtype=float)
            if num.ndim != 3 or num.shape[1:] != (n_y, n_u):
                raise StructureError(
                    f"numerator matrices must be {n_y}x{n_u} row-major, got shape {num.shape}"
                )
            subs.append(
                Submodel(
                    ell=int(entry["ell"]),
                    den=ScalarDenominator(np.asarray(entry["den"], dtype=float)),
                    num=MatrixNumerator(num),
                )
            )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, StructureError):
            raise
        raise StructureError(f"malformed model document: {exc}") from exc
    return AdditiveModel(submodels=tuple(subs))


def save_model(model: AdditiveModel, path) -> None:
    """Write the model to a JSON file (deterministic layout, 17 significant digits)."""
    write_json(path, model_to_json(model))


def load_model(path) -> AdditiveModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_json(json.load(fh))
