"""Per-frequency weighting matrices for the least-squares criterion.

The fit criterion is (1/2N) sum_k vec(E_k)^H W_k vec(E_k) with Hermitian
positive-semidefinite W_k of size (n_u*n_y) x (n_u*n_y). Identity weights
give the plain absolute-error criterion. Inverse-magnitude weights put
1/|G_p|^2 on the diagonal so every term becomes |E_p/G_p|^2 -- a relative
error criterion, invariant under rescaling data and model together. That
keeps high-magnitude regions (integrator dynamics at low frequency) from
dominating the fit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularWeightError, WeightContractError
from .frf import FrfDataset

__all__ = [
    "WeightingScheme",
    "identity_weighting",
    "inverse_magnitude_weighting",
    "DEFAULT_FLOOR_RATIO",
]

#: Default magnitude floor, as a fraction of the largest |G| entry.
DEFAULT_FLOOR_RATIO = 1e-9

_HERMITIAN_TOL = 1e-12
_PSD_TOL = 1e-12


def _check_weight_matrices(W: np.ndarray, diagonal_hint: bool) -> None:
    scale = max(1.0, float(np.abs(W).max(initial=0.0)))
    herm = np.abs(W - np.conj(np.swapaxes(W, 1, 2))).max(initial=0.0)
    if herm > _HERMITIAN_TOL * scale:
        raise WeightContractError(
            f"weight matrices are not Hermitian (max asymmetry {herm:.3g})"
        )
    if diagonal_hint:
        diag = np.diagonal(W, axis1=1, axis2=2)
        min_eig = diag.real.min()
    else:
        min_eig = min(np.linalg.eigvalsh(Wk).min() for Wk in W)
    if min_eig < -_PSD_TOL * scale:
        raise WeightContractError(
            f"weight matrices are not positive semidefinite (min eigenvalue {min_eig:.3g})"
        )


@dataclass(frozen=True)
class WeightingScheme:
    """Stack of Hermitian PSD weight matrices, one per frequency point.

    Attributes
    ----------
    matrices : (N, n, n) complex array with n = n_u * n_y
    kind : str
        "identity", "inverse-magnitude" or "custom".
    """

    matrices: np.ndarray
    kind: str = "custom"

    def __post_init__(self):
        W = np.asarray(self.matrices, dtype=complex)
        if W.ndim != 3 or W.shape[1] != W.shape[2]:
            raise ValueError(f"weight stack must be (N, n, n), got shape {W.shape}")
        _check_weight_matrices(W, diagonal_hint=self.kind != "custom")
        W.flags.writeable = False
        object.__setattr__(self, "matrices", W)

    @property
    def n_points(self) -> int:
        return self.matrices.shape[0]

    @property
    def size(self) -> int:
        return self.matrices.shape[1]


def identity_weighting(n_u: int, n_y: int, n_points: int) -> WeightingScheme:
    """Unit weights: the criterion reduces to the plain sum of |E|^2 / 2N."""
    n = n_u * n_y
    W = np.broadcast_to(np.eye(n, dtype=complex), (n_points, n, n)).copy()
    return WeightingScheme(matrices=W, kind="identity")


def inverse_magnitude_weighting(dataset: FrfDataset, floor: float | None = None) -> WeightingScheme:
    """Diagonal relative-error weights built from the response magnitudes.

    Entry p of the diagonal at frequency k is 1 / max(|G_p(k)|, floor)^2,
    with vec ordering matching the residual stacking, so the weighted
    squared norm of the residual sums |E_p|^2 / |G_p|^2.

    Parameters
    ----------
    dataset : FrfDataset
    floor : float, optional
        Lower clamp on the magnitudes before inversion. Defaults to
        1e-9 * max|G|. Pass 0 to disable; then any exactly-zero magnitude
        raises :class:`SingularWeightError`.
    """
    mags = np.abs(dataset.response)  # (N, n_y, n_u)
    if floor is None:
        floor = DEFAULT_FLOOR_RATIO * float(mags.max())
    if floor < 0:
        raise ValueError(f"floor must be >= 0, got {floor}")
    if floor == 0.0 and np.any(mags == 0.0):
        k, o, i = np.argwhere(mags == 0.0)[0]
        raise SingularWeightError(
            f"|G| = 0 at point {k} (out={o + 1}, in={i + 1}) and floor = 0"
        )
    clamped = np.maximum(mags, floor)
    # vec() stacks columns: transpose (n_y, n_u) -> (n_u, n_y) before flattening
    diag = 1.0 / clamped.transpose(0, 2, 1).reshape(dataset.n_points, -1) ** 2
    n = dataset.n_u * dataset.n_y
    W = np.zeros((dataset.n_points, n, n), dtype=complex)
    idx = np.arange(n)
    W[:, idx, idx] = diag
    return WeightingScheme(matrices=W, kind="inverse-magnitude")
