"""Complex mode indicator function and peak-based mode seeding.

The CMIF at each frequency is the set of squared singular values of the
response matrix, ordered descending. Lightly damped modes show up as
sharp peaks of the first singular-value track; the peak frequency is a
good initial guess for the natural frequency, and a small default damping
ratio completes the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ._jsonutil import format_float
from .frf import FrfDataset
from .model import ModalSpec

__all__ = [
    "CmifResult",
    "CmifPeak",
    "PeakOptions",
    "compute_cmif",
    "detect_peaks",
    "pick_modes",
    "export_cmif_csv",
]


@dataclass(frozen=True)
class CmifPeak:
    """One detected peak: grid index, CMIF value there, singular-value track."""

    index: int
    value: float
    track: int


@dataclass(frozen=True)
class CmifResult:
    """Squared singular values per frequency, plus any detected peaks.

    ``values`` has shape (N, min(n_u, n_y)) with tracks ordered descending
    at every frequency.
    """

    freq_hz: np.ndarray
    values: np.ndarray
    n_y: int
    n_u: int
    peaks: tuple = field(default_factory=tuple)

    def __post_init__(self):
        f = np.asarray(self.freq_hz, dtype=float).reshape(-1)
        v = np.asarray(self.values, dtype=float)
        if v.shape[0] != f.size:
            raise ValueError("frequency grid and value rows disagree")
        f.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "freq_hz", f)
        object.__setattr__(self, "values", v)

    @property
    def n_tracks(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class PeakOptions:
    """Peak-detection settings.

    A grid point is a peak when it is strictly larger than every other
    value in a window of half-width `window`, and its value is at least
    `prominence_ratio` times the median of its track. `tracks` limits the
    search to the first so-many singular-value tracks (closely spaced or
    repeated modes appear on the lower tracks). Detected modes are seeded
    with damping `default_zeta`.
    """

    window: int = 2
    prominence_ratio: float = 10.0
    default_zeta: float = 0.01
    tracks: int = 1


def compute_cmif(dataset: FrfDataset) -> CmifResult:
    """Squared singular values of G at every frequency, sorted descending."""
    sv = np.linalg.svd(dataset.response, compute_uv=False)
    return CmifResult(
        freq_hz=dataset.freq_hz,
        values=sv**2,
        n_y=dataset.n_y,
        n_u=dataset.n_u,
    )


def detect_peaks(cmif: CmifResult, options: PeakOptions | None = None) -> tuple:
    """Locate peaks on the requested tracks; returns CmifPeak tuples sorted by frequency."""
    opt = options or PeakOptions()
    if opt.window < 1:
        raise ValueError("window must be >= 1")
    n = cmif.freq_hz.size
    w = opt.window
    peaks = []
    for t in range(min(opt.tracks, cmif.n_tracks)):
        track = cmif.values[:, t]
        threshold = opt.prominence_ratio * float(np.median(track))
        for k in range(w, n - w):
            seg = track[k - w : k + w + 1]
            if track[k] < threshold:
                continue
            if np.argmax(seg) != w:
                continue
            if np.sum(seg == track[k]) > 1:
                continue  # plateau, not a strict maximum
            peaks.append(CmifPeak(index=k, value=float(track[k]), track=t))
    peaks.sort(key=lambda p: (cmif.freq_hz[p.index], p.track))
    return tuple(peaks)


def pick_modes(cmif: CmifResult, options: PeakOptions | None = None) -> list:
    """Turn CMIF peaks into modal seeds.

    Each peak yields a :class:`ModalSpec` with the natural frequency at the
    peak's grid frequency, damping `options.default_zeta`, and an all-zero
    residue matrix (residues are estimated later from the data). Returns
    seeds sorted by frequency; empty when nothing exceeds the prominence
    threshold.
    """
    opt = options or PeakOptions()
    if cmif.freq_hz.size < 3:
        raise ValueError("peak picking needs at least 3 frequency points")
    peaks = detect_peaks(cmif, opt)
    residue = np.zeros((cmif.n_y, cmif.n_u))
    return [
        ModalSpec(
            omega=2.0 * np.pi * float(cmif.freq_hz[p.index]),
            zeta=opt.default_zeta,
            residue=residue,
        )
        for p in peaks
    ]


def with_peaks(cmif: CmifResult, options: PeakOptions | None = None) -> CmifResult:
    """Copy of the result with the detected peaks filled in."""
    return replace(cmif, peaks=detect_peaks(cmif, options))


def export_cmif_csv(cmif: CmifResult, path) -> None:
    """Write tracks as ``freq_hz,sv_index,cmif_value`` plus a peaks section.

    The peaks section is appended after a ``# peaks`` marker line with the
    same column layout (rows only for detected peaks). sv_index is 1-based.
    """
    lines = ["freq_hz,sv_index,cmif_value"]
    for k in range(cmif.freq_hz.size):
        f = format_float(cmif.freq_hz[k])
        for t in range(cmif.n_tracks):
            lines.append(f"{f},{t + 1},{format_float(cmif.values[k, t])}")
    lines.append("# peaks")
    for p in cmif.peaks:
        lines.append(
            f"{format_float(cmif.freq_hz[p.index])},{p.track + 1},{format_float(p.value)}"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")
