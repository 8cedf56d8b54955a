"""Frequency response function datasets: ingestion and preprocessing.

A dataset holds complex n_y x n_u response matrices on a strictly
increasing positive frequency grid. On disk frequencies are in Hz (both
the CSV and JSON layouts); in memory everything works in rad/s. The Hz
values are kept as the stored grid so that a save/load round trip is
bit-identical.

CSV layout: header ``freq_hz,out,in,re,im``, one record per
(frequency, output, input) with 1-based indices, records sorted by
(freq, in, out). JSON layout::

    {"unit": "hz", "n_u": ..., "n_y": ...,
     "points": [{"f": ..., "G_re": [[..]], "G_im": [[..]]}, ...]}

with row-major matrices. All floats are printed with 17 significant
digits, which round-trips IEEE doubles exactly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace

import numpy as np

from ._jsonutil import dumps, format_float
from .errors import EmptyBandError, FrfParseError

__all__ = [
    "FrfDataset",
    "load_frf",
    "save_frf",
    "delay_compensate",
    "band_select",
    "estimate_delay",
]

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class FrfDataset:
    """Immutable FRF measurement set.

    Attributes
    ----------
    freq_hz : (N,) float array, strictly increasing, all > 0
        The stored grid (disk unit).
    response : (N, n_y, n_u) complex array
    delay_compensated : bool
        Set by :func:`delay_compensate`; informational only.
    """

    freq_hz: np.ndarray
    response: np.ndarray
    delay_compensated: bool = False

    def __post_init__(self):
        f = np.ascontiguousarray(self.freq_hz, dtype=float).reshape(-1)
        G = np.ascontiguousarray(self.response, dtype=complex)
        if G.ndim == 1:
            G = G[:, None, None]
        if G.ndim != 3:
            raise ValueError(f"response must be (N, n_y, n_u), got shape {G.shape}")
        if G.shape[0] != f.size:
            raise ValueError(
                f"{f.size} frequencies but {G.shape[0]} response matrices"
            )
        if f.size == 0:
            raise ValueError("dataset needs at least one frequency point")
        if not np.all(np.isfinite(f)) or np.any(f <= 0):
            raise ValueError("frequencies must be finite and positive")
        if np.any(np.diff(f) <= 0):
            k = int(np.argmax(np.diff(f) <= 0))
            raise ValueError(f"non-increasing frequency at record {k + 1}")
        if not (np.all(np.isfinite(G.real)) and np.all(np.isfinite(G.imag))):
            raise ValueError("response contains NaN or Inf entries")
        f.flags.writeable = False
        G.flags.writeable = False
        object.__setattr__(self, "freq_hz", f)
        object.__setattr__(self, "response", G)

    @property
    def omega(self) -> np.ndarray:
        """Grid in rad/s."""
        return TWO_PI * self.freq_hz

    @property
    def n_points(self) -> int:
        return self.freq_hz.size

    @property
    def n_y(self) -> int:
        return self.response.shape[1]

    @property
    def n_u(self) -> int:
        return self.response.shape[2]

    @classmethod
    def from_hz(cls, freq_hz, response, **kw) -> "FrfDataset":
        return cls(freq_hz=np.asarray(freq_hz, float), response=response, **kw)

    @classmethod
    def from_omega(cls, omega, response, **kw) -> "FrfDataset":
        return cls(freq_hz=np.asarray(omega, float) / TWO_PI, response=response, **kw)


# ---------------------------------------------------------------------------
# file formats


def _detect_format(path, fmt: str | None) -> str:
    if fmt is not None:
        fmt = fmt.lower()
        if fmt not in ("csv", "json"):
            raise ValueError(f"unknown FRF format {fmt!r}")
        return fmt
    name = str(path).lower()
    return "json" if name.endswith(".json") else "csv"


def load_frf(path, fmt: str | None = None) -> FrfDataset:
    """Read a dataset from disk.

    Parameters
    ----------
    path : str or Path
    fmt : {"csv", "json", None}
        File layout; inferred from the extension when None.
    """
    fmt = _detect_format(path, fmt)
    if fmt == "csv":
        return _load_csv(path)
    return _load_json(path)


def save_frf(dataset: FrfDataset, path, fmt: str | None = None) -> None:
    """Write a dataset; exact inverse of :func:`load_frf` with a fixed field order."""
    fmt = _detect_format(path, fmt)
    if fmt == "csv":
        _save_csv(dataset, path)
    else:
        _save_json(dataset, path)


def _parse_float(text: str, what: str, where: str) -> float:
    try:
        val = float(text)
    except ValueError:
        raise FrfParseError(f"{where}: cannot parse {what} value {text!r}") from None
    if not math.isfinite(val):
        raise FrfParseError(f"{where}: non-finite {what} value {text!r}")
    return val


def _load_csv(path) -> FrfDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FrfParseError(f"{path}: empty file") from None
        if [h.strip() for h in header] != ["freq_hz", "out", "in", "re", "im"]:
            raise FrfParseError(
                f"{path}: expected header 'freq_hz,out,in,re,im', got {','.join(header)!r}"
            )
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise FrfParseError(f"{path} line {lineno}: expected 5 fields, got {len(row)}")
            where = f"{path} line {lineno}"
            f = _parse_float(row[0], "frequency", where)
            try:
                o, i = int(row[1]), int(row[2])
            except ValueError:
                raise FrfParseError(f"{where}: indices must be integers") from None
            if o < 1 or i < 1:
                raise FrfParseError(f"{where}: indices are 1-based, got out={o}, in={i}")
            re = _parse_float(row[3], "re", where)
            im = _parse_float(row[4], "im", where)
            records.append((f, o, i, re, im, lineno))
    if not records:
        raise FrfParseError(f"{path}: no data records")

    n_y = max(r[1] for r in records)
    n_u = max(r[2] for r in records)
    freqs = []
    blocks = []
    per_freq = n_y * n_u
    if len(records) % per_freq != 0:
        raise FrfParseError(
            f"{path}: {len(records)} records is not a multiple of n_y*n_u = {per_freq}"
        )
    for start in range(0, len(records), per_freq):
        group = records[start : start + per_freq]
        f0 = group[0][0]
        G = np.full((n_y, n_u), np.nan + 0j)
        for f, o, i, re, im, lineno in group:
            if f != f0:
                raise FrfParseError(
                    f"{path} line {lineno}: incomplete matrix for frequency {f0!r}"
                )
            if not np.isnan(G[o - 1, i - 1].real):
                raise FrfParseError(
                    f"{path} line {lineno}: duplicate entry for (out={o}, in={i}) at {f!r}"
                )
            G[o - 1, i - 1] = re + 1j * im
        if np.any(np.isnan(G.real)):
            raise FrfParseError(f"{path}: missing matrix entries at frequency {f0!r}")
        if freqs and f0 <= freqs[-1]:
            raise FrfParseError(
                f"{path}: non-increasing frequency at record {len(freqs) + 1} ({f0!r})"
            )
        freqs.append(f0)
        blocks.append(G)
    try:
        return FrfDataset.from_hz(np.array(freqs), np.array(blocks))
    except ValueError as exc:
        raise FrfParseError(f"{path}: {exc}") from exc


def _save_csv(dataset: FrfDataset, path) -> None:
    lines = ["freq_hz,out,in,re,im"]
    for k in range(dataset.n_points):
        f = format_float(dataset.freq_hz[k])
        G = dataset.response[k]
        for i in range(dataset.n_u):
            for o in range(dataset.n_y):
                z = G[o, i]
                lines.append(
                    f"{f},{o + 1},{i + 1},{format_float(z.real)},{format_float(z.imag)}"
                )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


def _load_json(path) -> FrfDataset:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FrfParseError(f"{path}: invalid JSON ({exc})") from exc
    try:
        if doc["unit"].lower() != "hz":
            raise FrfParseError(f"{path}: unsupported unit {doc['unit']!r}")
        n_u, n_y = int(doc["n_u"]), int(doc["n_y"])
        freqs, blocks = [], []
        for idx, pt in enumerate(doc["points"]):
            re = np.asarray(pt["G_re"], dtype=float)
            im = np.asarray(pt["G_im"], dtype=float)
            if re.shape != (n_y, n_u) or im.shape != (n_y, n_u):
                raise FrfParseError(
                    f"{path}: point {idx}: matrices must be {n_y}x{n_u}, "
                    f"got {re.shape} and {im.shape}"
                )
            freqs.append(float(pt["f"]))
            blocks.append(re + 1j * im)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FrfParseError):
            raise
        raise FrfParseError(f"{path}: malformed FRF document ({exc})") from exc
    try:
        return FrfDataset.from_hz(np.array(freqs), np.array(blocks))
    except ValueError as exc:
        raise FrfParseError(f"{path}: {exc}") from exc


def _save_json(dataset: FrfDataset, path) -> None:
    doc = {
        "unit": "hz",
        "n_u": dataset.n_u,
        "n_y": dataset.n_y,
        "points": [
            {
                "f": float(dataset.freq_hz[k]),
                "G_re": [[float(x) for x in row] for row in dataset.response[k].real],
                "G_im": [[float(x) for x in row] for row in dataset.response[k].imag],
            }
            for k in range(dataset.n_points)
        ],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(doc, indent=1))
        fh.write("\n")


# ---------------------------------------------------------------------------
# preprocessing


def delay_compensate(dataset: FrfDataset, tau: float) -> FrfDataset:
    """Remove a pure input/output delay of `tau` seconds.

    Multiplies every response by exp(+j omega tau), cancelling a
    exp(-j omega tau) factor in the data. Magnitudes are unchanged.
    """
    if not math.isfinite(tau):
        raise ValueError(f"tau must be finite, got {tau}")
    G = dataset.response * np.exp(1j * dataset.omega * tau)[:, None, None]
    return replace(dataset, response=G, delay_compensated=True)


def band_select(dataset: FrfDataset, f_min: float, f_max: float) -> FrfDataset:
    """Keep the points with f_min <= freq_hz <= f_max (inclusive)."""
    if not f_min < f_max:
        raise ValueError(f"need f_min < f_max, got {f_min} >= {f_max}")
    mask = (dataset.freq_hz >= f_min) & (dataset.freq_hz <= f_max)
    if not np.any(mask):
        raise EmptyBandError(
            f"no frequency points in [{f_min}, {f_max}] Hz "
            f"(grid spans {dataset.freq_hz[0]:.6g}..{dataset.freq_hz[-1]:.6g} Hz)"
        )
    return replace(dataset, freq_hz=dataset.freq_hz[mask], response=dataset.response[mask])


def estimate_delay(dataset: FrfDataset, top_fraction: float = 0.25) -> float:
    """Heuristic scalar delay estimate from the high-frequency phase slope.

    For strictly proper dynamics the phase approaches a constant at high
    frequency, so any residual linear phase trend there is attributed to a
    pure delay. Per response entry, the unwrapped phase over the top
    `top_fraction` of the grid is fitted with a line in omega; the delay is
    the negated median slope across entries. This is a convenience guess,
    not a measured quantity; prefer passing a known delay when available.
    """
    if not 0 < top_fraction <= 1:
        raise ValueError("top_fraction must lie in (0, 1]")
    n_top = max(int(round(dataset.n_points * top_fraction)), 3)
    n_top = min(n_top, dataset.n_points)
    w = dataset.omega[-n_top:]
    slopes = []
    for o in range(dataset.n_y):
        for i in range(dataset.n_u):
            phase = np.unwrap(np.angle(dataset.response[-n_top:, o, i]))
            slope = np.polyfit(w, phase, 1)[0]
            slopes.append(slope)
    return float(-np.median(slopes))
