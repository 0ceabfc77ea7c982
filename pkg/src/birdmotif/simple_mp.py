"""SiMPle matrix profile for multi-dimensional (spectrogram) series.

Distances are plain Euclidean over all bins of an ``m``-frame subsequence;
no z-normalization. The fast path computes one row of sliding dot products
with FFTs at the start of every block of query positions and then updates
the row incrementally, so each row costs O(bins * n) instead of an FFT.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Union

import numpy as np

from birdmotif.errors import InputError, ShapeError, SizeError
from birdmotif.features import Spectrogram

BRUTE_FORCE_MAX_FRAMES = 2048
# d^2 below this fraction of |a|^2 + |b|^2 is treated as an exact match
SNAP_RELATIVE = 1e-12
# Rows per block; each block restarts from an exact FFT row. Fixed so that
# results do not depend on the worker count.
BLOCK_ROWS = 128

SeriesLike = Union[Spectrogram, np.ndarray]


@dataclass(frozen=True)
class MatrixProfile:
    distances: np.ndarray
    indices: np.ndarray
    subsequence_len: int
    exclusion_radius: int
    join_kind: str

    def __post_init__(self):
        if self.join_kind not in ("self", "ab"):
            raise ValueError(f"join_kind must be 'self' or 'ab', got {self.join_kind!r}")
        if self.distances.shape != self.indices.shape:
            raise ShapeError("distances and indices differ in length")

    def __len__(self) -> int:
        return self.distances.shape[0]


def _as_matrix(x: SeriesLike) -> np.ndarray:
    data = x.data if isinstance(x, Spectrogram) else np.asarray(x)
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[None, :]
    if data.ndim != 2:
        raise ShapeError(f"expected a (bins, frames) matrix, got shape {data.shape}")
    if not np.all(np.isfinite(data)):
        raise InputError("series contains non-finite values")
    return data


def _window_sq_norms(x: np.ndarray, m: int) -> np.ndarray:
    col = np.einsum("bt,bt->t", x, x)
    return np.lib.stride_tricks.sliding_window_view(col, m).sum(axis=1)


def _fft_len(n: int) -> int:
    return 1 << int(np.ceil(np.log2(max(n, 1))))


def _mass_dot(query: np.ndarray, series_fft: np.ndarray, n_series: int, m: int, nfft: int) -> np.ndarray:
    """Dot products of a (bins, m) query with every m-window of a (bins, n) series.

    ``series_fft`` is the rfft of the series rows, zero-padded to ``nfft``.
    """
    q = np.zeros((query.shape[0], nfft))
    q[:, :m] = query[:, ::-1]
    prod = np.fft.irfft(np.fft.rfft(q, axis=1) * series_fft, n=nfft, axis=1)
    return prod[:, m - 1 : n_series].sum(axis=0)


def sliding_dot(a: np.ndarray, b: np.ndarray, m: int) -> np.ndarray:
    """All dot products between m-windows of ``a`` and m-windows of ``b``.

    Returns a matrix of shape ``(len(a) - m + 1, len(b) - m + 1)`` whose
    entry (i, j) is ``a[i:i+m] @ b[j:j+m]``, computed by FFT correlation.
    Rows of 2-D inputs are treated as bins and summed.
    """
    a2 = _as_matrix(a)
    b2 = _as_matrix(b)
    if a2.shape[0] != b2.shape[0]:
        raise ShapeError("bin counts differ")
    if m < 1 or a2.shape[1] < m or b2.shape[1] < m:
        raise SizeError(f"need m >= 1 and both inputs at least m={m} long")
    na = a2.shape[1] - m + 1
    nb = b2.shape[1]
    nfft = _fft_len(nb + m)
    b_fft = np.fft.rfft(b2, n=nfft, axis=1)
    return np.stack([_mass_dot(a2[:, i : i + m], b_fft, nb, m, nfft) for i in range(na)])


def _join(a: np.ndarray, b: np.ndarray, m: int, exclusion: int | None, workers: int) -> tuple[np.ndarray, np.ndarray]:
    """Core SiMPle loop. ``exclusion`` is None for AB-joins."""
    na = a.shape[1] - m + 1
    nb = b.shape[1] - m + 1
    norms_a = _window_sq_norms(a, m)
    norms_b = _window_sq_norms(b, m)
    nfft = _fft_len(b.shape[1] + m)
    b_fft = np.fft.rfft(b, n=nfft, axis=1)
    # first column: query windows of a against the first window of b
    a_fft = np.fft.rfft(a, n=_fft_len(a.shape[1] + m), axis=1)
    first_col = _mass_dot(b[:, :m], a_fft, a.shape[1], m, _fft_len(a.shape[1] + m))
    b_head = b[:, : nb - 1]
    b_tail = b[:, m : m + nb - 1]

    distances = np.empty(na, dtype=np.float64)
    indices = np.empty(na, dtype=np.int64)

    def run_block(start: int) -> None:
        stop = min(start + BLOCK_ROWS, na)
        qt = _mass_dot(a[:, start : start + m], b_fft, b.shape[1], m, nfft)
        for i in range(start, stop):
            if i > start:
                nxt = np.empty_like(qt)
                nxt[1:] = qt[:-1] - a[:, i - 1] @ b_head + a[:, i + m - 1] @ b_tail
                nxt[0] = first_col[i]
                qt = nxt
            scale = norms_a[i] + norms_b
            d2 = scale - 2.0 * qt
            # cancellation noise must not break exact ties at zero distance
            d2[d2 <= SNAP_RELATIVE * scale] = 0.0
            if exclusion is not None:
                lo = max(0, i - exclusion)
                d2[lo : i + exclusion + 1] = np.inf
            j = int(np.argmin(d2))
            if np.isinf(d2[j]):
                indices[i] = -1
                distances[i] = np.inf
            else:
                indices[i] = j
                distances[i] = np.sqrt(d2[j])

    starts = range(0, na, BLOCK_ROWS)
    if workers <= 1 or na <= BLOCK_ROWS:
        for s in starts:
            run_block(s)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_block, starts))
    return distances, indices


def self_join(spec: SeriesLike, m: int, exclusion_radius: int | None = None, workers: int = 1) -> MatrixProfile:
    """Matrix profile of a spectrogram against itself.

    Matches with ``|i - j| <= exclusion_radius`` are ignored; the default
    radius is ``m // 2``. Ties go to the lowest index. On short inputs a
    position whose every candidate lies inside the exclusion zone gets
    distance ``inf`` and index ``-1``.

    Raises
    ------
    SizeError
        If ``m < 2`` or there are fewer than ``m + exclusion_radius + 1`` frames.
    InputError
        If the input contains NaN or Inf.
    """
    a = _as_matrix(spec)
    if exclusion_radius is None:
        exclusion_radius = m // 2
    if m < 2:
        raise SizeError("subsequence length m must be >= 2")
    if exclusion_radius < 0:
        raise ValueError("exclusion_radius must be >= 0")
    if a.shape[1] < m + exclusion_radius + 1:
        raise SizeError(f"{a.shape[1]} frames is too few for m={m} with exclusion radius {exclusion_radius}")
    d, idx = _join(a, a, m, exclusion_radius, workers)
    return MatrixProfile(d, idx, m, exclusion_radius, "self")


def ab_join(query: SeriesLike, reference: SeriesLike, m: int, workers: int = 1) -> MatrixProfile:
    """Nearest reference window for every query window; no exclusion zone."""
    a = _as_matrix(query)
    b = _as_matrix(reference)
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"bin counts differ: {a.shape[0]} vs {b.shape[0]}")
    if m < 1:
        raise SizeError("subsequence length m must be >= 1")
    if a.shape[1] < m or b.shape[1] < m:
        raise SizeError(f"both inputs need at least m={m} frames")
    d, idx = _join(a, b, m, None, workers)
    return MatrixProfile(d, idx, m, 0, "ab")


def brute_force_profile(
    query: SeriesLike,
    reference: SeriesLike | None = None,
    m: int = 2,
    exclusion_radius: int | None = None,
) -> MatrixProfile:
    """Reference implementation by direct summation of squared differences.

    With ``reference=None`` it is a self-join (default exclusion ``m // 2``);
    otherwise an AB-join. Guarded to inputs of at most 2048 frames.
    """
    a = _as_matrix(query)
    is_self = reference is None
    b = a if is_self else _as_matrix(reference)
    if max(a.shape[1], b.shape[1]) > BRUTE_FORCE_MAX_FRAMES:
        raise SizeError(f"brute force is limited to {BRUTE_FORCE_MAX_FRAMES} frames")
    if a.shape[0] != b.shape[0]:
        raise ShapeError("bin counts differ")
    if is_self:
        exclusion_radius = m // 2 if exclusion_radius is None else exclusion_radius
        if m < 2 or a.shape[1] < m + exclusion_radius + 1:
            raise SizeError("too few frames for a self-join")
    else:
        exclusion_radius = 0
        if m < 1 or a.shape[1] < m or b.shape[1] < m:
            raise SizeError(f"both inputs need at least m={m} frames")
    na = a.shape[1] - m + 1
    windows = np.lib.stride_tricks.sliding_window_view(b, m, axis=1)  # (bins, nb, m)
    distances = np.empty(na)
    indices = np.empty(na, dtype=np.int64)
    for i in range(na):
        diff = windows - a[:, None, i : i + m]
        d = np.sqrt(np.sum(diff * diff, axis=(0, 2)))
        if is_self:
            d[max(0, i - exclusion_radius) : i + exclusion_radius + 1] = np.inf
        j = int(np.argmin(d))
        indices[i] = j if np.isfinite(d[j]) else -1
        distances[i] = d[j]
    return MatrixProfile(distances, indices, m, exclusion_radius, "self" if is_self else "ab")
