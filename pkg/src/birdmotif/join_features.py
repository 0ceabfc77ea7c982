"""Matrix-profile join features against a library of sampled training motifs."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from birdmotif.errors import ShapeError, SizeError
from birdmotif.npyio import save_npy
from birdmotif.simple_mp import SeriesLike, _as_matrix, ab_join

DEFAULT_LIBRARY_SIZE = 64


@dataclass(frozen=True)
class MotifLibrary:
    entries: tuple  # of (species, patch) with patch shaped (bins, m)
    seed: int
    size: int

    def __post_init__(self):
        shapes = {np.shape(p) for _, p in self.entries}
        if len(shapes) > 1:
            raise ShapeError(f"library patches differ in shape: {sorted(shapes)}")
        if self.size != len(self.entries):
            raise ValueError("size does not match number of entries")

    @property
    def species(self) -> list[str]:
        return [s for s, _ in self.entries]

    @property
    def patch_shape(self) -> tuple[int, int]:
        return np.shape(self.entries[0][1])


def sample_motif_library(
    candidates: Sequence,
    load_patch: Callable[[object], np.ndarray],
    k: int = DEFAULT_LIBRARY_SIZE,
    rng_seed: int = 0,
    species_of: Callable[[object], str] = lambda c: c.species,
) -> MotifLibrary:
    """Draw ``k`` motifs uniformly without replacement.

    ``candidates`` is typically the ok rows of a track manifest; only the
    drawn candidates are passed to ``load_patch``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(candidates) < k:
        raise SizeError(f"need at least {k} motifs, have {len(candidates)}")
    rng = np.random.default_rng(rng_seed)
    picks = rng.permutation(len(candidates))[:k]
    entries = []
    for i in picks:
        c = candidates[int(i)]
        patch = np.array(load_patch(c), dtype=np.float64)
        patch.setflags(write=False)
        entries.append((species_of(c), patch))
    return MotifLibrary(tuple(entries), rng_seed, k)


def _lower_median(x: np.ndarray) -> float:
    s = np.sort(x)
    return float(s[(s.size - 1) // 2])


def _summary(profile: np.ndarray) -> list[float]:
    return [float(profile.min()), _lower_median(profile), float(profile.max())]


def entry_profiles(window_spec: SeriesLike, library: MotifLibrary, m: int) -> np.ndarray:
    """AB-join distances of the window against each entry, shape (entries, positions)."""
    window = _as_matrix(window_spec)
    bins, length = library.patch_shape
    if window.shape[0] != bins:
        raise ShapeError(f"window has {window.shape[0]} bins, library has {bins}")
    if length < m:
        raise SizeError(f"library patches of {length} frames are shorter than m={m}")
    if window.shape[1] < m:
        raise SizeError(f"window has {window.shape[1]} frames, need at least m={m}")
    return np.stack([ab_join(window, patch, m).distances for _, patch in library.entries])


def join_feature_vector(window_spec: SeriesLike, library: MotifLibrary, m: int, per_entry: bool = False) -> np.ndarray:
    """[min, median, max] of the window's join profile against the library.

    The profile takes, for each window position, the smallest distance over
    all library entries; entries are joined separately so no subsequence
    straddles two motifs. The median is the lower middle element. With
    ``per_entry=True`` the three statistics are reported for each entry
    instead (length ``3 * len(library)``).
    """
    profiles = entry_profiles(window_spec, library, m)
    if per_entry:
        return np.array([v for row in profiles for v in _summary(row)])
    return np.array(_summary(profiles.min(axis=0)))


def feature_columns(library_size: int, per_entry: bool) -> list[str]:
    if not per_entry:
        return ["f_min", "f_median", "f_max"]
    return [f"e{k}_{stat}" for k in range(library_size) for stat in ("min", "median", "max")]


def write_features(
    out_dir: str | os.PathLike,
    rows: Sequence[tuple[str, int]],
    features: np.ndarray,
    columns: Sequence[str],
    stem: str = "join_features",
) -> None:
    """Persist a feature matrix as ``<stem>.npy`` and ``<stem>.csv``."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] != len(rows):
        raise ShapeError("one feature row is needed per (track, window)")
    os.makedirs(out_dir, exist_ok=True)
    save_npy(os.path.join(out_dir, f"{stem}.npy"), features)
    with open(os.path.join(out_dir, f"{stem}.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["track_id", "window_index", *columns])
        for (track_id, win), vec in zip(rows, features):
            w.writerow([track_id, win, *(repr(float(v)) for v in vec)])
