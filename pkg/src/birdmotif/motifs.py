"""Motif and discord extraction from matrix profiles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from birdmotif.errors import NoMotifError
from birdmotif.simple_mp import MatrixProfile


@dataclass(frozen=True)
class MotifResult:
    motif_a: int
    motif_b: int
    motif_distance: float
    discord: int
    discord_distance: float
    subsequence_len: int


def _finite(mp: MatrixProfile) -> np.ndarray:
    finite = np.isfinite(mp.distances)
    if not finite.any():
        raise NoMotifError("matrix profile has no finite distance")
    return finite


def extract_motif(mp: MatrixProfile) -> tuple[int, int, float]:
    """Position with the smallest profile distance, its nearest neighbor and that distance."""
    finite = _finite(mp)
    d = np.where(finite, mp.distances, np.inf)
    i = int(np.argmin(d))
    return i, int(mp.indices[i]), float(mp.distances[i])


def extract_discord(mp: MatrixProfile) -> tuple[int, float]:
    """Position with the largest finite profile distance."""
    finite = _finite(mp)
    d = np.where(finite, mp.distances, -np.inf)
    i = int(np.argmax(d))
    return i, float(mp.distances[i])


def find_motifs(mp: MatrixProfile) -> MotifResult:
    a, b, dist = extract_motif(mp)
    disc, disc_dist = extract_discord(mp)
    return MotifResult(a, b, dist, disc, disc_dist, mp.subsequence_len)


def top_k_motifs(mp: MatrixProfile, k: int) -> list[tuple[int, int, float]]:
    """Up to ``k`` motif pairs in nondecreasing distance order.

    After a pair is taken, every position within ``exclusion_radius`` of
    either member is masked, so later pairs never overlap an earlier one
    (for AB-joins the reference-side member is checked against earlier
    reference-side members only).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    radius = mp.exclusion_radius
    same_axis = mp.join_kind == "self"
    d = mp.distances
    order = np.argsort(np.where(np.isfinite(d), d, np.inf), kind="stable")
    taken_a: list[int] = []
    taken_b: list[int] = []

    def clear(p: int, members: list[int]) -> bool:
        return all(abs(p - q) > radius for q in members)

    out = []
    for i in order:
        if not np.isfinite(d[i]):
            break
        i = int(i)
        j = int(mp.indices[i])
        if same_axis:
            members = taken_a + taken_b
            ok = clear(i, members) and clear(j, members)
        else:
            ok = clear(i, taken_a) and clear(j, taken_b)
        if not ok:
            continue
        taken_a.append(i)
        taken_b.append(j)
        out.append((i, j, float(d[i])))
        if len(out) == k:
            break
    return out


def frame_to_time(frame: int, frame_rate: float) -> float:
    if frame < 0:
        raise ValueError("frame must be >= 0")
    if frame_rate <= 0:
        raise ValueError("frame_rate must be positive")
    return frame / frame_rate
