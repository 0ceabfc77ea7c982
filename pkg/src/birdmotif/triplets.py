"""Triplet sampling from precomputed profile indices, plus waveform augmentation.

Each window of a track is paired with the window that holds its nearest
neighbor according to the self-join profile index. Triplets then take a
distant element from a pair of another track (or another species when
batching through species queues).
"""

from __future__ import annotations

import json
import os
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from birdmotif.audio_io import AudioWindow
from birdmotif.errors import DataIntegrityError, InsufficientDiversityError, ShapeError
from birdmotif.npyio import save_npy

GAIN_DB_RANGE = (-20.0, 20.0)
NOISE_SNR_DB_RANGE = (-5.0, 40.0)
SHIFT_FRACTION_RANGE = (-0.1, 0.1)
COLORED_SNR_DB_RANGE = (-3.0, 30.0)
COLORED_DECAY_RANGE = (-2.0, 2.0)


@dataclass(frozen=True)
class WindowPair:
    track_id: str
    anchor_index: int
    neighbor_index: int
    species: str = ""

    @property
    def degenerate(self) -> bool:
        return self.anchor_index == self.neighbor_index


@dataclass(frozen=True)
class WindowRef:
    track_id: str
    window: int
    species: str = ""


@dataclass(frozen=True)
class TripletRecord:
    anchor: WindowRef
    neighbor: WindowRef
    distant: WindowRef

    def __post_init__(self):
        if self.anchor.track_id != self.neighbor.track_id:
            raise ValueError("anchor and neighbor must come from the same track")
        if self.distant.track_id == self.anchor.track_id:
            raise ValueError("distant element must come from another track")

    @property
    def degenerate(self) -> bool:
        return self.anchor.window == self.neighbor.window

    def to_json(self) -> dict:
        return {
            "anchor_track": self.anchor.track_id,
            "anchor_window": self.anchor.window,
            "neighbor_window": self.neighbor.window,
            "distant_track": self.distant.track_id,
            "distant_window": self.distant.window,
            "species_anchor": self.anchor.species,
            "species_distant": self.distant.species,
            "degenerate": self.degenerate,
        }


@dataclass(frozen=True)
class TrackIndex:
    """Window-level nearest-neighbor index of one track."""

    track_id: str
    species: str
    neighbors: np.ndarray  # neighbors[i] = window holding the nearest neighbor of window i


def window_neighbors(profile_index: np.ndarray, frames_per_window: int, n_windows: int) -> np.ndarray:
    """Reduce a frame-level profile index to window granularity.

    Window ``w`` is represented by its first frame (clamped to the last
    profile position for tail windows); the indexed frame is mapped to the
    window containing it by integer division. A representative frame with
    no admissible match (index ``-1``) maps to its own window, which the
    export flags as degenerate.
    """
    profile_index = np.asarray(profile_index, dtype=np.int64)
    if frames_per_window < 1:
        raise ValueError("frames_per_window must be >= 1")
    if profile_index.size == 0:
        raise DataIntegrityError("empty profile index")
    if n_windows < 1:
        raise ValueError("n_windows must be >= 1")
    rep = np.minimum(np.arange(n_windows) * frames_per_window, profile_index.size - 1)
    frames = profile_index[rep]
    if (frames < -1).any():
        raise DataIntegrityError("negative profile index")
    out = np.minimum(frames // frames_per_window, n_windows - 1)
    unmatched = frames == -1
    out[unmatched] = np.arange(n_windows)[unmatched]
    return out


def build_pairs(tracks: Iterable[TrackIndex]) -> list[WindowPair]:
    """One (anchor, nearest-neighbor) pair per window, in track then window order."""
    pairs = []
    for t in tracks:
        nb = np.asarray(t.neighbors, dtype=np.int64)
        n = nb.shape[0]
        if n and (nb.min() < 0 or nb.max() >= n):
            raise DataIntegrityError(f"{t.track_id}: neighbor window out of range [0, {n})")
        pairs.extend(WindowPair(t.track_id, i, int(j), t.species) for i, j in enumerate(nb))
    return pairs


def form_triplets(pairs: Sequence[WindowPair], rng_seed: int) -> list[TripletRecord]:
    """Attach a distant element to every pair.

    The distant element is the anchor of a pair drawn uniformly from all
    pairs of other tracks. Returns exactly ``len(pairs)`` triplets.
    """
    if len({p.track_id for p in pairs}) < 2:
        raise InsufficientDiversityError("pairs must span at least two tracks")
    n = len(pairs)
    track_ids = np.array([p.track_id for p in pairs], dtype=object)
    order = np.argsort(track_ids, kind="stable")
    sorted_ids = track_ids[order]
    # block boundaries of each track in sorted order
    starts = {}
    ends = {}
    for pos, tid in enumerate(sorted_ids):
        starts.setdefault(tid, pos)
        ends[tid] = pos + 1
    rng = np.random.default_rng(rng_seed)
    out = []
    for p in pairs:
        s, e = starts[p.track_id], ends[p.track_id]
        k = int(rng.integers(0, n - (e - s)))
        if k >= s:
            k += e - s
        d = pairs[int(order[k])]
        out.append(
            TripletRecord(
                WindowRef(p.track_id, p.anchor_index, p.species),
                WindowRef(p.track_id, p.neighbor_index, p.species),
                WindowRef(d.track_id, d.anchor_index, d.species),
            )
        )
    return out


def species_queue_batches(
    pairs: Iterable[WindowPair], batch_size: int, rng_seed: int
) -> Iterator[list[TripletRecord]]:
    """Mini-batches built by popping pairs round-robin from per-species queues.

    Inside a batch, each pair's distant element is the anchor of a randomly
    chosen pair of a different species from the same batch. Batching stops
    once fewer than two species have pairs left; a final partial batch is
    emitted only if it holds at least two species.
    """
    if batch_size < 2:
        raise ValueError("batch_size must be >= 2")
    queues: dict[str, deque] = {}
    for p in pairs:
        queues.setdefault(p.species, deque()).append(p)
    if len(queues) < 2:
        raise InsufficientDiversityError("need pairs from at least two species")
    names = sorted(queues)
    rng = np.random.default_rng(rng_seed)
    while sum(1 for s in names if queues[s]) >= 2:
        batch: list[WindowPair] = []
        while len(batch) < batch_size:
            live = [s for s in names if queues[s]]
            if not live:
                break
            for s in live:
                if len(batch) == batch_size:
                    break
                batch.append(queues[s].popleft())
        species = np.array([p.species for p in batch], dtype=object)
        if len(set(species)) < 2:
            break
        records = []
        for p in batch:
            candidates = np.flatnonzero(species != p.species)
            d = batch[int(candidates[rng.integers(0, candidates.size)])]
            records.append(
                TripletRecord(
                    WindowRef(p.track_id, p.anchor_index, p.species),
                    WindowRef(p.track_id, p.neighbor_index, p.species),
                    WindowRef(d.track_id, d.anchor_index, d.species),
                )
            )
        yield records


def triplet_loss(z_a, z_n, z_d, margin: float) -> float:
    """Hinge triplet loss ``max(0, |z_a - z_n| - |z_a - z_d| + margin)``."""
    z_a = np.asarray(z_a, dtype=np.float64)
    z_n = np.asarray(z_n, dtype=np.float64)
    z_d = np.asarray(z_d, dtype=np.float64)
    if not (z_a.shape == z_n.shape == z_d.shape):
        raise ShapeError(f"embedding shapes differ: {z_a.shape}, {z_n.shape}, {z_d.shape}")
    if margin < 0:
        raise ValueError("margin must be >= 0")
    pos = np.linalg.norm(z_a - z_n)
    neg = np.linalg.norm(z_a - z_d)
    return float(max(0.0, pos - neg + margin))


# --- augmentations -----------------------------------------------------------


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(x * x)))


def apply_gain(win: AudioWindow, gain_db: float) -> AudioWindow:
    if gain_db == 0:
        return win
    return win.replace_samples(np.clip(win.samples * 10.0 ** (gain_db / 20.0), -1.0, 1.0))


def add_noise_snr(win: AudioWindow, snr_db: float, rng_seed: int) -> AudioWindow:
    """Add white Gaussian noise at the given signal-to-noise ratio."""
    x = win.samples
    sig = _rms(x)
    if sig == 0:
        return win
    noise = np.random.default_rng(rng_seed).standard_normal(len(x))
    noise *= sig / (10.0 ** (snr_db / 20.0)) / _rms(noise)
    return win.replace_samples(np.clip(x + noise, -1.0, 1.0))


def time_shift(win: AudioWindow, shift_fraction: float) -> AudioWindow:
    """Circular shift by ``round(shift_fraction * len(win))`` samples."""
    shift = int(round(shift_fraction * len(win)))
    if shift == 0:
        return win
    return win.replace_samples(np.roll(win.samples, shift))


def colored_noise(win: AudioWindow, snr_db: float, decay: float, rng_seed: int) -> AudioWindow:
    """Add noise whose power spectral density falls off as ``f ** -decay``."""
    x = win.samples
    sig = _rms(x)
    if sig == 0:
        return win
    n = len(x)
    rng = np.random.default_rng(rng_seed)
    spectrum = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n)
    scale = np.zeros_like(f)
    scale[1:] = f[1:] ** (-decay / 2.0)
    noise = np.fft.irfft(spectrum * scale, n=n)
    noise *= sig / (10.0 ** (snr_db / 20.0)) / _rms(noise)
    return win.replace_samples(np.clip(x + noise, -1.0, 1.0))


def random_augment(win: AudioWindow, rng: np.random.Generator) -> AudioWindow:
    """Gain, white noise, time shift and colored noise with randomly drawn settings."""
    win = apply_gain(win, rng.uniform(*GAIN_DB_RANGE))
    win = add_noise_snr(win, rng.uniform(*NOISE_SNR_DB_RANGE), int(rng.integers(2**31)))
    win = time_shift(win, rng.uniform(*SHIFT_FRACTION_RANGE))
    return colored_noise(win, rng.uniform(*COLORED_SNR_DB_RANGE), rng.uniform(*COLORED_DECAY_RANGE), int(rng.integers(2**31)))


# --- export ------------------------------------------------------------------


def export_triplets(
    out_dir: str | os.PathLike,
    batches: Iterable[Sequence[TripletRecord]],
    windows: Mapping[str, Sequence[AudioWindow]],
    transform=None,
    augment_seed: int | None = None,
) -> dict:
    """Write each batch as ``batch_NNNNN_{anchor,neighbor,distant}.npy`` plus ``index.jsonl``.

    ``windows`` maps track id to that track's windows. ``transform`` turns an
    ``AudioWindow`` into the stored array (raw float32 samples by default).
    With ``augment_seed`` set, every stored window first goes through
    :func:`random_augment`, seeded by (augment_seed, batch, row, role).
    """
    os.makedirs(out_dir, exist_ok=True)
    if transform is None:
        transform = lambda w: w.samples  # noqa: E731
    n_batches = n_triplets = n_degenerate = 0
    with open(os.path.join(out_dir, "index.jsonl"), "w", encoding="utf-8") as index:
        for b, batch in enumerate(batches):
            for r_idx, role in enumerate(("anchor", "neighbor", "distant")):
                stored = []
                for row, t in enumerate(batch):
                    ref = getattr(t, role)
                    win = windows[ref.track_id][ref.window]
                    if augment_seed is not None:
                        win = random_augment(win, np.random.default_rng([augment_seed, b, row, r_idx]))
                    stored.append(transform(win))
                arr = np.stack(stored).astype(np.float32)
                save_npy(os.path.join(out_dir, f"batch_{b:05d}_{role}.npy"), arr)
            for row, t in enumerate(batch):
                rec = t.to_json()
                rec["batch"] = b
                rec["row"] = row
                index.write(json.dumps(rec, sort_keys=True) + "\n")
                n_degenerate += t.degenerate
            n_batches += 1
            n_triplets += len(batch)
    return {"batches": n_batches, "triplets": n_triplets, "degenerate": n_degenerate}
