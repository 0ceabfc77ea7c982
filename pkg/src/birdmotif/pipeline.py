"""Offline batch processing of a species-per-directory audio corpus.

For each track: decode, resample, compute features, self-join, pick the
motif and discord, and persist everything under ``<out>/tracks/<track_id>/``.
The coordinator alone writes the manifest and the run report.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import Iterator, NamedTuple

import numpy as np

from birdmotif import features
from birdmotif.audio_io import load_wav, resample, wav_info
from birdmotif.config import PipelineConfig
from birdmotif.errors import BirdMotifError, EmptyInputError
from birdmotif.motifs import find_motifs, frame_to_time
from birdmotif.npyio import load_npy, save_npy
from birdmotif.simple_mp import self_join

log = logging.getLogger(__name__)

AUDIO_EXTENSIONS = (".wav",)
REPORT_SCHEMA = 1
STAGES = ("load", "features", "join", "persist")
# log-spaced timing histogram edges in seconds
TIMING_EDGES = [0.0, 1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0, float("inf")]

FEATURES_FILE = "features.npy"
PROFILE_FILE = "profile.npy"
INDEX_FILE = "profile_index.npy"
META_FILE = "meta.json"
MANIFEST_FILE = "manifest.csv"
REPORT_FILE = "run_report.json"
CONFIG_FILE = "config.json"


@dataclass
class TrackManifestEntry:
    track_id: str
    species: str
    path: str
    duration_s: float | None = None
    sample_rate: int | None = None
    feature_kind: str = ""
    motif_start_s: float | None = None
    motif_end_s: float | None = None
    motif_pair_start_s: float | None = None
    motif_distance: float | None = None
    discord_start_s: float | None = None
    discord_distance: float | None = None
    status: str = "ok"


MANIFEST_COLUMNS = [f.name for f in fields(TrackManifestEntry)]
_FLOAT_COLUMNS = {
    "duration_s",
    "motif_start_s",
    "motif_end_s",
    "motif_pair_start_s",
    "motif_distance",
    "discord_start_s",
    "discord_distance",
}


class TrackSource(NamedTuple):
    species: str
    path: str  # absolute
    rel_path: str  # relative to the scan root, '/'-separated

    @property
    def track_id(self) -> str:
        return os.path.splitext(self.rel_path)[0]


class ScanResult(NamedTuple):
    tracks: list
    skipped: list  # relative paths of non-audio files

    def __iter__(self) -> Iterator[TrackSource]:
        return iter(self.tracks)

    def __len__(self) -> int:
        return len(self.tracks)


def scan_dataset(root: str | os.PathLike) -> ScanResult:
    """Find ``<species>/<file>.wav`` tracks under ``root`` in lexicographic order.

    The species label is the name of the file's parent directory. Other
    files are skipped and reported.
    """
    root = os.fspath(root)
    if not os.path.isdir(root):
        raise FileNotFoundError(f"dataset root {root!r} does not exist")
    tracks, skipped = [], []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in sorted(filenames):
            full = os.path.join(dirpath, name)
            rel = os.path.relpath(full, root).replace(os.sep, "/")
            if os.path.splitext(name)[1].lower() in AUDIO_EXTENSIONS:
                tracks.append(TrackSource(os.path.basename(dirpath), full, rel))
            else:
                skipped.append(rel)
    tracks.sort(key=lambda t: t.rel_path)
    skipped.sort()
    if skipped:
        log.warning("skipped %d non-audio files under %s", len(skipped), root)
    return ScanResult(tracks, skipped)


def track_dir(out_dir: str | os.PathLike, track_id: str) -> str:
    return os.path.join(os.fspath(out_dir), "tracks", *track_id.split("/"))


def _write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


class TrackResult(NamedTuple):
    entry: TrackManifestEntry
    timings: dict
    error: str | None


def process_track(source: TrackSource, config: PipelineConfig, out_dir: str, with_profile: bool = True) -> TrackResult:
    """Run one track through the pipeline and persist its artifacts.

    Decode errors yield ``status="error"``; tracks too short for the
    subsequence length yield ``status="skipped_short"`` with nothing
    written. Never raises for per-track data problems.
    """
    cfg = config.resolved()
    entry = TrackManifestEntry(source.track_id, source.species, source.rel_path, feature_kind=cfg.feature_kind)
    timings = {}
    try:
        t0 = time.perf_counter()
        buf = load_wav(source.path, nonfinite=cfg.nonfinite, track_id=source.track_id)
        entry.duration_s = buf.duration
        buf = resample(buf, cfg.sample_rate)
        entry.sample_rate = buf.sample_rate
        t1 = time.perf_counter()
        timings["load"] = t1 - t0
        try:
            spec = features.compute(buf, cfg.feature_kind, cfg.spectrogram_params)
        except EmptyInputError:
            entry.status = "skipped_short"
            return TrackResult(entry, timings, None)
        t2 = time.perf_counter()
        timings["features"] = t2 - t1
        m, excl = cfg.simple_window, cfg.exclusion_radius
        if with_profile and spec.frames < m + excl + 1:
            entry.status = "skipped_short"
            return TrackResult(entry, timings, None)

        meta = {
            "track_id": source.track_id,
            "species": source.species,
            "path": source.rel_path,
            "duration_s": entry.duration_s,
            "sample_rate": buf.sample_rate,
            "feature_kind": cfg.feature_kind,
            "feature_shape": list(spec.shape),
            "frame_rate": spec.frame_rate,
        }
        arrays = {FEATURES_FILE: spec.data.astype(np.float32)}
        if with_profile:
            mp = self_join(spec, m, excl)
            timings["join"] = time.perf_counter() - t2
            res = find_motifs(mp)
            fr = spec.frame_rate
            entry.motif_start_s = frame_to_time(res.motif_a, fr)
            entry.motif_end_s = entry.motif_start_s + m / fr
            entry.motif_pair_start_s = frame_to_time(res.motif_b, fr)
            entry.motif_distance = res.motif_distance
            entry.discord_start_s = frame_to_time(res.discord, fr)
            entry.discord_distance = res.discord_distance
            meta.update(
                subsequence_len=m,
                exclusion_radius=excl,
                motif_a=res.motif_a,
                motif_b=res.motif_b,
                motif_distance=res.motif_distance,
                discord=res.discord,
                discord_distance=res.discord_distance,
            )
            arrays[PROFILE_FILE] = mp.distances
            arrays[INDEX_FILE] = mp.indices

        t3 = time.perf_counter()
        dest = track_dir(out_dir, source.track_id)
        os.makedirs(dest, exist_ok=True)
        for name, arr in arrays.items():
            save_npy(os.path.join(dest, name), arr)
        _write_json(os.path.join(dest, META_FILE), meta)
        timings["persist"] = time.perf_counter() - t3
        return TrackResult(entry, timings, None)
    except (BirdMotifError, OSError, ValueError) as exc:
        entry.status = "error"
        return TrackResult(entry, timings, f"{type(exc).__name__}: {exc}")


def _probe_duration(source: TrackSource) -> float:
    try:
        return wav_info(source.path).duration
    except (BirdMotifError, OSError, ZeroDivisionError):
        return 0.0


def dispatch_order(tracks: list) -> tuple[list, dict]:
    """Longest tracks first, ties by path; keeps workers busy at the tail."""
    durations = {t.rel_path: _probe_duration(t) for t in tracks}
    return sorted(tracks, key=lambda t: (-durations[t.rel_path], t.rel_path)), durations


def _timing_summary(values: list) -> dict:
    if not values:
        return {"count": 0}
    arr = np.asarray(values)
    counts, _ = np.histogram(arr, bins=TIMING_EDGES)
    return {
        "count": int(arr.size),
        "total_s": float(arr.sum()),
        "min_s": float(arr.min()),
        "max_s": float(arr.max()),
        "mean_s": float(arr.mean()),
        "histogram": {"edges_s": TIMING_EDGES[:-1] + ["inf"], "counts": counts.tolist()},
    }


def write_manifest(path: str, entries: list) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(MANIFEST_COLUMNS)
        for e in entries:
            row = asdict(e)
            w.writerow(["" if row[c] is None else (repr(float(row[c])) if c in _FLOAT_COLUMNS else row[c]) for c in MANIFEST_COLUMNS])


def read_manifest(path: str) -> list:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            vals = {}
            for c in MANIFEST_COLUMNS:
                v = row[c]
                if v == "":
                    vals[c] = None if c in _FLOAT_COLUMNS or c == "sample_rate" else v
                elif c in _FLOAT_COLUMNS:
                    vals[c] = float(v)
                elif c == "sample_rate":
                    vals[c] = int(v)
                else:
                    vals[c] = v
            out.append(TrackManifestEntry(**vals))
    return out


def run_batch(root: str | os.PathLike, config: PipelineConfig, out_dir: str | os.PathLike, with_profile: bool = True) -> dict:
    """Process every track under ``root`` and write manifest, report and config.

    Returns the run report. Per-track failures are recorded, not raised.
    """
    cfg = config.resolved()
    out_dir = os.fspath(out_dir)
    started = time.perf_counter()
    scan = scan_dataset(root)
    os.makedirs(out_dir, exist_ok=True)
    ordered, durations = dispatch_order(scan.tracks)

    if cfg.workers > 1 and len(ordered) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(process_track, t, cfg, out_dir, with_profile) for t in ordered]
            results = [f.result() for f in futures]
    else:
        results = [process_track(t, cfg, out_dir, with_profile) for t in ordered]

    entries = sorted((r.entry for r in results), key=lambda e: e.track_id)
    write_manifest(os.path.join(out_dir, MANIFEST_FILE), entries)
    with open(os.path.join(out_dir, CONFIG_FILE), "w", encoding="utf-8") as fh:
        fh.write(cfg.to_json())

    counts = {"scanned": len(scan.tracks) + len(scan.skipped), "ok": 0, "skipped_short": 0, "error": 0}
    for e in entries:
        counts[e.status] += 1
    counts["non_audio"] = len(scan.skipped)
    report = {
        "schema": REPORT_SCHEMA,
        "stage": "profile" if with_profile else "features",
        "input": os.fspath(root),
        "counts": counts,
        "workers": cfg.workers,
        "dispatch_order": [{"track_id": t.track_id, "duration_s": durations[t.rel_path]} for t in ordered],
        "errors": [{"track_id": r.entry.track_id, "message": r.error} for r in results if r.error],
        "non_audio_skipped": scan.skipped,
        "stage_timings": {s: _timing_summary([r.timings[s] for r in results if s in r.timings]) for s in STAGES},
        "wall_time_s": time.perf_counter() - started,
    }
    _write_json(os.path.join(out_dir, REPORT_FILE), report)
    return report


class TrackArtifacts(NamedTuple):
    features: np.ndarray
    distances: np.ndarray
    indices: np.ndarray
    meta: dict


def load_track_artifacts(out_dir: str | os.PathLike, track_id: str) -> TrackArtifacts:
    d = track_dir(out_dir, track_id)
    with open(os.path.join(d, META_FILE), encoding="utf-8") as fh:
        meta = json.load(fh)
    return TrackArtifacts(
        load_npy(os.path.join(d, FEATURES_FILE)),
        load_npy(os.path.join(d, PROFILE_FILE)),
        load_npy(os.path.join(d, INDEX_FILE)),
        meta,
    )


def emit_plot_data(spectrogram: np.ndarray, distances: np.ndarray, indices: np.ndarray, out_dir: str, stem: str) -> tuple[str, str]:
    """Write ``<stem>_spectrogram.csv`` (frame, bin, value) and ``<stem>_profile.csv`` (frame, distance, index)."""
    os.makedirs(out_dir, exist_ok=True)
    spec_path = os.path.join(out_dir, f"{stem}_spectrogram.csv")
    prof_path = os.path.join(out_dir, f"{stem}_profile.csv")
    spectrogram = np.asarray(spectrogram)
    with open(spec_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "bin", "value"])
        for f in range(spectrogram.shape[1]):
            for b in range(spectrogram.shape[0]):
                w.writerow([f, b, repr(float(spectrogram[b, f]))])
    with open(prof_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "distance", "index"])
        for f, (d, i) in enumerate(zip(distances, indices)):
            w.writerow([f, repr(float(d)), int(i)])
    return spec_path, prof_path
