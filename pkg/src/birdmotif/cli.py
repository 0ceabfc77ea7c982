"""Command line entry point: ``birdmotif <subcommand> --input ... --out ...``.

Exit codes: 0 success (skips allowed), 1 usage error, 2 no processable
input, 3 IO failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys

import numpy as np

from birdmotif import features
from birdmotif.audio_io import load_wav, resample, window_track
from birdmotif.config import FEATURE_KINDS, LABEL_SOURCES, ConfigError, PipelineConfig, load_config
from birdmotif.errors import BirdMotifError, InsufficientDiversityError
from birdmotif.join_features import (
    DEFAULT_LIBRARY_SIZE,
    feature_columns,
    join_feature_vector,
    sample_motif_library,
    write_features,
)
from birdmotif.motifs import extract_discord, frame_to_time, top_k_motifs
from birdmotif.pipeline import (
    CONFIG_FILE,
    MANIFEST_FILE,
    emit_plot_data,
    load_track_artifacts,
    read_manifest,
    run_batch,
)
from birdmotif.simple_mp import MatrixProfile
from birdmotif.triplets import (
    TrackIndex,
    build_pairs,
    export_triplets,
    form_triplets,
    species_queue_batches,
    window_neighbors,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NO_INPUT = 2
EXIT_IO = 3

log = logging.getLogger("birdmotif")


class UsageError(Exception):
    pass


class NoInputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--input", required=True, help="dataset root, or a profile output directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="TOML or JSON file with pipeline settings")
    p.add_argument("--workers", type=int, help="worker processes (default 1)")
    p.add_argument("--seed", type=int, help="random seed (default 0)")
    p.add_argument("--feature", choices=FEATURE_KINDS, help="spectrogram kind (default cens)")
    p.add_argument("--simple-window", type=int, help="subsequence length in frames")
    p.add_argument("--label-source", choices=LABEL_SOURCES, help="segment used as the track label")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = _Parser(prog="birdmotif", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("features", parents=[common], help="compute and store spectrograms")
    sub.add_parser("profile", parents=[common], help="spectrograms plus self-join matrix profiles")

    p = sub.add_parser("motifs", parents=[common], help="motif/discord tables from a profile run")
    p.add_argument("--top-k", type=int, default=3)

    p = sub.add_parser("triplets", parents=[common], help="export a triplet dataset")
    p.add_argument("--profiles", required=True, help="output directory of a profile run")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--mode", choices=("queue", "flat"), default="queue",
                   help="species-queue mini-batches, or one flat triplet per pair")
    p.add_argument("--store", choices=("waveform", "frame"), default="waveform",
                   help="raw window samples or 128x128 Mel frames")
    p.add_argument("--augment", action="store_true", help="apply random gain/noise/shift augmentation")

    p = sub.add_parser("join-features", parents=[common], help="matrix-profile join features per window")
    p.add_argument("--profiles", required=True, help="output directory of a profile run")
    p.add_argument("--library-size", type=int, default=DEFAULT_LIBRARY_SIZE)
    p.add_argument("--per-entry", action="store_true", help="emit min/median/max per library entry")

    p = sub.add_parser("plot-data", parents=[common], help="CSV spectrogram and profile dumps")
    p.add_argument("--track", action="append", help="track id to export (repeatable; default all)")
    return parser


def resolve_config(args, base_dir: str | None = None) -> PipelineConfig:
    """Saved run config (if any), then --config file, then individual flags."""
    cfg = PipelineConfig()
    if base_dir:
        saved = os.path.join(base_dir, CONFIG_FILE)
        if os.path.exists(saved):
            cfg = load_config(saved)
    if args.config:
        cfg = load_config(args.config)
    overrides = {
        "workers": args.workers,
        "seed": args.seed,
        "feature_kind": args.feature,
        "simple_window": args.simple_window,
        "label_source": args.label_source,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if "feature_kind" in overrides and overrides["feature_kind"] != cfg.feature_kind:
        # kind-dependent settings fall back to the new kind's defaults
        cfg = dataclasses.replace(cfg, n_fft=None, hop=None, n_mels=None, simple_window=None, exclusion_radius=None)
    if "simple_window" in overrides:
        overrides.setdefault("exclusion_radius", None)
    return dataclasses.replace(cfg, **overrides).resolved()


def _ok_entries(profile_dir: str) -> list:
    path = os.path.join(profile_dir, MANIFEST_FILE)
    if not os.path.exists(path):
        raise NoInputError(f"no {MANIFEST_FILE} in {profile_dir}; run `birdmotif profile` first")
    entries = [e for e in read_manifest(path) if e.status == "ok"]
    if not entries:
        raise NoInputError(f"{path} lists no successfully processed tracks")
    return entries


def _write_config(out: str, cfg: PipelineConfig) -> None:
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, CONFIG_FILE), "w", encoding="utf-8") as fh:
        fh.write(cfg.to_json())


def _track_windows(dataset_root: str, entry, cfg: PipelineConfig):
    buf = load_wav(os.path.join(dataset_root, entry.path), nonfinite=cfg.nonfinite, track_id=entry.track_id)
    return window_track(resample(buf, cfg.sample_rate), cfg.window_seconds)


def cmd_batch(args, with_profile: bool) -> int:
    cfg = resolve_config(args)
    report = run_batch(args.input, cfg, args.out, with_profile=with_profile)
    print(json.dumps(report["counts"], sort_keys=True))
    for err in report["errors"]:
        log.warning("%s: %s", err["track_id"], err["message"])
    if report["counts"]["ok"] == 0:
        raise NoInputError(f"no processable tracks under {args.input}")
    return EXIT_OK


def cmd_motifs(args) -> int:
    cfg = resolve_config(args, args.input)
    entries = _ok_entries(args.input)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "motifs.csv"), "w", newline="", encoding="utf-8") as fm, \
            open(os.path.join(args.out, "labels.csv"), "w", newline="", encoding="utf-8") as fl:
        wm, wl = csv.writer(fm), csv.writer(fl)
        wm.writerow(["track_id", "species", "kind", "rank", "start_s", "end_s", "pair_start_s", "distance"])
        wl.writerow(["track_id", "species", "label_source", "start_s", "end_s"])
        for e in entries:
            art = load_track_artifacts(args.input, e.track_id)
            m, fr = art.meta["subsequence_len"], art.meta["frame_rate"]
            mp = MatrixProfile(art.distances, art.indices, m, art.meta["exclusion_radius"], "self")
            for rank, (i, j, d) in enumerate(top_k_motifs(mp, args.top_k)):
                start = frame_to_time(i, fr)
                wm.writerow([e.track_id, e.species, "motif", rank, repr(start), repr(start + m / fr),
                             repr(frame_to_time(j, fr)), repr(d)])
            di, dd = extract_discord(mp)
            start = frame_to_time(di, fr)
            wm.writerow([e.track_id, e.species, "discord", 0, repr(start), repr(start + m / fr), "", repr(dd)])
            label = art.meta["motif_a"] if cfg.label_source == "motif" else di
            start = frame_to_time(label, fr)
            wl.writerow([e.track_id, e.species, cfg.label_source, repr(start), repr(start + m / fr)])
    _write_config(args.out, cfg)
    print(json.dumps({"tracks": len(entries)}))
    return EXIT_OK


def cmd_triplets(args) -> int:
    cfg = resolve_config(args, args.profiles)
    entries = _ok_entries(args.profiles)
    tracks, windows = [], {}
    for e in entries:
        art = load_track_artifacts(args.profiles, e.track_id)
        wins = _track_windows(args.input, e, cfg)
        fpw = max(1, int(round(cfg.window_seconds * art.meta["frame_rate"])))
        tracks.append(TrackIndex(e.track_id, e.species, window_neighbors(art.indices, fpw, len(wins))))
        windows[e.track_id] = wins
    pairs = build_pairs(tracks)
    try:
        if args.mode == "queue":
            batches = list(species_queue_batches(pairs, args.batch_size, cfg.seed))
        else:
            flat = form_triplets(pairs, cfg.seed)
            batches = [flat[i : i + args.batch_size] for i in range(0, len(flat), args.batch_size)]
    except InsufficientDiversityError as exc:
        raise NoInputError(str(exc)) from None
    transform = features.embedding_frame if args.store == "frame" else None
    stats = export_triplets(args.out, batches, windows, transform, augment_seed=cfg.seed if args.augment else None)
    stats["pairs"] = len(pairs)
    _write_config(args.out, cfg)
    with open(os.path.join(args.out, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump({"schema": 1, "mode": args.mode, "store": args.store, "augment": args.augment, **stats},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps(stats, sort_keys=True))
    return EXIT_OK


def cmd_join_features(args) -> int:
    cfg = resolve_config(args, args.profiles)
    entries = _ok_entries(args.profiles)
    picked = []

    def load_patch(e):
        art = load_track_artifacts(args.profiles, e.track_id)
        start = art.meta["motif_a"] if cfg.label_source == "motif" else art.meta["discord"]
        picked.append(e.track_id)
        return art.features[:, start : start + cfg.simple_window]

    try:
        library = sample_motif_library(entries, load_patch, args.library_size, cfg.seed)
    except BirdMotifError as exc:
        raise NoInputError(str(exc)) from None
    params = cfg.spectrogram_params
    rows, feats = [], []
    for e in entries:
        for win in _track_windows(args.input, e, cfg):
            spec = features.compute(win.to_buffer(), cfg.feature_kind, params)
            rows.append((e.track_id, win.window_index))
            feats.append(join_feature_vector(spec, library, cfg.simple_window, per_entry=args.per_entry))
    write_features(args.out, rows, np.array(feats), feature_columns(library.size, args.per_entry))
    with open(os.path.join(args.out, "library.json"), "w", encoding="utf-8") as fh:
        json.dump({"seed": library.seed, "size": library.size, "tracks": picked, "species": library.species},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_config(args.out, cfg)
    print(json.dumps({"windows": len(rows), "library": library.size}))
    return EXIT_OK


def cmd_plot_data(args) -> int:
    entries = _ok_entries(args.input)
    if args.track:
        wanted = set(args.track)
        entries = [e for e in entries if e.track_id in wanted]
        missing = wanted - {e.track_id for e in entries}
        if missing:
            raise UsageError(f"unknown track ids: {sorted(missing)}")
    for e in entries:
        art = load_track_artifacts(args.input, e.track_id)
        emit_plot_data(art.features, art.distances, art.indices, args.out, e.track_id.replace("/", "__"))
    print(json.dumps({"tracks": len(entries)}))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    commands = {
        "features": lambda a: cmd_batch(a, with_profile=False),
        "profile": lambda a: cmd_batch(a, with_profile=True),
        "motifs": cmd_motifs,
        "triplets": cmd_triplets,
        "join-features": cmd_join_features,
        "plot-data": cmd_plot_data,
    }
    try:
        return commands[args.command](args)
    except (ConfigError, UsageError) as exc:
        print(f"birdmotif: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NoInputError as exc:
        print(f"birdmotif: {exc}", file=sys.stderr)
        return EXIT_NO_INPUT
    except (OSError, BirdMotifError) as exc:
        print(f"birdmotif: IO failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
