import csv
import hashlib
import json
import os

import numpy as np
import pytest

from birdmotif.audio_io import AudioBuffer, write_wav
from birdmotif.config import ConfigError, PipelineConfig, load_config
from birdmotif.pipeline import (
    MANIFEST_COLUMNS,
    TrackSource,
    emit_plot_data,
    load_track_artifacts,
    process_track,
    read_manifest,
    run_batch,
    scan_dataset,
    track_dir,
)

from conftest import SR, babble, make_corpus, sine


def _tree_digest(root):
    """Hash of every file under root (relative path + bytes)."""
    h = {}
    for dirpath, _, files in os.walk(root):
        for f in files:
            p = os.path.join(dirpath, f)
            with open(p, "rb") as fh:
                h[os.path.relpath(p, root)] = hashlib.sha256(fh.read()).hexdigest()
    return h


def _source(root, rel):
    return TrackSource(rel.split("/")[0], os.path.join(root, rel), rel)


def _write_track(root, rel, x, sr=SR):
    path = os.path.join(root, rel)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    write_wav(path, AudioBuffer(np.clip(x, -1, 1), sr))
    return _source(root, rel)


# --- scan ----------------------------------------------------------------------


def test_scan_layout(tmp_path):
    make_corpus(str(tmp_path), {"skylar": [0.2], "brnowl": [0.2]})
    scan = scan_dataset(tmp_path)
    assert len(scan) == 2
    assert [(t.species, t.rel_path) for t in scan] == [("brnowl", "brnowl/XC0000.wav"), ("skylar", "skylar/XC0000.wav")]
    assert scan.tracks[0].track_id == "brnowl/XC0000"


def test_scan_empty_root(tmp_path):
    scan = scan_dataset(tmp_path)
    assert len(scan) == 0 and scan.skipped == []


def test_scan_counts_non_audio(tmp_path):
    make_corpus(str(tmp_path), {"skylar": [0.2]})
    (tmp_path / "skylar" / "notes").mkdir()
    (tmp_path / "skylar" / "notes" / "readme.txt").write_text("x")
    (tmp_path / "skylar" / "cover.jpg").write_bytes(b"\xff")
    scan = scan_dataset(tmp_path)
    assert len(scan) == 1
    assert scan.skipped == ["skylar/cover.jpg", "skylar/notes/readme.txt"]


def test_scan_missing_root(tmp_path):
    with pytest.raises(FileNotFoundError):
        scan_dataset(tmp_path / "nope")


# --- config ----------------------------------------------------------------------


def test_config_defaults_per_kind():
    cens = PipelineConfig().resolved()
    assert (cens.n_fft, cens.hop, cens.simple_window, cens.exclusion_radius) == (4096, 512, 50, 25)
    mel = PipelineConfig(feature_kind="mel").resolved()
    assert (mel.n_fft, mel.hop, mel.n_mels, mel.simple_window) == (2048, 80, 16, 400)


def test_config_validation():
    for bad in ({"feature_kind": "cqt"}, {"workers": 0}, {"label_source": "x"}, {"simple_window": 1}):
        with pytest.raises(ConfigError):
            PipelineConfig(**bad).resolved()


def test_config_files(tmp_path):
    (tmp_path / "a.toml").write_text('feature_kind = "mel"\nworkers = 3\n')
    cfg = load_config(tmp_path / "a.toml")
    assert cfg.feature_kind == "mel" and cfg.workers == 3
    (tmp_path / "b.json").write_text(cfg.resolved().to_json())
    assert load_config(tmp_path / "b.json") == cfg.resolved()
    (tmp_path / "c.json").write_text('{"bogus": 1}')
    with pytest.raises(ConfigError):
        load_config(tmp_path / "c.json")


# --- process_track ------------------------------------------------------------------


def test_process_track_cens_lengths(tmp_path):
    rng = np.random.default_rng(0)
    src = _write_track(str(tmp_path / "in"), "sp/a.wav", babble(rng, 28.8))
    res = process_track(src, PipelineConfig(), str(tmp_path / "out"))
    assert res.entry.status == "ok" and res.error is None
    art = load_track_artifacts(tmp_path / "out", "sp/a")
    assert abs(len(art.distances) - 243) <= 5
    assert art.features.shape[0] == 12 and art.features.dtype == np.float32
    assert art.distances.dtype == np.float64 and art.indices.dtype == np.int64
    assert len(art.indices) == len(art.distances) == art.features.shape[1] - 50 + 1
    e = res.entry
    assert e.motif_end_s - e.motif_start_s == pytest.approx(50 / 10, abs=1e-6)
    assert e.motif_distance <= e.discord_distance
    assert art.meta["feature_shape"] == list(art.features.shape)


def test_process_track_too_short(tmp_path):
    src = _write_track(str(tmp_path / "in"), "sp/short.wav", sine(440, 3.0))
    res = process_track(src, PipelineConfig(), str(tmp_path / "out"))
    assert res.entry.status == "skipped_short"
    assert not os.path.exists(track_dir(tmp_path / "out", "sp/short"))


def test_process_track_decode_error(tmp_path):
    bad = tmp_path / "in" / "sp" / "bad.wav"
    bad.parent.mkdir(parents=True)
    bad.write_bytes(b"RIFF1234garbage")
    res = process_track(_source(str(tmp_path / "in"), "sp/bad.wav"), PipelineConfig(), str(tmp_path / "out"))
    assert res.entry.status == "error" and "FormatError" in res.error


def test_process_track_resamples(tmp_path):
    rng = np.random.default_rng(1)
    src = _write_track(str(tmp_path / "in"), "sp/hi.wav", babble(rng, 10.0, sr=32000), sr=32000)
    res = process_track(src, PipelineConfig(), str(tmp_path / "out"))
    assert res.entry.sample_rate == 22050
    assert res.entry.duration_s == pytest.approx(10.0)


def test_process_track_idempotent(tmp_path):
    src = _write_track(str(tmp_path / "in"), "sp/a.wav", babble(np.random.default_rng(2), 12.0))
    process_track(src, PipelineConfig(), str(tmp_path / "o1"))
    first = _tree_digest(tmp_path / "o1")
    process_track(src, PipelineConfig(), str(tmp_path / "o1"))
    assert _tree_digest(tmp_path / "o1") == first


def test_process_track_mel(tmp_path):
    src = _write_track(str(tmp_path / "in"), "sp/a.wav", babble(np.random.default_rng(3), 3.0))
    res = process_track(src, PipelineConfig(feature_kind="mel"), str(tmp_path / "out"))
    assert res.entry.status == "ok"
    art = load_track_artifacts(tmp_path / "out", "sp/a")
    assert art.features.shape == (16, 1 + int(3.0 * SR) // 80)
    assert len(art.distances) == art.features.shape[1] - 400 + 1


# --- run_batch -------------------------------------------------------------------------


@pytest.fixture(scope="module")
def ten_tracks(tmp_path_factory):
    root = tmp_path_factory.mktemp("ten") / "train_audio"
    make_corpus(str(root), {"brnowl": [9, 11, 8], "skylar": [10, 12, 9.5, 8.5], "houfin": [13, 10.5, 9]}, seed=5)
    return root


def test_run_batch_accounting(ten_tracks, tmp_path):
    report = run_batch(ten_tracks, PipelineConfig(workers=4), tmp_path)
    rows = read_manifest(tmp_path / "manifest.csv")
    assert len(rows) == 10 and all(r.status == "ok" for r in rows)
    c = report["counts"]
    assert c["scanned"] == c["ok"] + c["skipped_short"] + c["error"] + c["non_audio"] == 10
    assert report["schema"] == 1
    with open(tmp_path / "manifest.csv", newline="") as fh:
        assert next(csv.reader(fh)) == MANIFEST_COLUMNS
    saved = json.loads((tmp_path / "config.json").read_text())
    assert saved["workers"] == 4 and saved["simple_window"] == 50
    assert report["stage_timings"]["join"]["count"] == 10


def test_worker_count_independence(ten_tracks, tmp_path):
    run_batch(ten_tracks, PipelineConfig(workers=1), tmp_path / "w1")
    run_batch(ten_tracks, PipelineConfig(workers=8), tmp_path / "w8")
    assert (tmp_path / "w1" / "manifest.csv").read_bytes() == (tmp_path / "w8" / "manifest.csv").read_bytes()
    assert _tree_digest(tmp_path / "w1" / "tracks") == _tree_digest(tmp_path / "w8" / "tracks")


def test_mixed_statuses_are_counted(tmp_path):
    root = tmp_path / "root"
    make_corpus(str(root), {"a": [8.0, 2.0]})
    (root / "a" / "broken.wav").write_bytes(b"not a wav")
    (root / "a" / "x.csv").write_text("1,2")
    report = run_batch(root, PipelineConfig(), tmp_path / "out")
    assert report["counts"] == {"scanned": 4, "ok": 1, "skipped_short": 1, "error": 1, "non_audio": 1}
    assert report["errors"][0]["track_id"] == "a/broken"
    statuses = {r.track_id: r.status for r in read_manifest(tmp_path / "out" / "manifest.csv")}
    assert statuses == {"a/XC0000": "ok", "a/XC0001": "skipped_short", "a/broken": "error"}


def test_longest_first_dispatch(tmp_path):
    root = tmp_path / "root"
    make_corpus(str(root), {"a": [8, 8.5], "b": [80, 9]}, seed=1)
    report = run_batch(root, PipelineConfig(workers=2), tmp_path / "out")
    order = report["dispatch_order"]
    assert order[0]["track_id"] == "b/XC0000"
    durations = [o["duration_s"] for o in order]
    assert durations == sorted(durations, reverse=True)


def test_manifest_roundtrip(ten_tracks, tmp_path):
    run_batch(ten_tracks, PipelineConfig(), tmp_path)
    rows = read_manifest(tmp_path / "manifest.csv")
    for r in rows:
        art = load_track_artifacts(tmp_path, r.track_id)
        assert r.motif_distance == art.meta["motif_distance"]
        finite = art.distances[np.isfinite(art.distances)]
        assert r.discord_distance == finite.max() and r.motif_distance == finite.min()


# --- plot data ---------------------------------------------------------------------------


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def test_plot_data_roundtrip(tmp_path, rng):
    spec = rng.standard_normal((3, 20))
    dist = rng.random(15)
    idx = rng.integers(0, 15, 15)
    sp, pp = emit_plot_data(spec, dist, idx, str(tmp_path), "t")
    header, rows = _read_csv(pp)
    assert header == ["frame", "distance", "index"] and len(rows) == 15
    back = np.array(rows, dtype=float)
    np.testing.assert_array_equal(back[:, 1], dist)
    np.testing.assert_array_equal(back[:, 2], idx)
    header, rows = _read_csv(sp)
    assert header == ["frame", "bin", "value"] and len(rows) == 60
    cells = np.array(rows, dtype=float)
    rebuilt = np.zeros_like(spec)
    rebuilt[cells[:, 1].astype(int), cells[:, 0].astype(int)] = cells[:, 2]
    np.testing.assert_array_equal(rebuilt, spec)


def test_chirp_is_the_discord(tmp_path):
    rng = np.random.default_rng(8)
    # a steady repeating phrase with a single rising chirp in the middle
    phrase = babble(rng, 2.0)
    x = np.tile(phrase, 15)
    t = np.arange(3 * SR) / SR
    chirp = 0.6 * np.sin(2 * np.pi * (300 * t + (2500 - 300) / (2 * 3.0) * t**2))
    start = 14 * SR
    x[start : start + len(chirp)] = chirp
    src = _write_track(str(tmp_path / "in"), "sp/chirp.wav", x)
    process_track(src, PipelineConfig(simple_window=20), str(tmp_path / "out"))
    art = load_track_artifacts(tmp_path / "out", "sp/chirp")
    _, pp = emit_plot_data(art.features, art.distances, art.indices, str(tmp_path / "plot"), "chirp")
    _, rows = _read_csv(pp)
    dist = np.array([float(r[1]) for r in rows])
    disc = int(np.argmax(dist))
    # the discord window [disc, disc + 20) must overlap the chirp frames [140, 170)
    assert disc < 170 and disc + 20 > 140
