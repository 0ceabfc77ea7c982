import os

import numpy as np
import pytest

from birdmotif.audio_io import AudioBuffer, write_wav

SR = 22050


def sine(freq, seconds, sr=SR, amp=0.5, phase=0.0):
    t = np.arange(int(round(seconds * sr))) / sr
    return amp * np.sin(2 * np.pi * freq * t + phase)


def babble(rng, seconds, sr=SR, amp=0.3):
    """Sequence of short random-pitch tone bursts; a non-stationary background."""
    n = int(round(seconds * sr))
    x = np.zeros(n)
    t = 0
    while t < n:
        length = min(int(rng.uniform(0.1, 0.4) * sr), n - t)
        f = 440.0 * 2 ** (rng.integers(-24, 25) / 12)
        tt = np.arange(length) / sr
        x[t : t + length] += amp * np.sin(2 * np.pi * f * tt) * np.hanning(length)
        t += length
    return x


def planted_motif_track(seed, seconds=60.0, seg_seconds=5.0, fps=10, sr=SR):
    """Babble background with one 5 s segment copied to two frame-aligned spots.

    Returns (samples, frame_a, frame_b).
    """
    rng = np.random.default_rng(seed)
    hop = sr // fps
    x = babble(rng, seconds, sr) + 0.01 * rng.standard_normal(int(round(seconds * sr)))
    seg = babble(rng, seg_seconds, sr, amp=0.5)
    total_frames = int(seconds * fps)
    seg_frames = int(seg_seconds * fps)
    fa = int(rng.integers(20, total_frames // 2 - seg_frames - 10))
    fb = int(rng.integers(total_frames // 2 + 10, total_frames - seg_frames - 10))
    for f in (fa, fb):
        x[f * hop : f * hop + len(seg)] = seg
    return np.clip(x, -1, 1), fa, fb


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_corpus(root, spec, sr=SR, seed=0):
    """Write ``{species: [seconds, ...]}`` as babble WAV tracks under root."""
    rng = np.random.default_rng(seed)
    for species, durations in spec.items():
        os.makedirs(os.path.join(root, species), exist_ok=True)
        for k, seconds in enumerate(durations):
            x = babble(rng, seconds, sr) + 0.01 * rng.standard_normal(int(round(seconds * sr)))
            write_wav(os.path.join(root, species, f"XC{k:04d}.wav"), AudioBuffer(np.clip(x, -1, 1), sr))
    return root


@pytest.fixture
def small_corpus(tmp_path):
    root = tmp_path / "train_audio"
    make_corpus(str(root), {"brnowl": [12.0, 7.5], "skylar": [9.0, 15.0], "houfin": [6.2]})
    return root
