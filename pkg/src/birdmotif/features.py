"""STFT, Mel and CENS chroma features plus fixed-size embedding frames.

All spectrogram matrices are laid out as (bins, frames).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from birdmotif.audio_io import AudioBuffer, AudioWindow
from birdmotif.errors import EmptyInputError, InputError, SizeError

AMIN = 1e-10
TOP_DB = 80.0

CENS_N_FFT = 4096
CENS_HOP = 512
CENS_MIN_HZ = 65.0
CENS_SMOOTH = 41
# (threshold, weight) pairs; weights accumulate for every threshold exceeded
CENS_QUANT_STEPS = ((0.4, 0.25), (0.2, 0.25), (0.1, 0.25), (0.05, 0.25))

EMBED_SIZE = 128
EMBED_N_FFT = 4096

KINDS = ("mel", "cens", "linear")


@dataclass(frozen=True)
class SpectrogramParams:
    n_fft: int = 2048
    hop: int = 80
    n_mels: int = 16
    target_fps: float = 10.0
    sample_rate: int = 22050
    window_fn: str = "hann"

    def __post_init__(self):
        if not (self.n_fft >= self.hop >= 1):
            raise ValueError(f"need n_fft >= hop >= 1, got n_fft={self.n_fft} hop={self.hop}")
        if self.n_mels < 1:
            raise ValueError("n_mels must be >= 1")
        if self.target_fps < 1:
            raise ValueError("target_fps must be >= 1")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.window_fn != "hann":
            raise ValueError(f"unsupported window {self.window_fn!r}")

    @classmethod
    def mel_default(cls, sample_rate: int = 22050) -> "SpectrogramParams":
        return cls(n_fft=2048, hop=80, n_mels=16, sample_rate=sample_rate)

    @classmethod
    def cens_default(cls, sample_rate: int = 22050, target_fps: float = 10.0) -> "SpectrogramParams":
        return cls(n_fft=CENS_N_FFT, hop=CENS_HOP, target_fps=target_fps, sample_rate=sample_rate)


@dataclass(frozen=True)
class Spectrogram:
    data: np.ndarray
    frame_rate: float
    kind: str
    params: SpectrogramParams = field(default_factory=SpectrogramParams)

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64, copy=True)
        if data.ndim != 2:
            raise ValueError(f"spectrogram must be 2-D (bins, frames), got shape {data.shape}")
        if data.shape[1] < 1:
            raise EmptyInputError("spectrogram has no frames")
        if not np.all(np.isfinite(data)):
            raise InputError("spectrogram contains non-finite values")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def bins(self) -> int:
        return self.data.shape[0]

    @property
    def frames(self) -> int:
        return self.data.shape[1]

    def slice_frames(self, start: int, stop: int) -> "Spectrogram":
        return Spectrogram(self.data[:, start:stop], self.frame_rate, self.kind, self.params)


@lru_cache(maxsize=16)
def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window (the usual choice for STFT analysis)."""
    w = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
    w.setflags(write=False)
    return w


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def frame_count(n_samples: int, hop: int) -> int:
    return 1 + n_samples // hop


def _stft_power(x: np.ndarray, n_fft: int, hop: int, chunk: int = 1024) -> np.ndarray:
    """|STFT|^2 of centered, reflect-padded frames; shape (n_fft//2+1, frames)."""
    pad = n_fft // 2
    if len(x) > 1:
        padded = np.pad(x, pad, mode="reflect")
    else:
        padded = np.pad(x, pad, mode="edge")
    n_frames = frame_count(len(x), hop)
    win = hann_window(n_fft)
    out = np.empty((n_fft // 2 + 1, n_frames), dtype=np.float64)
    view = np.lib.stride_tricks.sliding_window_view(padded, n_fft)[::hop]
    for s in range(0, n_frames, chunk):
        block = view[s : s + chunk] * win
        spec = np.fft.rfft(block, n=n_fft, axis=1)
        out[:, s : s + block.shape[0]] = (spec.real**2 + spec.imag**2).T
    return out


def _check_fft(n_fft: int, hop: int) -> None:
    if not _is_pow2(n_fft):
        raise ValueError(f"n_fft must be a power of two, got {n_fft}")
    if hop < 1:
        raise ValueError("hop must be >= 1")


def stft_magnitude(buf: AudioBuffer, n_fft: int, hop: int) -> Spectrogram:
    """Magnitude STFT with centered Hann frames.

    Frame count is ``1 + len(buf) // hop``; there are ``n_fft // 2 + 1`` bins.
    """
    _check_fft(n_fft, hop)
    if len(buf) < 1:
        raise EmptyInputError("empty buffer")
    mag = np.sqrt(_stft_power(buf.samples, n_fft, hop))
    params = SpectrogramParams(n_fft=n_fft, hop=hop, sample_rate=buf.sample_rate)
    return Spectrogram(mag, buf.sample_rate / hop, "linear", params)


def hz_to_mel(hz):
    """Slaney mel scale: linear below 1 kHz, logarithmic above."""
    hz = np.asanyarray(hz, dtype=np.float64)
    f_sp = 200.0 / 3
    min_log_hz = 1000.0
    min_log_mel = min_log_hz / f_sp
    logstep = np.log(6.4) / 27.0
    mel = hz / f_sp
    return np.where(hz >= min_log_hz, min_log_mel + np.log(np.maximum(hz, min_log_hz) / min_log_hz) / logstep, mel)


def mel_to_hz(mel):
    mel = np.asanyarray(mel, dtype=np.float64)
    f_sp = 200.0 / 3
    min_log_hz = 1000.0
    min_log_mel = min_log_hz / f_sp
    logstep = np.log(6.4) / 27.0
    return np.where(mel >= min_log_mel, min_log_hz * np.exp(logstep * (mel - min_log_mel)), f_sp * mel)


@lru_cache(maxsize=16)
def mel_filterbank(sample_rate: int, n_fft: int, n_mels: int) -> np.ndarray:
    """Triangular Slaney filterbank with area normalization, shape (n_mels, n_fft//2+1)."""
    fft_freqs = np.linspace(0.0, sample_rate / 2.0, n_fft // 2 + 1)
    mel_pts = np.linspace(hz_to_mel(0.0), hz_to_mel(sample_rate / 2.0), n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    fdiff = np.diff(hz_pts)
    ramps = hz_pts[:, None] - fft_freqs[None, :]
    lower = -ramps[:-2] / fdiff[:-1, None]
    upper = ramps[2:] / fdiff[1:, None]
    weights = np.maximum(0.0, np.minimum(lower, upper))
    weights *= (2.0 / (hz_pts[2 : n_mels + 2] - hz_pts[:n_mels]))[:, None]
    weights.setflags(write=False)
    return weights


def power_to_db(power: np.ndarray, amin: float = AMIN, top_db: float = TOP_DB) -> np.ndarray:
    db = 10.0 * np.log10(np.maximum(power, amin))
    return np.maximum(db, db.max() - top_db)


def mel_power(buf: AudioBuffer, params: SpectrogramParams) -> np.ndarray:
    """Mel-projected power spectrogram before dB conversion."""
    _check_fft(params.n_fft, params.hop)
    if len(buf) < 1:
        raise EmptyInputError("empty buffer")
    if buf.sample_rate != params.sample_rate:
        raise ValueError(f"buffer rate {buf.sample_rate} Hz does not match params {params.sample_rate} Hz")
    power = _stft_power(buf.samples, params.n_fft, params.hop)
    return mel_filterbank(params.sample_rate, params.n_fft, params.n_mels) @ power


def mel_spectrogram(buf: AudioBuffer, params: SpectrogramParams) -> Spectrogram:
    """dB-scaled Mel spectrogram (floor 1e-10, 80 dB dynamic range)."""
    db = power_to_db(mel_power(buf, params))
    return Spectrogram(db, params.sample_rate / params.hop, "mel", params)


@lru_cache(maxsize=8)
def chroma_fold_matrix(sample_rate: int, n_fft: int, min_hz: float = CENS_MIN_HZ) -> np.ndarray:
    """0/1 matrix mapping STFT bins onto 12 pitch classes (row 0 = C, row 9 = A)."""
    freqs = np.linspace(0.0, sample_rate / 2.0, n_fft // 2 + 1)
    fold = np.zeros((12, freqs.size), dtype=np.float64)
    keep = freqs >= min_hz
    midi = 69.0 + 12.0 * np.log2(freqs[keep] / 440.0)
    pitch_class = np.round(midi).astype(np.int64) % 12
    fold[pitch_class, np.flatnonzero(keep)] = 1.0
    fold.setflags(write=False)
    return fold


@lru_cache(maxsize=4)
def _smoothing_window(length: int) -> np.ndarray:
    # symmetric Hann with the zero endpoints dropped, unit sum
    n = length + 2
    w = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / (n - 1))
    w = w[1:-1]
    w = w / w.sum()
    w.setflags(write=False)
    return w


def _quantize(chroma: np.ndarray) -> np.ndarray:
    out = np.zeros_like(chroma)
    for threshold, weight in CENS_QUANT_STEPS:
        out += weight * (chroma > threshold)
    return out


def _l2_normalize_columns(x: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    norms = np.linalg.norm(x, axis=0)
    out = np.zeros_like(x)
    nz = norms > eps
    out[:, nz] = x[:, nz] / norms[nz]
    return out


def cens_chromagram(
    buf: AudioBuffer,
    target_fps: float = 10.0,
    n_fft: int = CENS_N_FFT,
    hop: int = CENS_HOP,
    smooth: int = CENS_SMOOTH,
) -> Spectrogram:
    """Chroma energy normalized statistics (CENS) at ``target_fps`` frames/s.

    Pitch classes come from folding STFT bin energies (A440 tuning, bins
    under 65 Hz dropped) rather than from a constant-Q transform. The rest
    follows the usual CENS chain: L1 normalization, 4-level quantization,
    41-frame Hann smoothing, downsampling, L2 normalization. Silent frames
    stay all-zero.

    The output has ``1 + floor(len(buf) * target_fps / sample_rate)``
    frames, matching centered framing at a hop of ``sample_rate / target_fps``.
    """
    _check_fft(n_fft, hop)
    if target_fps < 1:
        raise ValueError("target_fps must be >= 1")
    if len(buf) < n_fft:
        raise EmptyInputError(f"need at least {n_fft} samples for CENS, got {len(buf)}")
    sr = buf.sample_rate
    power = _stft_power(buf.samples, n_fft, hop)
    chroma = chroma_fold_matrix(sr, n_fft) @ power

    total = chroma.sum(axis=0)
    # relative threshold avoids turning float noise in silent frames into chroma
    live = total > AMIN * max(1.0, float(total.max()))
    chroma = np.where(live, chroma / np.where(live, total, 1.0), 0.0)
    quant = _quantize(chroma)

    win = _smoothing_window(smooth)
    smoothed = np.stack([np.convolve(row, win, mode="same") for row in quant])

    n_out = 1 + int(np.floor(len(buf) * target_fps / sr))
    src_rate = sr / hop
    positions = np.minimum(np.arange(n_out) * (src_rate / target_fps), smoothed.shape[1] - 1)
    src = np.arange(smoothed.shape[1])
    down = np.stack([np.interp(positions, src, row) for row in smoothed])

    cens = _l2_normalize_columns(down)
    params = SpectrogramParams(n_fft=n_fft, hop=hop, target_fps=target_fps, sample_rate=sr)
    return Spectrogram(cens, float(target_fps), "cens", params)


def embedding_frame(win: AudioWindow | AudioBuffer, n_mels: int = EMBED_SIZE, n_fft: int = EMBED_N_FFT) -> np.ndarray:
    """Square dB Mel image of one audio window, shape (n_mels, n_mels).

    The hop is ``len(win) // n_mels`` so the window spans ``n_mels`` frames;
    the extra centered frame is truncated.
    """
    n = len(win)
    if n < n_mels:
        raise SizeError(f"window of {n} samples is too short for {n_mels} frames")
    hop = n // n_mels
    buf = win.to_buffer() if isinstance(win, AudioWindow) else win
    _check_fft(n_fft, hop)
    if hop > n_fft:
        raise SizeError(f"window of {n} samples needs hop {hop} > n_fft {n_fft}")
    power = mel_filterbank(buf.sample_rate, n_fft, n_mels) @ _stft_power(buf.samples, n_fft, hop)
    db = power_to_db(power)
    if db.shape[1] >= n_mels:
        return db[:, :n_mels]
    out = np.full((n_mels, n_mels), db.min())
    out[:, : db.shape[1]] = db
    return out


def compute(buf: AudioBuffer, kind: str, params: SpectrogramParams) -> Spectrogram:
    """Dispatch on feature kind for the batch pipeline."""
    if kind == "mel":
        return mel_spectrogram(buf, params)
    if kind == "cens":
        return cens_chromagram(buf, params.target_fps, n_fft=params.n_fft, hop=params.hop)
    if kind == "linear":
        return stft_magnitude(buf, params.n_fft, params.hop)
    raise ValueError(f"unknown feature kind {kind!r}")
