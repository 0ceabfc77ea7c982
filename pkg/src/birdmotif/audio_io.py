"""WAV decoding, resampling and fixed-length windowing of mono audio."""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, NamedTuple

import numpy as np

from birdmotif.errors import EmptyInputError, FormatError, InputError, UnsupportedFormatError

DEFAULT_SAMPLE_RATE = 22050
DEFAULT_RESAMPLE_TAPS = 64

_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_IEEE_FLOAT = 0x0003
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class AudioBuffer:
    """Decoded mono waveform.

    ``samples`` is a read-only float64 array with values in [-1, 1].
    """

    samples: np.ndarray
    sample_rate: int
    track_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "samples", _frozen(np.ravel(self.samples)))
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class AudioWindow:
    parent_track_id: str
    window_index: int
    samples: np.ndarray
    start_time_s: float
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        object.__setattr__(self, "samples", _frozen(np.ravel(self.samples)))

    def __len__(self) -> int:
        return self.samples.shape[0]

    def replace_samples(self, samples: np.ndarray) -> "AudioWindow":
        return AudioWindow(self.parent_track_id, self.window_index, samples, self.start_time_s, self.sample_rate)

    def to_buffer(self) -> AudioBuffer:
        return AudioBuffer(self.samples, self.sample_rate, f"{self.parent_track_id}#{self.window_index}")


class WavInfo(NamedTuple):
    format_tag: int
    channels: int
    sample_rate: int
    bits_per_sample: int
    n_frames: int
    data_offset: int
    data_size: int

    @property
    def duration(self) -> float:
        return self.n_frames / self.sample_rate


def _read_chunks(fh: BinaryIO) -> WavInfo:
    riff = fh.read(12)
    if len(riff) < 12 or riff[:4] != b"RIFF" or riff[8:12] != b"WAVE":
        raise FormatError("not a RIFF/WAVE file")
    fmt = None
    while True:
        head = fh.read(8)
        if len(head) == 0:
            break
        if len(head) < 8:
            raise FormatError("truncated chunk header")
        cid, size = head[:4], struct.unpack("<I", head[4:])[0]
        if cid == b"fmt ":
            body = fh.read(size)
            if len(body) < 16:
                raise FormatError("fmt chunk too short")
            tag, channels, rate, _, block_align, bits = struct.unpack("<HHIIHH", body[:16])
            if tag == _WAVE_FORMAT_EXTENSIBLE:
                if len(body) < 26:
                    raise FormatError("extensible fmt chunk too short")
                # first two bytes of the subformat GUID carry the real tag
                tag = struct.unpack("<H", body[24:26])[0]
            fmt = (tag, channels, rate, bits, block_align)
            if size % 2:
                fh.read(1)
        elif cid == b"data":
            if fmt is None:
                raise FormatError("data chunk before fmt chunk")
            tag, channels, rate, bits, block_align = fmt
            if channels < 1 or rate < 1 or block_align < 1:
                raise FormatError("invalid fmt chunk values")
            offset = fh.tell()
            # tolerate writers that leave a bogus size on streamed output
            fh.seek(0, os.SEEK_END)
            available = fh.tell() - offset
            size = min(size, available)
            return WavInfo(tag, channels, rate, bits, size // block_align, offset, size)
        else:
            fh.seek(size + (size % 2), os.SEEK_CUR)
    if fmt is None:
        raise FormatError("missing fmt chunk")
    raise FormatError("missing data chunk")


def wav_info(path: str | os.PathLike) -> WavInfo:
    """Parse only the header of a WAV file."""
    with open(path, "rb") as fh:
        return _read_chunks(fh)


def _decode(raw: bytes, info: WavInfo) -> np.ndarray:
    tag, bits = info.format_tag, info.bits_per_sample
    if tag == _WAVE_FORMAT_PCM and bits == 16:
        x = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    elif tag == _WAVE_FORMAT_PCM and bits == 24:
        b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        v = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        v = np.where(v >= 1 << 23, v - (1 << 24), v)
        x = v.astype(np.float64) / float(1 << 23)
    elif tag == _WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        x = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedFormatError(f"format tag {tag:#06x} with {bits} bits per sample")
    return x


def load_wav(path: str | os.PathLike, *, nonfinite: str = "raise", track_id: str | None = None) -> AudioBuffer:
    """Read a PCM-16, PCM-24 or float-32 WAV file as a mono buffer.

    Channels are averaged. Integer samples are divided by the type's
    maximum magnitude (32768 or 2**23); float samples are clipped to
    [-1, 1].

    Parameters
    ----------
    path : path-like
        WAV file location.
    nonfinite : {"raise", "zero"}
        What to do with NaN/Inf samples in float files.
    track_id : str, optional
        Defaults to the file stem.

    Raises
    ------
    FormatError
        Malformed RIFF structure.
    UnsupportedFormatError
        Encoding other than PCM 16/24 or float 32.
    EmptyInputError
        The data chunk holds no complete frame.
    InputError
        Non-finite samples with ``nonfinite="raise"``.
    """
    if nonfinite not in ("raise", "zero"):
        raise ValueError(f"nonfinite must be 'raise' or 'zero', got {nonfinite!r}")
    with open(path, "rb") as fh:
        info = _read_chunks(fh)
        fh.seek(info.data_offset)
        raw = fh.read(info.n_frames * info.channels * (info.bits_per_sample // 8))
    x = _decode(raw, info)
    if info.n_frames == 0 or x.size == 0:
        raise EmptyInputError(f"{path}: no audio frames")
    x = x[: info.n_frames * info.channels].reshape(info.n_frames, info.channels)
    bad = ~np.isfinite(x)
    if bad.any():
        if nonfinite == "raise":
            raise InputError(f"{path}: {int(bad.sum())} non-finite samples")
        x = np.where(bad, 0.0, x)
    mono = x.mean(axis=1) if info.channels > 1 else x[:, 0]
    mono = np.clip(mono, -1.0, 1.0)
    if track_id is None:
        track_id = os.path.splitext(os.path.basename(os.fspath(path)))[0]
    return AudioBuffer(mono, info.sample_rate, track_id)


def write_wav(path: str | os.PathLike, buf: AudioBuffer, subtype: str = "PCM_16") -> None:
    """Write a mono WAV file. ``subtype`` is PCM_16, PCM_24 or FLOAT."""
    x = np.clip(np.asarray(buf.samples, dtype=np.float64), -1.0, 1.0)
    if subtype == "PCM_16":
        tag, bits = _WAVE_FORMAT_PCM, 16
        data = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2").tobytes()
    elif subtype == "PCM_24":
        tag, bits = _WAVE_FORMAT_PCM, 24
        v = np.clip(np.round(x * float(1 << 23)), -(1 << 23), (1 << 23) - 1).astype("<i4")
        data = v.view(np.uint8).reshape(-1, 4)[:, :3].tobytes()
    elif subtype == "FLOAT":
        tag, bits = _WAVE_FORMAT_IEEE_FLOAT, 32
        data = x.astype("<f4").tobytes()
    else:
        raise UnsupportedFormatError(f"subtype {subtype!r}")
    block = bits // 8
    fmt = struct.pack("<HHIIHH", tag, 1, buf.sample_rate, buf.sample_rate * block, block, bits)
    pad = b"\x00" if len(data) % 2 else b""
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", len(data)) + data + pad
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", len(body)) + body)


def _kaiser(x: np.ndarray, half_width: float, beta: float) -> np.ndarray:
    r = np.clip(x / half_width, -1.0, 1.0)
    return np.i0(beta * np.sqrt(1.0 - r * r)) / np.i0(beta)


def resample(buf: AudioBuffer, target_rate: int, taps: int = DEFAULT_RESAMPLE_TAPS, beta: float = 8.6) -> AudioBuffer:
    """Band-limited resampling by Kaiser-windowed sinc interpolation.

    Output length is ``round(len(buf) * target_rate / buf.sample_rate)``.
    Each output sample is a weighted sum of ``taps`` input samples; the
    sinc cutoff follows the lower of the two Nyquist frequencies.
    """
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if taps < 2:
        raise ValueError("taps must be >= 2")
    if target_rate == buf.sample_rate:
        return buf
    x = buf.samples
    n = len(x)
    ratio = target_rate / buf.sample_rate
    n_out = int(round(n * ratio))
    cutoff = min(1.0, ratio)
    half = taps / 2.0
    offsets = np.arange(taps) - (taps // 2 - 1)
    out = np.empty(n_out, dtype=np.float64)
    chunk = max(1, 1 << 16)
    for start in range(0, n_out, chunk):
        k = np.arange(start, min(start + chunk, n_out))
        t = k / ratio
        base = np.floor(t).astype(np.int64)
        idx = base[:, None] + offsets[None, :]
        dist = t[:, None] - idx
        w = cutoff * np.sinc(cutoff * dist) * _kaiser(dist, half, beta)
        valid = (idx >= 0) & (idx < n)
        vals = np.where(valid, x[np.clip(idx, 0, n - 1)], 0.0)
        out[start : start + len(k)] = np.sum(w * vals, axis=1)
    return AudioBuffer(np.clip(out, -1.0, 1.0), target_rate, buf.track_id)


def window_track(buf: AudioBuffer, window_seconds: float) -> list[AudioWindow]:
    """Split a buffer into consecutive non-overlapping windows.

    The last window is zero-padded to full length, so every window holds
    exactly ``round(window_seconds * sample_rate)`` samples.
    """
    if window_seconds <= 0:
        raise ValueError("window_seconds must be positive")
    n = len(buf)
    if n == 0:
        raise EmptyInputError("cannot window an empty buffer")
    size = int(round(window_seconds * buf.sample_rate))
    if size < 1:
        raise ValueError("window shorter than one sample")
    count = math.ceil(n / size)
    padded = np.zeros(count * size, dtype=np.float64)
    padded[:n] = buf.samples
    frames = padded.reshape(count, size)
    return [
        AudioWindow(buf.track_id, i, frames[i], i * window_seconds, buf.sample_rate)
        for i in range(count)
    ]
