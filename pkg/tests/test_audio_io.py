import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.io import wavfile

from birdmotif.audio_io import AudioBuffer, load_wav, resample, wav_info, window_track, write_wav
from birdmotif.errors import EmptyInputError, FormatError, InputError, UnsupportedFormatError

from conftest import sine


def _raw_wav(path, data: bytes, channels=1, rate=22050, bits=16, tag=1, extra_chunk=False):
    block = channels * bits // 8
    fmt = struct.pack("<HHIIHH", tag, channels, rate, rate * block, block, bits)
    chunks = b"fmt " + struct.pack("<I", len(fmt)) + fmt
    if extra_chunk:
        chunks += b"LIST" + struct.pack("<I", 3) + b"abc\x00"
    chunks += b"data" + struct.pack("<I", len(data)) + data
    path.write_bytes(b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks)
    return path


def test_silence(tmp_path):
    wavfile.write(tmp_path / "s.wav", 22050, np.zeros(22050, dtype=np.int16))
    buf = load_wav(tmp_path / "s.wav")
    assert len(buf) == 22050 and buf.sample_rate == 22050
    assert not buf.samples.any()
    assert buf.track_id == "s"


def test_full_scale_int16(tmp_path):
    p = _raw_wav(tmp_path / "one.wav", struct.pack("<h", 32767))
    buf = load_wav(p)
    assert buf.samples[0] == pytest.approx(32767 / 32768)


def test_sine_roundtrip_pcm16(tmp_path):
    x = sine(440, 0.5)
    write_wav(tmp_path / "a.wav", AudioBuffer(x, 22050))
    back = load_wav(tmp_path / "a.wav")
    assert np.max(np.abs(back.samples - x)) <= 2**-15


@pytest.mark.parametrize("subtype, tol", [("PCM_24", 2**-23), ("FLOAT", 1e-7)])
def test_roundtrip_other_subtypes(tmp_path, subtype, tol):
    x = sine(440, 0.25)
    write_wav(tmp_path / "a.wav", AudioBuffer(x, 16000), subtype)
    back = load_wav(tmp_path / "a.wav")
    assert back.sample_rate == 16000
    assert np.max(np.abs(back.samples - x)) <= tol


def test_scipy_reads_what_we_write(tmp_path):
    x = sine(300, 0.1)
    write_wav(tmp_path / "a.wav", AudioBuffer(x, 22050), "PCM_24")
    rate, data = wavfile.read(tmp_path / "a.wav")
    assert rate == 22050
    np.testing.assert_allclose(data / 2**31, x, atol=2**-22)


def test_reads_scipy_float_and_int(tmp_path, rng):
    x = rng.uniform(-0.9, 0.9, 1000)
    wavfile.write(tmp_path / "f.wav", 8000, x.astype(np.float32))
    np.testing.assert_allclose(load_wav(tmp_path / "f.wav").samples, x, atol=1e-7)
    wavfile.write(tmp_path / "i.wav", 8000, (x * 32767).astype(np.int16))
    np.testing.assert_allclose(load_wav(tmp_path / "i.wav").samples, x, atol=2 / 32768)


def test_stereo_downmix_is_mean(tmp_path, rng):
    left = (rng.uniform(-0.5, 0.5, 500) * 32767).astype(np.int16)
    right = (rng.uniform(-0.5, 0.5, 500) * 32767).astype(np.int16)
    wavfile.write(tmp_path / "st.wav", 22050, np.stack([left, right], axis=1))
    wavfile.write(tmp_path / "l.wav", 22050, left)
    wavfile.write(tmp_path / "r.wav", 22050, right)
    mixed = load_wav(tmp_path / "st.wav").samples
    l = load_wav(tmp_path / "l.wav").samples
    r = load_wav(tmp_path / "r.wav").samples
    np.testing.assert_allclose(mixed, (l + r) / 2, atol=1e-12)


def test_identical_channels_equal_mono(tmp_path, rng):
    ch = (rng.uniform(-0.5, 0.5, 300) * 32767).astype(np.int16)
    wavfile.write(tmp_path / "st.wav", 22050, np.stack([ch, ch], axis=1))
    wavfile.write(tmp_path / "m.wav", 22050, ch)
    np.testing.assert_array_equal(load_wav(tmp_path / "st.wav").samples, load_wav(tmp_path / "m.wav").samples)


def test_skips_unknown_chunks(tmp_path):
    p = _raw_wav(tmp_path / "x.wav", struct.pack("<3h", 0, 16384, -16384), extra_chunk=True)
    np.testing.assert_allclose(load_wav(p).samples, [0.0, 0.5, -0.5])


def test_errors(tmp_path):
    (tmp_path / "junk.wav").write_bytes(b"hello world, not a wav")
    with pytest.raises(FormatError):
        load_wav(tmp_path / "junk.wav")
    with pytest.raises(UnsupportedFormatError):
        load_wav(_raw_wav(tmp_path / "u8.wav", b"\x80\x80", bits=8))
    with pytest.raises(UnsupportedFormatError):
        load_wav(_raw_wav(tmp_path / "alaw.wav", b"\x00\x00", tag=6))
    with pytest.raises(EmptyInputError):
        load_wav(_raw_wav(tmp_path / "empty.wav", b""))


def test_nonfinite_modes(tmp_path):
    wavfile.write(tmp_path / "nan.wav", 8000, np.array([0.1, np.nan, -0.2], dtype=np.float32))
    with pytest.raises(InputError):
        load_wav(tmp_path / "nan.wav")
    buf = load_wav(tmp_path / "nan.wav", nonfinite="zero")
    np.testing.assert_allclose(buf.samples, [0.1, 0.0, -0.2], atol=1e-7)


def test_wav_info(tmp_path):
    wavfile.write(tmp_path / "a.wav", 32000, np.zeros(64000, dtype=np.int16))
    info = wav_info(tmp_path / "a.wav")
    assert info.n_frames == 64000 and info.duration == 2.0


def test_buffer_is_immutable():
    buf = AudioBuffer(np.zeros(4), 100)
    with pytest.raises(ValueError):
        buf.samples[0] = 1.0


# --- resample ----------------------------------------------------------------


def test_resample_identity():
    buf = AudioBuffer(np.linspace(-1, 1, 50), 22050)
    assert resample(buf, 22050) is buf


def test_resample_halves_length():
    buf = AudioBuffer(sine(440, 1.0, sr=44100), 44100)
    out = resample(buf, 22050)
    assert len(out) == 22050 and out.sample_rate == 22050


def test_resample_keeps_tone_frequency():
    out = resample(AudioBuffer(sine(440, 1.0, sr=44100), 44100), 22050)
    spectrum = np.abs(np.fft.rfft(out.samples))
    freqs = np.fft.rfftfreq(len(out), 1 / out.sample_rate)
    assert abs(freqs[np.argmax(spectrum)] - 440) <= freqs[1]


def test_resample_32k_to_22050_waveform():
    x = sine(1000, 0.5, sr=32000)
    out = resample(AudioBuffer(x, 32000), 22050)
    assert len(out) == round(len(x) * 22050 / 32000)
    expected = sine(1000, len(out) / 22050)[: len(out)]
    # edges see the zero padding of the interpolation kernel
    np.testing.assert_allclose(out.samples[64:-64], expected[64:-64], atol=2e-3)


def test_resample_rejects_zero_rate():
    with pytest.raises(ValueError):
        resample(AudioBuffer(np.zeros(10), 100), 0)


def test_resample_roundtrip_preserves_duration(tmp_path):
    buf = AudioBuffer(sine(220, 1.3, sr=32000), 32000)
    write_wav(tmp_path / "a.wav", resample(buf, 22050))
    back = load_wav(tmp_path / "a.wav")
    assert abs(back.duration - buf.duration) <= 1 / 22050


# --- windowing -----------------------------------------------------------------


def test_window_count_and_padding():
    buf = AudioBuffer(np.ones(int(28.8 * 1000)), 1000)
    wins = window_track(buf, 5.0)
    assert len(wins) == 6
    assert all(len(w) == 5000 for w in wins)
    assert wins[-1].samples[:3800].all() and not wins[-1].samples[3800:].any()
    assert [w.start_time_s for w in wins] == [0.0, 5.0, 10.0, 15.0, 20.0, 25.0]


def test_window_exact_fit():
    wins = window_track(AudioBuffer(np.ones(5 * 800), 800), 5.0)
    assert len(wins) == 1 and wins[0].samples.all()


def test_window_short_track_zero_pad():
    wins = window_track(AudioBuffer(np.ones(400), 800), 5.0)
    assert len(wins) == 1
    pad = wins[0].samples[400:]
    assert len(pad) == 3600 and np.sum(pad**2) == 0.0


def test_window_empty_buffer():
    with pytest.raises(EmptyInputError):
        window_track(AudioBuffer(np.zeros(0), 800), 5.0)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 5000), rate=st.integers(20, 1000), secs=st.floats(0.05, 3.0))
def test_windows_concatenate_to_original(n, rate, secs):
    x = np.random.default_rng(n).uniform(-1, 1, n)
    wins = window_track(AudioBuffer(x, rate), secs)
    joined = np.concatenate([w.samples for w in wins])
    np.testing.assert_array_equal(joined[:n], x)
    assert not joined[n:].any()
    assert all(w.window_index == i for i, w in enumerate(wins))
