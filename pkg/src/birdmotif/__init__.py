"""Motif mining and triplet-dataset tooling for bird audio.

Spectrogram features, SiMPle matrix-profile joins, motif/discord
extraction, triplet sampling for metric learning and matrix-profile join
features, plus a batch pipeline that persists everything as NPY/JSON/CSV.
"""

from birdmotif.audio_io import AudioBuffer, AudioWindow, load_wav, resample, window_track, write_wav
from birdmotif.features import (
    Spectrogram,
    SpectrogramParams,
    cens_chromagram,
    embedding_frame,
    mel_spectrogram,
    stft_magnitude,
)
from birdmotif.motifs import MotifResult, extract_discord, extract_motif, find_motifs, frame_to_time, top_k_motifs
from birdmotif.simple_mp import MatrixProfile, ab_join, brute_force_profile, self_join, sliding_dot

__version__ = "0.1.0"

__all__ = [
    "AudioBuffer",
    "AudioWindow",
    "MatrixProfile",
    "MotifResult",
    "Spectrogram",
    "SpectrogramParams",
    "ab_join",
    "brute_force_profile",
    "cens_chromagram",
    "embedding_frame",
    "extract_discord",
    "extract_motif",
    "find_motifs",
    "frame_to_time",
    "load_wav",
    "mel_spectrogram",
    "resample",
    "self_join",
    "sliding_dot",
    "stft_magnitude",
    "top_k_motifs",
    "window_track",
    "write_wav",
]
