"""Pipeline configuration: defaults per feature kind, validation, TOML/JSON loading."""

from __future__ import annotations

import dataclasses
import json
import os
import sys
from dataclasses import dataclass, fields

from birdmotif.audio_io import DEFAULT_SAMPLE_RATE
from birdmotif.features import CENS_HOP, CENS_N_FFT, SpectrogramParams

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

FEATURE_KINDS = ("cens", "mel")
LABEL_SOURCES = ("motif", "discord")

# n_fft, hop, n_mels, subsequence length
KIND_DEFAULTS = {
    "cens": {"n_fft": CENS_N_FFT, "hop": CENS_HOP, "n_mels": 16, "simple_window": 50},
    "mel": {"n_fft": 2048, "hop": 80, "n_mels": 16, "simple_window": 400},
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    feature_kind: str = "cens"
    sample_rate: int = DEFAULT_SAMPLE_RATE
    n_fft: int | None = None
    hop: int | None = None
    n_mels: int | None = None
    target_fps: float = 10.0
    simple_window: int | None = None
    exclusion_radius: int | None = None
    window_seconds: float = 5.0
    workers: int = 1
    seed: int = 0
    label_source: str = "motif"
    nonfinite: str = "raise"

    def resolved(self) -> "PipelineConfig":
        """Fill kind-dependent defaults and validate."""
        if self.feature_kind not in FEATURE_KINDS:
            raise ConfigError(f"feature_kind must be one of {FEATURE_KINDS}, got {self.feature_kind!r}")
        defaults = KIND_DEFAULTS[self.feature_kind]
        updates = {k: v for k, v in defaults.items() if getattr(self, k) is None}
        cfg = dataclasses.replace(self, **updates)
        if cfg.exclusion_radius is None:
            cfg = dataclasses.replace(cfg, exclusion_radius=cfg.simple_window // 2)
        cfg._validate()
        return cfg

    def _validate(self) -> None:
        if self.label_source not in LABEL_SOURCES:
            raise ConfigError(f"label_source must be one of {LABEL_SOURCES}")
        if self.nonfinite not in ("raise", "zero"):
            raise ConfigError("nonfinite must be 'raise' or 'zero'")
        if self.simple_window < 2:
            raise ConfigError("simple_window must be >= 2")
        if self.exclusion_radius < 0:
            raise ConfigError("exclusion_radius must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.window_seconds <= 0:
            raise ConfigError("window_seconds must be positive")
        try:
            self.spectrogram_params
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def spectrogram_params(self) -> SpectrogramParams:
        return SpectrogramParams(
            n_fft=self.n_fft,
            hop=self.hop,
            n_mels=self.n_mels,
            target_fps=self.target_fps,
            sample_rate=self.sample_rate,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def load_config(path: str | os.PathLike) -> PipelineConfig:
    """Read a flat TOML or JSON table of :class:`PipelineConfig` fields."""
    path = os.fspath(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        if path.endswith(".toml"):
            data = tomllib.loads(raw.decode("utf-8"))
        else:
            data = json.loads(raw)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a table of settings")
    return PipelineConfig.from_dict(data)
