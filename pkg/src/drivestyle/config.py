"""Pipeline configuration loaded from TOML or JSON."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .exceptions import ConfigError

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

DEFAULT_T_DURS = [0.1, 0.5, 1.0, 2.0, 3.0, 5.0, 8.0, 10.0]
DEFAULT_SIGMAS = [round(0.01 * i, 2) for i in range(1, 21)]


@dataclass
class DataSection:
    path: str | None = None
    units: str = "feet"
    lanes: list[int] | None = None
    columns: dict | None = None
    delimiter: str = "auto"
    header: bool | None = None
    min_duration: float = 15.0
    split_fraction: float = 0.8
    split_strategy: str = "random"

    def loader_dict(self) -> dict:
        d = {"units": self.units, "lanes": self.lanes, "delimiter": self.delimiter, "header": self.header}
        if self.columns is not None:
            d["columns"] = self.columns
        return d


@dataclass
class FeaturesSection:
    window: float = 15.0


@dataclass
class StylesSection:
    k: int = 3
    k_min: int = 1
    k_max: int = 10
    restarts: int = 20
    n_components: int = 2
    standardize: bool = True
    style_overrides: dict | None = None


@dataclass
class CalibrationSection:
    budget: int = 4000
    n_starts: int = 16
    bounds: dict | None = None
    anchor: str | float = "after_features"
    every_frame: bool = False


@dataclass
class RecognitionSection:
    sigma: float = 0.15


@dataclass
class BenchmarkSection:
    t_durs: list[float] = field(default_factory=lambda: list(DEFAULT_T_DURS))
    sigmas: list[float] = field(default_factory=lambda: list(DEFAULT_SIGMAS))
    sweep_t_durs: list[float] = field(default_factory=lambda: [0.5, 2.0, 5.0])
    every_frame: bool = False


_SECTIONS = {
    "data": DataSection,
    "features": FeaturesSection,
    "styles": StylesSection,
    "calibration": CalibrationSection,
    "recognition": RecognitionSection,
    "benchmark": BenchmarkSection,
}


@dataclass
class PipelineConfig:
    seed: int = 0
    workers: int = 1
    data: DataSection = field(default_factory=DataSection)
    features: FeaturesSection = field(default_factory=FeaturesSection)
    styles: StylesSection = field(default_factory=StylesSection)
    calibration: CalibrationSection = field(default_factory=CalibrationSection)
    recognition: RecognitionSection = field(default_factory=RecognitionSection)
    benchmark: BenchmarkSection = field(default_factory=BenchmarkSection)

    @classmethod
    def from_dict(cls, d: dict | None) -> "PipelineConfig":
        d = dict(d or {})
        kwargs = {}
        for key, value in d.items():
            if key in _SECTIONS:
                sec = _SECTIONS[key]
                known = {f.name for f in fields(sec)}
                unknown = set(value) - known
                if unknown:
                    raise ConfigError(f"unknown keys in [{key}]: {sorted(unknown)}")
                kwargs[key] = sec(**value)
            elif key in ("seed", "workers"):
                kwargs[key] = int(value)
            else:
                raise ConfigError(f"unknown config key {key!r}")
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    p = Path(path)
    try:
        text = p.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    try:
        if p.suffix.lower() == ".json":
            d = json.loads(text)
        else:
            d = tomllib.loads(text.decode())
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config {p}: {exc}") from exc
    cfg = PipelineConfig.from_dict(d)
    if cfg.data.path is not None and not Path(cfg.data.path).is_absolute():
        cfg.data.path = str((p.parent / cfg.data.path).resolve())
    return cfg
