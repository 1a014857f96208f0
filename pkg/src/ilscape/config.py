"""Scene configuration files (TOML)."""

from __future__ import annotations

import math
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ilscape.descriptor import DEFAULT_BINS, AttributeWeights, check_bins, check_scales
from ilscape.flowfield import NORM_MODES, RESOLUTIONS
from ilscape.sensor_grid import AXES, MAX_DEPTH_LIMIT
from ilscape.trajectory import DEFAULT_DT, PRESETS


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SceneConfig:
    """Everything needed to encode one scene.

    ``trajectories`` (a CSV path) and ``preset`` are mutually exclusive.
    ``domain_size`` and ``sample_spacing`` accept ``"auto"``.
    """

    mesh: str | None = None
    trajectories: str | None = None
    preset: str | None = None
    preset_params: dict = field(default_factory=dict)
    domain_size: float | str = "auto"
    up_axis: str = "z"
    sample_spacing: float | str = "auto"
    max_depth: int = 8
    dt: float = DEFAULT_DT
    resolution: int = 8
    norm_mode: str = "average"
    bins: int = DEFAULT_BINS
    scales: dict = field(default_factory=dict)
    weights: dict = field(default_factory=dict)
    seed: int = 0
    label: str | None = None

    def validate(self) -> "SceneConfig":
        if self.trajectories is not None and self.preset is not None:
            raise ConfigError("give either trajectories or preset, not both")
        if self.preset is not None and self.preset not in PRESETS:
            raise ConfigError(f"preset must be one of {', '.join(PRESETS)}")
        for key in ("domain_size", "sample_spacing"):
            v = getattr(self, key)
            if v != "auto" and not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{key} must be a positive number or 'auto', got {v!r}")
        if self.up_axis not in AXES:
            raise ConfigError("up_axis must be x, y or z")
        if not (isinstance(self.max_depth, int) and 1 <= self.max_depth <= MAX_DEPTH_LIMIT):
            raise ConfigError(f"max_depth must be an integer in [1, {MAX_DEPTH_LIMIT}]")
        if not (isinstance(self.dt, (int, float)) and self.dt > 0):
            raise ConfigError("dt must be positive")
        if self.resolution not in RESOLUTIONS:
            raise ConfigError(f"resolution must be one of {RESOLUTIONS}")
        if self.norm_mode not in NORM_MODES:
            raise ConfigError(f"norm_mode must be one of {', '.join(NORM_MODES)}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        try:
            check_bins(self.bins)
            check_scales(self.scales)
            AttributeWeights.from_mapping(self.weights)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def override(self, **flags) -> "SceneConfig":
        """Replace fields with every flag that is not ``None`` (flags win over the file)."""
        given = {k: v for k, v in flags.items() if v is not None}
        unknown = set(given) - set(asdict(self))
        if unknown:
            raise ConfigError(f"unknown setting(s): {', '.join(sorted(unknown))}")
        if given.get("trajectories") is not None:
            given.setdefault("preset", None)
        elif given.get("preset") is not None:
            given.setdefault("trajectories", None)
        return replace(self, **given).validate()

    @property
    def attribute_weights(self) -> AttributeWeights:
        return AttributeWeights.from_mapping(self.weights)


_FIELDS = set(SceneConfig.__dataclass_fields__)


def parse_config(doc: dict, base_dir: Path | None = None) -> SceneConfig:
    unknown = set(doc) - _FIELDS
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(sorted(unknown))}")
    for table in ("preset_params", "scales", "weights"):
        if table in doc and not isinstance(doc[table], dict):
            raise ConfigError(f"{table} must be a table")
    doc = dict(doc)
    if base_dir is not None:
        for key in ("mesh", "trajectories"):
            if isinstance(doc.get(key), str) and not Path(doc[key]).is_absolute():
                doc[key] = str(base_dir / doc[key])
    return SceneConfig(**doc).validate()


def load_config(path) -> SceneConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    try:
        return parse_config(doc, path.parent)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def load_weights(path) -> AttributeWeights:
    """Weights from a TOML file: either top-level attribute keys or a ``[weights]`` table."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    table = doc.get("weights", doc)
    try:
        return AttributeWeights.from_mapping(table)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
