"""
Run configuration for the Fabry-Perot toolkit.

A RunConfig is built from a dotenv-style config file and command line flags
(flags win) and is echoed into every output file header, from which it can
be rebuilt exactly.
"""

import logging
from dataclasses import dataclass, fields, replace
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

from dotenv import dotenv_values

from fabry_perot import __version__
from fabry_perot.base_state import InputState
from fabry_perot.core_optics import MirrorSpec
from fabry_perot.detector_sim import THRESHOLD_MODES, DetectorModel
from fabry_perot.errors import ConfigError, DataIOError
from fabry_perot.fitting import FIT_MODES, WEIGHT_MODES
from fabry_perot.metrology import AxisScale
from fabry_perot.photon_stats import PhaseGrid, parse_input

logger = logging.getLogger(__name__)

# Header keys that describe a curve rather than the run
CURVE_PREFIX = "curve."
VERSION_KEY = "tool_version"


def parse_grid(text: str) -> Tuple[float, float, int]:
    """
    Parse 'start:stop:points'.

    Args:
        text: Grid specification, e.g. '0:1:2001'

    Returns:
        (start, stop, points)
    """
    parts = str(text).split(":")
    if len(parts) != 3:
        raise ConfigError(f"Grid must look like 'start:stop:points', got '{text}'")
    try:
        start, stop, points = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ConfigError(f"Grid must look like 'start:stop:points', got '{text}'")
    return start, stop, points


def parse_ks(text: str) -> Tuple[int, ...]:
    """
    Parse a photon-number selection such as '1,2,4' or '1..7'.

    Args:
        text: Comma separated numbers and inclusive 'a..b' ranges

    Returns:
        Sorted tuple of distinct photon numbers
    """
    ks = set()
    for part in filter(None, (p.strip() for p in str(text).split(","))):
        try:
            if ".." in part:
                lo, hi = part.split("..")
                ks.update(range(int(lo), int(hi) + 1))
            else:
                ks.add(int(part))
        except ValueError:
            raise ConfigError(f"Invalid photon-number selection '{text}'")
    if any(k < 0 for k in ks):
        raise ConfigError(f"Photon numbers must be non-negative, got '{text}'")
    return tuple(sorted(ks))


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(text)


def _optional_float(text: str) -> Optional[float]:
    return float(text) if text.strip() else None


@dataclass(frozen=True)
class RunConfig:
    """Every knob of a CLI run."""

    command: str = "scan"
    input: str = "coherent:4"
    r2: float = 0.7
    grid_start: float = 0.0
    grid_stop: float = 0.5
    grid_points: int = 2001
    ks: Tuple[int, ...] = ()
    classical: bool = False
    reflected: bool = False
    shot_noise: bool = False
    gain: float = 1.0
    noise_sigma: float = 0.1
    k_max_observable: int = 7
    seed: int = 0
    pulses: int = 10000
    drift: float = 0.0
    thresholds: str = "oracle"
    bin_width: Optional[float] = None
    fit_mode: str = "joint"
    weights: str = "uniform"
    fix_scale: bool = False
    lambda_nm: float = 1550.0
    fsr_nm: Optional[float] = None
    fwhm_nm: Optional[float] = None
    window_fwhm: Optional[float] = 2.0
    output: str = "data"

    def __post_init__(self):
        if self.grid_points < 1:
            raise ConfigError(f"Grid needs at least one point, got {self.grid_points}")
        if self.thresholds not in THRESHOLD_MODES:
            raise ConfigError(f"Unknown threshold mode '{self.thresholds}', expected one of {THRESHOLD_MODES}")
        if self.fit_mode not in FIT_MODES:
            raise ConfigError(f"Unknown fit mode '{self.fit_mode}', expected one of {FIT_MODES}")
        if self.weights not in WEIGHT_MODES:
            raise ConfigError(f"Unknown weighting '{self.weights}', expected one of {WEIGHT_MODES}")

    @property
    def state(self) -> InputState:
        return parse_input(self.input)

    @property
    def mirror(self) -> MirrorSpec:
        return MirrorSpec.from_reflectivity(self.r2)

    @property
    def grid(self) -> PhaseGrid:
        return PhaseGrid(self.grid_start, self.grid_stop, self.grid_points)

    @property
    def detector(self) -> DetectorModel:
        return DetectorModel(self.gain, self.noise_sigma, self.k_max_observable, self.seed)

    @property
    def axis_scale(self) -> AxisScale:
        return AxisScale(self.lambda_nm, self.fsr_nm, self.fwhm_nm)

    def validate(self) -> "RunConfig":
        """Build every domain object once so invalid physics fails at parse time."""
        _ = (self.state, self.mirror, self.grid, self.detector)
        return self

    def to_header(self) -> List[Tuple[str, str]]:
        """Ordered key=value pairs echoed into output headers."""
        pairs = [(VERSION_KEY, __version__)]
        pairs += [(f.name, _format(getattr(self, f.name))) for f in fields(self)]
        return pairs

    @classmethod
    def from_header(cls, header: Mapping[str, str]) -> "RunConfig":
        """
        Rebuild the configuration from header pairs. Curve metadata and the
        tool version are skipped.

        Args:
            header: Mapping of header keys to raw strings

        Returns:
            RunConfig
        """
        values = {
            key: value for key, value in header.items()
            if not key.startswith(CURVE_PREFIX) and key != VERSION_KEY
        }
        return cls.from_mapping(values)

    @classmethod
    def from_mapping(cls, values: Mapping[str, Optional[str]]) -> "RunConfig":
        """
        Build a configuration from raw string values; missing keys keep
        their defaults.

        Args:
            values: Key to string value

        Returns:
            RunConfig
        """
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {unknown}")
        kwargs = {}
        for name, raw in values.items():
            if raw is None:
                continue
            try:
                kwargs[name] = _CONVERTERS[name](raw)
            except ValueError:
                raise ConfigError(f"Invalid value '{raw}' for configuration key '{name}'")
        return cls(**kwargs)

    def merged(self, overrides: Mapping[str, object]) -> "RunConfig":
        """Copy with every non-None override applied."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


_CONVERTERS = {
    "command": str,
    "input": str,
    "r2": float,
    "grid_start": float,
    "grid_stop": float,
    "grid_points": int,
    "ks": parse_ks,
    "classical": _parse_bool,
    "reflected": _parse_bool,
    "shot_noise": _parse_bool,
    "gain": float,
    "noise_sigma": float,
    "k_max_observable": int,
    "seed": int,
    "pulses": int,
    "drift": float,
    "thresholds": str,
    "bin_width": _optional_float,
    "fit_mode": str,
    "weights": str,
    "fix_scale": _parse_bool,
    "lambda_nm": float,
    "fsr_nm": _optional_float,
    "fwhm_nm": _optional_float,
    "window_fwhm": _optional_float,
    "output": str,
}


def load_config_file(path: str) -> Dict[str, Optional[str]]:
    """
    Read a dotenv-style 'key=value' config file.

    Args:
        path: Config file path

    Returns:
        Raw key to value mapping
    """
    try:
        with open(path, encoding="utf-8") as stream:
            values = dotenv_values(stream=stream)
    except OSError as e:
        raise DataIOError(f"Cannot read config file {path}: {e}")
    logger.debug(f"Loaded {len(values)} settings from {path}")
    return dict(values)


def build_config(file_values: Mapping[str, Optional[str]], overrides: Mapping[str, object]) -> RunConfig:
    """
    Combine config-file values with command line flags; flags override.

    Args:
        file_values: Raw values from a config file
        overrides: Parsed flag values, None when not given

    Returns:
        Validated RunConfig
    """
    return RunConfig.from_mapping(file_values).merged(overrides).validate()


def header_lines(pairs: Iterable[Tuple[str, str]]) -> List[str]:
    return [f"# {key}={value}" for key, value in pairs]
