"""
Configuration Management for the vehicle tracker
YAML defaults (config/config.yml) overridden by VTRACK_* environment variables
"""

import logging
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple, Union

from dotenv import load_dotenv
from pyprojroot import here
from yaml import Loader, load

logger = logging.getLogger(__name__)

ENV_PREFIX = "VTRACK_"
FILTER_MODES = ("position", "pseudorange", "off")
VALID_LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]

# Load environment variables
load_dotenv()


def _env(name: str, default: Any, cast: Callable[[str], Any] = str) -> Any:
    value = os.getenv(ENV_PREFIX + name)
    if value is None or value == "":
        return default
    try:
        return cast(value)
    except ValueError:
        raise ValueError(f"Configuration validation failed:\n- {ENV_PREFIX}{name} has an invalid value {value!r}") from None


def _env_bool(value: str) -> bool:
    return value.lower() in ("1", "true", "yes")


def load_yaml_defaults(path: Optional[Union[str, Path]] = None) -> Dict[str, Any]:
    """Reads the YAML defaults file, config/config.yml under the project root unless a path is given."""
    with open(path or here("config/config.yml"), "r") as f:
        return load(f, Loader=Loader) or {}


def parse_input_source(spec: str) -> Tuple[str, Optional[str]]:
    """
    Splits a station input source into its kind and argument.

    'stdin' -> ('stdin', None), 'file:PATH' -> ('file', PATH), 'tcp:PORT' -> ('tcp', PORT)
    """
    if spec == "stdin":
        return "stdin", None
    kind, sep, arg = spec.partition(":")
    if not sep or kind not in ("file", "tcp") or not arg:
        raise ValueError(f"Input must be one of file:PATH, stdin or tcp:PORT, got {spec!r}")
    return kind, arg


class _ConfigMixin:
    def to_dict(self) -> Dict[str, Any]:
        """Convert configuration to dictionary"""
        out = asdict(self)
        for key, value in out.items():
            if isinstance(value, Path):
                out[key] = str(value)
        return out

    @classmethod
    def from_dict(cls, config_dict: Dict[str, Any]):
        """Create configuration from dictionary, ignoring unknown keys"""
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in config_dict.items() if k in known})


@dataclass
class FilterDefaults(_ConfigMixin):
    """Kalman filter tuning for both filter modes"""

    # pseudorange filter, one-sigma values in meters
    q_pos_m: float = 2.0
    q_clk_m: float = 5.0
    r_per_sat_m: float = 10.0
    p0_pos_m: float = 100.0
    p0_clk_m: float = 1000.0
    joseph: bool = False

    # position filter
    position_q_m: float = 1.0
    position_r_m: float = 15.0
    reanchor_deg: float = 0.5

    def __post_init__(self):
        """Validate configuration after initialization"""
        self.validate()

    def validate(self):
        errors = []
        for name in ("q_pos_m", "q_clk_m", "p0_pos_m", "p0_clk_m", "position_q_m"):
            if getattr(self, name) < 0:
                errors.append(f"{name} must be >= 0")
        if self.r_per_sat_m <= 0:
            errors.append("r_per_sat_m must be > 0")
        if self.position_r_m <= 0:
            errors.append("position_r_m must be > 0")
        if not (0 < self.reanchor_deg < 1.0):
            errors.append("reanchor_deg must be within (0, 1)")
        if errors:
            raise ValueError("Configuration validation failed:\n" + "\n".join(f"- {error}" for error in errors))

    @classmethod
    def from_yaml(cls, config: Dict[str, Any]) -> "FilterDefaults":
        pr = config.get("filter_config", {})
        pos = config.get("position_filter_config", {})
        return cls(
            q_pos_m=pr.get("q_pos_m", 2.0),
            q_clk_m=pr.get("q_clk_m", 5.0),
            r_per_sat_m=pr.get("r_per_sat_m", 10.0),
            p0_pos_m=pr.get("p0_pos_m", 100.0),
            p0_clk_m=pr.get("p0_clk_m", 1000.0),
            joseph=_env("JOSEPH", pr.get("joseph", False), _env_bool),
            position_q_m=_env("Q_POS_M", pos.get("q_pos_m", 1.0), float),
            position_r_m=_env("R_POS_M", pos.get("r_pos_m", 15.0), float),
            reanchor_deg=pos.get("reanchor_deg", 0.5),
        )


@dataclass
class SimulationDefaults(_ConfigMixin):
    """Constellation, origin and noise defaults for the simulate command"""

    n_satellites: int = 6
    constellation_seed: int = 7
    origin_lat_deg: float = 40.0
    origin_lon_deg: float = 44.5
    origin_alt_m: float = 0.0
    epoch_dt_s: float = 1.0
    min_elevation_deg: float = 15.0
    max_gdop: float = 10.0
    target_2drms_m: float = 42.8
    # None means calibrate from target_2drms_m
    pr_sigma_m: Optional[float] = None
    vehicle_id: str = "VEH-001"

    def __post_init__(self):
        self.validate()

    def validate(self):
        errors = []
        if self.n_satellites < 4:
            errors.append("n_satellites must be >= 4")
        if not (-90.0 <= self.origin_lat_deg <= 90.0) or not (-180.0 <= self.origin_lon_deg <= 180.0):
            errors.append("origin must be a valid latitude/longitude")
        if self.epoch_dt_s <= 0:
            errors.append("epoch_dt_s must be > 0")
        if not (0.0 <= self.min_elevation_deg < 60.0):
            errors.append("min_elevation_deg must be within [0, 60)")
        if self.max_gdop <= 0:
            errors.append("max_gdop must be > 0")
        if self.target_2drms_m <= 0:
            errors.append("target_2drms_m must be > 0")
        if self.pr_sigma_m is not None and self.pr_sigma_m < 0:
            errors.append("pr_sigma_m must be >= 0")
        if errors:
            raise ValueError("Configuration validation failed:\n" + "\n".join(f"- {error}" for error in errors))

    @classmethod
    def from_yaml(cls, config: Dict[str, Any]) -> "SimulationDefaults":
        sim = dict(config.get("simulation_config", {}))
        sim["pr_sigma_m"] = _env("PR_SIGMA_M", sim.get("pr_sigma_m"), float)
        return cls.from_dict(sim)


@dataclass
class StationConfig(_ConfigMixin):
    """Recipient station settings"""

    input: str = "stdin"
    output_dir: Path = field(default_factory=lambda: Path("data/station"))
    filter_mode: str = "position"
    kml_every_n: int = 10
    host: str = "127.0.0.1"
    # raw pseudorange CSV, required by the pseudorange filter mode
    pseudoranges: Optional[Path] = None
    filter: FilterDefaults = field(default_factory=FilterDefaults)
    log_level: str = "INFO"
    log_file: Optional[str] = None

    def __post_init__(self):
        self.output_dir = Path(self.output_dir)
        if self.pseudoranges is not None:
            self.pseudoranges = Path(self.pseudoranges)
        if isinstance(self.filter, dict):
            self.filter = FilterDefaults.from_dict(self.filter)
        self.validate()

    def validate(self):
        """Validate configuration settings"""
        errors = []
        try:
            kind, arg = parse_input_source(self.input)
            if kind == "tcp" and not (arg.isdigit() and 0 <= int(arg) <= 65535):
                errors.append("tcp port must be between 0 and 65535")
        except ValueError as e:
            errors.append(str(e))
        if self.filter_mode not in FILTER_MODES:
            errors.append(f"filter_mode must be one of: {', '.join(FILTER_MODES)}")
        if self.filter_mode == "pseudorange" and self.pseudoranges is None:
            errors.append("pseudorange filter mode needs a pseudorange CSV")
        if self.kml_every_n < 1:
            errors.append("kml_every_n must be >= 1")
        if self.log_level.upper() not in VALID_LOG_LEVELS:
            errors.append(f"log_level must be one of: {', '.join(VALID_LOG_LEVELS)}")
        if errors:
            raise ValueError("Configuration validation failed:\n" + "\n".join(f"- {error}" for error in errors))

    @property
    def input_kind(self) -> str:
        return parse_input_source(self.input)[0]

    @property
    def input_arg(self) -> Optional[str]:
        return parse_input_source(self.input)[1]

    def to_dict(self) -> Dict[str, Any]:
        out = super().to_dict()
        out["pseudoranges"] = str(self.pseudoranges) if self.pseudoranges else None
        return out

    @classmethod
    def from_yaml(cls, config: Dict[str, Any], **overrides: Any) -> "StationConfig":
        """
        Builds a station config with precedence overrides > environment > YAML.

        Args:
            config (Dict[str, Any]): Parsed YAML defaults.
            **overrides: Explicit values, typically command-line flags; None entries are ignored.

        Returns:
            StationConfig: The validated configuration.
        """
        station = config.get("station_config", {})
        log = config.get("logging", {})
        values = {
            "output_dir": _env("OUTPUT_DIR", config.get("directories", {}).get("output_dir", "data/station")),
            "filter_mode": _env("FILTER_MODE", station.get("filter_mode", "position")),
            "kml_every_n": _env("KML_EVERY_N", station.get("kml_every_n", 10), int),
            "host": station.get("host", "127.0.0.1"),
            "filter": FilterDefaults.from_yaml(config),
            "log_level": _env("LOG_LEVEL", log.get("level", "INFO")),
            "log_file": _env("LOG_FILE", log.get("file")),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def print_config(cfg: _ConfigMixin) -> None:
    """Logs the active configuration"""
    logger.info(f"{type(cfg).__name__}:")
    for key, value in cfg.to_dict().items():
        logger.info(f"  {key.replace('_', ' ').title()}: {value}")


def logging_settings(config: Dict[str, Any]) -> Tuple[str, Optional[str]]:
    """(level, file) from the YAML logging section with VTRACK_LOG_LEVEL / VTRACK_LOG_FILE applied"""
    log = config.get("logging", {}) or {}
    return _env("LOG_LEVEL", log.get("level") or "INFO"), _env("LOG_FILE", log.get("file"))
