"""Run configuration parsed from flat key = value files."""

from dataclasses import dataclass, field, fields
from importlib.resources import files
from pathlib import Path
from typing import Dict, Optional, Tuple

from .analysis.gain_analysis import GainOptions, default_epsilon
from .errors import ConfigError
from .geometry.simplex_geometry import Box
from .model.system_model import SystemModel, model_by_name

MODES = ('cpa', 'hybrid')


def _floats(text: str) -> Tuple[float, ...]:
    return tuple(float(part) for part in text.split(',') if part.strip())


def _ints(text: str) -> Tuple[int, ...]:
    return tuple(int(part) for part in text.split(',') if part.strip())


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ('true', 'yes', '1', 'on'):
        return True
    if lowered in ('false', 'no', '0', 'off'):
        return False
    raise ValueError(f"not a boolean: {text}")


def _optional_float(text: str) -> Optional[float]:
    return None if text.strip().lower() in ('', 'none', 'auto') else float(text)


@dataclass
class RunConfig:  # pylint: disable=too-many-instance-attributes
    """
    Everything one CLI run needs; only system and region lack defaults.

    Attributes:
        system (str): Built-in model name.
        k_mode (Optional[str]): Input mode of the pendulum.
        region (Tuple[float, ...]): Flat box bounds lo1, hi1, lo2, hi2, ...
        mode (str): 'cpa' or 'hybrid'.
        epsilon (Optional[float]): Ball radius; hybrid default is a tenth of the smallest half-width.
        fan_radius (Optional[float]): Origin fan radius of planar CPA meshes; default half the grid step.
        divisions (Tuple[int, ...]): Grid divisions, one value or one per axis.
        levels (int): Number of mesh levels (refinements + 1).
    """

    system: str = ''
    region: Tuple[float, ...] = ()
    k_mode: Optional[str] = None
    mode: str = 'cpa'
    epsilon: Optional[float] = None
    boundary_segments: int = 16
    fan_radius: Optional[float] = None
    divisions: Tuple[int, ...] = (8,)
    levels: int = 1
    solver: str = 'CLARABEL'
    solver_tol: float = 1e-8
    solver_max_iters: int = 200_000
    alpha_min: float = 1e-8
    delta: float = 1e-8
    origin_input_offset: Optional[float] = None
    check_samples: int = 10_000
    check_tol: float = 1e-6
    seed: int = 0
    threads: int = 1
    r_u: float = 0.05
    sim_inputs: int = 100
    sim_horizon: float = 20.0
    sim_dt: float = 0.01
    report_timings: bool = False
    certificate: str = 'certificate.json'
    sweep: str = 'sweep.csv'
    report: str = 'check.json'
    simulation: str = 'simulation.json'
    mesh: str = 'mesh.json'
    source: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        if not self.system:
            raise ConfigError("Missing required key: system")
        if not self.region:
            raise ConfigError("Missing required key: region")
        if self.mode not in MODES:
            raise ConfigError(f"Unknown mode: {self.mode}. Expected one of {MODES}")
        if self.epsilon is not None and not self.epsilon > 0.0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.fan_radius is not None and not self.fan_radius > 0.0:
            raise ConfigError(f"fan_radius must be positive, got {self.fan_radius}")
        if self.levels < 1:
            raise ConfigError(f"levels must be at least 1, got {self.levels}")
        if self.threads < 1:
            raise ConfigError(f"threads must be at least 1, got {self.threads}")
        if not self.sim_dt > 0.0:
            raise ConfigError(f"sim_dt must be positive, got {self.sim_dt}")

    def box(self) -> Box:
        return Box.from_flat(self.region)

    def model(self) -> SystemModel:
        """The configured model; CPA mode rejects a nonzero constant input matrix."""
        params = {'k_mode': self.k_mode} if self.k_mode else {}
        model = model_by_name(self.system, params)
        if self.mode == 'cpa' and model.has_constant_input:
            raise ConfigError(f"{model.name} has a nonzero constant input matrix; set mode = hybrid")
        return model

    def resolved_epsilon(self) -> Optional[float]:
        if self.mode != 'hybrid':
            return None
        return self.epsilon if self.epsilon is not None else default_epsilon(self.box())

    def gain_options(self, progress_bar: bool = False) -> GainOptions:
        return GainOptions(
            solver=self.solver, tol=self.solver_tol, max_iters=self.solver_max_iters,
            alpha_min=self.alpha_min, delta=self.delta, origin_offset=self.origin_input_offset,
            threads=self.threads, progress_bar=progress_bar, r_u=self.r_u,
        )


PARSERS = {
    'system': str, 'k_mode': str, 'mode': str, 'solver': str,
    'certificate': str, 'sweep': str, 'report': str, 'simulation': str, 'mesh': str,
    'region': _floats, 'divisions': _ints,
    'epsilon': _optional_float, 'origin_input_offset': _optional_float, 'fan_radius': _optional_float,
    'boundary_segments': int, 'levels': int, 'solver_max_iters': int, 'check_samples': int,
    'seed': int, 'threads': int, 'sim_inputs': int,
    'solver_tol': float, 'alpha_min': float, 'delta': float, 'check_tol': float,
    'r_u': float, 'sim_horizon': float, 'sim_dt': float,
    'report_timings': _bool,
}


def parse_config_text(text: str, source: Optional[str] = None) -> RunConfig:
    """Parse key = value lines; '#' starts a comment."""
    values: Dict[str, object] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f"{source or 'config'}:{number}: expected key = value, got '{raw.strip()}'")
        key, value = (part.strip() for part in line.split('=', 1))
        if key not in PARSERS:
            raise ConfigError(f"{source or 'config'}:{number}: unknown key '{key}'")
        try:
            values[key] = PARSERS[key](value)
        except ValueError as e:
            raise ConfigError(f"{source or 'config'}:{number}: invalid value for '{key}': {value}") from e
    return RunConfig(source=source, **values)


def builtin_config_dir() -> Path:
    return Path(files("gaincert").joinpath("config"))


def builtin_config_names():
    return sorted(p.stem for p in builtin_config_dir().glob("*.cfg"))


def load_run_config(name_or_path: str) -> RunConfig:
    """Load a config file, or a built-in configuration by bare name."""
    path = Path(name_or_path)
    if not path.exists() and path.suffix == '' and path.name == name_or_path:
        builtin = builtin_config_dir() / f"{name_or_path}.cfg"
        if builtin.exists():
            path = builtin
    with open(path, 'r', encoding='utf-8') as file:
        return parse_config_text(file.read(), source=str(path))


def override(config: RunConfig, **changes) -> RunConfig:
    """Copy of config with the non-None changes applied (CLI flags)."""
    current = {f.name: getattr(config, f.name) for f in fields(config)}
    current.update({k: v for k, v in changes.items() if v is not None})
    return RunConfig(**current)
