import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Tuple

from .errors import ConfigError

logger = logging.getLogger(__name__)

COMMANDS = ("symmetry", "classical", "loops", "mc", "ed", "wxy", "wkb", "circuit")
OUTPUT_FORMATS = ("json", "csv")
TOP_LEVEL_KEYS = ("command", "geometry", "params", "seed", "output", "workers")
MAX_SEED = 2 ** 64 - 1
MAX_LATTICE = 64


class Param(NamedTuple):
    """One entry of a command's parameter table."""

    kind: type
    default: Any = None
    low: Optional[float] = None
    high: Optional[float] = None
    required: bool = False
    choices: Optional[Tuple[Any, ...]] = None


_NUMBER = float

PARAMETERS: Dict[str, Dict[str, Param]] = {
    "symmetry": {
        "W": Param(list),
        "diagonal_right": Param(bool, True),
    },
    "classical": {
        "J": Param(_NUMBER, 1.0, low=0.0),
        "n_samples": Param(int, 100_000, low=1),
        "n_tether": Param(int, 1000, low=0),
        "n_steps": Param(int, 64, low=2),
        "variant": Param(str, "A", choices=("A", "B")),
    },
    "loops": {
        "lam": Param(_NUMBER, 1.0, low=0.0),
        "fugacity_p": Param(list, [3, 4]),
        "fugacity_K": Param(list, [25.0, 100.0, 400.0]),
        "fugacity_method": Param(str, "trapezoid", choices=("trapezoid", "bessel", "monte_carlo")),
        "max_argmax": Param(int, 16, low=0),
    },
    "mc": {
        "K_eff": Param(_NUMBER, required=True, low=0.0),
        "mode": Param(str, "effective_theta", choices=("effective_theta", "full_theta_phi")),
        "steps": Param(int, 2000, low=1),
        "burn_in": Param(int, None, low=0),
        "n_chains": Param(int, 1, low=1),
        "init": Param(str, "random", choices=("random", "crystal")),
        "step_width": Param(_NUMBER, 0.5, low=0.0),
        "loop_moves": Param(bool, True),
        "J": Param(_NUMBER, 1.0, low=0.0),
    },
    "ed": {
        "lambda_J": Param(_NUMBER, required=True, low=0.0),
        "lambda_flip": Param(_NUMBER, required=True, low=0.0),
        "lambda_flip_b": Param(_NUMBER, None, low=0.0),
        "n_low": Param(int, 16, low=1),
        "method": Param(str, "auto", choices=("auto", "dense", "sparse")),
    },
    "wxy": {
        "J": Param(_NUMBER, 1.0, low=0.0),
        "h_mu": Param(_NUMBER, 0.0),
        "h_sigma": Param(_NUMBER, 0.0),
        "cluster": Param(str, "single", choices=("single", "pair")),
        "n_low": Param(int, 16, low=1),
    },
    "wkb": {
        "J": Param(_NUMBER, 1.0, low=0.0),
        "k": Param(_NUMBER, 1.0),
        "K_wkb": Param(_NUMBER, 1.0, low=0.0),
        "jc_min": Param(_NUMBER, 10.0, low=0.0),
        "jc_max": Param(_NUMBER, 1e4, low=0.0),
        "n_points": Param(int, 31, low=2),
    },
    "circuit": {
        "J_w": Param(_NUMBER, 1.0, low=0.0),
        "d_J": Param(_NUMBER, 0.1, low=0.0, high=1.0),
        "Phi_w": Param(_NUMBER, 0.0),
        "Phi_t": Param(_NUMBER, 0.0),
        "e_LJ": Param(_NUMBER, 0.01, low=0.0),
        "e_grid": Param(list, [0.003, 0.01, 0.03]),
        "n_points": Param(int, 128, low=8),
        "n_draws": Param(int, 100, low=0),
        "disorder_fraction": Param(_NUMBER, 1.0, low=0.0, high=1.0),
        "J_w_kelvin": Param(_NUMBER, 1.0, low=0.0),
        "L_arm": Param(_NUMBER, 10e-12, low=0.0),
        "C_J": Param(_NUMBER, 50e-15, low=0.0),
        "C_m": Param(_NUMBER, 10e-15, low=0.0),
        "C_g": Param(_NUMBER, 10e-15, low=0.0),
        "C_m_par": Param(_NUMBER, 1e-15, low=0.0),
        "C_m_par2": Param(_NUMBER, 0.3e-15, low=0.0),
        "C_m_par3": Param(_NUMBER, 0.1e-15, low=0.0),
        "C_g_par": Param(_NUMBER, 0.0, low=0.0),
        "C_g_par2": Param(_NUMBER, 0.0, low=0.0),
        "C_g_par3": Param(_NUMBER, 0.0, low=0.0),
    },
}

# Commands that need a lattice and the seed rule per command.
GEOMETRY_COMMANDS = ("classical", "loops", "mc", "ed", "wxy")
SEEDED_COMMANDS = ("mc",)


@dataclass(frozen=True)
class RunConfig:
    command: str
    geometry: Tuple[int, int] = (2, 2)
    params: Dict[str, Any] = field(default_factory=dict)
    seed: Optional[int] = None
    output_format: str = "json"
    output_path: Optional[str] = None
    workers: Optional[int] = None

    @property
    def effective_seed(self) -> int:
        return 0 if self.seed is None else self.seed

    def with_overrides(self, seed: Optional[int] = None, output_path: Optional[str] = None, workers: Optional[int] = None) -> "RunConfig":
        return RunConfig(
            command=self.command,
            geometry=self.geometry,
            params=dict(self.params),
            seed=self.seed if seed is None else seed,
            output_format=self.output_format,
            output_path=self.output_path if output_path is None else output_path,
            workers=self.workers if workers is None else workers,
        )

    def to_dict(self) -> Dict[str, Any]:
        """Canonical document; parse_config(json.dumps(cfg.to_dict())) gives back cfg."""
        return {
            "command": self.command,
            "geometry": {"Lx": self.geometry[0], "Ly": self.geometry[1]},
            "params": dict(sorted(self.params.items())),
            "seed": self.seed,
            "output": {"format": self.output_format, "path": self.output_path},
            "workers": self.workers,
        }


def _type_name(kind: type) -> str:
    return {float: "number", int: "integer", str: "string", bool: "boolean", list: "list"}[kind]


def _coerce(name: str, value: Any, spec: Param, problems: List[str]) -> Any:
    kind = spec.kind
    if kind is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, kind)
    if not ok:
        problems.append(f"'{name}': expected {_type_name(kind)}, got {type(value).__name__}")
        return None
    if spec.choices is not None and value not in spec.choices:
        problems.append(f"'{name}': expected one of {list(spec.choices)}, got {value!r}")
    if spec.low is not None and isinstance(value, (int, float)) and value < spec.low:
        problems.append(f"'{name}': must be >= {spec.low}, got {value}")
    if spec.high is not None and isinstance(value, (int, float)) and value > spec.high:
        problems.append(f"'{name}': must be <= {spec.high}, got {value}")
    return value


def _check_keys(section: str, data: Dict[str, Any], allowed, problems: List[str]):
    for key in data:
        if key not in allowed:
            problems.append(f"unknown key '{section}{key}'; allowed keys are {sorted(allowed)}")


def parse_config(text: str) -> RunConfig:
    """
    Parse and validate a JSON run configuration.

    Every problem found is collected first, so one error names all offending keys.

    Args:
        text: UTF-8 JSON document (or bytes)

    Returns:
        Validated RunConfig with defaults filled in

    Raises:
        ConfigError: Naming every offending key and the expected type or range
    """
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as e:
            raise ConfigError(f"configuration is not valid UTF-8: {e}", module="cli_io")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"configuration is not valid JSON: {e}", module="cli_io")
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object", module="cli_io")

    problems: List[str] = []
    _check_keys("", data, TOP_LEVEL_KEYS, problems)

    command = data.get("command")
    if command not in COMMANDS:
        problems.append(f"'command': expected one of {list(COMMANDS)}, got {command!r}")
        raise ConfigError("invalid configuration: " + "; ".join(problems), module="cli_io")

    geometry = (2, 2)
    geometry_data = data.get("geometry")
    if geometry_data is None:
        if command in GEOMETRY_COMMANDS:
            problems.append(f"'geometry': required for command '{command}'")
    elif not isinstance(geometry_data, dict):
        problems.append(f"'geometry': expected object with Lx and Ly, got {type(geometry_data).__name__}")
    else:
        _check_keys("geometry.", geometry_data, ("Lx", "Ly"), problems)
        sizes = []
        for key in ("Lx", "Ly"):
            value = geometry_data.get(key)
            if not isinstance(value, int) or isinstance(value, bool):
                problems.append(f"'geometry.{key}': expected integer, got {type(value).__name__}")
            elif value < 2 or value % 2 or value > MAX_LATTICE:
                problems.append(
                    f"'geometry.{key}': lattice dimensions must be even and between 2 and {MAX_LATTICE}, got {value}"
                )
            sizes.append(value)
        if len(sizes) == 2 and all(isinstance(v, int) for v in sizes):
            geometry = (sizes[0], sizes[1])

    table = PARAMETERS[command]
    params_data = data.get("params", {})
    params: Dict[str, Any] = {}
    if not isinstance(params_data, dict):
        problems.append(f"'params': expected object, got {type(params_data).__name__}")
        params_data = {}
    _check_keys("params.", params_data, table, problems)
    for name, spec in table.items():
        if name in params_data and params_data[name] is not None:
            params[name] = _coerce(f"params.{name}", params_data[name], spec, problems)
        elif spec.required:
            problems.append(f"'params.{name}': required {_type_name(spec.kind)} parameter for '{command}' is missing")
        elif spec.default is not None:
            params[name] = list(spec.default) if isinstance(spec.default, list) else spec.default

    seed = data.get("seed")
    if seed is None:
        needs_seed = command in SEEDED_COMMANDS or params.get("fugacity_method") == "monte_carlo"
        if needs_seed:
            problems.append(f"'seed': required for command '{command}' (reproducibility)")
    elif not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed <= MAX_SEED:
        problems.append(f"'seed': expected integer in [0, 2^64), got {seed!r}")

    output = data.get("output", {})
    output_format, output_path = "json", None
    if not isinstance(output, dict):
        problems.append(f"'output': expected object, got {type(output).__name__}")
    else:
        _check_keys("output.", output, ("format", "path"), problems)
        output_format = output.get("format", "json")
        if output_format not in OUTPUT_FORMATS:
            problems.append(f"'output.format': expected one of {list(OUTPUT_FORMATS)}, got {output_format!r}")
        output_path = output.get("path")
        if output_path is not None and not isinstance(output_path, str):
            problems.append(f"'output.path': expected string, got {type(output_path).__name__}")

    workers = data.get("workers")
    if workers is not None and (not isinstance(workers, int) or isinstance(workers, bool) or workers < 1):
        problems.append(f"'workers': expected integer >= 1, got {workers!r}")

    if problems:
        logger.error(f"rejected {command} configuration with {len(problems)} problem(s)")
        raise ConfigError("invalid configuration: " + "; ".join(problems), module="cli_io")

    return RunConfig(
        command=command,
        geometry=geometry,
        params=params,
        seed=seed,
        output_format=output_format,
        output_path=output_path,
        workers=workers,
    )


def load_config(path: str) -> RunConfig:
    with open(path, "rb") as handle:
        return parse_config(handle.read())
