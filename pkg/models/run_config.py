"""
Run configuration for command-line experiments
"""
import os
from dataclasses import dataclass, field
from enum import Enum

from models.errors import ParameterError

OUTPUT_DIR_ENV = "FACESTAB_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "results"


class Command(Enum):
    """Commands understood by the CLI"""
    PROJECT = "project"
    ENTROPIC = "entropic"
    VERIFY_BOUNDS = "verify-bounds"
    SECOND_ORDER = "second-order"
    GAP_STATS = "gap-stats"
    DEGENERATE = "degenerate"
    FW_CERTIFY = "fw-certify"
    LEAKAGE_RATE = "leakage-rate"
    PRESCRIBE = "prescribe"
    DECODE = "decode"
    SWEEP_SCALING = "sweep-scaling"
    SWEEP_ABLATION = "sweep-ablation"


@dataclass(frozen=True)
class Param:
    """
    One command parameter: type tag, default and admissible range

    kind is one of int, float, str, bool, ints, floats, strs (the plural forms
    are comma-separated lists on the command line).
    """
    kind: str
    default: object
    minimum: float = None
    maximum: float = None
    choices: tuple = None

    def coerce(self, name, value):
        """Convert a raw value (string, number or list) and check its range"""
        try:
            if self.kind in ("ints", "floats", "strs"):
                items = value.split(",") if isinstance(value, str) else list(value)
                items = [item.strip() if isinstance(item, str) else item for item in items]
                items = [item for item in items if item != ""]
                if not items:
                    raise ParameterError(name, "needs at least one value")
                cast = {"ints": int, "floats": float, "strs": str}[self.kind]
                result = [cast(item) for item in items]
                for item in result:
                    self._check(name, item)
                return result
            if self.kind == "bool":
                if isinstance(value, str):
                    lowered = value.strip().lower()
                    if lowered not in ("1", "0", "true", "false", "yes", "no"):
                        raise ParameterError(name, f"expected a boolean, got '{value}'")
                    return lowered in ("1", "true", "yes")
                return bool(value)
            result = {"int": int, "float": float, "str": str}[self.kind](value)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ParameterError):
                raise
            raise ParameterError(name, f"expected {self.kind}, got '{value}'") from exc
        self._check(name, result)
        return result

    def _check(self, name, value):
        if self.choices is not None and value not in self.choices:
            raise ParameterError(name, f"'{value}' is not one of {', '.join(map(str, self.choices))}")
        if self.minimum is not None and value < self.minimum:
            raise ParameterError(name, f"must be >= {self.minimum}, got {value}")
        if self.maximum is not None and value > self.maximum:
            raise ParameterError(name, f"must be <= {self.maximum}, got {value}")


_SOLVERS = ("eg", "fw", "exponentiated-gradient", "frank-wolfe")
_OBJECTIVES = ("quadratic", "linear")

_PLANTED = {
    'instances': Param("int", 20, minimum=1),
    'm': Param("int", 24, minimum=2),
    'd': Param("int", 6, minimum=1),
    'k': Param("int", 3, minimum=1),
    'gap': Param("float", 0.5, minimum=1e-6),
    'spread': Param("float", 1.0, minimum=0.0),
    'offset': Param("float", 1.0, minimum=1e-6),
}

_DECODE_COMMON = {
    'd': Param("int", 64, minimum=1),
    'd_v': Param("int", 64, minimum=1),
    'block_size': Param("int", 16, minimum=1),
    'epsilon': Param("float", 0.1, minimum=1e-12),
    'objective': Param("str", "quadratic", choices=_OBJECTIVES),
    'gap': Param("float", 0.5, minimum=0.0),
    'memory_budget': Param("int", 2 ** 27, minimum=1),
    'adaptive_epsilon': Param("bool", False),
    'target_leakage': Param("float", 1e-6, minimum=1e-300),
}

PARAMETER_SCHEMA = {
    Command.PROJECT: {
        'kind': Param("str", "gaussian", choices=("gaussian", "planted-face", "tie")),
        'm': Param("int", 8, minimum=1),
        'd': Param("int", 3, minimum=1),
        'scale': Param("float", 2.0, minimum=0.0),
        'tol': Param("float", 1e-12, minimum=1e-300),
        'query': Param("floats", None),
        'oracle': Param("bool", True),
    },
    Command.ENTROPIC: {
        'kind': Param("str", "gaussian", choices=("gaussian", "planted-face", "tie")),
        'm': Param("int", 8, minimum=1),
        'd': Param("int", 3, minimum=1),
        'scale': Param("float", 2.0, minimum=0.0),
        'epsilon': Param("float", 0.1, minimum=1e-300),
        'solver': Param("str", "eg", choices=_SOLVERS),
        'max_iters': Param("int", 100000, minimum=1),
        'gap_tol': Param("float", 1e-10, minimum=1e-300),
        'query': Param("floats", None),
    },
    Command.VERIFY_BOUNDS: dict(_PLANTED, eps_fractions=Param("floats", [8.0, 16.0, 32.0], minimum=1.0)),
    Command.SECOND_ORDER: dict(
        _PLANTED,
        instances=Param("int", 10, minimum=1),
        m=Param("int", 16, minimum=2),
        k=Param("int", 4, minimum=1),
        gap=Param("float", 1.0, minimum=1e-6),
        epsilons=Param("floats", [0.01, 0.005, 0.0025], minimum=1e-12),
        symmetric=Param("bool", False),
    ),
    Command.GAP_STATS: {
        'm': Param("ints", [4096], minimum=2),
        'trials': Param("int", 100000, minimum=100),
    },
    Command.DEGENERATE: {
        'epsilons': Param("floats", [1.0, 0.1, 0.01, 0.001, 1e-4, 1e-5], minimum=1e-300),
        'deltas': Param("floats", [1e-3, 1e-2], minimum=0.0),
    },
    Command.FW_CERTIFY: dict(
        _PLANTED,
        eps_fraction=Param("float", 8.0, minimum=1.0),
        gap_tol=Param("float", 1e-6, minimum=1e-300),
        screen_initial=Param("int", 4, minimum=1),
    ),
    Command.LEAKAGE_RATE: dict(_PLANTED, eps_fractions=Param("floats", [4.0, 8.0, 16.0, 32.0], minimum=1.0)),
    Command.PRESCRIBE: dict(
        _PLANTED,
        instances=Param("int", 100, minimum=1),
        eta=Param("float", 0.05, minimum=1e-300),
        required_rate=Param("float", 0.95, minimum=0.0, maximum=1.0),
    ),
    Command.DECODE: dict(
        _DECODE_COMMON,
        cache=Param("str", "planted", choices=("planted", "tie", "adversarial")),
        context=Param("int", 4096, minimum=1),
        pages=Param("int", 8, minimum=1),
        candidates=Param("int", 32, minimum=1),
        solver=Param("str", "eg", choices=_SOLVERS),
        solver_iters=Param("int", 2000, minimum=1),
        tau=Param("float", -1.0),
        policy=Param("str", "fallback-to-dense", choices=("fallback-to-dense", "cap-compute")),
        query=Param("floats", None),
        export_cache=Param("bool", False),
    ),
    Command.SWEEP_SCALING: dict(
        _DECODE_COMMON,
        contexts=Param("ints", [8192, 16384, 32768, 65536, 131072], minimum=1),
        pages=Param("int", 64, minimum=1),
        candidates=Param("int", 128, minimum=1),
        solver=Param("str", "eg", choices=_SOLVERS),
        solver_iters=Param("int", 2000, minimum=1),
    ),
    Command.SWEEP_ABLATION: dict(
        _DECODE_COMMON,
        context=Param("int", 65536, minimum=1),
        pages=Param("ints", [32, 64, 96], minimum=1),
        candidates=Param("ints", [64, 128, 192], minimum=1),
        solvers=Param("strs", ["eg", "fw"], choices=_SOLVERS),
        solver_iters=Param("ints", [2000], minimum=1),
    ),
}

PRESETS = {
    'low-iters': {
        Command.SWEEP_ABLATION: {
            'pages': [8, 16, 32, 64],
            'candidates': [32, 64, 128, 256],
            'solver_iters': [2, 4, 6],
        },
    },
}


def resolve_parameters(command, overrides=None, preset=None):
    """
    Defaults, then preset values, then overrides, each validated against the command schema

    Raises:
        ParameterError: Unknown key (listing the valid keys) or an out-of-range value
    """
    command = Command(command)
    schema = PARAMETER_SCHEMA[command]
    resolved = {name: param.default for name, param in schema.items()}
    layers = []
    if preset is not None:
        if preset not in PRESETS:
            raise ParameterError("preset", f"unknown preset '{preset}' (valid: {', '.join(PRESETS)})")
        layers.append(PRESETS[preset].get(command, {}))
    layers.append(overrides or {})
    for layer in layers:
        for raw_name, value in layer.items():
            name = raw_name.replace("-", "_")
            if name not in schema:
                valid = ", ".join(sorted(schema))
                raise ParameterError(name, f"unknown parameter for '{command.value}' (valid: {valid})")
            resolved[name] = None if value is None else schema[name].coerce(name, value)
    return resolved


def default_output_dir():
    """Output directory from the environment, falling back to ./results"""
    return os.environ.get(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR


@dataclass
class RunConfig:
    """
    One CLI invocation: command, seed, paths and validated parameter overrides

    parameters holds the fully resolved values (defaults filled in) after construction.
    """
    command: Command
    seed: int = 0
    input_path: str = None
    output_dir: str = field(default_factory=default_output_dir)
    parameters: dict = field(default_factory=dict)
    threads: int = 1
    preset: str = None

    def __post_init__(self):
        try:
            self.command = Command(self.command)
        except ValueError:
            valid = ", ".join(c.value for c in Command)
            raise ParameterError("command", f"unknown command '{self.command}' (valid: {valid})")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ParameterError("seed", "must be a 64-bit unsigned integer")
        self.seed = int(self.seed)
        if int(self.threads) < 1:
            raise ParameterError("threads", "must be at least 1")
        self.threads = int(self.threads)
        self.parameters = resolve_parameters(self.command, self.parameters, self.preset)

    def to_dict(self):
        return {
            'command': self.command.value,
            'seed': self.seed,
            'input_path': self.input_path,
            'output_dir': self.output_dir,
            'parameters': self.parameters,
            'threads': self.threads,
            'preset': self.preset,
        }
