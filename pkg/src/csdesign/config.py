"""Experiment configuration loaded from TOML."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .criteria import CRITERION_NAMES
from .linalg import Mode
from .pipeline import DEFAULT_EPSILON_GRID

DATA_DIR = Path(__file__).resolve().parent / "data"
#: criterion name used for the unoptimized random starting matrix
RANDOM = "random"


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    patch_side: int = 8
    measurement_counts: list = field(default_factory=lambda: [16, 24, 32])
    criteria: list = field(default_factory=lambda: [RANDOM, "coherence", "bicoherence", "wcoherence"])
    matrix_mode: Mode = Mode.BINARY
    sigma2: float = 4.0
    delta: float = 1e-3
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    train_dir: Path = DATA_DIR / "train"
    test_dir: Path = DATA_DIR / "test"
    output_dir: Path = Path("results")
    epsilon_grid: list = field(default_factory=lambda: list(DEFAULT_EPSILON_GRID))
    #: parameter s of the l1linf criterion, if used
    s: float | None = None
    #: validation patches drawn from the training set for epsilon calibration
    validation_patches: int = 300
    #: largest tolerated fraction of non-converged patch solves before exit code 4
    failure_budget: float = 0.05

    def __post_init__(self):
        try:
            self.matrix_mode = Mode(self.matrix_mode)
        except ValueError:
            raise ConfigError(f"matrix_mode must be 'binary' or 'continuous', not {self.matrix_mode!r}")
        for name in ("train_dir", "test_dir", "output_dir"):
            setattr(self, name, Path(getattr(self, name)))
        self.measurement_counts = [int(m) for m in self.measurement_counts]
        self.seeds = [int(s) for s in self.seeds]
        self.criteria = [str(c) for c in self.criteria]
        self.epsilon_grid = [float(c) for c in self.epsilon_grid]
        self.validate()

    @property
    def dim(self) -> int:
        return self.patch_side ** 2

    def validate(self) -> None:
        if self.patch_side < 1:
            raise ConfigError("patch_side must be positive")
        if not self.measurement_counts:
            raise ConfigError("measurement_counts is empty")
        for m in self.measurement_counts:
            if not 0 < m < self.dim:
                raise ConfigError(f"measurement count {m} must lie in (0, {self.dim})")
        if not self.seeds:
            raise ConfigError("seeds is empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds contain duplicates")
        if any(s < 0 for s in self.seeds):
            raise ConfigError("seeds must be nonnegative")
        if not self.criteria or len(set(self.criteria)) != len(self.criteria):
            raise ConfigError("criteria must be a nonempty list without duplicates")
        for c in self.criteria:
            if c != RANDOM and c not in CRITERION_NAMES:
                raise ConfigError(f"unknown criterion {c!r}; choose from {', '.join(CRITERION_NAMES)}")
        if "l1linf" in self.criteria and self.s is None:
            raise ConfigError("criterion l1linf needs the parameter s")
        if self.sigma2 < 0:
            raise ConfigError("sigma2 must be nonnegative")
        if not self.delta > 0:
            raise ConfigError("delta must be positive")
        if not self.epsilon_grid or any(c < 0 for c in self.epsilon_grid):
            raise ConfigError("epsilon_grid must be a nonempty list of nonnegative multipliers")
        if self.validation_patches < 1:
            raise ConfigError("validation_patches must be positive")

    def with_overrides(self, **values) -> ExperimentConfig:
        clean = {k: v for k, v in values.items() if v is not None}
        return replace(self, **clean)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["matrix_mode"] = self.matrix_mode.value
        for name in ("train_dir", "test_dir", "output_dir"):
            out[name] = str(out[name])
        return out


def config_from_dict(values: dict, base_dir: Path | None = None) -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    values = dict(values)
    if base_dir is not None:
        # relative paths in a config file are resolved against its directory
        for name in ("train_dir", "test_dir", "output_dir"):
            if name in values and not Path(values[name]).is_absolute():
                values[name] = base_dir / values[name]
    try:
        return ExperimentConfig(**values)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            values = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return config_from_dict(values, path.parent)
