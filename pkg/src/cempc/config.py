"""Run configuration: nested dataclasses loaded from and written to YAML."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
import yaml

from .bounds import VARIANTS, BoundVariants


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


@dataclass
class ModelConfig:
    kind: str = "tanh"  # tanh | linear
    theta_hat: Optional[list] = None  # tanh: [w1, w2, b]; linear: derived from A, B
    A: Optional[list] = None
    B: Optional[list] = None


@dataclass
class CostConfig:
    Q: Optional[list] = None  # default identity
    R: Optional[list] = None


@dataclass
class ConstraintConfig:
    kind: str = "box"  # box | polytope
    lo: Optional[list] = field(default_factory=lambda: [-0.05])
    hi: Optional[list] = field(default_factory=lambda: [0.05])
    E: Optional[list] = None


@dataclass
class SolverConfig:
    method: str = "auto"  # auto | pg | qp
    tol: float = 1e-8
    max_iters: int = 5000


@dataclass
class EstimationConfig:
    N_max: int = 25
    omega_radius: Optional[float] = None  # default: r_LQ for linear models, 0.1 * x0_radius otherwise
    gamma_mode: str = "uniform"  # uniform | per-horizon
    lipschitz_eps: Optional[float] = None  # evaluate uniform Lipschitz constants here (default: epsilon)
    eds_pairs: int = 48
    gamma_states: int = 48
    eta_samples: int = 48
    lipschitz_budget: int = 2048
    lq_thetas: int = 256
    r0_budget: int = 512


@dataclass
class ConstantsOverride:
    C_K: Optional[float] = None
    rho_K: Optional[float] = None
    gamma_bar: Optional[float] = None
    nu: Optional[float] = None
    eta_bar: Optional[float] = None


@dataclass
class SweepConfig:
    eps_levels: list = field(default_factory=lambda: [i * 1e-3 for i in range(1, 11)])
    x_norms: list = field(default_factory=lambda: [0.25, 0.5, 0.75, 1.0, 1.25, math.sqrt(2.0)])
    n_scenarios: int = 100
    N_long: int = 60
    T: int = 500
    stop_tol: float = 1e-6
    workers: int = 1
    crn: bool = True


@dataclass
class VariantConfig:
    pi_alpha1: str = "printed"
    zeta_beta1: str = "printed"
    beta_star_pi2: str = "corrected"

    def to_variants(self) -> BoundVariants:
        return BoundVariants(self.pi_alpha1, self.zeta_beta1, self.beta_star_pi2)


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    cost: CostConfig = field(default_factory=CostConfig)
    constraint: ConstraintConfig = field(default_factory=ConstraintConfig)
    epsilon: float = 1e-3
    horizon: int = 10
    horizon_range: list = field(default_factory=lambda: [10, 25])
    x0_radius: float = math.sqrt(2.0)
    solver: SolverConfig = field(default_factory=SolverConfig)
    estimation: EstimationConfig = field(default_factory=EstimationConfig)
    constants: ConstantsOverride = field(default_factory=ConstantsOverride)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    variants: VariantConfig = field(default_factory=VariantConfig)
    seed: int = 0
    output_dir: str = "results"


# ---------------------------------------------------------------------------


def _build(cls, data: Any, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or '<root>'}: expected a mapping, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"{path + '.' if path else ''}{sorted(unknown)[0]}: unknown field")
    kwargs = {}
    for name, f in fields.items():
        if name not in data:
            continue
        sub = f"{path}.{name}" if path else name
        val = data[name]
        target = _nested_type(cls, name)
        kwargs[name] = _build(target, val, sub) if target is not None else _coerce(val, f, sub)
    return cls(**kwargs)


_NESTED = {
    "model": ModelConfig,
    "cost": CostConfig,
    "constraint": ConstraintConfig,
    "solver": SolverConfig,
    "estimation": EstimationConfig,
    "constants": ConstantsOverride,
    "sweep": SweepConfig,
    "variants": VariantConfig,
}


def _nested_type(cls, name):
    return _NESTED.get(name) if cls is RunConfig else None


def _coerce(val, f, path):
    default = f.default if f.default is not dataclasses.MISSING else (
        f.default_factory() if f.default_factory is not dataclasses.MISSING else None
    )
    if val is None:
        return None
    if isinstance(default, bool):
        if not isinstance(val, bool):
            raise ConfigError(f"{path}: expected a boolean")
        return val
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(f"{path}: expected an integer")
        return val
    if isinstance(default, float):
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(f"{path}: expected a number")
        return float(val)
    return val


def from_dict(data: dict) -> RunConfig:
    cfg = _build(RunConfig, data or {}, "")
    validate(cfg)
    return cfg


def to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def load(path) -> RunConfig:
    with open(path) as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"<root>: not valid YAML ({exc})") from exc
    return from_dict(data or {})


def dump(cfg: RunConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)


def save(cfg: RunConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(dump(cfg))


def config_hash(cfg: RunConfig) -> str:
    blob = json.dumps(to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _matrix(val, path, shape=None):
    try:
        M = np.atleast_2d(np.asarray(val, dtype=float))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: not a numeric matrix") from exc
    if M.ndim != 2 or (shape is not None and M.shape != shape):
        raise ConfigError(f"{path}: expected shape {shape}, got {M.shape}")
    return M


def dimensions(cfg: RunConfig) -> tuple[int, int]:
    """``(n, m)`` implied by the model section."""
    if cfg.model.kind == "tanh":
        return 2, 1
    if cfg.model.A is None or cfg.model.B is None:
        raise ConfigError("model.A: linear models need A and B")
    A = _matrix(cfg.model.A, "model.A")
    n = A.shape[0]
    B = _matrix(cfg.model.B, "model.B")
    if A.shape != (n, n):
        raise ConfigError(f"model.A: must be square, got {A.shape}")
    if B.shape[0] != n:
        raise ConfigError(f"model.B: expected {n} rows, got {B.shape[0]}")
    return n, B.shape[1]


def validate(cfg: RunConfig) -> None:
    if cfg.model.kind not in ("tanh", "linear"):
        raise ConfigError(f"model.kind: unknown model {cfg.model.kind!r}")
    n, m = dimensions(cfg)
    if cfg.model.kind == "tanh" and cfg.model.theta_hat is not None and len(cfg.model.theta_hat) != 3:
        raise ConfigError("model.theta_hat: the tanh model has three parameters")
    if cfg.cost.Q is not None:
        _matrix(cfg.cost.Q, "cost.Q", (n, n))
    if cfg.cost.R is not None:
        _matrix(cfg.cost.R, "cost.R", (m, m))
    c = cfg.constraint
    if c.kind == "box":
        if c.lo is None or c.hi is None or len(c.lo) != m or len(c.hi) != m:
            raise ConfigError(f"constraint.lo: box bounds need {m} entries each")
        if any(lo >= 0 for lo in c.lo) or any(hi <= 0 for hi in c.hi):
            raise ConfigError("constraint.lo: box must satisfy lo < 0 < hi")
    elif c.kind == "polytope":
        if c.E is None:
            raise ConfigError("constraint.E: polytope needs E")
        E = _matrix(c.E, "constraint.E")
        if E.shape[1] != m:
            raise ConfigError(f"constraint.E: expected {m} columns, got {E.shape[1]}")
    else:
        raise ConfigError(f"constraint.kind: unknown kind {c.kind!r}")
    if not (isinstance(cfg.epsilon, float) and cfg.epsilon >= 0):
        raise ConfigError("epsilon: must be a nonnegative number")
    if cfg.horizon < 1:
        raise ConfigError("horizon: must be >= 1")
    hr = cfg.horizon_range
    if not (isinstance(hr, list) and len(hr) == 2 and all(isinstance(h, int) for h in hr) and 1 <= hr[0] <= hr[1]):
        raise ConfigError("horizon_range: expected [lo, hi] with 1 <= lo <= hi")
    if cfg.solver.method not in ("auto", "pg", "qp"):
        raise ConfigError(f"solver.method: unknown method {cfg.solver.method!r}")
    if cfg.solver.method == "qp" and cfg.model.kind != "linear":
        raise ConfigError("solver.method: qp needs a linear model")
    if cfg.estimation.gamma_mode not in ("uniform", "per-horizon"):
        raise ConfigError(f"estimation.gamma_mode: unknown mode {cfg.estimation.gamma_mode!r}")
    if cfg.estimation.N_max < hr[1]:
        raise ConfigError("estimation.N_max: must cover the horizon range")
    for name in ("pi_alpha1", "zeta_beta1", "beta_star_pi2"):
        if getattr(cfg.variants, name) not in VARIANTS:
            raise ConfigError(f"variants.{name}: expected one of {VARIANTS}")
    s = cfg.sweep
    if s.n_scenarios < 1:
        raise ConfigError("sweep.n_scenarios: must be >= 1")
    if any((not isinstance(e, (int, float))) or e < 0 for e in s.eps_levels):
        raise ConfigError("sweep.eps_levels: levels must be nonnegative numbers")
    if s.workers < 1:
        raise ConfigError("sweep.workers: must be >= 1")
    if not isinstance(cfg.seed, int) or cfg.seed < 0:
        raise ConfigError("seed: must be a nonnegative integer")


def lq_default() -> RunConfig:
    """A small constrained LQ instance used as the linear reference configuration."""
    return from_dict(
        {
            "model": {"kind": "linear", "A": [[0.6, 0.3], [-0.2, 0.5]], "B": [[0.0], [1.0]]},
            "constraint": {"kind": "box", "lo": [-0.2], "hi": [0.2]},
            "epsilon": 1e-3,
            "horizon": 5,
            "horizon_range": [2, 10],
            "x0_radius": 1.0,
            "estimation": {"N_max": 10},
            "sweep": {"eps_levels": [0.0, 5e-4, 1e-3, 2e-3], "n_scenarios": 20, "N_long": 40, "x_norms": [0.25, 0.5, 1.0]},
        }
    )
