"""Stability and suboptimality bounds for certainty-equivalence MPC.

Every constant is a plain function of scalar inputs so that the whole
pipeline can be audited (and regenerated by an independent oracle in the
tests). :func:`build_report` chains them for one horizon and mismatch level.

Three coefficients have alternate readings, selected by :class:`BoundVariants`:

``pi_alpha1``
    ``printed`` uses ``C`` in the input term of the first-order alpha
    coefficient; ``corrected`` uses ``C**2``, matching the second-order one.
``zeta_beta1``
    ``printed`` repeats ``L_lx/sqrt(m_lx)`` in the second term of
    ``zeta_beta1``; ``corrected`` uses ``L_lu/sqrt(m_lu)``.
``beta_star_pi2``
    ``printed`` multiplies ``pi*_2`` by ``lstar(x)``; ``corrected`` drops the
    factor so that ``beta*`` is a function of the mismatch alone.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .cost import SeparableCost, error_matching_constant

MARGINAL_TOL = 1e-12
VARIANTS = ("printed", "corrected")


class BoundError(ValueError):
    pass


class StabilityError(BoundError):
    """Raised when the sufficient stability condition fails."""


# ---------------------------------------------------------------------------
# sensitivity decay


@dataclass(frozen=True)
class SpectrumBounds:
    sigma_H_upper: float
    sigma_R_upper: float
    sigma_H_lower: float

    def __post_init__(self):
        if min(self.sigma_H_upper, self.sigma_R_upper, self.sigma_H_lower) <= 0:
            raise BoundError("singular-value bounds must be positive")
        if self.sigma_H_lower > self.sigma_H_upper:
            raise BoundError("lower Hessian bound exceeds the upper bound")


@dataclass(frozen=True)
class EdsConstants:
    C: float
    rho: float
    source: str = "spectrum"

    def __post_init__(self):
        if not (self.C > 0 and math.isfinite(self.C)):
            raise BoundError("C must be positive and finite")
        if not (0.0 <= self.rho < 1.0):
            raise BoundError("rho must lie in [0, 1)")


def eds_constants(s: SpectrumBounds) -> EdsConstants:
    hu, ru, hl = s.sigma_H_upper, s.sigma_R_upper, s.sigma_H_lower
    C = math.sqrt(hu * ru / hl**2)
    rho = ((hu**2 - hl**2) / (hu**2 + hl**2)) ** 0.125
    return EdsConstants(C, rho, "spectrum")


def lambda_factor(N: int, k: int, rho: float) -> float:
    """``sum_{i=0}^{k} rho^i + sum_{i=1}^{N-k-1} rho^i``."""
    if not (0 <= k <= N - 1):
        raise BoundError(f"stage index {k} outside 0..{N - 1}")
    if not (0.0 <= rho < 1.0):
        raise BoundError("rho must lie in [0, 1)")
    return math.fsum(rho**i for i in range(k + 1)) + math.fsum(rho**i for i in range(1, N - k))


def gamma_sequence(N: int, L_fx: float, L_fu: float, eds: EdsConstants) -> np.ndarray:
    """Open-loop state perturbation gains ``Gamma_0..Gamma_N`` (``Gamma_0 = 1``)."""
    C, rho = eds.C, eds.rho
    out = np.empty(N + 1)
    for k in range(N + 1):
        tail = math.fsum(L_fx**i * rho ** (k - i) for i in range(k))
        out[k] = L_fx**k + L_fu * C * tail
    return out


def p_growth(N: int, L_fx: float, L_fu: float) -> float:
    """``P = sum_k L_fu^2 (sum_{i<k} L_fx^i)^2 + sum_k sum_{i<k} L_fx^{2i}``, ``k = 1..N``."""
    if N < 1:
        raise BoundError("N must be >= 1")
    first = math.fsum(L_fu**2 * math.fsum(L_fx**i for i in range(k)) ** 2 for k in range(1, N + 1))
    second = math.fsum(math.fsum(L_fx ** (2 * i) for i in range(k)) for k in range(1, N + 1))
    return first + second


# ---------------------------------------------------------------------------
# nominal stability


@dataclass(frozen=True)
class ControllabilityConstants:
    gamma_N: float
    gamma_bar: float
    nu: float

    def __post_init__(self):
        if not (0.0 < self.gamma_N <= self.gamma_bar < math.inf):
            raise BoundError("need 0 < gamma_N <= gamma_bar < inf")
        if not self.nu >= 0.0:
            raise BoundError("nu must be >= 0 (inf allowed)")


def nominal_stability(N: int, c: ControllabilityConstants) -> tuple[float, int]:
    """Decrease deficit ``eps_N`` and the minimal horizon (clamped to >= 1)."""
    if N < 1:
        raise BoundError("N must be >= 1")
    g, gN, nu = c.gamma_bar, c.gamma_N, c.nu
    if math.isinf(nu):
        if N == 1:
            raise BoundError("N = 1 with nu = inf divides by zero")
        return (1 + g) * gN / (N - 1), max(1, 1 + math.ceil((1 + g) * gN))
    eps = (1 + g) * gN * nu / ((N - 1) * nu + N + g)
    floor = 1 + math.ceil(((1 + g) * gN * nu - g - 1) / (1 + nu))
    return eps, max(1, floor)


# ---------------------------------------------------------------------------
# variants and quadratic-form evaluators


@dataclass(frozen=True)
class BoundVariants:
    pi_alpha1: str = "printed"
    zeta_beta1: str = "printed"
    beta_star_pi2: str = "corrected"

    def __post_init__(self):
        for name, val in asdict(self).items():
            if val not in VARIANTS:
                raise BoundError(f"variant {name} must be one of {VARIANTS}, got {val!r}")


def _identity(d):
    return d


@dataclass(frozen=True)
class AlphaStar:
    pi2: float
    pi1: float
    L_d: Callable = _identity

    def __call__(self, delta: float) -> float:
        ld = float(self.L_d(delta))
        return self.pi2 * ld * ld + self.pi1 * ld


def alpha_star(
    cost: SeparableCost,
    Gamma: Sequence[float],
    eds: EdsConstants,
    gamma_bar: float,
    eps_N: float,
    L_d: Callable = _identity,
    c_m: Optional[float] = None,
    variant: str = "printed",
) -> AlphaStar:
    """Coefficients of the one-step state perturbation bound.

    ``Gamma`` holds ``Gamma_0..Gamma_N``; ``c_m`` defaults to the cost's
    error-matching constant.
    """
    if variant not in VARIANTS:
        raise BoundError(f"unknown variant {variant!r}")
    c_m = error_matching_constant(cost) if c_m is None else c_m
    C, rho = eds.C, eds.rho
    s = math.fsum(float(g) ** 2 for g in Gamma)
    pi2 = c_m * (cost.L_lx / 2 * s + cost.L_lu * C**2 / (2 * (1 - rho**2)))
    Cin = C if variant == "printed" else C**2
    pi1 = math.sqrt(
        2 * c_m * (gamma_bar + eps_N) * (cost.L_lx**2 / cost.m_lx * s + cost.L_lu**2 * Cin / (cost.m_lu * (1 - rho**2)))
    )
    return AlphaStar(pi2, pi1, L_d)


def omega_bar(delta: float, d_x: float, inside: bool, eds: EdsConstants, R0: Optional[float] = None) -> float:
    """Scalable input perturbation bound.

    ``inside`` selects the branch for states in the ball of radius ``R0``.
    """
    C, rho = eds.C, eds.rho
    if inside:
        return 2 * C * min(delta / (1 - rho), d_x)
    if R0 is None or R0 <= 0:
        raise BoundError("outside-ball branch needs R0 > 0")
    return 2 * C / ((1 - rho) * R0) * delta * d_x


@dataclass(frozen=True)
class BetaGeneral:
    pi2: float
    pi1: float
    zeta2: float
    zeta1: float
    d_x: float
    inside: bool
    eds: EdsConstants
    R0: Optional[float]
    L_d: Callable = _identity

    def omega(self, delta: float) -> float:
        return omega_bar(delta, self.d_x, self.inside, self.eds, self.R0)

    def __call__(self, delta: float) -> float:
        ld = float(self.L_d(delta))
        w = self.omega(delta)
        return self.pi2 * ld * ld + self.pi1 * ld + self.zeta2 * w * w + self.zeta1 * w


def beta_general(
    N: int,
    x,
    cost: SeparableCost,
    P: float,
    gamma_bar: float,
    eds: EdsConstants,
    R0: Optional[float],
    L_d: Callable = _identity,
    c_m: Optional[float] = None,
    variant: str = "printed",
) -> BetaGeneral:
    """Parameter perturbation bound on the value at state ``x``.

    The omega branch follows ``||x||`` against ``R0`` (``R0 = None`` or
    ``0`` means every state is treated as inside).
    """
    if variant not in VARIANTS:
        raise BoundError(f"unknown variant {variant!r}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    c_m = error_matching_constant(cost) if c_m is None else c_m
    ls = cost.lx(x)
    d_x = float(np.linalg.norm(x))
    Llx, Llu, mlx, mlu = cost.L_lx, cost.L_lu, cost.m_lx, cost.m_lu
    pi2 = Llx / 2 * gamma_bar * P * c_m * ls
    pi1 = math.sqrt(2 * c_m * P / mlx) * Llx * gamma_bar * ls
    zeta2 = 0.5 * (Llx * P + Llu * N)
    second = Llx / math.sqrt(mlx) if variant == "printed" else Llu / math.sqrt(mlu)
    zeta1 = math.sqrt(2 * gamma_bar * ls) * (Llx / math.sqrt(mlx) * math.sqrt(P) + second * math.sqrt(N))
    inside = not R0 or d_x <= R0
    return BetaGeneral(pi2, pi1, zeta2, zeta1, d_x, inside, eds, R0, L_d)


def eta_bar_star(eds: EdsConstants, omega_radius: float, eta_bar: float) -> float:
    if omega_radius <= 0:
        raise BoundError("the local region radius must be positive")
    return max(2 * eds.C / ((1 - eds.rho) * omega_radius), eta_bar)


@dataclass(frozen=True)
class BetaStar:
    pi2: float
    pi1: float
    zeta2: float
    zeta1: float
    L_d: Callable = _identity

    def __call__(self, delta: float) -> float:
        ld = float(self.L_d(delta))
        return self.pi2 * ld * ld + self.pi1 * ld + self.zeta2 * delta * delta + self.zeta1 * delta


def beta_star(
    N: int,
    cost: SeparableCost,
    P: float,
    gamma_bar: float,
    eta_star: float,
    L_d: Callable = _identity,
    c_m: Optional[float] = None,
    variant: str = "corrected",
    lstar_x: Optional[float] = None,
) -> BetaStar:
    """Relative parameter perturbation bound (multiplies ``V_N(x; theta)``).

    The ``printed`` variant needs ``lstar_x``.
    """
    if variant not in VARIANTS:
        raise BoundError(f"unknown variant {variant!r}")
    c_m = error_matching_constant(cost) if c_m is None else c_m
    Llx, Llu, mlx, mlu = cost.L_lx, cost.L_lu, cost.m_lx, cost.m_lu
    if variant == "printed":
        if lstar_x is None:
            raise BoundError("the printed variant needs lstar(x)")
        scale = lstar_x
    else:
        scale = 1.0
    pi2 = Llx / 2 * gamma_bar * P * c_m * scale
    pi1 = math.sqrt(2 * c_m * P * gamma_bar / mlx) * Llx
    zeta2 = eta_star**2 * (Llx / mlx * P + Llu / mlx * N)
    zeta1 = 2 * eta_star * (Llx / mlx * math.sqrt(P) + Llu / math.sqrt(mlx * mlu) * math.sqrt(N))
    return BetaStar(pi2, pi1, zeta2, zeta1, L_d)


# ---------------------------------------------------------------------------
# stability and performance


def stability_check(eps_N: float, alpha: Callable, epsilon: float) -> tuple[bool, float]:
    if epsilon < 0:
        raise BoundError("epsilon must be >= 0")
    margin = 1.0 - eps_N - float(alpha(epsilon))
    return margin > 0.0, margin


def max_mismatch(eps_N: float, pi1: float, pi2: float, L_d_inverse: Callable = _identity) -> float:
    """Largest mismatch level keeping ``eps_N + alpha*(eps) < 1`` (supremum, not attained)."""
    if eps_N >= 1.0:
        raise BoundError(f"eps_N = {eps_N:.6g} >= 1: no mismatch level is certified")
    if pi2 == 0.0 and pi1 == 0.0:
        return math.inf
    if pi2 == 0.0:
        z = (1.0 - eps_N) / pi1
    else:
        # numerically stable root of pi2 z^2 + pi1 z - (1 - eps_N) = 0
        z = 2 * (1.0 - eps_N) / (pi1 + math.sqrt(pi1**2 + 4 * pi2 * (1.0 - eps_N)))
    return float(L_d_inverse(z))


def competitive_ratio(eps_N: float, alpha_eps: float, beta_star_eps: float, gamma_bar: float) -> float:
    den = 1.0 - (eps_N + alpha_eps)
    if den <= 0:
        raise StabilityError(f"stability margin {den:.6g} <= 0")
    return (1.0 + min(gamma_bar, beta_star_eps)) / den


def affine_bound(V_inf: float, lstar_x: float, eps_N: float, alpha_eps: float, beta_eps: float, gamma_bar: float) -> float:
    den = 1.0 - (eps_N + alpha_eps)
    if den <= 0:
        raise StabilityError(f"stability margin {den:.6g} <= 0")
    return (V_inf + min(gamma_bar * lstar_x, beta_eps)) / den


@dataclass(frozen=True)
class AsymptoticClass:
    name: str
    ratio: str
    alpha: str
    beta: str
    P: str


_CLASSES = {
    "contractive": AsymptoticClass(
        "contractive",
        "1 + O(1/N + N[L_d(eps) + L_d(eps)^2] + N eps [1 + L_d(eps)])",
        "O(L_d(delta))",
        "O(N (L_d(delta) + delta))",
        "O(N)",
    ),
    "marginal": AsymptoticClass(
        "marginal",
        "1 + O(1/N + N^3 L_d(eps) + N^3 L_d(eps)^2 + N^4 eps + N^4 eps L_d(eps))",
        "O(N L_d(delta))",
        "O(N^3 (L_d(delta) + delta))",
        "O(N^3)",
    ),
    "expansive": AsymptoticClass(
        "expansive",
        "1 + O(1/N + L^(2N) L_d(eps) + L^(2N) L_d(eps)^2 + L^(4N) eps + L^(4N) eps L_d(eps))",
        "O(L^(2N) L_d(delta))",
        "O(L^(2N) (L_d(delta) + delta))",
        "O(L^(2N))",
    ),
}


def asymptotic_class(L_fx: float) -> AsymptoticClass:
    if L_fx <= 0:
        raise BoundError("Lipschitz constant must be positive")
    if abs(L_fx - 1.0) <= MARGINAL_TOL:
        return _CLASSES["marginal"]
    return _CLASSES["contractive" if L_fx < 1.0 else "expansive"]


# ---------------------------------------------------------------------------
# end-to-end report


@dataclass
class BoundInputs:
    """Everything the bound chain needs besides ``N`` and ``epsilon``.

    ``gamma`` maps a horizon to ``gamma_N``; by default it returns
    ``gamma_bar``. ``L_fx``/``L_fu`` map a mismatch level to the uniform
    Lipschitz constants. ``R0`` is ``R(0; eps)`` (callable of eps or a
    number); ``omega_radius`` is the radius of the local region used for
    ``eta_bar_star``.
    """

    cost: SeparableCost
    eds: EdsConstants
    L_fx: Callable[[float], float]
    L_fu: Callable[[float], float]
    gamma_bar: float
    nu: float
    L_d: Callable = _identity
    L_d_inverse: Callable = _identity
    gamma: Optional[Callable[[int], float]] = None
    R0: Optional[Callable[[float], float]] = None
    eta_bar: float = 0.0
    omega_radius: Optional[float] = None
    variants: BoundVariants = field(default_factory=BoundVariants)
    lipschitz_eps: Optional[float] = None  # evaluate L_fx/L_fu here instead of at epsilon
    x_ref: Optional[np.ndarray] = None  # state used by the printed beta* variant
    meta: dict = field(default_factory=dict)

    def gamma_N(self, N: int) -> float:
        return self.gamma_bar if self.gamma is None else min(float(self.gamma(N)), self.gamma_bar)


@dataclass
class BoundReport:
    N: int
    epsilon: float
    variants: BoundVariants
    C_K: float
    rho_K: float
    eds_source: str
    gamma_N: float
    gamma_bar: float
    nu: float
    epsilon_N: float
    N_floor: int
    L_fx_bar: float
    L_fu_bar: float
    Gamma: np.ndarray
    P_value: float
    c_m: float
    alpha: AlphaStar
    beta_star: Optional[BetaStar]
    eta_bar: float
    eta_bar_star: Optional[float]
    R0: Optional[float]
    asymptotic: AsymptoticClass
    meta: dict = field(default_factory=dict)

    @property
    def alpha_eps(self) -> float:
        return self.alpha(self.epsilon)

    @property
    def beta_star_eps(self) -> Optional[float]:
        return None if self.beta_star is None else self.beta_star(self.epsilon)

    @property
    def stability_margin(self) -> float:
        return 1.0 - self.epsilon_N - self.alpha_eps

    @property
    def stable(self) -> bool:
        return self.stability_margin > 0.0

    @property
    def max_mismatch(self) -> float:
        if self.epsilon_N >= 1.0:
            return 0.0
        return max_mismatch(self.epsilon_N, self.alpha.pi1, self.alpha.pi2, self.meta.get("L_d_inverse", _identity))

    @property
    def ratio(self) -> float:
        """Competitive ratio bound, ``inf`` when the stability condition fails."""
        if not self.stable or self.beta_star is None:
            return math.inf
        return competitive_ratio(self.epsilon_N, self.alpha_eps, self.beta_star_eps, self.gamma_bar)

    def to_dict(self) -> dict:
        """Flat JSON-ready key/value document."""
        d = {
            "N": self.N,
            "epsilon": self.epsilon,
            "variant.pi_alpha1": self.variants.pi_alpha1,
            "variant.zeta_beta1": self.variants.zeta_beta1,
            "variant.beta_star_pi2": self.variants.beta_star_pi2,
            "eds.C_K": self.C_K,
            "eds.rho_K": self.rho_K,
            "eds.source": self.eds_source,
            "gamma_N": self.gamma_N,
            "gamma_bar": self.gamma_bar,
            "nu": self.nu,
            "epsilon_N": self.epsilon_N,
            "N_floor": self.N_floor,
            "L_fx_bar": self.L_fx_bar,
            "L_fu_bar": self.L_fu_bar,
            "P": self.P_value,
            "c_m": self.c_m,
            "pi_alpha_2": self.alpha.pi2,
            "pi_alpha_1": self.alpha.pi1,
            "alpha_star": self.alpha_eps,
            "eta_bar": self.eta_bar,
            "eta_bar_star": self.eta_bar_star,
            "R0": self.R0,
            "stability_margin": self.stability_margin,
            "stable": self.stable,
            "max_mismatch": self.max_mismatch,
            "ratio": self.ratio,
            "asymptotic_class": self.asymptotic.name,
            "asymptotic_ratio": self.asymptotic.ratio,
        }
        for k, g in enumerate(self.Gamma):
            d[f"Gamma.{k}"] = float(g)
        if self.beta_star is not None:
            d.update(
                {
                    "pi_star_beta_2": self.beta_star.pi2,
                    "pi_star_beta_1": self.beta_star.pi1,
                    "zeta_star_beta_2": self.beta_star.zeta2,
                    "zeta_star_beta_1": self.beta_star.zeta1,
                    "beta_star": self.beta_star_eps,
                }
            )
        for k, v in self.meta.items():
            if isinstance(v, (int, float, str, bool)) or v is None:
                d[f"meta.{k}"] = v
        return {k: _jsonable(v) for k, v in d.items()}


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    return v


def build_report(inputs: BoundInputs, N: int, epsilon: float) -> BoundReport:
    """Evaluate the full bound chain at horizon ``N`` and mismatch level ``epsilon``."""
    if epsilon < 0:
        raise BoundError("epsilon must be >= 0")
    lip_eps = epsilon if inputs.lipschitz_eps is None else inputs.lipschitz_eps
    Lx, Lu = float(inputs.L_fx(lip_eps)), float(inputs.L_fu(lip_eps))
    gN = inputs.gamma_N(N)
    eps_N, N_floor = nominal_stability(N, ControllabilityConstants(gN, inputs.gamma_bar, inputs.nu))
    Gamma = gamma_sequence(N, Lx, Lu, inputs.eds)
    P = p_growth(N, Lx, Lu)
    c_m = error_matching_constant(inputs.cost)
    alpha = alpha_star(inputs.cost, Gamma, inputs.eds, inputs.gamma_bar, eps_N, inputs.L_d, c_m, inputs.variants.pi_alpha1)
    eta_star = None
    bstar = None
    if inputs.omega_radius is not None:
        eta_star = eta_bar_star(inputs.eds, inputs.omega_radius, inputs.eta_bar)
        if inputs.variants.beta_star_pi2 == "corrected":
            bstar = beta_star(N, inputs.cost, P, inputs.gamma_bar, eta_star, inputs.L_d, c_m, "corrected")
        elif inputs.x_ref is not None:
            ls = inputs.cost.lx(np.atleast_1d(np.asarray(inputs.x_ref, dtype=float)))
            bstar = beta_star(N, inputs.cost, P, inputs.gamma_bar, eta_star, inputs.L_d, c_m, "printed", ls)
    R0 = None
    if inputs.R0 is not None:
        R0 = float(inputs.R0(epsilon)) if callable(inputs.R0) else float(inputs.R0)
    meta = dict(inputs.meta)
    meta["L_d_inverse"] = inputs.L_d_inverse
    return BoundReport(
        N=N,
        epsilon=float(epsilon),
        variants=inputs.variants,
        C_K=inputs.eds.C,
        rho_K=inputs.eds.rho,
        eds_source=inputs.eds.source,
        gamma_N=gN,
        gamma_bar=inputs.gamma_bar,
        nu=inputs.nu,
        epsilon_N=eps_N,
        N_floor=N_floor,
        L_fx_bar=Lx,
        L_fu_bar=Lu,
        Gamma=Gamma,
        P_value=P,
        c_m=c_m,
        alpha=alpha,
        beta_star=bstar,
        eta_bar=inputs.eta_bar,
        eta_bar_star=eta_star,
        R0=R0,
        asymptotic=asymptotic_class(Lx),
        meta=meta,
    )


def beta_general_from_report(report: BoundReport, inputs: BoundInputs, x) -> BetaGeneral:
    return beta_general(
        report.N, x, inputs.cost, report.P_value, report.gamma_bar, inputs.eds, report.R0,
        inputs.L_d, report.c_m, inputs.variants.zeta_beta1,
    )


def beta_star_from_report(report: BoundReport, inputs: BoundInputs, x=None) -> BetaStar:
    """``beta*`` honouring the selected variant (the printed one needs ``x``)."""
    if report.eta_bar_star is None:
        raise BoundError("beta* needs a local region radius")
    lstar = None if x is None else inputs.cost.lx(np.atleast_1d(np.asarray(x, dtype=float)))
    return beta_star(
        report.N, inputs.cost, report.P_value, report.gamma_bar, report.eta_bar_star, inputs.L_d,
        report.c_m, inputs.variants.beta_star_pi2, lstar,
    )


def performance_bounds(report: BoundReport, inputs: BoundInputs, x, V_inf: float) -> tuple[float, float]:
    """``(affine_bound, ratio)`` at state ``x``; raises when the stability condition fails."""
    if not report.stable:
        raise StabilityError(f"stability margin {report.stability_margin:.6g} <= 0")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    ls = inputs.cost.lx(x)
    beta = beta_general_from_report(report, inputs, x)(report.epsilon)
    affine = affine_bound(V_inf, ls, report.epsilon_N, report.alpha_eps, beta, report.gamma_bar)
    bstar = beta_star_from_report(report, inputs, x)(report.epsilon)
    ratio = competitive_ratio(report.epsilon_N, report.alpha_eps, bstar, report.gamma_bar)
    return affine, ratio


def horizon_table(inputs: BoundInputs, epsilon: float, N_range: Sequence[int]) -> list:
    """Rows ``(N, eps_N, alpha*, beta*, margin, R_N)`` for every ``N`` in ``N_range``.

    Horizons below their ``N_floor`` or failing the stability condition get
    ``R_N = inf``.
    """
    table = []
    for N in sorted(set(int(n) for n in N_range)):
        rep = build_report(inputs, N, epsilon)
        R = rep.ratio if N >= rep.N_floor else math.inf
        table.append((N, rep.epsilon_N, rep.alpha_eps, rep.beta_star_eps, rep.stability_margin, R))
    return table


def optimal_horizon(inputs: BoundInputs, epsilon: float, N_range: Sequence[int]) -> tuple[int, float, list]:
    """Minimize the ratio bound over ``N_range`` (ties go to the smaller ``N``).

    Returns ``(N_star, R_star, table)``; see :func:`horizon_table`.
    """
    table = horizon_table(inputs, epsilon, N_range)
    best = (None, math.inf)
    for row in table:
        if row[5] < best[1]:
            best = (row[0], row[5])
    if best[0] is None:
        raise StabilityError("no horizon in range satisfies the stability condition")
    return best[0], best[1], table


# ---------------------------------------------------------------------------
# linear-quadratic specialization


@dataclass
class LqConstants:
    e_ab: float
    eps_K: float
    r_LQ: float
    L_K: float
    omega_LQ: float
    eta_bar: float
    eta_bar_star: float
    samples: int

    def L_d(self, delta):
        return self.e_ab * delta

    def to_dict(self) -> dict:
        return {k: _jsonable(v) for k, v in asdict(self).items()}


def lq_specialize(model, cost: SeparableCost, constraint, N: int, spec, eds: EdsConstants, budget: int = 256, seed: int = 0) -> LqConstants:
    """Constants of the constrained LQ problem over sampled parameters on the sphere.

    ``eps_K`` is the smallest ``1 / (e_i Q^{-1} e_i')`` over sampled
    parameters, stages and rows ``e_i`` of ``E_u K_k``; the local region is
    the ball of radius ``sqrt(eps_K / lambda_min(Q))``. Inside it the
    problem is unconstrained, so ``eta_bar = L_K``.
    """
    from .ocp import lq_batch_matrices

    Q, R = cost.Q, cost.R
    if Q is None or R is None:
        raise BoundError("LQ specialization needs a quadratic cost")
    if np.linalg.matrix_rank(Q) < Q.shape[0]:
        raise BoundError("Q is singular")
    Qinv = np.linalg.inv(Q)
    A0, B0 = model.matrices(spec.theta_hat)
    K0 = lq_batch_matrices(A0, B0, Q, R, N).gains
    E = constraint.E
    rng = np.random.default_rng(seed)
    thetas = [spec.theta_hat] + (list(spec.sample_sphere(rng, budget)) if spec.epsilon > 0 else [])
    e_ab = L_K = 0.0
    eps_K = math.inf
    for th in thetas:
        A, B = model.matrices(th)
        K = lq_batch_matrices(A, B, Q, R, N).gains
        for k in range(N):
            rows = E @ K[k]
            q = np.einsum("ij,jk,ik->i", rows, Qinv, rows)
            q = q[q > 0]
            if q.size:
                eps_K = min(eps_K, float((1.0 / q).min()))
        d = spec.delta(th)
        if d > 0:
            e_ab = max(e_ab, np.linalg.norm(A - A0, 2) / d, np.linalg.norm(B - B0, 2) / d)
            L_K = max(L_K, max(np.linalg.norm(K[k] - K0[k], 2) for k in range(N)) / d)
    if not math.isfinite(eps_K):
        raise BoundError("no gain row constrains the input; the local region is unbounded")
    r = math.sqrt(eps_K / float(np.linalg.eigvalsh(Q)[0]))
    omega = min(L_K, 2 / ((1 - eds.rho) * r))
    eta_star = eta_bar_star(eds, r, L_K)
    return LqConstants(float(e_ab), eps_K, r, float(L_K), omega, float(L_K), eta_star, len(thetas))
