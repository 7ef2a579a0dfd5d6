"""Optimal (runout, cycle) policies for the perfect-quality and screened models.

Each model has three regimes: partial substitution (``0 < tau < T``), full
substitution (``tau == 0``) and no substitution (``tau == T``). Solvers return
a :class:`SolveReport`. Pass ``paper_verbatim=True`` to get the published
closed forms exactly as typeset. The report cost is always the true average
cost of the returned policy, so a typeset formula that misses the optimum
shows up as a worse cost and a non-zero oracle residual.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    ConvergenceError,
    InfeasibleError,
    NumericalStepError,
    SubstitutionModelError,
    ValidationError,
)
from .model import (
    CostBreakdown,
    LotPlan,
    Policy,
    SystemParams,
    lot_plan,
    tac_basic,
    tac_eoqiss,
    validate,
)
from .oracle import verify


class SubstitutionMode(str, enum.Enum):
    PARTIAL = "partial"
    FULL = "full"
    NONE = "none"


@dataclass(frozen=True)
class FixedPointSettings:
    tolerance: float = 1e-10
    max_iterations: int = 100

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True)
class SolveReport:
    model: str  # "basic" or "eoqiss"
    regime: str  # requested regime: partial / full / none / auto
    mode: SubstitutionMode
    policy: Policy
    lots: LotPlan
    cost: CostBreakdown
    theorem1_ok: bool | None
    theorem2_ok: bool | None
    hessian_psd: bool
    transferred_volume: float
    paper_verbatim: bool = False
    seed_cycle_time: float | None = None
    iterations: int | None = None
    branch: str | None = None
    oracle_residual: float | None = None
    oracle_policy: Policy | None = field(default=None, compare=False)
    oracle_cost: float | None = field(default=None, compare=False)

    def as_dict(self) -> dict:
        return {
            "model": self.model,
            "regime": self.regime,
            "mode": self.mode.value,
            "paper_verbatim": self.paper_verbatim,
            "branch": self.branch,
            "runout_time": self.policy.runout_time,
            "cycle_time": self.policy.cycle_time,
            "lot1": self.lots.lot1,
            "lot2": self.lots.lot2,
            "transferred_volume": self.transferred_volume,
            "cost": self.cost.as_dict(),
            "theorem1_ok": self.theorem1_ok,
            "theorem2_ok": self.theorem2_ok,
            "hessian_psd": self.hessian_psd,
            "seed_cycle_time": self.seed_cycle_time,
            "iterations": self.iterations,
            "oracle_residual": self.oracle_residual,
            "oracle_runout_time": None if self.oracle_policy is None else self.oracle_policy.runout_time,
            "oracle_cycle_time": None if self.oracle_policy is None else self.oracle_policy.cycle_time,
            "oracle_cost": self.oracle_cost,
        }

    @classmethod
    def from_dict(cls, data: dict) -> SolveReport:
        cost = {k: v for k, v in data["cost"].items() if k != "total"}
        oracle_policy = None
        if data.get("oracle_cycle_time") is not None:
            oracle_policy = Policy(data["oracle_runout_time"], data["oracle_cycle_time"])
        return cls(
            model=data["model"],
            regime=data["regime"],
            mode=SubstitutionMode(data["mode"]),
            policy=Policy(data["runout_time"], data["cycle_time"]),
            lots=LotPlan(data["lot1"], data["lot2"]),
            cost=CostBreakdown(**cost),
            theorem1_ok=data["theorem1_ok"],
            theorem2_ok=data["theorem2_ok"],
            hessian_psd=data["hessian_psd"],
            transferred_volume=data["transferred_volume"],
            paper_verbatim=data["paper_verbatim"],
            seed_cycle_time=data["seed_cycle_time"],
            iterations=data["iterations"],
            branch=data["branch"],
            oracle_residual=data["oracle_residual"],
            oracle_policy=oracle_policy,
            oracle_cost=data.get("oracle_cost"),
        )


# -- convexity predicates ---------------------------------------------------

def theorem1_bound(params: SystemParams) -> float:
    """Largest transfer cost for which the perfect-quality cost is convex."""
    gap = params.holding_gap
    if gap <= 0:
        return 0.0
    return math.sqrt(2.0 * params.ordering_cost * gap / params.item2.demand_rate)


def theorem1_holds(params: SystemParams) -> bool:
    return params.transfer_cost < theorem1_bound(params)


def theorem2_holds(params: SystemParams, policy: Policy) -> bool:
    """The published sufficient condition, evaluated as typeset.

    Note the ``(T - 1)`` factor mixes a time with a pure number; it is kept
    as printed.
    """
    ct = params.transfer_cost
    gap = params.holding_gap
    if gap <= 0:
        return False
    tau, T = policy.runout_time, policy.cycle_time
    return params.ordering_cost > ct * ct / (2.0 * gap) + tau * (T - 1.0) * ct * params.item2.demand_rate


def cost_surface(params: SystemParams, model: str = "eoqiss"):
    """``(tau, T) -> average cost`` for the chosen closed-form model."""
    tac = tac_eoqiss if model == "eoqiss" else tac_basic

    def cost(tau, T):
        return tac(params, Policy(tau, T)).total

    return cost


def hessian_psd(cost_fn, policy: Policy, step: float = 1e-4) -> tuple[bool, np.ndarray]:
    """Central-difference Hessian of ``cost_fn(tau, T)`` at an interior policy.

    Both axes use the absolute step ``step * T``. Returns whether the leading
    minors are positive, and the 2x2 matrix.
    """
    tau, T = policy.runout_time, policy.cycle_time
    h = step * T
    if not h > 0 or tau + h == tau or T + h == T or (tau - h) == tau:
        raise NumericalStepError(f"step {step!r} vanishes at tau={tau!r}, T={T!r}")
    if not (tau - h >= 0 and tau + h <= T - h):
        raise NumericalStepError("policy too close to the tau=0 or tau=T edge for this step")
    f0 = cost_fn(tau, T)
    h11 = (cost_fn(tau + h, T) - 2 * f0 + cost_fn(tau - h, T)) / (h * h)
    h22 = (cost_fn(tau, T + h) - 2 * f0 + cost_fn(tau, T - h)) / (h * h)
    h12 = (
        cost_fn(tau + h, T + h) - cost_fn(tau + h, T - h)
        - cost_fn(tau - h, T + h) + cost_fn(tau - h, T - h)
    ) / (4 * h * h)
    H = np.array([[h11, h12], [h12, h22]])
    return bool(h11 > 0 and h11 * h22 - h12 * h12 > 0), H


def _line_convex(cost_fn, mode: SubstitutionMode, T: float, step: float = 1e-4) -> bool:
    h = step * T
    if mode is SubstitutionMode.NONE:
        g = lambda t: cost_fn(t, t)  # noqa: E731
    else:
        g = lambda t: cost_fn(0.0, t)  # noqa: E731
    return bool(g(T + h) - 2 * g(T) + g(T - h) > 0)


# -- shared plumbing ----------------------------------------------------------

def _require_valid(params: SystemParams, defects: bool):
    violations = validate(params, defects=defects)
    if violations:
        raise ValidationError(violations)


def _report(params: SystemParams, model: str, regime: str, mode: SubstitutionMode,
            tau: float, T: float, **extra) -> SolveReport:
    policy = Policy(tau, T)
    if model == "basic":
        eff = params.without_defects()
        cost = tac_basic(params, policy)
        theorem2 = None
    else:
        eff = params
        cost = tac_eoqiss(params, policy)
        theorem2 = theorem2_holds(params, policy)
    surface = cost_surface(eff, model)
    if mode is SubstitutionMode.PARTIAL and 0 < tau < T:
        try:
            convex, _ = hessian_psd(surface, policy)
        except NumericalStepError:
            convex = False
    else:
        line_mode = SubstitutionMode.NONE if tau == T else SubstitutionMode.FULL
        convex = _line_convex(surface, line_mode, T)
    return SolveReport(
        model=model,
        regime=regime,
        mode=mode,
        policy=policy,
        lots=lot_plan(eff, policy),
        cost=cost,
        theorem1_ok=theorem1_holds(params),
        theorem2_ok=theorem2,
        hessian_psd=convex,
        transferred_volume=params.item2.demand_rate * (T - tau),
        **extra,
    )


# -- perfect-quality model -------------------------------------------------

def solve_basic_full(params: SystemParams, *, paper_verbatim: bool = False,
                     regime: str = "full") -> SolveReport:
    _require_valid(params, defects=False)
    T = math.sqrt(2 * params.ordering_cost / (params.item1.holding_cost * params.total_demand))
    return _report(params, "basic", regime, SubstitutionMode.FULL, 0.0, T,
                   paper_verbatim=paper_verbatim)


def printed_basic_none_cycle(params: SystemParams) -> float:
    """No-substitution cycle time as typeset (item-1 holding cost on both demands)."""
    c1 = params.item1.holding_cost
    return math.sqrt(
        2 * params.ordering_cost
        / (c1 * params.item1.demand_rate + c1 * params.item2.demand_rate)
    )


def solve_basic_none(params: SystemParams, *, paper_verbatim: bool = False,
                     regime: str = "none") -> SolveReport:
    _require_valid(params, defects=False)
    if paper_verbatim:
        T = printed_basic_none_cycle(params)
    else:
        i1, i2 = params.item1, params.item2
        T = math.sqrt(
            2 * params.ordering_cost
            / (i1.holding_cost * i1.demand_rate + i2.holding_cost * i2.demand_rate)
        )
    return _report(params, "basic", regime, SubstitutionMode.NONE, T, T,
                   paper_verbatim=paper_verbatim)


def solve_basic_partial(params: SystemParams, *, paper_verbatim: bool = False,
                        regime: str = "partial") -> SolveReport:
    """Interior optimum; hands over to the no-substitution optimum when it is not interior."""
    _require_valid(params, defects=False)
    gap = params.holding_gap
    ct, d2 = params.transfer_cost, params.item2.demand_rate
    tau = ct / gap
    radicand = (2 * params.ordering_cost - d2 * ct * ct / gap) / (
        params.item1.holding_cost * params.total_demand
    )
    if radicand <= 0:
        raise InfeasibleError(
            f"no interior optimum: transfer cost {ct} is not below the Theorem 1 "
            f"bound {theorem1_bound(params):.6g}"
        )
    T = math.sqrt(radicand)
    if tau >= T:
        return solve_basic_none(params, paper_verbatim=paper_verbatim, regime=regime)
    return _report(params, "basic", regime, SubstitutionMode.PARTIAL, tau, T,
                   paper_verbatim=paper_verbatim)


def solve_basic(params: SystemParams, *, paper_verbatim: bool = False) -> SolveReport:
    _require_valid(params, defects=False)
    if theorem1_holds(params):
        best = solve_basic_partial(params, paper_verbatim=paper_verbatim, regime="auto")
    else:
        best = solve_basic_none(params, paper_verbatim=paper_verbatim, regime="auto")
    if not paper_verbatim:
        others = (solve_basic_full(params), solve_basic_none(params))
        for other in others:
            if best.cost.total > other.cost.total * (1 + 1e-12):
                raise SubstitutionModelError(
                    f"selected {best.mode.value} optimum costs more than the "
                    f"{other.mode.value} optimum"
                )
    return best


# -- screened (imperfect quality) model ---------------------------------------

def _cycle_coefficient(params: SystemParams) -> float:
    """Coefficient of ``T`` in the average cost."""
    s = params.total_demand
    return params.item1.holding_cost * s * (0.5 + params.item1.defect_holding_factor * s)


def _runout_quadratic(params: SystemParams) -> float:
    """Coefficient of ``tau**2`` in the ``1/T`` part of the average cost."""
    i1, i2 = params.item1, params.item2
    d2 = i2.demand_rate
    return d2 * (
        0.5 * params.holding_gap
        + i1.defect_holding_factor * i1.holding_cost * d2
        + i2.defect_holding_factor * i2.holding_cost * d2
    )


def _inverse_cycle_part(params: SystemParams, tau: float) -> float:
    """Numerator of the ``1/T`` part of the average cost at runout ``tau``."""
    return (
        params.ordering_cost
        - params.item2.demand_rate * params.transfer_cost * tau
        + _runout_quadratic(params) * tau * tau
    )


def runout_for_cycle(params: SystemParams, T: float) -> float:
    """Stationary runout time for a given cycle time (affine in ``T``)."""
    i1, i2 = params.item1, params.item2
    k1, k2 = i1.defect_holding_factor, i2.defect_holding_factor
    num = params.transfer_cost + 2 * i1.holding_cost * k1 * params.total_demand * T
    den = (
        params.holding_gap
        + 2 * k1 * i1.holding_cost * i2.demand_rate
        + 2 * k2 * i2.holding_cost * i2.demand_rate
    )
    return num / den


def printed_runout_for_cycle(params: SystemParams, T: float) -> float:
    """Stationary runout time as typeset (derived from the typeset cost)."""
    i1, i2 = params.item1, params.item2
    p1, p2 = i1.defect_fraction_mean, i2.defect_fraction_mean
    x1, x2 = i1.screening_rate, i2.screening_rate
    c1, c2, ct = i1.holding_cost, i2.holding_cost, params.transfer_cost
    s, d2 = params.total_demand, i2.demand_rate
    q1, q2 = (1 - p1) ** 2, (1 - p2) ** 2
    num = 2 * q2 * (0.5 * ct * q1 * x1 + T * c1 * p1 * s) * x2
    den = (q2 * (c2 - c1) * x2 + 2 * c2 * p2) * q1 * x1 + 2 * c1 * x2 * d2 * p1 * q2
    return num / den


def printed_partial_cycle(params: SystemParams, tau: float) -> float:
    """Partial-regime cycle time as typeset, reading the stray ``h_2`` as ``c_h2``."""
    i1, i2 = params.item1, params.item2
    p1, p2 = i1.defect_fraction_mean, i2.defect_fraction_mean
    x1, x2 = i1.screening_rate, i2.screening_rate
    c1, c2, ct, co = i1.holding_cost, i2.holding_cost, params.transfer_cost, params.ordering_cost
    s, d2 = params.total_demand, i2.demand_rate
    q1, q2 = (1 - p1) ** 2, (1 - p2) ** 2
    tail = 0.5 * q1 * x1 + s * p1
    a1 = c1 * x2 * s * (
        -0.5 * q1 * ((tau * ((c1 - c2) * tau + 2 * ct) * d2 - 2 * co) * q2 * x2
                     + 2 * c2 * d2 * tau * tau * p2) * x1
        + c1 * x2 * p1 * d2 * d2 * tau * tau * q2
    ) * tail
    if a1 <= 0:
        raise InfeasibleError("typeset partial-regime radicand is not positive")
    return math.sqrt(a1) / (c1 * x2 * s * (1 - p2) * tail)


def printed_full_cycle(params: SystemParams) -> float:
    """Full-substitution cycle time as typeset (keeps item-2 holding terms)."""
    i1, i2 = params.item1, params.item2
    p1, p2 = i1.defect_fraction_mean, i2.defect_fraction_mean
    x1, x2 = i1.screening_rate, i2.screening_rate
    c1, c2 = i1.holding_cost, i2.holding_cost
    d1, d2 = i1.demand_rate, i2.demand_rate
    q1, q2 = (1 - p1) ** 2, (1 - p2) ** 2
    num = 2 * params.ordering_cost * x1 * x2 * q1 * q2
    den = x1 * q1 * ((c1 * d1 + c2 * d2) * q2 + 2 * c2 * d2 * p2) + 2 * x2 * c1 * d1 * d1 * p1 * q2
    return math.sqrt(num / den)


def printed_seed_cycle(params: SystemParams) -> float:
    """Step-1 cycle time ``T0`` as typeset; also the typeset no-substitution optimum."""
    i1 = params.item1
    p1, x1, s = i1.defect_fraction_mean, i1.screening_rate, params.total_demand
    return math.sqrt(
        2 * params.ordering_cost * x1
        / (i1.holding_cost * s * (s * p1 + x1 * (1 - p1) ** 2 / 2))
    )


def no_substitution_cycle(params: SystemParams) -> float:
    """Cost-minimising cycle time when each item serves only its own demand."""
    i1, i2 = params.item1, params.item2
    slope = (
        i1.holding_cost * (i1.demand_rate / 2 + i1.defect_holding_factor * i1.demand_rate ** 2)
        + i2.holding_cost * (i2.demand_rate / 2 + i2.defect_holding_factor * i2.demand_rate ** 2)
    )
    return math.sqrt(params.ordering_cost / slope)


def step1_seed(params: SystemParams, paper_verbatim: bool = False) -> float:
    """Cycle time ``T0`` that Step 1 compares with the runout time.

    The typeset ``T0`` charges item-1 holding cost on both demands and so
    overstates the no-substitution cycle; by default the corrected one is
    used, which makes the Step-2 comparison an exact regime test.
    """
    return printed_seed_cycle(params) if paper_verbatim else no_substitution_cycle(params)


def solve_eoqiss_full(params: SystemParams, *, paper_verbatim: bool = False,
                      regime: str = "full") -> SolveReport:
    _require_valid(params, defects=True)
    if paper_verbatim:
        T = printed_full_cycle(params)
    else:
        T = math.sqrt(params.ordering_cost / _cycle_coefficient(params))
    return _report(params, "eoqiss", regime, SubstitutionMode.FULL, 0.0, T,
                   paper_verbatim=paper_verbatim)


def solve_eoqiss_none(params: SystemParams, *, paper_verbatim: bool = False,
                      regime: str = "none") -> SolveReport:
    """No-substitution optimum; ``seed_cycle_time`` carries the typeset ``T0``."""
    _require_valid(params, defects=True)
    seed = printed_seed_cycle(params)
    T = seed if paper_verbatim else no_substitution_cycle(params)
    return _report(params, "eoqiss", regime, SubstitutionMode.NONE, T, T,
                   paper_verbatim=paper_verbatim, seed_cycle_time=seed)


def solve_eoqiss_partial(params: SystemParams, settings: FixedPointSettings | None = None,
                         *, paper_verbatim: bool = False, regime: str = "partial",
                         seed: float | None = None) -> SolveReport:
    """Interior optimum by fixed-point iteration on the two stationarity conditions.

    The runout condition gives ``tau`` as an affine function of ``T``; the
    cycle condition gives ``T = sqrt(beta(tau) / alpha)`` from the split
    ``TAC = alpha*T + beta(tau)/T + gamma(tau)``. Iteration starts at the
    Step-1 ``T0`` unless ``seed`` is given.
    """
    settings = settings or FixedPointSettings()
    _require_valid(params, defects=True)
    T0 = step1_seed(params, paper_verbatim) if seed is None else seed
    alpha = _cycle_coefficient(params)
    runout = printed_runout_for_cycle if paper_verbatim else runout_for_cycle
    tau, T = runout(params, T0), T0
    for it in range(1, settings.max_iterations + 1):
        tau_new = runout(params, T)
        if paper_verbatim:
            T_new = printed_partial_cycle(params, tau_new)
        else:
            beta = _inverse_cycle_part(params, tau_new)
            if beta <= 0:
                raise InfeasibleError(
                    f"no interior optimum: cycle radicand {beta:.6g} <= 0 at tau={tau_new:.6g} "
                    f"(Theorem 1 bound on transfer cost is {theorem1_bound(params):.6g})"
                )
            T_new = math.sqrt(beta / alpha)
        tol = settings.tolerance
        done = (abs(T_new - T) <= tol * T_new
                and abs(tau_new - tau) <= tol * max(abs(tau_new), T_new))
        tau, T = tau_new, T_new
        if done:
            break
    else:
        raise ConvergenceError(
            f"fixed point did not settle in {settings.max_iterations} iterations",
            (tau, T),
        )
    if tau >= T:
        return replace(
            solve_eoqiss_none(params, paper_verbatim=paper_verbatim, regime=regime),
            iterations=it,
        )
    return _report(params, "eoqiss", regime, SubstitutionMode.PARTIAL, tau, T,
                   paper_verbatim=paper_verbatim, seed_cycle_time=T0, iterations=it)


def solve_eoqiss_auto(params: SystemParams, settings: FixedPointSettings | None = None,
                      *, paper_verbatim: bool = False, cross_check: bool = True,
                      region=None) -> SolveReport:
    """Three-step procedure: compare ``T0`` with the runout time, then solve.

    Step 1 evaluates ``T0`` (see :func:`step1_seed`) and the runout time at ``T0``. If
    ``T0 <= tau`` the no-substitution optimum is returned. Otherwise the partial
    regime is solved. If that has no interior solution the no-substitution
    optimum is returned instead. ``branch`` records which step decided. With
    ``cross_check`` the result carries the residual against the oracle
    minimum. It is recorded only and never raises.
    """
    settings = settings or FixedPointSettings()
    _require_valid(params, defects=True)
    T0 = step1_seed(params, paper_verbatim)
    runout = printed_runout_for_cycle if paper_verbatim else runout_for_cycle
    tau0 = runout(params, T0)
    if T0 <= tau0:
        report = replace(
            solve_eoqiss_none(params, paper_verbatim=paper_verbatim, regime="auto"),
            branch="none",
        )
    else:
        try:
            report = solve_eoqiss_partial(params, settings, paper_verbatim=paper_verbatim,
                                          regime="auto", seed=T0)
            report = replace(report, branch="partial")
        except InfeasibleError:
            report = replace(
                solve_eoqiss_none(params, paper_verbatim=paper_verbatim, regime="auto"),
                branch="partial-infeasible",
            )
    report = replace(report, seed_cycle_time=T0)
    if cross_check:
        report = verify(report, params, region=region, ceiling=math.inf, scope="global")
    return report


def solve(params: SystemParams, model: str = "eoqiss", regime: str = "auto",
          settings: FixedPointSettings | None = None, *,
          paper_verbatim: bool = False) -> SolveReport:
    """Dispatch on ``model`` (basic / eoqiss) and ``regime``."""
    if model == "basic":
        table = {
            "partial": solve_basic_partial,
            "full": solve_basic_full,
            "none": solve_basic_none,
            "auto": solve_basic,
        }
        if regime not in table:
            raise ValueError(f"unknown regime {regime!r}")
        return table[regime](params, paper_verbatim=paper_verbatim)
    if model != "eoqiss":
        raise ValueError(f"unknown model {model!r}")
    if regime == "partial":
        return solve_eoqiss_partial(params, settings, paper_verbatim=paper_verbatim)
    if regime == "full":
        return solve_eoqiss_full(params, paper_verbatim=paper_verbatim)
    if regime == "none":
        return solve_eoqiss_none(params, paper_verbatim=paper_verbatim)
    if regime == "auto":
        return solve_eoqiss_auto(params, settings, paper_verbatim=paper_verbatim,
                                 cross_check=False)
    raise ValueError(f"unknown regime {regime!r}")
