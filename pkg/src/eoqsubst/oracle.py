"""Ground-truth cycle simulator and derivative-free minimiser.

Nothing here uses the closed-form cost expressions. Costs come from
integrating the inventory levels directly. Between events each level is linear in time,
so the trapezoid rule over the event grid is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InfeasiblePolicyError, RegionError, VerificationError
from .model import (
    CostBreakdown,
    LotPlan,
    Policy,
    ScreeningEpochs,
    SystemParams,
    lot_sizes,
)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
LEVEL_RTOL = 1e-9


@dataclass(frozen=True)
class TrajectorySegment:
    t_start: float
    t_end: float
    level_start: float
    slope: float
    jump_at_end: float = 0.0

    @property
    def level_end(self) -> float:
        return self.level_start + self.slope * (self.t_end - self.t_start)

    @property
    def area(self) -> float:
        return 0.5 * (self.t_end - self.t_start) * (self.level_start + self.level_end)


@dataclass(frozen=True)
class CycleTrace:
    item1_segments: tuple[TrajectorySegment, ...]
    item2_segments: tuple[TrajectorySegment, ...]
    epochs: ScreeningEpochs
    derived_lots: LotPlan
    terminal1: float
    terminal2: float


@dataclass(frozen=True)
class SearchRegion:
    tau_range: tuple[float, float]
    cycle_range: tuple[float, float]
    resolution: int = 200
    refine_tolerance: float = 1e-8

    def __post_init__(self):
        (t0, t1), (c0, c1) = self.tau_range, self.cycle_range
        if not (t1 > t0 and c1 > c0):
            raise RegionError("search ranges must have positive length")
        if t0 < 0:
            raise RegionError("runout range must start at or above 0")
        if self.resolution < 16:
            raise RegionError("grid resolution must be at least 16 points per axis")
        if not self.refine_tolerance > 0:
            raise RegionError("refine_tolerance must be positive")
        if t0 > c1:
            raise RegionError("no feasible point: runout range lies above every cycle time")

    @classmethod
    def around(cls, policy: Policy, resolution: int = 200,
               refine_tolerance: float = 1e-8) -> SearchRegion:
        tau, T = policy.runout_time, policy.cycle_time
        return cls((0.0, 3.0 * tau + 1.0), (0.05 * T, 4.0 * T), resolution, refine_tolerance)


def _walk(start, knots, slope_of, jump_time, jump_size):
    """Integrate a piecewise-linear level through sorted ``knots``.

    ``slope_of(a, b)`` gives the slope on ``[a, b]``. A removal of
    ``jump_size`` happens once, at the first knot equal to ``jump_time``.
    Works elementwise on broadcastable arrays.
    """
    ks = np.sort(np.stack(np.broadcast_arrays(*knots), axis=-1), axis=-1)
    level = np.asarray(start, dtype=float) + np.zeros(ks.shape[:-1])
    applied = np.zeros(level.shape, dtype=bool)
    area = np.zeros(level.shape)
    lowest = level.copy()
    pieces = []
    for j in range(ks.shape[-1] - 1):
        a, b = ks[..., j], ks[..., j + 1]
        slope = slope_of(a, b)
        end = level + slope * (b - a)
        area = area + 0.5 * (b - a) * (level + end)
        hit = ~applied & (b == jump_time)
        jump = np.where(hit, -jump_size, 0.0)
        pieces.append((a, b, level, slope, jump))
        lowest = np.minimum(lowest, end)
        level = end + jump
        applied |= hit
        lowest = np.minimum(lowest, level)
    return area, level, lowest, pieces


def _integrate(params: SystemParams, tau, T, lot1=None, lot2=None):
    i1, i2 = params.item1, params.item2
    d1, d2 = i1.demand_rate, i2.demand_rate
    if lot1 is None:
        lot1, lot2 = lot_sizes(params, tau, T)
    ts1 = lot1 / i1.screening_rate
    ts2 = lot2 / i2.screening_rate
    # screening must finish while the lot is still on hand
    late = (ts1 > T) | (ts2 > tau)
    ts1c, ts2c = np.minimum(ts1, T), np.minimum(ts2, tau)

    def major_slope(a, b):
        return np.where(b <= tau, -d1, -(d1 + d2))

    def minor_slope(a, b):
        return np.full(np.shape(b), -float(d2))

    area1, end1, low1, pieces1 = _walk(
        lot1, (0.0, tau, ts1c, T), major_slope, ts1c, i1.defect_fraction_mean * lot1
    )
    area2, end2, low2, pieces2 = _walk(
        lot2, (0.0, ts2c, tau), minor_slope, ts2c, i2.defect_fraction_mean * lot2
    )
    scale1 = np.maximum(np.abs(lot1), 1.0) * LEVEL_RTOL
    scale2 = np.maximum(np.abs(lot2), 1.0) * LEVEL_RTOL
    bad = (
        late
        | (low1 < -scale1)
        | (low2 < -scale2)
        | (np.abs(end1) > scale1)
        | (np.abs(end2) > scale2)
    )
    return dict(
        area1=area1, area2=area2, end1=end1, end2=end2, low1=low1, low2=low2,
        ts1=ts1, ts2=ts2, late=late, bad=bad, pieces1=pieces1, pieces2=pieces2,
        lot1=lot1, lot2=lot2,
    )


def _walk_scalar(start, knots, slope_of, jump_time, jump_size):
    # plain-float twin of _walk for the refinement loop, where numpy's
    # per-call overhead dominates; same operations in the same order
    ks = sorted(knots)
    level = lowest = float(start)
    area = 0.0
    applied = False
    for a, b in zip(ks, ks[1:]):
        end = level + slope_of(b) * (b - a)
        area = area + 0.5 * (b - a) * (level + end)
        lowest = min(lowest, end)
        if not applied and b == jump_time:
            level, applied = end - jump_size, True
        else:
            level = end
        lowest = min(lowest, level)
    return area, level, lowest


def _scalar_cost(params: SystemParams, tau: float, T: float) -> float:
    if not (T > 0 and 0 <= tau <= T):
        return math.inf
    i1, i2 = params.item1, params.item2
    d1, d2 = i1.demand_rate, i2.demand_rate
    lot1, lot2 = lot_sizes(params, tau, T)
    ts1, ts2 = lot1 / i1.screening_rate, lot2 / i2.screening_rate
    if ts1 > T or ts2 > tau:
        return math.inf
    area1, end1, low1 = _walk_scalar(
        lot1, (0.0, tau, ts1, T), lambda b: -d1 if b <= tau else -(d1 + d2),
        ts1, i1.defect_fraction_mean * lot1,
    )
    area2, end2, low2 = _walk_scalar(
        lot2, (0.0, ts2, tau), lambda b: -float(d2), ts2, i2.defect_fraction_mean * lot2
    )
    scale1 = max(abs(lot1), 1.0) * LEVEL_RTOL
    scale2 = max(abs(lot2), 1.0) * LEVEL_RTOL
    if low1 < -scale1 or low2 < -scale2 or abs(end1) > scale1 or abs(end2) > scale2:
        return math.inf
    return (
        params.ordering_cost
        + params.item1.holding_cost * area1
        + params.item2.holding_cost * area2
        + params.transfer_cost * params.item2.demand_rate * (T - tau)
    ) / T


def _segments(pieces):
    out = []
    for a, b, level, slope, jump in pieces:
        a, b, level, slope, jump = (float(v) for v in (a, b, level, slope, jump))
        if b > a:
            out.append(TrajectorySegment(a, b, level, slope, jump))
        elif jump and out:
            out[-1] = replace(out[-1], jump_at_end=out[-1].jump_at_end + jump)
    return tuple(out)


def simulate_cycle(params: SystemParams, policy: Policy,
                   lots: LotPlan | None = None) -> tuple[CycleTrace, CostBreakdown]:
    """Replay one cycle and cost it from the inventory levels.

    The returned breakdown is per cycle, not per year. Divide by the cycle
    time to compare with the average-cost functions.
    """
    tau, T = policy.runout_time, policy.cycle_time
    if lots is None:
        r = _integrate(params, tau, T)
    else:
        r = _integrate(params, tau, T, lots.lot1, lots.lot2)
    if r["late"]:
        raise InfeasiblePolicyError(
            f"screening ends after stock-out (ts1={float(r['ts1']):.6g}, T={T:.6g}; "
            f"ts2={float(r['ts2']):.6g}, tau={tau:.6g})"
        )
    if r["bad"]:
        raise InfeasiblePolicyError(
            "inventory goes negative or does not close at zero "
            f"(lowest levels {float(r['low1']):.6g}, {float(r['low2']):.6g}; "
            f"terminal levels {float(r['end1']):.6g}, {float(r['end2']):.6g})"
        )
    trace = CycleTrace(
        item1_segments=_segments(r["pieces1"]),
        item2_segments=_segments(r["pieces2"]),
        epochs=ScreeningEpochs(float(r["ts1"]), float(r["ts2"])),
        derived_lots=LotPlan(float(r["lot1"]), float(r["lot2"])),
        terminal1=float(r["end1"]),
        terminal2=float(r["end2"]),
    )
    cost = CostBreakdown(
        ordering=params.ordering_cost,
        holding1=params.item1.holding_cost * float(r["area1"]),
        holding2=params.item2.holding_cost * float(r["area2"]),
        transfer=params.transfer_cost * params.item2.demand_rate * (T - tau),
    )
    return trace, cost


def simulated_cost_surface(params: SystemParams):
    """Average annual cost from simulation, vectorised over ``(tau, T)``.

    Infeasible points (``tau > T``, screening after stock-out) map to ``inf``.
    """

    def cost(tau, T):
        if np.ndim(tau) == 0 and np.ndim(T) == 0:
            return _scalar_cost(params, float(tau), float(T))
        tau = np.asarray(tau, dtype=float)
        T = np.asarray(T, dtype=float)
        ok = (T > 0) & (tau >= 0) & (tau <= T)
        Ts = np.where(ok, T, 1.0)
        taus = np.where(ok, tau, 0.0)
        r = _integrate(params, taus, Ts)
        total = (
            params.ordering_cost
            + params.item1.holding_cost * r["area1"]
            + params.item2.holding_cost * r["area2"]
            + params.transfer_cost * params.item2.demand_rate * (Ts - taus)
        ) / Ts
        out = np.where(ok & ~r["bad"], total, np.inf)
        return out if out.ndim else float(out)

    cost.vectorized = True
    return cost


def golden_section(f, a, b, tol):
    """Minimise a unimodal ``f`` on ``[a, b]``; returns ``(x, f(x))``."""
    if b - a <= tol:
        x = 0.5 * (a + b)
        return x, f(x)
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def _grid_values(cost, taus, Ts):
    TAU, TT = np.meshgrid(taus, Ts, indexing="ij")
    if getattr(cost, "vectorized", False):
        vals = np.asarray(cost(TAU, TT), dtype=float)
    else:
        vals = np.full(TAU.shape, np.inf)
        for idx in zip(*np.nonzero(TAU <= TT)):
            vals[idx] = cost(float(TAU[idx]), float(TT[idx]))
    vals = np.where((TAU <= TT) & np.isfinite(vals), vals, np.inf)
    return vals


def minimize_2d(cost, region: SearchRegion, max_sweeps: int = 100) -> tuple[Policy, float]:
    """Grid scan then alternating golden-section refinement over ``tau <= T``.

    Refinement never accepts a point worse than the incumbent, so the result
    is at least as good as the best grid point. When the incumbent sits on
    the ``tau == T`` edge a third search runs along that edge, since plain
    coordinate moves cannot slide along it.
    """
    n = region.resolution
    taus = np.linspace(*region.tau_range, n)
    Ts = np.linspace(*region.cycle_range, n)
    Ts = Ts[Ts > 0]
    vals = _grid_values(cost, taus, Ts)
    if not np.isfinite(vals).any():
        raise RegionError("no feasible grid point with finite cost")
    i, j = np.unravel_index(np.argmin(vals), vals.shape)
    tau, T, best = float(taus[i]), float(Ts[j]), float(vals[i, j])

    def f(t, c):
        if not (c > 0 and 0 <= t <= c):
            return math.inf
        return float(cost(t, c))

    dtau = taus[1] - taus[0]
    dT = Ts[1] - Ts[0] if len(Ts) > 1 else region.cycle_range[1] - region.cycle_range[0]
    tol = region.refine_tolerance
    lo_tau, hi_tau = region.tau_range
    lo_T, hi_T = max(region.cycle_range[0], 0.0), region.cycle_range[1]
    for _ in range(max_sweeps):
        old_tau, old_T = tau, T
        a, b = max(lo_tau, tau - 2 * dtau), min(hi_tau, T, tau + 2 * dtau)
        if b > a:
            x, fx = golden_section(lambda t: f(t, T), a, b, tol)
            if fx <= best:
                tau, best = x, fx
        a, b = max(lo_T, tau, T - 2 * dT), min(hi_T, T + 2 * dT)
        if b > a:
            x, fx = golden_section(lambda c: f(tau, c), a, b, tol)
            if fx <= best:
                T, best = x, fx
        if T - tau <= dtau:
            a = max(lo_tau, lo_T, T - 2 * dT)
            b = min(hi_tau, hi_T, T + 2 * dT)
            if b > a:
                x, fx = golden_section(lambda c: f(c, c), a, b, tol)
                if fx < best:
                    tau, T, best = x, x, fx
        if abs(tau - old_tau) < tol and abs(T - old_T) < tol:
            break
    return Policy(float(tau), float(T)), float(best)


def minimize_line(g, lo: float, hi: float, resolution: int = 200,
                  tol: float = 1e-8) -> tuple[float, float]:
    """One-dimensional grid scan plus golden-section polish."""
    xs = np.linspace(lo, hi, resolution)
    xs = xs[xs > 0]
    vals = np.array([g(float(x)) for x in xs])
    if not np.isfinite(vals).any():
        raise RegionError("no feasible point with finite cost on the line")
    k = int(np.argmin(vals))
    step = xs[1] - xs[0]
    a, b = max(xs[0], xs[k] - 2 * step), min(xs[-1], xs[k] + 2 * step)
    x, fx = golden_section(g, a, b, tol)
    if fx <= vals[k]:
        return float(x), float(fx)
    return float(xs[k]), float(vals[k])


def verify(report, params: SystemParams, region: SearchRegion | None = None,
           ceiling: float = 1e-4, scope: str | None = None):
    """Compare a solver report with the simulated optimum.

    ``scope`` is ``"global"`` (minimise over every feasible ``(tau, T)``) or
    ``"regime"`` (stay on the report's own regime line for the ``none`` and
    ``full`` regimes). By default requested regimes ``auto`` and ``partial``
    are checked globally, explicit ``none``/``full`` requests on their line.
    Returns a copy of the report with ``oracle_residual`` filled in.
    """
    sim_params = params if report.model == "eoqiss" else params.without_defects()
    surface = simulated_cost_surface(sim_params)
    policy = report.policy
    _, cycle = simulate_cycle(sim_params, policy)
    simulated = cycle.total / policy.cycle_time
    analytic = report.cost.total
    if abs(simulated - analytic) > 1e-9 * abs(simulated):
        raise VerificationError(
            f"simulated cost {simulated!r} at the solver policy differs from the "
            f"reported cost {analytic!r}",
            policy, policy, abs(simulated - analytic) / abs(simulated),
        )
    if region is None:
        region = SearchRegion.around(policy)
    if scope is None:
        scope = "regime" if report.regime in ("none", "full") else "global"

    if scope == "global":
        best_policy, best = minimize_2d(surface, region)
    elif report.regime == "none":
        t, best = minimize_line(lambda c: surface(c, c), *region.cycle_range,
                                region.resolution, region.refine_tolerance)
        best_policy = Policy(t, t)
    elif report.regime == "full":
        t, best = minimize_line(lambda c: surface(0.0, c), *region.cycle_range,
                                region.resolution, region.refine_tolerance)
        best_policy = Policy(0.0, t)
    else:
        best_policy, best = minimize_2d(surface, region)

    residual = abs(analytic - best) / abs(best)
    checked = replace(report, oracle_residual=residual, oracle_policy=best_policy,
                      oracle_cost=best)
    if residual > ceiling:
        raise VerificationError(
            f"solver cost {analytic!r} differs from oracle minimum {best!r} "
            f"by relative {residual:.3e} (ceiling {ceiling:g})",
            policy, best_policy, residual,
        )
    return checked
