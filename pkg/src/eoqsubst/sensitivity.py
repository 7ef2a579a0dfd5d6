"""Parameter sweeps over the solvers and directional checks on their output."""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .errors import (
    ConvergenceError,
    InfeasibleError,
    SweepSizeError,
    UsageError,
)
from .model import FLAT_KEYS, SystemParams, resolve_path, set_flat, validate
from .oracle import verify
from .solvers import FixedPointSettings, solve, solve_eoqiss_auto

REGIMES = ("partial", "full", "none", "auto")
DEFAULT_MAX_ROWS = 10**6
THREADS_ENV = "EOQ_SUBST_THREADS"


def _flat_name(name: str) -> str:
    path = resolve_path(name)
    return next(key for key, p in FLAT_KEYS.items() if p == path)


@dataclass(frozen=True)
class Axis:
    """One sweep dimension. Several parameters may move together (zipped)."""

    names: tuple[str, ...]
    values: tuple[tuple[float, ...], ...]

    @classmethod
    def of(cls, names, values) -> Axis:
        if isinstance(names, str):
            names = (names,)
            values = [(v,) for v in values]
        names = tuple(_flat_name(n) for n in names)
        values = tuple(tuple(float(x) for x in v) for v in values)
        if not values:
            raise UsageError(f"axis {names} has no values")
        for v in values:
            if len(v) != len(names):
                raise UsageError(f"axis {names} value {v} has the wrong arity")
        return cls(names, values)

    @property
    def label(self) -> str:
        return "+".join(self.names)


@dataclass(frozen=True)
class SweepSpec:
    base: SystemParams
    axes: tuple[Axis, ...] = ()
    regimes: tuple[str, ...] = ("auto",)
    model: str = "eoqiss"
    max_rows: int = DEFAULT_MAX_ROWS

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(
            a if isinstance(a, Axis) else Axis.of(*a) for a in self.axes
        ))
        if self.model not in ("basic", "eoqiss"):
            raise UsageError(f"unknown model {self.model!r}")
        if not self.regimes or any(r not in REGIMES for r in self.regimes):
            raise UsageError(f"regimes must be a non-empty subset of {REGIMES}")
        seen = [n for a in self.axes for n in a.names]
        if len(seen) != len(set(seen)):
            raise UsageError("a parameter appears on more than one axis")

    @property
    def size(self) -> int:
        return math.prod(len(a.values) for a in self.axes) * len(self.regimes)


@dataclass(frozen=True)
class SweepRow:
    point: dict[str, float]  # axis parameter values of this row
    params: dict[str, float]  # full flat parameter set
    regime: str
    status: str  # ok / invalid / infeasible / nonconvergent
    mode: str | None = None
    runout_time: float | None = None
    cycle_time: float | None = None
    lot1: float | None = None
    lot2: float | None = None
    tac: float | None = None
    theorem1_ok: bool | None = None
    theorem2_ok: bool | None = None
    oracle_residual: float | None = None
    note: str = ""
    axes: tuple[tuple[str, ...], ...] = field(default=(), compare=False)

    @property
    def group(self) -> str:
        """Regime label used by the directional checks."""
        return self.regime if self.regime != "auto" else (self.mode or "auto")


def _points(spec: SweepSpec):
    for combo in itertools.product(*(a.values for a in spec.axes)):
        point = {}
        for axis, vals in zip(spec.axes, combo):
            point.update(zip(axis.names, vals))
        yield point


def _solve_row(spec, point, regime, verify_each, settings, paper_verbatim):
    params = spec.base
    for name, value in point.items():
        params = set_flat(params, name, value)
    common = dict(point=point, params=params.to_flat(), regime=regime,
                  axes=tuple(a.names for a in spec.axes))
    violations = validate(params, defects=spec.model == "eoqiss")
    if violations:
        text = "; ".join(f"{v.assumption} {v.field}" for v in violations)
        return SweepRow(status="invalid", note=text, **common)
    try:
        if spec.model == "eoqiss" and regime == "auto":
            report = solve_eoqiss_auto(params, settings, paper_verbatim=paper_verbatim,
                                       cross_check=verify_each)
        else:
            report = solve(params, spec.model, regime, settings, paper_verbatim=paper_verbatim)
            if verify_each:
                report = verify(report, params, ceiling=math.inf)
    except InfeasibleError as exc:
        return SweepRow(status="infeasible", note=str(exc), **common)
    except ConvergenceError as exc:
        return SweepRow(status="nonconvergent", note=str(exc), **common)
    return SweepRow(
        status="ok",
        mode=report.mode.value,
        runout_time=report.policy.runout_time,
        cycle_time=report.policy.cycle_time,
        lot1=report.lots.lot1,
        lot2=report.lots.lot2,
        tac=report.cost.total,
        theorem1_ok=report.theorem1_ok,
        theorem2_ok=report.theorem2_ok,
        oracle_residual=report.oracle_residual,
        **common,
    )


def run_sweep(spec: SweepSpec, verify_each: bool = False,
              settings: FixedPointSettings | None = None, *,
              paper_verbatim: bool = False, threads: int | None = None) -> list[SweepRow]:
    """Solve every grid point for every requested regime.

    Rows come out in lexicographic axis order, regimes innermost, whatever the
    thread count. ``threads`` defaults to ``$EOQ_SUBST_THREADS`` (else 1).
    """
    if spec.size > spec.max_rows:
        raise SweepSizeError(f"sweep has {spec.size} rows, cap is {spec.max_rows}")
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, "1") or 1)
    jobs = [(p, r) for p in _points(spec) for r in spec.regimes]

    def work(job):
        return _solve_row(spec, job[0], job[1], verify_each, settings, paper_verbatim)

    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(work, jobs))
    return [work(j) for j in jobs]


# -- directional checks -------------------------------------------------------

@dataclass(frozen=True)
class Finding:
    claim: str
    passed: bool
    witnesses: tuple[tuple[int, int], ...]  # row index pairs that break the claim
    detail: str = ""


CHECKABLE = {"ep1", "ep2", "ch2"}


def _pairs(rows, idx, moving, fixed):
    """Index pairs (i, j) in ``idx`` with ``moving`` strictly larger at j and ``fixed`` equal."""
    for i, j in itertools.permutations(idx, 2):
        a, b = rows[i].params, rows[j].params
        if b[moving] > a[moving] and all(a[f] == b[f] for f in fixed):
            yield i, j


def _monotone(rows, idx, moving, fixed, column, strict, increasing):
    broken = []
    count = 0
    for i, j in _pairs(rows, idx, moving, fixed):
        count += 1
        lo, hi = getattr(rows[i], column), getattr(rows[j], column)
        if increasing:
            ok = hi > lo if strict else hi >= lo
        else:
            ok = hi < lo if strict else hi <= lo
        if not ok:
            broken.append((i, j))
    return tuple(broken), count


def _sensitivity(rows, idx):
    """Relative TAC change per unit E[p1] between the extreme-E[p1] rows."""
    if not idx:
        return None
    lo = min(idx, key=lambda i: rows[i].params["ep1"])
    hi = max(idx, key=lambda i: rows[i].params["ep1"])
    spread = rows[hi].params["ep1"] - rows[lo].params["ep1"]
    if spread <= 0:
        return None
    return abs(rows[hi].tac - rows[lo].tac) / (rows[lo].tac * spread)


def qualitative_checks(rows: list[SweepRow]) -> list[Finding]:
    """Evaluate the published directional observations on single-axis sweep rows.

    Rows must come from a sweep with at most one axis, and that axis may only
    move E[p1], E[p2] and/or c_h2 (a zipped E[p1]/E[p2] axis counts as one).
    A claim with no qualifying row pair passes vacuously.
    """
    axes = {r.axes for r in rows}
    if len(axes) > 1:
        raise UsageError("rows come from different sweeps")
    axis_groups = next(iter(axes), ())
    if len(axis_groups) > 1:
        raise UsageError(f"rows vary {len(axis_groups)} axes; qualitative checks need one")
    if axis_groups and not set(axis_groups[0]) <= CHECKABLE:
        raise UsageError(f"axis {axis_groups[0]} is not one of {sorted(CHECKABLE)}")

    ok = [i for i, r in enumerate(rows) if r.status == "ok"]
    by_group: dict[str, list[int]] = {}
    for i in ok:
        by_group.setdefault(rows[i].group, []).append(i)
    partial = by_group.get("partial", [])
    full = by_group.get("full", [])

    findings = []

    def add(claim, broken, count, detail=""):
        findings.append(Finding(claim, not broken, broken,
                                detail or f"{count} qualifying row pairs"))

    add("partial: y2 non-increasing in E[p2]",
        *_monotone(rows, partial, "ep2", ("ep1", "ch2"), "lot2", False, False))
    for group in ("partial", "full", "none"):
        add(f"{group}: y1 increasing in E[p1]",
            *_monotone(rows, by_group.get(group, []), "ep1", ("ch2",), "lot1", True, True))
    add("full: TAC increasing in E[p1]",
        *_monotone(rows, full, "ep1", ("ch2",), "tac", True, True))
    add("partial: y1 increasing in c_h2",
        *_monotone(rows, partial, "ch2", ("ep1", "ep2"), "lot1", True, True))

    broken = tuple(
        (i, j) for i, j in itertools.combinations(full, 2)
        if rows[i].params["ep1"] == rows[j].params["ep1"]
        and not (math.isclose(rows[i].lot1, rows[j].lot1, rel_tol=1e-12)
                 and math.isclose(rows[i].tac, rows[j].tac, rel_tol=1e-12))
    )
    add("full: lots and TAC unaffected by c_h2 and E[p2]", broken, len(full))

    sens = {g: _sensitivity(rows, by_group.get(g, [])) for g in ("partial", "full", "none")}
    if sens["full"] is None or (sens["partial"] is None and sens["none"] is None):
        add("full: TAC most sensitive to E[p1]", (), 0, "not enough rows; vacuous")
    else:
        others = [g for g in ("partial", "none") if sens[g] is not None]
        passed = all(sens["full"] > sens[g] for g in others)
        detail = ", ".join(f"{g}={sens[g]:.6g}" for g in ("full", *others))
        findings.append(Finding("full: TAC most sensitive to E[p1]", passed, (), detail))
    return findings
