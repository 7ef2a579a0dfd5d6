"""Domain types, parameter validation and the total-average-cost functions.

Item 1 is the major (substituting) product, item 2 the minor (substituted)
one. A policy is the pair ``(runout_time, cycle_time)``: item 2 is out of
stock from ``runout_time`` until the end of the cycle, and its demand is then
met from item 1 at a per-unit transfer cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

from .errors import InfeasiblePolicyError


@dataclass(frozen=True)
class ItemParams:
    demand_rate: float
    holding_cost: float
    screening_rate: float = math.inf
    defect_fraction_mean: float = 0.0

    @property
    def defect_holding_factor(self) -> float:
        """E[p] / ((1 - E[p])^2 x), the weight of held-then-removed defectives."""
        p = self.defect_fraction_mean
        if p == 0.0:
            return 0.0
        return p / ((1.0 - p) ** 2 * self.screening_rate)


@dataclass(frozen=True)
class SystemParams:
    item1: ItemParams
    item2: ItemParams
    ordering_cost: float
    transfer_cost: float

    @property
    def total_demand(self) -> float:
        return self.item1.demand_rate + self.item2.demand_rate

    @property
    def holding_gap(self) -> float:
        return self.item2.holding_cost - self.item1.holding_cost

    def without_defects(self) -> SystemParams:
        return replace(
            self,
            item1=replace(self.item1, defect_fraction_mean=0.0),
            item2=replace(self.item2, defect_fraction_mean=0.0),
        )

    def to_flat(self) -> dict[str, float]:
        return {key: get_flat(self, key) for key in FLAT_KEYS}

    @classmethod
    def from_flat(cls, values: dict[str, float]) -> SystemParams:
        return cls(
            item1=ItemParams(
                demand_rate=float(values["d1"]),
                holding_cost=float(values["ch1"]),
                screening_rate=float(values["x1"]),
                defect_fraction_mean=float(values["ep1"]),
            ),
            item2=ItemParams(
                demand_rate=float(values["d2"]),
                holding_cost=float(values["ch2"]),
                screening_rate=float(values["x2"]),
                defect_fraction_mean=float(values["ep2"]),
            ),
            ordering_cost=float(values["co"]),
            transfer_cost=float(values["ct"]),
        )


# Flat configuration keys and the attribute paths they address.
FLAT_KEYS: dict[str, tuple[str, ...]] = {
    "d1": ("item1", "demand_rate"),
    "d2": ("item2", "demand_rate"),
    "ch1": ("item1", "holding_cost"),
    "ch2": ("item2", "holding_cost"),
    "x1": ("item1", "screening_rate"),
    "x2": ("item2", "screening_rate"),
    "ep1": ("item1", "defect_fraction_mean"),
    "ep2": ("item2", "defect_fraction_mean"),
    "co": ("ordering_cost",),
    "ct": ("transfer_cost",),
}


def resolve_path(name: str) -> tuple[str, ...]:
    """Map a flat key (``ch2``) or dotted path (``item2.holding_cost``) to a path."""
    if name in FLAT_KEYS:
        return FLAT_KEYS[name]
    path = tuple(name.split("."))
    if path in FLAT_KEYS.values():
        return path
    raise KeyError(f"unknown parameter {name!r}")


def get_flat(params: SystemParams, name: str) -> float:
    obj = params
    for part in resolve_path(name):
        obj = getattr(obj, part)
    return obj


def set_flat(params: SystemParams, name: str, value: float) -> SystemParams:
    path = resolve_path(name)
    if len(path) == 1:
        return replace(params, **{path[0]: float(value)})
    item = getattr(params, path[0])
    return replace(params, **{path[0]: replace(item, **{path[1]: float(value)})})


def reference_instance(
    ch2: float = 5.0,
    ct: float = 1.0,
    ep1: float = 0.0,
    ep2: float = 0.0,
) -> SystemParams:
    """The published two-product instance; ``ch2``, ``ct`` and defects are free."""
    return SystemParams(
        item1=ItemParams(1000.0, 1.0, 175200.0, ep1),
        item2=ItemParams(1000.0, ch2, 175100.0, ep2),
        ordering_cost=4500.0,
        transfer_cost=ct,
    )


@dataclass(frozen=True)
class Policy:
    runout_time: float
    cycle_time: float

    def __post_init__(self):
        if not self.cycle_time > 0.0:
            raise InfeasiblePolicyError(f"cycle_time must be positive, got {self.cycle_time}")
        if not 0.0 <= self.runout_time <= self.cycle_time:
            raise InfeasiblePolicyError(
                f"runout_time {self.runout_time} outside [0, cycle_time={self.cycle_time}]"
            )


@dataclass(frozen=True)
class LotPlan:
    lot1: float
    lot2: float


@dataclass(frozen=True)
class ScreeningEpochs:
    ts1: float
    ts2: float


@dataclass(frozen=True)
class CostBreakdown:
    ordering: float
    holding1: float
    holding2: float
    transfer: float

    @property
    def total(self) -> float:
        return self.ordering + self.holding1 + self.holding2 + self.transfer

    def scaled(self, factor: float) -> CostBreakdown:
        return CostBreakdown(*(getattr(self, f.name) * factor for f in fields(self)))

    def as_dict(self) -> dict[str, float]:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["total"] = self.total
        return out


@dataclass(frozen=True)
class Violation:
    assumption: str  # "A6".."A9", or "domain" for sign/finiteness checks
    field: str
    message: str


def validate(params: SystemParams, *, defects: bool = True) -> list[Violation]:
    """Return every violated modelling assumption; an empty list means valid.

    With ``defects=False`` the screening rate and defect fraction checks are
    skipped, which is what the perfect-quality model needs.
    """
    out: list[Violation] = []

    def bad(assumption, name, message):
        out.append(Violation(assumption, name, message))

    for idx, item in ((1, params.item1), (2, params.item2)):
        for attr in ("demand_rate", "holding_cost"):
            value = getattr(item, attr)
            if not (math.isfinite(value) and value > 0):
                bad("domain", f"item{idx}.{attr}", f"must be positive and finite, got {value}")
        if not defects:
            continue
        x, d, p = item.screening_rate, item.demand_rate, item.defect_fraction_mean
        if not (math.isfinite(x) and x > 0):
            bad("domain", f"item{idx}.screening_rate", f"must be positive and finite, got {x}")
        elif not x > d:
            bad("A6", f"item{idx}.screening_rate",
                f"screening rate {x} must exceed demand rate {d}")
        if not (math.isfinite(p) and p >= 0):
            bad("domain", f"item{idx}.defect_fraction_mean", f"must be in [0, 1), got {p}")
        elif x > 0 and not p < 1.0 - d / x:
            bad("A7", f"item{idx}.defect_fraction_mean",
                f"expected defect fraction {p} must be below 1 - D/x = {1.0 - d / x:.6g}")

    if not (math.isfinite(params.ordering_cost) and params.ordering_cost > 0):
        bad("domain", "ordering_cost", f"must be positive, got {params.ordering_cost}")
    if not (math.isfinite(params.transfer_cost) and params.transfer_cost >= 0):
        bad("domain", "transfer_cost", f"must be non-negative, got {params.transfer_cost}")
    if not params.item2.holding_cost > params.item1.holding_cost:
        bad("A9", "item2.holding_cost",
            f"minor-item holding cost {params.item2.holding_cost} must exceed "
            f"major-item holding cost {params.item1.holding_cost}")
    return out


def tac_basic(params: SystemParams, policy: Policy) -> CostBreakdown:
    """Average annual cost of the perfect-quality model."""
    tau, T = policy.runout_time, policy.cycle_time
    d1, d2 = params.item1.demand_rate, params.item2.demand_rate
    return CostBreakdown(
        ordering=params.ordering_cost / T,
        holding1=params.item1.holding_cost * (d1 * T / 2 + d2 / 2 * (T - tau * tau / T)),
        holding2=params.item2.holding_cost * d2 * tau * tau / (2 * T),
        transfer=d2 * params.transfer_cost * (1 - tau / T),
    )


def tac_eoqiss(params: SystemParams, policy: Policy) -> CostBreakdown:
    """Average annual cost with imperfect-quality lots screened on arrival.

    Perfect-quality terms are those of :func:`tac_basic`, so zero defect
    fractions reproduce it bit for bit. The item-2 defective-holding term
    uses ``D2**2 * tau**2``; it is the integral of the screened stock of
    item 2 and has the same shape as the item-1 term.
    """
    tau, T = policy.runout_time, policy.cycle_time
    i1, i2 = params.item1, params.item2
    d2 = i2.demand_rate
    served1 = (i1.demand_rate + d2) * T - d2 * tau
    base = tac_basic(params, policy)
    return replace(
        base,
        holding1=base.holding1 + i1.holding_cost * i1.defect_holding_factor * served1 * served1 / T,
        holding2=base.holding2 + i2.holding_cost * i2.defect_holding_factor * d2 * d2 * tau * tau / T,
    )


def tac_eoqiss_printed(params: SystemParams, policy: Policy) -> CostBreakdown:
    """The published average-cost expression, item-2 defect term as typeset.

    Kept for side-by-side comparison only: its item-2 defect term
    ``E[p2] D2 tau^2 / ((1-E[p2])^2 x2 T)`` is not the trajectory integral.
    """
    tau, T = policy.runout_time, policy.cycle_time
    i2 = params.item2
    fixed = tac_eoqiss(params, policy)
    return replace(
        fixed,
        holding2=tac_basic(params, policy).holding2
        + i2.holding_cost * i2.defect_holding_factor * i2.demand_rate * tau * tau / T,
    )


def tc_eoqiss(params: SystemParams, policy: Policy) -> float:
    """Cost of one replenishment cycle."""
    return tac_eoqiss(params, policy).total * policy.cycle_time


def lot_sizes(params: SystemParams, tau, T):
    """Array-friendly core of :func:`lot_plan`; returns ``(lot1, lot2)``."""
    i1, i2 = params.item1, params.item2
    lot2 = i2.demand_rate * tau / (1.0 - i2.defect_fraction_mean)
    lot1 = ((i1.demand_rate + i2.demand_rate) * T - i2.demand_rate * tau) / (
        1.0 - i1.defect_fraction_mean
    )
    return lot1, lot2


def lot_plan(params: SystemParams, policy: Policy) -> LotPlan:
    """Order sizes whose perfect-quality part exactly covers the cycle's demand."""
    lot1, lot2 = lot_sizes(params, policy.runout_time, policy.cycle_time)
    return LotPlan(lot1=lot1, lot2=lot2)


def screening_epochs(params: SystemParams, lots: LotPlan) -> ScreeningEpochs:
    return ScreeningEpochs(
        ts1=lots.lot1 / params.item1.screening_rate,
        ts2=lots.lot2 / params.item2.screening_rate,
    )
