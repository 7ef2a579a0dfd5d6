import math
from dataclasses import fields, replace

import numpy as np
import pytest

from eoqsubst.errors import InfeasiblePolicyError
from eoqsubst.model import (
    CostBreakdown,
    Policy,
    SystemParams,
    lot_plan,
    reference_instance,
    screening_epochs,
    set_flat,
    tac_basic,
    tac_eoqiss,
    tac_eoqiss_printed,
    tc_eoqiss,
    validate,
)
from eoqsubst.oracle import simulate_cycle
from factories import random_params, random_policy, rel


@pytest.fixture
def base():
    return reference_instance(ep1=0.02, ep2=0.02)


class TestValidate:
    def test_reference_instance_is_valid(self, base):
        assert validate(base) == []

    def test_holding_order_reported_as_a9(self, base):
        bad = set_flat(base, "ch2", 0.5)
        (v,) = validate(bad)
        assert (v.assumption, v.field) == ("A9", "item2.holding_cost")

    def test_defect_fraction_bound_reported_as_a7(self, base):
        bad = set_flat(base, "ep1", 0.999)
        (v,) = validate(bad)
        assert (v.assumption, v.field) == ("A7", "item1.defect_fraction_mean")

    def test_slow_screening_reported_as_a6(self, base):
        bad = set_flat(base, "x2", 900.0)
        assert [v.assumption for v in validate(bad)] == ["A6", "A7"]

    def test_every_violation_reported(self, base):
        bad = set_flat(set_flat(set_flat(base, "ch2", 0.5), "co", -1.0), "d1", 0.0)
        got = {(v.assumption, v.field) for v in validate(bad)}
        assert got == {
            ("domain", "item1.demand_rate"),
            ("domain", "ordering_cost"),
            ("A9", "item2.holding_cost"),
        }

    def test_equal_holding_costs_rejected(self, base):
        assert [v.assumption for v in validate(set_flat(base, "ch2", 1.0))] == ["A9"]

    def test_defect_checks_skipped_for_perfect_quality(self):
        p = reference_instance()
        p = set_flat(set_flat(p, "x1", math.inf), "ep1", 0.5)
        assert validate(p, defects=False) == []
        assert validate(p) != []

    def test_negative_transfer_cost(self, base):
        (v,) = validate(set_flat(base, "ct", -0.1))
        assert v.field == "transfer_cost"


class TestPolicy:
    @pytest.mark.parametrize("tau,T", [(0.5, 0.0), (0.0, -1.0), (-0.1, 1.0), (1.5, 1.0),
                                       (math.nan, 1.0)])
    def test_rejects_out_of_range(self, tau, T):
        with pytest.raises(InfeasiblePolicyError):
            Policy(tau, T)

    def test_edges_allowed(self):
        Policy(0.0, 1.0)
        Policy(1.0, 1.0)


class TestBasicCost:
    def test_no_substitution_example(self):
        c = tac_basic(reference_instance(), Policy(1.0, 1.0))
        assert (c.ordering, c.holding1, c.holding2, c.transfer) == (4500, 500, 2500, 0)
        assert c.total == 7500

    def test_full_substitution_example(self):
        c = tac_basic(reference_instance(), Policy(0.0, 1.0))
        assert (c.ordering, c.holding1, c.holding2, c.transfer) == (4500, 1000, 0, 1000)
        assert c.total == 6500

    def test_agrees_with_trajectory_integral(self):
        p = reference_instance()
        pol = Policy(0.25, 2.09165)
        _, cycle = simulate_cycle(p, pol)
        assert rel(tac_basic(p, pol).total, cycle.total / pol.cycle_time) < 1e-9

    def test_total_is_component_sum(self):
        c = CostBreakdown(1.0, 2.0, 3.0, 4.0)
        assert c.total == 10.0
        assert c.as_dict()["total"] == 10.0


class TestScreenedCost:
    def test_reduces_bitwise_without_defects(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            p = random_params(rng, defects=False)
            pol = random_policy(rng, p)
            assert tac_eoqiss(p, pol) == tac_basic(p, pol)

    def test_no_substitution_without_item2_defects(self, base):
        p = set_flat(base, "ep2", 0.0)
        c = tac_eoqiss(p, Policy(1.3, 1.3))
        assert c.holding2 == 5 * 1000 * 1.3 / 2

    def test_agrees_with_trajectory_integral(self, base):
        pol = Policy(0.25015931439586275, 2.091163690632391)
        _, cycle = simulate_cycle(base, pol)
        assert rel(tc_eoqiss(base, pol), cycle.total) < 1e-9

    def test_per_cycle_is_average_times_cycle(self, base):
        pol = Policy(0.3, 1.7)
        assert rel(tc_eoqiss(base, pol) / 1.7, tac_eoqiss(base, pol).total) < 1e-15

    def test_typeset_item2_term_differs(self, base):
        pol = Policy(0.25, 2.09)
        fixed, typeset = tac_eoqiss(base, pol), tac_eoqiss_printed(base, pol)
        assert fixed.holding1 == typeset.holding1
        # D2 tau^2 instead of D2^2 tau^2: the defective term shrinks by a factor D2
        k2 = base.item2.defect_holding_factor
        extra = 5 * k2 * 0.25 ** 2 / 2.09
        assert math.isclose(fixed.holding2 - typeset.holding2, extra * (1000 ** 2 - 1000),
                            rel_tol=1e-9)

    def test_components_non_negative(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            p = random_params(rng)
            c = tac_eoqiss(p, random_policy(rng, p))
            assert min(getattr(c, f.name) for f in fields(c)) >= 0

    def test_scale_covariance(self):
        rng = np.random.default_rng(13)
        lam = 3.7
        for _ in range(20):
            p = random_params(rng)
            pol = random_policy(rng, p)
            scaled = replace(
                p,
                item1=replace(p.item1, holding_cost=p.item1.holding_cost * lam),
                item2=replace(p.item2, holding_cost=p.item2.holding_cost * lam),
                ordering_cost=p.ordering_cost * lam,
                transfer_cost=p.transfer_cost * lam,
            )
            a, b = tac_eoqiss(p, pol).scaled(lam), tac_eoqiss(scaled, pol)
            for f in fields(a):
                assert math.isclose(getattr(a, f.name), getattr(b, f.name), rel_tol=1e-12)

    def test_does_not_mutate(self, base):
        snapshot = base.to_flat()
        tac_eoqiss(base, Policy(0.2, 2.0))
        assert base.to_flat() == snapshot


class TestLots:
    def test_perfect_quality(self):
        lots = lot_plan(reference_instance(), Policy(0.25, 2.09165))
        assert lots.lot2 == 250
        assert math.isclose(lots.lot1, 3933.3, rel_tol=1e-12)

    def test_item2_defects_inflate_lot(self):
        lots = lot_plan(reference_instance(ep2=0.02), Policy(0.25, 2.0))
        assert math.isclose(lots.lot2, 250 / 0.98, rel_tol=1e-15)
        assert round(lots.lot2, 2) == 255.10

    def test_full_substitution_orders_no_item2(self, base):
        assert lot_plan(base, Policy(0.0, 2.0)).lot2 == 0.0

    def test_terminal_inventory_closes(self):
        rng = np.random.default_rng(14)
        for _ in range(30):
            p = random_params(rng)
            trace, _ = simulate_cycle(p, random_policy(rng, p))
            scale = trace.derived_lots.lot1
            assert abs(trace.terminal1) <= 1e-9 * scale
            assert abs(trace.terminal2) <= 1e-9 * scale

    def test_screening_epochs(self, base):
        lots = lot_plan(base, Policy(0.25, 2.0))
        ep = screening_epochs(base, lots)
        assert ep.ts1 == lots.lot1 / 175200 and ep.ts2 == lots.lot2 / 175100


def test_flat_round_trip(base):
    assert SystemParams.from_flat(base.to_flat()) == base


def test_set_flat_accepts_dotted_path(base):
    assert set_flat(base, "item2.holding_cost", 7.0).item2.holding_cost == 7.0
    with pytest.raises(KeyError):
        set_flat(base, "item3.holding_cost", 1.0)
