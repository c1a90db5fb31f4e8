import math

import numpy as np
import pytest

from amsupply.model import OrderLine
from amsupply.scenarios import (
    DemandDistribution,
    EmptyPartError,
    PartDemand,
    fit_demand_distribution,
    generate_orders,
    synthetic_instance,
)


def test_fit_two_orders():
    dist = fit_demand_distribution([OrderLine("A", "P", 2), OrderLine("B", "P", 4)])
    d = dist.parts["P"]
    assert (d.mean, d.stddev) == (3.0, 1.0)
    assert d.client_weights == {"A": 0.5, "B": 0.5}


def test_fit_single_order():
    d = fit_demand_distribution([OrderLine("A", "P", 7)]).parts["P"]
    assert (d.mean, d.stddev, d.client_weights) == (7.0, 0.0, {"A": 1.0})


def test_weights_follow_order_counts_not_quantities():
    d = fit_demand_distribution([OrderLine("A", "P", 100), OrderLine("B", "P", 1), OrderLine("B", "P", 1)]).parts["P"]
    assert d.client_weights == pytest.approx({"A": 1 / 3, "B": 2 / 3})


def test_case_study_shape_has_five_parts():
    inst = synthetic_instance(32, 87, seed=1)
    dist = fit_demand_distribution(inst.orders)
    assert len(dist.parts) == 5
    for d in dist.parts.values():
        assert d.stddev >= 0
        assert math.fsum(d.client_weights.values()) == pytest.approx(1.0)


def test_empty_part():
    with pytest.raises(EmptyPartError):
        fit_demand_distribution([OrderLine("A", "P", 1)], parts=["P", "Q"])


def test_thousand_lines_positive():
    dist = fit_demand_distribution(synthetic_instance(32, 87, seed=1).orders)
    clients = sorted({c for d in dist.parts.values() for c in d.client_weights})
    orders = generate_orders(dist, 1000, seed=2, clients=clients)
    assert len(orders) == 1000
    assert all(isinstance(o.quantity, int) and o.quantity >= 1 for o in orders)
    assert orders == generate_orders(dist, 1000, seed=2, clients=clients)
    assert orders != generate_orders(dist, 1000, seed=3, clients=clients)


def test_zero_spread_is_constant():
    dist = DemandDistribution({"P": PartDemand(5.0, 0.0, {"A": 1.0})})
    assert {o.quantity for o in generate_orders(dist, 200, seed=0, clients=["A"])} == {5}


def test_clamped_at_one():
    dist = DemandDistribution({"P": PartDemand(-10.0, 0.0, {"A": 1.0})})
    assert {o.quantity for o in generate_orders(dist, 20, seed=0, clients=["A"])} == {1}


def test_sample_mean_within_three_sigma():
    mean, sd, n = 50.0, 4.0, 20_000
    dist = DemandDistribution({"P": PartDemand(mean, sd, {"A": 1.0})})
    qty = np.array([o.quantity for o in generate_orders(dist, n, seed=11, clients=["A"])])
    assert abs(qty.mean() - mean) <= 3 * sd / math.sqrt(n)


def test_parts_drawn_uniformly():
    dist = DemandDistribution({p: PartDemand(3.0, 1.0, {"A": 1.0}) for p in ("P1", "P2", "P3")})
    orders = generate_orders(dist, 30_000, seed=5, clients=["A"])
    counts = np.array([sum(o.part == p for o in orders) for p in ("P1", "P2", "P3")])
    assert np.all(np.abs(counts / 30_000 - 1 / 3) < 0.015)


def test_clients_restricted_and_renormalized():
    dist = DemandDistribution({"P": PartDemand(3.0, 1.0, {"A": 0.5, "B": 0.25, "C": 0.25})})
    orders = generate_orders(dist, 6000, seed=1, clients=["B", "C"])
    share_b = sum(o.client == "B" for o in orders) / len(orders)
    assert {o.client for o in orders} == {"B", "C"}
    assert abs(share_b - 0.5) < 0.03


def test_uniform_fallback_for_unfitted_clients():
    dist = DemandDistribution({"P": PartDemand(3.0, 1.0, {"A": 1.0})})
    orders = generate_orders(dist, 3000, seed=1, clients=["X", "Y", "Z"])
    assert {o.client for o in orders} == {"X", "Y", "Z"}


@pytest.mark.parametrize("count, clients", [(0, ["A"]), (5, [])])
def test_bad_generation_arguments(count, clients):
    dist = DemandDistribution({"P": PartDemand(3.0, 1.0, {"A": 1.0})})
    with pytest.raises(ValueError):
        generate_orders(dist, count, seed=0, clients=clients)


def test_synthetic_instance_is_reproducible():
    a, b = synthetic_instance(12, 40, seed=9, demand_cities=6), synthetic_instance(12, 40, seed=9, demand_cities=6)
    assert a.orders == b.orders
    assert a.economics == b.economics
    assert a.suppliers == b.suppliers
    assert (a.matrix.distance == b.matrix.distance).all()


def test_synthetic_peak_local_lead_is_four_hours():
    inst = synthetic_instance(10, 30, seed=1, demand_cities=5)
    assert max(p.print_time_hours + p.internal_order_time_hours for p in inst.parts) == 4.0
