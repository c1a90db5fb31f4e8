"""Synthetic demand scenarios.

Larger scenarios are produced by fitting a per-part normal distribution to an
observed order list and drawing new order lines from it. Random streams use
numpy's ``Generator(PCG64(seed))`` (identifier ``RNG_ALGORITHM``), and each
order line consumes its draws in the fixed order part, client, quantity.

``synthetic_instance`` builds whole instances (geography, tariffs,
economics, suppliers and orders) shaped like a small regional spare-parts network, for
demos and scale tests.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from amsupply.costmatrix import RawTravelMatrix
from amsupply.model import EconomicParams, Instance, Location, OrderLine, Part, Supplier
from amsupply.shipping import Parcel, TariffRow, TariffTable, delivery_quote, quote_matrix

RNG_ALGORITHM = "numpy.random.Generator(PCG64)"

# default economics
FACILITY_FIXED_COST = 20_000.00
PRINTER_FIXED_COST = 11_500.00
PRINTER_CAPACITY_HOURS = 2_112.0
MAX_PRINTERS = 5
PRINT_COSTS = {"part1": 22.00, "part2": 7.00, "part3": 21.00, "part4": 14.00, "part5": 47.00}


class EmptyPartError(ValueError):
    pass


@dataclass(frozen=True)
class PartDemand:
    mean: float
    stddev: float
    client_weights: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class DemandDistribution:
    parts: dict[str, PartDemand]


def fit_demand_distribution(orders: Iterable[OrderLine], parts: Sequence[str] | None = None) -> DemandDistribution:
    """Per-part mean and population deviation of order quantities.

    Client weights are each client's share of that part's order lines.
    """
    by_part: dict[str, list[OrderLine]] = {}
    for order in orders:
        by_part.setdefault(order.part, []).append(order)
    wanted = sorted(by_part) if parts is None else list(parts)
    fitted = {}
    for p in wanted:
        lines = by_part.get(p)
        if not lines:
            raise EmptyPartError(f"no orders for part {p!r}")
        qty = [o.quantity for o in lines]
        counts: dict[str, int] = {}
        for o in lines:
            counts[o.client] = counts.get(o.client, 0) + 1
        fitted[p] = PartDemand(
            mean=statistics.fmean(qty),
            stddev=statistics.pstdev(qty) if len(qty) > 1 else 0.0,
            client_weights={c: n / len(lines) for c, n in sorted(counts.items())},
        )
    return DemandDistribution(fitted)


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def generate_orders(dist: DemandDistribution, count: int, seed: int, clients: Sequence[Location | str]) -> list[OrderLine]:
    if count < 1:
        raise ValueError("count must be >= 1")
    ids = [c.id if isinstance(c, Location) else c for c in clients]
    if not ids:
        raise ValueError("client list is empty")
    part_ids = sorted(dist.parts)
    weights = {}
    for p in part_ids:
        w = np.array([dist.parts[p].client_weights.get(c, 0.0) for c in ids])
        # clients outside the fitted set only ever appear via the uniform fallback
        weights[p] = w / w.sum() if w.sum() > 0 else np.full(len(ids), 1.0 / len(ids))
    rng = np.random.Generator(np.random.PCG64(seed))
    out = []
    for _ in range(count):
        p = part_ids[int(rng.integers(len(part_ids)))]
        client = ids[int(rng.choice(len(ids), p=weights[p]))]
        d = dist.parts[p]
        qty = max(1, _round_half_up(float(rng.normal(d.mean, d.stddev))))
        out.append(OrderLine(client, p, qty))
    return out


# -- synthetic instances -----------------------------------------------------

EARTH_RADIUS_KM = 6371.0088


def great_circle_km(a: Location, b: Location) -> float:
    lat1, lon1, lat2, lon2 = map(math.radians, (a.latitude, a.longitude, b.latitude, b.longitude))
    h = math.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(math.sqrt(h))


def synthetic_cities(n: int, seed: int, region: tuple[float, float, float, float] = (-30.0, -8.0, -55.0, -35.0)) -> list[Location]:
    """``n`` points spread over a lat/lon box, one postal prefix each."""
    rng = np.random.Generator(np.random.PCG64(seed))
    lat_lo, lat_hi, lon_lo, lon_hi = region
    cities = []
    for k in range(n):
        lat = round(float(rng.uniform(lat_lo, lat_hi)), 4)
        lon = round(float(rng.uniform(lon_lo, lon_hi)), 4)
        cities.append(Location(f"C{k + 1:03d}", f"City {k + 1}", lat, lon, postal_code=f"{k + 1:03d}00-000"))
    return cities


def road_matrix(cities: Sequence[Location], detour: float = 1.25, speed_kmh: float = 70.0) -> RawTravelMatrix:
    ids = tuple(c.id for c in cities)
    n = len(cities)
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                dist[i, j] = round(great_circle_km(cities[i], cities[j]) * detour * 1000.0)
    time = np.round(dist / 1000.0 / speed_kmh * 3600.0)
    return RawTravelMatrix(ids, dist, time)


SIZE_CLASSES = (("small", 200.0), ("medium", 400.0), ("large", 800.0))


def synthetic_tariff(cities: Sequence[Location], handling_hours: float = 6.0, km_per_hour: float = 80.0) -> TariffTable:
    """Distance-driven postal tariff between the cities' postal prefixes."""
    rows = []
    factors = {"small": 1.0, "medium": 1.4, "large": 2.0}
    for a in cities:
        for b in cities:
            if a.id == b.id:
                continue
            km = great_circle_km(a, b) * 1.25
            hours = float(round(handling_hours + km / km_per_hour))
            for name, _ in SIZE_CLASSES:
                cost = round((12.0 + 0.01 * km) * factors[name], 2)
                rows.append(TariffRow(a.postal_code[:3], b.postal_code[:3], name, cost, hours))
    return TariffTable(rows, SIZE_CLASSES)


def synthetic_instance(
    n_cities: int = 32,
    n_orders: int = 87,
    seed: int = 1,
    demand_cities: int | None = 16,
    mean_quantity: float = 3.0,
    stddev_quantity: float = 2.0,
) -> Instance:
    """A regional instance: five parts, two suppliers, postal delivery.

    Demand is spread over ``demand_cities`` of the cities (all if None).
    Print time plus internal order time peaks at exactly 4 hours.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    cities = synthetic_cities(n_cities, seed)
    matrix = road_matrix(cities)
    tariff = synthetic_tariff(cities)

    print_hours = {"part1": 3.0, "part2": 1.5, "part3": 2.5, "part4": 2.0, "part5": 3.0}
    dims = {"part1": (80, 40, 30), "part2": (30, 20, 10), "part3": (120, 60, 40), "part4": (60, 60, 20), "part5": (180, 90, 60)}
    parts = tuple(
        Part(
            id=p,
            width=float(dims[p][0]),
            height=float(dims[p][1]),
            depth=float(dims[p][2]),
            print_time_hours=print_hours[p],
            print_unit_cost=PRINT_COSTS[p],
            internal_order_cost=5.0,
            internal_order_time_hours=1.0,
        )
        for p in sorted(PRINT_COSTS)
    )
    # inter-IF delivery uses the bulkiest part's parcel
    bulky = max(parts, key=lambda p: p.width * p.height * p.depth)
    parcel = Parcel(bulky.width, bulky.height, bulky.depth)
    dc, dt = quote_matrix(cities, cities, parcel, tariff)
    economics = EconomicParams(
        facility_fixed_cost=FACILITY_FIXED_COST,
        printer_fixed_cost=PRINTER_FIXED_COST,
        printer_capacity_hours=PRINTER_CAPACITY_HOURS,
        max_printers=MAX_PRINTERS,
        delivery_cost={k: v for k, v in dc.items() if k[0] != k[1]},
        delivery_time_hours={k: v for k, v in dt.items() if k[0] != k[1]},
    )

    suppliers = []
    for s, (markup, order_hours) in enumerate(((8.0, 24.0), (12.0, 12.0))):
        home = cities[int(rng.integers(n_cities))]
        cost_map, time_map = {}, {}
        for c in cities:
            quote = delivery_quote(home, c, parcel, tariff)
            # suppliers dispatch from their own warehouse even to their home city
            cost_map[c.id] = quote[0] if home.id != c.id else 12.0
            time_map[c.id] = quote[1] if home.id != c.id else 6.0
        suppliers.append(
            Supplier(
                id=f"ES{s + 1}",
                price={p: round(PRINT_COSTS[p] * markup, 2) for p in PRINT_COSTS},
                order_time_hours={p: order_hours for p in PRINT_COSTS},
                delivery_cost=cost_map,
                delivery_time_hours=time_map,
            )
        )

    pool = cities if demand_cities is None else [cities[i] for i in sorted(rng.choice(n_cities, size=demand_cities, replace=False))]
    dist = DemandDistribution(
        {
            p: PartDemand(mean_quantity, stddev_quantity, {c.id: float(w) for c, w in zip(pool, rng.dirichlet(np.ones(len(pool))))})
            for p in sorted(PRINT_COSTS)
        }
    )
    orders = generate_orders(dist, n_orders, seed, pool)
    return Instance(
        locations=tuple(cities),
        parts=parts,
        suppliers=tuple(suppliers),
        orders=tuple(orders),
        economics=economics,
        matrix=matrix,
        metadata={"generator": "synthetic_instance", "seed": seed, "rng": RNG_ALGORITHM},
    )
