"""Design-phase data: coefficient tables, solutions, cost and constraint audits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable

from amsupply.model import EconomicParams, Instance, MissingCoefficientError
from amsupply.pmedian import ClusterSolution

# lead times are sums of decimal hours; compare with a little slack
LEAD_TOLERANCE = 1e-9
CAPACITY_TOLERANCE = 1e-9

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"


class DesignModelError(ValueError):
    pass


class DanglingReferenceError(KeyError):
    def __str__(self) -> str:
        return self.args[0]


def printers_needed(load_hours: float, capacity_hours: float) -> int:
    """Smallest printer count whose halved capacity covers ``load_hours`` (at least 1)."""
    half = capacity_hours / 2.0
    n = math.ceil(load_hours / half - CAPACITY_TOLERANCE)
    return max(1, n)


@dataclass(frozen=True, eq=False)
class DesignModel:
    ifs: tuple[str, ...]
    parts: tuple[str, ...]
    suppliers: tuple[str, ...]
    demand: dict[tuple[str, str], float]
    orders: dict[tuple[str, str], int]
    econ: EconomicParams
    print_time: dict[tuple[str, str], float]
    unit_cost: dict[tuple[str, str], float]
    order_cost: dict[tuple[str, str], float]
    order_time: dict[tuple[str, str], float]
    price: dict[tuple[str, str], float]
    supplier_order_time: dict[tuple[str, str], float]
    supplier_ship_cost: dict[tuple[str, str], float]
    supplier_ship_time: dict[tuple[str, str], float]
    ship_cost: dict[tuple[str, str], float]
    ship_time: dict[tuple[str, str], float]
    max_lead_hours: float

    def __post_init__(self):
        if not self.max_lead_hours > 0:
            raise DesignModelError("max_lead_hours must be > 0")
        for key, d in self.demand.items():
            if d < 0:
                raise DesignModelError(f"negative demand at {key}")
            if d > 0 and self.orders.get(key, 0) < 1:
                raise DesignModelError(f"demand at {key} needs at least one order")

    @property
    def half_capacity(self) -> float:
        return self.econ.printer_capacity_hours / 2.0

    @property
    def has_demand(self) -> dict[tuple[str, str], bool]:
        return {(r, p): self.demand.get((r, p), 0) > 0 for r in self.ifs for p in self.parts}

    def demanded_pairs(self) -> list[tuple[str, str]]:
        return [(r, p) for r in self.ifs for p in self.parts if self.demand.get((r, p), 0) > 0]

    def sells(self, s: str, p: str) -> bool:
        return (s, p) in self.price

    def internal_lead(self, r: str, dest: str, p: str) -> float:
        return self.print_time[(r, p)] + self.ship_time[(r, dest)] + self.order_time[(r, p)]

    def external_lead(self, s: str, dest: str, p: str) -> float:
        return self.supplier_ship_time[(s, dest)] + self.supplier_order_time[(s, p)]

    def internal_cost(self, r: str, dest: str, p: str) -> float:
        d, no = self.demand[(dest, p)], self.orders[(dest, p)]
        return self.unit_cost[(r, p)] * d + self.ship_cost[(r, dest)] * no + self.order_cost[(r, p)] * no

    def external_cost(self, s: str, dest: str, p: str) -> float:
        d, no = self.demand[(dest, p)], self.orders[(dest, p)]
        return self.price[(s, p)] * d + self.supplier_ship_cost[(s, dest)] * no

    def internal_load(self, r: str, dest: str, p: str) -> float:
        return self.demand[(dest, p)] * self.print_time[(r, p)]

    def with_max_lead(self, hours: float) -> "DesignModel":
        return replace(self, max_lead_hours=hours)


@dataclass(frozen=True)
class DesignSolution:
    status: str
    open_pcs: tuple[str, ...] = ()
    printers: dict[str, int] = field(default_factory=dict)
    internal_routes: tuple[tuple[str, str, str], ...] = ()
    external_routes: tuple[tuple[str, str, str], ...] = ()
    total_cost: float = 0.0
    worst_lead_hours: float = 0.0
    solve_seconds: float = 0.0
    witnesses: tuple[tuple[str, str], ...] = ()

    @property
    def pc_count(self) -> int:
        return len(self.open_pcs)

    @property
    def printer_total(self) -> int:
        return sum(self.printers.values())

    def signature(self) -> tuple:
        """Everything that identifies the design itself, without timing."""
        return (
            self.status,
            self.open_pcs,
            tuple(sorted(self.printers.items())),
            self.internal_routes,
            self.external_routes,
        )


def build_design_model(clusters: ClusterSolution, instance: Instance, max_lead_hours: float) -> DesignModel:
    """Assemble every coefficient the design solver needs.

    Coefficients are only required where a route could carry demand: all
    (IF, part) production data for demanded parts, IF-to-IF delivery into
    demanding IFs, and supplier data for the demanded parts they sell.
    """
    ifs = tuple(sorted(clusters.open_ifs))
    if_set = set(ifs)
    parts = tuple(sorted(p.id for p in instance.parts))
    part_by_id = {p.id: p for p in instance.parts}
    demand: dict[tuple[str, str], float] = {}
    orders: dict[tuple[str, str], int] = {}
    for (r, p), units in clusters.demand_table.items():
        if r not in if_set:
            raise DesignModelError(f"demand table references {r!r}, which is not an open IF")
        if p not in part_by_id:
            raise MissingCoefficientError("part", (p,))
        demand[(r, p)] = float(units)
        orders[(r, p)] = int(clusters.order_table.get((r, p), 0))
    demanded = sorted(k for k, v in demand.items() if v > 0)
    demanded_parts = sorted({p for _, p in demanded})
    dest_ifs = sorted({r for r, _ in demanded})

    pt, uc, ioc, ioct = {}, {}, {}, {}
    for p in demanded_parts:
        part = part_by_id[p]
        for r in ifs:
            pt[(r, p)] = part.print_time(r)
            uc[(r, p)] = part.unit_cost(r)
            ioc[(r, p)] = part.order_cost(r)
            ioct[(r, p)] = part.order_time(r)

    econ = instance.economics
    dc, dt = {}, {}
    for r in ifs:
        for dest in dest_ifs:
            dc[(r, dest)] = econ.ship_cost(r, dest)
            dt[(r, dest)] = econ.ship_time(r, dest)

    price, oct_, sdc, st = {}, {}, {}, {}
    for sup in instance.suppliers:
        sold = [p for p in demanded_parts if sup.sells(p)]
        for p in sold:
            price[(sup.id, p)] = sup.price[p]
            oct_[(sup.id, p)] = sup.order_time_hours[p]
        if sold:
            for dest in dest_ifs:
                sdc[(sup.id, dest)] = sup.shipping_cost(dest)
                st[(sup.id, dest)] = sup.shipping_time(dest)

    return DesignModel(
        ifs=ifs,
        parts=parts,
        suppliers=tuple(sorted(s.id for s in instance.suppliers)),
        demand=demand,
        orders=orders,
        econ=econ,
        print_time=pt,
        unit_cost=uc,
        order_cost=ioc,
        order_time=ioct,
        price=price,
        supplier_order_time=oct_,
        supplier_ship_cost=sdc,
        supplier_ship_time=st,
        ship_cost=dc,
        ship_time=dt,
        max_lead_hours=float(max_lead_hours),
    )


def _check_refs(solution: DesignSolution, model: DesignModel) -> None:
    ifs, parts, sups = set(model.ifs), set(model.parts), set(model.suppliers)
    for r in (*solution.open_pcs, *solution.printers):
        if r not in ifs:
            raise DanglingReferenceError(f"unknown IF {r!r} in design")
    for src, dest, p in solution.internal_routes:
        if src not in ifs or dest not in ifs or p not in parts:
            raise DanglingReferenceError(f"internal route {(src, dest, p)} references unknown ids")
    for s, dest, p in solution.external_routes:
        if s not in sups or dest not in ifs or p not in parts:
            raise DanglingReferenceError(f"external route {(s, dest, p)} references unknown ids")
        if not model.sells(s, p):
            raise DanglingReferenceError(f"supplier {s!r} does not sell {p!r}")


def evaluate_cost(solution: DesignSolution, model: DesignModel) -> float:
    """Annual cost of a design recomputed from the model coefficients."""
    _check_refs(solution, model)
    econ = model.econ
    terms = []
    for r in solution.open_pcs:
        terms.append(econ.facility_fixed_cost)
        terms.append(solution.printers.get(r, 0) * econ.printer_fixed_cost)
    for src, dest, p in solution.internal_routes:
        units, n_orders = model.demand[(dest, p)], model.orders[(dest, p)]
        terms.append(model.unit_cost[(src, p)] * units)
        terms.append(model.ship_cost[(src, dest)] * n_orders)
        terms.append(model.order_cost[(src, p)] * n_orders)
    for s, dest, p in solution.external_routes:
        units, n_orders = model.demand[(dest, p)], model.orders[(dest, p)]
        terms.append(model.price[(s, p)] * units)
        terms.append(model.supplier_ship_cost[(s, dest)] * n_orders)
    return math.fsum(terms)


@dataclass(frozen=True)
class ConstraintViolation:
    constraint: int  # family number, 7..17 in model order
    indices: tuple
    message: str


def check_feasibility(solution: DesignSolution, model: DesignModel) -> list[ConstraintViolation]:
    """Audit a design against the eleven constraint families.

    Families are numbered 7 to 17: 7 printer cap, 8 and 9 lead time, 10 printers
    only at PCs, 11 routes only from open PCs, 12 every PC supplies, 13 and 14
    routes only where demanded, 15 demand covered, 16 printer capacity, 17
    single sourcing.
    """
    out: list[ConstraintViolation] = []
    open_set = set(solution.open_pcs)
    max_p = model.econ.max_printers
    h = model.max_lead_hours + LEAD_TOLERANCE
    has_demand = lambda dest, p: model.demand.get((dest, p), 0) > 0  # noqa: E731

    for r in model.ifs:
        n = solution.printers.get(r, 0)
        if n > max_p:
            out.append(ConstraintViolation(7, (r,), f"{n} printers exceeds max {max_p}"))
        if r not in open_set and n > 0:
            out.append(ConstraintViolation(10, (r,), f"{n} printers at closed IF"))

    for src, dest, p in solution.internal_routes:
        if src not in open_set:
            out.append(ConstraintViolation(11, (src, dest, p), "route from a closed PC"))
        if not has_demand(dest, p):
            out.append(ConstraintViolation(13, (src, dest, p), "internal route without demand"))
            continue
        if (src, p) in model.print_time and (src, dest) in model.ship_time:
            lead = model.internal_lead(src, dest, p)
            if lead > h:
                out.append(ConstraintViolation(8, (src, dest, p), f"lead {lead:g} h > {model.max_lead_hours:g} h"))

    for s, dest, p in solution.external_routes:
        if not has_demand(dest, p):
            out.append(ConstraintViolation(14, (s, dest, p), "external route without demand"))
            continue
        if model.sells(s, p):
            lead = model.external_lead(s, dest, p)
            if lead > h:
                out.append(ConstraintViolation(9, (s, dest, p), f"lead {lead:g} h > {model.max_lead_hours:g} h"))

    supplied = {r: 0 for r in model.ifs}
    load = {r: 0.0 for r in model.ifs}
    for src, dest, p in solution.internal_routes:
        if src in supplied:
            supplied[src] += 1
            if has_demand(dest, p) and (src, p) in model.print_time:
                load[src] += model.internal_load(src, dest, p)
    for r in solution.open_pcs:
        if supplied.get(r, 0) < 1:
            out.append(ConstraintViolation(12, (r,), "open PC supplies no route"))
    half = model.half_capacity
    for r in model.ifs:
        cap = solution.printers.get(r, 0) * half
        if load[r] > cap + CAPACITY_TOLERANCE * max(1.0, cap):
            out.append(ConstraintViolation(16, (r,), f"load {load[r]:g} h exceeds {cap:g} h"))

    senders: dict[tuple[str, str], int] = {}
    for _, dest, p in (*solution.internal_routes, *solution.external_routes):
        senders[(dest, p)] = senders.get((dest, p), 0) + 1
    for dest, p in model.demanded_pairs():
        k = senders.get((dest, p), 0)
        if k < 1:
            out.append(ConstraintViolation(15, (dest, p), "demand not supplied"))
        elif k > 1:
            out.append(ConstraintViolation(17, (dest, p), f"{k} senders instead of one"))
    return out


def route_rows(solution: DesignSolution, model: DesignModel) -> tuple[list[dict], list[dict]]:
    internal = []
    for src, dest, p in solution.internal_routes:
        internal.append(
            {
                "source": src,
                "destination": dest,
                "part": p,
                "annual_units": model.demand[(dest, p)],
                "lead_hours": model.internal_lead(src, dest, p),
                "annual_cost": model.internal_cost(src, dest, p),
            }
        )
    external = []
    for s, dest, p in solution.external_routes:
        external.append(
            {
                "source": s,
                "destination": dest,
                "part": p,
                "annual_units": model.demand[(dest, p)],
                "lead_hours": model.external_lead(s, dest, p),
                "annual_cost": model.external_cost(s, dest, p),
            }
        )
    return internal, external


def solution_to_dict(solution: DesignSolution, model: DesignModel, timings: bool = True) -> dict:
    internal, external = route_rows(solution, model)
    data = {
        "status": solution.status,
        "max_lead_hours": model.max_lead_hours,
        "open_pcs": list(solution.open_pcs),
        "printers": dict(sorted(solution.printers.items())),
        "internal_routes": internal,
        "external_routes": external,
        "total_cost": solution.total_cost,
        "worst_lead_hours": solution.worst_lead_hours,
        "solve_seconds": solution.solve_seconds if timings else None,
    }
    if solution.witnesses:
        data["witnesses"] = [{"if": r, "part": p} for r, p in solution.witnesses]
    return data


def solution_from_dict(data: dict) -> DesignSolution:
    return DesignSolution(
        status=data["status"],
        open_pcs=tuple(data["open_pcs"]),
        printers={k: int(v) for k, v in data["printers"].items()},
        internal_routes=tuple((r["source"], r["destination"], r["part"]) for r in data["internal_routes"]),
        external_routes=tuple((r["source"], r["destination"], r["part"]) for r in data["external_routes"]),
        total_cost=float(data["total_cost"]),
        worst_lead_hours=float(data["worst_lead_hours"]),
        solve_seconds=float(data.get("solve_seconds") or 0.0),
        witnesses=tuple((w["if"], w["part"]) for w in data.get("witnesses", [])),
    )


def assemble_solution(
    model: DesignModel,
    internal: Iterable[tuple[str, str, str]],
    external: Iterable[tuple[str, str, str]],
    total_cost: float,
) -> DesignSolution:
    """Derive open PCs, printer counts and worst lead time from a route set."""
    internal = tuple(sorted(internal))
    external = tuple(sorted(external))
    load: dict[str, float] = {}
    for src, dest, p in internal:
        load[src] = load.get(src, 0.0) + model.internal_load(src, dest, p)
    printers = {r: printers_needed(load[r], model.econ.printer_capacity_hours) for r in sorted(load)}
    leads = [model.internal_lead(*k) for k in internal] + [model.external_lead(*k) for k in external]
    return DesignSolution(
        status=OPTIMAL,
        open_pcs=tuple(sorted(load)),
        printers=printers,
        internal_routes=internal,
        external_routes=external,
        total_cost=total_cost,
        worst_lead_hours=max(leads, default=0.0),
    )
