"""Domain types shared by the clustering and design phases.

Instances are read from (and written to) a JSON document with the top-level
keys ``locations``, ``parts``, ``suppliers``, ``orders``, ``economics`` and the
optional ``matrix`` and ``metadata``. See ``docs/instance_schema.md``.

Per-site coefficients (print time, print cost, internal order cost/time,
supplier delivery cost/time) are either a scalar that applies to every
internal facility or a ``{facility_id: value}`` map.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Any, Union

from amsupply.costmatrix import MatrixResolutionError, RawTravelMatrix

SiteValue = Union[float, dict[str, float]]

# objective comparisons between solvers use this absolute tolerance
COST_TOLERANCE = 1e-6


class InstanceFormatError(ValueError):
    """The instance file is not valid JSON or does not follow the schema."""


class UnknownReferenceError(ValueError):
    """An id used somewhere in the instance was never declared."""

    def __init__(self, key: str, where: str):
        super().__init__(f"unknown id {key!r} referenced at {where}")
        self.key = key
        self.where = where


class MissingCoefficientError(KeyError):
    """A cost or time coefficient needed for an index tuple is absent."""

    def __init__(self, what: str, index: tuple):
        super().__init__(f"missing {what} for {index!r}")
        self.what = what
        self.index = index

    def __str__(self) -> str:
        return self.args[0]


def money(value: float) -> Decimal:
    """Round a solver cost to cents for reporting."""
    return Decimal(repr(float(value))).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)


def site_value(value: SiteValue, site: str, what: str, owner: str) -> float:
    if isinstance(value, dict):
        try:
            return float(value[site])
        except KeyError:
            raise MissingCoefficientError(what, (owner, site)) from None
    return float(value)


def _site_values(value: SiteValue) -> list[float]:
    return list(value.values()) if isinstance(value, dict) else [value]


@dataclass(frozen=True)
class Location:
    id: str
    label: str
    latitude: float
    longitude: float
    postal_code: str | None = None
    candidate: bool = True


@dataclass(frozen=True)
class Part:
    id: str
    width: float
    height: float
    depth: float
    print_time_hours: SiteValue
    print_unit_cost: SiteValue
    internal_order_cost: SiteValue
    internal_order_time_hours: SiteValue

    def print_time(self, site: str) -> float:
        return site_value(self.print_time_hours, site, "print_time_hours", self.id)

    def unit_cost(self, site: str) -> float:
        return site_value(self.print_unit_cost, site, "print_unit_cost", self.id)

    def order_cost(self, site: str) -> float:
        return site_value(self.internal_order_cost, site, "internal_order_cost", self.id)

    def order_time(self, site: str) -> float:
        return site_value(
            self.internal_order_time_hours, site, "internal_order_time_hours", self.id
        )


@dataclass(frozen=True)
class Supplier:
    id: str
    price: dict[str, float]
    order_time_hours: dict[str, float]
    delivery_cost: SiteValue
    delivery_time_hours: SiteValue

    def sells(self, part: str) -> bool:
        return part in self.price and part in self.order_time_hours

    def shipping_cost(self, site: str) -> float:
        return site_value(self.delivery_cost, site, "supplier delivery_cost", self.id)

    def shipping_time(self, site: str) -> float:
        return site_value(self.delivery_time_hours, site, "supplier delivery_time_hours", self.id)


@dataclass(frozen=True)
class OrderLine:
    client: str
    part: str
    quantity: int


@dataclass(frozen=True)
class EconomicParams:
    facility_fixed_cost: float
    printer_fixed_cost: float
    printer_capacity_hours: float
    max_printers: int
    delivery_cost: dict[tuple[str, str], float] = field(default_factory=dict)
    delivery_time_hours: dict[tuple[str, str], float] = field(default_factory=dict)
    delivery_symmetric: bool = False

    def _lookup(self, table: dict[tuple[str, str], float], a: str, b: str, what: str) -> float:
        if (a, b) in table:
            return table[(a, b)]
        if self.delivery_symmetric and (b, a) in table:
            return table[(b, a)]
        if a == b:
            return 0.0
        raise MissingCoefficientError(what, (a, b))

    def ship_cost(self, origin: str, destination: str) -> float:
        return self._lookup(self.delivery_cost, origin, destination, "delivery_cost")

    def ship_time(self, origin: str, destination: str) -> float:
        return self._lookup(self.delivery_time_hours, origin, destination, "delivery_time_hours")


@dataclass(frozen=True)
class Instance:
    locations: tuple[Location, ...]
    parts: tuple[Part, ...]
    suppliers: tuple[Supplier, ...]
    orders: tuple[OrderLine, ...]
    economics: EconomicParams
    matrix: RawTravelMatrix | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    def location(self, location_id: str) -> Location:
        for loc in self.locations:
            if loc.id == location_id:
                return loc
        raise UnknownReferenceError(location_id, "locations")

    def part(self, part_id: str) -> Part:
        for part in self.parts:
            if part.id == part_id:
                return part
        raise UnknownReferenceError(part_id, "parts")

    @property
    def candidates(self) -> list[str]:
        return sorted(loc.id for loc in self.locations if loc.candidate)

    @property
    def clients(self) -> list[str]:
        return sorted({o.client for o in self.orders})

    def client_demand(self) -> dict[str, int]:
        """Total units ordered per client, over all parts."""
        demand: dict[str, int] = {}
        for order in self.orders:
            demand[order.client] = demand.get(order.client, 0) + order.quantity
        return dict(sorted(demand.items()))


# -- validation ----------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    code: str
    path: str
    message: str


def _check_nonneg(values, code: str, path: str, out: list[Violation]) -> None:
    for v in values:
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
            out.append(Violation(code, path, f"expected a finite value >= 0, got {v!r}"))
            return


def validate_instance(instance: Instance) -> list[Violation]:
    """Return every invariant violation; an empty list means the instance is valid."""
    out: list[Violation] = []
    loc_ids: set[str] = set()
    for i, loc in enumerate(instance.locations):
        path = f"locations[{i}]"
        if loc.id in loc_ids:
            out.append(Violation("duplicate_id", f"{path}.id", f"location id {loc.id!r} repeated"))
        loc_ids.add(loc.id)
        if not -90.0 <= loc.latitude <= 90.0:
            out.append(Violation("latitude_range", f"{path}.latitude", f"{loc.latitude} not in [-90, 90]"))
        if not -180.0 <= loc.longitude <= 180.0:
            out.append(
                Violation("longitude_range", f"{path}.longitude", f"{loc.longitude} not in [-180, 180]")
            )

    part_ids: set[str] = set()
    for i, part in enumerate(instance.parts):
        path = f"parts[{i}]"
        if part.id in part_ids:
            out.append(Violation("duplicate_id", f"{path}.id", f"part id {part.id!r} repeated"))
        part_ids.add(part.id)
        for dim in ("width", "height", "depth"):
            if not getattr(part, dim) > 0:
                out.append(Violation("nonpositive_dimension", f"{path}.{dim}", "dimension must be > 0"))
        _check_nonneg(_site_values(part.print_time_hours), "negative_time", f"{path}.print_time_hours", out)
        _check_nonneg(
            _site_values(part.internal_order_time_hours),
            "negative_time",
            f"{path}.internal_order_time_hours",
            out,
        )
        _check_nonneg(_site_values(part.print_unit_cost), "negative_cost", f"{path}.print_unit_cost", out)
        _check_nonneg(
            _site_values(part.internal_order_cost), "negative_cost", f"{path}.internal_order_cost", out
        )
        for name in ("print_time_hours", "print_unit_cost", "internal_order_cost", "internal_order_time_hours"):
            value = getattr(part, name)
            if isinstance(value, dict):
                for site in value:
                    if site not in loc_ids:
                        out.append(Violation("unknown_location", f"{path}.{name}.{site}", f"unknown location {site!r}"))

    sup_ids: set[str] = set()
    for i, sup in enumerate(instance.suppliers):
        path = f"suppliers[{i}]"
        if sup.id in sup_ids:
            out.append(Violation("duplicate_id", f"{path}.id", f"supplier id {sup.id!r} repeated"))
        sup_ids.add(sup.id)
        _check_nonneg(sup.price.values(), "negative_cost", f"{path}.price", out)
        _check_nonneg(sup.order_time_hours.values(), "negative_time", f"{path}.order_time_hours", out)
        _check_nonneg(_site_values(sup.delivery_cost), "negative_cost", f"{path}.delivery_cost", out)
        _check_nonneg(_site_values(sup.delivery_time_hours), "negative_time", f"{path}.delivery_time_hours", out)
        for name in ("price", "order_time_hours"):
            for pid in getattr(sup, name):
                if pid not in part_ids:
                    out.append(Violation("unknown_part", f"{path}.{name}.{pid}", f"unknown part {pid!r}"))
        for name in ("delivery_cost", "delivery_time_hours"):
            value = getattr(sup, name)
            if isinstance(value, dict):
                for site in value:
                    if site not in loc_ids:
                        out.append(Violation("unknown_location", f"{path}.{name}.{site}", f"unknown location {site!r}"))

    for i, order in enumerate(instance.orders):
        path = f"orders[{i}]"
        if order.client not in loc_ids:
            out.append(Violation("unknown_location", f"{path}.client", f"unknown location {order.client!r}"))
        if order.part not in part_ids:
            out.append(Violation("unknown_part", f"{path}.part", f"unknown part {order.part!r}"))
        if isinstance(order.quantity, bool) or not isinstance(order.quantity, int):
            out.append(Violation("noninteger_quantity", f"{path}.quantity", f"{order.quantity!r} is not an integer"))
        elif order.quantity <= 0:
            out.append(Violation("nonpositive_quantity", f"{path}.quantity", f"quantity {order.quantity} <= 0"))

    econ = instance.economics
    if not econ.facility_fixed_cost >= 0:
        out.append(Violation("negative_cost", "economics.facility_fixed_cost", "must be >= 0"))
    if not econ.printer_fixed_cost >= 0:
        out.append(Violation("negative_cost", "economics.printer_fixed_cost", "must be >= 0"))
    if not econ.printer_capacity_hours > 0:
        out.append(Violation("nonpositive_capacity", "economics.printer_capacity_hours", "must be > 0"))
    if isinstance(econ.max_printers, bool) or not isinstance(econ.max_printers, int) or econ.max_printers < 1:
        out.append(Violation("max_printers", "economics.max_printers", "must be an integer >= 1"))
    for name in ("delivery_cost", "delivery_time_hours"):
        table = getattr(econ, name)
        code = "negative_cost" if name == "delivery_cost" else "negative_time"
        for (a, b), v in table.items():
            for end in (a, b):
                if end not in loc_ids:
                    out.append(Violation("unknown_location", f"economics.{name}.{a}->{b}", f"unknown location {end!r}"))
            _check_nonneg([v], code, f"economics.{name}.{a}->{b}", out)

    if instance.matrix is not None:
        for mid in instance.matrix.ids:
            if mid not in loc_ids:
                out.append(Violation("unknown_location", f"matrix.{mid}", f"unknown location {mid!r}"))
        out.extend(
            Violation(code, f"matrix.{where}", msg) for code, where, msg in instance.matrix.problems()
        )
    return out


# -- JSON (de)serialization ------------------------------------------------


def _num(raw: dict, key: str, where: str) -> float:
    try:
        value = raw[key]
    except KeyError:
        raise InstanceFormatError(f"{where}: missing key {key!r}") from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InstanceFormatError(f"{where}.{key}: expected a number, got {value!r}")
    return float(value)


def _site(raw: dict, key: str, where: str) -> SiteValue:
    value = raw.get(key)
    if isinstance(value, dict):
        out = {}
        for site, v in value.items():
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise InstanceFormatError(f"{where}.{key}.{site}: expected a number")
            out[str(site)] = float(v)
        return out
    return _num(raw, key, where)


def _str(raw: dict, key: str, where: str) -> str:
    try:
        value = raw[key]
    except KeyError:
        raise InstanceFormatError(f"{where}: missing key {key!r}") from None
    if not isinstance(value, str):
        raise InstanceFormatError(f"{where}.{key}: expected a string")
    return value


def _number_map(raw: dict, key: str, where: str) -> dict[str, float]:
    value = raw.get(key, {})
    if not isinstance(value, dict):
        raise InstanceFormatError(f"{where}.{key}: expected an object")
    return {str(k): _num(value, k, f"{where}.{key}") for k in value}


def instance_from_dict(data: dict) -> Instance:
    """Build an Instance from decoded JSON, resolving every id reference."""
    if not isinstance(data, dict):
        raise InstanceFormatError("top level must be an object")
    for key in ("locations", "parts", "suppliers", "orders", "economics"):
        if key not in data:
            raise InstanceFormatError(f"missing top-level key {key!r}")

    locations = []
    for i, raw in enumerate(data["locations"]):
        where = f"locations[{i}]"
        postal = raw.get("postal_code")
        locations.append(
            Location(
                id=_str(raw, "id", where),
                label=str(raw.get("label", raw.get("id"))),
                latitude=_num(raw, "latitude", where),
                longitude=_num(raw, "longitude", where),
                postal_code=None if postal is None else str(postal),
                candidate=bool(raw.get("candidate", True)),
            )
        )
    loc_ids = {loc.id for loc in locations}

    parts = []
    for i, raw in enumerate(data["parts"]):
        where = f"parts[{i}]"
        parts.append(
            Part(
                id=_str(raw, "id", where),
                width=_num(raw, "width", where),
                height=_num(raw, "height", where),
                depth=_num(raw, "depth", where),
                print_time_hours=_site(raw, "print_time_hours", where),
                print_unit_cost=_site(raw, "print_unit_cost", where),
                internal_order_cost=_site(raw, "internal_order_cost", where),
                internal_order_time_hours=_site(raw, "internal_order_time_hours", where),
            )
        )
    part_ids = {p.id for p in parts}

    def need_loc(key: str, where: str) -> str:
        if key not in loc_ids:
            raise UnknownReferenceError(key, where)
        return key

    def need_part(key: str, where: str) -> str:
        if key not in part_ids:
            raise UnknownReferenceError(key, where)
        return key

    for part in parts:
        for name in ("print_time_hours", "print_unit_cost", "internal_order_cost", "internal_order_time_hours"):
            value = getattr(part, name)
            if isinstance(value, dict):
                for site in value:
                    need_loc(site, f"parts[{part.id}].{name}")

    suppliers = []
    for i, raw in enumerate(data["suppliers"]):
        where = f"suppliers[{i}]"
        sup = Supplier(
            id=_str(raw, "id", where),
            price=_number_map(raw, "price", where),
            order_time_hours=_number_map(raw, "order_time_hours", where),
            delivery_cost=_site(raw, "delivery_cost", where),
            delivery_time_hours=_site(raw, "delivery_time_hours", where),
        )
        for pid in list(sup.price) + list(sup.order_time_hours):
            need_part(pid, f"{where}.price")
        for name in ("delivery_cost", "delivery_time_hours"):
            value = getattr(sup, name)
            if isinstance(value, dict):
                for site in value:
                    need_loc(site, f"{where}.{name}")
        suppliers.append(sup)

    orders = []
    for i, raw in enumerate(data["orders"]):
        where = f"orders[{i}]"
        qty = raw.get("quantity")
        if isinstance(qty, float) and qty.is_integer():
            qty = int(qty)
        if isinstance(qty, bool) or not isinstance(qty, int):
            raise InstanceFormatError(f"{where}.quantity: expected an integer, got {qty!r}")
        orders.append(
            OrderLine(
                client=need_loc(_str(raw, "client", where), f"{where}.client"),
                part=need_part(_str(raw, "part", where), f"{where}.part"),
                quantity=qty,
            )
        )

    raw_econ = data["economics"]
    cost: dict[tuple[str, str], float] = {}
    time: dict[tuple[str, str], float] = {}
    for i, row in enumerate(raw_econ.get("delivery", [])):
        where = f"economics.delivery[{i}]"
        key = (
            need_loc(_str(row, "origin", where), where),
            need_loc(_str(row, "destination", where), where),
        )
        if "cost" in row:
            cost[key] = _num(row, "cost", where)
        if "time_hours" in row:
            time[key] = _num(row, "time_hours", where)
    max_printers = raw_econ.get("max_printers")
    if isinstance(max_printers, float) and max_printers.is_integer():
        max_printers = int(max_printers)
    if isinstance(max_printers, bool) or not isinstance(max_printers, int):
        raise InstanceFormatError("economics.max_printers: expected an integer")
    economics = EconomicParams(
        facility_fixed_cost=_num(raw_econ, "facility_fixed_cost", "economics"),
        printer_fixed_cost=_num(raw_econ, "printer_fixed_cost", "economics"),
        printer_capacity_hours=_num(raw_econ, "printer_capacity_hours", "economics"),
        max_printers=max_printers,
        delivery_cost=cost,
        delivery_time_hours=time,
        delivery_symmetric=bool(raw_econ.get("delivery_symmetric", False)),
    )

    matrix = None
    if data.get("matrix") is not None:
        rows = []
        for i, row in enumerate(data["matrix"]):
            where = f"matrix[{i}]"
            rows.append(
                (
                    need_loc(_str(row, "origin", where), where),
                    need_loc(_str(row, "destination", where), where),
                    _num(row, "distance_m", where),
                    _num(row, "travel_time_s", where),
                )
            )
        try:
            matrix = RawTravelMatrix.from_rows(rows, [loc.id for loc in locations])
        except MatrixResolutionError as exc:
            raise InstanceFormatError(f"matrix: {exc}") from exc

    return Instance(
        locations=tuple(locations),
        parts=tuple(parts),
        suppliers=tuple(suppliers),
        orders=tuple(orders),
        economics=economics,
        matrix=matrix,
        metadata=dict(data.get("metadata", {})),
    )


def instance_to_dict(instance: Instance) -> dict:
    locations = []
    for loc in instance.locations:
        row: dict[str, Any] = {
            "id": loc.id,
            "label": loc.label,
            "latitude": loc.latitude,
            "longitude": loc.longitude,
        }
        if loc.postal_code is not None:
            row["postal_code"] = loc.postal_code
        if not loc.candidate:
            row["candidate"] = False
        locations.append(row)
    econ = instance.economics
    keys = sorted(set(econ.delivery_cost) | set(econ.delivery_time_hours))
    delivery = []
    for a, b in keys:
        row = {"origin": a, "destination": b}
        if (a, b) in econ.delivery_cost:
            row["cost"] = econ.delivery_cost[(a, b)]
        if (a, b) in econ.delivery_time_hours:
            row["time_hours"] = econ.delivery_time_hours[(a, b)]
        delivery.append(row)
    data: dict[str, Any] = {
        "locations": locations,
        "parts": [
            {
                "id": p.id,
                "width": p.width,
                "height": p.height,
                "depth": p.depth,
                "print_time_hours": p.print_time_hours,
                "print_unit_cost": p.print_unit_cost,
                "internal_order_cost": p.internal_order_cost,
                "internal_order_time_hours": p.internal_order_time_hours,
            }
            for p in instance.parts
        ],
        "suppliers": [
            {
                "id": s.id,
                "price": s.price,
                "order_time_hours": s.order_time_hours,
                "delivery_cost": s.delivery_cost,
                "delivery_time_hours": s.delivery_time_hours,
            }
            for s in instance.suppliers
        ],
        "orders": [{"client": o.client, "part": o.part, "quantity": o.quantity} for o in instance.orders],
        "economics": {
            "facility_fixed_cost": econ.facility_fixed_cost,
            "printer_fixed_cost": econ.printer_fixed_cost,
            "printer_capacity_hours": econ.printer_capacity_hours,
            "max_printers": econ.max_printers,
            "delivery_symmetric": econ.delivery_symmetric,
            "delivery": delivery,
        },
    }
    if instance.matrix is not None:
        data["matrix"] = instance.matrix.to_rows()
    if instance.metadata:
        data["metadata"] = instance.metadata
    return data


def load_instance(path: str | Path) -> Instance:
    """Read an instance JSON file.

    Raises InstanceFormatError for malformed files and UnknownReferenceError
    when an order, supplier or map references an undeclared id.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"{path}: {exc}") from exc
    except (AttributeError, TypeError) as exc:
        raise InstanceFormatError(f"{path}: {exc}") from exc
    try:
        return instance_from_dict(data)
    except (AttributeError, TypeError) as exc:
        raise InstanceFormatError(f"{path}: {exc}") from exc


def save_instance(instance: Instance, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(instance_to_dict(instance), fh, indent=2, sort_keys=False)
        fh.write("\n")
