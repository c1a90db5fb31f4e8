"""Parcel delivery quotes from an offline postal tariff table.

The tariff CSV has the columns ``origin_prefix,dest_prefix,size_class,cost,time_hours``
and starts with a comment line declaring the size classes by their maximum
parcel dimension in millimeters, smallest first::

    # size_classes: small=200;medium=400;large=800
    origin_prefix,dest_prefix,size_class,cost,time_hours
    01,70,small,25.00,48

A row matches when its prefixes are prefixes of the origin and destination
postal codes; the longest combined match wins.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from amsupply.model import Location

TARIFF_HEADER = ("origin_prefix", "dest_prefix", "size_class", "cost", "time_hours")


class NoTariffError(LookupError):
    def __init__(self, key: tuple):
        super().__init__(f"no tariff for {key!r}")
        self.key = key


class TariffFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Parcel:
    width: float
    height: float
    depth: float
    weight: float | None = None

    def __post_init__(self):
        if min(self.width, self.height, self.depth) <= 0:
            raise ValueError("parcel dimensions must be > 0")

    @property
    def max_dimension(self) -> float:
        return max(self.width, self.height, self.depth)


@dataclass(frozen=True)
class TariffRow:
    origin_prefix: str
    dest_prefix: str
    size_class: str
    cost: float
    time_hours: float


class TariffTable:
    def __init__(self, rows: Sequence[TariffRow], size_classes: Sequence[tuple[str, float]]):
        self.size_classes = sorted(size_classes, key=lambda c: c[1])
        names = {name for name, _ in self.size_classes}
        self._rows: dict[tuple[str, str, str], TariffRow] = {}
        for row in rows:
            key = (row.origin_prefix, row.dest_prefix, row.size_class)
            if key in self._rows:
                raise TariffFormatError(f"duplicate tariff key {key}")
            if row.size_class not in names:
                raise TariffFormatError(f"undeclared size class {row.size_class!r}")
            if row.cost < 0 or row.time_hours < 0:
                raise TariffFormatError(f"negative cost/time in row {key}")
            self._rows[key] = row

    @property
    def rows(self) -> list[TariffRow]:
        return list(self._rows.values())

    def size_class(self, parcel: Parcel) -> str:
        for name, limit in self.size_classes:
            if parcel.max_dimension <= limit:
                return name
        raise NoTariffError(("size", parcel.max_dimension))

    def match(self, origin_code: str, dest_code: str, size_class: str) -> TariffRow:
        best, best_len = None, -1
        for i in range(len(origin_code), -1, -1):
            for j in range(len(dest_code), -1, -1):
                if i + j <= best_len:
                    break
                row = self._rows.get((origin_code[:i], dest_code[:j], size_class))
                if row is not None:
                    best, best_len = row, i + j
        if best is None:
            raise NoTariffError((origin_code, dest_code, size_class))
        return best


def load_tariff_csv(path: str | Path) -> TariffTable:
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline().strip()
        if not first.startswith("#") or "size_classes:" not in first:
            raise TariffFormatError(f"{path}: first line must declare '# size_classes: name=mm;...'")
        classes = []
        for item in first.split("size_classes:", 1)[1].split(";"):
            name, _, limit = item.strip().partition("=")
            classes.append((name.strip(), float(limit)))
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TARIFF_HEADER:
            raise TariffFormatError(f"{path}: expected header {','.join(TARIFF_HEADER)}")
        rows = [
            TariffRow(r["origin_prefix"], r["dest_prefix"], r["size_class"], float(r["cost"]), float(r["time_hours"]))
            for r in reader
        ]
    return TariffTable(rows, classes)


def write_tariff_csv(table: TariffTable, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        classes = ";".join(f"{name}={limit:g}" for name, limit in table.size_classes)
        fh.write(f"# size_classes: {classes}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TARIFF_HEADER)
        for row in table.rows:
            writer.writerow([row.origin_prefix, row.dest_prefix, row.size_class, row.cost, row.time_hours])


def delivery_quote(origin: Location, destination: Location, parcel: Parcel, table: TariffTable) -> tuple[float, float]:
    """(cost, hours) to send ``parcel`` from ``origin`` to ``destination``."""
    if origin.id == destination.id:
        return 0.0, 0.0
    size = table.size_class(parcel)
    if origin.postal_code is None or destination.postal_code is None:
        raise NoTariffError((origin.postal_code, destination.postal_code, size))
    row = table.match(origin.postal_code, destination.postal_code, size)
    return row.cost, row.time_hours


def quote_matrix(
    origins: Sequence[Location], destinations: Sequence[Location], parcel: Parcel, table: TariffTable
) -> tuple[dict[tuple[str, str], float], dict[tuple[str, str], float]]:
    """Delivery cost and time maps for every (origin, destination) pair."""
    cost, time = {}, {}
    for a in origins:
        for b in destinations:
            cost[(a.id, b.id)], time[(a.id, b.id)] = delivery_quote(a, b, parcel, table)
    return cost, time


class RemotePostalClient:
    """Postal web-service client with the same quote signature as the table.

    Posts ``{origin_postal_code, destination_postal_code, width_mm, height_mm,
    depth_mm}`` and expects ``{"cost": ..., "time_hours": ...}`` back.
    """

    def __init__(self, base_url: str, api_key: str | None = None, timeout: float = 30.0):
        self.base_url = base_url
        self.api_key = api_key
        self.timeout = timeout

    def quote(self, origin: Location, destination: Location, parcel: Parcel) -> tuple[float, float]:
        import requests

        if origin.id == destination.id:
            return 0.0, 0.0
        payload = {
            "origin_postal_code": origin.postal_code,
            "destination_postal_code": destination.postal_code,
            "width_mm": parcel.width,
            "height_mm": parcel.height,
            "depth_mm": parcel.depth,
        }
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        resp = requests.post(self.base_url, json=payload, headers=headers, timeout=self.timeout)
        resp.raise_for_status()
        body = resp.json()
        return float(body["cost"]), float(body["time_hours"])
