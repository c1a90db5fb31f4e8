"""Normalized pairwise supply costs.

Raw road distances (meters) and travel times (seconds) are folded into a
single unitless cost per ordered pair::

    cost(i, j) = distance_weight * distance(i, j) / max_distance
               + time_weight * travel_time(i, j) / max_time

where the maxima are taken over the whole matrix. Raw matrices come from a
``MatrixProvider``: an offline CSV, the instance's inline matrix, or a remote
distance-matrix web service with an on-disk response cache.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Iterable, Protocol, Sequence

import numpy as np

if TYPE_CHECKING:
    from amsupply.model import Location

log = logging.getLogger(__name__)

MATRIX_CSV_HEADER = ("origin", "destination", "distance_m", "travel_time_s")


class DomainError(ValueError):
    pass


class DegenerateMatrixError(ValueError):
    pass


class MatrixResolutionError(LookupError):
    """A provider could not produce a value for an (origin, destination) pair."""

    def __init__(self, message: str, pair: tuple[str, str] | None = None):
        super().__init__(message)
        self.pair = pair


class MatrixTransportError(ConnectionError):
    pass


@dataclass(frozen=True)
class NormalizationWeights:
    time_weight: float = 0.7
    distance_weight: float = 0.3

    def __post_init__(self):
        for name in ("time_weight", "distance_weight"):
            w = getattr(self, name)
            if not 0.0 <= w <= 1.0:
                raise ValueError(f"{name}={w} outside [0, 1]")
        if abs(self.time_weight + self.distance_weight - 1.0) > 1e-12:
            raise ValueError(
                f"weights must sum to 1, got {self.time_weight} + {self.distance_weight}"
            )


@dataclass(frozen=True, eq=False)
class RawTravelMatrix:
    """Square distance (m) and travel-time (s) matrices over ``ids``."""

    ids: tuple[str, ...]
    distance: np.ndarray
    travel_time: np.ndarray

    def __post_init__(self):
        n = len(self.ids)
        if self.distance.shape != (n, n) or self.travel_time.shape != (n, n):
            raise ValueError("matrix shape does not match the id list")
        if len(set(self.ids)) != n:
            raise ValueError("duplicate ids in matrix")

    def index(self, location_id: str) -> int:
        try:
            return self.ids.index(location_id)
        except ValueError:
            raise MatrixResolutionError(f"location {location_id!r} not in matrix") from None

    def pair(self, origin: str, destination: str) -> tuple[float, float]:
        i, j = self.index(origin), self.index(destination)
        return float(self.distance[i, j]), float(self.travel_time[i, j])

    def subset(self, ids: Sequence[str]) -> "RawTravelMatrix":
        idx = [self.index(i) for i in ids]
        return RawTravelMatrix(
            tuple(ids), self.distance[np.ix_(idx, idx)], self.travel_time[np.ix_(idx, idx)]
        )

    def problems(self) -> list[tuple[str, str, str]]:
        out = []
        if (self.distance < 0).any() or (self.travel_time < 0).any():
            out.append(("negative_matrix_entry", "entries", "distance/time must be >= 0"))
        if np.any(np.diag(self.distance) != 0) or np.any(np.diag(self.travel_time) != 0):
            out.append(("nonzero_diagonal", "diagonal", "self distance/time must be 0"))
        return out

    @classmethod
    def from_rows(
        cls,
        rows: Iterable[tuple[str, str, float, float]],
        order: Sequence[str] | None = None,
    ) -> "RawTravelMatrix":
        """Assemble a matrix from ``(origin, destination, meters, seconds)`` rows.

        Diagonal pairs may be omitted. Any other missing pair raises
        MatrixResolutionError naming it; values are never imputed.
        """
        values: dict[tuple[str, str], tuple[float, float]] = {}
        seen: list[str] = []
        for o, d, dist, t in rows:
            values[(o, d)] = (float(dist), float(t))
            for x in (o, d):
                if x not in seen:
                    seen.append(x)
        if order is not None:
            ids = [x for x in order if x in set(seen)]
        else:
            ids = seen
        return cls._complete(ids, values)

    @classmethod
    def _complete(
        cls, ids: Sequence[str], values: dict[tuple[str, str], tuple[float, float]]
    ) -> "RawTravelMatrix":
        n = len(ids)
        dist = np.zeros((n, n))
        time = np.zeros((n, n))
        for i, a in enumerate(ids):
            for j, b in enumerate(ids):
                if (a, b) in values:
                    dist[i, j], time[i, j] = values[(a, b)]
                elif i != j:
                    raise MatrixResolutionError(f"no matrix entry for pair ({a}, {b})", (a, b))
        return cls(tuple(ids), dist, time)

    def to_rows(self) -> list[dict]:
        rows = []
        for i, a in enumerate(self.ids):
            for j, b in enumerate(self.ids):
                if i == j:
                    continue
                rows.append(
                    {
                        "origin": a,
                        "destination": b,
                        "distance_m": float(self.distance[i, j]),
                        "travel_time_s": float(self.travel_time[i, j]),
                    }
                )
        return rows


@dataclass(frozen=True, eq=False)
class CostMatrix:
    ids: tuple[str, ...]
    total_cost: np.ndarray
    max_distance: float
    max_time: float
    weights: NormalizationWeights

    def index(self, location_id: str) -> int:
        return self.ids.index(location_id)

    def cost(self, origin: str, destination: str) -> float:
        return float(self.total_cost[self.index(origin), self.index(destination)])


def normalized_cost(
    distance: float,
    travel_time: float,
    max_distance: float,
    max_time: float,
    weights: NormalizationWeights,
) -> float:
    if not (max_distance > 0 and max_time > 0):
        raise DomainError("max_distance and max_time must both be > 0")
    if not 0 <= distance <= max_distance:
        raise DomainError(f"distance {distance} outside [0, {max_distance}]")
    if not 0 <= travel_time <= max_time:
        raise DomainError(f"travel_time {travel_time} outside [0, {max_time}]")
    return weights.distance_weight * (distance / max_distance) + weights.time_weight * (
        travel_time / max_time
    )


def build_cost_matrix(raw: RawTravelMatrix, weights: NormalizationWeights) -> CostMatrix:
    n = len(raw.ids)
    if n == 0:
        raise DegenerateMatrixError("empty matrix")
    for code, _, msg in raw.problems():
        raise DomainError(f"{code}: {msg}")
    if n == 1:
        return CostMatrix(raw.ids, np.zeros((1, 1)), 0.0, 0.0, weights)
    off = ~np.eye(n, dtype=bool)
    max_d = float(raw.distance[off].max())
    max_t = float(raw.travel_time[off].max())
    if max_d == 0 and max_t == 0:
        raise DegenerateMatrixError("all distances and travel times are zero")
    # a term whose column is identically zero contributes nothing
    d_term = raw.distance / max_d if max_d > 0 else np.zeros((n, n))
    t_term = raw.travel_time / max_t if max_t > 0 else np.zeros((n, n))
    total = weights.distance_weight * d_term + weights.time_weight * t_term
    np.fill_diagonal(total, 0.0)
    return CostMatrix(raw.ids, total, max_d, max_t, weights)


# -- providers -------------------------------------------------------------


class MatrixProvider(Protocol):
    def lookup(self, origin: "Location", destination: "Location") -> tuple[float, float] | None:
        ...


def fetch_matrix(provider, locations: Sequence["Location"]) -> RawTravelMatrix:
    """Ask ``provider`` for every ordered pair of ``locations``."""
    ids = [loc.id for loc in locations]
    if hasattr(provider, "fetch_all"):
        values = provider.fetch_all(locations)
    else:
        values = {}
        for a in locations:
            for b in locations:
                if a.id != b.id:
                    got = provider.lookup(a, b)
                    if got is not None:
                        values[(a.id, b.id)] = got
    return RawTravelMatrix._complete(ids, values)


class InlineMatrixProvider:
    """Serves values from a matrix already held in memory."""

    def __init__(self, matrix: RawTravelMatrix):
        self.matrix = matrix

    def lookup(self, origin, destination):
        try:
            return self.matrix.pair(origin.id, destination.id)
        except MatrixResolutionError:
            raise MatrixResolutionError(
                f"no matrix entry for pair ({origin.id}, {destination.id})",
                (origin.id, destination.id),
            ) from None


class CsvMatrixProvider:
    """Reads ``origin,destination,distance_m,travel_time_s`` rows."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._values: dict[tuple[str, str], tuple[float, float]] = {}
        with open(self.path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != MATRIX_CSV_HEADER:
                raise MatrixResolutionError(
                    f"{self.path}: expected header {','.join(MATRIX_CSV_HEADER)}"
                )
            for row in reader:
                key = (row["origin"], row["destination"])
                self._values[key] = (float(row["distance_m"]), float(row["travel_time_s"]))

    def lookup(self, origin, destination):
        key = (origin.id, destination.id)
        if key not in self._values:
            raise MatrixResolutionError(f"{self.path}: no row for pair ({key[0]}, {key[1]})", key)
        return self._values[key]


def write_matrix_csv(matrix: RawTravelMatrix, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MATRIX_CSV_HEADER)
        for row in matrix.to_rows():
            writer.writerow([row[k] for k in MATRIX_CSV_HEADER])


Transport = Callable[[str, dict], dict]


def _http_transport(url: str, params: dict) -> dict:
    import requests

    try:
        resp = requests.get(url, params=params, timeout=30)
        resp.raise_for_status()
        return resp.json()
    except (requests.RequestException, ValueError) as exc:
        raise MatrixTransportError(f"request to {url} failed: {exc}") from exc


class RemoteMatrixProvider:
    """Distance-matrix web service client with a per-pair disk cache.

    Requests follow the common distance-matrix wire format: ``origins`` and
    ``destinations`` are ``|``-joined ``lat,lng`` strings and the reply holds
    ``rows[i].elements[j]`` with ``distance.value`` (m), ``duration.value`` (s)
    and an element ``status``. Every answered pair is written to its own cache
    file, so a fully cached matrix needs no network at all.
    """

    def __init__(
        self,
        base_url: str,
        cache_dir: str | Path,
        api_key_env: str | None = None,
        transport: Transport | None = None,
        max_destinations: int = 25,
    ):
        self.base_url = base_url
        self.cache_dir = Path(cache_dir)
        self.api_key_env = api_key_env
        self.transport = transport or _http_transport
        self.max_destinations = max_destinations

    def _cache_file(self, origin: str, destination: str) -> Path:
        digest = hashlib.sha256(f"{origin}\x1f{destination}".encode()).hexdigest()[:32]
        return self.cache_dir / f"{digest}.json"

    def cached(self, origin: str, destination: str) -> tuple[float, float] | None:
        path = self._cache_file(origin, destination)
        if not path.exists():
            return None
        with open(path, encoding="utf-8") as fh:
            entry = json.load(fh)
        if entry.get("origin") != origin or entry.get("destination") != destination:
            return None
        return float(entry["distance_m"]), float(entry["travel_time_s"])

    def _store(self, origin: str, destination: str, value: tuple[float, float]) -> None:
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        entry = {
            "origin": origin,
            "destination": destination,
            "distance_m": value[0],
            "travel_time_s": value[1],
        }
        fd, tmp = tempfile.mkstemp(dir=self.cache_dir, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(entry, fh)
        os.replace(tmp, self._cache_file(origin, destination))

    def _params(self, origin, destinations) -> dict:
        params = {
            "origins": f"{origin.latitude},{origin.longitude}",
            "destinations": "|".join(f"{d.latitude},{d.longitude}" for d in destinations),
        }
        if self.api_key_env:
            key = os.environ.get(self.api_key_env)
            if not key:
                raise MatrixTransportError(f"environment variable {self.api_key_env} is not set")
            params["key"] = key
        return params

    def fetch_all(self, locations) -> dict[tuple[str, str], tuple[float, float]]:
        values: dict[tuple[str, str], tuple[float, float]] = {}
        for origin in locations:
            missing = []
            for dest in locations:
                if dest.id == origin.id:
                    continue
                hit = self.cached(origin.id, dest.id)
                if hit is None:
                    missing.append(dest)
                else:
                    values[(origin.id, dest.id)] = hit
            for start in range(0, len(missing), self.max_destinations):
                batch = missing[start : start + self.max_destinations]
                log.debug("querying %s -> %d destinations", origin.id, len(batch))
                reply = self.transport(self.base_url, self._params(origin, batch))
                elements = self._elements(reply, origin, batch)
                for dest, element in zip(batch, elements):
                    if element.get("status", "OK") != "OK":
                        raise MatrixResolutionError(
                            f"service could not resolve pair ({origin.id}, {dest.id}): "
                            f"{element.get('status')}",
                            (origin.id, dest.id),
                        )
                    value = (float(element["distance"]["value"]), float(element["duration"]["value"]))
                    self._store(origin.id, dest.id, value)
                    values[(origin.id, dest.id)] = value
        return values

    @staticmethod
    def _elements(reply: dict, origin, batch) -> list[dict]:
        if reply.get("status", "OK") != "OK":
            raise MatrixTransportError(f"service returned status {reply.get('status')!r}")
        try:
            elements = reply["rows"][0]["elements"]
        except (KeyError, IndexError, TypeError):
            raise MatrixTransportError("malformed distance-matrix reply") from None
        if len(elements) != len(batch):
            raise MatrixResolutionError(
                f"reply for origin {origin.id} has {len(elements)} elements, expected {len(batch)}"
            )
        return elements

    def lookup(self, origin, destination):
        return self.fetch_all([origin, destination]).get((origin.id, destination.id))
