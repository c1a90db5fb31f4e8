"""Demand clustering with an exact p-median solver.

Choose exactly ``p`` internal facilities (IFs) among the candidates and send
every client to its cheapest open IF so that the demand-weighted normalized
cost is minimal. Clients and candidates are separate index sets that may
share ids.
"""

from __future__ import annotations

import itertools
import math
import statistics
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from amsupply.costmatrix import CostMatrix
from amsupply.model import Instance, OrderLine

BRUTE_FORCE_MAX_CANDIDATES = 15


class PMedianError(ValueError):
    pass


class ProblemSizeError(ValueError):
    pass


class UnassignedClientError(KeyError):
    pass


@dataclass(frozen=True, eq=False)
class PMedianProblem:
    cost: CostMatrix
    demand: dict[str, float]
    p: int
    candidates: tuple[str, ...]
    clients: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(sorted(self.candidates)))
        object.__setattr__(self, "clients", tuple(sorted(self.clients)))
        if len(set(self.candidates)) != len(self.candidates):
            raise PMedianError("duplicate candidate ids")
        if not 1 <= self.p <= len(self.candidates):
            raise PMedianError(f"p={self.p} must lie in [1, {len(self.candidates)}]")
        for f in self.clients:
            if self.demand.get(f, 0) < 0:
                raise PMedianError(f"client {f!r} has negative demand")
        known = set(self.cost.ids)
        missing = [x for x in (*self.candidates, *self.clients) if x not in known]
        if missing:
            raise PMedianError(f"cost matrix lacks locations {missing}")

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(unit cost, demand-weighted cost), both shaped (candidates, clients)."""
        ri = [self.cost.index(r) for r in self.candidates]
        fi = [self.cost.index(f) for f in self.clients]
        unit = self.cost.total_cost[np.ix_(ri, fi)]
        d = np.array([float(self.demand.get(f, 0)) for f in self.clients])
        return unit, unit * d[None, :]


@dataclass(frozen=True)
class ClusterStats:
    order_count: int
    mean_demand: float
    stddev_demand: float


@dataclass(frozen=True)
class ClusterSolution:
    open_ifs: tuple[str, ...]
    assignment: dict[str, str]
    objective: float
    stats: dict[str, dict[str, ClusterStats]] = field(default_factory=dict)
    demand_table: dict[tuple[str, str], int] = field(default_factory=dict)
    order_table: dict[tuple[str, str], int] = field(default_factory=dict)


def _assign(unit: np.ndarray, weighted: np.ndarray, open_idx: Sequence[int]) -> tuple[list[int], float]:
    """Cheapest open IF per client (first index wins ties) and exact objective."""
    sub = unit[list(open_idx)]
    pick = np.argmin(sub, axis=0)
    chosen = [open_idx[k] for k in pick]
    objective = math.fsum(weighted[r, f] for f, r in enumerate(chosen))
    return chosen, objective


def _solution(problem: PMedianProblem, open_idx: Sequence[int]) -> ClusterSolution:
    unit, weighted = problem.arrays()
    open_idx = sorted(open_idx)
    chosen, objective = _assign(unit, weighted, open_idx)
    return ClusterSolution(
        open_ifs=tuple(problem.candidates[i] for i in open_idx),
        assignment={f: problem.candidates[r] for f, r in zip(problem.clients, chosen)},
        objective=objective,
    )


def brute_force_pmedian(problem: PMedianProblem) -> ClusterSolution:
    """Exhaustive search over all p-subsets; reference oracle for small problems."""
    n = len(problem.candidates)
    if n > BRUTE_FORCE_MAX_CANDIDATES:
        raise ProblemSizeError(f"{n} candidates exceeds the brute-force cap of {BRUTE_FORCE_MAX_CANDIDATES}")
    unit, weighted = problem.arrays()
    best = None
    best_obj = math.inf
    for subset in itertools.combinations(range(n), problem.p):
        _, obj = _assign(unit, weighted, subset)
        if obj < best_obj:
            best, best_obj = subset, obj
    return _solution(problem, best)


def _greedy_interchange(weighted: np.ndarray, p: int) -> list[int]:
    n, m = weighted.shape
    chosen: list[int] = []
    current = np.full(m, np.inf)
    for _ in range(p):
        totals = np.minimum(weighted, current[None, :]).sum(axis=1)
        totals[chosen] = np.inf
        k = int(np.argmin(totals))
        chosen.append(k)
        current = np.minimum(current, weighted[k])
    improved = True
    while improved:
        improved = False
        base = weighted[chosen].min(axis=0).sum()
        for pos in range(p):
            others = [c for i, c in enumerate(chosen) if i != pos]
            rest = weighted[others].min(axis=0) if others else np.full(m, np.inf)
            totals = np.minimum(weighted, rest[None, :]).sum(axis=1)
            totals[chosen] = np.inf
            k = int(np.argmin(totals))
            if totals[k] < base - 1e-12 * max(1.0, abs(base)):
                chosen[pos] = k
                improved = True
                break
    return sorted(chosen)


def solve_pmedian(problem: PMedianProblem) -> ClusterSolution:
    """Exact p-median by depth-first branch-and-bound over open/closed decisions.

    The bound at a node is the demand-weighted cost when every client may use
    any IF already opened or still undecided, tightened by a bound that
    respects how many IFs may still open. Nodes are pruned only when the
    bound strictly exceeds the incumbent, so equal-cost alternatives are all
    visited and the lexicographically smallest open set wins, matching the
    brute-force oracle.
    """
    unit, weighted = problem.arrays()
    n, m = weighted.shape
    p = problem.p
    if p == n:
        return _solution(problem, range(n))

    # branch on facilities in order of single-facility attractiveness
    order = list(np.argsort(weighted.sum(axis=1), kind="stable"))
    w = weighted[order]
    suffix = np.full((n + 1, m), np.inf)
    suffix_max = np.full((n + 1, m), -np.inf)
    for k in range(n - 1, -1, -1):
        suffix[k] = np.minimum(suffix[k + 1], w[k])
        suffix_max[k] = np.maximum(suffix_max[k + 1], w[k])

    def cardinality_bound(k: int, need: int, current: np.ndarray) -> float:
        # Any completion serves f at no more than base_f, and adding a set of
        # facilities saves at most the sum of their individual savings.
        base = np.minimum(current, suffix_max[k])
        savings = np.maximum(base[None, :] - w[k:], 0.0).sum(axis=1)
        top = np.partition(savings, len(savings) - need)[len(savings) - need :] if need < len(savings) else savings
        return float(base.sum() - top.sum())

    start = _greedy_interchange(weighted, p)
    _, inc_obj = _assign(unit, weighted, start)
    inc_set = tuple(start)

    def exact_bound(vec: np.ndarray) -> float:
        return math.fsum(vec.tolist())

    def offer(chosen: list[int], current: np.ndarray) -> None:
        nonlocal inc_obj, inc_set
        key = tuple(sorted(order[k] for k in chosen))
        _, obj = _assign(unit, weighted, key)
        if obj < inc_obj or (obj == inc_obj and key < inc_set):
            inc_obj, inc_set = obj, key

    stack: list[tuple[int, tuple[int, ...], np.ndarray]] = [(0, (), np.full(m, np.inf))]
    while stack:
        k, chosen, current = stack.pop()
        if len(chosen) == p:
            offer(list(chosen), current)
            continue
        if len(chosen) + (n - k) < p:
            continue
        if len(chosen) + (n - k) == p:
            offer(list(chosen) + list(range(k, n)), current)
            continue
        vec = np.minimum(current, suffix[k])
        fast = float(vec.sum())
        # pairwise summation error is far below 1e-12 relative at these sizes
        if fast > inc_obj + 1e-12 * abs(fast):
            continue
        if exact_bound(vec) > inc_obj:
            continue
        # margin keeps rounding in the subtraction from pruning an equal-cost set
        if cardinality_bound(k, p - len(chosen), current) > inc_obj + 1e-9 * max(1.0, abs(inc_obj)):
            continue
        stack.append((k + 1, chosen, current))
        stack.append((k + 1, chosen + (k,), np.minimum(current, w[k])))
    return _solution(problem, inc_set)


def build_pmedian_problem(instance: Instance, cost: CostMatrix, p: int | None = None) -> PMedianProblem:
    candidates = tuple(instance.candidates)
    return PMedianProblem(
        cost=cost,
        demand={f: float(d) for f, d in instance.client_demand().items()},
        p=len(candidates) if p is None else p,
        candidates=candidates,
        clients=tuple(instance.clients),
    )


def aggregate_clusters(solution: ClusterSolution, orders: Iterable[OrderLine]) -> ClusterSolution:
    """Group order lines by serving IF and part.

    Per (IF, part) this records the number of order lines, their mean and
    population standard deviation, and the annual demand / order tables the
    design phase consumes.
    """
    grouped: dict[tuple[str, str], list[int]] = {}
    for order in orders:
        if order.client not in solution.assignment:
            raise UnassignedClientError(f"client {order.client!r} has no assigned IF")
        key = (solution.assignment[order.client], order.part)
        grouped.setdefault(key, []).append(order.quantity)
    stats: dict[str, dict[str, ClusterStats]] = {}
    demand: dict[tuple[str, str], int] = {}
    count: dict[tuple[str, str], int] = {}
    for (r, part), qty in sorted(grouped.items()):
        stats.setdefault(r, {})[part] = ClusterStats(
            order_count=len(qty),
            mean_demand=statistics.fmean(qty),
            stddev_demand=statistics.pstdev(qty) if len(qty) > 1 else 0.0,
        )
        demand[(r, part)] = sum(qty)
        count[(r, part)] = len(qty)
    return replace(solution, stats=stats, demand_table=demand, order_table=count)


def cluster_to_dict(solution: ClusterSolution) -> dict:
    return {
        "open_ifs": list(solution.open_ifs),
        "assignment": dict(sorted(solution.assignment.items())),
        "objective": solution.objective,
        "demand_table": [
            {"if": r, "part": p, "units": u} for (r, p), u in sorted(solution.demand_table.items())
        ],
        "order_table": [
            {"if": r, "part": p, "orders": n} for (r, p), n in sorted(solution.order_table.items())
        ],
        "stats": {
            r: {
                part: {
                    "order_count": s.order_count,
                    "mean_demand": s.mean_demand,
                    "stddev_demand": s.stddev_demand,
                }
                for part, s in sorted(parts.items())
            }
            for r, parts in sorted(solution.stats.items())
        },
    }


def cluster_from_dict(data: dict) -> ClusterSolution:
    return ClusterSolution(
        open_ifs=tuple(data["open_ifs"]),
        assignment=dict(data["assignment"]),
        objective=float(data["objective"]),
        stats={
            r: {part: ClusterStats(**s) for part, s in parts.items()}
            for r, parts in data.get("stats", {}).items()
        },
        demand_table={(row["if"], row["part"]): int(row["units"]) for row in data.get("demand_table", [])},
        order_table={(row["if"], row["part"]): int(row["orders"]) for row in data.get("order_table", [])},
    )
