"""Exact solver for the production-center design problem.

Every demanded (IF, part) pair is served by exactly one source: an open
production center (PC) within the lead-time cap, or an external supplier.
A PC costs its annual facility fee plus one printer fee per printer, and the
printer count is the smallest that covers the PC's load with half-capacity
printers.

The solver works in three steps:

1. Reduction. Sources that break the lead-time cap are dropped, the
   cheapest feasible supplier stands in for all suppliers of a pair, and
   internal sources that cost at least as much as that supplier are dropped
   (switching such a pair to the supplier never raises cost, PC count or
   printer count).
2. Decomposition. PCs and pairs linked by surviving internal options form
   independent components that are solved separately.
3. Branch-and-bound on each component over the LP relaxation of the
   open/printers/route model (HiGHS via ``scipy.optimize.linprog``).
   Nodes are explored best-first. Branching goes on the total number of
   open PCs, then single open decisions, then the total printer count,
   single printer counts and finally single routes.

Designs whose costs differ by at most ``COST_TIE`` count as equal; among
them the solver keeps the one with fewer PCs, then fewer printers, then the
smaller sorted tuple of open ids. Integral nodes whose bound is still within
the tie slack are split further on open and printer decisions so that such
alternatives are actually visited.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from amsupply.locdesign.model import (
    INFEASIBLE,
    LEAD_TOLERANCE,
    DesignModel,
    DesignSolution,
    assemble_solution,
    printers_needed,
)

log = logging.getLogger(__name__)

INT_TOL = 1e-6
# ties within this much are resolved by the secondary keys
COST_TIE = 1e-6


@dataclass
class _Pair:
    dest: str
    part: str
    units: float
    ext_cost: float = math.inf
    ext_supplier: str | None = None
    options: list[tuple[int, float, float]] = field(default_factory=list)  # (IF index, cost, load)


@dataclass
class SolveStats:
    components: int = 0
    lp_solves: int = 0
    nodes: int = 0


def _reduce(model: DesignModel) -> tuple[list[_Pair], list[tuple[str, str]]]:
    h = model.max_lead_hours + LEAD_TOLERANCE
    cap = model.econ.max_printers * model.half_capacity
    pairs, witnesses = [], []
    for dest, p in model.demanded_pairs():
        pair = _Pair(dest, p, model.demand[(dest, p)])
        for s in model.suppliers:
            if model.sells(s, p) and model.external_lead(s, dest, p) <= h:
                cost = model.external_cost(s, dest, p)
                if cost < pair.ext_cost:
                    pair.ext_cost, pair.ext_supplier = cost, s
        for i, r in enumerate(model.ifs):
            if model.internal_lead(r, dest, p) > h:
                continue
            load = model.internal_load(r, dest, p)
            if load > cap * (1 + 1e-12):
                continue
            cost = model.internal_cost(r, dest, p)
            if cost >= pair.ext_cost:
                continue
            pair.options.append((i, cost, load))
        if pair.ext_supplier is None and not pair.options:
            witnesses.append((dest, p))
        pairs.append(pair)
    return pairs, witnesses


def _components(pairs: list[_Pair]) -> list[tuple[list[int], list[int]]]:
    parent: dict[int, int] = {}

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for pair in pairs:
        for i, _, _ in pair.options:
            parent.setdefault(i, i)
        first = pair.options[0][0] if pair.options else None
        for i, _, _ in pair.options[1:]:
            ra, rb = find(first), find(i)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    groups: dict[int, tuple[list[int], list[int]]] = {}
    for i in sorted(parent):
        groups.setdefault(find(i), ([], []))[0].append(i)
    for j, pair in enumerate(pairs):
        if pair.options:
            groups[find(pair.options[0][0])][1].append(j)
    return [groups[k] for k in sorted(groups)]


class _ComponentSolver:
    """LP-based branch-and-bound for one connected component."""

    def __init__(self, model: DesignModel, pairs: list[_Pair], facilities: list[int], pair_ids: list[int], stats: SolveStats):
        self.model = model
        self.stats = stats
        self.fac = facilities
        self.pairs = [pairs[j] for j in pair_ids]
        self.pair_ids = pair_ids
        self.local = {g: k for k, g in enumerate(facilities)}
        F = len(facilities)
        self.F = F
        econ = model.econ
        self.half = model.half_capacity
        self.max_p = econ.max_printers
        self.fc_r = econ.facility_fixed_cost
        self.fc_p = econ.printer_fixed_cost

        # option e -> (pair k, local facility, cost, load)
        opts = []
        for k, pair in enumerate(self.pairs):
            for i, cost, load in pair.options:
                opts.append((k, self.local[i], cost, load))
        self.opts = opts
        E = len(opts)
        self.nvar = 2 * F + E
        c = np.zeros(self.nvar)
        c[:F] = self.fc_r
        c[F : 2 * F] = self.fc_p
        self.const = 0.0
        for e, (k, _, cost, _) in enumerate(opts):
            ext = self.pairs[k].ext_cost
            c[2 * F + e] = cost - ext if math.isfinite(ext) else cost
        self.const = math.fsum(p.ext_cost for p in self.pairs if math.isfinite(p.ext_cost))
        self.c = c

        rows, cols, vals, rhs = [], [], [], []
        eq_rows, eq_cols = [], []
        r = 0
        by_pair: dict[int, list[int]] = {}
        for e, (k, _, _, _) in enumerate(opts):
            by_pair.setdefault(k, []).append(e)
        self.by_pair = by_pair
        n_eq = 0
        for k, es in sorted(by_pair.items()):
            if math.isfinite(self.pairs[k].ext_cost):
                for e in es:
                    rows.append(r), cols.append(2 * F + e), vals.append(1.0)
                rhs.append(1.0)
                r += 1
            else:
                for e in es:
                    eq_rows.append(n_eq), eq_cols.append(2 * F + e)
                n_eq += 1
        for e, (_, f, _, _) in enumerate(opts):
            rows += [r, r]
            cols += [2 * F + e, f]
            vals += [1.0, -1.0]
            rhs.append(0.0)
            r += 1
        by_fac: dict[int, list[int]] = {}
        for e, (_, f, _, _) in enumerate(opts):
            by_fac.setdefault(f, []).append(e)
        for f in range(F):
            for e in by_fac.get(f, ()):
                rows.append(r), cols.append(2 * F + e), vals.append(opts[e][3])
            rows.append(r), cols.append(F + f), vals.append(-self.half)
            rhs.append(0.0)
            r += 1
            rows += [r, r]
            cols += [F + f, f]
            vals += [1.0, -float(self.max_p)]
            rhs.append(0.0)
            r += 1
            rows += [r, r]
            cols += [f, F + f]
            vals += [1.0, -1.0]
            rhs.append(0.0)
            r += 1
        self.A_ub = sparse.csr_matrix((vals, (rows, cols)), shape=(r, self.nvar))
        self.b_ub = np.array(rhs)
        if n_eq:
            self.A_eq = sparse.csr_matrix((np.ones(len(eq_rows)), (eq_rows, eq_cols)), shape=(n_eq, self.nvar))
            self.b_eq = np.ones(n_eq)
        else:
            self.A_eq = None
            self.b_eq = None
        self.lb = np.zeros(self.nvar)
        self.ub = np.ones(self.nvar)
        self.ub[F : 2 * F] = self.max_p

        self.best_cost = math.inf
        self.best_key: tuple | None = None
        self.best_choice: list[int] | None = None

    # -- evaluation of integral choices ---------------------------------

    def evaluate(self, choice: list[int]) -> tuple[float, tuple] | None:
        """Cost and tie-break key of a route choice (-1 = external)."""
        load = [0.0] * self.F
        used = [False] * self.F
        terms = []
        for k, e in enumerate(choice):
            if e < 0:
                terms.append(self.pairs[k].ext_cost)
            else:
                _, f, cost, w = self.opts[e]
                terms.append(cost)
                load[f] += w
                used[f] = True
        printers = 0
        for f in range(self.F):
            if used[f]:
                n = printers_needed(load[f], 2 * self.half)
                if n > self.max_p:
                    return None
                printers += n
                terms.append(self.fc_r)
                terms.append(n * self.fc_p)
        cost = math.fsum(terms)
        open_ids = tuple(self.model.ifs[self.fac[f]] for f in range(self.F) if used[f])
        return cost, (sum(used), printers, open_ids)

    def offer(self, choice: list[int]) -> None:
        got = self.evaluate(choice)
        if got is None:
            return
        cost, key = got
        if cost < self.best_cost - COST_TIE or (
            abs(cost - self.best_cost) <= COST_TIE and (self.best_key is None or key < self.best_key)
        ):
            self.best_cost, self.best_key, self.best_choice = cost, key, list(choice)

    def _round(self, y: np.ndarray) -> list[int]:
        choice = []
        base = 2 * self.F
        for k, pair in enumerate(self.pairs):
            best_e, best_v, total = -1, -1.0, 0.0
            for e in self.by_pair.get(k, ()):
                v = y[base + e]
                total += v
                if v > best_v + 1e-12:
                    best_e, best_v = e, v
            if math.isfinite(pair.ext_cost) and total < 0.5:
                choice.append(-1)
            else:
                choice.append(best_e)
        return choice

    # -- LP --------------------------------------------------------------

    def _lp(self, lb: np.ndarray, ub: np.ndarray, cuts: tuple):
        A, b = self.A_ub, self.b_ub
        if cuts:
            extra = np.zeros((len(cuts), self.nvar))
            rhs = np.zeros(len(cuts))
            for q, (kind, sense, value) in enumerate(cuts):
                seg = slice(0, self.F) if kind == "x" else slice(self.F, 2 * self.F)
                extra[q, seg] = sense
                rhs[q] = sense * value
            A = sparse.vstack([A, sparse.csr_matrix(extra)], format="csr")
            b = np.concatenate([b, rhs])
        self.stats.lp_solves += 1
        res = linprog(
            self.c,
            A_ub=A,
            b_ub=b,
            A_eq=self.A_eq,
            b_eq=self.b_eq,
            bounds=np.column_stack([lb, ub]),
            method="highs",
        )
        if res.status == 2:
            return None
        if res.status != 0:
            raise RuntimeError(f"LP relaxation failed: {res.message}")
        return res.fun + self.const, res.x, res.lower.marginals, res.upper.marginals

    def _fix_by_reduced_cost(self, bound, sol, d_low, d_up, lb, ub):
        """Tighten bounds of variables whose unit move alone would pass the incumbent.

        Only valid for the subtree below the LP that produced the marginals.
        """
        limit = self.best_cost + self._slack() + 1e-4 + 1e-7 * abs(self.best_cost)
        if not math.isfinite(limit):
            return lb, ub
        at_low = (sol - lb <= INT_TOL) & (ub > lb) & (bound + d_low > limit)
        at_up = (ub - sol <= INT_TOL) & (ub > lb) & (bound - d_up > limit)
        if at_low.any():
            ub = ub.copy()
            ub[at_low] = lb[at_low]
        if at_up.any():
            lb = lb.copy()
            lb[at_up] = ub[at_up]
        return lb, ub

    def _branch(self, sol: np.ndarray, lb: np.ndarray, ub: np.ndarray, cuts: tuple):
        F = self.F
        x, n, y = sol[:F], sol[F : 2 * F], sol[2 * F :]

        def frac(v: float) -> float:
            return abs(v - round(v))

        sx = float(x.sum())
        if frac(sx) > INT_TOL:
            return [
                (lb, ub, cuts + (("x", 1.0, math.floor(sx)),)),
                (lb, ub, cuts + (("x", -1.0, math.ceil(sx)),)),
            ]
        fx = np.abs(x - np.round(x))
        if fx.max() > INT_TOL:
            f = int(np.argmax(fx))
            return self._split(f, 0.0, 1.0, lb, ub, cuts)
        sn = float(n.sum())
        if frac(sn) > INT_TOL:
            return [
                (lb, ub, cuts + (("n", 1.0, math.floor(sn)),)),
                (lb, ub, cuts + (("n", -1.0, math.ceil(sn)),)),
            ]
        fn = np.abs(n - np.round(n))
        if fn.max() > INT_TOL:
            f = int(np.argmax(fn))
            return self._split(F + f, math.floor(n[f]), math.ceil(n[f]), lb, ub, cuts)
        fy = np.abs(y - np.round(y))
        if len(fy) and fy.max() > INT_TOL:
            e = int(np.argmax(np.where(fy > INT_TOL, y, -1.0)))
            return self._split(2 * F + e, 0.0, 1.0, lb, ub, cuts)
        return []

    @staticmethod
    def _split(var: int, down: float, up: float, lb, ub, cuts):
        ub_down = ub.copy()
        ub_down[var] = down
        lb_up = lb.copy()
        lb_up[var] = up
        return [(lb, ub_down, cuts), (lb_up, ub, cuts)]

    def _integral_choice(self, sol: np.ndarray) -> list[int] | None:
        F = self.F
        if np.abs(sol - np.round(sol)).max() > INT_TOL:
            return None
        choice = [-1] * len(self.pairs)
        for e, (k, _, _, _) in enumerate(self.opts):
            if sol[2 * F + e] > 0.5:
                choice[k] = e
        return choice

    def _tie_children(self, node) -> list:
        """Children of an integral node that may hide an equal-cost design with a better key.

        The child that still contains the node's LP optimum reuses it; the
        other children get a fresh LP unless their reduced cost already
        rules them out.
        """
        bound, lb, ub, cuts, sol, d_low, d_up = node
        F = self.F
        limit = self.best_cost + self._slack() + 1e-4 + 1e-7 * abs(self.best_cost)
        free_x = [f for f in range(F) if ub[f] > lb[f]]
        if free_x:
            f = free_x[0]
            v = round(sol[f])
            keep_lb, keep_ub = lb.copy(), ub.copy()
            keep_lb[f] = keep_ub[f] = v
            flip_lb, flip_ub = lb.copy(), ub.copy()
            flip_lb[f] = flip_ub[f] = 1 - v
            penalty = d_low[f] if v == 0 else -d_up[f]
            kept = [("reuse", (bound, keep_lb, keep_ub, cuts, sol, d_low, d_up))]
            return kept + ([] if bound + penalty > limit else [("solve", (flip_lb, flip_ub, cuts))])
        free_n = [f for f in range(F) if ub[F + f] > lb[F + f]]
        if free_n:
            f = free_n[0]
            v = round(sol[F + f])
            out = []
            keep_lb, keep_ub = lb.copy(), ub.copy()
            keep_lb[F + f] = keep_ub[F + f] = v
            out.append(("reuse", (bound, keep_lb, keep_ub, cuts, sol, d_low, d_up)))
            if v - 1 >= lb[F + f] and bound - d_up[F + f] <= limit:
                down_ub = ub.copy()
                down_ub[F + f] = v - 1
                out.append(("solve", (lb, down_ub, cuts)))
            if v + 1 <= ub[F + f] and bound + d_low[F + f] <= limit:
                up_lb = lb.copy()
                up_lb[F + f] = v + 1
                out.append(("solve", (up_lb, ub, cuts)))
            return out
        return []

    def solve(self) -> list[int] | None:
        if all(math.isfinite(p.ext_cost) for p in self.pairs):
            self.offer([-1] * len(self.pairs))
        counter = itertools.count()
        heap: list = []

        def push(lb, ub, cuts):
            got = self._lp(lb, ub, cuts)
            if got is None:
                return
            bound, sol, d_low, d_up = got
            if bound > self.best_cost + self._slack():
                return
            choice = self._integral_choice(sol)
            if choice is not None:
                self.offer(choice)
            else:
                self.offer(self._round(sol))
            lb, ub = self._fix_by_reduced_cost(bound, sol, d_low, d_up, lb, ub)
            heapq.heappush(heap, (bound, next(counter), lb, ub, cuts, sol, d_low, d_up))

        push(self.lb, self.ub, ())
        while heap:
            bound, _, lb, ub, cuts, sol, d_low, d_up = heapq.heappop(heap)
            if bound > self.best_cost + self._slack():
                break
            self.stats.nodes += 1
            children = self._branch(sol, lb, ub, cuts)
            if children:
                for child in children:
                    push(*child)
                continue
            for how, child in self._tie_children((bound, lb, ub, cuts, sol, d_low, d_up)):
                if how == "solve":
                    push(*child)
                else:
                    heapq.heappush(heap, (child[0], next(counter), *child[1:]))
        return self.best_choice

    def _slack(self) -> float:
        if not math.isfinite(self.best_cost):
            return 0.0
        return COST_TIE + 1e-9 * abs(self.best_cost)


def solve_design(model: DesignModel, stats: SolveStats | None = None) -> DesignSolution:
    """Provably optimal design for ``model`` (status ``infeasible`` with witnesses otherwise).

    Among designs whose costs agree within 1e-6 the solver prefers fewer PCs,
    then fewer printers, then the lexicographically smaller set of PC ids.
    """
    started = time.perf_counter()
    stats = stats if stats is not None else SolveStats()
    pairs, witnesses = _reduce(model)
    if witnesses:
        return DesignSolution(
            status=INFEASIBLE, witnesses=tuple(witnesses), solve_seconds=time.perf_counter() - started
        )

    choice_of: dict[int, tuple[str, ...]] = {}
    components = _components(pairs)
    stats.components = len(components)
    for facilities, pair_ids in components:
        comp = _ComponentSolver(model, pairs, facilities, pair_ids, stats)
        choice = comp.solve()
        if choice is None:
            stranded = [
                (comp.pairs[k].dest, comp.pairs[k].part)
                for k in range(len(comp.pairs))
                if not math.isfinite(comp.pairs[k].ext_cost)
            ]
            return DesignSolution(
                status=INFEASIBLE,
                witnesses=tuple(stranded),
                solve_seconds=time.perf_counter() - started,
            )
        for k, e in enumerate(choice):
            if e >= 0:
                _, f, _, _ = comp.opts[e]
                choice_of[pair_ids[k]] = ("int", model.ifs[facilities[f]])

    internal, external, terms = [], [], []
    load: dict[str, float] = {}
    for j, pair in enumerate(pairs):
        route = choice_of.get(j)
        if route is None:
            external.append((pair.ext_supplier, pair.dest, pair.part))
            terms.append(pair.ext_cost)
        else:
            src = route[1]
            internal.append((src, pair.dest, pair.part))
            terms.append(next(c for i, c, _ in pair.options if model.ifs[i] == src))
            load[src] = load.get(src, 0.0) + model.internal_load(src, pair.dest, pair.part)
    for src, hours in load.items():
        terms.append(model.econ.facility_fixed_cost)
        terms.append(printers_needed(hours, model.econ.printer_capacity_hours) * model.econ.printer_fixed_cost)
    solution = assemble_solution(model, internal, external, math.fsum(terms))
    log.debug(
        "solved max_lead=%s: %d components, %d nodes, %d LPs",
        model.max_lead_hours,
        stats.components,
        stats.nodes,
        stats.lp_solves,
    )
    return replace(solution, solve_seconds=time.perf_counter() - started)
