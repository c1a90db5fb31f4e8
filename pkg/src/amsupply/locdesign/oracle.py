"""Exhaustive reference solver for tiny design models (test oracle).

Enumerates every single-source assignment of demanded pairs to lead-time
feasible sources: any IF as a PC, any supplier selling the part. The open
set follows from the assignment and every PC gets the minimal printer
count. No dominance reasoning is applied.
"""

from __future__ import annotations

import time

import numpy as np

from amsupply.locdesign.model import (
    INFEASIBLE,
    LEAD_TOLERANCE,
    DesignModel,
    DesignSolution,
    assemble_solution,
)

MAX_IFS = 5
MAX_PARTS = 3
MAX_SUPPLIERS = 2
MAX_PRINTERS = 3
CHUNK = 1 << 17


class OracleSizeError(ValueError):
    pass


def brute_force_design(model: DesignModel) -> DesignSolution:
    started = time.perf_counter()
    if (
        len(model.ifs) > MAX_IFS
        or len(model.parts) > MAX_PARTS
        or len(model.suppliers) > MAX_SUPPLIERS
        or model.econ.max_printers > MAX_PRINTERS
    ):
        raise OracleSizeError(
            f"model exceeds oracle caps ({MAX_IFS} IFs, {MAX_PARTS} parts, "
            f"{MAX_SUPPLIERS} suppliers, {MAX_PRINTERS} printers)"
        )
    h = model.max_lead_hours + LEAD_TOLERANCE
    nf = len(model.ifs)
    half = model.econ.printer_capacity_hours / 2.0
    econ = model.econ

    pairs = model.demanded_pairs()
    # per pair: list of (kind, source, cost, facility index or -1, load)
    sources = []
    witnesses = []
    for dest, p in pairs:
        opts = []
        for i, r in enumerate(model.ifs):
            if model.internal_lead(r, dest, p) <= h:
                opts.append(("int", r, model.internal_cost(r, dest, p), i, model.internal_load(r, dest, p)))
        for s in model.suppliers:
            if model.sells(s, p) and model.external_lead(s, dest, p) <= h:
                opts.append(("ext", s, model.external_cost(s, dest, p), -1, 0.0))
        if not opts:
            witnesses.append((dest, p))
        sources.append(opts)
    if witnesses:
        return DesignSolution(status=INFEASIBLE, witnesses=tuple(witnesses), solve_seconds=time.perf_counter() - started)
    if not pairs:
        return assemble_solution(model, [], [], 0.0)

    radix = np.array([len(o) for o in sources], dtype=np.int64)
    total = int(np.prod(radix))
    cost_tab = [np.array([o[2] for o in opts]) for opts in sources]
    fac_tab = [np.array([o[3] for o in opts]) for opts in sources]
    load_tab = [np.array([o[4] for o in opts]) for opts in sources]
    bit = 2 ** np.arange(nf - 1, -1, -1, dtype=np.int64)

    best = None  # (cost, pcs, printers, -bits, index)
    for start in range(0, total, CHUNK):
        idx = np.arange(start, min(total, start + CHUNK), dtype=np.int64)
        digits = np.empty((len(idx), len(pairs)), dtype=np.int64)
        rest = idx.copy()
        for j in range(len(pairs) - 1, -1, -1):
            digits[:, j] = rest % radix[j]
            rest //= radix[j]
        cost = np.zeros(len(idx))
        load = np.zeros((len(idx), nf))
        used = np.zeros((len(idx), nf), dtype=bool)
        for j in range(len(pairs)):
            d = digits[:, j]
            cost += cost_tab[j][d]
            fac = fac_tab[j][d]
            for i in range(nf):
                hit = fac == i
                load[:, i] += np.where(hit, load_tab[j][d], 0.0)
                used[:, i] |= hit
        printers = np.maximum(1, np.ceil(load / half - 1e-9)).astype(np.int64) * used
        ok = (printers <= econ.max_printers).all(axis=1)
        cost += (used * econ.facility_fixed_cost).sum(axis=1) + (printers * econ.printer_fixed_cost).sum(axis=1)
        if not ok.any():
            continue
        cost = np.where(ok, cost, np.inf)
        low = cost.min()
        tie = np.flatnonzero(cost <= low + 1e-9 * max(1.0, abs(low)))
        pcs = used[tie].sum(axis=1)
        npr = printers[tie].sum(axis=1)
        bits = (used[tie] * bit).sum(axis=1)
        order = np.lexsort((idx[tie], -bits, npr, pcs))
        k = tie[order[0]]
        cand = (float(cost[k]), int(pcs[order[0]]), int(npr[order[0]]), -int(bits[order[0]]), int(idx[k]))
        if best is None:
            best = cand
        elif cand[0] < best[0] - 1e-9 * max(1.0, abs(best[0])):
            best = cand
        elif abs(cand[0] - best[0]) <= 1e-9 * max(1.0, abs(best[0])) and cand[1:] < best[1:]:
            best = cand

    if best is None:
        return DesignSolution(
            status=INFEASIBLE, witnesses=tuple(pairs), solve_seconds=time.perf_counter() - started
        )
    rest = best[4]
    picks = [0] * len(pairs)
    for j in range(len(pairs) - 1, -1, -1):
        picks[j] = rest % int(radix[j])
        rest //= int(radix[j])
    internal, external = [], []
    for (dest, p), opts, k in zip(pairs, sources, picks):
        kind, src = opts[k][0], opts[k][1]
        (internal if kind == "int" else external).append((src, dest, p))
    solution = assemble_solution(model, internal, external, best[0])
    return DesignSolution(
        status=solution.status,
        open_pcs=solution.open_pcs,
        printers=solution.printers,
        internal_routes=solution.internal_routes,
        external_routes=solution.external_routes,
        total_cost=best[0],
        worst_lead_hours=solution.worst_lead_hours,
        solve_seconds=time.perf_counter() - started,
    )


def enumeration_size(model: DesignModel) -> int:
    """Number of assignments brute_force_design would visit."""
    h = model.max_lead_hours + LEAD_TOLERANCE
    size = 1
    for dest, p in model.demanded_pairs():
        k = sum(model.internal_lead(r, dest, p) <= h for r in model.ifs)
        k += sum(model.sells(s, p) and model.external_lead(s, dest, p) <= h for s in model.suppliers)
        size *= max(k, 1)
    return size
