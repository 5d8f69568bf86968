"""Branch-and-bound over bounded integer variables with LP relaxations.

Node selection is best-bound with depth-first dives so a usable
incumbent exists early (the dispatch engine runs against a per-step
deadline).  Branching picks the most-fractional relaxation value, ties
broken by lowest variable index, which keeps replays deterministic.
Child nodes warm-start the simplex from the parent basis.

A timed-out search returns the best incumbent found, flagged TIMED_OUT;
it is never passed off as OPTIMAL.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, NumericalBreakdown
from .lp import AT_LOWER, AT_UPPER, Basis, LinearProgram, LpStatus, _SimplexCore


class MilpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    TIMED_OUT = "timed_out"


@dataclass
class MilpProblem:
    """An LP plus a per-variable integrality mask.

    Integer-masked variables must carry finite integer bounds.
    ``basis_hint`` optionally seeds the root relaxation (model builders
    know a good crash basis).
    """

    lp: LinearProgram
    integrality: np.ndarray
    basis_hint: Optional[Basis] = None

    def __post_init__(self):
        self.integrality = np.asarray(self.integrality, dtype=bool).ravel()

    def validate(self):
        self.lp.validate()
        if self.integrality.size != self.lp.n_vars:
            raise DimensionMismatch(
                f"integrality mask has {self.integrality.size} entries for "
                f"{self.lp.n_vars} variables")
        idx = np.flatnonzero(self.integrality)
        lo = self.lp.lower[idx]
        up = self.lp.upper[idx]
        if np.any(np.abs(lo - np.round(lo)) > 1e-9) or np.any(np.abs(up - np.round(up)) > 1e-9):
            raise DimensionMismatch("integer variables must have integer bounds")


@dataclass(frozen=True)
class MilpSolution:
    status: MilpStatus
    x: Optional[np.ndarray]
    objective_value: float
    nodes_explored: int
    wall_time: float
    basis: Optional[Basis] = None

    @property
    def has_incumbent(self) -> bool:
        return self.x is not None


@dataclass
class SolverConfig:
    """Knobs for solve_milp; defaults suit desk-scale dispatch windows.

    The effective bound-pruning gap is ``max(gap_tol, rel_gap * |best|)``;
    ``rel_gap`` stays zero by default so results are absolute-gap exact,
    and real-time callers can trade a relative sliver of objective for
    large search-tree savings.
    """

    integrality_tol: float = 1e-6
    gap_tol: float = 1e-6
    rel_gap: float = 0.0
    node_limit: Optional[int] = None
    deadline_s: Optional[float] = None
    lp_tol: float = 1e-7
    bland_after: int = 50
    refactor_every: int = 64
    lp_max_iter: Optional[int] = None


def _round_integers(x, int_idx, lower, upper):
    out = x.copy()
    snapped = np.round(out[int_idx])
    out[int_idx] = np.clip(snapped, lower[int_idx], upper[int_idx])
    return out


def solve_milp(problem: MilpProblem, cfg: Optional[SolverConfig] = None) -> MilpSolution:
    """Solve a mixed-integer LP (maximize orientation) by branch and bound.

    Returns OPTIMAL with the objective within the effective gap
    ``max(cfg.gap_tol, cfg.rel_gap * |best|)`` of the true
    mixed-integer optimum, INFEASIBLE when no integer-feasible point
    exists, or TIMED_OUT carrying the incumbent found so far
    (``x is None`` when the deadline hit before any incumbent).
    """
    cfg = cfg or SolverConfig()
    problem.validate()
    start = time.perf_counter()
    deadline = None if cfg.deadline_s is None else start + cfg.deadline_s

    lp = problem.lp
    int_idx = np.flatnonzero(problem.integrality)
    core = _SimplexCore(lp, tol=cfg.lp_tol, bland_after=cfg.bland_after,
                        refactor_every=cfg.refactor_every,
                        max_iter=cfg.lp_max_iter)

    def timed_out():
        return deadline is not None and time.perf_counter() > deadline

    def fractional(x):
        if int_idx.size == 0:
            return None
        vals = x[int_idx]
        dist = np.abs(vals - np.round(vals))
        k = int(np.argmax(dist))  # argmax takes the lowest index on ties
        if dist[k] <= cfg.integrality_tol:
            return None
        return int(int_idx[k])

    nodes = 0
    root_lo = lp.lower.copy()
    root_up = lp.upper.copy()
    abs_deadline = None if cfg.deadline_s is None else start + cfg.deadline_s

    def solve_node(lo, up, warm):
        nonlocal nodes
        # fold in globally fixed bounds (reduced-cost fixing)
        lo = np.maximum(lo, root_lo)
        up = np.minimum(up, root_up)
        if np.any(lo > up):
            return LpStatus.INFEASIBLE, None, -np.inf, 0, None
        nodes += 1
        return core.solve(col_lo=lo, col_up=up, warm=warm,
                          deadline=abs_deadline)

    if timed_out():
        return MilpSolution(MilpStatus.TIMED_OUT, None, -np.inf, 0,
                            time.perf_counter() - start)

    status, x, obj, _, basis = solve_node(root_lo, root_up, problem.basis_hint)
    if status is None:
        # deadline hit inside the root relaxation; a feasible partial
        # iterate still yields a usable rounded incumbent
        incumbent = None
        inc_obj = -np.inf
        if x is not None and int_idx.size:
            cand = x.copy()
            cand[int_idx] = np.floor(cand[int_idx] + cfg.integrality_tol)
            np.clip(cand[int_idx], lp.lower[int_idx], lp.upper[int_idx],
                    out=cand[int_idx])
            if core.point_feasible(cand, lp.lower, lp.upper, tol=cfg.lp_tol):
                incumbent = _round_integers(cand, int_idx, lp.lower, lp.upper)
                inc_obj = core.objective_of(cand)
        elif x is not None:
            if core.point_feasible(x, lp.lower, lp.upper, tol=cfg.lp_tol):
                incumbent, inc_obj = x, obj
        return MilpSolution(MilpStatus.TIMED_OUT, incumbent, inc_obj, nodes,
                            time.perf_counter() - start)
    if status is LpStatus.INFEASIBLE:
        return MilpSolution(MilpStatus.INFEASIBLE, None, -np.inf, nodes,
                            time.perf_counter() - start)
    if status is LpStatus.UNBOUNDED:
        raise NumericalBreakdown("LP relaxation unbounded despite variable boxes")

    incumbent_x = None
    incumbent_obj = -np.inf
    incumbent_basis = None
    root_bound = obj

    def prune_gap():
        if incumbent_obj == -np.inf:
            return cfg.gap_tol
        return max(cfg.gap_tol, cfg.rel_gap * abs(incumbent_obj))
    root_d = core.last_reduced_costs
    root_vs = np.asarray(basis.vstat) if basis is not None else None

    def refix():
        """Reduced-cost bound fixing against the current incumbent: an
        integer move of one unit against a root reduced cost larger
        than the remaining bound slack can never beat the incumbent.
        Tightens the global bounds, which every node folds in."""
        if int_idx.size == 0 or root_d is None or root_vs is None \
                or incumbent_obj == -np.inf:
            return
        slack = root_bound - (incumbent_obj + prune_gap())
        d = root_d[int_idx]
        vs = root_vs[int_idx]
        fix_low = (vs == AT_LOWER) & (-d > slack)
        fix_up = (vs == AT_UPPER) & (d > slack)
        root_up[int_idx[fix_low]] = root_lo[int_idx[fix_low]]
        root_lo[int_idx[fix_up]] = root_up[int_idx[fix_up]]

    def try_round_down(x):
        """Floor the integer entries of a relaxation point; if the result
        is verifiably feasible it seeds/improves the incumbent.  For
        monotone shedding models flooring is almost always feasible, so
        this gives branch-and-bound a strong bound immediately."""
        nonlocal incumbent_x, incumbent_obj
        if int_idx.size == 0:
            return
        cand = x.copy()
        cand[int_idx] = np.floor(cand[int_idx] + cfg.integrality_tol)
        np.clip(cand[int_idx], lp.lower[int_idx], lp.upper[int_idx],
                out=cand[int_idx])
        obj = core.objective_of(cand)
        if obj > incumbent_obj and core.point_feasible(cand, lp.lower, lp.upper,
                                                       tol=cfg.lp_tol):
            incumbent_x, incumbent_obj = cand, obj
            refix()

    try_round_down(x)

    # heap of open nodes: (-bound, tiebreak, lo, up, warm_basis)
    heap: list = []
    counter = 0

    def push(bound, lo, up, warm):
        nonlocal counter
        counter += 1
        heapq.heappush(heap, (-bound, counter, lo, up, warm))

    def result(status_):
        wall = time.perf_counter() - start
        if incumbent_x is None:
            return MilpSolution(status_, None, -np.inf, nodes, wall)
        # snap against the original problem bounds: the search bounds may
        # have been tightened past an older (still optimal) incumbent
        xr = _round_integers(incumbent_x, int_idx, lp.lower, lp.upper)
        return MilpSolution(status_, xr, incumbent_obj, nodes, wall, incumbent_basis)

    # dive entry point: current node LP already solved
    current = (x, obj, basis, root_lo, root_up)
    while True:
        if current is not None:
            x, obj, basis, lo, up = current
            current = None
            if obj > incumbent_obj + prune_gap():
                j = fractional(x)
                if j is None:
                    incumbent_x, incumbent_obj, incumbent_basis = x, obj, basis
                    refix()
                else:
                    try_round_down(x)
                    if obj <= incumbent_obj + prune_gap():
                        continue  # the rounded incumbent closed this node
                    down_up = up.copy()
                    down_up[j] = np.floor(x[j])
                    up_lo = lo.copy()
                    up_lo[j] = np.ceil(x[j])
                    frac = x[j] - np.floor(x[j])
                    # dive toward the nearer integer, queue the sibling
                    if frac < 0.5:
                        dive = (lo, down_up)
                        sibling = (up_lo, up)
                    else:
                        dive = (up_lo, up)
                        sibling = (lo, down_up)
                    push(obj, sibling[0], sibling[1], basis)
                    if timed_out():
                        return result(MilpStatus.TIMED_OUT)
                    if cfg.node_limit is not None and nodes >= cfg.node_limit:
                        return result(MilpStatus.TIMED_OUT)
                    st, xx, oo, _, bb = solve_node(dive[0], dive[1], basis)
                    if st is None:
                        if xx is not None:
                            try_round_down(xx)
                        return result(MilpStatus.TIMED_OUT)
                    if st is LpStatus.OPTIMAL:
                        current = (xx, oo, bb, dive[0], dive[1])
                    continue

        if not heap:
            break
        if timed_out():
            return result(MilpStatus.TIMED_OUT)
        if cfg.node_limit is not None and nodes >= cfg.node_limit:
            return result(MilpStatus.TIMED_OUT)
        neg_bound, _, lo, up, warm = heapq.heappop(heap)
        if -neg_bound <= incumbent_obj + prune_gap():
            continue  # pruned by bound
        st, xx, oo, _, bb = solve_node(lo, up, warm)
        if st is None:
            if xx is not None:
                try_round_down(xx)
            return result(MilpStatus.TIMED_OUT)
        if st is LpStatus.OPTIMAL:
            current = (xx, oo, bb, lo, up)

    if incumbent_x is None:
        return result(MilpStatus.INFEASIBLE)
    return result(MilpStatus.OPTIMAL)
