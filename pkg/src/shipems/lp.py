"""Exact LP solving with a bounded-variable revised primal simplex.

Problems are stated in maximize orientation over box-bounded variables
with sparse constraint rows.  Bounds are handled implicitly (never as
rows), which keeps the basis small for models that are dense in boxes
and sparse in rows.  Every row is carried internally as a ranged row
``row_lower <= a.x <= row_upper`` with a logical slack variable, so
inequalities, equalities and two-sided rows all go through one code
path.  Phase 1 minimizes the total bound violation of the logical/basic
variables; the problem is reported infeasible when that optimum stays
above tolerance.

``solve_lp`` is a pure function of its inputs; independent problems may
be solved concurrently.
"""

from __future__ import annotations

import time
from collections import OrderedDict
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import DimensionMismatch, NumericalBreakdown

AT_LOWER = 0
AT_UPPER = 1
BASIC = 2

_INF = np.inf


class LpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class Basis:
    """Resumable simplex basis: per-variable status plus basic column order.

    ``vstat`` has one entry per structural-plus-logical variable
    (AT_LOWER / AT_UPPER / BASIC); ``basic`` lists the basic columns in
    row order.
    """

    vstat: np.ndarray
    basic: np.ndarray


def _as_csr(mat, n_cols):
    if mat is None:
        return None
    if sp.issparse(mat):
        out = mat.tocsr().astype(np.float64)
    else:
        arr = np.atleast_2d(np.asarray(mat, dtype=np.float64))
        out = sp.csr_matrix(arr)
    if out.shape[1] != n_cols:
        raise DimensionMismatch(
            f"constraint block has {out.shape[1]} columns, expected {n_cols}"
        )
    return out


def _as_vec(v, n, name):
    arr = np.asarray(v, dtype=np.float64).ravel()
    if arr.size != n:
        raise DimensionMismatch(f"{name} has length {arr.size}, expected {n}")
    return arr


@dataclass
class LinearProgram:
    """Sparse LP in maximize orientation with finite variable boxes.

    Rows come in three blocks, any of which may be absent:
    ``a_ub x <= b_ub``, ``a_eq x == b_eq`` and the ranged block
    ``rg_lower <= a_rg x <= rg_upper``.  ``offset`` is added to the
    reported objective value (used by model builders that fold constant
    terms out of the columns).
    """

    objective: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    a_ub: Optional[sp.csr_matrix] = None
    b_ub: Optional[np.ndarray] = None
    a_eq: Optional[sp.csr_matrix] = None
    b_eq: Optional[np.ndarray] = None
    a_rg: Optional[sp.csr_matrix] = None
    rg_lower: Optional[np.ndarray] = None
    rg_upper: Optional[np.ndarray] = None
    offset: float = 0.0

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=np.float64).ravel()
        n = self.objective.size
        self.lower = _as_vec(self.lower, n, "lower")
        self.upper = _as_vec(self.upper, n, "upper")
        self.a_ub = _as_csr(self.a_ub, n)
        self.a_eq = _as_csr(self.a_eq, n)
        self.a_rg = _as_csr(self.a_rg, n)
        if self.a_ub is not None:
            self.b_ub = _as_vec(self.b_ub, self.a_ub.shape[0], "b_ub")
        if self.a_eq is not None:
            self.b_eq = _as_vec(self.b_eq, self.a_eq.shape[0], "b_eq")
        if self.a_rg is not None:
            self.rg_lower = _as_vec(self.rg_lower, self.a_rg.shape[0], "rg_lower")
            self.rg_upper = _as_vec(self.rg_upper, self.a_rg.shape[0], "rg_upper")

    @property
    def n_vars(self) -> int:
        return self.objective.size

    @property
    def n_rows(self) -> int:
        m = 0
        for block in (self.a_ub, self.a_eq, self.a_rg):
            if block is not None:
                m += block.shape[0]
        return m

    def validate(self):
        """Check invariants; raises DimensionMismatch on malformed input."""
        if not np.all(np.isfinite(self.objective)):
            raise DimensionMismatch("objective has non-finite coefficients")
        if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
            raise DimensionMismatch("variable bounds must be finite")
        if np.any(self.lower > self.upper):
            bad = int(np.argmax(self.lower > self.upper))
            raise DimensionMismatch(f"variable {bad} has lower > upper")
        for name, block in (("a_ub", self.a_ub), ("a_eq", self.a_eq), ("a_rg", self.a_rg)):
            if block is not None and block.nnz and not np.all(np.isfinite(block.data)):
                raise DimensionMismatch(f"{name} has non-finite coefficients")
        if self.b_ub is not None and not np.all(np.isfinite(self.b_ub)):
            raise DimensionMismatch("b_ub has non-finite entries")
        if self.b_eq is not None and not np.all(np.isfinite(self.b_eq)):
            raise DimensionMismatch("b_eq has non-finite entries")
        if self.a_rg is not None:
            if np.any(np.isnan(self.rg_lower)) or np.any(np.isnan(self.rg_upper)):
                raise DimensionMismatch("ranged row bounds contain NaN")
            if np.any(self.rg_lower > self.rg_upper):
                raise DimensionMismatch("ranged row has lower > upper")


@dataclass(frozen=True)
class LpSolution:
    status: LpStatus
    x: Optional[np.ndarray]
    objective_value: float
    iterations: int
    basis: Optional[Basis] = None


def _stack_rows(lp: LinearProgram):
    """Fuse the three row blocks into one csr matrix plus ranged bounds."""
    blocks, lows, ups = [], [], []
    if lp.a_ub is not None:
        blocks.append(lp.a_ub)
        lows.append(np.full(lp.a_ub.shape[0], -_INF))
        ups.append(lp.b_ub)
    if lp.a_eq is not None:
        blocks.append(lp.a_eq)
        lows.append(lp.b_eq)
        ups.append(lp.b_eq)
    if lp.a_rg is not None:
        blocks.append(lp.a_rg)
        lows.append(lp.rg_lower)
        ups.append(lp.rg_upper)
    if not blocks:
        a = sp.csr_matrix((0, lp.n_vars))
        return a, np.empty(0), np.empty(0)
    a = sp.vstack(blocks, format="csr") if len(blocks) > 1 else blocks[0].copy()
    return a, np.concatenate(lows), np.concatenate(ups)


class _SimplexCore:
    """Prepared simplex state reusable across bound overrides.

    Branch-and-bound creates one core per MILP and re-solves with node
    bounds and a warm basis; nothing here mutates the owning problem.
    """

    def __init__(self, lp: LinearProgram, tol: float = 1e-7,
                 bland_after: int = 50, refactor_every: int = 64,
                 max_iter: Optional[int] = None):
        lp.validate()
        self.n = lp.n_vars
        a, row_lo, row_up = _stack_rows(lp)
        self.m = a.shape[0]
        self.tol = float(tol)
        self.bland_after = int(bland_after)
        self.refactor_every = int(refactor_every)
        default_cap = 10_000 + 25 * (self.n + self.m)
        self.max_iter = int(max_iter) if max_iter is not None else default_cap
        self.offset = float(lp.offset)

        # Row equilibration with powers of two keeps pivots well scaled
        # without perturbing representable data.
        scale = np.ones(self.m)
        if a.nnz:
            row_max = np.zeros(self.m)
            mags = np.abs(a.data)
            nz_rows = np.flatnonzero(np.diff(a.indptr) > 0)
            # reduceat segments end at the next nonempty row's start
            row_max[nz_rows] = np.maximum.reduceat(mags, a.indptr[nz_rows])
            pos = row_max > 0
            scale[pos] = np.exp2(-np.round(np.log2(row_max[pos])))
            a = sp.diags(scale) @ a
        self.a_csr = a.tocsr()
        self.a_csc = a.tocsc()
        self.a_t_csr = self.a_csr.transpose().tocsr()   # for pricing
        self.row_lo = row_lo * scale
        self.row_up = row_up * scale

        self.c = lp.objective.copy()
        self.col_lo = lp.lower.copy()
        self.col_up = lp.upper.copy()

        # cached csc arrays for fast basis assembly / column fetch
        self._ci = self.a_csc.indices
        self._cp = self.a_csc.indptr
        self._cd = self.a_csc.data
        # small LRU of factorizations keyed by the basic set; warm
        # starts in branch and bound resume from recently seen bases
        # (dive children immediately, heap siblings shortly after)
        self._lu_cache: "OrderedDict[bytes, object]" = OrderedDict()
        self._lu_cache_max = 96
        # live factor state (basic, lu, etas, eta_nnz) from the last
        # solve; adopted wholesale when a warm start resumes from it,
        # which skips the entry refactorization entirely
        self._live = None
        # structural reduced costs of the last optimal solve (for
        # reduced-cost bound fixing in branch and bound)
        self.last_reduced_costs = None

    # -- factorization -------------------------------------------------

    def _column(self, j, out):
        """Dense column j of G = [A, -I] into preallocated ``out``."""
        out.fill(0.0)
        if j < self.n:
            s, e = self._cp[j], self._cp[j + 1]
            out[self._ci[s:e]] = self._cd[s:e]
        else:
            out[j - self.n] = -1.0
        return out

    def _basis_matrix(self, basic):
        m, n = self.m, self.n
        struct = basic < n
        counts = np.ones(m, dtype=np.int64)
        scols = basic[struct]
        counts[struct] = self._cp[scols + 1] - self._cp[scols]
        indptr = np.zeros(m + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        data = np.empty(indptr[-1])
        indices = np.empty(indptr[-1], dtype=np.int32)
        # vectorized gather of the structural column slices
        lens = counts[struct]
        if lens.size:
            within = np.arange(int(lens.sum()), dtype=np.int64)
            within -= np.repeat(np.cumsum(lens) - lens, lens)
            src = np.repeat(self._cp[scols], lens) + within
            dst = np.repeat(indptr[:-1][struct], lens) + within
            data[dst] = self._cd[src]
            indices[dst] = self._ci[src]
        slack_pos = indptr[:-1][~struct]
        data[slack_pos] = -1.0
        indices[slack_pos] = basic[~struct] - n
        return sp.csc_matrix((data, indices, indptr), shape=(m, m))

    def point_feasible(self, x, col_lo=None, col_up=None, tol=1e-7) -> bool:
        """Explicit feasibility check of a candidate point (scaled rows)."""
        lo = self.col_lo if col_lo is None else col_lo
        up = self.col_up if col_up is None else col_up
        if np.any(x < lo - tol) or np.any(x > up + tol):
            return False
        if self.m == 0:
            return True
        act = self.a_csr @ x
        return bool(np.all(act >= self.row_lo - tol)
                    and np.all(act <= self.row_up + tol))

    def objective_of(self, x) -> float:
        return float(self.c @ x) + self.offset

    # -- main solve ------------------------------------------------------

    def solve(self, col_lo=None, col_up=None, warm: Optional[Basis] = None,
              deadline: Optional[float] = None):
        """Solve with optional bound overrides and warm basis.

        ``deadline`` (absolute perf_counter time) aborts a long solve
        between pivots; the caller receives status None to signal an
        unfinished relaxation.
        """
        n, m = self.n, self.m
        nm = n + m
        tol = self.tol
        lo = np.concatenate([self.col_lo if col_lo is None else col_lo, self.row_lo])
        up = np.concatenate([self.col_up if col_up is None else col_up, self.row_up])
        if np.any(lo > up):
            # empty box: trivially infeasible
            return LpStatus.INFEASIBLE, None, -_INF, 0, None
        cobj = np.zeros(nm)
        cobj[:n] = self.c

        vstat, basic = self._initial_basis(lo, up, warm)
        z = np.empty(nm)
        at_low = vstat == AT_LOWER
        z[at_low] = lo[at_low]
        at_upp = vstat == AT_UPPER
        z[at_upp] = up[at_upp]
        z[basic] = 0.0

        # product-form updates: eta vectors kept sparse (their support is
        # local for staircase bases), applied sequentially around splu
        etas: list = []   # (pivot_pos, idx array, vals array, w[pivot])
        eta_nnz = 0
        lu = None
        gbuf = np.empty(m)
        adopted = False
        if (warm is not None and self._live is not None
                and np.array_equal(self._live[0], basic)):
            lu = self._live[1]
            etas = list(self._live[2])
            eta_nnz = self._live[3]
            adopted = True

        def refactor():
            nonlocal lu, eta_nnz
            etas.clear()
            eta_nnz = 0
            if m == 0:
                return
            key = basic.tobytes()
            cached = self._lu_cache.get(key)
            if cached is not None:
                self._lu_cache.move_to_end(key)
                lu = cached
                return
            lu = splu(self._basis_matrix(basic).tocsc(),
                      permc_spec="COLAMD",
                      options={"SymmetricMode": False})
            self._lu_cache[key] = lu
            if len(self._lu_cache) > self._lu_cache_max:
                self._lu_cache.popitem(last=False)

        def ftran(v):
            u = lu.solve(v) if m else v.copy()
            for p, idx, vals, wp in etas:
                piv = u[p] / wp
                if piv != 0.0:
                    u[idx] -= vals * piv
                u[p] = piv
            return u

        def btran(v):
            y = v.copy()
            for p, idx, vals, wp in reversed(etas):
                y[p] = (y[p] - (vals @ y[idx] - wp * y[p])) / wp
            return lu.solve(y, trans="T") if m else y

        def push_eta(r, w):
            nonlocal eta_nnz
            idx = np.flatnonzero(np.abs(w) > 1e-12)
            etas.append((r, idx, w[idx].copy(), w[r]))
            eta_nnz += idx.size

        def recompute_basics():
            if m == 0:
                return
            xs = z.copy()
            xs[basic] = 0.0
            rhs = xs[n:] - self.a_csr @ xs[:n]
            z[basic] = ftran(rhs)

        def save_live():
            self._live = (basic.copy(), lu, list(etas), eta_nnz)

        if not adopted:
            try:
                refactor()
            except RuntimeError:
                if warm is None:
                    raise NumericalBreakdown("singular initial basis")
                vstat, basic = self._initial_basis(lo, up, None)
                z[vstat == AT_LOWER] = lo[vstat == AT_LOWER]
                z[vstat == AT_UPPER] = up[vstat == AT_UPPER]
                refactor()
        recompute_basics()

        iters = 0
        degen_streak = 0
        bland = False
        verify_rounds = 0
        free_range = up - lo > 0.0
        # phase-2 reduced costs maintained incrementally through the
        # pivotal row; Devex reference weights approximate steepest edge
        d_cache = None
        d_stale = False
        z_stale = False
        gamma = np.ones(nm)

        def price_phase2():
            cb = cobj[basic]
            y = btran(cb) if m else cb
            dd = np.empty(nm)
            dd[:n] = cobj[:n] - (self.a_t_csr @ y if m else 0.0)
            dd[n:] = y
            return dd

        while True:
            if iters > self.max_iter:
                raise NumericalBreakdown(
                    f"simplex exceeded iteration cap {self.max_iter}")
            if deadline is not None and iters % 16 == 0 \
                    and time.perf_counter() > deadline:
                # hand back the current iterate: a phase-2 point is
                # primal feasible, which lets callers build an incumbent
                save_live()
                zb_now = z[basic]
                feas = not (np.any(zb_now < lo[basic] - tol)
                            or np.any(zb_now > up[basic] + tol))
                x_part = z[:n].copy() if feas else None
                obj_part = float(cobj[:n] @ z[:n]) + self.offset if feas else -_INF
                return None, x_part, obj_part, iters, Basis(vstat.copy(), basic.copy())

            zb = z[basic]
            lob = lo[basic]
            upb = up[basic]
            below = zb < lob - tol
            above = zb > upb + tol
            infeasible = bool(below.any() or above.any())

            if infeasible:
                cb = below.astype(np.float64) - above.astype(np.float64)
                y = btran(cb) if m else cb
                d = np.empty(nm)
                d[:n] = -(self.a_t_csr @ y) if m else 0.0
                d[n:] = y
                d_cache = None
            else:
                if d_cache is None:
                    d_cache = price_phase2()
                    d_stale = False
                d = d_cache

            eligible = free_range & (
                ((vstat == AT_LOWER) & (d > tol)) | ((vstat == AT_UPPER) & (d < -tol))
            )
            if not eligible.any():
                if (d_stale or z_stale) and verify_rounds < 4:
                    # incremental values can drift; confirm on freshly
                    # priced/resolved quantities before declaring
                    verify_rounds += 1
                    d_cache = None
                    recompute_basics()
                    z_stale = False
                    continue
                save_live()
                if infeasible:
                    return LpStatus.INFEASIBLE, None, -_INF, iters, Basis(vstat.copy(), basic.copy())
                x = z[:n].copy()
                objective = float(cobj[:n] @ x) + self.offset
                self.last_reduced_costs = d[:n].copy()
                return LpStatus.OPTIMAL, x, objective, iters, Basis(vstat.copy(), basic.copy())

            if bland:
                j = int(np.argmax(eligible))
            elif infeasible:
                score = np.where(eligible, np.abs(d), -1.0)
                j = int(np.argmax(score))
            else:
                score = np.where(eligible, d * d / gamma, -1.0)
                j = int(np.argmax(score))

            sigma = 1.0 if vstat[j] == AT_LOWER else -1.0
            w = ftran(self._column(j, gbuf))
            t = sigma * w

            # ratio test: basic r moves as z_r - t_r * step
            moving = np.abs(t) > 1e-10
            ratios = np.full(m, _INF)
            if moving.any():
                idx = np.flatnonzero(moving)
                ti = t[idx]
                zi = zb[idx]
                loi = lob[idx]
                upi = upb[idx]
                tgt = np.where(ti > 0,
                               np.where(zi > upi + tol, upi, loi),
                               np.where(zi < loi - tol, loi, upi))
                # violated basics moving further out never block
                block = np.where(ti > 0, zi >= loi - tol, zi <= upi + tol)
                block &= np.isfinite(tgt)
                rr = np.where(block, (zi - tgt) / ti, _INF)
                ratios[idx] = np.maximum(rr, 0.0)

            min_row_ratio = ratios.min() if m else _INF
            own_range = up[j] - lo[j]

            if own_range <= min_row_ratio:
                step = own_range
                if not np.isfinite(step):
                    if infeasible:
                        raise NumericalBreakdown(
                            "unbounded infeasibility direction; inconsistent rows")
                    save_live()
                    return LpStatus.UNBOUNDED, None, _INF, iters, Basis(vstat.copy(), basic.copy())
                # bound flip: j runs to its opposite bound, basis (and
                # with it every reduced cost) unchanged
                z[basic] = zb - t * step
                vstat[j] = AT_UPPER if vstat[j] == AT_LOWER else AT_LOWER
                z[j] = up[j] if vstat[j] == AT_UPPER else lo[j]
                iters += 1
                degen_streak = 0
                bland = False
                verify_rounds = 0
                z_stale = True
                continue

            if not np.isfinite(min_row_ratio):
                if infeasible:
                    raise NumericalBreakdown(
                        "unblocked infeasibility direction; inconsistent rows")
                save_live()
                return LpStatus.UNBOUNDED, None, _INF, iters, Basis(vstat.copy(), basic.copy())

            # leaving choice: among near-minimal ratios take the largest |t|
            cand = ratios <= min_row_ratio + 1e-9
            tsel = np.where(cand, np.abs(t), -1.0)
            r = int(np.argmax(tsel))
            step = max(ratios[r], 0.0)

            # pivotal row: maintains phase-2 reduced costs without a full
            # re-pricing and feeds the Devex weight updates
            if not infeasible and m:
                e_r = np.zeros(m)
                e_r[r] = 1.0
                rho = btran(e_r)
                alpha = np.empty(nm)
                alpha[:n] = self.a_t_csr @ rho
                alpha[n:] = -rho
                aq = w[r]
                dq = d_cache[j]
                gq = max(gamma[j], 1.0)
                np.maximum(gamma, (alpha / aq) ** 2 * gq, out=gamma)
                d_cache -= (dq / aq) * alpha
                d_cache[j] = 0.0
                gamma[basic[r]] = max(gq / (aq * aq), 1.0)
                gamma[j] = gq
                d_stale = True
                if gamma.max() > 1e10:
                    gamma[:] = 1.0   # reset the reference framework

            z[basic] = zb - t * step
            leave = basic[r]
            # snap the leaver exactly onto the bound it hit
            if t[r] > 0:
                tgt_bound = upb[r] if zb[r] > upb[r] + tol else lob[r]
            else:
                tgt_bound = lob[r] if zb[r] < lob[r] - tol else upb[r]
            z[leave] = tgt_bound
            vstat[leave] = AT_UPPER if tgt_bound == upb[r] else AT_LOWER
            z[j] = (lo[j] if sigma > 0 else up[j]) + sigma * step
            vstat[j] = BASIC
            basic[r] = j
            push_eta(r, w)
            iters += 1
            verify_rounds = 0
            z_stale = True

            if step <= 1e-9:
                degen_streak += 1
                if degen_streak > self.bland_after:
                    bland = True
            else:
                degen_streak = 0
                bland = False

            if (len(etas) >= self.refactor_every or abs(w[r]) < 1e-8
                    or eta_nnz > max(4 * m, 20_000)):
                try:
                    refactor()
                except RuntimeError as exc:
                    raise NumericalBreakdown(f"singular basis during pivoting: {exc}")
                recompute_basics()
                d_cache = None
                z_stale = False

    def _initial_basis(self, lo, up, warm: Optional[Basis]):
        n, m, nm = self.n, self.m, self.n + self.m
        if warm is not None:
            vstat = np.asarray(warm.vstat, dtype=np.int8).copy()
            basic = np.asarray(warm.basic, dtype=np.int64).copy()
            ok = (
                vstat.size == nm
                and basic.size == m
                and np.all(basic >= 0) and np.all(basic < nm)
                and np.unique(basic).size == m
                and int((vstat == BASIC).sum()) == m
                and np.all(vstat[basic] == BASIC)
            )
            if ok:
                # nonbasic entries must sit on a finite bound
                nonb = vstat != BASIC
                bad_low = nonb & (vstat == AT_LOWER) & ~np.isfinite(lo)
                vstat[bad_low] = AT_UPPER
                bad_up = nonb & (vstat == AT_UPPER) & ~np.isfinite(up)
                vstat[bad_up] = AT_LOWER
                return vstat, basic
        vstat = np.empty(nm, dtype=np.int8)
        nearer_low = np.abs(lo[:n]) <= np.abs(up[:n])
        vstat[:n] = np.where(nearer_low, AT_LOWER, AT_UPPER)
        vstat[n:] = BASIC
        basic = np.arange(n, nm, dtype=np.int64)
        return vstat, basic


def solve_lp(lp: LinearProgram, tol: float = 1e-7, *,
             max_iter: Optional[int] = None, bland_after: int = 50,
             refactor_every: int = 64, basis: Optional[Basis] = None) -> LpSolution:
    """Solve a box-bounded LP to optimality (maximize orientation).

    Parameters
    ----------
    lp : LinearProgram
        Problem with finite variable boxes; must pass ``lp.validate()``.
    tol : float
        Feasibility/optimality tolerance (reduced costs and bound
        violations below ``tol`` are treated as zero).
    max_iter : int, optional
        Pivot cap; exceeding it raises :class:`NumericalBreakdown`.
    bland_after : int
        Length of the degenerate-pivot streak after which Bland's rule
        takes over until a nondegenerate pivot occurs.
    basis : Basis, optional
        Warm-start basis from a previous solve of a problem with the
        same rows (bounds may differ).

    Returns
    -------
    LpSolution
        ``status`` is OPTIMAL / INFEASIBLE / UNBOUNDED; on OPTIMAL,
        ``x`` is feasible within ``tol`` and no feasible point beats
        ``objective_value`` by more than ``tol``.
    """
    core = _SimplexCore(lp, tol=tol, bland_after=bland_after,
                        refactor_every=refactor_every, max_iter=max_iter)
    status, x, obj, iters, fin = core.solve(warm=basis)
    return LpSolution(status=status, x=x, objective_value=obj,
                      iterations=iters, basis=fin)
