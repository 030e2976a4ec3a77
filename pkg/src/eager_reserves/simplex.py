"""Revised primal simplex for ``max c@x  s.t.  A x (<=|=) b,  x >= 0``.

The basis is permuted to block lower triangular form by peeling row and
column singletons; only the remaining bump goes through a sparse LU
(``scipy.sparse.linalg.splu``). Updates between refactorizations are kept in
product form, and the inner loops are compiled with numba. Phase I starts from a
crash basis of unit singleton columns (usually the slacks) and adds
artificials only for rows that have none.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable, TextIO

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import _kernels as K
from .errors import SolverError, ValidationError

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"

_PIVOT_TOL = 1e-9


@dataclass(frozen=True)
class StandardFormLp:
    c: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    kinds: np.ndarray

    def __post_init__(self):
        A = sp.csc_matrix(self.A)
        A.sort_indices()
        object.__setattr__(self, "A", A)
        c = np.asarray(self.c, dtype=float)
        b = np.asarray(self.b, dtype=float)
        kinds = np.asarray(self.kinds, dtype="<U1") if len(self.kinds) else np.zeros(0, dtype="<U1")
        m, n = A.shape
        if c.shape != (n,):
            raise ValidationError(f"objective has {c.size} entries for {n} columns")
        if b.shape != (m,) or kinds.shape != (m,):
            raise ValidationError(f"rhs/kinds must have {m} entries")
        if not np.all(np.isfinite(b)):
            raise ValidationError("right-hand side must be finite")
        if not np.all(np.isin(kinds, ("L", "E"))):
            raise ValidationError("row kinds must be 'L' or 'E'")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "kinds", kinds)

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    def residual(self, x: np.ndarray) -> float:
        """Largest constraint violation (including ``x >= 0``) at ``x``."""
        ax = self.A @ x - self.b
        viol = np.where(self.kinds == "E", np.abs(ax), np.maximum(ax, 0.0))
        worst = float(viol.max()) if viol.size else 0.0
        if x.size:
            worst = max(worst, float(-x.min()))
        return max(worst, 0.0)


@dataclass
class SolveReport:
    status: str
    objective: float
    x: np.ndarray
    iterations: int
    max_residual: float
    phase_one_iterations: int = 0
    max_reduced_cost: float = math.nan
    solver: str = "simplex"
    # final basic column per row (-1 where an artificial stayed basic)
    basis: np.ndarray | None = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


@dataclass(frozen=True)
class SimplexOptions:
    tol: float = 1e-7
    max_iters: int | None = None
    refactor_every: int = 50
    bland_after: int = 30
    pricing: str = "devex"
    perturbation: float = 1e-5

    def __post_init__(self):
        if self.pricing not in ("dantzig", "devex"):
            raise ValidationError(f"unknown pricing rule {self.pricing!r}")
        if self.tol <= 0 or self.refactor_every < 1 or self.bland_after < 0 or self.perturbation < 0:
            raise ValidationError("simplex options out of range")


@dataclass(frozen=True)
class StandardIndexMap:
    """How standard-form columns map back onto model variables."""

    n_model: int
    slack_rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def model_values(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x[:self.n_model])


def to_standard_form(model) -> tuple[StandardFormLp, StandardIndexMap]:
    """Equality form of an ``LpModel``: one slack column per ``<=`` row."""
    m, n = model.A.shape
    if n == 0:
        raise ValidationError("no variables")
    slack_rows = np.flatnonzero(model.kinds == "L")
    S = sp.csc_matrix((np.ones(slack_rows.size), (slack_rows, np.arange(slack_rows.size))),
                      shape=(m, slack_rows.size))
    A = sp.hstack([sp.csc_matrix(model.A), S], format="csc")
    c = np.concatenate([np.asarray(model.c, dtype=float), np.zeros(slack_rows.size)])
    lp = StandardFormLp(c, A, np.asarray(model.rhs, dtype=float), np.full(m, "E"))
    return lp, StandardIndexMap(n, slack_rows)


# --------------------------------------------------------------------------
# basis factorization


class _Basis:
    """LU factors of the basis plus a sparse product-form eta file."""

    def __init__(self, A: sp.csc_matrix, basis: np.ndarray, max_etas: int):
        self.A = A
        self.basis = basis
        m = basis.size
        self.max_etas = max_etas
        self.eta_rows = np.zeros(max_etas, dtype=np.int64)
        self.eta_piv = np.zeros(max_etas)
        self.eta_ptr = np.zeros(max_etas + 1, dtype=np.int64)
        self.eta_idx = np.zeros(8 * m + 1024, dtype=np.int64)
        self.eta_val = np.zeros(8 * m + 1024)
        self.refactor()

    def refactor(self):
        B = self.A[:, self.basis].tocsc()
        R = B.tocsr()
        m = B.shape[0]
        rows, cols, n1, n2 = K.peel_singletons(m, B.indptr, B.indices, B.data, R.indptr, R.indices, R.data)
        if n1 < 0:
            raise SolverError("singular basis: structurally rank deficient")
        P = B[rows][:, cols].tocsc()
        P.sort_indices()
        diag = P.diagonal()
        tri = np.r_[0:n1, n1 + n2:m]
        if np.any(np.abs(diag[tri]) < 1e-11):
            raise SolverError("singular basis: zero pivot")
        if n2:
            try:
                lu = splu(P[n1:n1 + n2, n1:n1 + n2].tocsc(), permc_spec="COLAMD")
            except RuntimeError as exc:
                raise SolverError(f"singular basis: {exc}") from None
            L, U = lu.L.tocsc(), lu.U.tocsc()
            LR, UR = L.tocsr(), U.tocsr()
            perm_r, perm_c = lu.perm_r.astype(np.int64), lu.perm_c.astype(np.int64)
            ud = U.diagonal()
        else:
            L = U = LR = UR = sp.csc_matrix((0, 0))
            perm_r = perm_c = np.zeros(0, dtype=np.int64)
            ud = np.zeros(0)
        head = (rows, cols, P.indptr, P.indices, P.data, diag, n1, n2, perm_r, perm_c)
        self._fwd = head + (L.indptr, L.indices, L.data, U.indptr, U.indices, U.data, ud)
        self._bwd = head + (LR.indptr, LR.indices, LR.data, UR.indptr, UR.indices, UR.data, ud)
        self.count = 0

    def _etas(self):
        return self.count, self.eta_rows, self.eta_piv, self.eta_ptr, self.eta_idx, self.eta_val

    def ftran(self, a: np.ndarray) -> np.ndarray:
        x = K.block_solve(a, *self._fwd)
        K.eta_ftran(x, *self._etas())
        return x

    def btran(self, z: np.ndarray) -> np.ndarray:
        z = z.copy()
        K.eta_btran(z, *self._etas())
        return K.block_solve_t(z, *self._bwd)

    def replace(self, r: int, q: int, d: np.ndarray):
        self.basis[r] = q
        if self.count >= self.max_etas:
            self.refactor()
            return
        need = self.eta_ptr[self.count] + d.size
        if need > self.eta_idx.size:
            size = max(2 * self.eta_idx.size, int(need))
            self.eta_idx = np.resize(self.eta_idx, size)
            self.eta_val = np.resize(self.eta_val, size)
        self.count = K.eta_push(d, r, *self._etas())


def _column(A: sp.csc_matrix, j: int, m: int) -> np.ndarray:
    col = np.zeros(m)
    lo, hi = A.indptr[j], A.indptr[j + 1]
    col[A.indices[lo:hi]] = A.data[lo:hi]
    return col


class _Simplex:
    def __init__(self, lp: StandardFormLp, opts: SimplexOptions, initial_basis=None, perturb=False):
        self.opts = opts
        m, n = lp.shape
        self.m, self.n = m, n
        A = lp.A
        b = lp.b.copy()
        slack_rows = np.flatnonzero(lp.kinds == "L")
        if slack_rows.size:
            S = sp.csc_matrix((np.ones(slack_rows.size), (slack_rows, np.arange(slack_rows.size))),
                              shape=(m, slack_rows.size))
            A = sp.hstack([A, S], format="csc")
        # rows with negative rhs are negated so the start point is b >= 0
        sign = np.where(b < 0, -1.0, 1.0)
        if np.any(sign < 0):
            A = sp.csc_matrix(sp.diags(sign) @ A)
            b = b * sign
        self.n_struct = A.shape[1]

        basis = self._checked_basis(A, b, initial_basis) if initial_basis is not None else None
        if basis is None:
            basis = self._crash_basis(A)
        b_exact = b
        if perturb:
            # Shift the rhs of rows whose starting basic column is a unit
            # singleton. That raises only that basic variable, so the start
            # stays feasible, and it breaks the ties behind degenerate pivots.
            rows = np.flatnonzero(basis >= 0)
            cols = basis[rows]
            single = np.diff(A.indptr)[cols] == 1
            rows = rows[single]
            shift = np.random.default_rng(0).uniform(1.0, 2.0, m) * opts.perturbation
            b = b.copy()
            b[rows] += shift[rows] * (1.0 + np.abs(b[rows]))
        art_rows = np.flatnonzero(basis < 0)
        if art_rows.size:
            Art = sp.csc_matrix((np.ones(art_rows.size), (art_rows, np.arange(art_rows.size))),
                                shape=(m, art_rows.size))
            A = sp.hstack([A, Art], format="csc")
            basis[art_rows] = self.n_struct + np.arange(art_rows.size)
        A.sort_indices()
        self.A = A
        self.AT = A.T.tocsr()
        self.A_rows = A.tocsr()
        self.A_rows.sort_indices()
        self.b = b
        self.b_exact = b_exact
        self.n_total = A.shape[1]
        self.c_struct = np.concatenate([lp.c, np.zeros(self.n_struct - n)])
        self.art_rows = art_rows
        self.basis = _Basis(A, basis, opts.refactor_every + 1)
        self.xB = self.basis.ftran(b)
        self.iterations = 0
        self.degenerate_pivots = 0
        self.bland_pivots = 0
        self.streaks: list[int] = []
        limit = opts.max_iters if opts.max_iters is not None else 200 * (m + n)
        self.max_iters = max(int(limit), 1)

    @staticmethod
    def _crash_basis(A: sp.csc_matrix) -> np.ndarray:
        # unit singleton columns become basic in their row
        m = A.shape[0]
        basis = -np.ones(m, dtype=int)
        singles = np.flatnonzero(np.diff(A.indptr) == 1)
        rows_of = A.indices[A.indptr[singles]]
        vals_of = A.data[A.indptr[singles]]
        for j, i, v in zip(singles, rows_of, vals_of):
            if basis[i] < 0 and v == 1.0:
                basis[i] = j
        return basis

    def _checked_basis(self, A: sp.csc_matrix, b: np.ndarray, cols) -> np.ndarray | None:
        # a caller-supplied basis is used only if it is square, nonsingular
        # and primal feasible; otherwise the crash basis takes over
        cols = np.asarray(cols, dtype=int)
        m, n = A.shape
        if cols.shape != (m,) or np.unique(cols).size != m or cols.min(initial=0) < 0 or cols.max(initial=0) >= n:
            return None
        try:
            x = splu(A[:, cols].tocsc()).solve(b)
        except RuntimeError:
            return None
        if not np.all(np.isfinite(x)) or x.min(initial=0.0) < -self.opts.tol:
            return None
        return cols.copy()

    def reduced_costs(self, cost: np.ndarray) -> np.ndarray:
        y = self.basis.btran(cost[self.basis.basis])
        d = cost - self.AT @ y
        d[self.basis.basis] = 0.0
        return d

    # one phase of the primal simplex over cost ``cost``; columns with
    # ``allowed == False`` never enter
    def run(self, cost: np.ndarray, allowed: np.ndarray) -> str:
        tol = self.opts.tol
        devex = self.opts.pricing == "devex"
        degenerate_streak = 0
        since_refactor = 0
        rank = np.zeros(self.n_total, dtype=np.int64)
        have_rank = False
        weights = np.ones(self.n_total)
        d = self.reduced_costs(cost)
        unit = np.zeros(self.m)
        Ar = self.A_rows
        acc = np.zeros(self.n_total)
        mark = np.zeros(self.n_total, dtype=np.int64)
        touched = np.zeros(self.n_total, dtype=np.int64)
        while True:
            if self.iterations >= self.max_iters:
                return ITERATION_LIMIT
            bland = degenerate_streak >= self.opts.bland_after
            if bland:
                if not have_rank:
                    # fixed priority order for this degenerate run: reduced
                    # cost at engagement, then column index
                    score = np.where(allowed & (d > tol), d, 0.0)
                    rank[np.lexsort((np.arange(self.n_total), -score))] = np.arange(self.n_total)
                    have_rank = True
                q = K.price_bland(d, allowed, tol, rank)
            else:
                q = K.price(d, weights, allowed, tol, devex)
            if q < 0:
                return OPTIMAL
            alpha = self.basis.ftran(_column(self.A, q, self.m))
            r = K.ratio_test(self.xB, alpha, _PIVOT_TOL, self.basis.basis, rank, bland)
            if r < 0:
                return UNBOUNDED
            alpha_r = alpha[r]
            theta = max(self.xB[r], 0.0) / alpha_r
            leaving = int(self.basis.basis[r])

            # pivot row of B^-1 A drives the reduced-cost and weight updates
            unit[r] = 1.0
            rho = self.basis.btran(unit)
            unit[r] = 0.0
            dq, wq = d[q], weights[q]
            top = K.update_duals(rho, Ar.indptr, Ar.indices, Ar.data, d, weights, acc, mark, touched,
                                 self.iterations + 1, alpha_r, dq, wq, devex)
            d[q] = 0.0
            d[leaving] = -dq / alpha_r
            if devex:
                weights[leaving] = max(wq / (alpha_r * alpha_r), 1.0)
                if top > 1e8 or weights[leaving] > 1e8:
                    weights[:] = 1.0

            self.xB -= theta * alpha
            self.xB[r] = theta
            self.basis.replace(r, q, alpha)
            self.iterations += 1
            self.bland_pivots += bland
            if theta <= tol:
                degenerate_streak += 1
                self.degenerate_pivots += 1
            else:
                self.streaks.append(degenerate_streak)
                degenerate_streak = 0
                have_rank = False
            since_refactor += 1
            if since_refactor >= self.opts.refactor_every:
                self._refresh()
                d = self.reduced_costs(cost)
                since_refactor = 0

    def _refresh(self):
        self.basis.refactor()
        self.xB = self.basis.ftran(self.b)
        self.xB[np.abs(self.xB) < 1e-13] = 0.0

    def drive_out_artificials(self):
        """Pivot zero-level artificials out of the basis where possible."""
        is_art = self.basis.basis >= self.n_struct
        for r in np.flatnonzero(is_art):
            row = self.basis.btran(np.eye(1, self.m, r).ravel())
            vals = self.AT[: self.n_struct] @ row
            inbasis = np.zeros(self.n_struct, dtype=bool)
            inbasis[self.basis.basis[self.basis.basis < self.n_struct]] = True
            vals[inbasis] = 0.0
            cand = np.flatnonzero(np.abs(vals) > 1e-7)
            if cand.size == 0:
                continue  # redundant row; artificial stays basic at zero
            q = int(cand[np.argmax(np.abs(vals[cand]))])
            alpha = self.basis.ftran(_column(self.A, q, self.m))
            self.basis.replace(r, q, alpha)
            self.iterations += 1
        self._refresh()

    def primal(self) -> np.ndarray:
        x = np.zeros(self.n_total)
        x[self.basis.basis] = self.xB
        return x


def solve_simplex(lp: StandardFormLp, opts: SimplexOptions | None = None, *,
                  initial_basis=None, **kwargs) -> SolveReport:
    """Solve a maximization LP in standard form with the revised simplex.

    Keyword arguments override fields of ``opts`` (``tol``, ``max_iters``,
    ``refactor_every``, ``bland_after``, ``pricing``, ``perturbation``). ``initial_basis`` may
    name one column per row (slacks of ``L`` rows numbered after the
    columns of ``lp``); it is ignored unless feasible.
    """
    opts = opts or SimplexOptions()
    if kwargs:
        opts = SimplexOptions(**{**opts.__dict__, **kwargs})
    m, n = lp.shape
    if n == 0:
        raise ValidationError("no variables")
    if m == 0:
        if np.any(lp.c > opts.tol):
            return SolveReport(UNBOUNDED, math.inf, np.zeros(n), 0, 0.0)
        return SolveReport(OPTIMAL, 0.0, np.zeros(n), 0, 0.0, max_reduced_cost=float(lp.c.max(initial=0.0)))

    if opts.perturbation > 0:
        first = _solve(lp, opts, initial_basis, perturb=True)
        if first.status == OPTIMAL and first.max_residual <= opts.tol:
            return first
        report = _solve(lp, opts, initial_basis, perturb=False)
        report.iterations += first.iterations
        return report
    return _solve(lp, opts, initial_basis, perturb=False)


def _solve(lp: StandardFormLp, opts: SimplexOptions, initial_basis, perturb: bool) -> SolveReport:
    n = lp.shape[1]
    sx = _Simplex(lp, opts, initial_basis, perturb)
    n_art = sx.n_total - sx.n_struct
    phase_one = 0
    if n_art:
        cost1 = np.zeros(sx.n_total)
        cost1[sx.n_struct:] = -1.0
        status = sx.run(cost1, np.ones(sx.n_total, dtype=bool))
        phase_one = sx.iterations
        sx._refresh()
        infeas = float(np.maximum(sx.xB[sx.basis.basis >= sx.n_struct], 0.0).sum())
        if status == ITERATION_LIMIT:
            x = sx.primal()[:n]
            return SolveReport(ITERATION_LIMIT, math.nan, x, sx.iterations, lp.residual(x), phase_one)
        if infeas > opts.tol * max(1.0, float(np.abs(sx.b).max())):
            x = sx.primal()[:n]
            return SolveReport(INFEASIBLE, math.nan, x, sx.iterations, lp.residual(x), phase_one)
        sx.drive_out_artificials()

    cost2 = np.concatenate([sx.c_struct, np.zeros(n_art)])
    allowed = np.ones(sx.n_total, dtype=bool)
    allowed[sx.n_struct:] = False
    status = sx.run(cost2, allowed)
    # drop the perturbation: the final basis is kept, only x_B is recomputed
    sx.b = sx.b_exact
    sx._refresh()
    x = sx.primal()[:n]
    # optimality certificate on the final factorization
    d = sx.reduced_costs(cost2)
    d[~allowed] = 0.0
    return SolveReport(
        status,
        float(lp.c @ x) if status == OPTIMAL else (math.inf if status == UNBOUNDED else math.nan),
        x,
        sx.iterations,
        lp.residual(x),
        phase_one,
        float(d.max(initial=0.0)),
        basis=np.where(sx.basis.basis < sx.n_struct, sx.basis.basis, -1),
    )


# --------------------------------------------------------------------------
# external solver hook

LpSolver = Callable[[StandardFormLp, SimplexOptions], SolveReport]


def highs_solver(lp: StandardFormLp, opts: SimplexOptions | None = None) -> SolveReport:
    """Cross-check backend using HiGHS through ``scipy.optimize.linprog``."""
    from scipy.optimize import linprog

    opts = opts or SimplexOptions()
    le = lp.kinds == "L"
    eq = ~le
    res = linprog(
        -lp.c,
        A_ub=lp.A[le] if le.any() else None,
        b_ub=lp.b[le] if le.any() else None,
        A_eq=lp.A[eq] if eq.any() else None,
        b_eq=lp.b[eq] if eq.any() else None,
        bounds=(0, None),
        method="highs",
    )
    status = {0: OPTIMAL, 1: ITERATION_LIMIT, 2: INFEASIBLE, 3: UNBOUNDED}.get(res.status)
    if status is None:
        raise SolverError(f"HiGHS failed: {res.message}")
    x = np.asarray(res.x) if res.x is not None else np.zeros(lp.shape[1])
    obj = float(lp.c @ x) if status == OPTIMAL else math.nan
    return SolveReport(status, obj, x, int(getattr(res, "nit", 0)), lp.residual(x), solver="highs")


# --------------------------------------------------------------------------
# MPS dump


def _mps_line(f1: str, f2: str, f3: str = "", v3: float | None = None) -> str:
    line = f" {f1:<2} {f2:<8}  {f3:<8}"
    if v3 is not None:
        line += f"  {v3:>12.12g}"
    return line.rstrip()


def write_mps(lp: StandardFormLp, stream: TextIO | None = None, name: str = "PROFLP") -> str:
    """Fixed-format MPS text of ``lp``.

    MPS minimizes, so the objective row holds ``-c``. Columns are named
    ``C1..Cn`` in order and rows ``R1..Rm``.
    """
    out = io.StringIO()
    m, n = lp.shape
    out.write(f"NAME          {name}\n")
    out.write("* objective negated: minimize -c\n")
    out.write("ROWS\n")
    out.write(_mps_line("N", "OBJ") + "\n")
    for i, k in enumerate(lp.kinds, start=1):
        out.write(_mps_line(k, f"R{i}") + "\n")
    out.write("COLUMNS\n")
    A = lp.A
    for j in range(n):
        cname = f"C{j + 1}"
        if lp.c[j] != 0:
            out.write(f"    {cname:<8}  {'OBJ':<8}  {-lp.c[j]:>12.12g}\n")
        for k in range(A.indptr[j], A.indptr[j + 1]):
            out.write(f"    {cname:<8}  {'R' + str(A.indices[k] + 1):<8}  {A.data[k]:>12.12g}\n")
    out.write("RHS\n")
    for i, v in enumerate(lp.b, start=1):
        if v != 0:
            out.write(f"    {'RHS':<8}  {'R' + str(i):<8}  {v:>12.12g}\n")
    out.write("ENDATA\n")
    text = out.getvalue()
    if stream is not None:
        stream.write(text)
    return text
