"""Valid profiles and the profile LP over them.

A profile ``(b1, b2, r1, r2)`` records the highest and second-highest
cleared buyers of one auction together with their reserves. Its revenue is
``max(bid[b2], r1)``. Two auxiliary zero bidders, ``B0`` and ``B00``, let a
profile express one or zero cleared buyers.

Real buyers whose bid in an auction is 0 only ever appear as ``B0``/``B00``
there: a profile naming such a buyer has the same revenue as its aux form
and strictly more coupling, so dropping it leaves the LP optimum unchanged.
"""
from __future__ import annotations

import bisect
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from .auction import (
    PLUS_INFINITY,
    Auction,
    Dataset,
    ReserveGrid,
    ReserveVector,
    format_reserve,
    parse_reserve,
    total_revenue,
)
from .errors import SizeLimitError, SolverError, StructuralError, ValidationError

B0 = -1
B00 = -2
AUX = (B0, B00)

DEFAULT_MAX_VARIABLES = 1_000_000


def buyer_label(b: int) -> str:
    return {B0: "b0", B00: "b00"}.get(b, str(b))


def parse_buyer_label(label) -> int:
    label = str(label)
    if label == "b0":
        return B0
    if label == "b00":
        return B00
    return int(label)


@dataclass(frozen=True)
class Profile:
    b1: int
    b2: int
    r1: float
    r2: float
    revenue: float = field(default=0.0, compare=False)

    def __str__(self):
        return f"({buyer_label(self.b1)},{buyer_label(self.b2)},{self.r1:g},{self.r2:g})"

    def reserve_of(self, buyer: int) -> float | None:
        if buyer == self.b1:
            return self.r1
        if buyer == self.b2:
            return self.r2
        return None


ZERO_PROFILE = Profile(B0, B00, 0.0, 0.0, 0.0)


def _positive_bidders(auction: Auction) -> list[tuple[int, float]]:
    return [(b, v) for b, v in auction.ranked() if v > 0]


def _reserves_upto(grid: ReserveGrid, b: int, bid: float) -> tuple[float, ...]:
    fin = grid.finite(b)
    return fin[:bisect.bisect_right(fin, bid)]


def enumerate_valid_profiles(auction: Auction, grid: ReserveGrid) -> list[Profile]:
    """All valid profiles of ``auction`` whose reserves come from ``grid``.

    Order: first buyer by rank, its reserve ascending, then the one-cleared
    form followed by every second buyer (by rank) and reserve; the
    zero-cleared profile comes last.
    """
    pos = _positive_bidders(auction)
    out = []
    for b1, v1 in pos:
        for r1 in _reserves_upto(grid, b1, v1):
            out.append(Profile(b1, B0, r1, 0.0, r1))
            for b2, v2 in pos:
                if b2 == b1 or v2 > v1:
                    continue
                rev = max(v2, r1)
                out.extend(Profile(b1, b2, r1, r2, rev) for r2 in _reserves_upto(grid, b2, v2))
    out.append(ZERO_PROFILE)
    return out


def count_valid_profiles(auction: Auction, grid: ReserveGrid) -> int:
    pos = _positive_bidders(auction)
    sizes = {b: len(_reserves_upto(grid, b, v)) for b, v in pos}
    total = 1
    for b1, v1 in pos:
        below = sum(sizes[b2] for b2, v2 in pos if b2 != b1 and v2 <= v1)
        total += sizes[b1] * (1 + below)
    return total


def profile_revenue(auction: Auction, p: Profile, grid: ReserveGrid | None = None) -> float:
    """Revenue ``max(bid[b2], r1)`` of ``p``; raises if ``p`` is not valid."""
    validate_profile(auction, p, grid)
    return max(auction.bid(p.b2) if p.b2 >= 0 else 0.0, p.r1)


def validate_profile(auction: Auction, p: Profile, grid: ReserveGrid | None = None) -> None:
    def bid(b):
        return 0.0 if b < 0 else auction.bid(b)

    if p.b1 == p.b2:
        raise ValidationError(f"profile {p}: b1 and b2 must differ")
    if p.b1 == B00 or (p.b1 == B0 and p.b2 != B00):
        raise ValidationError(f"profile {p}: aux buyers only appear as (b, b0) or (b0, b00)")
    if p.b2 == B00 and p.b1 != B0:
        raise ValidationError(f"profile {p}: b00 may only follow b0")
    for b, r in ((p.b1, p.r1), (p.b2, p.r2)):
        if b < 0:
            if r != 0.0:
                raise ValidationError(f"profile {p}: aux buyer {buyer_label(b)} must carry reserve 0")
            continue
        if not math.isfinite(r):
            raise ValidationError(f"profile {p}: infinite reserve inside a profile")
        if bid(b) <= 0:
            raise ValidationError(f"profile {p}: buyer {b} has no positive bid in auction {auction.id!r}")
        if grid is not None and not grid.contains(b, r):
            raise ValidationError(f"profile {p}: reserve {r} is not in the grid of buyer {b}")
    if bid(p.b1) < bid(p.b2):
        raise ValidationError(f"profile {p}: bid of b1 must be >= bid of b2")
    if bid(p.b1) < p.r1:
        raise ValidationError(f"profile {p}: b1 does not clear its reserve")
    if bid(p.b2) < p.r2:
        raise ValidationError(f"profile {p}: b2 does not clear its reserve")


def associated_profile(auction: Auction, r: ReserveVector, strict: bool = False) -> Profile:
    """Profile formed by the top two cleared buyers under ``r``."""
    cleared = [(b, v) for b, v in _positive_bidders(auction) if v >= r.get(b, strict)]
    if not cleared:
        return ZERO_PROFILE
    b1, _ = cleared[0]
    r1 = r.get(b1, strict)
    if len(cleared) == 1:
        return Profile(b1, B0, r1, 0.0, r1)
    b2, v2 = cleared[1]
    return Profile(b1, b2, r1, r.get(b2, strict), max(v2, r1))


# --------------------------------------------------------------------------
# LP model


@dataclass(frozen=True)
class LpModel:
    """Profile LP: maximize ``c @ x`` s.t. ``A x (<= or =) rhs``, ``x >= 0``.

    Columns are the s variables (auction order, enumeration order) followed
    by the q variables (buyer, grid order). ``kinds`` holds ``"L"`` or ``"E"``
    per row.
    """

    ds: Dataset
    grid: ReserveGrid
    s_index: tuple[tuple[int, Profile], ...]
    q_index: tuple[tuple[int, float], ...]
    c: np.ndarray
    A: sp.csr_matrix
    rhs: np.ndarray
    kinds: np.ndarray
    row_labels: tuple[tuple, ...]

    @property
    def n_s(self) -> int:
        return len(self.s_index)

    @property
    def n_vars(self) -> int:
        return len(self.s_index) + len(self.q_index)

    @property
    def n_rows(self) -> int:
        return len(self.row_labels)

    def column_names(self) -> list[str]:
        names = [f"s_{self.ds.auctions[a].id}_{p}" for a, p in self.s_index]
        names += [f"q_{b}_{format_reserve(r)}" for b, r in self.q_index]
        return names

    def warm_start_basis(self) -> np.ndarray:
        """Feasible starting basis for the equality form with one slack per
        ``<=`` row: every slack plus ``q[b, 0]`` for each buyer row. It puts
        all reserve mass on 0, so no Phase I is needed."""
        q_zero = {b: self.n_s + j for j, (b, r) in enumerate(self.q_index) if r == 0.0}
        basis = np.empty(self.n_rows, dtype=int)
        slack = self.n_vars
        for i, (label, kind) in enumerate(zip(self.row_labels, self.kinds)):
            if kind == "L":
                basis[i] = slack
                slack += 1
            else:
                basis[i] = q_zero[label[1]]
        return basis

    def embedding_basis(self, r: ReserveVector) -> np.ndarray:
        """Feasible starting basis at the integral point of ``r``: each
        auction's associated profile, ``q[b, r_b]`` for each buyer row and
        every coupling slack. The basis matrix is block triangular with
        identity diagonal blocks, hence nonsingular."""
        s_col = {key: j for j, key in enumerate(self.s_index)}
        q_col = {key: self.n_s + j for j, key in enumerate(self.q_index)}
        basis = self.warm_start_basis()
        for i, label in enumerate(self.row_labels):
            if label[0] == "auction":
                ai = self.ds.auction_index(label[1])
                j = s_col.get((ai, associated_profile(self.ds.auctions[ai], r)))
                if j is not None:
                    basis[i] = j
            elif label[0] == "simplex":
                b = label[1]
                if not self.grid.contains(b, r.get(b)):
                    raise ValidationError(f"reserve {r.get(b)} of buyer {b} is not in its grid")
                basis[i] = q_col[(b, r.get(b))]
        return basis

    def solution_from_vector(self, x: np.ndarray) -> "LpSolution":
        x = np.asarray(x, dtype=float)
        s = {}
        for j, (a, p) in enumerate(self.s_index):
            if x[j] != 0.0:
                s[(self.ds.auctions[a].id, p)] = float(x[j])
        q: dict[int, dict[float, float]] = {b: {} for b in self.ds.buyers}
        for j, (b, r) in enumerate(self.q_index, start=self.n_s):
            q[b][r] = float(x[j])
        obj = math.fsum(self.ds.auctions[a].weight * p.revenue * v
                        for (a, p), v in zip(self.s_index, x[:self.n_s]))
        return LpSolution(s, q, obj)

    def vector_from_solution(self, sol: "LpSolution") -> np.ndarray:
        x = np.zeros(self.n_vars)
        pos = {(self.ds.auctions[a].id, p): j for j, (a, p) in enumerate(self.s_index)}
        for key, v in sol.s_values.items():
            if key not in pos:
                raise StructuralError(f"s variable {key[0]}:{key[1]} is not in the model")
            x[pos[key]] = v
        qpos = {k: j for j, k in enumerate(self.q_index, start=self.n_s)}
        for b, row in sol.q_values.items():
            for r, v in row.items():
                if (b, r) not in qpos:
                    raise StructuralError(f"q variable ({b}, {r}) is not in the model")
                x[qpos[(b, r)]] = v
        return x


def build_profile_lp(ds: Dataset, grid: ReserveGrid, max_variables: int = DEFAULT_MAX_VARIABLES) -> LpModel:
    if len(grid) != ds.n:
        raise ValidationError(f"grid covers {len(grid)} buyers, dataset has {ds.n}")
    n_s = sum(count_valid_profiles(a, grid) for a in ds.auctions)
    n_q = sum(len(grid.for_buyer(b)) for b in ds.buyers)
    if n_s + n_q > max_variables:
        raise SizeLimitError(
            f"profile LP would have {n_s} s-variables and {n_q} q-variables "
            f"({n_s + n_q} > cap {max_variables}); use a coarser reserve grid"
        )
    q_index = tuple((b, r) for b in ds.buyers for r in grid.for_buyer(b))
    q_col = {k: n_s + j for j, k in enumerate(q_index)}

    s_index: list[tuple[int, Profile]] = []
    rows, cols, vals = [], [], []
    labels: list[tuple] = []
    kinds: list[str] = []
    rhs: list[float] = []
    c = np.zeros(n_s + n_q)

    for ai, auction in enumerate(ds.auctions):
        profiles = enumerate_valid_profiles(auction, grid)
        start = len(s_index)
        auction_row = len(labels)
        labels.append(("auction", auction.id))
        kinds.append("L")
        rhs.append(1.0)
        coupling: dict[tuple[int, float], list[int]] = defaultdict(list)
        for j, p in enumerate(profiles, start=start):
            s_index.append((ai, p))
            c[j] = auction.weight * p.revenue
            rows.append(auction_row)
            cols.append(j)
            vals.append(1.0)
            for b, r in ((p.b1, p.r1), (p.b2, p.r2)):
                if b >= 0:
                    coupling[(b, r)].append(j)
        for (b, r) in sorted(coupling):
            row = len(labels)
            labels.append(("couple", auction.id, b, r))
            kinds.append("L")
            rhs.append(0.0)
            members = coupling[(b, r)]
            rows.extend([row] * (len(members) + 1))
            cols.extend(members)
            cols.append(q_col[(b, r)])
            vals.extend([1.0] * len(members))
            vals.append(-1.0)
    for b in ds.buyers:
        row = len(labels)
        labels.append(("simplex", b))
        kinds.append("E")
        rhs.append(1.0)
        for r in grid.for_buyer(b):
            rows.append(row)
            cols.append(q_col[(b, r)])
            vals.append(1.0)

    A = sp.csr_matrix((vals, (rows, cols)), shape=(len(labels), n_s + n_q))
    c.setflags(write=False)
    return LpModel(ds, grid, tuple(s_index), q_index, c, A, np.array(rhs), np.array(kinds), tuple(labels))


# --------------------------------------------------------------------------
# solutions


@dataclass(frozen=True)
class LpSolution:
    """Profile weights keyed by (auction id, profile) and reserve distributions."""

    s_values: Mapping[tuple[str, Profile], float]
    q_values: Mapping[int, Mapping[float, float]]
    objective: float

    def q_row(self, buyer: int) -> dict[float, float]:
        return dict(self.q_values.get(buyer, {}))

    def auction_profiles(self, auction_id: str) -> list[tuple[Profile, float]]:
        return [(p, v) for (aid, p), v in self.s_values.items() if aid == auction_id]

    def to_json(self) -> dict:
        return {
            "objective": self.objective,
            "q": {str(b): {str(format_reserve(r)) if r == PLUS_INFINITY else repr(float(r)): v
                           for r, v in row.items()}
                  for b, row in sorted(self.q_values.items())},
            "s": [{"auction": aid, "b1": buyer_label(p.b1), "b2": buyer_label(p.b2),
                   "r1": p.r1, "r2": p.r2, "value": v}
                  for (aid, p), v in self.s_values.items()],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)

    @classmethod
    def from_json(cls, obj: Mapping, ds: Dataset) -> "LpSolution":
        """Rebuild a solution; profile revenues are recomputed from ``ds``."""
        s = {}
        for entry in obj.get("s", []):
            try:
                auction = ds.auctions[ds.auction_index(entry["auction"])]
            except KeyError as exc:
                raise StructuralError(str(exc)) from None
            p = Profile(parse_buyer_label(entry["b1"]), parse_buyer_label(entry["b2"]),
                        float(entry["r1"]), float(entry["r2"]))
            try:
                rev = profile_revenue(auction, p)
            except ValidationError as exc:
                raise StructuralError(str(exc)) from None
            s[(auction.id, Profile(p.b1, p.b2, p.r1, p.r2, rev))] = float(entry["value"])
        q = {int(b): {parse_reserve(r): float(v) for r, v in row.items()}
             for b, row in obj.get("q", {}).items()}
        objective = math.fsum(ds.auctions[ds.auction_index(aid)].weight * p.revenue * v
                              for (aid, p), v in s.items())
        return cls(s, q, objective)


@dataclass
class FeasibilityReport:
    feasible: bool
    max_residual: float
    violated_rows: list[str]


def check_lp_feasibility(ds: Dataset, grid: ReserveGrid, sol: LpSolution, tol: float = 1e-7) -> FeasibilityReport:
    """Residuals of every profile-LP constraint at ``sol``.

    Works from the nonzero entries of ``sol`` only, so it also certifies
    solutions of instances too large to build as a full model.
    """
    auction_sum: dict[str, float] = defaultdict(float)
    coupling: dict[tuple[str, int, float], float] = defaultdict(float)
    residuals: list[tuple[float, str]] = []

    for (aid, p), v in sol.s_values.items():
        try:
            auction = ds.auctions[ds.auction_index(aid)]
        except KeyError as exc:
            raise StructuralError(str(exc)) from None
        try:
            validate_profile(auction, p, grid)
        except ValidationError as exc:
            raise StructuralError(str(exc)) from None
        auction_sum[aid] += v
        if v < 0:
            residuals.append((-v, f"s[{aid},{p}] >= 0"))
        for b, r in ((p.b1, p.r1), (p.b2, p.r2)):
            if b >= 0:
                coupling[(aid, b, r)] += v

    for b, row in sol.q_values.items():
        if not 0 <= b < ds.n:
            raise StructuralError(f"q row for unknown buyer {b}")
        for r, v in row.items():
            if not grid.contains(b, r):
                raise StructuralError(f"q[{b},{r}] is not a grid reserve of buyer {b}")
            if v < 0:
                residuals.append((-v, f"q[{b},{format_reserve(r)}] >= 0"))

    for aid, total in auction_sum.items():
        residuals.append((total - 1.0, f"auction {aid}"))
    for (aid, b, r), total in coupling.items():
        q = sol.q_values.get(b, {}).get(r, 0.0)
        residuals.append((total - q, f"couple {aid} buyer {b} reserve {format_reserve(r)}"))
    for b in ds.buyers:
        total = math.fsum(sol.q_values.get(b, {}).values())
        residuals.append((abs(total - 1.0), f"buyer {b} reserve distribution"))

    worst = max((res for res, _ in residuals), default=0.0)
    violated = [name for res, name in residuals if res > tol]
    return FeasibilityReport(not violated, max(0.0, worst), violated)


def integral_embedding(ds: Dataset, r: ReserveVector, grid: ReserveGrid) -> LpSolution:
    """Point-mass LP solution: the associated profile in every auction."""
    for b in ds.buyers:
        rb = r.get(b)
        if not grid.contains(b, rb):
            raise ValidationError(f"reserve {rb} of buyer {b} is not in its grid")
    s = {(a.id, associated_profile(a, r)): 1.0 for a in ds.auctions}
    q = {b: {r.get(b): 1.0} for b in ds.buyers}
    return LpSolution(s, q, total_revenue(ds, r))


def solve_profile_lp(ds: Dataset, grid: ReserveGrid, solver=None, options=None,
                     max_variables: int = DEFAULT_MAX_VARIABLES, model: LpModel | None = None,
                     warm_start: ReserveVector | None = None):
    """Build and solve the profile LP; returns ``(LpSolution, SolveReport, LpModel)``.

    ``solver`` is any callable ``(StandardFormLp, SimplexOptions) -> SolveReport``;
    the in-repo revised simplex is used when it is None. ``warm_start`` is a
    grid-valued reserve vector whose integral point seeds the simplex (the
    all-zero vector otherwise); a good vector such as the greedy one cuts
    the pivot count roughly in half.
    """
    from .simplex import SimplexOptions, solve_simplex, to_standard_form

    model = model or build_profile_lp(ds, grid, max_variables)
    lp, index = to_standard_form(model)
    options = options or SimplexOptions()
    if solver is None:
        basis = model.warm_start_basis() if warm_start is None else model.embedding_basis(warm_start)
        report = solve_simplex(lp, options, initial_basis=basis)
    else:
        report = solver(lp, options)
    if not report.optimal:
        # the profile LP is feasible and bounded by construction
        raise SolverError(f"profile LP solve ended with status {report.status!r}; "
                          "this indicates a model construction bug", report)
    sol = model.solution_from_vector(index.model_values(report.x))
    return sol, report, model
