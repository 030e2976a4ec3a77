"""Dataset generators: correlated log-normal bids and two analytic families."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .auction import Auction, Dataset, ReserveGrid, build_reserve_grids
from .errors import ValidationError
from .profiles import B0, LpSolution, Profile

SQRT2_MINUS_1 = math.sqrt(2.0) - 1.0


# --------------------------------------------------------------------------
# correlated log-normal bids


@dataclass(frozen=True)
class LogNormalParams:
    mu: float
    sigma: float
    w: float
    auctions: int
    seed: int

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValidationError(f"sigma must be positive, got {self.sigma}")
        if not -1 < self.w < 1:
            raise ValidationError(f"w must lie in (-1, 1), got {self.w}")
        if self.auctions < 1:
            raise ValidationError(f"need at least one auction, got {self.auctions}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")

    @property
    def cholesky(self) -> np.ndarray:
        return self.sigma * np.array([[1.0, 0.0], [self.w, math.sqrt(1.0 - self.w ** 2)]])


def _open_uniforms(seed: int, rows: int) -> np.ndarray:
    # row i is Philox counter block i of key ``seed``; values lie in (0, 1)
    raw = np.random.Generator(np.random.Philox(key=int(seed))).integers(0, 2**53, size=(rows, 4), dtype=np.int64)
    return (raw[:, :2] + 0.5) / 2.0**53


def gen_correlated_lognormal(p: LogNormalParams) -> Dataset:
    """Two buyers whose log-bids are jointly normal, mean ``(0, mu)``."""
    z = ndtri(_open_uniforms(p.seed, p.auctions)) @ p.cholesky.T + np.array([0.0, p.mu])
    bids = np.exp(z)
    auctions = tuple(Auction(f"a{i}", {0: float(bids[i, 0]), 1: float(bids[i, 1])}, 1.0)
                     for i in range(p.auctions))
    return Dataset(auctions, 2)


# --------------------------------------------------------------------------
# integrality-gap family


@dataclass(frozen=True)
class GapInstanceSpec:
    n: int
    lam: float = SQRT2_MINUS_1
    k: float = 1000.0

    def __post_init__(self):
        if self.n < 2:
            raise ValidationError(f"gap instance needs n >= 2, got {self.n}")
        if not self.k >= 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")
        if not 0 <= self.lam < 1:
            raise ValidationError(f"lambda must lie in [0, 1), got {self.lam}")
        if not self.lam * self.n > self.delta:
            raise ValidationError(f"solo bid lambda*n = {self.lam * self.n} must exceed delta = {self.delta}")

    @property
    def delta(self) -> float:
        return 1.0 / self.k

    @property
    def solo_bid(self) -> float:
        return self.lam * self.n


def gap_instance(spec: GapInstanceSpec) -> Dataset:
    """``n`` solo auctions (weight 1, bid ``lam*n``) plus one auction of weight
    ``k`` per buyer pair, both bidding ``1/k``."""
    n = spec.n
    auctions = [Auction(f"solo{b}", {b: spec.solo_bid}, 1.0) for b in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            auctions.append(Auction(f"pair{i}_{j}", {i: spec.delta, j: spec.delta}, float(spec.k)))
    return Dataset(tuple(auctions), n)


def gap_esp_star(spec: GapInstanceSpec, delta_limit: bool = False) -> float:
    """Best total revenue: ``t`` buyers take the high reserve, the rest ``1/k``.

    With ``delta_limit`` the ``(n - t) * delta`` terms are dropped.
    """
    n, d = spec.n, (0.0 if delta_limit else spec.delta)
    return max(t * spec.solo_bid + (n - t) * d + math.comb(n, 2) - math.comb(t, 2) for t in range(n + 1))


def gap_arg_t(spec: GapInstanceSpec, delta_limit: bool = False) -> int:
    n, d = spec.n, (0.0 if delta_limit else spec.delta)
    vals = [t * spec.solo_bid + (n - t) * d + math.comb(n, 2) - math.comb(t, 2) for t in range(n + 1)]
    return int(np.argmax(vals))


def gap_feasible_lp_value(spec: GapInstanceSpec) -> float:
    """Objective of the half-weight LP solution: ``lam*n^2/2 + C(n,2)*k*delta``."""
    return spec.lam * spec.n ** 2 / 2.0 + math.comb(spec.n, 2) * spec.k * spec.delta


def gap_ratio(spec: GapInstanceSpec, delta_limit: bool = False) -> float:
    return gap_esp_star(spec, delta_limit) / gap_feasible_lp_value(spec)


def gap_feasible_solution(spec: GapInstanceSpec, ds: Dataset | None = None) -> LpSolution:
    """Half-weight LP solution certifying ``gap_feasible_lp_value``.

    Each buyer splits its reserve evenly between ``delta`` and ``lam*n``;
    every auction puts weight 1/2 on each profile its buyers can form alone.
    """
    ds = ds or gap_instance(spec)
    hi, lo = spec.solo_bid, spec.delta
    s: dict = {}
    for a in ds.auctions:
        buyers = sorted(a.bids)
        if len(buyers) == 1:
            s[(a.id, Profile(buyers[0], B0, hi, 0.0, hi))] = 0.5
        else:
            for b in buyers:
                s[(a.id, Profile(b, B0, lo, 0.0, lo))] = 0.5
    q = {b: {lo: 0.5, hi: 0.5} for b in ds.buyers}
    obj = math.fsum(ds.auctions[ds.auction_index(aid)].weight * p.revenue * v for (aid, p), v in s.items())
    return LpSolution(s, q, obj)


# --------------------------------------------------------------------------
# tight family


@dataclass(frozen=True)
class TightInstanceSpec:
    k: int
    epsilon: float = 1e-4

    def __post_init__(self):
        if self.k < 2:
            raise ValidationError(f"tight instance needs k >= 2, got {self.k}")
        if not self.epsilon > 0:
            raise ValidationError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def theta(self) -> float:
        return SQRT2_MINUS_1

    @property
    def c(self) -> float:
        th = self.theta
        return (1.0 - th * th) * math.exp(th - 1.0)

    @property
    def weights(self) -> tuple[float, float, float]:
        c = self.c
        return 1.0 / (c + 1.0), c / (c + 1.0), self.epsilon


@dataclass(frozen=True)
class TightInstance:
    ds: Dataset
    sol: LpSolution
    grid: ReserveGrid
    spec: TightInstanceSpec

    @property
    def zero_revenue_limit(self) -> float:
        return self.spec.weights[0]


def tight_instance(spec: TightInstanceSpec) -> TightInstance:
    """Three weighted auctions and their handcrafted LP solution.

    Buyers ``0..k-1`` are the symmetric group, ``k`` and ``k+1`` the pair,
    and ``k+2`` bids alone in the second auction.
    """
    k, eps, th = spec.k, spec.epsilon, spec.theta
    w1, w2, w3 = spec.weights
    hi = 1.0 + eps
    sym, p1, p2, solo = range(k), k, k + 1, k + 2
    a1 = Auction("a1", {b: 1.0 for b in range(k + 2)}, w1)
    a2 = Auction("a2", {solo: hi}, w2)
    a3 = Auction("a3", {b: hi for b in range(k + 2)}, w3)
    ds = Dataset((a1, a2, a3), k + 3)

    s = {}
    for i in sym:
        s[("a1", Profile(i, B0, 1.0, 0.0, 1.0))] = (1.0 - th) / k
    s[("a1", Profile(p1, p2, 0.0, 0.0, 1.0))] = th
    s[("a2", Profile(solo, B0, hi, 0.0, hi))] = 1.0
    for i in sym:
        s[("a3", Profile(i, B0, hi, 0.0, hi))] = th / k
    s[("a3", Profile(p1, p2, hi, hi, hi))] = 1.0 - th

    q = {i: {1.0: (1.0 - th) / k, hi: 1.0 - (1.0 - th) / k} for i in sym}
    q[p1] = {0.0: th, hi: 1.0 - th}
    q[p2] = {0.0: th, hi: 1.0 - th}
    q[solo] = {hi: 1.0}
    obj = math.fsum(ds.auctions[ds.auction_index(aid)].weight * p.revenue * v for (aid, p), v in s.items())
    return TightInstance(ds, LpSolution(s, q, obj), build_reserve_grids(ds, "own_bids"), spec)


def tight_rounding_value(spec: TightInstanceSpec) -> float:
    """Expected revenue of the rounded reserves as ``epsilon -> 0``."""
    k, th = spec.k, spec.theta
    w1, w2, _ = spec.weights
    return w1 * (1.0 - (1.0 - (1.0 - th) / k) ** k * (1.0 - th * th)) + w2


def tight_rounding_limit(spec: TightInstanceSpec) -> float:
    """``k -> infinity`` limit of :func:`tight_rounding_value`, equal to ``1/(c+1)``."""
    return spec.weights[0]
