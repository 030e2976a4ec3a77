"""Randomized rounding of profile-LP solutions and the baselines it is compared to."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .auction import (
    PLUS_INFINITY,
    Auction,
    Dataset,
    ReserveGrid,
    ReserveVector,
    format_reserve,
    total_revenue,
    total_revenues,
    zero_reserve_revenue,
)
from .errors import SizeLimitError, ValidationError
from .profiles import LpSolution

DEFAULT_BRUTE_FORCE_CAP = 10_000_000
_SAMPLE_BLOCK = 4_000_000  # samples * buyers * row-length per vectorized chunk


# --------------------------------------------------------------------------
# sampling


@dataclass(frozen=True)
class ReserveSampler:
    """Inverse-CDF sampler over per-buyer reserve distributions.

    Sample ``i`` uses its own Philox substream: the master key is ``seed``
    and the counter is advanced by ``i`` blocks, so any single draw can be
    regenerated without replaying the others.
    """

    n: int
    values: np.ndarray  # (n, K) reserve values, padded with the last value
    cdf: np.ndarray  # (n, K) cumulative probabilities, last column 1

    @classmethod
    def from_q(cls, q: Mapping[int, Mapping[float, float]], n: int) -> "ReserveSampler":
        rows = []
        for b in range(n):
            row = q.get(b)
            if not row:
                raise ValidationError(f"buyer {b} has no reserve distribution")
            items = sorted((float(r), max(float(p), 0.0)) for r, p in row.items())
            total = math.fsum(p for _, p in items)
            if not total > 0:
                raise ValidationError(f"reserve distribution of buyer {b} has total mass {total}")
            rows.append(items)
        width = max(len(r) for r in rows)
        values = np.empty((n, width))
        cdf = np.ones((n, width))
        for b, items in enumerate(rows):
            vals = [r for r, _ in items]
            probs = np.array([p for _, p in items])
            c = np.cumsum(probs) / probs.sum()
            c[-1] = 1.0
            values[b, :len(vals)] = vals
            values[b, len(vals):] = vals[-1]
            cdf[b, :len(c)] = c
        return cls(n, values, cdf)

    @property
    def _blocks(self) -> int:
        return -(-self.n // 4)

    def uniforms(self, seed: int, start: int, count: int) -> np.ndarray:
        bitgen = np.random.Philox(key=int(seed)).advance(start * self._blocks)
        return np.random.Generator(bitgen).random((count, 4 * self._blocks))[:, :self.n]

    def transform(self, u: np.ndarray) -> np.ndarray:
        idx = (u[:, :, None] >= self.cdf[None, :, :]).sum(axis=2)
        np.minimum(idx, self.cdf.shape[1] - 1, out=idx)
        return self.values[np.arange(self.n)[None, :], idx]

    def draw(self, seed: int, start: int, count: int) -> np.ndarray:
        """Reserve matrix (count, n) for samples ``start .. start+count-1``."""
        return self.transform(self.uniforms(seed, start, count))

    def chunk_size(self) -> int:
        return max(1, _SAMPLE_BLOCK // max(1, self.n * self.cdf.shape[1]))


def sample_reserves(q: Mapping[int, Mapping[float, float]], seed: int, index: int = 0,
                    n: int | None = None) -> ReserveVector:
    """Draw one reserve vector (sample ``index`` of stream ``seed``)."""
    n = n if n is not None else max(q) + 1
    row = ReserveSampler.from_q(q, n).draw(seed, index, 1)[0]
    return ReserveVector.from_sequence(row)


# --------------------------------------------------------------------------
# Pro-LPR


@dataclass(frozen=True)
class RoundingOutcome:
    """Result of sampling reserves from an LP solution.

    ``estimate`` averages ``max(zero_revenue, revenue of draw)`` over draws.
    ``rounding_mean`` averages the raw draw revenues, and
    ``best_of_expectations`` is ``max(zero_revenue, rounding_mean)``: the
    expected revenue of the better of the two strategies when one of them
    is fixed before sampling.
    """

    per_sample_revenue: np.ndarray
    zero_revenue: float
    estimate: float
    standard_error: float
    rounding_mean: float
    rounding_standard_error: float
    best_vector: ReserveVector
    best_revenue: float
    seed: int
    samples: int
    sampler: ReserveSampler = field(repr=False, compare=False)
    sample_matrix: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def best_of_expectations(self) -> float:
        return max(self.zero_revenue, self.rounding_mean)

    def sampled_vector(self, i: int) -> ReserveVector:
        if not 0 <= i < self.samples:
            raise IndexError(i)
        if self.sample_matrix is not None:
            return ReserveVector.from_sequence(self.sample_matrix[i])
        return ReserveVector.from_sequence(self.sampler.draw(self.seed, i, 1)[0])

    @property
    def sampled_vectors(self) -> list[ReserveVector]:
        return [self.sampled_vector(i) for i in range(self.samples)]

    def to_json(self) -> dict:
        return {
            "estimate": self.estimate,
            "standard_error": self.standard_error,
            "zero_revenue": self.zero_revenue,
            "rounding_mean": self.rounding_mean,
            "rounding_standard_error": self.rounding_standard_error,
            "best_revenue": self.best_revenue,
            "best_vector": self.best_vector.to_json(),
            "samples": self.samples,
            "seed": self.seed,
        }


def _mean_and_se(x: np.ndarray) -> tuple[float, float]:
    mean = float(x.mean())
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return mean, se


def pro_lpr_run(ds: Dataset, sol: LpSolution, samples: int, seed: int,
                keep_samples: int = 2_000_000) -> RoundingOutcome:
    """Sample ``samples`` reserve vectors from ``sol.q_values`` and score them.

    The sampled matrix is kept when it has at most ``keep_samples`` entries;
    otherwise individual draws are regenerated on request.
    """
    if samples < 1:
        raise ValidationError(f"samples must be >= 1, got {samples}")
    sampler = ReserveSampler.from_q(sol.q_values, ds.n)
    keep = samples * ds.n <= keep_samples
    kept = []
    revenue = np.empty(samples)
    step = sampler.chunk_size()
    for lo in range(0, samples, step):
        cnt = min(step, samples - lo)
        R = sampler.draw(seed, lo, cnt)
        revenue[lo:lo + cnt] = total_revenues(ds, R)
        if keep:
            kept.append(R)
    zero = zero_reserve_revenue(ds)
    matrix = np.vstack(kept) if keep else None
    best_i = int(np.argmax(revenue))
    if revenue[best_i] > zero:
        row = matrix[best_i] if keep else sampler.draw(seed, best_i, 1)[0]
        best_vec, best_rev = ReserveVector.from_sequence(row), float(revenue[best_i])
    else:
        best_vec, best_rev = ReserveVector.zeros(ds.n), zero
    # centred on zero_revenue so a point-mass rounding reproduces it exactly
    gain, se = _mean_and_se(np.maximum(revenue - zero, 0.0))
    est = zero + gain
    rmean, rse = _mean_and_se(revenue)
    return RoundingOutcome(
        per_sample_revenue=revenue,
        zero_revenue=zero,
        estimate=max(est, zero),
        standard_error=se,
        rounding_mean=rmean,
        rounding_standard_error=rse,
        best_vector=best_vec,
        best_revenue=best_rev,
        seed=seed,
        samples=samples,
        sampler=sampler,
        sample_matrix=matrix,
    )


# --------------------------------------------------------------------------
# exact tail probabilities and the two rounding conditions


def _mass(row: Mapping[float, float], lo: float, hi: float, hi_open: bool = False) -> float:
    total = math.fsum(max(p, 0.0) for p in row.values())
    if total <= 0:
        raise ValidationError("reserve distribution with no mass")
    m = math.fsum(max(p, 0.0) for r, p in row.items() if r >= lo and (r < hi if hi_open else r <= hi))
    return m / total


def exact_revenue_tail_probability(auction: Auction, q: Mapping[int, Mapping[float, float]], t: float) -> float:
    """``Pr[revenue of auction >= t]`` when each reserve is drawn independently from ``q``."""
    if t < 0:
        raise ValidationError(f"threshold must be >= 0, got {t}")
    if t == 0:
        return 1.0
    ranked = [(b, v) for b, v in auction.ranked() if v > 0]
    if not ranked or t > ranked[0][1]:
        return 0.0
    second = ranked[1][1] if len(ranked) > 1 else 0.0
    if t > second:
        b1, v1 = ranked[0]
        return _mass(q[b1], t, v1)
    alive = 1.0
    factors = []
    for b, v in ranked:
        if v < t:
            continue
        y1 = _mass(q[b], t, v)
        y2 = _mass(q[b], 0.0, t, hi_open=True)
        factors.append((y2, 1.0 - y1 - y2))
        alive *= 1.0 - y1 - y2
    # outcomes with no buyer clearing at >= t, or exactly one clearing below t
    # and the rest eliminated, are the only ones with revenue < t
    exactly_one_low = 0.0
    for i, (y2, _) in enumerate(factors):
        prod = 1.0
        for j, (_, f) in enumerate(factors):
            if j != i:
                prod *= f
        exactly_one_low += y2 * prod
    return min(1.0, max(0.0, 1.0 - alive - exactly_one_low))


@dataclass(frozen=True)
class ConditionGapReport:
    auction: str
    t: float
    lhs_mass: float
    tail_prob: float

    @property
    def gap(self) -> float:
        return self.lhs_mass - self.tail_prob


def condition_gap(auction: Auction, sol: LpSolution, t: float) -> ConditionGapReport:
    lhs = math.fsum(v for p, v in sol.auction_profiles(auction.id) if p.revenue >= t)
    tail = exact_revenue_tail_probability(auction, sol.q_values, t)
    return ConditionGapReport(auction.id, float(t), min(max(lhs, 0.0), 1.0), tail)


def condition_thresholds(auction: Auction, grid: ReserveGrid) -> list[float]:
    """Distinct finite grid values and bids of the auction, plus midpoints."""
    vals = {0.0}
    for b in range(len(grid)):
        vals.update(grid.finite(b))
    vals.update(auction.bids.values())
    pts = sorted(vals)
    mids = [(x + y) / 2 for x, y in zip(pts, pts[1:])]
    return sorted(set(pts) | set(mids))


# --------------------------------------------------------------------------
# baselines


def greedy_lazy_reserves(ds: Dataset, grid: ReserveGrid) -> ReserveVector:
    """Per-buyer lazy-optimal reserves.

    Buyer ``b`` only matters in auctions it wins at zero reserves. There a
    reserve ``r`` earns ``max(r, second bid)`` if ``r`` is at most its bid,
    else nothing; ``r_b`` maximizes the weighted total, smallest on ties.
    """
    won: dict[int, list[tuple[float, float, float]]] = {b: [] for b in ds.buyers}
    for a in ds.auctions:
        top = a.highest_bidder
        if top is not None:
            won[top].append((a.weight, a.first_bid, a.second_bid))
    out = []
    for b in ds.buyers:
        if not won[b]:
            out.append(0.0)
            continue
        w, v, v2 = (np.array(col) for col in zip(*won[b]))
        cands = np.array(grid.for_buyer(b))
        fin = np.isfinite(cands)
        values = np.zeros(cands.size)
        r = cands[fin][:, None]
        values[fin] = (w[None, :] * (r <= v[None, :]) * np.maximum(r, v2[None, :])).sum(axis=1)
        best = values.max()
        out.append(float(cands[np.flatnonzero(values >= best - 1e-12 * max(1.0, abs(best)))[0]]))
    return ReserveVector.from_sequence(out)


@dataclass(frozen=True)
class BruteForceResult:
    reserves: ReserveVector
    value: float
    evaluated: int


def brute_force_optimum(ds: Dataset, grid: ReserveGrid, cap: int = DEFAULT_BRUTE_FORCE_CAP,
                        chunk: int = 200_000) -> BruteForceResult:
    """Exhaustive search over the product of per-buyer grids.

    Vectors are visited lexicographically (buyer 0 most significant); the
    first one within 1e-12 relative of the maximum is returned.
    """
    sizes = tuple(len(grid.for_buyer(b)) for b in ds.buyers)
    total = math.prod(sizes)
    if total > cap:
        raise SizeLimitError(f"brute force needs {total} evaluations (grid sizes {sizes}), cap is {cap}")
    axes = [np.array(grid.for_buyer(b)) for b in ds.buyers]

    def block(lo, hi):
        idx = np.unravel_index(np.arange(lo, hi), sizes)
        R = np.column_stack([axes[b][idx[b]] for b in ds.buyers]) if ds.n else np.zeros((hi - lo, 0))
        return R, total_revenues(ds, R)

    best = -math.inf
    for lo in range(0, total, chunk):
        _, vals = block(lo, min(total, lo + chunk))
        best = max(best, float(vals.max()))
    cut = best - 1e-12 * max(1.0, abs(best))
    for lo in range(0, total, chunk):
        R, vals = block(lo, min(total, lo + chunk))
        hit = np.flatnonzero(vals >= cut)
        if hit.size:
            r = ReserveVector.from_sequence(R[int(hit[0])])
            return BruteForceResult(r, total_revenue(ds, r), total)
    raise AssertionError("unreachable")
