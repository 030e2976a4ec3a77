"""Numerical companions to the approximation-factor analysis.

``F`` is the nonlinear program bounding the revenue lost by rounding; ``G1``
and ``G2`` are its closed-form case bounds and ``theta_star(k)`` the
stationary point of ``G1``. Everything here is a pure function.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError

SQRT2_MINUS_1 = math.sqrt(2.0) - 1.0
BOUND_CONSTANT = 2.0 * SQRT2_MINUS_1 * math.exp(math.sqrt(2.0) - 2.0)


def _prod_with_one_out(one_minus: np.ndarray, x: np.ndarray) -> np.ndarray:
    # sum_i x_i prod_{j != i} (1 - x_j) along the last axis, no division
    n = one_minus.shape[-1]
    total = np.zeros(one_minus.shape[:-1])
    for i in range(n):
        others = np.delete(one_minus, i, axis=-1).prod(axis=-1)
        total = total + x[..., i] * others
    return total


def objective_F(x: Sequence[float] | np.ndarray, theta: float) -> float | np.ndarray:
    """``e^(theta-1) [prod(1-x_i) + sum_i x_i prod_{j!=i}(1-x_j)]``; rows of a 2-D ``x`` are evaluated separately."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(x > 1):
        raise ValidationError("F needs 0 <= x_i <= 1")
    om = 1.0 - x
    val = math.exp(theta - 1.0) * (om.prod(axis=-1) + _prod_with_one_out(om, x))
    return float(val) if np.ndim(val) == 0 else val


def bound_G1(theta: float | np.ndarray, k: int) -> float | np.ndarray:
    """``e^(theta-1) (1-2theta/k)^(k-1) (1-2theta/k+2theta)``."""
    if k < 2:
        raise ValidationError(f"k must be >= 2, got {k}")
    th = np.asarray(theta, dtype=float)
    u = 1.0 - 2.0 * th / k
    val = np.exp(th - 1.0) * u ** (k - 1) * (u + 2.0 * th)
    return float(val) if val.ndim == 0 else val


def bound_G2(theta: float | np.ndarray, k: int) -> float | np.ndarray:
    """``e^(theta-1) [(1-theta/k)^k + theta(1-theta)(1-theta/k)^(k-1)]``."""
    if k < 2:
        raise ValidationError(f"k must be >= 2, got {k}")
    th = np.asarray(theta, dtype=float)
    u = 1.0 - th / k
    val = np.exp(th - 1.0) * (u ** k + th * (1.0 - th) * u ** (k - 1))
    return float(val) if val.ndim == 0 else val


def theta_star(k: int) -> float:
    """Stationary point of ``G1(., k)``: ``k (k - sqrt(k^2+4k-4)) / (4-4k)``."""
    if k < 2:
        raise ValidationError(f"k must be >= 2, got {k}")
    return k * (k - math.sqrt(k * k + 4 * k - 4)) / (4 - 4 * k)


def dG1_dtheta(theta: float, k: int, h: float = 1e-6) -> float:
    """Central-difference derivative of :func:`bound_G1` in theta."""
    return (bound_G1(theta + h, k) - bound_G1(theta - h, k)) / (2 * h)


def approx_constant() -> float:
    """``1 / (1 + 2(sqrt2-1) e^(sqrt2-2))``."""
    return 1.0 / (1.0 + BOUND_CONSTANT)


def case_envelope(theta: float, n: int) -> float:
    """Largest closed-form case bound available to ``n`` coordinates:
    ``G1(theta, k)`` for ``2 <= k <= n`` and ``G2(theta, k)`` for ``2 <= k < n``."""
    vals = [bound_G1(theta, k) for k in range(2, n + 1)]
    vals += [bound_G2(theta, k) for k in range(2, n)]
    return max(vals)


# --------------------------------------------------------------------------
# brute force over the discretized program


@dataclass(frozen=True)
class ProgramMax:
    value: float
    argmax: tuple[float, ...]
    step: float
    evaluated: int

    def interior_coordinates(self, theta: float) -> list[float]:
        tol = self.step / 2
        return [v for v in self.argmax if tol < v < theta - tol]

    def interior_spread(self, theta: float) -> float:
        inner = self.interior_coordinates(theta)
        return max(inner) - min(inner) if len(inner) > 1 else 0.0


def _descending_compositions(total: int, parts: int, cap: int) -> np.ndarray:
    """All nonincreasing integer vectors of length ``parts`` with entries in
    ``[0, cap]`` summing to ``total``, one per row."""
    rows = np.zeros((1, 0), dtype=np.int64)
    rem = np.array([total], dtype=np.int64)
    prev = np.array([cap], dtype=np.int64)
    for left in range(parts, 0, -1):
        lo = -(-rem // left)  # the remaining parts cannot exceed this one
        hi = np.minimum(prev, rem)
        if left == 1:
            lo = rem
        counts = np.maximum(hi - lo + 1, 0)
        keep = counts > 0
        rows, rem, lo, counts = rows[keep], rem[keep], lo[keep], counts[keep]
        rep = np.repeat(np.arange(rows.shape[0]), counts)
        offs = np.arange(rep.size) - np.repeat(np.cumsum(counts) - counts, counts)
        val = lo[rep] + offs
        rows = np.column_stack([rows[rep], val])
        rem = rem[rep] - val
        prev = val
    return rows


def brute_force_program_max(n: int, theta: float, resolution: int | None = None) -> ProgramMax:
    """Maximize ``F`` over ``{x : sum x_i = 2 theta, 0 <= x_i <= theta}`` on the
    lattice of step ``1/resolution``.

    ``F`` is symmetric, so only nonincreasing vectors are visited, in
    lexicographically increasing order. The reported argmax is the first
    vector within 1e-12 relative of the maximum; where ``F`` is flat (a
    coordinate fixed at 1/2 makes it depend on the others only through
    their sum) this picks the most balanced maximizer.
    """
    if not 2 <= n <= 5:
        raise ValidationError(f"n must lie in [2, 5], got {n}")
    if not 0 < theta <= 1:
        raise ValidationError(f"theta must lie in (0, 1], got {theta}")
    res = resolution if resolution is not None else (400 if n <= 4 else 100)
    total_f = 2.0 * theta * res
    total = int(round(total_f))
    if abs(total - total_f) > 1e-6:
        raise ValidationError(f"2*theta = {2 * theta} is not on the 1/{res} lattice")
    cap = int(math.floor(theta * res + 1e-9))
    U = _descending_compositions(total, n, cap)
    X = U / res
    vals = objective_F(X, theta)
    best = vals.max()
    i = int(np.flatnonzero(vals >= best - 1e-12 * abs(best))[0])
    return ProgramMax(float(vals[i]), tuple(float(v) for v in X[i]), 1.0 / res, int(U.shape[0]))


# --------------------------------------------------------------------------
# moving buyers


@dataclass(frozen=True)
class InequalitySides:
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + 1e-12


def moving_buyers_sides(x1: Sequence[float], x2: Sequence[float]) -> InequalitySides:
    a = np.asarray(x1, dtype=float)
    b = np.asarray(x2, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValidationError("x1 and x2 must be equal-length vectors of length >= 2")
    if np.any(a < 0) or np.any(b < 0) or np.any(a + b > 1 + 1e-12):
        raise ValidationError("need x1, x2 >= 0 and x1 + x2 <= 1")
    both = 1.0 - a - b
    lhs = both.prod() + _prod_with_one_out(both, b)
    om2 = 1.0 - b
    rhs = (1.0 - a).prod() * (om2.prod() + _prod_with_one_out(om2, b))
    return InequalitySides(float(lhs), float(rhs))


# --------------------------------------------------------------------------
# sweeps


def theta_grid(step: float = 1e-4) -> np.ndarray:
    return np.linspace(0.0, 1.0, int(round(1.0 / step)) + 1)


@dataclass(frozen=True)
class SweepMax:
    value: float
    theta: float
    k: int


def sweep_max(fn, ks: Sequence[int], step: float = 1e-4) -> SweepMax:
    """Maximum of ``fn(theta, k)`` over the theta grid and ``ks``."""
    th = theta_grid(step)
    best = SweepMax(-math.inf, math.nan, -1)
    for k in ks:
        vals = fn(th, k)
        i = int(np.argmax(vals))
        if vals[i] > best.value:
            best = SweepMax(float(vals[i]), float(th[i]), int(k))
    return best


@dataclass(frozen=True)
class TheoryCheck:
    name: str
    passed: bool
    detail: str


def theta_star_table(ks: Sequence[int] = range(2, 201)) -> list[tuple[int, float, float]]:
    return [(k, theta_star(k), bound_G1(theta_star(k), k)) for k in ks]


def verify_theory(step: float = 1e-4) -> list[TheoryCheck]:
    """Run the numeric checks behind the rounding guarantee."""
    checks = []
    g1_2 = sweep_max(bound_G1, [2], step)
    checks.append(TheoryCheck(
        "max G1(theta, 2)",
        abs(g1_2.value - 0.46120) <= 1e-4 and abs(g1_2.theta - SQRT2_MINUS_1) <= 1e-3,
        f"value={g1_2.value:.6f} theta={g1_2.theta:.5f}"))
    g1_all = sweep_max(bound_G1, range(2, 201), step)
    checks.append(TheoryCheck("G1 <= 0.46121 for k in [2, 200]", g1_all.value <= 0.46121,
                              f"max={g1_all.value:.6f} at k={g1_all.k} theta={g1_all.theta:.5f}"))
    g2_all = sweep_max(bound_G2, range(2, 201), step)
    checks.append(TheoryCheck("G2 <= 0.46", g2_all.value <= 0.46,
                              f"max={g2_all.value:.6f} at k={g2_all.k} theta={g2_all.theta:.5f}"))
    ts = theta_star(2)
    checks.append(TheoryCheck("theta_star(2) = sqrt2 - 1", abs(ts - SQRT2_MINUS_1) <= 1e-12, f"{ts:.15f}"))
    worst = max(abs(dG1_dtheta(theta_star(k), k)) for k in range(2, 101))
    checks.append(TheoryCheck("dG1/dtheta(theta_star(k)) ~ 0 for k in [2, 100]", worst <= 1e-8, f"max |dG1|={worst:.2e}"))
    excess, spread_ok = -math.inf, True
    for n in (3, 4):
        for theta in np.round(np.arange(0.1, 1.0, 0.1), 10):
            pm = brute_force_program_max(n, float(theta))
            excess = max(excess, pm.value - case_envelope(float(theta), n))
            spread_ok &= pm.interior_spread(float(theta)) <= pm.step + 1e-12
    checks.append(TheoryCheck("program max within case envelope (n = 3, 4)", excess <= 1e-3,
                              f"max excess={excess:.2e}"))
    checks.append(TheoryCheck("interior argmax coordinates equal", spread_ok, "within one grid step"))
    c = approx_constant()
    checks.append(TheoryCheck("approximation constant", abs(c - 0.68438) <= 1e-5, f"{c:.6f}"))
    return checks
