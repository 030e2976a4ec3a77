"""Bid datasets, eager second-price revenue, and reserve grids.

Buyers are integer indices ``0..n-1``. A reserve of ``PLUS_INFINITY``
eliminates its buyer from every auction. In serialized form that value is
the string ``"inf"``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .errors import ParseError, ValidationError

PLUS_INFINITY = math.inf

CSV_HEADER = ("auction_id", "weight", "buyer_id", "bid")

# Upper bound on elements of one (vectors x auctions x buyers) block when
# evaluating many reserve vectors at once.
_BLOCK_ELEMENTS = 4_000_000


def format_reserve(r: float) -> float | str:
    """JSON-ready form of a reserve value."""
    return "inf" if r == PLUS_INFINITY else float(r)


def parse_reserve(value) -> float:
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "+inf", "infinity"):
            return PLUS_INFINITY
        value = float(value)
    r = float(value)
    if math.isnan(r) or r < 0:
        raise ValidationError(f"reserve must be >= 0 or 'inf', got {value!r}")
    return r


@dataclass(frozen=True)
class Auction:
    """One auction: a positive weight and a sparse map buyer -> bid."""

    id: str
    bids: Mapping[int, float]
    weight: float = 1.0

    def __post_init__(self):
        bids = {}
        for b, v in dict(self.bids).items():
            b = int(b)
            v = float(v)
            if b < 0:
                raise ValidationError(f"auction {self.id!r}: negative buyer index {b}")
            if not math.isfinite(v) or v < 0:
                raise ValidationError(f"auction {self.id!r}: bid of buyer {b} must be finite and >= 0, got {v}")
            bids[b] = v
        weight = float(self.weight)
        if not math.isfinite(weight) or weight <= 0:
            raise ValidationError(f"auction {self.id!r}: weight must be > 0, got {self.weight}")
        object.__setattr__(self, "bids", MappingProxyType(dict(sorted(bids.items()))))
        object.__setattr__(self, "weight", weight)
        object.__setattr__(self, "id", str(self.id))

    def bid(self, buyer: int) -> float:
        return self.bids.get(buyer, 0.0)

    def ranked(self) -> list[tuple[int, float]]:
        """(buyer, bid) pairs ordered by bid descending, then buyer index."""
        return sorted(self.bids.items(), key=lambda kv: (-kv[1], kv[0]))

    @property
    def highest_bidder(self) -> int | None:
        """Tie-broken highest bidder among positive bids, or None."""
        ranked = [kv for kv in self.ranked() if kv[1] > 0]
        return ranked[0][0] if ranked else None

    @property
    def first_bid(self) -> float:
        return max(self.bids.values(), default=0.0)

    @property
    def second_bid(self) -> float:
        """Second-highest bid; 0 when fewer than two buyers bid."""
        top = sorted(self.bids.values(), reverse=True)
        return top[1] if len(top) > 1 else 0.0


@dataclass(frozen=True)
class Dataset:
    auctions: tuple[Auction, ...]
    n: int

    def __post_init__(self):
        auctions = tuple(self.auctions)
        object.__setattr__(self, "auctions", auctions)
        if self.n < 1:
            raise ValidationError("dataset needs at least one buyer")
        if not auctions:
            raise ValidationError("no auctions")
        seen = set()
        for a in auctions:
            if a.id in seen:
                raise ValidationError(f"duplicate auction id {a.id!r}")
            seen.add(a.id)
            for b in a.bids:
                if b >= self.n:
                    raise ValidationError(f"auction {a.id!r} references buyer {b} but n={self.n}")

    @property
    def buyers(self) -> range:
        return range(self.n)

    @cached_property
    def bid_matrix(self) -> np.ndarray:
        """Dense (auctions x buyers) bid array; absent bids are 0."""
        m = np.zeros((len(self.auctions), self.n))
        for i, a in enumerate(self.auctions):
            for b, v in a.bids.items():
                m[i, b] = v
        m.setflags(write=False)
        return m

    @cached_property
    def weights(self) -> np.ndarray:
        w = np.array([a.weight for a in self.auctions], dtype=float)
        w.setflags(write=False)
        return w

    def auction_index(self, auction_id: str) -> int:
        try:
            return self._index[auction_id]
        except KeyError:
            raise KeyError(f"unknown auction {auction_id!r}") from None

    @cached_property
    def _index(self) -> dict[str, int]:
        return {a.id: i for i, a in enumerate(self.auctions)}


@dataclass(frozen=True)
class ReserveVector:
    """Per-buyer reserve prices; entries may be ``PLUS_INFINITY``."""

    reserves: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        clean = {int(b): parse_reserve(r) for b, r in dict(self.reserves).items()}
        object.__setattr__(self, "reserves", MappingProxyType(dict(sorted(clean.items()))))

    @classmethod
    def zeros(cls, n: int) -> "ReserveVector":
        return cls({b: 0.0 for b in range(n)})

    @classmethod
    def from_sequence(cls, values: Iterable[float]) -> "ReserveVector":
        return cls(dict(enumerate(values)))

    def get(self, buyer: int, strict: bool = False) -> float:
        if buyer in self.reserves:
            return self.reserves[buyer]
        if strict:
            raise ValidationError(f"reserve vector has no entry for buyer {buyer}")
        return 0.0

    def __getitem__(self, buyer: int) -> float:
        return self.reserves[buyer]

    def as_array(self, n: int, strict: bool = False) -> np.ndarray:
        return np.array([self.get(b, strict) for b in range(n)], dtype=float)

    def to_json(self) -> dict[str, float | str]:
        return {str(b): format_reserve(r) for b, r in self.reserves.items()}

    @classmethod
    def from_json(cls, obj: Mapping[str, object]) -> "ReserveVector":
        return cls({int(b): parse_reserve(r) for b, r in obj.items()})


@dataclass(frozen=True)
class ReserveGrid:
    """Candidate reserves per buyer; each list runs from 0 to PLUS_INFINITY."""

    per_buyer: tuple[tuple[float, ...], ...]
    shared: tuple[float, ...] | None = None

    def __post_init__(self):
        per_buyer = tuple(tuple(float(r) for r in g) for g in self.per_buyer)
        for b, g in enumerate(per_buyer):
            if len(g) < 2 or g[0] != 0.0 or g[-1] != PLUS_INFINITY:
                raise ValidationError(f"grid of buyer {b} must start at 0 and end at inf")
            if any(x >= y for x, y in zip(g, g[1:])):
                raise ValidationError(f"grid of buyer {b} is not strictly increasing")
        object.__setattr__(self, "per_buyer", per_buyer)
        if self.shared is not None:
            object.__setattr__(self, "shared", tuple(float(r) for r in self.shared))

    def __len__(self) -> int:
        return len(self.per_buyer)

    def for_buyer(self, b: int) -> tuple[float, ...]:
        return self.per_buyer[b]

    def finite(self, b: int) -> tuple[float, ...]:
        return self.per_buyer[b][:-1]

    def contains(self, b: int, r: float) -> bool:
        return r in self._sets[b]

    @cached_property
    def _sets(self) -> tuple[frozenset, ...]:
        return tuple(frozenset(g) for g in self.per_buyer)

    def product_size(self) -> int:
        return math.prod(len(g) for g in self.per_buyer)

    def to_json(self) -> dict:
        return {str(b): [format_reserve(r) for r in g] for b, g in enumerate(self.per_buyer)}

    @classmethod
    def from_json(cls, obj: Mapping[str, Sequence[object]]) -> "ReserveGrid":
        keys = sorted(int(b) for b in obj)
        if keys != list(range(len(keys))):
            raise ValidationError("grid buyers must be numbered 0..n-1")
        return cls(tuple(tuple(parse_reserve(r) for r in obj[str(b)]) for b in keys))


# --------------------------------------------------------------------------
# parsing and serialization


def parse_dataset(source: IO | bytes | str, format: str = "csv") -> Dataset:
    """Read a dataset from a stream, bytes, or text in ``csv`` or ``json`` form.

    CSV rows are ``auction_id,weight,buyer_id,bid`` with an optional header.
    """
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    if format == "csv":
        return _parse_csv(source)
    if format == "json":
        return _parse_json(source)
    raise ValidationError(f"unknown dataset format {format!r}")


def _parse_csv(text: str) -> Dataset:
    order: list[str] = []
    weights: dict[str, float] = {}
    bids: dict[str, dict[int, float]] = {}
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if lineno == 1 and row[0].strip() == CSV_HEADER[0]:
            continue
        if len(row) != 4:
            raise ParseError(f"expected 4 fields, got {len(row)}", lineno)
        aid = row[0].strip()
        try:
            weight = float(row[1])
            buyer = int(row[2])
            bid = float(row[3])
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        if not aid:
            raise ParseError("empty auction id", lineno)
        if buyer < 0:
            raise ParseError(f"negative buyer id {buyer}", lineno)
        if not math.isfinite(bid) or bid < 0:
            raise ValidationError(f"line {lineno}: bid must be finite and >= 0, got {row[3].strip()}")
        if not math.isfinite(weight) or weight <= 0:
            raise ValidationError(f"line {lineno}: weight must be > 0, got {row[1].strip()}")
        if aid not in weights:
            order.append(aid)
            weights[aid] = weight
            bids[aid] = {}
        elif weights[aid] != weight:
            raise ParseError(f"weight of auction {aid!r} differs from earlier rows", lineno)
        if buyer in bids[aid]:
            raise ParseError(f"duplicate bid of buyer {buyer} in auction {aid!r}", lineno)
        bids[aid][buyer] = bid
    if not order:
        raise ValidationError("no auctions")
    n = 1 + max((b for aid in order for b in bids[aid]), default=0)
    return Dataset(tuple(Auction(aid, bids[aid], weights[aid]) for aid in order), n)


def _parse_json(text: str) -> Dataset:
    try:
        obj = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno) from None
    raw = obj.get("auctions") or []
    if not raw:
        raise ValidationError("no auctions")
    auctions = []
    for i, a in enumerate(raw):
        try:
            auctions.append(Auction(str(a["id"]), {int(b): v for b, v in a.get("bids", {}).items()},
                                    a.get("weight", 1.0)))
        except (KeyError, TypeError) as exc:
            raise ParseError(f"auction #{i}: {exc!r}") from None
    n = obj.get("n")
    if n is None:
        n = 1 + max((b for a in auctions for b in a.bids), default=0)
    return Dataset(tuple(auctions), int(n))


def dataset_to_csv(ds: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for a in ds.auctions:
        for b, v in a.bids.items():
            w.writerow([a.id, repr(a.weight), b, repr(v)])
    return buf.getvalue()


def dataset_to_json(ds: Dataset) -> str:
    obj = {
        "n": ds.n,
        "auctions": [{"id": a.id, "weight": a.weight, "bids": {str(b): v for b, v in a.bids.items()}}
                     for a in ds.auctions],
    }
    return json.dumps(obj, indent=1)


# --------------------------------------------------------------------------
# revenue


def esp_revenue(auction: Auction, r: ReserveVector, strict: bool = False) -> float:
    """Eager second-price revenue of one auction under reserves ``r``.

    Buyers with bid < reserve are removed first; the highest remaining bid
    wins (lowest index on ties) and pays the larger of its own reserve and
    the best other remaining bid.
    """
    cleared = [(b, v) for b, v in auction.ranked() if v >= r.get(b, strict)]
    if not cleared:
        return 0.0
    winner, _ = cleared[0]
    runner_up = cleared[1][1] if len(cleared) > 1 else 0.0
    return max(r.get(winner, strict), runner_up)


def total_revenue(ds: Dataset, r: ReserveVector, strict: bool = False) -> float:
    return math.fsum(a.weight * esp_revenue(a, r, strict) for a in ds.auctions)


def revenue_matrix(bids: np.ndarray, reserves: np.ndarray) -> np.ndarray:
    """Per-auction eager revenues for a stack of reserve vectors.

    ``bids`` is (auctions, buyers); ``reserves`` is (vectors, buyers).
    Returns (vectors, auctions).
    """
    reserves = np.atleast_2d(np.asarray(reserves, dtype=float))
    m, n = bids.shape
    out = np.empty((reserves.shape[0], m))
    step = max(1, _BLOCK_ELEMENTS // max(1, m * n))
    for lo in range(0, reserves.shape[0], step):
        R = reserves[lo:lo + step]
        cleared = bids[None, :, :] >= R[:, None, :]
        cb = np.where(cleared, bids[None, :, :], -1.0)
        winner = np.argmax(cb, axis=2)
        r_win = np.take_along_axis(R, winner, axis=1)
        np.put_along_axis(cb, winner[:, :, None], -1.0, axis=2)
        second = np.maximum(cb.max(axis=2), 0.0)
        out[lo:lo + step] = np.where(cleared.any(axis=2), np.maximum(r_win, second), 0.0)
    return out


def total_revenues(ds: Dataset, reserves: np.ndarray) -> np.ndarray:
    """Weighted total revenue for each row of ``reserves``."""
    return revenue_matrix(ds.bid_matrix, reserves) @ ds.weights


def zero_reserve_revenue(ds: Dataset) -> float:
    return math.fsum(a.weight * a.second_bid for a in ds.auctions)


# --------------------------------------------------------------------------
# grids

GRID_MODES = ("own_bids", "shared_bids", "equally_spaced")


def build_reserve_grids(ds: Dataset, mode: str = "own_bids", count: int | None = None) -> ReserveGrid:
    if mode == "own_bids":
        per = []
        for b in ds.buyers:
            vals = {a.bids[b] for a in ds.auctions if b in a.bids}
            per.append(tuple(sorted(vals | {0.0})) + (PLUS_INFINITY,))
        return ReserveGrid(tuple(per))
    if mode == "shared_bids":
        vals = {v for a in ds.auctions for v in a.bids.values()}
        shared = tuple(sorted(vals | {0.0})) + (PLUS_INFINITY,)
        return ReserveGrid((shared,) * ds.n, shared)
    if mode == "equally_spaced":
        if count is None or count < 2:
            raise ValidationError(f"equally_spaced grid needs count >= 2, got {count}")
        top = float(ds.bid_matrix.max())
        pts = tuple(sorted({float(x) for x in np.linspace(0.0, top, count)})) + (PLUS_INFINITY,)
        return ReserveGrid((pts,) * ds.n, pts)
    raise ValidationError(f"unknown grid mode {mode!r}; expected one of {GRID_MODES}")


def grid_from_lists(lists: Sequence[Sequence[float]]) -> ReserveGrid:
    return ReserveGrid(tuple(tuple(parse_reserve(r) for r in g) for g in lists))
