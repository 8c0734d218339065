"""Axis-aligned boxes with per-endpoint openness, and finite unions of them."""

from __future__ import annotations

import math
import re
from fractions import Fraction
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

_INTERVAL_RE = re.compile(r"^\s*([\[(])\s*([^,\s]+)\s*,\s*([^,\s\])]+)\s*([\])])\s*$")


class SetError(ValueError):
    pass


def _fmt(v: float) -> str:
    return repr(float(v))


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    closed_lo: bool = True
    closed_hi: bool = True

    @property
    def is_empty(self) -> bool:
        return self.lo > self.hi or (self.lo == self.hi and not (self.closed_lo and self.closed_hi))

    @property
    def width(self) -> float:
        """``hi - lo`` computed on the decimal values of the endpoints (0.6 - 0.4 gives 0.2)."""
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            return self.hi - self.lo
        return float(Fraction(repr(self.hi)) - Fraction(repr(self.lo)))

    def intersect(self, other: Interval) -> Interval:
        if self.lo > other.lo:
            lo, cl = self.lo, self.closed_lo
        elif other.lo > self.lo:
            lo, cl = other.lo, other.closed_lo
        else:
            lo, cl = self.lo, self.closed_lo and other.closed_lo
        if self.hi < other.hi:
            hi, ch = self.hi, self.closed_hi
        elif other.hi < self.hi:
            hi, ch = other.hi, other.closed_hi
        else:
            hi, ch = self.hi, self.closed_hi and other.closed_hi
        return Interval(lo, hi, cl, ch)

    def contains(self, v: float, tol: float = 0.0) -> bool:
        """Membership; values within ``tol`` of an endpoint count as on it."""
        if abs(v - self.lo) <= tol:
            return self.closed_lo
        if abs(v - self.hi) <= tol:
            return self.closed_hi
        return self.lo < v < self.hi

    def within(self, other: Interval) -> bool:
        if self.is_empty:
            return True
        if self.lo < other.lo or (self.lo == other.lo and self.closed_lo and not other.closed_lo):
            return False
        if self.hi > other.hi or (self.hi == other.hi and self.closed_hi and not other.closed_hi):
            return False
        return True

    def __str__(self) -> str:
        return f"{'[' if self.closed_lo else '('}{_fmt(self.lo)}, {_fmt(self.hi)}{']' if self.closed_hi else ')'}"

    @classmethod
    def parse(cls, text: str) -> Interval:
        m = _INTERVAL_RE.match(str(text))
        if not m:
            raise SetError(f"cannot parse interval {text!r}; expected e.g. '(0, 0.6]'")
        lo, hi = float(m.group(2)), float(m.group(3))
        return cls(lo, hi, m.group(1) == "[", m.group(4) == "]")


@dataclass(frozen=True)
class IntervalBox:
    """Product of intervals with ``lo < hi`` in every dimension."""

    intervals: tuple[Interval, ...]

    def __post_init__(self):
        object.__setattr__(self, "intervals", tuple(self.intervals))
        if not self.intervals:
            raise SetError("a box needs at least one dimension")
        for d, iv in enumerate(self.intervals):
            if not (math.isfinite(iv.lo) and math.isfinite(iv.hi)):
                raise SetError(f"box bounds must be finite (dimension {d})")
            if not iv.lo < iv.hi:
                raise SetError(f"box needs lower < upper in every dimension, got {iv} in dimension {d}")

    @classmethod
    def from_bounds(cls, lower, upper, closed_lower=True, closed_upper=True) -> IntervalBox:
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        cl = np.broadcast_to(closed_lower, lower.shape)
        cu = np.broadcast_to(closed_upper, lower.shape)
        return cls(tuple(Interval(float(a), float(b), bool(c), bool(d)) for a, b, c, d in zip(lower, upper, cl, cu)))

    @classmethod
    def parse(cls, obj) -> IntervalBox:
        if isinstance(obj, IntervalBox):
            return obj
        if isinstance(obj, str):
            obj = [obj]
        return cls(tuple(Interval.parse(s) for s in obj))

    @property
    def dim(self) -> int:
        return len(self.intervals)

    @property
    def lower(self) -> np.ndarray:
        return np.array([iv.lo for iv in self.intervals])

    @property
    def upper(self) -> np.ndarray:
        return np.array([iv.hi for iv in self.intervals])

    @property
    def span(self) -> float:
        return min(iv.width for iv in self.intervals)

    def contains(self, point, tol: float = 0.0) -> bool:
        point = np.atleast_1d(point)
        return all(iv.contains(float(v), tol) for iv, v in zip(self.intervals, point))

    def within(self, other: IntervalBox) -> bool:
        return all(a.within(b) for a, b in zip(self.intervals, other.intervals))

    def to_json(self) -> list[str]:
        return [str(iv) for iv in self.intervals]

    def __str__(self) -> str:
        return " x ".join(str(iv) for iv in self.intervals)

    def endpoints(self) -> list[float]:
        return [v for iv in self.intervals for v in (iv.lo, iv.hi)]


def _box_or_none(intervals: Sequence[Interval]):
    """Nondegenerate box from intervals, or None when empty or measure-zero."""
    if any(iv.is_empty or iv.lo == iv.hi for iv in intervals):
        return None
    return IntervalBox(tuple(intervals))


def box_difference(a: IntervalBox, b: IntervalBox) -> list[IntervalBox]:
    """Slab decomposition of ``a \\ b``; measure-zero slivers are dropped."""
    if a.dim != b.dim:
        raise SetError("dimension mismatch in box difference")
    inter = [x.intersect(y) for x, y in zip(a.intervals, b.intervals)]
    if any(iv.is_empty for iv in inter):
        return [a]
    pieces = []
    current = list(a.intervals)
    for d in range(a.dim):
        ai, bi = current[d], b.intervals[d]
        left = ai.intersect(Interval(-math.inf, bi.lo, False, not bi.closed_lo))
        right = ai.intersect(Interval(bi.hi, math.inf, not bi.closed_hi, False))
        for part in (left, right):
            box = _box_or_none(current[:d] + [part] + current[d + 1:])
            if box is not None:
                pieces.append(box)
        current[d] = ai.intersect(bi)
    return pieces


@dataclass(frozen=True)
class BoxUnion:
    """Finite union of boxes of a common dimension (possibly empty)."""

    boxes: tuple[IntervalBox, ...]
    dim: int

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        for b in self.boxes:
            if b.dim != self.dim:
                raise SetError(f"box of dimension {b.dim} in a union of dimension {self.dim}")

    @classmethod
    def of(cls, boxes: Iterable[IntervalBox], dim: int | None = None) -> BoxUnion:
        boxes = tuple(boxes)
        if dim is None:
            if not boxes:
                raise SetError("dimension required for an empty union")
            dim = boxes[0].dim
        return cls(boxes, dim)

    @classmethod
    def parse(cls, obj, dim: int | None = None) -> BoxUnion:
        """A union is a list of boxes; a single box (string or list of strings) is accepted too."""
        if isinstance(obj, BoxUnion):
            return obj
        if isinstance(obj, str) or (isinstance(obj, list) and obj and all(isinstance(s, str) for s in obj)):
            return cls.of([IntervalBox.parse(obj)], dim)
        return cls.of([IntervalBox.parse(b) for b in obj], dim)

    @property
    def is_empty(self) -> bool:
        return not self.boxes

    @property
    def span(self) -> float:
        """Minimal side length over the decomposition; +inf for the empty set."""
        return min((b.span for b in self.boxes), default=math.inf)

    def contains(self, point, tol: float = 0.0) -> bool:
        return any(b.contains(point, tol) for b in self.boxes)

    def within(self, other: BoxUnion) -> bool:
        """Sufficient test: every box lies inside a single box of ``other``."""
        return all(any(b.within(o) for o in other.boxes) for b in self.boxes)

    def difference(self, other: BoxUnion) -> BoxUnion:
        pieces = list(self.boxes)
        for b in other.boxes:
            pieces = [p for piece in pieces for p in box_difference(piece, b)]
        return BoxUnion(tuple(pieces), self.dim)

    def endpoints(self) -> list[float]:
        return [v for b in self.boxes for v in b.endpoints()]

    def to_json(self) -> list[list[str]]:
        return [b.to_json() for b in self.boxes]

    def __str__(self) -> str:
        return " U ".join(str(b) for b in self.boxes) if self.boxes else "{}"


def linear_image(box: IntervalBox, matrix) -> list[Interval]:
    """Exact per-row interval image of ``{C x : x in box}`` with endpoint openness."""
    C = np.atleast_2d(np.asarray(matrix, dtype=float))
    if C.shape[1] != box.dim:
        raise SetError(f"matrix has {C.shape[1]} columns, box has dimension {box.dim}")
    out = []
    for row in C:
        lo = hi = 0.0
        cl = ch = True
        for c, iv in zip(row, box.intervals):
            if c == 0:
                continue
            if c > 0:
                lo += c * iv.lo
                hi += c * iv.hi
                cl &= iv.closed_lo
                ch &= iv.closed_hi
            else:
                lo += c * iv.hi
                hi += c * iv.lo
                cl &= iv.closed_hi
                ch &= iv.closed_lo
        out.append(Interval(lo, hi, cl, ch))
    return out
