"""Class-K-infinity gain functions of the form r -> c * r**lam.

The family is closed under composition, inversion, positive scaling and
(for equal exponents) pointwise maximum, which is everything the design
pipeline needs.  ``ZERO`` is the distinguished zero gain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Union


class GainError(ValueError):
    pass


@dataclass(frozen=True)
class GainFunction:
    c: float
    lam: float = 1.0

    def __post_init__(self):
        c, lam = float(self.c), float(self.lam)
        if not (math.isfinite(c) and math.isfinite(lam)):
            raise GainError(f"gain parameters must be finite, got c={c}, lam={lam}")
        if c < 0 or lam <= 0:
            raise GainError(f"need c >= 0 and lam > 0, got c={c}, lam={lam}")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "lam", 1.0 if c == 0 else lam)

    @property
    def is_zero(self) -> bool:
        return self.c == 0.0

    @property
    def is_linear(self) -> bool:
        return self.lam == 1.0

    def __call__(self, r: float) -> float:
        return gain_eval(self, r)

    def scaled(self, s: float) -> GainFunction:
        """Return ``r -> s * g(r)`` for a constant ``s >= 0``."""
        if s < 0:
            raise GainError("scale factor must be nonnegative")
        return GainFunction(self.c * s, self.lam)

    def __repr__(self) -> str:
        if self.is_zero:
            return "GainFunction.zero"
        if self.is_linear:
            return f"GainFunction({self.c:g}*r)"
        return f"GainFunction({self.c:g}*r^{self.lam:g})"

    def to_json(self):
        if self.is_zero:
            return "zero"
        return {"c": self.c, "lam": self.lam}

    @classmethod
    def from_json(cls, obj) -> GainFunction:
        """Accept ``"zero"``, a bare number (linear gain) or ``{"c":.., "lam":..}``."""
        if isinstance(obj, GainFunction):
            return obj
        if obj == "zero":
            return ZERO
        if isinstance(obj, (int, float, str)):
            return cls(float(obj), 1.0)
        if isinstance(obj, dict) and "c" in obj:
            return cls(float(obj["c"]), float(obj.get("lam", 1.0)))
        raise GainError(f"cannot read a gain function from {obj!r}")


ZERO = GainFunction(0.0)
IDENTITY = GainFunction(1.0, 1.0)

GainLike = Union[GainFunction, float, int]


def as_gain(g: GainLike) -> GainFunction:
    if isinstance(g, GainFunction):
        return g
    return GainFunction(float(g), 1.0)


def gain_eval(g: GainFunction, r: float) -> float:
    if r < 0:
        raise GainError(f"gain functions are defined on r >= 0, got {r}")
    if g.is_zero or r == 0:
        return 0.0
    if g.is_linear:
        return g.c * r
    return g.c * r ** g.lam


def gain_compose(g1: GainFunction, g2: GainFunction) -> GainFunction:
    """``g1 o g2``: c1 * (c2 r^l2)^l1 = c1 c2^l1 r^(l1 l2)."""
    if g1.is_zero or g2.is_zero:
        return ZERO
    return GainFunction(g1.c * g2.c ** g1.lam, g1.lam * g2.lam)


def gain_invert(g: GainFunction) -> GainFunction:
    if g.is_zero:
        raise GainError("the zero gain has no inverse")
    return GainFunction((1.0 / g.c) ** (1.0 / g.lam), 1.0 / g.lam)


def gain_lt_identity(g: GainFunction) -> bool:
    """True iff g(r) < r for every r > 0."""
    if g.is_zero:
        return True
    return g.lam == 1.0 and g.c < 1.0


def gain_lt(g1: GainFunction, g2: GainFunction) -> bool:
    """True iff g1(r) < g2(r) for every r > 0 (within the power family)."""
    if g2.is_zero:
        return False
    if g1.is_zero:
        return True
    return g1.lam == g2.lam and g1.c < g2.c


def gain_max(gains: Iterable[GainFunction]) -> GainFunction:
    """Pointwise maximum; only closed in the family for a common exponent."""
    nonzero = [g for g in gains if not g.is_zero]
    if not nonzero:
        return ZERO
    lams = {g.lam for g in nonzero}
    if len(lams) > 1:
        raise GainError(
            "pointwise max of power gains with different exponents "
            f"{sorted(lams)} is not a power gain"
        )
    return GainFunction(max(g.c for g in nonzero), nonzero[0].lam)
