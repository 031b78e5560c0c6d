"""Interval maxima of |sin|, |cos| and monomials, used by the shipped Hessian oracles."""

import math


def _hits_grid(lo: float, hi: float, offset: float, period: float) -> bool:
    """True when some offset + k * period lies in [lo, hi]."""
    k = math.ceil((lo - offset) / period)
    return offset + k * period <= hi


def abs_sin_max(lo: float, hi: float) -> float:
    """max |sin t| over t in [lo, hi]."""
    if hi - lo >= math.pi or _hits_grid(lo, hi, math.pi / 2.0, math.pi):
        return 1.0
    return max(abs(math.sin(lo)), abs(math.sin(hi)))


def abs_cos_max(lo: float, hi: float) -> float:
    """max |cos t| over t in [lo, hi]."""
    if hi - lo >= math.pi or _hits_grid(lo, hi, 0.0, math.pi):
        return 1.0
    return max(abs(math.cos(lo)), abs(math.cos(hi)))


def abs_max(lo: float, hi: float) -> float:
    """max |t| over t in [lo, hi]."""
    return max(abs(lo), abs(hi))


def abs_monomial_max(lo: float, hi: float, power: int) -> float:
    """max |t|^power over t in [lo, hi]."""
    if power == 0:
        return 1.0
    return abs_max(lo, hi) ** power
