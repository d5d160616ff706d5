"""Spectral-parameter regions, admissible exponent polygons and the decay order.

Everything here is a pure function. Region tests use exact rational
arithmetic whenever the caller passes ``int`` or ``fractions.Fraction``
values; plain floats are compared in floating point.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from numbers import Rational
from typing import Union

import numpy as np

from .errors import DomainError

Real = Union[int, float, Fraction]


# ---------------------------------------------------------------------------
# square root and the parabola exterior
# ---------------------------------------------------------------------------

def _on_closed_negative_axis(z: complex) -> bool:
    return z.imag == 0.0 and z.real <= 0.0


def sqrt_principal(z):
    """Principal square root on C minus the closed negative real axis.

    Accepts a scalar or an array. The real part of the result is
    ``sqrt((Re z + |z|)/2)`` and its argument lies in (-pi/2, pi/2).
    """
    if np.ndim(z) == 0:
        z = complex(z)
        if _on_closed_negative_axis(z):
            raise DomainError(f"z={z} lies on the closed negative real axis")
        return cmath.sqrt(z)
    z = np.asarray(z, dtype=complex)
    bad = (z.imag == 0.0) & (z.real <= 0.0)
    if np.any(bad):
        raise DomainError(f"{int(bad.sum())} value(s) lie on the closed negative real axis")
    return np.sqrt(z)


def re_sqrt(z):
    """``Re sqrt(z) = sqrt((Re z + |z|)/2)``.

    For ``Re z < 0`` the equivalent form ``|Im z| / sqrt(2(|z| - Re z))``
    avoids cancellation near the negative axis.
    """
    z = np.asarray(z, dtype=complex)
    x, y, r = z.real, z.imag, np.abs(z)
    with np.errstate(divide="ignore", invalid="ignore"):
        left = np.abs(y) / np.sqrt(2.0 * (r - x))
    out = np.where(x >= 0, np.sqrt((x + r) / 2.0), np.nan_to_num(left))
    return float(out) if out.ndim == 0 else out


def _check_delta(delta: float) -> None:
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")


def in_xi_delta(z, delta: float):
    """Membership in the parabola exterior ``{Re sqrt z >= delta}``.

    Raises :class:`DomainError` for points on the closed negative axis
    rather than answering ``False``.
    """
    _check_delta(delta)
    if np.ndim(z) == 0:
        z = complex(z)
        if _on_closed_negative_axis(z):
            raise DomainError(f"z={z} lies on the closed negative real axis")
        return bool(cmath.sqrt(z).real >= delta)
    w = sqrt_principal(z)
    return w.real >= delta


def in_xi_delta_parabola(z, delta: float):
    """Same set as :func:`in_xi_delta`, tested by ``(Im z)^2 >= 4 d^2 (d^2 - Re z)``."""
    _check_delta(delta)
    if np.ndim(z) == 0:
        z = complex(z)
        if _on_closed_negative_axis(z):
            raise DomainError(f"z={z} lies on the closed negative real axis")
        return bool(z.imag * z.imag >= 4.0 * delta * delta * (delta * delta - z.real))
    z = np.asarray(z, dtype=complex)
    sqrt_principal(z)  # domain check only
    return z.imag * z.imag >= 4.0 * delta * delta * (delta * delta - z.real)


def in_xi_tilde(z: complex, delta: float) -> bool:
    """The larger region ``|Im z| >= delta`` (Re z < 0), ``|z| > delta`` (Re z >= 0).

    Exposed for exploration only; no estimate is asserted on it.
    """
    z = complex(z)
    if _on_closed_negative_axis(z):
        raise DomainError(f"z={z} lies on the closed negative real axis")
    if z.real < 0:
        return abs(z.imag) >= delta
    return abs(z) > delta


@dataclass(frozen=True)
class SpectralParameter:
    z: complex
    delta: float

    def __post_init__(self):
        if _on_closed_negative_axis(complex(self.z)):
            raise DomainError(f"z={self.z} lies on the closed negative real axis")
        _check_delta(self.delta)

    @property
    def sqrt(self) -> complex:
        return sqrt_principal(self.z)

    @property
    def in_xi(self) -> bool:
        return in_xi_delta(self.z, self.delta)

    @property
    def in_xi_tilde(self) -> bool:
        return in_xi_tilde(self.z, self.delta)


# ---------------------------------------------------------------------------
# exponents
# ---------------------------------------------------------------------------

def _exact(x):
    """Fraction for rationals, float otherwise; ``inf`` stays ``inf``."""
    if isinstance(x, Rational):
        return Fraction(x)
    x = float(x)
    return x


def _recip(x):
    if isinstance(x, Fraction):
        return 1 / x
    return 0.0 if math.isinf(x) else 1.0 / x


@dataclass(frozen=True)
class ExponentPair:
    """Lebesgue exponents with ``1 <= p <= 2 <= q <= inf``."""

    p: Real
    q: Real

    def __post_init__(self):
        p, q = _exact(self.p), _exact(self.q)
        if not (1 <= p <= 2 <= q):
            raise DomainError(f"need 1 <= p <= 2 <= q, got p={self.p}, q={self.q}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @property
    def inv_p(self):
        return _recip(self.p)

    @property
    def inv_q(self):
        return _recip(self.q)

    @property
    def p_dual(self):
        return conjugate_exponent(self.p)

    @property
    def q_dual(self):
        return conjugate_exponent(self.q)

    @property
    def gap(self):
        """``d = 1/p - 1/q``."""
        return self.inv_p - self.inv_q

    def as_floats(self) -> tuple[float, float]:
        return float(self.p), float(self.q)


def conjugate_exponent(p):
    """``p' = p/(p-1)``; ``1 <-> inf``."""
    p = _exact(p)
    if p == 1:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1)


def sharp_exponents(n: int) -> ExponentPair:
    """The dual pair ``(2n/(n+2), 2n/(n-2))`` of the uniform resolvent bound."""
    if n < 3:
        raise DomainError(f"dimension must be >= 3, got {n}")
    return ExponentPair(Fraction(2 * n, n + 2), Fraction(2 * n, n - 2))


# ---------------------------------------------------------------------------
# decay order
# ---------------------------------------------------------------------------

def sigma_decay(d: Real, n: int):
    """Piecewise-linear decay order of the parametrix as a function of ``d = 1/p - 1/q``.

    Returns a Fraction when ``d`` is rational, a float otherwise.
    """
    if n < 3:
        raise DomainError(f"dimension must be >= 3, got {n}")
    d = _exact(d)
    if not 0 <= d <= 1:
        raise DomainError(f"d must lie in [0, 1], got {d}")
    one = Fraction(1) if isinstance(d, Fraction) else 1.0
    knee = Fraction(2, n + 1) if isinstance(d, Fraction) else 2.0 / (n + 1)
    if d <= knee:
        return -(n - 1) * d / 4 + one / 2
    return -n * d / 2 + one


def sigma_branches(d: Real, n: int):
    """Both affine branches evaluated at ``d`` (for continuity checks)."""
    d = _exact(d)
    one = Fraction(1) if isinstance(d, Fraction) else 1.0
    return -(n - 1) * d / 4 + one / 2, -n * d / 2 + one


# ---------------------------------------------------------------------------
# vertices of the exponent polygons in the (1/p, 1/q) plane
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegionVertexTable:
    n: int
    A: tuple
    B: tuple
    B_prime: tuple
    C: tuple
    C_prime: tuple
    D: tuple
    D_prime: tuple
    E: tuple
    E_prime: tuple
    F: tuple
    G: tuple

    def items(self):
        for name in ("A", "B", "B_prime", "C", "C_prime", "D", "D_prime", "E", "E_prime", "F", "G"):
            yield name, getattr(self, name)


def vertex_table(n: int) -> RegionVertexTable:
    """Closed-form vertices for dimension ``n`` as Fraction pairs ``(1/p, 1/q)``.

    ``E`` and ``G`` are the ``p = 2`` endpoints of the Carleson-Sjolin line
    ``1/q = (n-1)/(n+1) * 1/p'`` and of the duality line ``1/q = 1/p'``;
    ``E'`` is the dual of ``E``. ``F`` is the midpoint of ``[D, D']``.
    """
    if n < 3:
        raise DomainError(f"dimension must be >= 3, got {n}")
    h = Fraction(1, 2)
    m = Fraction(1, 2 * n)
    A = (Fraction(1), Fraction(0))
    B = (h + m, Fraction(0))
    B_prime = (Fraction(1), h - m)
    C = (h + m, h - 3 * m)
    C_prime = (h + 3 * m, h - m)
    D = (h + m, Fraction((n - 1) ** 2, 2 * n * (n + 1)))
    D_prime = (Fraction(n * n + 4 * n - 1, 2 * n * (n + 1)), h - m)
    E = (h, Fraction(n - 1, 2 * (n + 1)))
    E_prime = (1 - E[1], 1 - E[0])
    F = (h + Fraction(1, n + 1), h - Fraction(1, n + 1))
    G = (h, h)
    return RegionVertexTable(n, A, B, B_prime, C, C_prime, D, D_prime, E, E_prime, F, G)


def midpoint(a, b):
    return ((a[0] + b[0]) / 2, (a[1] + b[1]) / 2)


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

class Region(str, Enum):
    UNIFORM_TRAPEZIUM = "uniform_trapezium"
    DECAY_PENTAGON = "decay_pentagon"
    EDGE_UPPER = "edge_upper"
    EDGE_LOWER = "edge_lower"
    OUTSIDE = "outside"


def _ratio(num, den, exact):
    return Fraction(num, den) if exact else num / den


def _in_trapezium(a, b, n, exact):
    # uniform-in-z bound on the scaling line 1/p - 1/q + 2s/n = 2/n
    half = _ratio(1, 2, exact)
    d = a - b
    return (min(a - half, half - b) > _ratio(1, 2 * n, exact)
            and _ratio(2, n + 1, exact) < d <= _ratio(2, n, exact))


def _in_pentagon(a, b, n, exact):
    ap = 1 - a  # 1/p'
    lo = _ratio(n - 1, n + 1, exact)
    hi = _ratio(n + 1, n - 1, exact)
    return a - b < _ratio(2, n + 1, exact) and lo * ap <= b <= hi * ap


def _edge_trapezia(a, b, n, exact):
    half = _ratio(1, 2, exact)
    m = _ratio(1, 2 * n, exact)
    lo = _ratio(n - 1, n + 1, exact)
    hi = _ratio(n + 1, n - 1, exact)
    ap = 1 - a
    if a - b > _ratio(2, n, exact):
        return None
    if b <= lo * ap and a < half + m:
        return Region.EDGE_LOWER
    if b >= hi * ap and b > half - m:
        return Region.EDGE_UPPER
    return None


def classify_pair(p: Real, q: Real, n: int) -> Region:
    """Which bound from the parametrix theory covers ``(p, q)`` in dimension ``n``.

    Regions are tested in the order trapezium (uniform bound), pentagon
    (polynomial decay), then the two extra trapezia; the first match wins.
    Non-strict inequalities of the defining systems count boundary points as
    inside, strict ones as outside.
    """
    pair = ExponentPair(p, q)
    a, b = pair.inv_p, pair.inv_q
    exact = isinstance(a, Fraction) and isinstance(b, Fraction)
    if not exact:
        a, b = float(a), float(b)
    if _in_trapezium(a, b, n, exact):
        return Region.UNIFORM_TRAPEZIUM
    if _in_pentagon(a, b, n, exact):
        return Region.DECAY_PENTAGON
    extra = _edge_trapezia(a, b, n, exact)
    if extra is not None:
        return extra
    return Region.OUTSIDE


def classify_point(inv_p: Real, inv_q: Real, n: int) -> Region:
    """:func:`classify_pair` in ``(1/p, 1/q)`` coordinates."""
    inv_p, inv_q = _exact(inv_p), _exact(inv_q)
    p = math.inf if inv_p == 0 else 1 / inv_p
    q = math.inf if inv_q == 0 else 1 / inv_q
    return classify_pair(p, q, n)


def parametrix_decay_exponent(p: Real, q: Real, n: int):
    """Exponent of ``|z|`` in the pentagon bound, ``(n-1)/4 * d - 1/2``."""
    d = ExponentPair(p, q).gap
    exact = isinstance(d, Fraction)
    return _ratio(n - 1, 4, exact) * d - _ratio(1, 2, exact)


def remainder_exponent(p: Real, q: Real, n: int):
    """Exponent of ``|z|`` bounding the remainder ``S(z)`` from ``L^p`` to ``L^q``.

    Three regimes separated by the Carleson-Sjolin lines.
    """
    pair = ExponentPair(p, q)
    a, b = pair.inv_p, pair.inv_q
    exact = isinstance(a, Fraction) and isinstance(b, Fraction)
    if not exact:
        a, b = float(a), float(b)
    lo = _ratio(n - 1, n + 1, exact)
    ap = 1 - a
    quarter = _ratio(n - 1, 4, exact)
    if b <= lo * ap:
        return quarter - n * b / 2
    if b <= ap / lo:
        return quarter * (a - b)
    return quarter - n * ap / 2
