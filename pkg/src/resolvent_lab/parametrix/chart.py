"""Coordinate charts carrying a Riemannian metric."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..errors import DomainError

_DG_STEP = 1e-5


@dataclass(frozen=True)
class MetricChart:
    """Metric ``g_jk(x)`` on an axis-aligned box.

    ``g`` maps points of shape ``(..., n)`` to matrices ``(..., n, n)``. The
    optional ``dg`` returns ``(..., n, n, n)`` with ``dg[..., l, i, j] =
    d_l g_ij``; without it derivatives are central differences with step
    1e-5. ``affine`` marks constant metrics, whose geodesics are straight
    lines and are not integrated. ``bilinear(x, p, q)``, when given, returns
    ``Gamma^k_ij(x) p^i q^j`` directly and replaces the generic contraction.
    """

    n: int
    lower: tuple
    upper: tuple
    g: Callable
    dg: Optional[Callable] = None
    name: str = "chart"
    affine: bool = False
    bilinear: Optional[Callable] = None

    def __post_init__(self):
        lo = tuple(float(v) for v in np.broadcast_to(self.lower, (self.n,)))
        hi = tuple(float(v) for v in np.broadcast_to(self.upper, (self.n,)))
        if any(a >= b for a, b in zip(lo, hi)):
            raise DomainError("chart box must have positive extent")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    # -- metric data ------------------------------------------------------

    def metric(self, x):
        return self.g(np.asarray(x, dtype=float))

    def metric_derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.dg is not None:
            return self.dg(x)
        out = np.empty(x.shape[:-1] + (self.n, self.n, self.n))
        for l in range(self.n):
            e = np.zeros(self.n)
            e[l] = _DG_STEP
            out[..., l, :, :] = (self.g(x + e) - self.g(x - e)) / (2 * _DG_STEP)
        return out

    def christoffel(self, x):
        """``Gamma[..., k, i, j] = 1/2 g^kl (d_i g_lj + d_j g_li - d_l g_ij)``."""
        x = np.asarray(x, dtype=float)
        n = self.n
        ginv = small_inv(self.metric(x))
        d = self.metric_derivative(x)
        # lower-index symbol Gamma_lij
        low = 0.5 * (np.swapaxes(d, -3, -2) + np.moveaxis(d, -3, -1) - d)
        flat = ginv @ low.reshape(low.shape[:-3] + (n, n * n))
        return flat.reshape(low.shape)

    def gamma_pq(self, x, p, q):
        """``Gamma^k_ij(x) p^i q^j`` with broadcasting over leading axes."""
        if self.bilinear is not None:
            return self.bilinear(np.asarray(x, dtype=float), p, q)
        gam = self.christoffel(x)
        n = self.n
        pq = p[..., :, None] * q[..., None, :]
        pq = pq.reshape(pq.shape[:-2] + (n * n, 1))
        return (gam.reshape(gam.shape[:-2] + (n * n,)) @ pq)[..., 0]

    def sqrt_det(self, x):
        return np.sqrt(np.linalg.det(self.metric(x)))

    def norm(self, x, v):
        """``|v|_g(x)``."""
        return np.sqrt(np.einsum("...i,...ij,...j->...", v, self.metric(x), v))

    # -- geometry of the box -----------------------------------------------

    def contains(self, x, slack: float = 0.0):
        x = np.asarray(x, dtype=float)
        lo = np.asarray(self.lower) - slack
        hi = np.asarray(self.upper) + slack
        return np.all((x >= lo) & (x <= hi), axis=-1)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(np.subtract(self.upper, self.lower)))

    def check_positive(self, samples: int = 9) -> float:
        """Smallest metric eigenvalue on a probe grid; raises if not positive."""
        axes = [np.linspace(a, b, samples) for a, b in zip(self.lower, self.upper)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.n)
        g = self.metric(pts)
        if not np.allclose(g, np.swapaxes(g, -1, -2), atol=1e-12):
            raise DomainError("metric is not symmetric")
        lam = float(np.linalg.eigvalsh(g).min())
        if lam <= 0:
            raise DomainError(f"metric is not positive definite (min eigenvalue {lam})")
        return lam


def small_inv(a):
    """Batched inverse, by cofactors for 2 x 2 and 3 x 3 blocks."""
    n = a.shape[-1]
    if n == 2:
        det = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
        out = np.empty_like(a)
        out[..., 0, 0] = a[..., 1, 1]
        out[..., 1, 1] = a[..., 0, 0]
        out[..., 0, 1] = -a[..., 0, 1]
        out[..., 1, 0] = -a[..., 1, 0]
        return out / det[..., None, None]
    if n == 3:
        cof = np.empty_like(a)
        for i in range(3):
            for j in range(3):
                r = [k for k in range(3) if k != i]
                c = [k for k in range(3) if k != j]
                cof[..., j, i] = (-1) ** (i + j) * (a[..., r[0], c[0]] * a[..., r[1], c[1]]
                                                    - a[..., r[0], c[1]] * a[..., r[1], c[0]])
        det = np.sum(a[..., 0, :] * cof[..., :, 0], axis=-1)
        return cof / det[..., None, None]
    return np.linalg.inv(a)


# ---------------------------------------------------------------------------
# concrete charts
# ---------------------------------------------------------------------------

def _box(n, half_width):
    return (-half_width,) * n, (half_width,) * n


def flat_chart(n: int, half_width: float = 1.0) -> MetricChart:
    eye = np.eye(n)

    def g(x):
        return np.broadcast_to(eye, x.shape[:-1] + (n, n)).copy()

    def dg(x):
        return np.zeros(x.shape[:-1] + (n, n, n))

    lo, hi = _box(n, half_width)
    return MetricChart(n, lo, hi, g, dg, name="flat", affine=True)


def constant_chart(matrix, half_width: float = 1.0) -> MetricChart:
    """Constant metric, i.e. flat space in linear coordinates."""
    a = np.asarray(matrix, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise DomainError("metric matrix must be square")

    def g(x):
        return np.broadcast_to(a, x.shape[:-1] + (n, n)).copy()

    def dg(x):
        return np.zeros(x.shape[:-1] + (n, n, n))

    lo, hi = _box(n, half_width)
    chart = MetricChart(n, lo, hi, g, dg, name="constant", affine=True)
    chart.check_positive(2)
    return chart


def sphere_chart(n: int, half_width: float = 1.0) -> MetricChart:
    """Round unit sphere in stereographic coordinates, ``g = 4 (1+|x|^2)^-2 I``.

    The chart origin is a pole and ``d_g(0, x) = 2 arctan |x|``.
    """
    eye = np.eye(n)

    def g(x):
        phi = 4.0 / (1.0 + np.sum(x * x, axis=-1)) ** 2
        return phi[..., None, None] * eye

    def dg(x):
        s = 1.0 + np.sum(x * x, axis=-1)
        grad = -16.0 * x / s[..., None] ** 3
        return grad[..., :, None, None] * eye

    def bilinear(x, p, q):
        # conformal metric: Gamma(p, q) = (a.p) q + (a.q) p - (p.q) a, a = grad log(phi) / 2
        a = -2.0 * x / (1.0 + np.sum(x * x, axis=-1, keepdims=True))
        ap = np.sum(a * p, axis=-1, keepdims=True)
        aq = np.sum(a * q, axis=-1, keepdims=True)
        return ap * q + aq * p - np.sum(p * q, axis=-1, keepdims=True) * a

    lo, hi = _box(n, half_width)
    return MetricChart(n, lo, hi, g, dg, name="sphere", bilinear=bilinear)


def sphere_distance(x, y):
    """Great-circle distance between stereographic points ``x`` and ``y``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)

    def lift(p):
        s = np.sum(p * p, axis=-1, keepdims=True)
        return np.concatenate([2 * p, s - 1], axis=-1) / (1 + s)

    c = np.clip(np.sum(lift(x) * lift(y), axis=-1), -1.0, 1.0)
    # arccos loses accuracy for nearby points; use the chord instead
    chord = np.linalg.norm(lift(x) - lift(y), axis=-1)
    return np.where(c > 0.5, 2 * np.arcsin(chord / 2), np.arccos(c))


def perturbed_chart(n: int, eps: float = 0.2, half_width: float = 1.0) -> MetricChart:
    """``g = I + eps * diag(sin(x . w_i))``: deviation ``<= eps`` in operator norm.

    No analytic derivative is supplied, so Christoffel symbols come from
    central differences.
    """
    if not 0 <= eps < 1:
        raise DomainError("eps must lie in [0, 1)")
    w = np.array([[1.3 * (i + 1) if j == i else 0.7 for j in range(n)] for i in range(n)])

    def g(x):
        phase = np.sin(x @ w.T)
        out = np.zeros(x.shape[:-1] + (n, n))
        idx = np.arange(n)
        out[..., idx, idx] = 1.0 + eps * phase
        return out

    lo, hi = _box(n, half_width)
    return MetricChart(n, lo, hi, g, None, name="perturbed")


def load_constant_metric(path: str, half_width: float = 1.0) -> MetricChart:
    """Read an ``n x n`` whitespace-separated matrix and build a constant chart."""
    a = np.loadtxt(path, ndmin=2)
    return constant_chart(a, half_width)


def make_chart(kind: str, n: int, half_width: float = 1.0, path: Optional[str] = None) -> MetricChart:
    if kind == "flat":
        return flat_chart(n, half_width)
    if kind == "sphere":
        return sphere_chart(n, half_width)
    if kind == "perturbed":
        return perturbed_chart(n, half_width=half_width)
    if kind == "file":
        if path is None:
            raise DomainError("file metric needs a path")
        chart = load_constant_metric(path, half_width)
        if chart.n != n:
            raise DomainError(f"metric file has dimension {chart.n}, expected {n}")
        return chart
    raise DomainError(f"unknown metric kind {kind!r}")


def newton_constant(n: int) -> float:
    """``Gamma(n/2 - 1) / (4 pi^(n/2))``: the fundamental solution is this times ``r^(2-n)``."""
    return math.gamma(n / 2 - 1) / (4 * math.pi ** (n / 2))
