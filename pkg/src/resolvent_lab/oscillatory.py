"""Oscillatory integral operators ``T_lam u(x) = int e^(i lam phi(x, y)) a(x, y) u(y) dy``
and the decay of their ``L^p -> L^q`` norms in ``lam``."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import fft as sfft
from scipy.stats import linregress, t as student_t

from .errors import DomainError, ResolutionError
from .opnorm import conjugate, opnorm_power_iter
from .parametrix.kernel import psi0

DEFAULT_OVERSAMPLE = 8
_DENSE_LIMIT = 8192


def box_bump(x, lower, upper):
    """Product of ``psi_0((x_i - c_i) / w_i)`` over a box with center ``c`` and half-widths ``w``.

    Equal to 1 on the middle half of the box and 0 on its boundary.
    """
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    c = (lo + hi) / 2
    w = (hi - lo) / 2
    x = np.asarray(x, dtype=float)
    return np.prod(psi0((x - c) / w), axis=-1)


@dataclass(frozen=True)
class OscKernelSpec:
    """Phase, amplitude and ``lam`` ladder of an oscillatory integral operator.

    ``x_box`` and ``y_box`` are ``(lower, upper)`` pairs bounding the
    amplitude support in each variable; they must have equal side lengths
    so both variables share one grid spacing. Without ``amplitude`` the
    product ``box_bump(x) box_bump(y)`` is used. ``difference_phase``, when
    given, must satisfy ``phase(x, y) = difference_phase(x - y)``; together
    with the default amplitude it lets the operator act by FFT convolution.
    ``hessian`` is ``"full"`` for a nondegenerate mixed Hessian and
    ``"corank1"`` for phases like ``|x - y|``.
    """

    n: int
    phase: Callable
    x_box: tuple
    y_box: tuple
    ladder: tuple
    amplitude: Optional[Callable] = None
    difference_phase: Optional[Callable] = None
    hessian: str = "corank1"
    name: str = "custom"

    def __post_init__(self):
        boxes = []
        for box in (self.x_box, self.y_box):
            lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), (self.n,)) for b in box)
            if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(hi > lo)):
                raise DomainError("amplitude support boxes must be bounded with positive extent")
            boxes.append((tuple(lo), tuple(hi)))
        object.__setattr__(self, "x_box", boxes[0])
        object.__setattr__(self, "y_box", boxes[1])
        if not np.allclose(self.sides(self.x_box), self.sides(self.y_box), rtol=1e-12, atol=0):
            raise DomainError("x and y boxes must have equal side lengths")
        lad = tuple(float(v) for v in self.ladder)
        if any(v < 1 for v in lad) or any(b <= a for a, b in zip(lad, lad[1:])):
            raise DomainError("lambda ladder must be strictly increasing with entries >= 1")
        object.__setattr__(self, "ladder", lad)
        if self.hessian not in ("full", "corank1"):
            raise DomainError("hessian must be 'full' or 'corank1'")

    @staticmethod
    def sides(box):
        return np.subtract(box[1], box[0])

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.sides(self.x_box)))

    def translated(self, shift) -> "OscKernelSpec":
        """Both supports moved by ``shift``; the amplitude moves with them."""
        v = np.broadcast_to(np.asarray(shift, dtype=float), (self.n,))
        amp = self.amplitude
        if amp is not None:
            amp = (lambda a: lambda x, y: a(x - v, y - v))(amp)
        move = lambda box: (tuple(np.add(box[0], v)), tuple(np.add(box[1], v)))
        return OscKernelSpec(self.n, self.phase, move(self.x_box), move(self.y_box), self.ladder,
                             amp, self.difference_phase, self.hessian, self.name)


def distance_spec(n: int = 2, ladder=(32, 64, 128, 256), side: float = 1.0,
                  gap: float = 0.25) -> OscKernelSpec:
    """``phi = |x - y|`` on two cubes of side ``side`` separated by ``gap`` along ``x_1``."""
    lo = np.zeros(n)
    shift = np.zeros(n)
    shift[0] = side + gap
    phase = lambda x, y: np.linalg.norm(np.asarray(x) - np.asarray(y), axis=-1)
    diff = lambda w: np.sqrt(np.sum(np.asarray(w) ** 2, axis=-1))
    return OscKernelSpec(n, phase, (lo, lo + side), (lo + shift, lo + shift + side), ladder,
                         difference_phase=diff, hessian="corank1", name="distance")


def bilinear_spec(n: int = 1, ladder=(8, 16, 32, 64), side: float = 1.0) -> OscKernelSpec:
    """``phi = x . y`` on ``[0, side]^n`` in both variables (mixed Hessian the identity)."""
    lo = np.zeros(n)
    phase = lambda x, y: np.sum(np.asarray(x) * np.asarray(y), axis=-1)
    return OscKernelSpec(n, phase, (lo, lo + side), (lo, lo + side), ladder,
                         hessian="full", name="bilinear")


def make_spec(kind: str, n: Optional[int] = None, ladder=None) -> OscKernelSpec:
    if kind == "distance":
        kw = {} if ladder is None else {"ladder": ladder}
        return distance_spec(2 if n is None else n, **kw)
    if kind == "bilinear":
        kw = {} if ladder is None else {"ladder": ladder}
        return bilinear_spec(1 if n is None else n, **kw)
    raise DomainError(f"unknown phase {kind!r}")


# ---------------------------------------------------------------------------
# discretization
# ---------------------------------------------------------------------------

def required_points(spec: OscKernelSpec, lam: float, oversample: float = DEFAULT_OVERSAMPLE) -> int:
    """Points per axis needed for ``oversample`` samples per period: ``oversample lam diam / 2 pi``."""
    return max(4, math.ceil(oversample * lam * spec.diameter / (2 * math.pi)))


def _cell_centers(box, N):
    lo, hi = box
    axes = [a + (np.arange(N) + 0.5) * (b - a) / N for a, b in zip(lo, hi)]
    return axes, np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))


@dataclass
class OscOperator:
    """Matrix-free ``T_lam`` on cell-centered grids of the two boxes.

    ``apply`` maps samples on the y grid to the x grid including the
    quadrature weight ``h^n``; ``weight`` is the same ``h^n`` for norms.
    """

    spec: OscKernelSpec
    lam: float
    N: int
    weight: float
    apply: Callable = field(repr=False)
    adjoint: Callable = field(repr=False)
    method: str = "dense"
    _matrix: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def shape(self):
        return (self.N ** self.spec.n,)

    def matrix(self):
        """Kernel samples ``e^(i lam phi(x_i, y_j)) a(x_i, y_j)`` (without the weight)."""
        if self._matrix is None:
            self._matrix = _dense_kernel(self.spec, self.lam, self.N)
        return self._matrix


def _amplitude(spec, X, Y):
    if spec.amplitude is None:
        return box_bump(X, *spec.x_box)[:, None] * box_bump(Y, *spec.y_box)[None, :]
    return spec.amplitude(X[:, None, :], Y[None, :, :])


def _dense_kernel(spec, lam, N):
    if N ** spec.n > _DENSE_LIMIT:
        raise DomainError(f"dense kernel with {N ** spec.n} points per side exceeds {_DENSE_LIMIT}")
    _, X = _cell_centers(spec.x_box, N)
    _, Y = _cell_centers(spec.y_box, N)
    ph = spec.phase(X[:, None, :], Y[None, :, :])
    return np.exp(1j * lam * ph) * _amplitude(spec, X, Y)


def build_osc_operator(spec: OscKernelSpec, lam: float, N: Optional[int] = None,
                       oversample: float = DEFAULT_OVERSAMPLE) -> OscOperator:
    """Discretize ``T_lam`` with ``N`` cell-centered points per axis.

    ``N`` defaults to :func:`required_points`; a smaller ``N`` raises
    :class:`ResolutionError` carrying the required value. Difference phases
    with the default amplitude are applied by FFT convolution, everything
    else by a dense kernel table.
    """
    if lam < 0:
        raise DomainError("lambda must be nonnegative")
    need = required_points(spec, lam, oversample)
    N = need if N is None else int(N)
    if N < need:
        raise ResolutionError(f"N={N} does not resolve lambda={lam}; need N >= {need}", required_N=need)
    n = spec.n
    h = spec.sides(spec.x_box) / N
    w = float(np.prod(h))
    if spec.difference_phase is not None and spec.amplitude is None:
        apply, adjoint = _convolution_pair(spec, lam, N, h, w)
        return OscOperator(spec, lam, N, w, apply, adjoint, "fft")
    A = _dense_kernel(spec, lam, N)
    Ah = A.conj().T
    return OscOperator(spec, lam, N, w, lambda u: w * (A @ u), lambda v: w * (Ah @ v),
                       "dense", A)


def _convolution_pair(spec, lam, N, h, w):
    n = spec.n
    shape = (N,) * n
    xaxes, _ = _cell_centers(spec.x_box, N)
    yaxes, _ = _cell_centers(spec.y_box, N)
    bx = box_bump(np.stack(np.meshgrid(*xaxes, indexing="ij"), -1), *spec.x_box)
    by = box_bump(np.stack(np.meshgrid(*yaxes, indexing="ij"), -1), *spec.y_box)
    # x_i - y_j = (x_0 - y_0) + (i - j) h, offsets i - j in [-(N-1), N-1]
    base = np.array([xa[0] - ya[0] for xa, ya in zip(xaxes, yaxes)])
    offs = [base[k] + np.arange(-(N - 1), N) * h[k] for k in range(n)]
    W = np.stack(np.meshgrid(*offs, indexing="ij"), axis=-1)
    K = np.exp(1j * lam * spec.difference_phase(W))
    # circular convolution of length >= 2N - 1 leaves the needed block unaliased
    full = [sfft.next_fast_len(2 * N - 1) for _ in range(n)]
    Kf = sfft.fftn(K, full)
    Kcf = sfft.fftn(np.conj(K[(slice(None, None, -1),) * n]), full)
    keep = tuple(slice(N - 1, 2 * N - 1) for _ in range(n))

    def conv(kf, v):
        return sfft.ifftn(kf * sfft.fftn(v, full))[keep]

    def apply(u):
        return w * (bx * conv(Kf, by * u.reshape(shape))).ravel()

    def adjoint(v):
        return w * (by * conv(Kcf, bx * v.reshape(shape))).ravel()

    return apply, adjoint


# ---------------------------------------------------------------------------
# norms and decay fits
# ---------------------------------------------------------------------------

@dataclass
class OscNorm:
    lam: float
    lower_bound: float
    iterations: int
    N: int


def osc_norm(op: OscOperator, p: float, q: float, seeds: int = 2, seed: int = 0,
             rtol: float = 1e-6) -> OscNorm:
    """Lower bound of ``||T_lam||_{L^p -> L^q}``; exact for ``p = 1, q = inf``."""
    if p == 1 and q == math.inf:
        return OscNorm(op.lam, float(np.max(np.abs(op.matrix()))), 0, op.N)
    est = opnorm_power_iter(op.apply, op.adjoint, p, q, shape=op.shape, weight=op.weight,
                            seeds=seeds, seed=seed, rtol=rtol)
    return OscNorm(op.lam, est.lower_bound, est.iterations, op.N)


def predicted_slope(spec: OscKernelSpec, p: float, q: float) -> tuple:
    """``(regime, slope)`` of the norm decay for an admissible exponent pair.

    Duality line ``q = p'``: ``-n/p'`` for a nondegenerate Hessian, ``-(n-1)/p'``
    for corank one (``-(n-1)/2`` at ``p = q = 2``). Curvature line ``q = (n+1)
    p'/(n-1)`` for corank-one phases: ``-n/q``.
    """
    n = spec.n
    pd = conjugate(p)
    if not (1 <= p <= 2):
        raise DomainError(f"p must lie in [1, 2], got {p}")
    if math.isclose(q, pd, rel_tol=1e-12):
        rank = n if spec.hessian == "full" else n - 1
        return "duality", -rank / pd
    if spec.hessian == "corank1" and n >= 2 and math.isclose(q, (n + 1) * pd / (n - 1), rel_tol=1e-12):
        return "curvature", -n / q
    raise DomainError(f"exponent pair ({p}, {q}) is not admissible for a {spec.hessian} phase in n={n}")


@dataclass
class DecayFit:
    """Least-squares slope of ``log norm`` against ``log lam``.

    ``halfwidth`` is the 95% confidence half-width of the slope. ``monotone``
    is False when a norm exceeds its predecessor by more than ``1e-3``
    relative; ``rejected`` is True when some norm vanishes, in which case no
    slope is fitted.
    """

    p: float
    q: float
    regime: str
    theory: float
    norms: list
    slope: float = math.nan
    halfwidth: float = math.nan
    monotone: bool = True
    rejected: bool = False

    @property
    def lambdas(self):
        return [r.lam for r in self.norms]

    def table(self):
        return [(r.lam, r.lower_bound, r.iterations) for r in self.norms]


def decay_fit(spec: OscKernelSpec, p: float, q: float, seeds: int = 2, seed: int = 0,
              oversample: float = DEFAULT_OVERSAMPLE, rtol: float = 1e-5) -> DecayFit:
    if len(spec.ladder) < 4:
        raise DomainError("a decay fit needs at least 4 ladder points")
    regime, theory = predicted_slope(spec, p, q)
    norms = [osc_norm(build_osc_operator(spec, lam, oversample=oversample), p, q, seeds, seed, rtol)
             for lam in spec.ladder]
    fit = DecayFit(p, q, regime, theory, norms)
    vals = np.array([r.lower_bound for r in norms])
    if np.any(vals <= 0):
        fit.rejected = True
        return fit
    fit.monotone = bool(np.all(vals[1:] <= vals[:-1] * (1 + 1e-3)))
    if not fit.monotone:
        warnings.warn("norm sequence is not nonincreasing along the ladder", RuntimeWarning)
    reg = linregress(np.log(spec.ladder), np.log(vals))
    fit.slope = float(reg.slope)
    fit.halfwidth = float(student_t.ppf(0.975, len(vals) - 2) * reg.stderr)
    return fit
