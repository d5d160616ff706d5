"""Exact spectral calculus on flat tori ``(R / 2 pi Z)^n``.

Fields are sampled on uniform periodic grids. Transforms are unitary, so
Parseval holds with the plain Euclidean sum and every Fourier multiplier has
the conjugate symbol as adjoint for the ``h^n``-weighted inner product.
Integer frequencies are stored in FFT order and take values in
``[-N/2, N/2)``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import fft as sfft

from .errors import DomainError, SingularError
from .region import sqrt_principal


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid on ``T^n``; ``N`` may differ per axis."""

    n: int
    N: tuple

    def __init__(self, n: int, N):
        if isinstance(N, (int, np.integer)):
            N = (int(N),) * n
        N = tuple(int(v) for v in N)
        if len(N) != n:
            raise DomainError(f"expected {n} axis sizes, got {len(N)}")
        for v in N:
            if v < 8 or v % 2:
                raise DomainError(f"samples per axis must be even and >= 8, got {v}")
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "N", N)

    @property
    def shape(self) -> tuple:
        return self.N

    @property
    def spacing(self) -> tuple:
        return tuple(2 * math.pi / v for v in self.N)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return (2 * math.pi) ** self.n

    @property
    def size(self) -> int:
        return int(np.prod(self.N))

    def coords(self, sparse: bool = True):
        """Sample coordinates ``x_i = i h`` per axis, broadcastable."""
        axes = [np.arange(v) * (2 * math.pi / v) for v in self.N]
        return np.meshgrid(*axes, indexing="ij", sparse=sparse)

    def freqs(self):
        """Integer frequencies per axis in FFT order, broadcastable."""
        axes = [np.fft.fftfreq(v, 1.0 / v).astype(int) for v in self.N]
        return np.meshgrid(*axes, indexing="ij", sparse=True)

    def ksq(self):
        """``|k|^2`` on the represented lattice."""
        out = np.zeros(self.shape)
        for k in self.freqs():
            out = out + k.astype(float) ** 2
        return out

    def nyquist_mask(self, axes: Sequence[int] | None = None):
        """True on frequencies equal to ``-N/2`` along any of ``axes`` (default all)."""
        axes = range(self.n) if axes is None else axes
        mask = np.zeros(self.shape, dtype=bool)
        ks = self.freqs()
        for a in axes:
            mask = mask | (ks[a] == -self.N[a] // 2)
        return mask

    def refined(self, factor: int = 2) -> "TorusGrid":
        return TorusGrid(self.n, tuple(factor * v for v in self.N))


@dataclass(frozen=True)
class GridField:
    """Complex samples on a :class:`TorusGrid`; values are read-only."""

    grid: TorusGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.shape != self.grid.shape:
            if v.size == self.grid.size:
                v = v.reshape(self.grid.shape)
            else:
                raise DomainError(f"values of size {v.size} do not fit grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise DomainError("field has non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def with_values(self, values) -> "GridField":
        return GridField(self.grid, values)

    def __add__(self, other: "GridField") -> "GridField":
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "GridField") -> "GridField":
        return self.with_values(self.values - other.values)

    def __mul__(self, c) -> "GridField":
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    def inner(self, other: "GridField") -> complex:
        """``int u conj(v)`` by the Riemann sum."""
        return complex(np.vdot(other.values, self.values) * self.grid.cell_volume)


# ---------------------------------------------------------------------------
# transforms and multipliers
# ---------------------------------------------------------------------------

def fft(values):
    return sfft.fftn(values, norm="ortho")


def ifft(values):
    return sfft.ifftn(values, norm="ortho")


def fourier_forward(u: GridField) -> GridField:
    """Unitary DFT; the result is indexed by frequency in FFT order."""
    return u.with_values(fft(u.values))


def fourier_inverse(uh: GridField) -> GridField:
    return uh.with_values(ifft(uh.values))


def apply_symbol(values, symbol):
    return ifft(symbol * fft(values))


class FourierMultiplier:
    """Diagonal operator ``u -> F^-1 (symbol F u)`` on raw arrays."""

    def __init__(self, grid: TorusGrid, symbol):
        self.grid = grid
        self.symbol = np.broadcast_to(np.asarray(symbol, dtype=complex), grid.shape)

    def __call__(self, values):
        return apply_symbol(values, self.symbol)

    def adjoint(self, values):
        return apply_symbol(values, np.conj(self.symbol))

    def l2_norm(self) -> float:
        return float(np.abs(self.symbol).max())


def helmholtz_symbol(grid: TorusGrid, z: complex):
    return grid.ksq() + complex(z)


def helmholtz_apply(u: GridField, z: complex) -> GridField:
    """``(-Delta + z) u`` spectrally."""
    return u.with_values(apply_symbol(u.values, helmholtz_symbol(u.grid, z)))


def spectral_laplacian(u: GridField) -> GridField:
    return u.with_values(apply_symbol(u.values, -u.grid.ksq()))


def resolvent_symbol(grid: TorusGrid, z: complex, tol: float = 1e-12):
    sym = helmholtz_symbol(grid, z)
    gap = np.abs(sym).min()
    if gap <= tol:
        raise SingularError(f"z={z} lies within {gap:.3g} of minus an eigenvalue")
    return 1.0 / sym


def resolvent_apply(f: GridField, z: complex) -> GridField:
    """``(-Delta + z)^-1 f``; raises :class:`SingularError` near the spectrum."""
    return f.with_values(apply_symbol(f.values, resolvent_symbol(f.grid, z)))


def resolvent_operator(grid: TorusGrid, z: complex) -> FourierMultiplier:
    return FourierMultiplier(grid, resolvent_symbol(grid, z))


# ---------------------------------------------------------------------------
# exact L^2 resolvent norm on the full lattice
# ---------------------------------------------------------------------------

def lattice_eigenvalues(n: int, lam_max: float):
    """Distinct values of ``|k|^2 <= lam_max`` over ``k`` in ``Z^n``, with a witness ``k`` each."""
    kmax = int(math.isqrt(int(lam_max))) + 1
    rng = np.arange(0, kmax + 1)
    found = {}
    # nonnegative, nondecreasing representatives are enough for |k|^2
    for k in itertools.combinations_with_replacement(rng, n):
        lam = sum(int(c) * int(c) for c in k)
        if lam <= lam_max and lam not in found:
            found[lam] = tuple(int(c) for c in k)
    lams = sorted(found)
    return np.array(lams, dtype=float), [found[v] for v in lams]


@dataclass(frozen=True)
class LatticeScan:
    norm: float
    eigenvalue: float
    witness: tuple


def resolvent_l2_norm(n: int, z: complex) -> LatticeScan:
    """``||R(z)||_{2->2} = 1 / min_k |k|^2 + z|`` by an exact scan of ``Z^n``."""
    z = complex(z)
    # |lam + z| >= lam - |z|, so eigenvalues beyond 2|z| + 1 cannot win
    lam_max = 2 * abs(z) + 2
    lams, wit = lattice_eigenvalues(n, lam_max)
    dist = np.abs(lams + z)
    i = int(np.argmin(dist))
    if dist[i] <= 1e-12:
        raise SingularError(f"z={z} is minus an eigenvalue")
    return LatticeScan(1.0 / float(dist[i]), float(lams[i]), wit[i])


def improved_l2_bound(z: complex) -> float:
    """``|z|^-1/2 (Re sqrt z)^-1``."""
    z = complex(z)
    return abs(z) ** -0.5 / sqrt_principal(z).real


# ---------------------------------------------------------------------------
# projections
# ---------------------------------------------------------------------------

def cluster_mask(grid: TorusGrid, m: int):
    """Frequencies with ``m <= |k| < m + 1``."""
    if m < 0:
        raise DomainError("cluster index must be >= 0")
    ksq = grid.ksq()
    return (ksq >= m * m) & (ksq < (m + 1) * (m + 1))


def cluster_project(u: GridField, m: int) -> GridField:
    """Spectral cluster ``chi_m``: frequencies with ``m <= sqrt(j^2 + |k'|^2) < m + 1``.

    On ``T x T^(n-1)`` the product indexing coincides with ``|k|`` on ``T^n``.
    """
    return u.with_values(apply_symbol(u.values, cluster_mask(u.grid, m)))


def band_limit_project(u: GridField, M: int) -> GridField:
    """Frequencies with ``|k| < M + 1``."""
    return u.with_values(apply_symbol(u.values, u.grid.ksq() < (M + 1) ** 2))


def pi_jk_mask(grid: TorusGrid, j: int, k_index: Sequence[int]):
    ks = grid.freqs()
    k_index = tuple(k_index)
    if len(k_index) != grid.n - 1:
        raise DomainError(f"k_index needs {grid.n - 1} entries")
    mask = ks[0] == j
    for a, kk in enumerate(k_index, start=1):
        mask = mask & (ks[a] == kk)
    return np.broadcast_to(mask, grid.shape)


def pi_jk_project(u: GridField, j: int, k_index: Sequence[int]) -> GridField:
    """Projection onto ``exp(i j x_1) exp(i k.x')``; axis 0 is the distinguished factor."""
    return u.with_values(apply_symbol(u.values, pi_jk_mask(u.grid, j, k_index)))


# ---------------------------------------------------------------------------
# norms and interpolation
# ---------------------------------------------------------------------------

def interpolate(values, new_shape):
    """Trigonometric interpolation onto a finer grid by zero padding.

    A Nyquist coefficient is split evenly between ``+N/2`` and ``-N/2`` so
    that real fields stay real.
    """
    values = np.asarray(values)
    old = values.shape
    if tuple(new_shape) == old:
        return values.astype(complex)
    coef = sfft.fftn(values)
    for ax, (no, nn) in enumerate(zip(old, new_shape)):
        if nn < no:
            raise DomainError("interpolation only refines")
        if nn == no:
            continue
        half = no // 2
        shape = list(coef.shape)
        shape[ax] = nn
        out = np.zeros(shape, dtype=complex)
        sl = [slice(None)] * coef.ndim

        def take(s):
            t = list(sl)
            t[ax] = s
            return tuple(t)

        out[take(slice(0, half))] = coef[take(slice(0, half))]
        out[take(slice(nn - half + 1, nn))] = coef[take(slice(half + 1, no))]
        nyq = coef[take(slice(half, half + 1))]
        out[take(slice(half, half + 1))] = 0.5 * nyq
        out[take(slice(nn - half, nn - half + 1))] = 0.5 * nyq
        coef = out
    scale = np.prod(new_shape) / np.prod(old)
    return sfft.ifftn(coef) * scale


def lp_norm_values(values, cell_volume: float, p: float) -> float:
    a = np.abs(values)
    if math.isinf(p):
        return float(a.max())
    if p < 1:
        raise DomainError(f"p must be >= 1, got {p}")
    peak = a.max()
    if peak == 0:
        return 0.0
    return float(peak * (np.sum((a / peak) ** p) * cell_volume) ** (1.0 / p))


def lp_norm(u: GridField, p: float, oversample: int = 1) -> float:
    """``(h^n sum |u_i|^p)^(1/p)``, optionally on a trigonometrically refined grid."""
    vals = u.values
    grid = u.grid
    if oversample > 1:
        grid = grid.refined(oversample)
        vals = interpolate(vals, grid.shape)
    return lp_norm_values(vals, grid.cell_volume, p)


def random_band_limited(grid: TorusGrid, rng: np.random.Generator, kmax: float, real: bool = False) -> GridField:
    """Random field with Gaussian Fourier coefficients on ``|k| <= kmax``."""
    coef = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    coef = coef * (grid.ksq() <= kmax * kmax)
    vals = ifft(coef)
    if real:
        vals = vals.real
    return GridField(grid, vals)
