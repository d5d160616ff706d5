"""Parametrix kernel, cutoffs, dyadic pieces and the remainder ``S(z)``."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit

from ..bessel import FNuParams, f_nu, f_nu_dr
from ..errors import DomainError
from ..region import sqrt_principal
from .geodesics import DEFAULT_STEPS, shoot
from .transport import GridLaplacian, TransportCoefficients, interpolate_local

# ---------------------------------------------------------------------------
# smooth cutoffs
# ---------------------------------------------------------------------------


def _transition(s):
    """``u(s) = 1/(1-s) - 1/(s-1/2)`` and its first two derivatives on ``(1/2, 1)``."""
    a = 1.0 - s
    b = s - 0.5
    return 1 / a - 1 / b, 1 / a**2 + 1 / b**2, 2 / a**3 - 2 / b**3


def psi0_derivatives(r):
    """``psi_0`` with its first two derivatives.

    ``psi_0`` is even, equal to 1 on ``|r| <= 1/2``, 0 on ``|r| >= 1`` and
    ``1 / (1 + exp(u))`` in between, built from ``exp(-1/t)``. Derivatives
    are taken in ``|r|``.
    """
    s = np.abs(np.asarray(r, dtype=float))
    f = np.where(s <= 0.5, 1.0, 0.0)
    f1 = np.zeros_like(s)
    f2 = np.zeros_like(s)
    mid = (s > 0.5) & (s < 1.0)
    if np.any(mid):
        u, u1, u2 = _transition(s[mid])
        fm = expit(-u)
        g = fm * expit(u)                 # f (1 - f), underflows cleanly
        d1 = -g * u1
        d2 = -((1 - 2 * fm) * d1 * u1 + g * u2)
        f[mid], f1[mid], f2[mid] = fm, np.where(g > 0, d1, 0.0), np.where(g > 0, d2, 0.0)
    return f, f1, f2


def psi0(r):
    return psi0_derivatives(r)[0]


def psi(r):
    """``psi_0(r/2) - psi_0(r)``, supported in ``1/2 <= |r| <= 2``."""
    r = np.asarray(r, dtype=float)
    return psi0(r / 2) - psi0(r)


@dataclass(frozen=True)
class DyadicCutoffs:
    """Partition ``psi_0(r/2) + sum_{nu>=1} psi(2^-nu r) = 1``.

    Piece 0 carries ``psi_0 + psi = psi_0(./2)`` so that every piece
    ``nu >= 1`` is supported where ``2^(nu-1) <= |r| <= 2^(nu+1)``.
    """

    def piece(self, nu: int, r):
        r = np.asarray(r, dtype=float)
        if nu < 0:
            raise DomainError("dyadic index must be nonnegative")
        if nu == 0:
            return psi0(r / 2)
        return psi(r / 2.0**nu)

    def count(self, rmax: float) -> int:
        """Number of pieces that can be nonzero for ``|r| <= rmax``."""
        if rmax <= 1:
            return 1
        return int(math.floor(math.log2(rmax))) + 2

    def partition_sum(self, r, pieces: Optional[int] = None):
        r = np.asarray(r, dtype=float)
        K = self.count(float(np.max(np.abs(r)))) if pieces is None else pieces
        return sum(self.piece(nu, r) for nu in range(K))


# ---------------------------------------------------------------------------
# kernel assembly
# ---------------------------------------------------------------------------


def _radial_table(d, z, n, orders, derivative=False):
    """``F_nu(d)`` (and ``F_nu'(d)``) for each order, evaluated once per distinct ``d``."""
    flat = d.ravel()
    ok = np.isfinite(flat) & (flat > 0)
    uniq, inv = np.unique(np.round(flat[ok], 14), return_inverse=True)
    out = []
    for nu in orders:
        params = FNuParams(n, nu)
        vals = np.full(flat.shape, np.nan + 0j)
        if uniq.size:
            f = f_nu_dr(uniq, z, params) if derivative else f_nu(uniq, z, params)
            vals[ok] = np.atleast_1d(f)[inv]
        out.append(vals.reshape(d.shape))
    return out


def _gauss(m):
    x, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (x + 1), 0.5 * w


def cell_integral(n, spacing, metric, z, order, nodes: int = 8):
    """``int_cell F_nu(|w|_G, z) dw`` over the grid cell centered at 0.

    Each of the ``2n`` pyramids from the center to a face is mapped to a
    cube (Duffy), which cancels the ``|w|^(2-n)`` singularity. ``metric``
    is one matrix or a stack ``(K, n, n)``; the result has one entry per
    matrix.
    """
    G = np.asarray(metric, dtype=float).reshape(-1, n, n)
    h = np.asarray(spacing, dtype=float)
    t, wt = _gauss(nodes)
    u, wu = _gauss(nodes)
    u = u - 0.5
    params = FNuParams(n, order)
    total = np.zeros(G.shape[0], dtype=complex)
    for axis in range(n):
        others = [a for a in range(n) if a != axis]
        grids = np.meshgrid(*([u] * (n - 1)), indexing="ij")
        wgrid = np.prod(np.meshgrid(*([wu] * (n - 1)), indexing="ij"), axis=0).ravel()
        for sign in (-1.0, 1.0):
            face = np.zeros((wgrid.size, n))
            face[:, axis] = sign * h[axis] / 2
            for k, a in enumerate(others):
                face[:, a] = grids[k].ravel() * h[a]
            pts = t[:, None, None] * face[None]                     # (T, U, n)
            jac = t[:, None] ** (n - 1) * (h[axis] / 2) * np.prod(h[others])
            weights = wt[:, None] * wgrid[None, :] * jac
            r = np.sqrt(np.einsum("tui,kij,tuj->ktu", pts, G, pts))
            total += np.sum(weights * f_nu(r, z, params), axis=(1, 2))
    return total


@dataclass
class ParametrixKernel:
    """Sampled ``F(x, y, z) = sum alpha_nu F_nu(d_g(x, y), z)`` with cutoff and remainder.

    Arrays are ``[center, *grid.shape]`` like the transport data. ``F`` is
    NaN off the cutoff support and on the diagonal, which is excluded from
    the sampled kernel.
    """

    coeffs: TransportCoefficients
    z: complex
    rho: float
    chi: np.ndarray
    F: np.ndarray
    FN: np.ndarray
    S1: np.ndarray
    S2: np.ndarray
    diag: np.ndarray = field(repr=False)

    @property
    def grid(self):
        return self.coeffs.grid

    @property
    def distance(self):
        return self.coeffs.distance

    @property
    def kernel(self):
        """``chi F`` with zeros off the support and on the diagonal."""
        return np.where(self.chi > 0, np.nan_to_num(self.chi * self.F), 0.0)

    @property
    def H_N(self):
        """``chi (Delta_g alpha_N) F_N``; equal to ``-S_2``."""
        return -self.S2


def assemble_parametrix(coeffs: TransportCoefficients, z: complex, rho: float,
                        strict: bool = True) -> ParametrixKernel:
    """Evaluate the kernel, the cutoff ``chi = psi_0(d/rho)`` and ``S_1``, ``S_2``.

    ``S_1 = -2 <grad chi, grad F> - (Delta_g chi) F`` is written with radial
    derivatives, using ``Delta_g d = (n-1)/d + J'/J`` and ``J'/J = -2
    d_r alpha_0 / alpha_0``. ``S_2 = -chi (Delta_g alpha_N) F_N``. With
    ``strict`` a NaN coefficient inside the cutoff support raises
    :class:`BoundaryError`.
    """
    z = complex(z)
    sqrt_principal(z)
    if abs(z) < 1:
        raise DomainError("assemble_parametrix needs |z| >= 1")
    if rho <= 0:
        raise DomainError("cutoff radius must be positive")
    n, N = coeffs.grid.n, coeffs.order
    d = coeffs.distance
    chi, chi1, chi2 = psi0_derivatives(d / rho)
    chi = np.where(np.isfinite(d), chi, 0.0)
    support = chi > 0
    diag = d <= 1e-8 * float(np.min(coeffs.grid.spacing))
    if strict:
        coeffs.require_finite(support)
    inside = support & ~diag
    dd = np.where(inside, d, np.nan)
    Fs = _radial_table(dd, z, n, range(N + 1))
    dFs = _radial_table(dd, z, n, range(N + 1), derivative=True)
    F = sum(a * f for a, f in zip(coeffs.alpha, Fs))
    Fr = sum(ar * f + a * df for a, ar, f, df in zip(coeffs.alpha, coeffs.alpha_r, Fs, dFs))
    logJ_r = -2 * coeffs.alpha_r[0] / coeffs.alpha[0]
    ring = inside & (chi1 != 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        lap_chi = chi2 / rho**2 + chi1 / rho * ((n - 1) / dd + logJ_r)
        S1 = -2 * chi1 / rho * Fr - lap_chi * F
    S1 = np.where(ring, S1, 0.0)
    FN = Fs[N]
    S2 = np.where(inside, -chi * coeffs.lap_alpha[N] * FN, 0.0)
    if np.any(diag & support):
        # F_N is bounded at r = 0 for N > (n-2)/2; take its value at a tiny radius
        h = float(np.min(coeffs.grid.spacing))
        fn0 = complex(f_nu(1e-6 * h, z, FNuParams(n, N)))
        S2 = np.where(diag, -chi * coeffs.lap_alpha[N] * fn0, S2)
    S1 = np.nan_to_num(S1)
    S2 = np.nan_to_num(S2)
    F = np.where(inside, F, np.nan)
    return ParametrixKernel(coeffs, z, rho, chi, F, FN, S1, S2, diag)


def evaluate_kernel(coeffs: TransportCoefficients, z: complex, points, center: int = 0):
    """``F(x, y, z)`` at arbitrary ``points`` x for the center ``y = centers[center]``.

    Distances come from shooting, the coefficients from cubic interpolation
    of the grid samples. Returns ``(F, d)``.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    grid = coeffs.grid
    n = grid.n
    y = coeffs.centers[center]
    sh = shoot(grid.chart, y, points, steps=DEFAULT_STEPS)
    d = sh.distance
    F = np.zeros(points.shape[0], dtype=complex)
    for nu, a in enumerate(coeffs.alpha):
        F = F + interpolate_local(grid, a[center], points) * f_nu(d, z, FNuParams(n, nu))
    return F, d


# ---------------------------------------------------------------------------
# dyadic decomposition
# ---------------------------------------------------------------------------


@dataclass
class DyadicPiece:
    nu: int
    kernel: np.ndarray = field(repr=False)
    inner_radius: float
    nonzero: bool


def dyadic_decompose(pk: ParametrixKernel, cutoffs: DyadicCutoffs = DyadicCutoffs()):
    """``T_nu`` kernels ``chi psi_nu(|z|^1/2 d) F``, one per possibly nonzero piece."""
    if abs(pk.z) < 1:
        raise DomainError("dyadic decomposition needs |z| >= 1")
    s = math.sqrt(abs(pk.z))
    d = np.nan_to_num(pk.distance, nan=np.inf)
    full = pk.kernel
    dmax = float(np.max(d[pk.chi > 0])) if np.any(pk.chi > 0) else 0.0
    pieces = []
    for nu in range(cutoffs.count(s * max(dmax, 1e-300))):
        w = cutoffs.piece(nu, np.where(np.isfinite(d), s * d, 0.0))
        k = w * full
        pieces.append(DyadicPiece(nu, k, 0.0 if nu == 0 else 2.0 ** (nu - 1) / s,
                                  bool(np.any(k != 0))))
    return pieces


# ---------------------------------------------------------------------------
# operators on grid functions
# ---------------------------------------------------------------------------


def _require_all_centers(pk):
    grid = pk.grid
    if pk.coeffs.centers.shape[0] != grid.size or \
            not np.allclose(pk.coeffs.centers, grid.points()):
        raise DomainError("operator assembly needs every grid point as a center")


def operator_matrix(pk: ParametrixKernel, part: str = "T", transpose: bool = False):
    """Dense matrix ``A[x, y] = K(x, y) sqrt(det g(y)) h^n`` for ``part`` in
    ``{"T", "S1", "S2", "S"}``.

    The singular diagonal of ``T`` is replaced by the cell integral of the
    local model ``sum_nu alpha_nu(x, x) F_nu(|x - y|_g(x))``. With
    ``transpose`` the kernel ``K(y, x)`` is used, i.e. the transposed
    parametrix.
    """
    _require_all_centers(pk)
    grid = pk.grid
    M = grid.size
    if part == "T":
        K = pk.kernel
    elif part == "S1":
        K = pk.S1
    elif part == "S2":
        K = pk.S2
    elif part == "S":
        K = pk.S1 + pk.S2
    else:
        raise DomainError(f"unknown operator part {part!r}")
    K = K.reshape(M, M)                       # [center y, x]
    lap = GridLaplacian(grid)
    wy = lap.sqrt_g.ravel() * grid.cell_volume
    A = K if transpose else K.T               # rows x, columns y
    A = A * wy[None, :]
    if part == "T":
        A = A.astype(complex)
        idx = np.arange(M)
        A[idx, idx] = diagonal_correction(pk)
    return A


def diagonal_correction(pk: ParametrixKernel):
    """``sqrt(det g(x)) sum_nu alpha_nu(x, x) int_cell F_nu(|w|_g(x)) dw`` per grid point."""
    grid = pk.grid
    chart = grid.chart
    M = grid.size
    pts = grid.points()
    G = chart.metric(pts)
    idx = np.arange(M)
    out = np.zeros(M, dtype=complex)
    if chart.affine:
        base = [complex(cell_integral(grid.n, grid.spacing, G[0], pk.z, nu)[0])
                for nu in range(pk.coeffs.order + 1)]
        for nu, a in enumerate(pk.coeffs.alpha):
            out += a.reshape(M, M)[idx, idx] * base[nu]
    else:
        for nu, a in enumerate(pk.coeffs.alpha):
            out += a.reshape(M, M)[idx, idx] * cell_integral(grid.n, grid.spacing, G, pk.z, nu)
    return np.sqrt(np.linalg.det(G)) * out


def dirac_weights(pk: ParametrixKernel):
    """Diagonal of the Dirac term on the grid.

    The pullback of the Dirac mass is ``chi(y, y) det g(y)^-1/2 delta_y``;
    sampled as a grid delta of height ``h^-n`` and integrated against the
    weight ``sqrt(det g(y)) h^n`` it leaves ``chi(y, y)`` on the diagonal.
    """
    _require_all_centers(pk)
    M = pk.grid.size
    idx = np.arange(M)
    return pk.chi.reshape(M, M)[idx, idx]


@dataclass
class ResidualReport:
    """``(-Delta_g + z) T u - u`` against ``S u`` on interior grid points."""

    lhs: np.ndarray = field(repr=False)
    rhs: np.ndarray = field(repr=False)
    relative_l2: float
    resolution: float
    under_resolved: bool


def residual_apply(pk: ParametrixKernel, u) -> ResidualReport:
    """Check the parametrix identity ``(-Delta_g + z) T u = chi(x, x) u + S u`` on the grid.

    ``u`` (grid shaped) should vanish near the grid edge. ``resolution`` is
    ``h |z|^1/2``; values above 1 mean the oscillation of the kernel is not
    resolved and the comparison is flagged.
    """
    grid = pk.grid
    u = np.asarray(u)
    if u.shape != grid.shape:
        raise DomainError("u must be sampled on the kernel grid")
    T = operator_matrix(pk, "T")
    S = operator_matrix(pk, "S")
    w = (T @ u.ravel()).reshape(grid.shape)
    lap = GridLaplacian(grid)
    lhs = -lap(w) + pk.z * w - dirac_weights(pk).reshape(grid.shape) * u
    rhs = (S @ u.ravel()).reshape(grid.shape)
    mask = np.isfinite(lhs)
    err = np.linalg.norm((lhs - rhs)[mask])
    scale = max(np.linalg.norm(rhs[mask]), np.linalg.norm(u[mask]) * 1e-3, 1e-300)
    res = float(np.max(grid.spacing) * math.sqrt(abs(pk.z)))
    return ResidualReport(lhs, rhs, float(err / scale), res, res > 1.0)
