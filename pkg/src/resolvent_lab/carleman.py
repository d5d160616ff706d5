"""Carleman estimates on ``T x T^(n-1)`` with the limiting weight ``x_1``.

Axis 0 of every grid is the distinguished circle variable ``x_1`` with
frequency ``j``; the remaining axes carry ``T^(n-1)`` with eigenvalues
``lam_k = |k'|^2``. Multipliers that are not even in ``j`` zero the Nyquist
row ``j = -N_1/2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError
from .opnorm import NormEstimate, conjugate, duality_map, opnorm_power_iter
from .parametrix.kernel import psi0
from .torus import (
    GridField,
    TorusGrid,
    apply_symbol,
    cluster_mask,
    lattice_eigenvalues,
    lp_norm,
    lp_norm_values,
    spectral_laplacian,
)

TAU_0 = 4.0


def _check_tau(tau: float):
    if abs(tau) < 1:
        raise DomainError(f"|tau| must be >= 1 (the symbol may vanish), got {tau}")


def _j_and_lam(grid: TorusGrid):
    ks = grid.freqs()
    j = ks[0].astype(float)
    lam = np.zeros(grid.shape)
    for k in ks[1:]:
        lam = lam + k.astype(float) ** 2
    return j, lam


def _nyquist_j(grid: TorusGrid):
    return grid.nyquist_mask(axes=[0])


@dataclass(frozen=True)
class CarlemanSymbol:
    """``s1 = (j+1/2)^2 + 2 i tau (j+1/2) + lam - tau^2`` and the frozen
    ``s2 = (j+1/2)^2 + i (2^nu + 1) tau + lam - tau^2``."""

    tau: float

    def __post_init__(self):
        _check_tau(self.tau)

    def s1(self, j, lam):
        h = np.asarray(j, dtype=float) + 0.5
        return h * h + 2j * self.tau * h + np.asarray(lam, dtype=float) - self.tau**2

    def s2(self, j, lam, nu: int):
        h = np.asarray(j, dtype=float) + 0.5
        return h * h + 1j * (2.0**nu + 1) * self.tau + np.asarray(lam, dtype=float) - self.tau**2

    def on_grid(self, grid: TorusGrid):
        j, lam = _j_and_lam(grid)
        return self.s1(j, lam)


# ---------------------------------------------------------------------------
# conjugated operator and its inverse
# ---------------------------------------------------------------------------

def conjugated_apply(u: GridField, tau: float) -> GridField:
    """``-e^(tau x_1 - i x_1/2) P e^(-tau x_1 + i x_1/2) u`` as the multiplier ``s1``."""
    sym = CarlemanSymbol(tau).on_grid(u.grid)
    sym = np.where(_nyquist_j(u.grid), 0.0, sym)
    return u.with_values(apply_symbol(u.values, sym))


def conjugated_apply_direct(u: GridField, tau: float) -> GridField:
    """The same operator by pointwise weights around the spectral ``P = Delta``.

    Only meaningful for ``u`` vanishing near the seam ``x_1 = 0``, where the
    weight ``e^(-tau x_1 + i x_1/2)`` is not periodic.
    """
    _check_tau(tau)
    x1 = u.grid.coords()[0]
    phi = tau * x1 - 0.5j * x1
    v = u.with_values(np.exp(-phi) * u.values)
    return u.with_values(-np.exp(phi) * spectral_laplacian(v).values)


def g_tau_apply(f: GridField, tau: float) -> GridField:
    """``G_tau f = sum_jk pi_jk f / s1(j, k)``."""
    sym = CarlemanSymbol(tau).on_grid(f.grid)
    inv = np.where(_nyquist_j(f.grid), 0.0, 1.0 / sym)
    return f.with_values(apply_symbol(f.values, inv))


def g_tau_l2_norm(grid: TorusGrid, tau: float) -> float:
    """``1 / min |s1|`` over the frequencies represented on ``grid``."""
    sym = CarlemanSymbol(tau).on_grid(grid)
    return float(1.0 / np.abs(sym[~_nyquist_j(grid)]).min())


@dataclass(frozen=True)
class SymbolScan:
    """Exact minimum of ``|s1|`` over ``Z x spec(-Delta_(T^(n-1)))``.

    Points outside the scanned window satisfy ``|s1| >= outside``, which
    exceeds ``minimum``, so the scan is a certificate.
    """

    tau: float
    minimum: float
    j: int
    lam: float
    outside: float


def symbol_lower_bound(tau: float, n: int = 3) -> SymbolScan:
    _check_tau(tau)
    t = abs(tau)
    J = int(math.ceil(t)) + 1
    lam_cap = t * t + 2 * t * J
    lams, _ = lattice_eigenvalues(n - 1, lam_cap)
    sym = CarlemanSymbol(tau)
    js = np.arange(-J - 1, J + 1)
    vals = np.abs(sym.s1(js[:, None], lams[None, :]))
    i, k = np.unravel_index(int(np.argmin(vals)), vals.shape)
    # |Im s1| >= 2 t J once |j + 1/2| >= J; Re s1 >= lam - t^2 >= 2 t J once lam >= lam_cap
    outside = 2 * t * (J + 0.5) if lams.size == 0 else min(2 * t * (J + 0.5), lam_cap - t * t)
    return SymbolScan(float(tau), float(vals[i, k]), int(js[i]), float(lams[k]), float(outside))


def shifted_resolvent_apply(f: GridField, z: complex) -> GridField:
    """``R(z) f`` for ``(D_1 + 1/2)^2 - Delta_(T^(n-1)) + z``."""
    j, lam = _j_and_lam(f.grid)
    sym = (j + 0.5) ** 2 + lam + complex(z)
    inv = np.where(_nyquist_j(f.grid), 0.0, 1.0 / sym)
    return f.with_values(apply_symbol(f.values, inv))


def shift_parameter(tau: float, rho: float = 1.0) -> complex:
    """``z = -tau^2 + i rho tau``; the low block uses ``rho = 1``, block ``nu`` uses ``rho = 2^nu + 1``."""
    return complex(-tau * tau, rho * tau)


# ---------------------------------------------------------------------------
# Littlewood-Paley blocks in x_1
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LPBlockIndex:
    """Band ``j = 0`` for ``nu = 0`` and ``2^(nu-1) <= |j| < 2^nu`` otherwise."""

    nu: int

    def __post_init__(self):
        if self.nu < 0:
            raise DomainError("block index must be >= 0")

    @property
    def bounds(self):
        return (0, 1) if self.nu == 0 else (2 ** (self.nu - 1), 2**self.nu)

    def mask(self, j):
        lo, hi = self.bounds
        a = np.abs(np.asarray(j))
        return (a >= lo) & (a < hi)


def block_count(grid: TorusGrid) -> int:
    """Blocks needed to cover ``|j| <= N_1/2``."""
    return int(math.floor(math.log2(grid.N[0] // 2))) + 2


def littlewood_paley_blocks(u: GridField):
    """Sharp truncations ``u_nu`` in ``j``; they sum to ``u`` exactly."""
    j = u.grid.freqs()[0]
    coef = np.fft.fftn(u.values, norm="ortho")
    out = []
    for nu in range(block_count(u.grid)):
        m = np.broadcast_to(LPBlockIndex(nu).mask(j), u.grid.shape)
        out.append(u.with_values(np.fft.ifftn(np.where(m, coef, 0), norm="ortho")))
    return out


def square_function_ratio(u: GridField, p: float = 6.0, oversample: int = 1) -> float:
    """``||u||_p^2 / sum_nu ||u_nu||_p^2``."""
    blocks = littlewood_paley_blocks(u)
    den = sum(lp_norm(b, p, oversample) ** 2 for b in blocks)
    return lp_norm(u, p, oversample) ** 2 / den


# ---------------------------------------------------------------------------
# frozen-coefficient error
# ---------------------------------------------------------------------------

def _in_band(j, nu):
    j = np.asarray(j)
    return (j >= 2 ** (nu - 1)) & (j < 2**nu)


def a_coeff(j, lam, tau: float, nu: int):
    """``i tau (2^nu - 2j) 1_[2^(nu-1), 2^nu)(j) / (s1 s2)``.

    The magnitude equals ``|1/s2 - 1/s1|`` on the band; the sign is opposite
    to that difference (see :func:`a_coeff_difference`).
    """
    if nu < 1:
        raise DomainError("a_coeff needs nu >= 1")
    sym = CarlemanSymbol(tau)
    j = np.asarray(j)
    num = 1j * tau * (2.0**nu - 2 * j)
    val = num / (sym.s1(j, lam) * sym.s2(j, lam, nu))
    return np.where(_in_band(j, nu), val, 0.0)


def a_coeff_difference(j, lam, tau: float, nu: int):
    """``(1/s2 - 1/s1)`` on the band: the multiplier of ``R(-tau^2 + i(2^nu+1)tau) - G_tau``."""
    if nu < 1:
        raise DomainError("a_coeff needs nu >= 1")
    sym = CarlemanSymbol(tau)
    j = np.asarray(j)
    val = 1.0 / sym.s2(j, lam, nu) - 1.0 / sym.s1(j, lam)
    return np.where(_in_band(j, nu), val, 0.0)


def a_envelope(m2, tau: float, nu: int):
    """``2^nu |tau| / ((m^2 - tau^2)^2 + 4^(nu+1) tau^2)``."""
    return 2.0**nu * abs(tau) / ((np.asarray(m2, dtype=float) - tau**2) ** 2 + 4.0 ** (nu + 1) * tau**2)


@dataclass
class ErrorSum:
    tau: float
    nu: int
    m_max: int
    total: float
    per_shell: np.ndarray = field(repr=False)


def error_sum_bound(tau: float, nu: int, m_max: Optional[int] = None, n: int = 3) -> ErrorSum:
    """``sum_(m <= m_max) (1 + m) sup_(m <= sqrt(j^2 + lam_k) < m+1) |a_jk^nu(tau)|`` by lattice scan.

    ``m = isqrt(j^2 + lam)`` is exact since both are integers. ``m_max``
    defaults to ``ceil(4 |tau|)`` and may not be smaller.
    """
    _check_tau(tau)
    if nu < 1:
        raise DomainError("error_sum_bound needs nu >= 1")
    need = int(math.ceil(4 * abs(tau)))
    m_max = need if m_max is None else int(m_max)
    if m_max < need:
        raise DomainError(f"m_max must be >= 4|tau| = {need}")
    cap = (m_max + 1) ** 2
    lams, _ = lattice_eigenvalues(n - 1, cap)
    sup = np.zeros(m_max + 1)
    j = np.arange(2 ** (nu - 1), min(2**nu, m_max + 1))
    if j.size:
        jj, ll = np.meshgrid(j, lams.astype(np.int64), indexing="ij")
        m2 = jj * jj + ll
        keep = m2 < cap
        a = np.abs(a_coeff(jj[keep], ll[keep], tau, nu))
        shell = np.array([math.isqrt(int(v)) for v in m2[keep]], dtype=np.int64)
        np.maximum.at(sup, shell, a)
    weights = 1.0 + np.arange(m_max + 1)
    per = weights * sup
    return ErrorSum(float(tau), nu, m_max, float(per.sum()), per)


# ---------------------------------------------------------------------------
# spectral cluster probe
# ---------------------------------------------------------------------------

def cluster_exponents(n: int):
    """The two exponent pairs of the cluster estimates: ``(2, 2n/(n-2))`` and its dual."""
    if n < 3:
        raise DomainError("cluster estimates need n >= 3")
    return (2.0, 2.0 * n / (n - 2)), (2.0 * n / (n + 2), 2.0)


def cluster_norm_probe(grid: TorusGrid, m: int, p: float, q: float, seeds: int = 4,
                       seed: int = 0, oversample: int = 3) -> NormEstimate:
    """Lower bound of ``||chi_m||_{p->q}``; zero when the shell is empty on the grid.

    For ``p = 2`` the witness is a trigonometric polynomial and its ratio is
    re-measured on a grid refined by ``oversample`` (exact for ``L^q`` with
    even ``q`` once ``oversample * N > q (m + 1)``). The dual pair iterates
    with grid norms (kept in ``grid_value``) and reports the primal measured
    value: pairing ``f = |chi_m u|^(q'-2) chi_m u`` against ``u`` shows
    ``||chi_m f||_2 / ||f||_p >= ||chi_m u||_q' / ||u||_2``.
    """
    pairs = cluster_exponents(grid.n)
    if not any(math.isclose(p, a) and math.isclose(q, b) for a, b in pairs):
        raise DomainError(f"(p, q) must be one of {pairs}")
    mask = cluster_mask(grid, m).astype(float)
    if not mask.any():
        return NormEstimate(0.0, 0, 0.0, 0, None, [], 0.0)

    def apply(u):
        return apply_symbol(u.reshape(grid.shape), mask)

    # a constant (m = 0) or plane wave starts every run on the shell
    j = np.flatnonzero(mask.ravel())[0]
    starts = [np.fft.ifftn(np.eye(1, grid.size, j).reshape(grid.shape))]
    if p == 2.0:
        measure = None
        if oversample > 1:
            def measure(u):
                num = lp_norm(GridField(grid, apply(u)), q, oversample)
                return num / lp_norm(GridField(grid, u), 2.0, oversample)
        return opnorm_power_iter(apply, apply, p, q, shape=grid.shape, weight=grid.cell_volume,
                                 seeds=seeds, seed=seed, starts=starts, measure=measure)
    qd = conjugate(p)
    primal = cluster_norm_probe(grid, m, 2.0, qd, seeds, seed, oversample)
    # the dual iteration stalls for p < 2 unless started from the transferred witness
    starts.append(duality_map(apply(primal.witness), qd, grid.cell_volume))
    est = opnorm_power_iter(apply, apply, p, q, shape=grid.shape, weight=grid.cell_volume,
                            seeds=seeds, seed=seed, starts=starts)
    est.lower_bound = primal.lower_bound
    return est


# ---------------------------------------------------------------------------
# Carleman ratio
# ---------------------------------------------------------------------------

def seam_bump(grid: TorusGrid, center: float = math.pi, half_width: float = 2.0,
              transverse=None) -> GridField:
    """``psi_0((x_1 - center)/half_width) w(x')`` with ``w = exp(cos x_2 + ... )`` by default."""
    coords = grid.coords()
    b = psi0((coords[0] - center) / half_width)
    w = np.ones(grid.shape)
    for c in coords[1:]:
        w = w * np.exp(np.cos(c))
    if transverse is not None:
        w = transverse(*coords[1:])
    return GridField(grid, b * w)


def mode_field(grid: TorusGrid, j: int, k_index, center: float = math.pi,
               half_width: float = 2.0) -> GridField:
    """``psi_0((x_1 - center)/half_width) e^(i j x_1) e^(i k'.x')``."""
    coords = grid.coords()
    if len(k_index) != grid.n - 1:
        raise DomainError(f"k_index needs {grid.n - 1} entries")
    phase = j * coords[0]
    for c, k in zip(coords[1:], k_index):
        phase = phase + k * c
    return GridField(grid, psi0((coords[0] - center) / half_width) * np.exp(1j * phase))


def seam_clearance(grid: TorusGrid) -> float:
    return max(2 * grid.spacing[0], 0.1)


def check_seam(u: GridField, tol: float = 1e-14):
    x1 = u.grid.coords()[0]
    d = seam_clearance(u.grid)
    near = np.broadcast_to((x1 < d) | (x1 > 2 * math.pi - d), u.grid.shape)
    peak = np.abs(u.values).max()
    if peak == 0:
        raise DomainError("u vanishes identically")
    if np.abs(u.values[near]).max(initial=0.0) > tol * peak:
        raise DomainError("u must vanish near the x_1 seam")


@dataclass(frozen=True)
class CarlemanRatio:
    tau: float
    ratio: float
    num_norm: float
    den_norm: float


def _local_support(u: GridField, cells: int = 2):
    """Points where ``u`` is nonzero somewhere within ``cells`` steps along each axis."""
    nz = u.values != 0
    out = nz.copy()
    for axis in range(u.grid.n):
        for s in range(1, cells + 1):
            out |= np.roll(nz, s, axis) | np.roll(nz, -s, axis)
    return out


def carleman_ratio(u: GridField, tau: float, oversample: int = 1) -> CarlemanRatio:
    """``||e^(tau x_1) u||_(2n/(n-2)) / ||e^(tau x_1) P u||_(2n/(n+2))`` with ``P = Delta`` spectral.

    ``P`` is local, so ``P u`` is set to zero where ``u`` vanishes on a
    neighbourhood; otherwise the weight would amplify the FFT roundoff there.
    """
    if abs(tau) < TAU_0:
        raise DomainError(f"|tau| must be >= {TAU_0}, got {tau}")
    n = u.grid.n
    if n < 3:
        raise DomainError("Carleman ratio needs n >= 3")
    check_seam(u)
    x1 = u.grid.coords()[0]
    w = np.exp(tau * x1)
    pu = np.where(_local_support(u), spectral_laplacian(u).values, 0.0)
    qn, qd = 2.0 * n / (n - 2), 2.0 * n / (n + 2)
    num = lp_norm(u.with_values(w * u.values), qn, oversample)
    den = lp_norm(u.with_values(w * pu), qd, oversample)
    if den == 0:
        raise DomainError("P u vanishes; the ratio is undefined")
    return CarlemanRatio(float(tau), num / den, num, den)


def conjugated_ratio(v: GridField, tau: float) -> float:
    """``||v||_(2n/(n-2)) / ||s1(D) v||_(2n/(n+2))``.

    Equals :func:`carleman_ratio` of ``u = e^(-tau x_1 + i x_1/2) v`` when
    ``v`` vanishes near the seam, without forming the exponential weight.
    """
    n = v.grid.n
    if n < 3:
        raise DomainError("Carleman ratio needs n >= 3")
    qn, qd = 2.0 * n / (n - 2), 2.0 * n / (n + 2)
    return lp_norm(v, qn) / lp_norm(conjugated_apply(v, tau), qd)


def carleman_witness(grid: TorusGrid, tau: float, seeds: int = 4, seed: int = 0) -> NormEstimate:
    """Lower bound of ``||G_tau||_(2n/(n+2) -> 2n/(n-2))``.

    For ``u`` vanishing near the seam, ``v = e^(tau x_1 - i x_1/2) u`` has the
    same Carleman ratio as ``||v|| / ||s1(D) v||``, so this bound dominates
    every such ratio on the grid; its witness is ``v = G_tau f``.
    """
    n = grid.n
    p, q = 2.0 * n / (n + 2), 2.0 * n / (n - 2)
    sym = CarlemanSymbol(tau).on_grid(grid)
    inv = np.where(_nyquist_j(grid), 0.0, 1.0 / sym)

    def apply(f):
        return apply_symbol(f.reshape(grid.shape), inv)

    def adjoint(v):
        return apply_symbol(v.reshape(grid.shape), np.conj(inv))

    # start from the mode where |s1| is smallest
    k = int(np.argmin(np.where(inv == 0, np.inf, np.abs(sym)).ravel()))
    start = np.fft.ifftn(np.eye(1, grid.size, k).reshape(grid.shape))
    return opnorm_power_iter(apply, adjoint, p, q, shape=grid.shape, weight=grid.cell_volume,
                             seeds=seeds, seed=seed, starts=[start])


def weighted_lp(values, grid: TorusGrid, p: float) -> float:
    return lp_norm_values(values, grid.cell_volume, p)
