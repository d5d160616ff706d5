"""Grids on a chart, finite-difference Laplace-Beltrami, transport coefficients."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from ..errors import BoundaryError, DomainError
from ..bessel import order_for_dimension
from .chart import MetricChart, small_inv
from .geodesics import DEFAULT_NODES, DEFAULT_STEPS, jacobian_density, shoot


class ChartGrid:
    """Regular grid on a box (by default the chart box), endpoints included."""

    def __init__(self, chart: MetricChart, shape, lower=None, upper=None):
        n = chart.n
        shape = tuple(int(m) for m in np.broadcast_to(shape, (n,)))
        if min(shape) < 5:
            raise DomainError("chart grids need at least 5 points per axis")
        self.chart = chart
        self.shape = shape
        self.lower = np.asarray(chart.lower if lower is None else lower, dtype=float)
        self.upper = np.asarray(chart.upper if upper is None else upper, dtype=float)
        if not (np.all(chart.contains(self.lower, 1e-12))
                and np.all(chart.contains(self.upper, 1e-12))):
            raise BoundaryError("grid box must lie inside the chart")
        self.axes = [np.linspace(a, b, m) for a, b, m in zip(self.lower, self.upper, shape)]
        self.spacing = (self.upper - self.lower) / (np.asarray(shape) - 1)

    @property
    def n(self) -> int:
        return self.chart.n

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def points(self):
        """All grid points, ``(size, n)`` in C order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, self.n)

    def index_of(self, point):
        """Flat index of the grid point nearest to ``point``."""
        idx = np.rint((np.asarray(point) - self.lower) / self.spacing).astype(int)
        idx = np.clip(idx, 0, np.asarray(self.shape) - 1)
        return int(np.ravel_multi_index(tuple(idx), self.shape))

    def padded(self, cells: int) -> "ChartGrid":
        """Same spacing, extended by ``cells`` points on every side."""
        ext = cells * self.spacing
        return ChartGrid(self.chart, np.asarray(self.shape) + 2 * cells,
                         self.lower - ext, self.upper + ext)

    def crop(self, cells: int):
        """Index tuple selecting the original grid inside ``padded(cells)``."""
        return tuple(slice(cells, cells + m) for m in self.shape)

    def interior(self, margin: int):
        """Boolean mask of points at least ``margin`` cells from the edge."""
        mask = np.zeros(self.shape, dtype=bool)
        mask[tuple(slice(margin, m - margin) for m in self.shape)] = True
        return mask


def _shift(f, axis, k):
    """``f`` shifted by ``k`` cells along ``axis`` with NaN fill (no wraparound)."""
    out = np.full_like(f, np.nan)
    src = [slice(None)] * f.ndim
    dst = [slice(None)] * f.ndim
    if k > 0:
        src[axis], dst[axis] = slice(k, None), slice(None, -k)
    else:
        src[axis], dst[axis] = slice(None, k), slice(-k, None)
    out[tuple(dst)] = f[tuple(src)]
    return out


class GridLaplacian:
    """Second-order ``Delta_g f = |g|^-1/2 d_i(|g|^1/2 g^ij d_j f)`` on a chart grid.

    Diagonal terms use the flux form with coefficients at half cells, mixed
    terms nested central differences. Values within one cell of the edge are
    NaN. The operator acts on the trailing ``n`` axes.
    """

    def __init__(self, grid: ChartGrid):
        self.grid = grid
        chart, n, h = grid.chart, grid.n, grid.spacing
        pts = grid.points().reshape(grid.shape + (n,))
        g = chart.metric(pts)
        self.sqrt_g = np.sqrt(np.linalg.det(g))
        self.coef = self.sqrt_g[..., None, None] * small_inv(g)
        self.half = []
        for i in range(n):
            e = np.zeros(n)
            e[i] = 0.5 * h[i]
            gp, gm = chart.metric(pts + e), chart.metric(pts - e)
            ap = np.sqrt(np.linalg.det(gp)) * small_inv(gp)[..., i, i]
            am = np.sqrt(np.linalg.det(gm)) * small_inv(gm)[..., i, i]
            self.half.append((ap, am))
        self.mixed = [(i, j) for i in range(n) for j in range(n)
                      if i != j and np.any(np.abs(self.coef[..., i, j]) > 0)]

    def __call__(self, f):
        f = np.asarray(f)
        n, h = self.grid.n, self.grid.spacing
        ax = lambda i: f.ndim - n + i
        out = np.zeros(f.shape, dtype=np.result_type(f, float))
        for i in range(n):
            ap, am = self.half[i]
            fp, fm = _shift(f, ax(i), 1), _shift(f, ax(i), -1)
            out += (ap * (fp - f) - am * (f - fm)) / h[i] ** 2
        for i, j in self.mixed:
            flux = self.coef[..., i, j] * (_shift(f, ax(j), 1) - _shift(f, ax(j), -1)) / (2 * h[j])
            out += (_shift(flux, ax(i), 1) - _shift(flux, ax(i), -1)) / (2 * h[i])
        out /= self.sqrt_g
        edge = ~self.grid.interior(1)
        out[..., edge] = np.nan
        return out


def grid_gradient(grid: ChartGrid, f):
    """Central-difference coordinate gradient; last axis indexes ``d_i``."""
    f = np.asarray(f)
    n, h = grid.n, grid.spacing
    parts = []
    for i in range(n):
        a = f.ndim - n + i
        parts.append((_shift(f, a, 1) - _shift(f, a, -1)) / (2 * h[i]))
    return np.stack(parts, axis=-1)


def interpolate_local(grid: ChartGrid, values, points):
    """Tensor cubic Lagrange interpolation of grid values at ``points``.

    ``values`` has shape ``grid.shape``; NaN in the 4-point stencil gives NaN,
    as do points outside the grid box.
    """
    points = np.asarray(points, dtype=float)
    n = grid.n
    flat = points.reshape(-1, n)
    s = (flat - grid.lower) / grid.spacing
    dims = np.asarray(grid.shape)
    outside = ~np.all((s >= -1e-9) & (s <= dims - 1 + 1e-9), axis=-1)
    s = np.where(outside[:, None], 0.0, s)
    base = np.clip(np.floor(s).astype(int), 1, dims - 3)
    frac = s - base
    # Lagrange weights for nodes -1, 0, 1, 2
    t = frac[..., None]
    nodes = np.array([-1.0, 0.0, 1.0, 2.0])
    w = np.ones(frac.shape + (4,))
    for k in range(4):
        for m in range(4):
            if m != k:
                w[..., k] = w[..., k] * (t[..., 0] - nodes[m]) / (nodes[k] - nodes[m])
    out = np.zeros(flat.shape[0], dtype=np.result_type(values, float))
    for offs in np.ndindex(*(4,) * n):
        idx = tuple(base[:, a] + offs[a] - 1 for a in range(n))
        wt = np.prod([w[:, a, offs[a]] for a in range(n)], axis=0)
        out = out + wt * values[idx]
    out[outside] = np.nan
    return out.reshape(points.shape[:-1])


@dataclass
class TransportCoefficients:
    """``alpha_0 .. alpha_N`` for fixed centers ``y``, sampled in ``x`` on a grid.

    Arrays are indexed ``[center, *grid.shape]``; entries are NaN where the
    shooting failed, the pair is beyond ``radius`` or a finite-difference
    stencil left the grid. ``alpha_r`` holds the radial derivatives
    ``d_r alpha_nu`` (coordinate gradient along the unit geodesic tangent).
    """

    grid: ChartGrid
    centers: np.ndarray
    order: int
    distance: np.ndarray
    J: np.ndarray
    alpha: list
    lap_alpha: list
    radial: np.ndarray = field(repr=False)
    alpha_r: list = field(repr=False, default=None)

    def require_finite(self, mask):
        """Raise :class:`BoundaryError` if any coefficient is NaN where ``mask`` holds."""
        for nu, a in enumerate(self.alpha + self.lap_alpha[-1:]):
            if np.any(~np.isfinite(a[mask])):
                raise BoundaryError(f"transport data undefined on the requested support (level {nu});"
                                    " widen the grid or shrink the cutoff")


def transport_coefficients(grid: ChartGrid, centers, N=None, radius=None, pad=None,
                           steps: int = DEFAULT_STEPS, nodes: int = DEFAULT_NODES,
                           closed_form: bool = True) -> TransportCoefficients:
    """Solve the transport equations along minimizing geodesics.

    ``alpha_0 = J^-1/2`` and ``alpha_nu = alpha_0 int_0^1 t^(nu-1)
    (alpha_0^-1 Delta_g alpha_(nu-1))(gamma(t)) dt`` by Simpson's rule on the
    geodesic nodes, with the Laplacian from :class:`GridLaplacian` and cubic
    interpolation along the path. The work is done on the grid extended by
    ``pad`` cells (default ``3N + 2``, enough for every stencil) and cropped
    back, so a padded grid leaving the chart raises :class:`BoundaryError`;
    ``pad=0`` instead leaves NaN near the edge. ``radius`` skips pairs whose
    ``g(y)`` length of ``x - y`` exceeds it.

    For constant metrics with ``closed_form`` the exact values ``alpha_0 =
    1``, ``alpha_nu = 0`` and ``d = |x - y|_g`` are filled in directly.
    """
    chart = grid.chart
    n = chart.n
    N = order_for_dimension(n) if N is None else int(N)
    if N <= (n - 1) / 2:
        raise DomainError(f"order N={N} must exceed (n-1)/2 = {(n - 1) / 2}")
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if chart.affine and closed_form:
        return _affine_coefficients(grid, centers, N, radius)
    pad = 3 * N + 2 if pad is None else int(pad)
    work = grid.padded(pad) if pad else grid
    lap = GridLaplacian(work)
    cut = (slice(None),) + (grid.crop(pad) if pad else (slice(None),) * n)
    chunk = max(1, _PAIR_BUDGET // work.size)
    parts = [_solve_chunk(work, lap, centers[i:i + chunk], N, radius, steps, nodes, cut)
             for i in range(0, centers.shape[0], chunk)]
    joined = [np.concatenate(arrs) for arrs in zip(*[p[:3] for p in parts])]
    alphas = [np.concatenate([p[3][k] for p in parts]) for k in range(N + 1)]
    laps = [np.concatenate([p[4][k] for p in parts]) for k in range(N + 1)]
    grads = [np.concatenate([p[5][k] for p in parts]) for k in range(N + 1)]
    dist, J, radial = joined
    return TransportCoefficients(grid, centers, N, dist, J, alphas, laps, radial, grads)


def _affine_coefficients(grid, centers, N, radius):
    chart = grid.chart
    G = chart.metric(centers[0])
    diff = grid.points()[None, :, :] - centers[:, None, :]
    dist = np.sqrt(np.einsum("cpi,ij,cpj->cp", diff, G, diff))
    with np.errstate(invalid="ignore", divide="ignore"):
        radial = diff / dist[..., None]
    ok = np.ones_like(dist) if radius is None else np.where(dist <= radius, 1.0, np.nan)
    shape = (centers.shape[0],) + grid.shape
    dist = (dist * ok).reshape(shape)
    one = ok.reshape(shape)
    zero = 0.0 * one
    return TransportCoefficients(grid, centers, N, dist, one, [one] + [zero] * N,
                                 [zero] * (N + 1), radial.reshape(shape + (grid.n,)),
                                 [zero] * (N + 1))


_PAIR_BUDGET = 50_000


def _solve_chunk(work, lap, centers, N, radius, steps, nodes, cut):
    chart = work.chart
    n = chart.n
    C = centers.shape[0]
    pts = work.points()
    P = pts.shape[0]
    yy = np.repeat(centers, P, axis=0)
    xx = np.tile(pts, (C, 1))
    keep = np.ones(C * P, dtype=bool)
    if radius is not None:
        keep = chart.norm(yy, xx - yy) <= radius
    dist = np.full(C * P, np.nan)
    J = np.full(C * P, np.nan)
    radial = np.full((C * P, n), np.nan)
    path = None if chart.affine else np.full((C * P, nodes, n), np.nan)
    if keep.any():
        sh = shoot(chart, yy[keep], xx[keep], steps=steps, nodes=nodes, strict=False)
        dist[keep] = sh.distance
        J[keep] = jacobian_density(chart, yy[keep], xx[keep], sh.jac)
        with np.errstate(invalid="ignore", divide="ignore"):
            radial[keep] = sh.velocity / sh.distance[:, None]
        if path is not None:
            path[keep] = sh.path
    shape = (C,) + work.shape
    dist, J = dist.reshape(shape), J.reshape(shape)
    radial = radial.reshape(shape + (n,))
    if path is not None:
        path = path.reshape(shape + (nodes, n))
    alpha0 = J ** -0.5
    alphas, laps = [alpha0], []
    t = np.linspace(0.0, 1.0, nodes)
    for nu in range(1, N + 1):
        laps.append(lap(alphas[-1]))
        if chart.affine:
            # J = 1 and every Laplacian vanishes identically
            alphas.append(np.where(np.isfinite(alpha0), 0.0, np.nan))
            continue
        beta = laps[-1] / alpha0
        vals = np.stack([interpolate_local(work, beta[c], path[c]) for c in range(C)])
        alphas.append(alpha0 * simpson(t ** (nu - 1) * vals, x=t, axis=-1))
    laps.append(lap(alphas[-1]))
    # derivatives are taken before cropping so the grid edge keeps them
    grads = [np.sum(grid_gradient(work, a) * radial, axis=-1) for a in alphas]
    return (dist[cut], J[cut], radial[cut], [a[cut] for a in alphas],
            [a[cut] for a in laps], [g_[cut] for g_ in grads])
