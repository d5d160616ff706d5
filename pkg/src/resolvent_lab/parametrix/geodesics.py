"""Geodesics, exponential map, shooting and the volume Jacobian on a chart."""
from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

from ..errors import BoundaryError, ConvergenceError, DomainError
from .chart import MetricChart

DEFAULT_STEPS = 64
DEFAULT_NODES = 33
_DIR_STEP = 1e-4


@dataclass
class GeodesicBatch:
    """End state of a batch of geodesics ``t -> x(t)``, ``t in [0, 1]``.

    ``jac[b]`` is ``dx(1)/dv`` for the initial velocity ``v``; ``path``
    holds positions at equally spaced times (``nodes`` of them).
    """

    x: np.ndarray
    velocity: np.ndarray
    jac: np.ndarray
    path: np.ndarray
    inside: np.ndarray


def _rhs(chart, x, p, X, W):
    """Geodesic equation with its variational system, fully batched."""
    n = x.shape[-1]
    # acceleration at x and at x +- delta * X_l / |X_l| for every column l
    norms = np.linalg.norm(X, axis=-2)                       # (B, n)
    safe = np.where(norms > 0, norms, 1.0)
    dirs = np.swapaxes(X / safe[:, None, :], -1, -2)         # (B, n_cols, n)
    pts = np.concatenate([x[:, None, :], x[:, None, :] + _DIR_STEP * dirs,
                          x[:, None, :] - _DIR_STEP * dirs], axis=1)
    pp = np.broadcast_to(p[:, None, :], pts.shape)
    acc_all = -chart.gamma_pq(pts, pp, pp)                   # (B, 1+2n, n)
    acc = acc_all[:, 0]
    dx_term = (acc_all[:, 1:1 + n] - acc_all[:, 1 + n:]) / (2 * _DIR_STEP) * norms[:, :, None]
    # d_p of the acceleration applied to each column of W
    cols = np.swapaxes(W, -1, -2)                            # (B, l, n)
    dp_term = -2 * chart.gamma_pq(np.broadcast_to(x[:, None, :], cols.shape),
                                  np.broadcast_to(p[:, None, :], cols.shape), cols)
    dW = np.swapaxes(dx_term + dp_term, -1, -2)
    return p, acc, W, dW


def _geodesic_rhs(chart, x, p):
    return p, -chart.gamma_pq(x, p, p)


def integrate(chart: MetricChart, y, v, steps: int = DEFAULT_STEPS,
              nodes: int = DEFAULT_NODES, variational: bool = True) -> GeodesicBatch:
    """RK4 for ``x'' = -Gamma(x')`` from ``x(0) = y``, ``x'(0) = v``.

    ``y`` and ``v`` broadcast to ``(B, n)``. The variational fields start at
    ``X(0) = 0``, ``X'(0) = I`` so that ``X(1) = D exp_y(v)``; with
    ``variational=False`` they are skipped and ``jac`` is None.
    """
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    n = chart.n
    y, v = np.broadcast_arrays(np.atleast_2d(y), np.atleast_2d(v))
    if y.shape[-1] != n:
        raise DomainError(f"points must have {n} coordinates")
    if (steps % (nodes - 1)) != 0:
        raise DomainError("steps must be a multiple of nodes - 1")
    B = y.shape[0]
    if chart.affine:
        t = np.linspace(0, 1, nodes)
        path = y[:, None, :] + t[None, :, None] * v[:, None, :]
        jac = np.broadcast_to(np.eye(n), (B, n, n)).copy() if variational else None
        # a segment lies in the box iff its endpoints do
        inside = chart.contains(y, 1e-9) & chart.contains(y + v, 1e-9)
        return GeodesicBatch(y + v, v.copy(), jac, path, inside)
    state = [y.copy(), v.copy()]
    if variational:
        state += [np.zeros((B, n, n)), np.broadcast_to(np.eye(n), (B, n, n)).copy()]

    def rhs(*s):
        return _rhs(chart, *s) if variational else _geodesic_rhs(chart, *s)

    h = 1.0 / steps
    stride = steps // (nodes - 1)
    path = np.empty((B, nodes, n))
    path[:, 0] = y
    for s in range(1, steps + 1):
        k1 = rhs(*state)
        k2 = rhs(*(a + 0.5 * h * b for a, b in zip(state, k1)))
        k3 = rhs(*(a + 0.5 * h * b for a, b in zip(state, k2)))
        k4 = rhs(*(a + h * b for a, b in zip(state, k3)))
        state = [a + h / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
                 for a, b1, b2, b3, b4 in zip(state, k1, k2, k3, k4)]
        if s % stride == 0:
            path[:, s // stride] = state[0]
    inside = np.all(chart.contains(path, slack=1e-9), axis=-1)
    jac = state[2] if variational else None
    return GeodesicBatch(state[0], state[1], jac, path, inside)


def _unit_check(chart, y, theta):
    speed = chart.norm(y, theta)
    if np.any(np.abs(speed - 1) > 1e-10):
        raise DomainError("theta must be a unit vector for g(y)")


def exp_map(chart: MetricChart, y, theta, r: float, steps: int = DEFAULT_STEPS):
    """``exp_y(r theta)`` for a ``g(y)``-unit vector ``theta``."""
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    _unit_check(chart, y, theta)
    out = integrate(chart, y, r * theta, steps=max(steps, 64))
    if not np.all(out.inside):
        raise BoundaryError("geodesic leaves the chart domain")
    return out.x[0] if y.ndim == 1 and theta.ndim == 1 else out.x


def speed_profile(chart: MetricChart, y, theta, r: float, checkpoints: int = 10,
                  steps: int = DEFAULT_STEPS):
    """``|x'(t)|_g / r`` at ``checkpoints`` times, equal to 1 for exact geodesics."""
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    _unit_check(chart, y, theta)
    ts = np.linspace(0, 1, checkpoints + 1)[1:]
    out = []
    for t in ts:
        seg = integrate(chart, y, r * theta * t, steps=steps)
        out.append(chart.norm(seg.x[0], seg.velocity[0]) / (r * t))
    return np.array(out)


@dataclass
class Shooting:
    """Solutions of ``exp_y(v) = x`` for a batch of pairs."""

    y: np.ndarray
    x: np.ndarray
    v: np.ndarray
    distance: np.ndarray
    jac: np.ndarray
    velocity: np.ndarray
    path: np.ndarray
    inside: np.ndarray
    iterations: int
    error: np.ndarray = field(repr=False, default=None)


def _fd_jacobian(chart, y, v, base, steps, nodes, eps=1e-6):
    """Forward-difference ``D exp_y(v)``; cheaper than the variational fields
    and accurate enough for Newton steps."""
    n = chart.n
    cols = []
    for l in range(n):
        e = np.zeros(n)
        e[l] = eps
        cols.append((integrate(chart, y, v + e, steps, nodes, variational=False).x - base) / eps)
    return np.stack(cols, axis=-1)


def shoot(chart: MetricChart, y, x, tol: float = 1e-10, max_iter: int = 50,
          steps: int = DEFAULT_STEPS, nodes: int = DEFAULT_NODES,
          strict: bool = True) -> Shooting:
    """Solve ``exp_y(v) = x`` by Newton's method started from ``v = x - y``.

    The Jacobian starts as a forward difference of ``exp_y`` and is kept
    current by Broyden updates; a final pass with the variational fields
    gives ``D exp_y`` at the solution. Pairs that fail raise
    :class:`ConvergenceError`, or come back as NaN when ``strict`` is False.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y, x = np.broadcast_arrays(y, x)
    y, x = y.copy(), x.copy()
    B, n = x.shape
    v = x - y
    if chart.affine:
        fin = integrate(chart, y, v, steps, nodes)
        return Shooting(y, x, v, chart.norm(y, v), fin.jac, fin.velocity, fin.path,
                        fin.inside, 0, np.zeros(B))
    cur = integrate(chart, y, v, steps, nodes, variational=False).x
    jac = _fd_jacobian(chart, y, v, cur, steps, nodes)
    err = np.linalg.norm(cur - x, axis=-1)
    failed = ~np.isfinite(err)
    it = 0
    while True:
        active = np.flatnonzero((err > tol) & ~failed)
        if active.size == 0:
            break
        if it >= max_iter:
            failed[active] = True
            break
        it += 1
        dv = -np.linalg.solve(jac[active], (cur[active] - x[active])[..., None])[..., 0]
        v[active] += dv
        with np.errstate(all="ignore"):
            # diverging iterates may overflow the metric; they are marked failed
            sub = integrate(chart, y[active], v[active], steps, nodes, variational=False)
        new_err = np.linalg.norm(sub.x - x[active], axis=-1)
        # Broyden update of the chord Jacobian
        df = sub.x - cur[active]
        corr = df - np.einsum("bij,bj->bi", jac[active], dv)
        den = np.maximum(np.sum(dv * dv, axis=-1), 1e-300)
        jac[active] += corr[:, :, None] * dv[:, None, :] / den[:, None, None]
        cur[active] = sub.x
        bad = ~np.isfinite(new_err) | (new_err > 1e3)
        failed[active[bad]] = True
        err[active] = new_err
    if strict and failed.any():
        raise ConvergenceError(f"shooting did not converge in {max_iter} Newton steps",
                               float(np.max(np.nan_to_num(err[failed], nan=np.inf))))
    v[failed] = 0.0
    fin = integrate(chart, y, v, steps, nodes)
    out = Shooting(y, x, v, chart.norm(y, v), fin.jac, fin.velocity, fin.path, fin.inside,
                   it, np.linalg.norm(fin.x - x, axis=-1))
    for arr in (out.v, out.distance, out.jac, out.velocity, out.path, out.error):
        arr[failed] = np.nan
    out.inside = out.inside & ~failed
    return out


def geodesic_distance(chart: MetricChart, x, y, **kw):
    """``d_g(x, y)`` by shooting from ``y``; scalar for single points."""
    sh = shoot(chart, y, x, **kw)
    if not np.all(sh.inside):
        raise BoundaryError("minimizing geodesic leaves the chart domain")
    d = sh.distance
    return float(d[0]) if np.ndim(x) == 1 and np.ndim(y) == 1 else d


def jacobian_density(chart: MetricChart, y, x, jac):
    """``J = sqrt(det g(x) / det g(y)) |det D exp_y|``, the density of ``dV_g``
    in ``g(y)``-orthonormal normal coordinates (``J = 1`` at ``x = y``)."""
    with np.errstate(invalid="ignore"):
        return chart.sqrt_det(x) / chart.sqrt_det(y) * np.abs(np.linalg.det(jac))


def volume_jacobian(chart: MetricChart, y, theta, r, steps: int = DEFAULT_STEPS):
    """``J(r, theta)`` at ``exp_y(r theta)``; ``r`` may be an array."""
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    _unit_check(chart, y, theta)
    r = np.asarray(r, dtype=float)
    out = integrate(chart, y, r.reshape(-1, 1) * theta, steps=steps)
    if not np.all(out.inside):
        raise BoundaryError("geodesic leaves the chart domain")
    J = jacobian_density(chart, np.broadcast_to(y, out.x.shape), out.x, out.jac)
    return float(J[0]) if r.ndim == 0 else J.reshape(r.shape)


def unit_directions(chart: MetricChart, y, count: int, seed: int = 0):
    """``g(y)``-unit directions: equally spaced angles for ``n = 2``, seeded
    Gaussian directions otherwise."""
    y = np.asarray(y, dtype=float)
    n = chart.n
    if n == 2:
        a = 2 * np.pi * np.arange(count) / count
        e = np.stack([np.cos(a), np.sin(a)], axis=-1)
    else:
        e = np.random.default_rng(seed).standard_normal((count, n))
    return e / chart.norm(y, e)[:, None]


@dataclass
class GeodesicPolarData:
    """Samples of ``exp_y(r theta)`` and ``J(r, theta)`` on a product grid.

    ``points`` has shape ``(len(theta), len(r), n)``. ``injectivity`` is the
    first sampled radius where ``J`` falls below 1e-3 or a ray leaves the
    chart (the largest radius if neither happens).
    """

    center: np.ndarray
    radii: np.ndarray
    theta: np.ndarray
    points: np.ndarray
    J: np.ndarray
    injectivity: float


def polar_data(chart: MetricChart, y, radii, theta=None, count: int = 16,
               steps: int = DEFAULT_STEPS) -> GeodesicPolarData:
    y = np.asarray(y, dtype=float)
    radii = np.asarray(radii, dtype=float)
    theta = unit_directions(chart, y, count) if theta is None else np.asarray(theta, dtype=float)
    v = (theta[:, None, :] * radii[None, :, None]).reshape(-1, chart.n)
    # rays past a conjugate point may run off to infinity in the chart
    with np.errstate(all="ignore"):
        out = integrate(chart, y, v, steps=steps)
        J = jacobian_density(chart, np.broadcast_to(y, out.x.shape), out.x, out.jac)
    J = J.reshape(len(theta), len(radii))
    ok = (J > 1e-3) & out.inside.reshape(J.shape)
    bad = ~np.all(ok, axis=0)
    inj = float(radii[np.argmax(bad)]) if bad.any() else float(radii[-1])
    return GeodesicPolarData(y, radii, theta, out.x.reshape(len(theta), len(radii), -1), J, inj)
