"""Lower bounds for ``L^p -> L^q`` operator norms.

Operators are callables on arrays. Norms carry a constant quadrature weight
(``h^n`` for grid fields, 1 for plain matrices) and adjoints are taken with
respect to the matching weighted inner product.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize

from .errors import DomainError, NumericalError

Operator = Callable[[np.ndarray], np.ndarray]


def weighted_norm(v, r: float, weight: float = 1.0) -> float:
    a = np.abs(v)
    if math.isinf(r):
        return float(a.max())
    peak = a.max()
    if peak == 0:
        return 0.0
    return float(peak * (weight * np.sum((a / peak) ** r)) ** (1.0 / r))


def duality_map(v, r: float, weight: float = 1.0):
    """``J_r(v) = |v|^(r-2) v / ||v||_r^(r-1)``.

    ``<v, J_r v> = ||v||_r`` and ``||J_r v||_{r'} = 1`` for the weighted
    pairing. Computed on ``v / max|v|`` so that large exponents do not
    overflow.
    """
    a = np.abs(v)
    peak = a.max()
    if peak == 0:
        return np.zeros_like(v)
    s = a / peak
    # entries below 1e-300 of the peak carry weight s^(r-1) < 1e-60 and
    # would overflow the complex division, so their phase is dropped
    phase = np.divide(v, a, out=np.zeros_like(v), where=s > 1e-300)
    norm = (weight * np.sum(s**r)) ** (1.0 / r)
    return s ** (r - 1) * phase / norm ** (r - 1)


def conjugate(r: float) -> float:
    if r == 1:
        return math.inf
    if math.isinf(r):
        return 1.0
    return r / (r - 1)


@dataclass
class NormEstimate:
    """Certified lower bound with its witness and iteration diagnostics."""

    lower_bound: float
    iterations: int
    residual: float
    seed_count: int
    witness: Optional[np.ndarray] = field(default=None, repr=False)
    history: list = field(default_factory=list, repr=False)
    grid_value: float = float("nan")


def _random_start(shape, rng, real):
    v = rng.standard_normal(shape)
    if not real:
        v = v + 1j * rng.standard_normal(shape)
    return v


def _run_seed(apply, apply_adjoint, u, p, q, weight, iters, rtol, patience):
    pd = conjugate(p)
    un = weighted_norm(u, p, weight)
    if un == 0 or not np.isfinite(un):
        return None
    u = u / un
    best, best_u = -1.0, u
    history = []
    prev = None
    calm = 0
    it = 0
    resid = float("inf")
    for it in range(1, iters + 1):
        v = apply(u)
        val = weighted_norm(v, q, weight)
        if not np.isfinite(val):
            raise NumericalError("non-finite value in power iteration")
        history.append(val)
        if val > best:
            best, best_u = val, u
        if prev is not None:
            resid = abs(val - prev) / max(val, 1e-300)
            calm = calm + 1 if resid < rtol else 0
            if calm >= patience:
                break
        prev = val
        if val == 0:
            break
        s = apply_adjoint(duality_map(v, q, weight))
        if not np.all(np.isfinite(s)):
            raise NumericalError("non-finite adjoint image in power iteration")
        if np.abs(s).max() == 0:
            break
        u = duality_map(s, pd, weight)
    return best, best_u, it, resid, history


def opnorm_power_iter(apply: Operator, apply_adjoint: Operator, p: float, q: float, *,
                      shape, weight: float = 1.0, seeds: int = 4, iters: int = 500,
                      seed=0, starts=None, real: bool = False, rtol: float = 1e-6,
                      patience: int = 3, measure: Optional[Callable[[np.ndarray], float]] = None
                      ) -> NormEstimate:
    """Nonlinear power iteration ``u <- J_p'(T* J_q(T u))`` over several starts.

    Each seed draws a Gaussian start from ``SeedSequence(seed).spawn(seeds)``
    (so adding seeds keeps the earlier ones), and ``starts`` adds explicit
    initial fields. The result is the best ratio ``||T u||_q / ||u||_p`` seen,
    which is a lower bound of the discrete norm. When ``measure`` is given
    the best witness is re-evaluated with it (for instance on a refined grid)
    and that value is reported, with the grid value kept in ``grid_value``.
    """
    if not (1 < p <= 2 <= q < math.inf):
        raise DomainError(f"power iteration needs 1 < p <= 2 <= q < inf, got p={p}, q={q}")
    inits = [np.asarray(s) for s in (starts or [])]
    for child in np.random.SeedSequence(seed).spawn(seeds):
        inits.append(_random_start(shape, np.random.default_rng(child), real))
    best = NormEstimate(0.0, 0, float("inf"), 0)
    used = 0
    for u0 in inits:
        out = _run_seed(apply, apply_adjoint, u0, p, q, weight, iters, rtol, patience)
        if out is None:
            continue
        used += 1
        val, u, it, resid, hist = out
        if val > best.lower_bound or best.witness is None:
            best = NormEstimate(val, it, resid, 0, u, hist)
    best.seed_count = used
    best.grid_value = best.lower_bound
    if measure is not None and best.witness is not None:
        best.lower_bound = float(measure(best.witness))
    return best


def matrix_operator(a, weight: float = 1.0):
    """``(apply, adjoint)`` for the quadrature operator ``u -> weight * A u``."""
    a = np.asarray(a)
    ah = a.conj().T

    def apply(u):
        return weight * (a @ u)

    def adjoint(v):
        return weight * (ah @ v)

    return apply, adjoint


def dense_opnorm_oracle(matrix, p: float, q: float, *, starts: int = 64, seed: int = 0,
                        real: bool = False, iters: int = 300, polish: int = 6) -> float:
    """``max ||A v||_q / ||v||_p`` for a small matrix with counting-measure norms.

    Exact for ``p = q = 2`` (largest singular value), ``p = 1`` (largest
    column ``q``-norm) and ``q = inf`` (largest row ``p'``-norm); otherwise
    projected gradient ascent on the unit ``p``-sphere from ``starts``
    random starts run side by side, with a per-start adaptive step, and the
    best few finished by L-BFGS.
    """
    a = np.asarray(matrix)
    if a.ndim != 2 or max(a.shape) > 32:
        raise DomainError("dense oracle is limited to 32 x 32 matrices")
    if p == 2 and q == 2:
        return float(np.linalg.svd(a, compute_uv=False)[0])
    if p == 1:
        return max(weighted_norm(a[:, j], q) for j in range(a.shape[1]))
    if math.isinf(q):
        return max(weighted_norm(a[i, :], conjugate(p)) for i in range(a.shape[0]))
    ah = a.conj().T
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((a.shape[1], starts))
    if not real:
        v = v + 1j * rng.standard_normal(v.shape)

    def colnorm(x, r):
        s = np.abs(x)
        peak = s.max(axis=0)
        return peak * np.sum((s / peak) ** r, axis=0) ** (1.0 / r)

    def colduality(x, r):
        s = np.abs(x)
        peak = s.max(axis=0)
        t = s / peak
        phase = np.divide(x, s, out=np.zeros_like(x), where=s > 0)
        return t ** (r - 1) * phase / np.sum(t**r, axis=0) ** ((r - 1) / r)

    def ratio(x):
        return colnorm(a @ x, q)

    v = v / colnorm(v, p)
    f = ratio(v)
    step = np.full(starts, 0.1)
    for _ in range(iters):
        w = a @ v
        # gradient of ||A v||_q on the sphere ||v||_p = 1, as a complex field
        g = ah @ colduality(w, q)
        g = g - f * colduality(v, p)
        if real:
            g = g.real
        cand = v + step * g
        cand = cand / colnorm(cand, p)
        fc = ratio(cand)
        up = fc >= f
        v = np.where(up, cand, v)
        f = np.where(up, fc, f)
        step = np.where(up, step * 1.5, step * 0.5)
        if np.all(step < 1e-14):
            break
    # quasi-Newton polish of the leading starts
    m = a.shape[1]

    def pack(x):
        return x.real if real else np.concatenate([x.real, x.imag])

    def unpack(x):
        return x if real else x[:m] + 1j * x[m:]

    def neg_ratio(x):
        u = unpack(x)[:, None]
        nu = colnorm(u, p)
        w = a @ u
        nw = colnorm(w, q)
        grad = ah @ colduality(w, q) / nu - nw * colduality(u, p) / nu**2
        return -float(nw[0] / nu[0]), -pack(grad[:, 0])

    best = float(f.max())
    for i in np.argsort(f)[::-1][:polish]:
        res = optimize.minimize(neg_ratio, pack(v[:, i]), jac=True, method="L-BFGS-B",
                                options={"maxiter": 1000, "gtol": 1e-12, "ftol": 1e-15})
        best = max(best, -float(res.fun))
    return best


def duality_check(apply: Operator, apply_adjoint: Operator, p: float, q: float, *,
                  shape, weight: float = 1.0, **kw) -> float:
    """Relative gap between ``||T||_{p->q}`` and ``||T*||_{q'->p'}`` estimates."""
    fwd = opnorm_power_iter(apply, apply_adjoint, p, q, shape=shape, weight=weight, **kw)
    back = opnorm_power_iter(apply_adjoint, apply, conjugate(q), conjugate(p), shape=shape,
                             weight=weight, **kw)
    return abs(fwd.lower_bound - back.lower_bound) / fwd.lower_bound
