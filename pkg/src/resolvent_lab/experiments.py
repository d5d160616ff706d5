"""Experiment drivers: each maps an :class:`ExperimentConfig` to a :class:`Table`."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from functools import partial

import numpy as np
from scipy.special import kv
from scipy.stats import linregress

from .bessel import bessel_k_scaled, order_for_dimension
from .carleman import carleman_ratio, cluster_exponents, cluster_norm_probe, mode_field, seam_bump
from .config import ExperimentConfig, parse_complex
from .csvio import Table
from .errors import ConfigError, DomainError, SingularError
from .opnorm import NormEstimate, opnorm_power_iter
from .oscillatory import decay_fit, make_spec
from .parametrix.chart import make_chart
from .parametrix.kernel import assemble_parametrix
from .parametrix.transport import ChartGrid, transport_coefficients
from .region import in_xi_delta, re_sqrt, sharp_exponents
from .torus import (
    GridField,
    TorusGrid,
    apply_symbol,
    improved_l2_bound,
    lattice_eigenvalues,
    lp_norm,
    resolvent_l2_norm,
    resolvent_symbol,
)

RAY_ANGLES = (0.0, 0.25, -0.25, 0.5, -0.5, 0.75, -0.75)


def parallel_map(fn, items, workers: int = 1):
    """``[fn(x) for x in items]`` in input order, on a process pool when ``workers > 1``."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def point_seed(seed: int, index: int):
    """Per-point seed, independent of how points are split across workers."""
    return [int(seed), int(index)]


# ---------------------------------------------------------------------------
# resolvent sweep
# ---------------------------------------------------------------------------

def xi_delta_grid(delta: float = 0.5, zmax: float = 400.0, zmin: float = 4.0, radii: int = 6,
                  parabola: int = 18, margin: float = 0.02):
    """Rays ``arg z`` in ``{0, +-pi/4, +-pi/2, +-3pi/4}`` at geometric radii plus
    points with ``Re sqrt z = (1 + margin) delta`` hugging the parabola."""
    if radii < 1 or parabola < 0 or not 0 < zmin < zmax:
        raise ConfigError("need radii >= 1, parabola >= 0 and 0 < zmin < zmax")
    pts = []
    for a in RAY_ANGLES:
        for r in np.geomspace(zmin, zmax, radii):
            pts.append(complex(r * np.exp(1j * math.pi * a)))
    s = (1 + margin) * delta
    tmax = math.sqrt(zmax - s * s) * (1 - 1e-9)
    half = parabola // 2
    ts = list(np.geomspace(0.5, tmax, half)) if half else []
    ts = ts + [-t for t in ts]
    if parabola % 2:
        ts.append(0.0)
    pts.extend(complex((s + 1j * t) ** 2) for t in ts)
    return pts


def resolvent_lower_bound(grid: TorusGrid, z: complex, p: float, q: float, seeds: int = 2,
                          seed=0, oversample: int = 2, starts=None, rtol: float = 1e-6) -> NormEstimate:
    """Power-iteration lower bound of ``||R(z)||_{p->q}`` on ``grid``, re-measured on a refined grid."""
    sym = resolvent_symbol(grid, z)

    def apply(u):
        return apply_symbol(u.reshape(grid.shape), sym)

    def adjoint(v):
        return apply_symbol(v.reshape(grid.shape), np.conj(sym))

    measure = None
    if oversample > 1:
        def measure(u):
            return lp_norm(GridField(grid, apply(u)), q, oversample) / \
                lp_norm(GridField(grid, u), p, oversample)

    return opnorm_power_iter(apply, adjoint, p, q, shape=grid.shape, weight=grid.cell_volume,
                             seeds=seeds, seed=seed, starts=starts, measure=measure, rtol=rtol)


def _resolvent_row(job, *, n, N, p, q, delta, seeds, oversample):
    kind, index, z, start_k, seed = job
    grid = TorusGrid(n, N)
    starts = None
    if start_k is not None:
        x = grid.coords()
        starts = [np.exp(1j * sum(k * c for k, c in zip(start_k, x))) * np.ones(grid.shape)]
    scan_k = ""
    try:
        scan = resolvent_l2_norm(n, z)
        l2_exact, scan_k = scan.norm, " ".join(str(k) for k in scan.witness)
    except SingularError:
        l2_exact = math.inf
    try:
        est = resolvent_lower_bound(grid, z, p, q, seeds, point_seed(seed, index), oversample, starts)
        lb, gv, its, singular = est.lower_bound, est.grid_value, est.iterations, False
    except SingularError:
        lb, gv, its, singular = math.nan, math.nan, 0, True
    try:
        inside, rs, bound = bool(in_xi_delta(z, delta)), float(re_sqrt(z)), improved_l2_bound(z)
    except DomainError:
        # on the negative axis: only reachable by an exterior probe with eps = 0
        inside, rs, bound = False, 0.0, math.inf
    return [kind, z.real, z.imag, abs(z), rs, inside, lb, gv, its, l2_exact, bound, scan_k, singular]


RESOLVENT_HEADER = ["kind", "z_re", "z_im", "abs_z", "re_sqrt", "in_region", "lower_bound",
                    "grid_value", "iterations", "l2_exact", "l2_bound", "l2_witness_k", "singular"]


def run_resolvent_sweep(config: ExperimentConfig) -> Table:
    """Lower bounds of ``||R(z)||`` for the sharp exponent pair over a grid in ``Xi_delta``.

    An exterior probe ``z = -lam_k + i eps`` is appended unless
    ``exterior = none``; its power iteration starts at the eigenmode ``k``.
    """
    n = config.get_int("n", 3)
    N = config.get_int("N", 48)
    delta = config.get_float("delta", 0.5)
    pair = sharp_exponents(n)
    p = config.get_float("p", float(pair.p))
    q = config.get_float("q", float(pair.q))
    zs = xi_delta_grid(delta, config.get_float("zmax", 400.0), config.get_float("zmin", 4.0),
                       config.get_int("radii", 6), config.get_int("parabola", 18))
    if "z_list" in config.params:
        zs = config.get_list("z_list", kind=parse_complex)
    outside = [z for z in zs if not in_xi_delta(z, delta)]
    if outside:
        raise ConfigError(f"z-grid points outside Xi_delta: {outside[:3]}")
    jobs = [("region", i, z, None, config.seed) for i, z in enumerate(zs)]
    ext = str(config.params.get("exterior", "100")).strip().lower()
    if ext != "none":
        target = float(ext)
        lams, wit = lattice_eigenvalues(n, 2 * target + 2)
        i = int(np.argmin(np.abs(lams - target)))
        eps = config.get_float("exterior_eps", 0.01)
        jobs.append(("exterior", len(jobs), complex(-lams[i], eps), wit[i], config.seed))
    fn = partial(_resolvent_row, n=n, N=N, p=p, q=q, delta=delta,
                 seeds=config.get_int("seeds", 2), oversample=config.get_int("oversample", 2))
    rows = parallel_map(fn, jobs, config.workers)
    table = Table(RESOLVENT_HEADER, rows)
    region = [r[6] for r in rows if r[0] == "region" and not r[-1]]
    if region:
        table.summary["region_max"] = max(region)
        table.summary["region_min"] = min(region)
        table.summary["max_over_min"] = max(region) / min(region)
    exterior = [r[6] for r in rows if r[0] == "exterior"]
    if exterior and region:
        table.summary["exterior_over_max"] = exterior[0] / max(region)
    table.summary["l2_bound_holds"] = all(r[9] <= r[10] * (1 + 1e-12) for r in rows if r[0] == "region")
    return table


# ---------------------------------------------------------------------------
# Bessel check
# ---------------------------------------------------------------------------

def bessel_points(count: int, seed, re_range=(0.1, 50.0), im_range=(-50.0, 50.0)):
    rng = np.random.default_rng(seed)
    re = rng.uniform(*re_range, count)
    im = rng.uniform(*im_range, count)
    return re + 1j * im


def run_bessel_check(config: ExperimentConfig) -> Table:
    """Quadrature ``K_m(w)`` against ``sqrt(pi/2w) e^-w`` (``m = 1/2``) or scipy's ``kv``.

    Values are compared after the common factor ``e^w`` is removed.
    """
    m = config.get_float("m", 0.5)
    count = config.get_int("count", 100)
    tol = config.get_float("tol", 1e-12)
    w = bessel_points(count, config.seed, (config.get_float("re_min", 0.1), config.get_float("re_max", 50.0)),
                      (config.get_float("im_min", -50.0), config.get_float("im_max", 50.0)))
    scaled, err = bessel_k_scaled(m, w, tol)
    if m == 0.5:
        ref = np.sqrt(np.pi / (2 * w))
    else:
        ref = kv(m, w) * np.exp(w)
    rel = np.abs(scaled - ref) / np.abs(ref)
    rows = [[a.real, a.imag, b.real, b.imag, c.real, c.imag, float(r), float(e)]
            for a, b, c, r, e in zip(w, scaled, ref, rel, err)]
    table = Table(["w_re", "w_im", "scaled_re", "scaled_im", "ref_re", "ref_im", "rel_err", "est_err"], rows)
    table.summary["max_rel_err"] = float(rel.max())
    return table


# ---------------------------------------------------------------------------
# parametrix
# ---------------------------------------------------------------------------

def run_parametrix_build(config: ExperimentConfig) -> Table:
    """Transport coefficients and the kernel for one center at the chart origin.

    The grid has ``grid`` points per axis on ``[-box, box]^n``; the chart is
    made wide enough for the padded transport grid.
    """
    n = config.get_int("n", 2)
    N = config.get_int("N_order", order_for_dimension(n))
    z = config.get_complex("z", 16)
    M = config.get_int("grid", 33)
    box = config.get_float("box", 0.6)
    rho = config.get_float("rho", 0.5)
    kind = config.get("metric", "sphere")
    h = 2 * box / (M - 1)
    half_width = box + (3 * N + 4) * h
    chart = make_chart(kind, n, half_width, config.params.get("metric_file"))
    grid = ChartGrid(chart, M, -box * np.ones(n), box * np.ones(n))
    center = grid.points()[grid.index_of(np.zeros(n))]
    coeffs = transport_coefficients(grid, center[None, :], N, closed_form=config.get_int("closed_form", 1) == 1)
    pk = assemble_parametrix(coeffs, z, rho, strict=False)
    pts = grid.points()
    cols = [np.ravel(a[0]) for a in coeffs.alpha]
    header = [f"x{i + 1}" for i in range(n)] + ["distance", "J"] + [f"alpha_{k}" for k in range(N + 1)] \
        + [f"lap_alpha_{N}", "chi", "F_re", "F_im", "H_N_abs"]
    F = np.ravel(pk.F[0])
    rows = []
    for i in range(grid.size):
        rows.append(list(pts[i]) + [float(np.ravel(coeffs.distance[0])[i]), float(np.ravel(coeffs.J[0])[i])]
                    + [float(c[i]) for c in cols]
                    + [float(np.ravel(coeffs.lap_alpha[N][0])[i]), float(np.ravel(pk.chi[0])[i]),
                       float(F[i].real), float(F[i].imag), float(abs(np.ravel(pk.H_N[0])[i]))])
    table = Table(header, rows)
    table.summary["H_N_max"] = float(np.abs(pk.H_N).max())
    table.summary["half_width"] = half_width
    return table


# ---------------------------------------------------------------------------
# Carleman sweep
# ---------------------------------------------------------------------------

def parse_u_spec(spec: str, n: int):
    """``bump`` or ``mode:j,k2,...`` (missing ``k`` entries are zero)."""
    spec = spec.strip()
    if spec == "bump":
        return ("bump", None, None)
    if spec.startswith("mode:"):
        try:
            vals = [int(v) for v in spec[5:].split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad mode spec {spec!r}") from exc
        if not vals or len(vals) > n:
            raise ConfigError(f"mode spec needs 1..{n} integers, got {spec!r}")
        k = vals[1:] + [0] * (n - len(vals))
        return ("mode", vals[0], tuple(k))
    raise ConfigError(f"--u must be bump or mode:j,k, got {spec!r}")


def run_carleman_sweep(config: ExperimentConfig) -> Table:
    shape = config.get_list("grid", "1024,32,32", int)
    if len(shape) == 1:
        shape = shape * 3
    grid = TorusGrid(len(shape), tuple(shape))
    kind, j, k = parse_u_spec(config.get("u", "bump"), grid.n)
    u = seam_bump(grid) if kind == "bump" else mode_field(grid, j, k)
    taus = config.get_list("tau_list", "8,16,32,64")
    oversample = config.get_int("oversample", 1)
    rows = []
    for tau in taus:
        r = carleman_ratio(u, tau, oversample)
        rows.append([r.tau, r.ratio, r.num_norm, r.den_norm])
    table = Table(["tau", "ratio", "num_norm", "den_norm"], rows)
    ratios = [r[1] for r in rows]
    table.summary["max_ratio"] = max(ratios)
    table.summary["last_over_first"] = ratios[-1] / ratios[0]
    return table


# ---------------------------------------------------------------------------
# oscillatory decay
# ---------------------------------------------------------------------------

def run_osc_decay(config: ExperimentConfig) -> Table:
    phase = config.get("phase", "distance")
    n = config.get_int("n", 2 if phase == "distance" else 1)
    ladder = config.params.get("lambda_ladder")
    ladder = None if ladder is None else config.get_list("lambda_ladder")
    spec = make_spec(phase, n, ladder)
    fit = decay_fit(spec, config.get_float("p", 2.0), config.get_float("q", 2.0),
                    seeds=config.get_int("seeds", 2), seed=config.seed)
    table = Table(["lambda", "norm_lb", "iters"], [list(r) for r in fit.table()])
    table.summary.update(regime=fit.regime, theory=fit.theory, slope=fit.slope,
                         halfwidth=fit.halfwidth, monotone=fit.monotone, rejected=fit.rejected)
    return table


# ---------------------------------------------------------------------------
# cluster probe
# ---------------------------------------------------------------------------

def _cluster_row(m, *, n, N, p, q, seeds, seed, oversample):
    est = cluster_norm_probe(TorusGrid(n, N), m, p, q, seeds, point_seed(seed, m), oversample)
    return [m, est.lower_bound, est.grid_value, est.iterations]


def run_cluster_probe(config: ExperimentConfig) -> Table:
    n = config.get_int("n", 3)
    N = config.get_int("N", 32)
    primal = cluster_exponents(n)[0]
    p = config.get_float("p", primal[0])
    q = config.get_float("q", primal[1])
    ms = range(config.get_int("m_min", 0), config.get_int("m_max", 12) + 1)
    fn = partial(_cluster_row, n=n, N=N, p=p, q=q, seeds=config.get_int("seeds", 2),
                 seed=config.seed, oversample=config.get_int("oversample", 3))
    rows = parallel_map(fn, ms, config.workers)
    table = Table(["m", "norm_lb", "grid_value", "iters"], rows)
    fit = [(r[0], r[1]) for r in rows if r[0] >= 1 and r[1] > 0]
    if len(fit) >= 2:
        mm, vv = np.array(fit).T
        table.summary["growth_exponent"] = float(linregress(np.log1p(mm), np.log(vv)).slope)
    return table


EXPERIMENTS = {
    "resolvent-sweep": run_resolvent_sweep,
    "bessel-check": run_bessel_check,
    "parametrix-build": run_parametrix_build,
    "carleman-sweep": run_carleman_sweep,
    "osc-decay": run_osc_decay,
    "cluster-probe": run_cluster_probe,
}
