import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from resolvent_lab.errors import BoundaryError, DomainError
from resolvent_lab.torus import TorusGrid
from resolvent_lab.parametrix.chart import (
    constant_chart,
    flat_chart,
    make_chart,
    newton_constant,
    perturbed_chart,
    sphere_chart,
    sphere_distance,
)
from resolvent_lab.parametrix.geodesics import (
    exp_map,
    geodesic_distance,
    polar_data,
    shoot,
    speed_profile,
    unit_directions,
    volume_jacobian,
)
from resolvent_lab.parametrix.kernel import (
    DyadicCutoffs,
    assemble_parametrix,
    cell_integral,
    dyadic_decompose,
    evaluate_kernel,
    operator_matrix,
    psi,
    psi0,
    psi0_derivatives,
    residual_apply,
)
from resolvent_lab.parametrix.patching import glue, torus_partition
from resolvent_lab.parametrix.sweep import remainder_norm_sweep
from resolvent_lab.parametrix.transport import (
    ChartGrid,
    GridLaplacian,
    interpolate_local,
    transport_coefficients,
)


# ---------------------------------------------------------------------------
# closed forms on the round sphere
# ---------------------------------------------------------------------------

def sphere_alpha0(r):
    r = np.asarray(r, dtype=float)
    return np.sqrt(r / np.sin(r))


def sphere_alpha1(r, n=2):
    """Radial oracle: ``alpha_1 = alpha_0 / r int_0^r (Delta alpha_0 / alpha_0) ds``."""
    def lap_ratio(s):
        e = 1e-4
        f = lambda t: math.sqrt(t / math.sin(t)) if t > 0 else 1.0
        f1 = (f(s + e) - f(s - e)) / (2 * e)
        f2 = (f(s + e) - 2 * f(s) + f(s - e)) / e**2
        return (f2 + (n - 1) / math.tan(s) * f1) / f(s)
    return float(sphere_alpha0(r)) / r * quad(lap_ratio, 1e-3, r)[0]


@pytest.fixture(scope="module")
def sphere2():
    chart = sphere_chart(2, half_width=1.3)
    grid = ChartGrid(chart, 33, [-0.6, -0.6], [0.6, 0.6])
    y = grid.points()[grid.index_of([0.0, 0.0])] + np.array([0.0375, -0.075])
    return transport_coefficients(grid, y)


@pytest.fixture(scope="module")
def flat_small():
    grid = ChartGrid(flat_chart(2), 25, [-0.5, -0.5], [0.5, 0.5])
    return transport_coefficients(grid, grid.points())


# ---------------------------------------------------------------------------
# charts
# ---------------------------------------------------------------------------

class TestCharts:
    def test_sphere_christoffel_matches_generic(self):
        chart = sphere_chart(3)
        rng = np.random.default_rng(0)
        x, p, q = rng.uniform(-0.8, 0.8, (3, 7, 3))
        direct = chart.gamma_pq(x, p, q)
        generic = np.einsum("...kij,...i,...j->...k", chart.christoffel(x), p, q)
        assert np.max(np.abs(direct - generic)) < 1e-12

    def test_fd_derivative(self):
        chart = sphere_chart(2)
        x = np.array([[0.3, -0.1]])
        fd = perturbed_chart(2, eps=0.0).metric_derivative(x)
        assert np.all(fd == 0)
        exact = chart.dg(x)
        approx = type(chart)(2, chart.lower, chart.upper, chart.g).metric_derivative(x)
        assert np.max(np.abs(exact - approx)) < 1e-8

    def test_constant_chart_rejects_indefinite(self):
        with pytest.raises(DomainError):
            constant_chart([[1.0, 0.0], [0.0, -1.0]])

    def test_make_chart_file(self, tmp_path):
        path = tmp_path / "g.txt"
        path.write_text("2 0.5\n0.5 1\n")
        chart = make_chart("file", 2, path=str(path))
        assert chart.affine and np.allclose(chart.metric(np.zeros(2)), [[2, 0.5], [0.5, 1]])
        with pytest.raises(DomainError):
            make_chart("file", 3, path=str(path))
        with pytest.raises(DomainError):
            make_chart("torus", 2)

    def test_newton_constant(self):
        assert abs(newton_constant(3) - 1 / (4 * math.pi)) < 1e-15


# ---------------------------------------------------------------------------
# geodesics
# ---------------------------------------------------------------------------

class TestGeodesics:
    def test_flat_exp_is_straight(self):
        chart = flat_chart(3)
        y = np.array([0.1, -0.2, 0.3])
        theta = np.array([1.0, 2.0, -2.0]) / 3
        x = exp_map(chart, y, theta, 0.5)
        assert np.max(np.abs(x - (y + 0.5 * theta))) < 1e-14

    @pytest.mark.parametrize("r", [0.1, 0.5, 1.2])
    def test_sphere_distance_recovers_radius(self, r):
        chart = sphere_chart(2, half_width=2.0)
        y = np.array([0.1, -0.2])
        for theta in unit_directions(chart, y, 6):
            x = exp_map(chart, y, theta, r)
            assert abs(sphere_distance(x, y) - r) < 1e-8
            assert abs(geodesic_distance(chart, x, y) - r) < 1e-8

    def test_speed_profile(self):
        chart = sphere_chart(2, half_width=2.0)
        y = np.array([0.2, 0.1])
        theta = unit_directions(chart, y, 3)[1]
        prof = speed_profile(chart, y, theta, 1.0)
        assert prof.shape == (10,)
        assert np.max(np.abs(prof - 1)) < 1e-8

    def test_volume_jacobian_sphere(self):
        chart = sphere_chart(2, half_width=2.0)
        y = np.zeros(2)
        theta = np.array([1.0, 1.0]) / math.sqrt(2) / 2    # unit for g(0) = 4 I
        r = np.linspace(0.1, 1.9, 10)
        J = volume_jacobian(chart, y, theta, r)
        assert np.max(np.abs(J - np.sin(r) / r)) < 1e-6

    def test_volume_jacobian_sphere3(self):
        chart = sphere_chart(3, half_width=1.5)
        y = np.array([0.1, 0.0, -0.1])
        theta = unit_directions(chart, y, 2, seed=3)[0]
        r = np.array([0.3, 0.9])
        J = volume_jacobian(chart, y, theta, r)
        assert np.max(np.abs(J - (np.sin(r) / r) ** 2)) < 1e-6

    def test_distance_symmetry(self):
        chart = sphere_chart(2, half_width=1.5)
        rng = np.random.default_rng(11)
        x = rng.uniform(-0.7, 0.7, (100, 2))
        y = rng.uniform(-0.7, 0.7, (100, 2))
        dxy = geodesic_distance(chart, x, y)
        dyx = geodesic_distance(chart, y, x)
        assert np.max(np.abs(dxy - dyx)) < 1e-8
        # RK4 truncation at 64 steps dominates for d near 2
        assert np.max(np.abs(dxy - sphere_distance(x, y))) < 1e-7

    def test_hessian_of_squared_distance(self):
        chart = perturbed_chart(2, eps=0.2)
        y = np.array([0.2, -0.1])
        s = 3e-3
        f = lambda x: geodesic_distance(chart, x, y) ** 2
        e = np.eye(2) * s
        H = np.empty((2, 2))
        for i in range(2):
            for j in range(2):
                H[i, j] = (f(y + e[i] + e[j]) - f(y + e[i] - e[j])
                           - f(y - e[i] + e[j]) + f(y - e[i] - e[j])) / (4 * s * s)
        assert np.max(np.abs(H - 2 * chart.metric(y))) < 1e-4

    def test_perturbed_distance_equivalence(self):
        chart = perturbed_chart(2, eps=0.2)
        rng = np.random.default_rng(4)
        x = rng.uniform(-0.5, 0.5, (20, 2))
        y = rng.uniform(-0.5, 0.5, (20, 2))
        sh = shoot(chart, y, x)
        ratio = sh.distance / np.linalg.norm(x - y, axis=1)
        assert np.all((ratio >= 1 / 1.5) & (ratio <= 1.5))

    def test_exp_map_leaving_chart(self):
        chart = sphere_chart(2, half_width=0.5)
        with pytest.raises(BoundaryError):
            exp_map(chart, np.zeros(2), np.array([0.5, 0.0]), 1.5)

    def test_non_unit_direction(self):
        with pytest.raises(DomainError):
            exp_map(flat_chart(2), np.zeros(2), np.array([1.0, 1.0]), 0.3)

    def test_polar_injectivity_radius(self):
        chart = sphere_chart(2, half_width=200.0)
        radii = np.linspace(2.5, 3.3, 17)
        data = polar_data(chart, np.zeros(2), radii, count=4, steps=256)
        assert abs(data.injectivity - math.pi) <= 0.05
        assert data.points.shape == (4, 17, 2)


# ---------------------------------------------------------------------------
# transport coefficients
# ---------------------------------------------------------------------------

class TestTransport:
    def test_flat_coefficients(self):
        grid = ChartGrid(flat_chart(3, half_width=2.0), 7, [-0.3] * 3, [0.3] * 3)
        tc = transport_coefficients(grid, grid.points()[::17], closed_form=False)
        assert np.max(np.abs(tc.alpha[0] - 1)) < 1e-10
        for a in tc.alpha[1:]:
            assert np.max(np.abs(a)) < 1e-10

    def test_order_too_small(self):
        grid = ChartGrid(flat_chart(3), 7, [-0.3] * 3, [0.3] * 3)
        with pytest.raises(DomainError):
            transport_coefficients(grid, np.zeros(3), N=1)

    def test_alpha0_on_diagonal(self, sphere2):
        grid = sphere2.grid
        tc = transport_coefficients(grid, grid.points()[[0, 400, 1088]])
        for c in range(3):
            idx = np.unravel_index([0, 400, 1088][c], grid.shape)
            assert abs(tc.alpha[0][(c,) + idx] - 1) < 1e-12

    def test_sphere_alpha0(self, sphere2):
        err = np.abs(sphere2.alpha[0] - sphere_alpha0(sphere2.distance))
        assert np.nanmax(err) < 1e-4
        J = np.sin(sphere2.distance) / sphere2.distance
        assert np.nanmax(np.abs(sphere2.J - J)) < 1e-4

    def test_sphere_alpha1_radial_oracle(self, sphere2):
        d = sphere2.distance[0]
        rng = np.random.default_rng(2)
        picks = rng.choice(np.flatnonzero((d > 0.1) & (d < 0.9)), 8, replace=False)
        ref = np.array([sphere_alpha1(r) for r in d.ravel()[picks]])
        got = sphere2.alpha[1][0].ravel()[picks]
        assert np.max(np.abs(got - ref)) < 1e-3

    def test_alpha0_transport_along_rays(self):
        chart = sphere_chart(2, half_width=1.5)
        y = np.array([0.1, 0.2])
        for theta in unit_directions(chart, y, 5):
            r = np.linspace(0.2, 1.0, 9)
            e = 1e-3
            J = volume_jacobian(chart, y, theta, np.concatenate([r - e, r, r + e])).reshape(3, -1)
            a0 = J ** -0.5
            da = (a0[2] - a0[0]) / (2 * e)
            dJ = (J[2] - J[0]) / (2 * e)
            assert np.max(np.abs(da + dJ / (2 * J[1]) * a0[1])) < 1e-4

    def test_higher_transport_equation(self, sphere2):
        """``r d_r a + nu a = b`` with ``a = alpha_nu/alpha_0``, ``b = Delta alpha_(nu-1)/alpha_0``."""
        grid = sphere2.grid
        chart = grid.chart
        y = sphere2.centers[0]
        e = 0.01
        r = np.linspace(0.1, 0.4, 7)
        for theta in unit_directions(chart, y, 4):
            pts = np.stack([exp_map(chart, y, theta, t) for t in np.concatenate([r - e, r, r + e])])
            a0 = interpolate_local(grid, sphere2.alpha[0][0], pts).reshape(3, -1)
            for nu in (1, 2):
                a = interpolate_local(grid, sphere2.alpha[nu][0], pts).reshape(3, -1) / a0
                b = interpolate_local(grid, sphere2.lap_alpha[nu - 1][0], pts).reshape(3, -1) / a0
                res = r * (a[2] - a[0]) / (2 * e) + nu * a[1] - b[1]
                assert np.max(np.abs(res)) < 1e-3 * max(1.0, np.max(np.abs(b[1])))

    def test_radial_laplacian_identity(self, sphere2):
        grid = sphere2.grid
        d = sphere2.distance[0]
        lap = GridLaplacian(grid)(d**2)
        with np.errstate(invalid="ignore", divide="ignore"):
            ref = np.where(d > 1e-12, 2 + 2 * d / np.tan(d), 4.0)
        # second order: h^2 = 1.4e-3
        assert np.nanmax(np.abs(lap - ref)) < 5e-3

    def test_padding_leaving_chart(self):
        chart = sphere_chart(2, half_width=1.0)
        grid = ChartGrid(chart, 21, [-0.9, -0.9], [0.9, 0.9])
        with pytest.raises(BoundaryError):
            transport_coefficients(grid, np.zeros(2))

    def test_grid_outside_chart(self):
        with pytest.raises(BoundaryError):
            ChartGrid(flat_chart(2), 9, [-2, -1], [1, 1])


# ---------------------------------------------------------------------------
# cutoffs and dyadic pieces
# ---------------------------------------------------------------------------

class TestCutoffs:
    def test_psi0_shape(self):
        r = np.linspace(0, 1.5, 3001)
        f = psi0(r)
        assert np.all(f[r <= 0.5] == 1) and np.all(f[r >= 1] == 0)
        assert np.all(np.diff(f) <= 0)

    def test_psi0_derivatives(self):
        r = np.linspace(0.52, 0.98, 47)
        e = 1e-5
        f, f1, f2 = psi0_derivatives(r)
        assert np.max(np.abs(f1 - (psi0(r + e) - psi0(r - e)) / (2 * e))) < 1e-6
        fp = psi0_derivatives(r + e)[1]
        fm = psi0_derivatives(r - e)[1]
        assert np.max(np.abs(f2 - (fp - fm) / (2 * e))) < 1e-4

    def test_psi_support(self):
        r = np.linspace(0, 3, 6001)
        v = psi(r)
        assert np.all(v[(r <= 0.5) | (r >= 2)] == 0)

    def test_partition_of_unity(self):
        r = np.linspace(0, 2.0**12, 10_000)
        cut = DyadicCutoffs()
        assert np.max(np.abs(cut.partition_sum(r) - 1)) < 1e-12

    @given(st.floats(0, 1e6, allow_nan=False))
    @settings(max_examples=200)
    def test_partition_property(self, r):
        cut = DyadicCutoffs()
        assert abs(float(cut.partition_sum(np.array([r]))[0]) - 1) < 1e-12

    @given(st.integers(1, 30), st.floats(0, 1e9, allow_nan=False))
    @settings(max_examples=200)
    def test_piece_support(self, nu, r):
        if DyadicCutoffs().piece(nu, r) != 0:
            assert 2.0 ** (nu - 1) <= r <= 2.0 ** (nu + 1)

    def test_count(self):
        cut = DyadicCutoffs()
        assert cut.count(0.5) == 1 and cut.count(1.5) == 2 and cut.count(8.0) == 5
        with pytest.raises(DomainError):
            cut.piece(-1, 1.0)


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------

class TestKernel:
    def test_leading_singularity(self):
        chart = sphere_chart(3, half_width=1.3)
        grid = ChartGrid(chart, 7, [-0.15] * 3, [0.15] * 3)
        y = grid.points()[grid.index_of([0.0, 0.0, 0.0])]
        tc = transport_coefficients(grid, y)
        dirs = np.random.default_rng(1).standard_normal((5, 3))
        dirs /= np.linalg.norm(dirs, axis=1)[:, None]
        s = 0.1 * 2.0 ** -np.arange(11)
        pts = (y + s[None, :, None] * dirs[:, None, :]).reshape(-1, 3)
        F, d = evaluate_kernel(tc, 1 + 1j, pts)
        lim = (F * d).reshape(5, -1) / newton_constant(3)
        err = np.abs(lim - 1)
        assert np.all(np.diff(err, axis=1) < 0)
        assert np.max(err[:, -1]) < 1e-3

    def test_large_distance_form(self, sphere2):
        worst = []
        for mod in (4, 16, 64):
            for arg in (0.0, math.pi / 2, 0.9 * math.pi):
                z = mod * np.exp(1j * arg)
                pk = assemble_parametrix(sphere2, z, 0.6)
                d = pk.distance
                far = np.isfinite(pk.F) & (d >= mod ** -0.5)
                sz = np.sqrt(z)
                q = np.abs(pk.F[far]) * np.exp(sz.real * d[far]) * d[far] ** 0.5 * mod ** 0.25
                worst.append(q.max())
        assert max(worst) < 0.5

    def test_transpose_kernel(self):
        chart = sphere_chart(2, half_width=1.3)
        grid = ChartGrid(chart, 9, [-0.2, -0.2], [0.2, 0.2])
        ids = np.ravel_multi_index(np.meshgrid([0, 4, 8], [0, 4, 8], indexing="ij"), grid.shape).ravel()
        tc = transport_coefficients(grid, grid.points()[ids])
        z = 9 + 3j
        pk = assemble_parametrix(tc, z, 1.5)
        F = pk.F.reshape(len(ids), -1)[:, ids]          # F[center j, point i]
        off = ~np.eye(len(ids), dtype=bool)
        sym = np.abs(F - F.T)[off] / np.abs(F)[off]
        assert np.max(sym) < 2e-2
        d = pk.distance.reshape(len(ids), -1)[:, ids][off]
        for K in (F, F.T):
            q = np.abs(K[off]) * np.exp(np.sqrt(z).real * d) * d ** 0.5 * abs(z) ** 0.25
            assert q.max() < 0.5

    def test_flat_s2_vanishes(self, flat_small):
        pk = assemble_parametrix(flat_small, 4 + 1j, 0.5)
        assert np.all(pk.S2 == 0)

    def test_s1_vanishes_inside(self, sphere2):
        pk = assemble_parametrix(sphere2, 16j, 0.5)
        inner = np.nan_to_num(sphere2.distance, nan=np.inf) < 0.25
        assert np.all(pk.S1[inner] == 0)
        assert np.any(pk.S1 != 0)

    def test_hn_scaling(self, sphere2):
        vals = {}
        for mod in (4, 16, 64):
            vals[mod] = max(np.max(np.abs(assemble_parametrix(sphere2, mod * np.exp(1j * a), 0.6).H_N))
                            for a in (0.0, math.pi / 2, 0.9 * math.pi)) * math.sqrt(mod)
        assert max(vals.values()) < 1e-2
        assert max(vals[16], vals[64]) <= vals[4]

    def test_dyadic_reconstruction(self, sphere2):
        z = 64 * np.exp(0.3j)
        pk = assemble_parametrix(sphere2, z, 0.6)
        pieces = dyadic_decompose(pk)
        total = sum(p.kernel for p in pieces)
        assert np.max(np.abs(total - pk.kernel)) <= 1e-12 * np.max(np.abs(pk.kernel))
        dmax = np.nanmax(np.where(pk.chi > 0, pk.distance, np.nan))
        assert len(pieces) == DyadicCutoffs().count(8 * dmax)
        sd = 8 * np.nan_to_num(pk.distance)
        for p in pieces[1:]:
            nz = p.kernel != 0
            assert np.all(sd[nz] >= 2.0 ** (p.nu - 1) - 1e-12)
            assert np.all(sd[nz] <= 2.0 ** (p.nu + 1) + 1e-12)

    def test_small_z_rejected(self, sphere2):
        with pytest.raises(DomainError):
            assemble_parametrix(sphere2, 0.5, 0.5)
        with pytest.raises(DomainError):
            assemble_parametrix(sphere2, 4.0, -1.0)

    def test_cutoff_beyond_data(self, sphere2):
        tc = transport_coefficients(sphere2.grid, sphere2.centers, pad=0)
        with pytest.raises(BoundaryError):
            assemble_parametrix(tc, 4.0, 2.0)


class TestOperators:
    def test_cell_integral_flat_n2(self):
        # radial integral over the disc inscribed in the cell plus the corner
        # region, checked against dense tensor quadrature away from 0
        h = np.array([0.1, 0.1])
        got = complex(cell_integral(2, h, np.eye(2), 4.0, 1, nodes=12)[0])
        from resolvent_lab.bessel import FNuParams, f_nu
        x = (np.arange(400) + 0.5) / 400 * 0.1 - 0.05
        X, Y = np.meshgrid(x, x)
        ref = complex(np.sum(f_nu(np.hypot(X, Y), 4.0, FNuParams(2, 1))) * (0.1 / 400) ** 2)
        assert abs(got - ref) < 1e-6 * abs(ref)

    def test_operator_requires_all_centers(self, sphere2):
        pk = assemble_parametrix(sphere2, 4.0, 0.5)
        with pytest.raises(DomainError):
            operator_matrix(pk)

    def test_operator_transpose_flat(self, flat_small):
        pk = assemble_parametrix(flat_small, 4 + 1j, 0.5)
        A = operator_matrix(pk, "S1")
        At = operator_matrix(pk, "S1", transpose=True)
        assert np.max(np.abs(A - At.T)) < 1e-12 * np.max(np.abs(A))

    def test_residual_flat(self):
        grid = ChartGrid(flat_chart(2), 33, [-0.5, -0.5], [0.5, 0.5])
        tc = transport_coefficients(grid, grid.points())
        x = grid.points().reshape(grid.shape + (2,))
        u = np.exp(-20 * np.sum(x * x, axis=-1))
        rep = residual_apply(assemble_parametrix(tc, 4 + 1j, 0.5), u)
        assert not rep.under_resolved
        assert rep.relative_l2 <= 0.05


@pytest.fixture(scope="module")
def flat3():
    grid = ChartGrid(flat_chart(3, half_width=1.0), 13, [-0.75] * 3, [0.75] * 3)
    return transport_coefficients(grid, grid.points())


class TestSweep:
    @pytest.mark.parametrize("p,q,margin", [(2.0, 2.0, 0.1), (1.2, 6.0, 0.15)])
    def test_slope_below_exponent(self, flat3, p, q, margin):
        zs = [m * np.exp(0.9j * math.pi) for m in (4, 16, 64)]
        sw = remainder_norm_sweep(flat3, zs, p, q)
        assert all(r.lower_bound >= 0 for r in sw.rows)
        assert sw.slope <= sw.exponent + margin
        assert len(sw.table()) == 3

    def test_bad_exponents(self, flat3):
        with pytest.raises(DomainError):
            remainder_norm_sweep(flat3, [4.0], 3.0, 2.0)


class TestPatching:
    @pytest.mark.parametrize("n,shape", [(1, 64), (2, 32), (3, 16)])
    def test_quadratic_partition(self, n, shape):
        grid = TorusGrid(n, shape)
        chis = torus_partition(grid, 8)
        assert chis.shape == (8,) + grid.shape
        assert np.max(np.abs(np.sum(chis**2, axis=0) - 1)) < 1e-12
        assert np.all(chis >= 0)
        # every cutoff is local
        assert all(np.mean(c > 0) < 0.9 for c in chis)

    def test_glue_reconstructs(self):
        grid = TorusGrid(2, 32)
        chis = torus_partition(grid, 8)
        u = np.random.default_rng(0).standard_normal(grid.shape)
        glued = glue(chis, [lambda v: v] * 8)
        assert np.max(np.abs(glued(u) - u)) < 1e-12

    def test_glue_commutes_with_multiplier(self):
        grid = TorusGrid(2, 32)
        chis = torus_partition(grid, 8)
        u = np.random.default_rng(1).standard_normal(grid.shape)
        glued = glue(chis, [lambda v: 3.0 * v] * 8)
        assert np.max(np.abs(glued(u) - 3.0 * u)) < 1e-12

    def test_bad_width(self):
        with pytest.raises(DomainError):
            torus_partition(TorusGrid(2, 16), 8, width=0.9)
        with pytest.raises(DomainError):
            glue(torus_partition(TorusGrid(2, 16), 8), [lambda v: v])
