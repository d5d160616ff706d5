import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from resolvent_lab.errors import DomainError, SingularError
from resolvent_lab.region import in_xi_delta
from resolvent_lab.torus import (
    GridField,
    TorusGrid,
    band_limit_project,
    cluster_project,
    fourier_forward,
    fourier_inverse,
    helmholtz_apply,
    improved_l2_bound,
    interpolate,
    lattice_eigenvalues,
    lp_norm,
    pi_jk_project,
    random_band_limited,
    resolvent_apply,
    resolvent_l2_norm,
    spectral_laplacian,
)


def plane_wave(grid, k):
    x = grid.coords()
    phase = sum(kk * xx for kk, xx in zip(k, x))
    return GridField(grid, np.exp(1j * phase) * np.ones(grid.shape))


@pytest.fixture
def g3():
    return TorusGrid(3, 16)


class TestGrid:
    def test_validation(self):
        with pytest.raises(DomainError):
            TorusGrid(2, 7)
        with pytest.raises(DomainError):
            TorusGrid(2, 6)
        with pytest.raises(DomainError):
            TorusGrid(2, (8, 8, 8))
        g = TorusGrid(3, (16, 8, 8))
        assert g.shape == (16, 8, 8) and g.size == 1024

    def test_frequencies_range(self):
        g = TorusGrid(2, 8)
        k0 = g.freqs()[0].ravel()
        assert k0.min() == -4 and k0.max() == 3

    def test_field_immutable(self, g3):
        u = GridField(g3, np.zeros(g3.shape))
        with pytest.raises(ValueError):
            u.values[0, 0, 0] = 1
        with pytest.raises(DomainError):
            GridField(g3, np.full(g3.shape, np.nan))


class TestTransforms:
    def test_constant(self, g3):
        uh = fourier_forward(GridField(g3, np.ones(g3.shape)))
        assert abs(uh.values[0, 0, 0] - 16**1.5) < 1e-10
        rest = np.abs(uh.values).ravel()[1:]
        assert rest.max() < 1e-10

    def test_plane_wave_spike(self, g3):
        uh = fourier_forward(plane_wave(g3, (2, -3, 1))).values
        idx = np.unravel_index(np.argmax(np.abs(uh)), uh.shape)
        assert idx == (2, 16 - 3, 1)
        assert np.sum(np.abs(uh) > 1e-9) == 1

    def test_parseval_and_roundtrip(self, g3):
        rng = np.random.default_rng(0)
        u = GridField(g3, rng.standard_normal(g3.shape) + 1j * rng.standard_normal(g3.shape))
        uh = fourier_forward(u)
        assert abs(np.sum(np.abs(uh.values) ** 2) / np.sum(np.abs(u.values) ** 2) - 1) < 1e-13
        back = fourier_inverse(uh)
        assert np.max(np.abs(back.values - u.values)) < 1e-13


class TestHelmholtz:
    def test_eigenfunction(self, g3):
        u = plane_wave(g3, (1, 0, 0))
        assert np.allclose(helmholtz_apply(u, 2).values, 3 * u.values, atol=1e-12)
        c = GridField(g3, np.ones(g3.shape))
        assert np.allclose(helmholtz_apply(c, 5).values, 5, atol=1e-12)

    def test_against_finite_differences(self):
        errs = []
        for N in (32, 64):
            g = TorusGrid(2, N)
            x, y = g.coords()
            u = GridField(g, np.exp(np.sin(x) + 0.5 * np.cos(2 * y)))
            h = 2 * np.pi / N
            v = u.values
            fd = sum((np.roll(v, 1, a) - 2 * v + np.roll(v, -1, a)) / h**2 for a in range(2))
            lap = spectral_laplacian(u).values
            assert np.allclose(helmholtz_apply(u, 1.5).values - 1.5 * v, -lap)
            errs.append(np.max(np.abs(lap - fd)))
        assert 3.5 < errs[0] / errs[1] < 4.5

    def test_resolvent_single_mode(self, g3):
        u = plane_wave(g3, (2, 1, 0))
        assert np.allclose(resolvent_apply(u, 1 + 1j).values, u.values / (6 + 1j), atol=1e-13)

    def test_round_trips(self, g3):
        rng = np.random.default_rng(5)
        for _ in range(20):
            u = random_band_limited(g3, rng, 7)
            z = complex(rng.uniform(-60, 60), rng.uniform(-30, 30))
            if abs(z.imag) < 0.1:
                z += 0.5j
            back = helmholtz_apply(resolvent_apply(u, z), z)
            assert np.max(np.abs(back.values - u.values)) <= 1e-12 * np.max(np.abs(u.values))
            back = resolvent_apply(helmholtz_apply(u, z), z)
            assert np.max(np.abs(back.values - u.values)) <= 1e-12 * np.max(np.abs(u.values))

    def test_singular(self, g3):
        with pytest.raises(SingularError):
            resolvent_apply(plane_wave(g3, (1, 0, 0)), -2.0)


class TestLatticeScan:
    def test_eigenvalues(self):
        lams, wit = lattice_eigenvalues(3, 30)
        assert 7 not in lams and 15 not in lams and 28 not in lams
        assert 14 in lams
        for lam, k in zip(lams, wit):
            assert sum(c * c for c in k) == lam

    def test_matches_grid_operator_norm(self):
        g = TorusGrid(3, 32)
        for z in (3 + 2j, -20 + 1j, 50.0):
            scan = resolvent_l2_norm(3, z)
            sym = 1 / np.abs(g.ksq() + z)
            assert abs(scan.norm - sym.max()) < 1e-12 * scan.norm

    def test_l2_bound_at_parabola_point(self):
        tau = 8.0
        z = -tau * tau + 1j * tau
        scan = resolvent_l2_norm(3, z)
        assert scan.norm <= improved_l2_bound(z)
        assert abs(1 / abs(scan.eigenvalue + z) - scan.norm) < 1e-15

    def test_improved_bound_over_region(self):
        rng = np.random.default_rng(11)
        delta = 0.5
        count = 0
        while count < 200:
            z = complex(rng.uniform(-400, 400), rng.uniform(-400, 400))
            if abs(z) > 400 or not in_xi_delta(z, delta):
                continue
            count += 1
            assert resolvent_l2_norm(3, z).norm <= abs(z) ** -0.5 / delta * (1 + 1e-12)

    def test_exterior_blowup(self):
        delta = 0.5
        for lam in (50, 101, 200, 300):
            z = -lam + 0.01j
            assert not in_xi_delta(z, delta)
            assert resolvent_l2_norm(3, z).norm >= 10 * abs(z) ** -0.5 / delta


class TestProjections:
    def test_cluster_algebra(self):
        g = TorusGrid(3, 16)
        u = random_band_limited(g, np.random.default_rng(2), 7.5)
        c2 = cluster_project(u, 2)
        assert np.max(np.abs(cluster_project(c2, 2).values - c2.values)) < 1e-14
        assert np.max(np.abs(cluster_project(c2, 3).values)) < 1e-14
        total = sum((cluster_project(u, m) for m in range(5)), GridField(g, np.zeros(g.shape)))
        assert np.max(np.abs(total.values - band_limit_project(u, 4).values)) < 1e-13
        with pytest.raises(DomainError):
            cluster_project(u, -1)

    def test_pi_jk(self):
        g = TorusGrid(2, 16)
        x1, x2 = g.coords()
        u = GridField(g, np.exp(1j * (2 * x1 + 3 * x2)))
        assert np.allclose(pi_jk_project(u, 2, (3,)).values, u.values, atol=1e-13)
        assert np.max(np.abs(pi_jk_project(u, 2, (2,)).values)) < 1e-13
        assert np.max(np.abs(pi_jk_project(u, 1, (3,)).values)) < 1e-13

    def test_pi_jk_completeness_and_orthogonality(self):
        g = TorusGrid(2, 8)
        rng = np.random.default_rng(4)
        u = GridField(g, rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape))
        parts = [pi_jk_project(u, j, (k,)) for j in range(-4, 4) for k in range(-4, 4)]
        total = sum(p.values for p in parts)
        assert np.max(np.abs(total - u.values)) < 1e-13
        for a in range(0, len(parts), 7):
            for b in range(a + 1, len(parts), 5):
                assert abs(parts[a].inner(parts[b])) < 1e-12


class TestNorms:
    def test_constant(self):
        g = TorusGrid(3, 8)
        one = GridField(g, np.ones(g.shape))
        for p in (1, 1.2, 2, 6):
            assert abs(lp_norm(one, p) - (2 * np.pi) ** (3 / p)) < 1e-12 * (2 * np.pi) ** (3 / p)
        assert lp_norm(one, math.inf) == 1.0

    def test_sup(self, g3):
        u = GridField(g3, np.arange(g3.size).reshape(g3.shape) * 1j)
        assert lp_norm(u, math.inf) == g3.size - 1

    def test_holder(self, g3):
        rng = np.random.default_rng(8)
        for _ in range(10):
            u = random_band_limited(g3, rng, 6)
            assert lp_norm(u, 2) ** 2 <= lp_norm(u, 1.2) * lp_norm(u, 6) * (1 + 1e-12)

    def test_oversampled_exact_for_trig_polynomials(self):
        g = TorusGrid(2, 16)
        x, y = g.coords()
        u = GridField(g, np.cos(3 * x) * np.sin(2 * y) + 0.3)
        fine = TorusGrid(2, 256)
        xf, yf = fine.coords()
        ref = GridField(fine, np.cos(3 * xf) * np.sin(2 * yf) + 0.3)
        assert abs(lp_norm(u, 6, oversample=4) - lp_norm(ref, 6)) < 1e-12
        assert abs(lp_norm(u, 2) - lp_norm(ref, 2)) < 1e-12

    def test_interpolate_real_nyquist(self):
        g = TorusGrid(1, 8)
        x, = g.coords()
        vals = np.cos(4 * x)
        fine = interpolate(vals, (16,))
        assert np.max(np.abs(fine.imag)) < 1e-14
        assert np.allclose(fine[::2], vals)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_refinement_converges(self, seed):
        g = TorusGrid(2, 16)
        u = random_band_limited(g, np.random.default_rng(seed), 5)
        a, b, c = (lp_norm(u, 6, oversample=s) for s in (2, 4, 8))
        assert abs(c - b) <= abs(b - a) + 1e-9 * c
