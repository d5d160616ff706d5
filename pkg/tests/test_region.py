import cmath
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from resolvent_lab.errors import DomainError
from resolvent_lab.region import (
    ExponentPair,
    Region,
    SpectralParameter,
    classify_pair,
    conjugate_exponent,
    in_xi_delta,
    in_xi_delta_parabola,
    in_xi_tilde,
    midpoint,
    re_sqrt,
    sigma_branches,
    sigma_decay,
    sqrt_principal,
    sharp_exponents,
    vertex_table,
)


class TestXiDelta:
    def test_positive_real(self):
        assert in_xi_delta(4, 0.5)

    def test_near_negative_axis(self):
        z = -9 + 0.1j
        expected = math.sqrt((-9 + math.sqrt(81.01)) / 2)
        assert abs(expected - 0.016666) < 1e-5
        assert abs(cmath.sqrt(z).real - expected) < 1e-14
        assert not in_xi_delta(z, 0.5)
        assert not in_xi_delta_parabola(z, 0.5)

    def test_boundary_included(self):
        d = 0.5
        assert in_xi_delta(d * d, d)
        assert in_xi_delta_parabola(d * d, d)

    @pytest.mark.parametrize("z", [-1.0, 0.0, -1e-300, complex(-3, 0)])
    def test_negative_axis_rejected(self, z):
        with pytest.raises(DomainError):
            in_xi_delta(z, 0.5)
        with pytest.raises(DomainError):
            in_xi_delta_parabola(z, 0.5)

    @pytest.mark.parametrize("delta", [0.0, 1.0, -0.2, 1.5])
    def test_delta_range(self, delta):
        with pytest.raises(DomainError):
            in_xi_delta(1.0, delta)

    def test_random_agreement(self):
        rng = np.random.default_rng(1)
        m = 10**6
        z = (rng.uniform(-50, 50, m) + 1j * rng.uniform(-50, 50, m)) * rng.uniform(0, 1, m) ** 2
        z = z[~((z.imag == 0) & (z.real <= 0))]
        for delta in (0.1, 0.5, 0.9):
            a = in_xi_delta(z, delta)
            b = in_xi_delta_parabola(z, delta)
            assert np.array_equal(a, b)

    def test_array_domain_error(self):
        with pytest.raises(DomainError):
            in_xi_delta(np.array([1 + 1j, -2 + 0j]), 0.5)

    def test_tilde(self):
        assert in_xi_tilde(-5 + 0.6j, 0.5)
        assert not in_xi_tilde(-5 + 0.4j, 0.5)
        assert in_xi_tilde(0.6, 0.5)
        assert not in_xi_tilde(0.3 + 0.1j, 0.5)

    def test_spectral_parameter(self):
        sp = SpectralParameter(4 + 0j, 0.5)
        assert sp.in_xi and sp.sqrt == 2
        with pytest.raises(DomainError):
            SpectralParameter(-1, 0.5)


class TestSqrt:
    def test_examples(self):
        assert sqrt_principal(4) == 2
        w = sqrt_principal(1j)
        assert abs(w - (math.sqrt(2) / 2) * (1 + 1j)) < 1e-15

    def test_parabola_point(self):
        # -tau^2 + i rho tau with tau=10, rho=1
        z = -100 + 10j
        by_formula = math.sqrt((-100 + math.sqrt(100**2 + 100)) / 2)
        assert abs(sqrt_principal(z).real - by_formula) < 1e-12
        assert abs(by_formula - 0.4993777) < 1e-7
        assert abs(re_sqrt(z) - by_formula) < 1e-12

    def test_rejects_axis(self):
        with pytest.raises(DomainError):
            sqrt_principal(-4)

    @given(st.complex_numbers(max_magnitude=1e6, allow_nan=False, allow_infinity=False))
    def test_square_and_branch(self, z):
        if z.imag == 0 and z.real <= 0:
            return
        if abs(z) < 1e-300:
            return
        w = sqrt_principal(z)
        assert abs(w * w - z) <= 1e-14 * abs(z) * 4
        assert w.real >= 0 and abs(cmath.phase(w)) <= math.pi / 2
        assert abs(w.real - re_sqrt(z)) <= 1e-14 * max(1.0, abs(w))


class TestSigma:
    def test_examples(self):
        assert sigma_decay(Fraction(0), 3) == Fraction(1, 2)
        assert sigma_decay(Fraction(1, 2), 3) == Fraction(1, 4)
        assert sigma_decay(Fraction(2, 3), 3) == 0

    @pytest.mark.parametrize("n", range(3, 13))
    def test_continuity_exact(self, n):
        a, b = sigma_branches(Fraction(2, n + 1), n)
        assert a == b

    def test_domain(self):
        with pytest.raises(DomainError):
            sigma_decay(1.5, 3)
        with pytest.raises(DomainError):
            sigma_decay(0.2, 2)

    @pytest.mark.parametrize("n", [3, 4, 7])
    def test_second_difference(self, n):
        h = Fraction(1, 840)
        knee = Fraction(2, n + 1)
        for i in range(1, 839):
            d = i * h
            dd = sigma_decay(d + h, n) - 2 * sigma_decay(d, n) + sigma_decay(d - h, n)
            if abs(d - knee) >= h:
                assert dd == 0
            else:
                assert dd != 0 or d == knee

    def test_float_input(self):
        assert abs(sigma_decay(0.5, 3) - 0.25) < 1e-15


class TestExponents:
    def test_sharp_exponents(self):
        assert sharp_exponents(3).as_floats() == (1.2, 6.0)
        pair = sharp_exponents(4)
        assert (pair.p, pair.q) == (Fraction(4, 3), 4)
        for n in range(3, 20):
            pair = sharp_exponents(n)
            assert pair.inv_p + pair.inv_q == 1
            assert pair.q == pair.p_dual
        with pytest.raises(DomainError):
            sharp_exponents(2)

    def test_pair_validation(self):
        with pytest.raises(DomainError):
            ExponentPair(3, 4)
        with pytest.raises(DomainError):
            ExponentPair(1.5, 1.8)
        pair = ExponentPair(1, math.inf)
        assert pair.inv_q == 0 and pair.p_dual == math.inf

    def test_conjugate(self):
        assert conjugate_exponent(Fraction(6, 5)) == 6
        assert conjugate_exponent(2) == 2
        assert conjugate_exponent(math.inf) == 1.0


class TestClassify:
    def test_sharp_pair(self):
        assert classify_pair(Fraction(6, 5), 6, 3) is Region.UNIFORM_TRAPEZIUM
        for n in range(3, 13):
            pair = sharp_exponents(n)
            assert classify_pair(pair.p, pair.q, n) is Region.UNIFORM_TRAPEZIUM

    def test_float_path(self):
        assert classify_pair(1.25, 5.0, 3) is Region.UNIFORM_TRAPEZIUM
        assert classify_pair(2.0, 2.0, 3) is Region.DECAY_PENTAGON

    def test_identity(self):
        for n in range(3, 9):
            assert classify_pair(2, 2, n) is Region.DECAY_PENTAGON

    def test_endpoint_e(self):
        assert classify_pair(2, 4, 3) is Region.DECAY_PENTAGON
        assert classify_pair(2, Fraction(41, 10), 3) is not Region.DECAY_PENTAGON

    def test_outside(self):
        assert classify_pair(1, math.inf, 3) is Region.OUTSIDE

    def test_edge_trapezia(self):
        # below the Carleson-Sjolin line, 1/p just above 1/2
        assert classify_pair(Fraction(20, 11), 20, 3) is Region.EDGE_LOWER
        assert classify_pair(Fraction(20, 19), Fraction(20, 9), 3) is Region.EDGE_UPPER

    @given(st.integers(3, 12), st.fractions(0, 1), st.fractions(0, 1))
    @settings(max_examples=300)
    def test_duality_closure(self, n, a, b):
        # (1/p, 1/q) -> (1/q', 1/p') = (1 - b, 1 - a)
        if not (a >= Fraction(1, 2) >= b):
            return
        p = math.inf if a == 0 else 1 / a
        q = math.inf if b == 0 else 1 / b
        pd = math.inf if b == 1 else 1 / (1 - b)
        qd = math.inf if a == 1 else 1 / (1 - a)
        r1 = classify_pair(p, q, n) is Region.DECAY_PENTAGON
        r2 = classify_pair(pd, qd, n) is Region.DECAY_PENTAGON
        assert r1 == r2


class TestVertices:
    @pytest.mark.parametrize("n", range(3, 13))
    def test_in_unit_square(self, n):
        for _, (a, b) in vertex_table(n).items():
            assert 0 <= a <= 1 and 0 <= b <= 1

    @pytest.mark.parametrize("n", range(3, 13))
    def test_f_is_midpoint_of_dd(self, n):
        t = vertex_table(n)
        assert midpoint(t.D, t.D_prime) == t.F

    @pytest.mark.xfail(strict=True, reason="F lies on [D, D'], the midpoint of [C, C'] is (1/2+1/n, 1/2-1/n)")
    def test_f_is_midpoint_of_cc(self):
        t = vertex_table(3)
        assert midpoint(t.C, t.C_prime) == t.F

    @pytest.mark.parametrize("n", range(3, 13))
    def test_derived_points_on_lines(self, n):
        t = vertex_table(n)
        lo = Fraction(n - 1, n + 1)
        # E on the Carleson-Sjolin line, D too; G on the duality line
        assert t.E[1] == lo * (1 - t.E[0])
        assert t.D[1] == lo * (1 - t.D[0])
        assert t.G[1] == 1 - t.G[0]
        assert t.F[1] == 1 - t.F[0]
        assert 1 / t.E[1] == 2 * Fraction(n + 1, n - 1)

    @pytest.mark.parametrize("n", range(3, 13))
    def test_trapezium_corners(self, n):
        t = vertex_table(n)
        assert t.C[0] - t.C[1] == Fraction(2, n)
        assert t.C_prime[0] - t.C_prime[1] == Fraction(2, n)
        for v in (t.D, t.D_prime, t.F):
            assert v[0] - v[1] == Fraction(2, n + 1)
