"""Gamma and Mittag-Leffler evaluation tests.

Derived expectations were computed with independent oracles (quadrature of
the gamma integral, the erfc identity for a = 1/2, central finite
differences, high-precision mpmath series) and frozen below; the oracle
code is kept next to the frozen values.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.special import erfc

from fracspec.mittag_leffler import (
    MLParams,
    PoleOfGammaError,
    SectorError,
    SectorSpec,
    default_sector,
    evaluation_regime,
    gamma_fn,
    ml_asymptotic_leading,
    ml_derivative_pair,
    ml_eval,
    ml_table_rows,
)


class TestGamma:
    def test_one(self):
        assert gamma_fn(1.0) == pytest.approx(1.0, rel=1e-13)

    def test_half(self):
        assert gamma_fn(0.5) == pytest.approx(np.sqrt(np.pi), rel=1e-13)

    def test_4p3_against_quadrature_oracle(self):
        # oracle: quad(lambda t: t**3.3 * np.exp(-t), 0, inf) -> 8.855343360454425
        frozen = 8.855343360454425
        assert gamma_fn(4.3) == pytest.approx(frozen, rel=1e-9)

    def test_twelve_digits_on_range(self):
        import math

        xs = np.linspace(0.1, 50.0, 250)
        for x in xs:
            ref = math.lgamma(x)
            got = float(np.log(abs(gamma_fn(float(x)))))
            assert got == pytest.approx(ref, abs=5e-13 * max(1.0, abs(ref)) + 1e-13)

    @pytest.mark.parametrize("x", [0, -1, -3, -10])
    def test_pole_error(self, x):
        with pytest.raises(PoleOfGammaError):
            gamma_fn(x)

    @given(st.floats(min_value=0.2, max_value=40.0))
    @settings(max_examples=60, deadline=None)
    def test_recurrence(self, x):
        assert gamma_fn(x + 1.0) == pytest.approx(x * gamma_fn(x), rel=1e-11)


class TestMLParams:
    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            MLParams(-0.5, 1.0)
        with pytest.raises(ValueError):
            MLParams(0.5, 0.0)

    def test_sector_spec_bounds(self):
        a = 0.6
        SectorSpec(0.5 * np.pi * a + 0.2).validate_for(a)
        with pytest.raises(SectorError):
            SectorSpec(0.1).validate_for(a)
        with pytest.raises(SectorError):
            SectorSpec(np.pi * a + 0.1).validate_for(a)

    def test_default_sector_admissible(self):
        for a in (0.3, 0.5, 0.8, 1.2, 1.9):
            default_sector(a).validate_for(a)


class TestMLEval:
    def test_exponential_at_one(self):
        assert ml_eval(MLParams(1.0, 1.0), 1.0) == pytest.approx(np.e, rel=1e-12)

    def test_at_zero(self):
        assert ml_eval(MLParams(0.7, 1.0), 0.0) == pytest.approx(1.0, rel=1e-14)

    def test_erfc_identity_at_minus_two(self):
        # oracle: exp(z^2) * erfc(-z) at z = -2 -> 0.25539567631050575
        frozen = 0.25539567631050575
        assert ml_eval(MLParams(0.5, 1.0), -2.0) == pytest.approx(frozen, rel=1e-10)

    def test_exponential_disk(self):
        rng = np.random.default_rng(3)
        z = rng.uniform(-5, 5, 100) + 1j * rng.uniform(-5, 5, 100)
        z = z[np.abs(z) <= 5.0]
        got = ml_eval(MLParams(1.0, 1.0), z)
        ref = np.exp(z)
        assert np.max(np.abs(got - ref) / np.abs(ref)) < 1e-10

    def test_erfc_identity_real_interval(self):
        x = np.linspace(-3.0, 3.0, 61)
        got = ml_eval(MLParams(0.5, 1.0), x.astype(complex))
        ref = np.exp(x**2) * erfc(-x)
        assert np.max(np.abs(got - ref) / np.abs(ref)) < 1e-8

    @given(
        st.floats(min_value=0.3, max_value=1.5),
        st.floats(min_value=0.4, max_value=2.0),
        st.complex_numbers(max_magnitude=20.0, allow_nan=False, allow_infinity=False),
    )
    @settings(max_examples=40, deadline=None)
    def test_schwarz_reflection(self, a, b, z):
        p = MLParams(a, b)
        v1 = ml_eval(p, np.conj(z))
        v2 = np.conj(ml_eval(p, z))
        if not (np.isfinite(v1) and np.isfinite(v2)):
            # overflow in the exponentially growing direction (documented)
            return
        scale = max(abs(v2), 1e-12)
        assert abs(v1 - v2) / scale < 5e-9

    def test_sector_bound_fitted_constant(self):
        # |E_{a,b}(z)| <= C/(1+|z|) in the decay sector, one fitted C per (a, b)
        for a, b in ((0.6, 1.0), (0.6, 0.6), (0.85, 0.85), (0.45, 1.0)):
            mu = default_sector(a).mu
            radii = np.geomspace(1.0, 1e6, 25)
            for ang in (mu * 1.02, 0.75 * np.pi, np.pi):
                z = radii * np.exp(1j * ang)
                vals = np.abs(ml_eval(MLParams(a, b), z))
                C_fit = np.max(vals[::2] * (1.0 + radii[::2]))
                assert np.isfinite(C_fit) and C_fit > 0
                assert np.all(vals * (1.0 + radii) <= 1.2 * C_fit + 1e-12)

    def test_regime_tags_cover_plane(self):
        p = MLParams(0.7, 1.0)
        tags = {str(t) for t in np.atleast_1d(evaluation_regime(p, [0.2, 30j, -200.0, 120.0]))}
        assert "series" in tags and ("contour" in tags or "asymptotic" in tags)

    def test_regime_crossover_rings(self):
        from fracspec.mittag_leffler import check_crossover

        for a, b in ((0.6, 1.0), (0.85, 0.85)):
            gap = check_crossover(MLParams(a, b), radius=1.02 * max(1.0, 22.0**a))
            assert gap < 1e-6
            gap = check_crossover(MLParams(a, b), radius=51.0)
            assert gap < 1e-6


class TestAsymptoticLeading:
    def test_imaginary_axis_paper_form(self):
        # -(1e3 i)^{-1} / Gamma(0.4) = 0.0004508241991944111j
        got = ml_asymptotic_leading(MLParams(0.6, 1.0), 1e3j)
        assert got == pytest.approx(0.0004508241991944111j, rel=1e-12)

    def test_negative_axis_sign(self):
        got = ml_asymptotic_leading(MLParams(0.6, 1.0), -1e6)
        ref = 1e-6 / gamma_fn(0.4)
        assert got == pytest.approx(ref, rel=1e-12)

    def test_sector_violation(self):
        with pytest.raises(SectorError):
            ml_asymptotic_leading(MLParams(0.6, 1.0), 1e3 + 0j)
        with pytest.raises(SectorError):
            ml_asymptotic_leading(MLParams(0.6, 1.0), 1.0j)

    def test_second_order_remainder_on_imaginary_axis(self):
        # |E_{a,1}(iy) - leading| <= C y^{-2}; the y^{-2} coefficient is
        # 1/|Gamma(1-2a)| so C ~= 1.1/|Gamma(1-2a)| away from crossovers
        a = 0.6
        ys = np.geomspace(1e2, 1e6, 17)
        p = MLParams(a, 1.0)
        lead = np.array([ml_asymptotic_leading(p, 1j * y) for y in ys])
        vals = ml_eval(p, 1j * ys)
        resid = np.abs(vals - lead)
        C = 1.5 / abs(gamma_fn(1.0 - 2 * a))
        assert np.all(resid <= C * ys**-2.0)

    def test_rejects_b_not_one(self):
        with pytest.raises(ValueError):
            ml_asymptotic_leading(MLParams(0.6, 0.6), 1e3j)


class TestDerivativePair:
    def test_zero_xi(self):
        d, c = ml_derivative_pair(0.0, 0.7, 1.0)
        assert abs(d) < 1e-14 and abs(c) < 1e-14

    def test_exponential_case(self):
        d, c = ml_derivative_pair(1.0, 1.0, 1.0)
        assert d == pytest.approx(-np.exp(-1.0), rel=1e-10)
        assert c == pytest.approx(-np.exp(-1.0), rel=1e-10)

    def test_against_finite_difference_oracle(self):
        # oracle: central difference of G(z) = E_{0.6,1}(-(2+i) z^0.6), h = 1e-6
        # -> -0.1685658765487874 + 0.052343883352734544j
        frozen = -0.1685658765487874 + 0.052343883352734544j
        d, c = ml_derivative_pair(2.0 + 1.0j, 0.6, 0.8)
        assert d == pytest.approx(frozen, rel=1e-6)
        assert c == pytest.approx(frozen, rel=1e-6)

    @given(
        st.floats(min_value=0.45, max_value=0.95),
        st.floats(min_value=0.1, max_value=3.0),
        st.floats(min_value=-np.pi, max_value=np.pi),
        st.floats(min_value=0.2, max_value=3.0),
    )
    @settings(max_examples=40, deadline=None)
    def test_pair_agreement(self, a, xi_mag, xi_arg, zr):
        xi = xi_mag * np.exp(1j * xi_arg)
        z = complex(zr, 0.3 * zr)
        if abs(xi * z**a) > 100.0:
            return
        d, c = ml_derivative_pair(xi, a, z)
        scale = max(abs(c), 1e-10)
        assert abs(d - c) / scale < 1e-6


def test_ml_table_rows_shape():
    rows = ml_table_rows(0.7, 1.0, [0.5, 10j, -300.0])
    assert len(rows) == 3
    assert all(len(r) == 7 for r in rows)
    assert rows[0][6] == "series"
