import math
import threading

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from mfpp.errors import DomainError
from mfpp.model import (
    BernsteinFamily,
    JumpDistribution,
    ModelParams,
    PowerSeriesTNu,
    bernstein_eval,
    convolution_power,
    indices_with_total,
    jump_pmf,
    leq,
    levy_density,
    levy_moment_rate,
    multi_indices,
    multinomial,
    precedes,
    s_lambda,
)


class TestParams:
    @pytest.mark.parametrize("lam, s", [((1.0,), 1.0), ((1.0, 2.0), 3.0), ((0.5, 0.5, 1.0), 2.0)])
    def test_s_lambda(self, lam, s):
        assert s_lambda(ModelParams(lam, 0.5, 0.5)) == s

    @pytest.mark.parametrize("lam, eta, nu", [
        ((), 0.5, 0.5), ((1.0, -1.0), 0.5, 0.5), ((1.0,), 0.0, 0.5),
        ((1.0,), 1.2, 0.5), ((1.0,), 0.5, 0.0), ((math.nan,), 0.5, 0.5),
    ])
    def test_invalid(self, lam, eta, nu):
        with pytest.raises(DomainError):
            ModelParams(lam, eta, nu)

    def test_replace_validates(self):
        p = ModelParams((1.0, 2.0), 0.7, 0.8)
        assert p.replace(nu=1.0).nu == 1.0
        with pytest.raises(DomainError):
            p.replace(eta=2.0)


class TestMultiIndex:
    def test_orders(self):
        assert leq((1, 2), (1, 3))
        assert not leq((2, 0), (1, 3))
        assert precedes((1, 2), (1, 3))
        assert not precedes((1, 3), (1, 3))

    def test_enumeration(self):
        box = list(multi_indices((2, 1)))
        assert len(box) == 6 and box[0] == (0, 0) and box[-1] == (2, 1)
        level = list(indices_with_total(3, 3))
        assert len(level) == math.comb(5, 2)
        assert all(sum(k) == 3 for k in level)

    def test_multinomial(self):
        assert multinomial((2, 1, 1)) == 12


class TestJumps:
    def test_geometric(self):
        g = JumpDistribution.geometric((0.4,))
        assert jump_pmf(g, 0, 1) == pytest.approx(0.4, abs=1e-16)
        assert convolution_power(g, 0, 2, 2) == pytest.approx(0.16, abs=1e-16)

    def test_logarithmic(self):
        d = JumpDistribution.logarithmic((math.exp(-1.0),))
        assert jump_pmf(d, 0, 1) == pytest.approx(1.0 - math.exp(-1.0), rel=1e-14)

    def test_pig_normalized(self):
        # q_1 = C(-1/2, 1) x / ((2 beta + 1)^(-1/2) - 1) with x = 2 beta / (2 beta + 1)
        d = JumpDistribution.pig((1.0,), (1.0,))
        assert jump_pmf(d, 0, 1) == pytest.approx(0.5 / (3.0 - math.sqrt(3.0)) * 2.0, rel=1e-14)
        assert jump_pmf(d, 0, 1) == pytest.approx(0.7886751345948128, rel=1e-14)
        assert d.table(0).sum() == pytest.approx(1.0, abs=1e-10)

    def test_pig_independent_oracle(self):
        # PIG jump law: P(Y = j) proportional to binom(j - 3/2, j) x^j
        beta = 2.0
        x = 2 * beta / (2 * beta + 1)
        with mpmath.workdps(30):
            w = [mpmath.binomial(j - 1.5, j) * x ** j for j in range(1, 2000)]
            total = mpmath.fsum(w)
            ref = [float(v / total) for v in w[:5]]
        d = JumpDistribution.pig((beta,), (1.0,))
        for j in range(1, 6):
            assert jump_pmf(d, 0, j) == pytest.approx(ref[j - 1], rel=1e-9)

    def test_pig_truncation_guard(self):
        with pytest.raises(DomainError):
            JumpDistribution.pig((20.0,), (1.0,)).table(0)

    def test_zero_and_small_powers(self):
        g = JumpDistribution.geometric((0.3, 0.6))
        assert convolution_power(g, 1, 0, 0) == 1.0
        assert convolution_power(g, 1, 0, 3) == 0.0
        assert convolution_power(g, 0, 3, 2) == 0.0

    @pytest.mark.parametrize("dist", [
        JumpDistribution.geometric((0.35,)),
        JumpDistribution.logarithmic((0.5,)),
        JumpDistribution.pig((1.5,), (1.0,)),
        JumpDistribution.unit(1),
    ])
    def test_convolution_powers_sum_to_one(self, dist):
        for h in range(1, 6):
            total = math.fsum(convolution_power(dist, 0, h, j)
                              for j in range(h, dist.j_max(0) * h + 1))
            assert total == pytest.approx(1.0, abs=1e-9)
            assert convolution_power(dist, 0, 1, 3) == jump_pmf(dist, 0, 3)

    def test_implied_intensity_enforced(self):
        d = JumpDistribution.logarithmic((0.5,))
        lam = -math.log(0.5)
        d.validate(ModelParams((lam,), 0.5, 0.5))
        with pytest.raises(DomainError):
            d.validate(ModelParams((lam * (1 + 1e-10),), 0.5, 0.5))
        p = JumpDistribution.pig((1.0,), (2.0,))
        assert p.implied_intensities()[0] == pytest.approx(2.0 * (math.sqrt(3.0) - 1.0), rel=1e-15)

    @pytest.mark.parametrize("dist", [
        JumpDistribution.geometric((0.35,)),
        JumpDistribution.logarithmic((0.5,)),
        JumpDistribution.pig((1.5,), (1.0,)),
        JumpDistribution.unit(1),
    ])
    def test_pgf_complement_matches_table(self, dist):
        q = dist.table(0)
        for u in (0.0, 0.3, 0.9):
            direct = 1.0 - float(np.polynomial.polynomial.polyval(u, q))
            assert dist.pgf_complement(0, u) == pytest.approx(direct, abs=1e-9)
        assert dist.pgf_complement(0, 1.0) == 0.0

    def test_geometric_unrestricted(self):
        JumpDistribution.geometric((0.5,)).validate(ModelParams((17.0,), 0.5, 0.5))

    def test_concurrent_power_tables(self):
        d = JumpDistribution.geometric((0.4,))
        out = []

        def work():
            out.append(convolution_power(d, 0, 4, 7))
        threads = [threading.Thread(target=work) for _ in range(8)]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
        assert len(set(out)) == 1
        # negative binomial: C(j-1, h-1) a^h (1-a)^(j-h)
        assert out[0] == pytest.approx(math.comb(6, 3) * 0.4 ** 4 * 0.6 ** 3, rel=1e-13)


class TestBernstein:
    def test_values(self):
        assert bernstein_eval(BernsteinFamily.stable(0.5), 4.0) == pytest.approx(2.0)
        assert bernstein_eval(BernsteinFamily.gamma(1.0, 1.0), math.e - 1.0) == pytest.approx(1.0)
        assert bernstein_eval(BernsteinFamily.stable(0.3), 0.0) == 0.0
        assert bernstein_eval(BernsteinFamily.gamma(2.0, 3.0), 0.0) == 0.0

    @pytest.mark.parametrize("f, n, s, expected", [
        (BernsteinFamily.stable(0.5), 1, 1.0, 0.5),
        (BernsteinFamily.gamma(1.0, 1.0), 1, 1.0, 0.5),
        (BernsteinFamily.gamma(2.0, 0.0, allow_zero_rate=True), 2, 1.0, 2.0),
    ])
    def test_moment_rates(self, f, n, s, expected):
        assert levy_moment_rate(f, n, s) == pytest.approx(expected, rel=1e-14)

    def test_zero_order_rejected(self):
        with pytest.raises(DomainError):
            levy_moment_rate(BernsteinFamily.stable(0.5), 0, 1.0)

    def test_zero_rate_needs_opt_in(self):
        with pytest.raises(DomainError):
            BernsteinFamily.gamma(1.0, 0.0)

    @pytest.mark.parametrize("f", [BernsteinFamily.stable(0.4), BernsteinFamily.gamma(1.5, 0.7)])
    @pytest.mark.parametrize("s", [0.5, 1.0, 3.0])
    def test_moment_rates_against_quadrature(self, f, s):
        for n in range(1, 7):
            val, _ = integrate.quad(lambda r: r ** n * math.exp(-s * r) * levy_density(f, r),
                                    0.0, np.inf, epsabs=0, epsrel=1e-12, limit=200)
            assert levy_moment_rate(f, n, s) == pytest.approx(val, rel=1e-7)

    @given(st.floats(0.05, 0.95), st.floats(0.01, 50.0))
    def test_stable_against_levy_representation(self, eta, mu):
        # f(mu) = int (1 - e^{-mu r}) rho(dr)
        f = BernsteinFamily.stable(eta)
        val, _ = integrate.quad(lambda r: -math.expm1(-mu * r) * levy_density(f, r),
                                0.0, np.inf, limit=400, epsrel=1e-10)
        assert bernstein_eval(f, mu) == pytest.approx(val, rel=1e-6, abs=1e-9)


class TestPowerSeries:
    def test_evaluation_and_tail(self):
        ps = PowerSeriesTNu(0.5, [1, 2, 3])
        v, tail = ps.evaluate(4.0)
        assert v == 1 + 2 * 2 + 3 * 4
        assert tail == 12.0
        assert ps(0.0) == 1.0

    def test_arithmetic(self):
        a = PowerSeriesTNu(0.5, [1, 2])
        b = PowerSeriesTNu(0.5, [0, 1, 1])
        assert (a + b).evaluate(1.0)[0] == 5.0
        assert (a - b).evaluate(1.0)[0] == 1.0
        assert (2 * a).evaluate(1.0)[0] == 6.0
        with pytest.raises(DomainError):
            a + PowerSeriesTNu(1.0, [1])
