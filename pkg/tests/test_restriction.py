import math

import numpy as np
import pytest

from slelab.loewner import DrivingPath, evolve_chain, sample_driving
from slelab.loewner._kernels import slit_forward
from slelab.numerics import RandomStream, make_params
from slelab.restriction import (HullSpec, avoidance_probability, hull_map, loop_measure_integral,
                                restriction_martingale_check, simulate_restriction, zipper_map)

P83 = make_params(8 / 3)
P2 = make_params(2.0)


class TestHullMap:
    def test_derivative_at_zero(self):
        hm = hull_map(HullSpec(2.0, 1.0))
        assert hm.derivative_at_zero == pytest.approx(2 / math.sqrt(5))
        h = 1e-5
        assert (hm(h) - hm(-h)) / (2 * h) == pytest.approx(2 / math.sqrt(5), rel=1e-8)

    def test_normalisation(self):
        hm = hull_map(HullSpec(2.0, 1.0))
        assert hm(0.0) == pytest.approx(0.0, abs=1e-15)
        z = 1e6 + 1e6j
        assert abs(hm(z) - z) < 3.0

    def test_reflection_symmetry(self):
        assert hull_map(HullSpec(-2.0, 1.0)).derivative_at_zero == hull_map(HullSpec(2.0, 1.0)).derivative_at_zero
        assert hull_map(HullSpec(-3.0, 0.5))(0.0) == pytest.approx(0.0, abs=1e-15)

    def test_empty_hull(self):
        hm = hull_map(HullSpec(2.0, 0.0))
        assert hm.derivative_at_zero == 1.0

    def test_schwarzian_by_differences(self):
        hm = hull_map(HullSpec(2.0, 1.0))
        x, e = 0.0, 1e-3
        f = lambda u: float(hm(u))
        d1 = (f(x + e) - f(x - e)) / (2 * e)
        d2 = (f(x + e) - 2 * f(x) + f(x - e)) / e ** 2
        d3 = (f(x + 2 * e) - 2 * f(x + e) + 2 * f(x - e) - f(x - 2 * e)) / (2 * e ** 3)
        assert float(hm.schwarzian(x)) == pytest.approx(d3 / d1 - 1.5 * (d2 / d1) ** 2, rel=1e-4)

    def test_validation(self):
        with pytest.raises(ValueError):
            HullSpec(0.0, 1.0)
        with pytest.raises(ValueError):
            HullSpec(1.0, -1.0)

    def test_loewner_encoding_grows_the_slit(self):
        hs = HullSpec(2.0, 1.0)
        u, T = hs.loewner_encoding(P83)
        dt = T / 1000
        ch = evolve_chain(DrivingPath(dt, np.zeros(1001)), P83).shifted(u)
        # the tip of the grown slit sits at p + i h
        from slelab.loewner import trace_points
        assert trace_points(ch, 1000).points[-1] == pytest.approx(2.0 + 1.0j, abs=1e-12)


class TestZipper:
    @pytest.mark.parametrize("p,h", [(2.0, 1.0), (-3.0, 0.5), (0.7, 2.0)])
    def test_exact_for_vertical_slit(self, p, h):
        hs = HullSpec(p, h)
        hm = hull_map(hs)
        d, s = zipper_map(hs.points(16), 0.0)
        assert d == pytest.approx(hm.derivative_at_zero, rel=1e-13)
        assert s == pytest.approx(float(hm.schwarzian(0.0)), rel=1e-12)

    def test_converges_in_J(self):
        vals = []
        for J in (16, 32, 64, 128):
            pts = HullSpec(2.0, 1.0).points(J).astype(complex)
            w = np.array([slit_forward(z - 0.5, 1.44) for z in pts])
            w[0] = w[0].real
            u = slit_forward(complex(-0.5), 1.44).real
            vals.append(zipper_map(w, u))
        d = [abs(vals[i][0] - vals[-1][0]) for i in range(3)]
        assert d[0] > d[1] > d[2] and d[1] < 1e-7
        assert abs(vals[2][1] - vals[3][1]) < 1e-8

    def test_first_point_real(self):
        with pytest.raises(ValueError):
            zipper_map([1 + 1j, 1 + 2j])


class TestLoopMeasure:
    def test_zero_time_and_empty_hull(self):
        ch = evolve_chain(sample_driving(P2, 0.1, 1e-3, RandomStream(1)), P2)
        assert loop_measure_integral(P2, HullSpec(2.0, 0.0), ch) == 0.0
        empty = evolve_chain(DrivingPath(1e-3, np.zeros(1)), P2)
        assert loop_measure_integral(P2, HullSpec(2.0, 1.0), empty) == 0.0

    def test_nonnegative_and_nondecreasing(self):
        ch = evolve_chain(sample_driving(P2, 0.2, 1e-3, RandomStream(2)), P2)
        from slelab.loewner import LoewnerChain
        ms = [loop_measure_integral(P2, HullSpec(2.0, 1.0),
                                    LoewnerChain(ch.U[:k], ch.dt[:k], P2, ch.U[k] if k < ch.steps else ch.U_end))
              for k in (50, 100, 200)]
        assert ms[0] > 0 and ms[0] <= ms[1] <= ms[2]


class TestMonteCarlo:
    def test_martingale_t_zero(self):
        r = restriction_martingale_check(P2, HullSpec(2.0, 1.0), 0.0, 10)
        assert r.estimate.mean == pytest.approx(2 / math.sqrt(5)) and r.passed

    def test_small_martingale_run(self):
        r = restriction_martingale_check(P2, HullSpec(2.0, 1.0), 0.1, 200, RandomStream(3))
        assert r.monotone and r.weight_ok and r.positive_s_fraction == 0.0
        assert abs(r.estimate.mean - r.M0) < 5 * r.estimate.stderr + 5e-3

    def test_avoidance_requires_zero_charge(self):
        with pytest.raises(ValueError):
            avoidance_probability(P2, HullSpec(2.0, 1.0), 10)

    def test_avoidance_small_run(self):
        e = avoidance_probability(P83, HullSpec(2.0, 1.0), 200, stream=RandomStream(4))
        assert 0.8 < e.mean <= 1.0

    def test_tiny_hull_never_hit(self):
        s = simulate_restriction(P83, HullSpec(2.0, 1e-4), 50, dt=1e-3, zipper=False, stream=RandomStream(5))
        assert not s.hit.any()
