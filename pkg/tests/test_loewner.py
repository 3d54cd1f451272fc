import math

import numpy as np
import pytest

from slelab.numerics import RandomStream, ZeroStream, make_params
from slelab.loewner import (DrivingPath, LoewnerChain, SwallowedError, dist_to_point, evaluate_map, evolve_chain,
                            map_derivative, q_ratio, sample_driving, trace_points, track_boundary, upsilon)
from slelab.loewner import _kernels as K

P = make_params(8 / 3)


def zero_chain(T=1.0, dt=1e-3, params=P):
    return evolve_chain(DrivingPath(dt, np.zeros(int(round(T / dt)) + 1)), params)


def random_chain(seed=1, T=1.0, dt=1e-3, params=P):
    return evolve_chain(sample_driving(params, T, dt, RandomStream(seed)), params)


class TestDriving:
    def test_must_start_at_zero(self):
        with pytest.raises(ValueError):
            DrivingPath(0.1, np.array([1.0, 2.0]))

    def test_sample_shape_and_determinism(self):
        d1 = sample_driving(P, 1.0, 0.01, RandomStream(3))
        d2 = sample_driving(P, 1.0, 0.01, RandomStream(3))
        assert d1.steps == 100 and np.array_equal(d1.values, d2.values)
        assert d1.horizon == pytest.approx(1.0)

    def test_zero_stream_gives_zero_path(self):
        d = sample_driving(P, 1.0, 0.1, ZeroStream())
        assert np.all(d.values == 0)

    def test_bad_dt(self):
        with pytest.raises(ValueError):
            sample_driving(P, 1.0, 0.0, RandomStream(0))


class TestZeroDriving:
    def test_map_closed_form(self):
        ch = zero_chain()
        z = np.array([3.0 + 0.5j, -1 + 2j, 0.2 + 0.1j])
        ref = np.sqrt(z ** 2 + 2 * P.a)
        ref = np.where(ref.imag < 0, -ref, ref)
        assert np.allclose(evaluate_map(ch, z), ref, atol=1e-12)

    def test_real_points(self):
        ch = zero_chain()
        assert evaluate_map(ch, 3.0) == pytest.approx(math.sqrt(9 + 2 * P.a), rel=1e-13)
        assert evaluate_map(ch, -3.0) == pytest.approx(-math.sqrt(9 + 2 * P.a), rel=1e-13)
        assert map_derivative(ch, 0.5) == pytest.approx(0.5 / math.sqrt(0.25 + 2 * P.a), rel=1e-12)

    def test_tip(self):
        tr = trace_points(zero_chain(), stride=100)
        assert tr.points[-1] == pytest.approx(1j * math.sqrt(2 * P.a), abs=1e-12)
        assert np.allclose(tr.points.real, 0.0, atol=1e-12)
        assert np.all(np.diff(tr.points.imag) > 0)

    def test_dist_to_point(self):
        tr = trace_points(zero_chain(), stride=10)
        assert dist_to_point(tr, 2.0) == pytest.approx(2.0, abs=1e-12)
        assert dist_to_point(tr, 1.0 + 0.5j) == pytest.approx(1.0, abs=1e-12)

    def test_track_and_phi(self):
        T = 1.0
        ch = zero_chain(T)
        tr = track_boundary(ch, 0.5, 1.0)
        c = 2 * P.a * T
        Z, X = math.sqrt(0.25 + c), math.sqrt(1 + c)
        assert tr.Z[-1] == pytest.approx(Z, rel=1e-12)
        assert tr.X[-1] == pytest.approx(X, rel=1e-12)
        assert tr.Y[-1] == pytest.approx(X - Z, rel=1e-10)
        gx, gy = 0.5 / Z, 1.0 / X
        assert q_ratio(ch, 0.5, 1.0) == pytest.approx(0.25 * gx * gy / (X - Z) ** 2, rel=1e-10)
        assert not tr.swallowed

    def test_mirrored_track(self):
        ch = zero_chain()
        a = track_boundary(ch, 0.5, 1.0)
        b = track_boundary(ch, -0.5, -1.0)
        assert b.mirrored and np.allclose(a.phi, b.phi)

    def test_upsilon_starts_at_one(self):
        tr = track_boundary(zero_chain(), 0.5, 1.0)
        u = upsilon(tr)
        assert u[0] == 1.0 and np.all(np.diff(u) < 0)


class TestRandomChain:
    def test_hydrodynamic_normalisation(self):
        ch = random_chain()
        z = 1e6 * (1 + 1j)
        g = evaluate_map(ch, np.array([z]))[0]
        # g(z) = z + a t / z + O(1/z^2) around the origin of the hull
        assert abs((g - z) * z / (P.a * ch.time) - 1) < 1e-3

    def test_derivative_by_differences(self):
        ch = random_chain(2)
        x, h = 3.0, 1e-5
        fd = (evaluate_map(ch, x + h) - evaluate_map(ch, x - h)) / (2 * h)
        assert map_derivative(ch, x) == pytest.approx(fd, rel=1e-7)

    def test_upper_half_plane_preserved(self):
        ch = random_chain(3)
        z = np.array([0.1 + 0.01j, -2 + 0.3j, 5 + 5j])
        assert np.all(evaluate_map(ch, z).imag > 0)

    def test_brownian_scaling(self):
        d = sample_driving(P, 1.0, 1e-3, RandomStream(4))
        c = 2.0
        ch, chs = evolve_chain(d, P), evolve_chain(d.scaled(c), P)
        z = np.array([1.0 + 1.0j, -0.5 + 2j])
        assert np.allclose(evaluate_map(chs, z), evaluate_map(ch, c * z) / c, rtol=1e-12)

    def test_composition(self):
        ch = random_chain(5)
        a = LoewnerChain(ch.U[:400], ch.dt[:400], P, ch.U[400])
        b = LoewnerChain(ch.U[400:], ch.dt[400:], P, ch.U_end)
        z = np.array([0.3 + 0.4j])
        assert np.allclose(evaluate_map(a.then(b), z), evaluate_map(b, evaluate_map(a, z)))

    def test_shift_and_reflect(self):
        ch = random_chain(6)
        z = np.array([0.7 + 0.2j])
        assert np.allclose(evaluate_map(ch.shifted(1.5), z + 1.5), evaluate_map(ch, z) + 1.5)
        assert np.allclose(evaluate_map(ch.reflected(), -np.conj(z)), -np.conj(evaluate_map(ch, z)))

    def test_tips_are_mapped_to_driving(self):
        ch = random_chain(7, T=0.1, dt=1e-3)
        tr = trace_points(ch, stride=1)
        # tip k maps (through the first k steps) to the top of slit k-1, i.e. near U_k
        k = 50
        sub = LoewnerChain(ch.U[:k], ch.dt[:k], P, ch.U[k])
        w = evaluate_map(sub, np.array([tr.points[k] + 1e-12j]))[0]
        assert abs(w - ch.U[k - 1]) < 1e-6


class TestSwallowing:
    def test_fast_drift_swallows(self):
        # a driving jump past g(x) swallows x (smooth driving never does)
        dt = 1e-3
        v = np.zeros(1001)
        v[500:] = 2.0
        d = DrivingPath(dt, v)
        ch = evolve_chain(d, make_params(6.0))
        with pytest.raises(SwallowedError):
            evaluate_map(ch, 0.2)
        tr = track_boundary(ch, 0.2, 5.0)
        assert tr.swallowed and tr.swallow_time < 1.0
        assert q_ratio(ch, 0.2, 5.0) == 0.0


class TestKernels:
    def test_slit_maps_invert(self):
        w = 0.3 + 0.7j
        assert K.slit_inverse(K.slit_forward(w, 0.5), 0.5) == pytest.approx(w)
        assert K.slit_forward(-2.0 + 0j, 1.0).real < 0

    def test_flow_points_converges(self):
        rng = np.random.default_rng(1)
        w, gp, gaps, st, k = K.flow_points(np.array([0.5, 1.0]), P.a, 1e-3, 1e-2, 1e-4, 10 ** 7, 1e-9, rng)
        assert st == K.STATUS_OK
        q = 0.25 * gp[0] * gp[1] / gaps[0] ** 2
        assert 0 < q <= 1

    def test_trace_min_dist_refinement(self):
        ch = random_chain(8, T=0.5, dt=1e-3)
        m = ch.steps
        full = K.trace_min_dist(ch.U, ch.dt, P.a, 0.4 + 0.0j, 0, m, 1, 10.0)
        coarse = K.trace_min_dist(ch.U, ch.dt, P.a, 0.4 + 0.0j, 0, m, 16, 10.0)
        assert coarse == pytest.approx(full, rel=1e-12)

    def test_pair_history_phi_matches_flow(self):
        a = P.a
        r1 = K.flow_pair_history(0.5, a, 1e-3, 1e-2, 1e-4, 1e-3, 10 ** 7, 1e-9, np.random.default_rng(3))
        assert r1[5] == K.STATUS_OK
        assert 0 < r1[4] <= 1
        # Upsilon decreases from 1 and the distance bound at x stays below x
        ups, bx = r1[2], r1[3]
        assert ups[0] == 1.0 and np.all(np.diff(ups) <= 1e-15)
        assert np.all(bx <= 0.5 + 1e-15)
