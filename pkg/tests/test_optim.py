import numpy as np
import pytest

from pexplain.geometry import PoincarePoint, conformal_factor, distance
from pexplain.optim import (OptimConfig, ParamSet, adam_step,
                            check_gradient, exp_map, init_adam_state,
                            riemannian_grad)


def textbook_adam(w, grads, lr=0.1, b1=0.9, b2=0.999, eps=1e-8):
    """Straight-line reference trace of the Adam recurrences."""
    m = v = 0.0
    out = []
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        w = w - lr * mhat / (np.sqrt(vhat) + eps)
        out.append(w)
    return out


class TestRiemannianGrad:
    def test_at_origin_quarter(self):
        g = np.array([1.0, -2.0, 3.0])
        assert np.allclose(riemannian_grad(np.zeros(3), g), g / 4.0)

    def test_half_norm_sixteenth(self):
        x = np.sqrt(0.5 / 4) * np.ones(4)
        g = np.ones(4)
        assert np.allclose(riemannian_grad(x, g), g / 16.0, rtol=1e-12)

    def test_zero_gradient(self):
        assert np.all(riemannian_grad(np.array([0.3, 0.1]), np.zeros(2)) == 0)

    def test_scale_in_range(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            x = rng.normal(0, 0.3, 5)
            x *= rng.uniform(0, 0.99) / np.linalg.norm(x)
            g = rng.normal(0, 1, 5)
            out = riemannian_grad(x, g)
            nz = g != 0
            scale = out[nz] / g[nz]
            assert np.all(scale > 0) and np.all(scale <= 0.25 + 1e-15)


class TestExpMap:
    def test_zero_tangent(self):
        x = PoincarePoint(np.array([0.3, -0.2]))
        assert np.allclose(exp_map(x, np.zeros(2)).coords, x.coords)

    def test_origin_norm(self):
        v = np.array([0.7, 0.1, -0.3])
        out = exp_map(PoincarePoint.origin(3), v)
        assert out.norm() == pytest.approx(np.tanh(np.linalg.norm(v)),
                                           rel=1e-12)

    def test_small_step_distance_matches_metric(self):
        # moving along exp_map by a small v covers distance lambda_x |v|
        rng = np.random.default_rng(1)
        for _ in range(10):
            x = PoincarePoint(rng.normal(0, 0.2, 4) * 0.5)
            v = rng.normal(0, 1e-4, 4)
            moved = exp_map(x, v)
            expect = conformal_factor(x) * np.linalg.norm(v)
            assert distance(x, moved) == pytest.approx(expect, rel=1e-5)


class TestAdamStep:
    def test_zero_gradients_keep_params(self):
        params = ParamSet(euclidean={"w": np.array([1.0, 2.0])},
                          hyperbolic={"c": np.array([[0.1, 0.2]])})
        grads = ParamSet(euclidean={"w": np.zeros(2)},
                         hyperbolic={"c": np.zeros((1, 2))})
        state = init_adam_state(params)
        out = adam_step(params, grads, state, OptimConfig(lr=0.1))
        assert np.allclose(out.euclidean["w"], params.euclidean["w"])
        assert np.allclose(out.hyperbolic["c"], params.hyperbolic["c"])

    def test_matches_textbook_trace(self):
        expect = textbook_adam(1.0, [0.5, -0.3, 0.2])
        params = ParamSet(euclidean={"w": np.array([1.0])})
        state = init_adam_state(params)
        cfg = OptimConfig(lr=0.1)
        got = []
        for g in (0.5, -0.3, 0.2):
            params = adam_step(params, ParamSet(euclidean={"w": np.array([g])}),
                               state, cfg)
            got.append(float(params.euclidean["w"][0]))
        assert got == pytest.approx(expect, rel=1e-14)

    def test_deterministic(self):
        def run():
            params = ParamSet(euclidean={"w": np.array([0.5, -0.5])},
                              hyperbolic={"c": np.array([[0.2, 0.1]])})
            state = init_adam_state(params)
            rng = np.random.default_rng(7)
            for _ in range(20):
                grads = ParamSet(
                    euclidean={"w": rng.normal(0, 1, 2)},
                    hyperbolic={"c": rng.normal(0, 1, (1, 2))})
                params = adam_step(params, grads, state, OptimConfig(lr=1e-2))
            return params
        a, b = run(), run()
        assert np.array_equal(a.euclidean["w"], b.euclidean["w"])
        assert np.array_equal(a.hyperbolic["c"], b.hyperbolic["c"])

    def test_hyperbolic_param_never_leaves_ball(self):
        rng = np.random.default_rng(2)
        params = ParamSet(hyperbolic={"c": rng.normal(0, 0.05, (3, 4))})
        state = init_adam_state(params)
        cfg = OptimConfig(lr=0.05)
        for _ in range(10_000):
            grads = ParamSet(hyperbolic={"c": rng.normal(0, 5.0, (3, 4))})
            params = adam_step(params, grads, state, cfg)
            sq = np.einsum("ij,ij->i", params.hyperbolic["c"],
                           params.hyperbolic["c"])
            assert np.all(sq <= (1.0 - 1e-5) ** 2 + 1e-12)

    def test_rejects_non_finite_gradients(self):
        params = ParamSet(euclidean={"w": np.array([1.0])})
        state = init_adam_state(params)
        bad = ParamSet(euclidean={"w": np.array([np.inf])})
        with pytest.raises(ValueError):
            adam_step(params, bad, state, OptimConfig())


class TestCheckGradient:
    def test_quadratic_loss(self):
        rng = np.random.default_rng(3)
        W = rng.normal(0, 1, (3, 4))

        def loss(p):
            w = p.euclidean["W"]
            return 0.5 * float(np.sum(w * w)), ParamSet(euclidean={"W": w.copy()})

        report = check_gradient(loss, ParamSet(euclidean={"W": W}), tol=1e-6)
        assert report.passed
        assert report.max_rel_err < 1e-8

    def test_detects_wrong_gradient(self):
        def loss(p):
            w = p.euclidean["W"]
            return float(np.sum(w * w)), ParamSet(euclidean={"W": w.copy()})

        report = check_gradient(
            loss, ParamSet(euclidean={"W": np.array([1.0, 2.0])}), tol=1e-4)
        assert not report.passed
