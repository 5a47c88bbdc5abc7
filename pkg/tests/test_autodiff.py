"""Tests for the reverse-mode engine: primitive forward values, backward
rules against central finite differences, and the tape contract."""

import math

import numpy as np
import pytest

from tempgate import autodiff as ad


def central_diff(f, x, eps=1e-6):
    """Scalar central difference d f / d x at every coordinate of x."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for j in range(flat.size):
        orig = flat[j]
        flat[j] = orig + eps
        fp = f()
        flat[j] = orig - eps
        fm = f()
        flat[j] = orig
        gf[j] = (fp - fm) / (2 * eps)
    return g


def run_backward(build):
    with ad.Tape() as tape:
        out = build()
        grads = tape.backward(out)
    return out, grads


class TestForwardValues:
    def test_segment_softmax_uniform_logits(self):
        a = ad.constant([0.0, 0.0, 0.0])
        alpha = ad.segment_softmax(a, [0, 0, 0], temperature=1.0)
        np.testing.assert_allclose(alpha.data, [1 / 3] * 3, atol=1e-15)

    def test_segment_softmax_large_temperature_is_uniform(self):
        a = ad.constant([1.0, 2.0, 3.0])
        alpha = ad.segment_softmax(a, [0, 0, 0], temperature=1e9)
        np.testing.assert_allclose(alpha.data, [1 / 3] * 3, atol=1e-8)

    def test_segment_softmax_reference_values(self):
        # Independent oracle: direct evaluation of the softmax formula.
        e = [1.0, 2.0, 3.0]
        z = sum(math.exp(v) for v in e)
        expected = [math.exp(v) / z for v in e]
        np.testing.assert_allclose(expected, [0.090031, 0.244728, 0.665241], atol=1e-6)
        a = ad.constant(e)
        alpha = ad.segment_softmax(a, [0, 0, 0], temperature=1.0)
        np.testing.assert_allclose(alpha.data, expected, atol=1e-12)

    def test_segment_softmax_multiple_segments(self):
        a = ad.constant([0.0, math.log(3.0), 5.0])
        alpha = ad.segment_softmax(a, [0, 0, 1], temperature=1.0)
        np.testing.assert_allclose(alpha.data, [0.25, 0.75, 1.0], atol=1e-12)

    def test_softplus_and_sigmoid_match_reference(self):
        x = np.linspace(-30, 30, 101)
        sp = ad.softplus(ad.constant(x)).data
        sg = ad.sigmoid(ad.constant(x)).data
        np.testing.assert_allclose(sp, np.logaddexp(0, x), rtol=1e-12)
        np.testing.assert_allclose(sg, 1 / (1 + np.exp(-x)), rtol=1e-12)

    def test_leaky_relu_values(self):
        x = ad.constant([-2.0, 0.0, 3.0])
        np.testing.assert_allclose(ad.leaky_relu(x, 0.2).data, [-0.4, 0.0, 3.0])


class TestErrors:
    def test_matmul_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape mismatch"):
            ad.matmul(ad.constant(np.ones((2, 3))), ad.constant(np.ones((2, 3))))

    def test_non_positive_temperature(self):
        a = ad.constant([1.0, 2.0])
        with pytest.raises(ValueError, match="temperature"):
            ad.segment_softmax(a, [0, 0], temperature=0.0)
        with pytest.raises(ValueError, match="temperature"):
            ad.segment_softmax(a, [0, 0], temperature=ad.constant(-1.0))

    def test_unsorted_segments(self):
        a = ad.constant([1.0, 2.0, 3.0])
        with pytest.raises(ValueError, match="sorted"):
            ad.segment_softmax(a, [1, 0, 1], temperature=1.0)

    def test_backward_non_scalar(self):
        with ad.Tape() as tape:
            out = ad.mul(ad.param(np.ones(3)), 2.0)
            with pytest.raises(ValueError, match="scalar"):
                tape.backward(out)

    def test_non_finite_tensor_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            ad.constant([1.0, np.inf])

    def test_nested_tape_rejected(self):
        with ad.Tape():
            with pytest.raises(RuntimeError, match="already active"):
                ad.Tape().__enter__()


class TestBackward:
    def test_sum_gradient_is_ones(self):
        w = ad.param(np.arange(6.0).reshape(2, 3))
        _, grads = run_backward(lambda: ad.summ(w))
        np.testing.assert_array_equal(grads[w], np.ones((2, 3)))

    def test_sigmoid_gradient_at_zero(self):
        x = ad.param(0.0)
        _, grads = run_backward(lambda: ad.sigmoid(x))
        np.testing.assert_allclose(grads[x], 0.25, atol=1e-15)

    def test_fanout_accumulates(self):
        x = ad.param(3.0)
        _, grads = run_backward(lambda: ad.add(ad.mul(x, x), x))  # x^2 + x
        np.testing.assert_allclose(grads[x], 7.0)

    def test_no_recording_without_tape(self):
        x = ad.param(2.0)
        out = ad.mul(x, x)
        assert out._backward is None and out._prev == ()

    def test_gradient_map_covers_unused_path(self):
        x = ad.param(1.0)
        y = ad.param(5.0)
        with ad.Tape() as tape:
            out = ad.mul(x, 2.0) + ad.mul(y, 0.0)
            grads = tape.backward(out)
        np.testing.assert_allclose(grads[x], 2.0)
        np.testing.assert_allclose(grads[y], 0.0)


def primitive_cases(rng):
    """(name, params, builder) triples covering every primitive's backward."""
    a = ad.param(rng.standard_normal((4, 5)) + np.sign(rng.standard_normal((4, 5))))
    b = ad.param(rng.standard_normal((4, 5)) + np.sign(rng.standard_normal((4, 5))))
    m1 = ad.param(rng.standard_normal((3, 4)))
    m2 = ad.param(rng.standard_normal((4, 2)))
    pos = ad.param(rng.random((4, 5)) + 0.5)
    seg_vals = ad.param(rng.standard_normal((6, 2)))
    seg_ids = np.array([0, 0, 1, 1, 1, 3])  # segment 2 empty: exercises zero rows
    sm_vals = ad.param(rng.standard_normal((6, 2)))
    sm_ids = np.array([0, 0, 1, 1, 1, 2])
    idx = np.array([2, 0, 1, 2])
    temp = ad.param(1.7)
    cvec = rng.standard_normal(5)
    cases = [
        ("add", [a, b], lambda: ad.summ(ad.mul(ad.add(a, b), b))),
        ("sub", [a, b], lambda: ad.summ(ad.mul(ad.sub(a, b), a))),
        ("mul", [a, b], lambda: ad.summ(ad.mul(a, b))),
        ("div", [a, pos], lambda: ad.summ(ad.div(a, pos))),
        ("neg", [a], lambda: ad.summ(ad.mul(ad.neg(a), a))),
        ("matmul", [m1, m2], lambda: ad.summ(ad.mul(ad.matmul(m1, m2), 0.3))),
        ("leaky_relu", [a], lambda: ad.summ(ad.leaky_relu(a, 0.2))),
        ("relu", [a], lambda: ad.summ(ad.mul(ad.relu(a), a))),
        ("elu", [a], lambda: ad.summ(ad.mul(ad.elu(a), 0.7))),
        ("sigmoid", [a], lambda: ad.summ(ad.sigmoid(a))),
        ("softplus", [a], lambda: ad.summ(ad.softplus(a))),
        ("exp", [a], lambda: ad.summ(ad.exp(ad.mul(a, 0.3)))),
        ("log", [pos], lambda: ad.summ(ad.log(pos))),
        ("concat", [a, b], lambda: ad.summ(ad.mul(ad.concat([a, b], axis=1), 0.5))),
        ("slice", [a], lambda: ad.summ(ad.slice_axis(a, 1, 1, 4))),
        ("reshape", [a], lambda: ad.summ(ad.mul(ad.reshape(a, (2, 10)), 2.0))),
        ("gather", [a], lambda: ad.summ(ad.mul(ad.gather_rows(a, idx), 1.5))),
        (
            "segment_sum",
            [seg_vals],
            lambda: ad.summ(ad.mul(ad.segment_sum(seg_vals, seg_ids, 4), 0.5)),
        ),
        (
            "segment_softmax",
            [sm_vals],
            lambda: ad.summ(
                ad.mul(ad.segment_softmax(sm_vals, sm_ids, temperature=0.7), sm_vals)
            ),
        ),
        (
            "segment_softmax_temp",
            [sm_vals, temp],
            lambda: ad.summ(
                ad.mul(ad.segment_softmax(sm_vals, sm_ids, temperature=temp), sm_vals)
            ),
        ),
        ("mean", [a], lambda: ad.mul(ad.reduce_mean(a), 3.0)),
        ("mean_axis", [a], lambda: ad.summ(ad.mul(ad.reduce_mean(a, axis=0), cvec))),
        ("sum_axis", [a], lambda: ad.summ(ad.mul(ad.summ(a, axis=1, keepdims=True), 0.5))),
        ("broadcast_add", [a, temp], lambda: ad.summ(ad.sigmoid(ad.add(a, temp)))),
    ]
    return cases


class TestPrimitiveGradients:
    def test_every_primitive_matches_central_differences(self):
        # Inputs are resampled away from kinks: |x| >= ~1 for leaky/relu cases.
        rng = np.random.default_rng(7)
        for name, params, build in primitive_cases(rng):
            _, grads = run_backward(build)
            for p in params:
                numeric = central_diff(lambda: float(build().data), p.data)
                analytic = grads[p]
                err = np.max(
                    np.abs(analytic - numeric)
                    / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
                )
                assert err < 1e-4, f"{name}: max rel error {err}"


class TestSegmentSoftmaxProperties:
    def test_rows_sum_to_one_and_nonnegative(self):
        rng = np.random.default_rng(0)
        for trial in range(20):
            n_seg = rng.integers(1, 8)
            counts = rng.integers(1, 9, size=n_seg)
            seg = np.repeat(np.arange(n_seg), counts)
            e = ad.constant(rng.standard_normal((seg.size, 3)) * 10)
            t = float(rng.uniform(0.05, 50.0))
            alpha = ad.segment_softmax(e, seg, temperature=t).data
            assert np.all(alpha >= 0)
            start = 0
            for c in counts:
                np.testing.assert_allclose(
                    alpha[start : start + c].sum(axis=0), 1.0, atol=1e-12
                )
                start += c

    def test_temperature_equals_prescaling(self):
        rng = np.random.default_rng(1)
        e = rng.standard_normal(12)
        seg = np.array([0] * 5 + [1] * 7)
        for t in [0.1, 1.0, 7.3, 250.0]:
            a1 = ad.segment_softmax(ad.constant(e), seg, temperature=t).data
            a2 = ad.segment_softmax(ad.constant(e / t), seg, temperature=1.0).data
            np.testing.assert_allclose(a1, a2, atol=1e-12)

    def test_concentration_hook(self):
        ad.set_concentration_check(True)
        try:
            rng = np.random.default_rng(2)
            e = ad.constant(rng.standard_normal(40))
            seg = np.repeat(np.arange(8), 5)
            ad.segment_softmax(e, seg, temperature=0.3)
        finally:
            ad.set_concentration_check(True)  # left on for the whole suite


class TestTemperatureGradient:
    def test_softplus_chain_matches_finite_differences(self):
        # T = softplus(theta) + eps differentiated through the softmax.
        rng = np.random.default_rng(3)
        e_data = rng.standard_normal((7, 2))
        seg = np.array([0, 0, 0, 1, 1, 1, 1])
        theta = ad.param(0.4)
        y = rng.standard_normal((7, 2))

        def build():
            t = ad.add(ad.softplus(theta), 1e-3)
            alpha = ad.segment_softmax(ad.constant(e_data), seg, temperature=t)
            return ad.summ(ad.mul(alpha, y))

        _, grads = run_backward(build)
        assert np.all(np.isfinite(grads[theta]))
        numeric = central_diff(lambda: float(build().data), theta.data)
        np.testing.assert_allclose(grads[theta], numeric, rtol=1e-6, atol=1e-9)


class TestGradCheck:
    def test_linear_function_is_exact(self):
        rng = np.random.default_rng(4)
        w = ad.param(rng.standard_normal(6))
        c = rng.standard_normal(6)
        err = ad.grad_check(lambda: ad.summ(ad.mul(w, c)), [w])
        assert err < 1e-9

    def test_two_layer_attention_style_graph(self):
        # A miniature two-round gather/softmax/aggregate computation built
        # straight from primitives, checked against central differences.
        rng = np.random.default_rng(5)
        n, d = 5, 3
        src = np.array([1, 2, 0, 3, 4, 0, 1, 2, 3, 4])
        dst = np.array([0, 0, 1, 1, 2, 3, 3, 4, 4, 4])
        order = np.argsort(dst, kind="stable")
        src, dst = src[order], dst[order]
        x = rng.standard_normal((n, d))
        w1 = ad.param(rng.standard_normal((d, d)) * 0.7)
        w2 = ad.param(rng.standard_normal((d, 2)) * 0.7)
        av = ad.param(rng.standard_normal(d) * 0.5)
        theta = ad.param(0.3)

        def forward():
            h = ad.matmul(ad.constant(x), w1)
            score = ad.summ(ad.mul(h, ad.reshape(av, (1, d))), axis=1)
            e = ad.leaky_relu(
                ad.add(ad.gather_rows(score, dst), ad.gather_rows(score, src)), 0.2
            )
            t = ad.add(ad.softplus(theta), 1e-3)
            alpha = ad.segment_softmax(e, dst, temperature=t, num_segments=n)
            msg = ad.mul(ad.gather_rows(h, src), ad.reshape(alpha, (-1, 1)))
            h1 = ad.elu(ad.segment_sum(msg, dst, n))
            out = ad.matmul(h1, w2)
            return ad.reduce_mean(ad.mul(out, out))

        err = ad.grad_check(forward, [w1, w2, av, theta])
        assert err < 1e-4

    def test_subset_sampling_above_budget(self):
        rng = np.random.default_rng(6)
        w = ad.param(rng.standard_normal((40, 40)))
        err = ad.grad_check(lambda: ad.summ(ad.sigmoid(w)), [w], max_coords=64)
        assert err < 1e-4
