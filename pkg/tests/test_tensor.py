"""Autodiff core: every primitive against central finite differences."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from fd_util import check_gradients
from sourcelm import tensor
from sourcelm.tensor import Var

# Central differences with eps=1e-6 carry ~1e-12 absolute noise, which
# the 1e-6 relative-error floor turns into ~1e-6 for near-zero
# gradients. 1e-5 still sits an order under the 1e-4 training gate.
TOL = 1e-5


def params_from(**arrays) -> tensor.Params:
    p = tensor.Params(dtype=np.float64)
    for name, a in arrays.items():
        p.add(name, np.asarray(a, dtype=np.float64))
    return p


def rng():
    return np.random.default_rng(1234)


class TestArithmeticGradients:
    def test_add_broadcast_bias(self):
        r = rng()
        p = params_from(x=r.normal(size=(3, 4)), b=r.normal(size=4))
        w = r.normal(size=(3, 4))
        err = check_gradients(p, lambda v: tensor.ssum(tensor.cmul(tensor.add(v["x"], v["b"]), w)))
        assert err < TOL

    def test_sub(self):
        r = rng()
        p = params_from(x=r.normal(size=(2, 3)), y=r.normal(size=(2, 3)))
        w = r.normal(size=(2, 3))
        err = check_gradients(p, lambda v: tensor.ssum(tensor.cmul(tensor.sub(v["x"], v["y"]), w)))
        assert err < TOL

    def test_mul_broadcast_column(self):
        r = rng()
        p = params_from(x=r.normal(size=(3, 5)), s=r.normal(size=(3, 1)))
        w = r.normal(size=(3, 5))
        err = check_gradients(p, lambda v: tensor.ssum(tensor.cmul(tensor.mul(v["x"], v["s"]), w)))
        assert err < TOL

    def test_cmul_cadd(self):
        r = rng()
        p = params_from(x=r.normal(size=(4,)))
        c = r.normal(size=(4,))
        err = check_gradients(
            p, lambda v: tensor.ssum(tensor.tanh(tensor.cadd(tensor.cmul(v["x"], c), 0.3)))
        )
        assert err < TOL

    def test_matmul_2d(self):
        r = rng()
        p = params_from(a=r.normal(size=(3, 4)), b=r.normal(size=(4, 2)))
        w = r.normal(size=(3, 2))
        err = check_gradients(p, lambda v: tensor.ssum(tensor.cmul(tensor.matmul(v["a"], v["b"]), w)))
        assert err < TOL

    def test_matmul_batched_by_shared(self):
        # [B,K,k] @ [k,k], the attention projection pattern
        r = rng()
        p = params_from(m=r.normal(size=(2, 3, 4)), w=r.normal(size=(4, 4)))
        c = r.normal(size=(2, 3, 4))
        err = check_gradients(p, lambda v: tensor.ssum(tensor.cmul(tensor.matmul(v["m"], v["w"]), c)))
        assert err < TOL

    def test_matmul_batched_both(self):
        # [B,1,K] @ [B,K,k], the context-vector pattern
        r = rng()
        p = params_from(a=r.normal(size=(2, 1, 3)), m=r.normal(size=(2, 3, 4)))
        c = r.normal(size=(2, 1, 4))
        err = check_gradients(p, lambda v: tensor.ssum(tensor.cmul(tensor.matmul(v["a"], v["m"]), c)))
        assert err < TOL

    def test_concat_and_slice(self):
        r = rng()
        p = params_from(a=r.normal(size=(2, 3)), b=r.normal(size=(2, 2)), c=r.normal(size=(2, 4)))
        w = r.normal(size=(2, 5))

        def build(v):
            joined = tensor.concat([v["a"], v["b"], v["c"]], axis=-1)
            part = tensor.slice_last(joined, 2, 7)
            return tensor.ssum(tensor.cmul(tensor.tanh(part), w))

        assert check_gradients(p, build) < TOL

    def test_reshape(self):
        r = rng()
        p = params_from(x=r.normal(size=(2, 6)))
        w = r.normal(size=(2, 3, 2))
        err = check_gradients(
            p, lambda v: tensor.ssum(tensor.cmul(tensor.reshape(v["x"], (2, 3, 2)), w))
        )
        assert err < TOL

    def test_reused_node_accumulates(self):
        # Diamond: the same node feeds two paths.
        r = rng()
        p = params_from(x=r.normal(size=(3,)))

        def build(v):
            u = tensor.tanh(v["x"])
            return tensor.ssum(tensor.mul(u, u))

        assert check_gradients(p, build) < TOL


class TestNonlinearityGradients:
    def test_tanh_sigmoid_log(self):
        r = rng()
        p = params_from(x=r.uniform(0.5, 2.0, size=(3, 3)))
        w = r.normal(size=(3, 3))

        def build(v):
            a = tensor.tanh(v["x"])
            b = tensor.sigmoid(v["x"])
            c = tensor.log(v["x"])
            return tensor.ssum(tensor.cmul(tensor.add(tensor.mul(a, b), c), w))

        assert check_gradients(p, build) < TOL

    def test_softmax(self):
        r = rng()
        p = params_from(x=r.normal(size=(3, 5)))
        w = r.normal(size=(3, 5))
        err = check_gradients(p, lambda v: tensor.ssum(tensor.cmul(tensor.softmax(v["x"]), w)))
        assert err < TOL

    def test_tanh_derivative_at_zero_is_one(self):
        x = Var(np.zeros(3))
        y = tensor.ssum(tensor.tanh(x))
        y.backward()
        assert np.allclose(x.grad, 1.0)


class TestLookupGradients:
    def test_rowselect_repeated_ids(self):
        r = rng()
        p = params_from(table=r.normal(size=(5, 3)))
        ids = np.array([1, 1, 4, 0, 1])
        w = r.normal(size=(5, 3))
        err = check_gradients(
            p, lambda v: tensor.ssum(tensor.cmul(tensor.rowselect(v["table"], ids), w))
        )
        assert err < TOL

    def test_pick(self):
        r = rng()
        p = params_from(x=r.normal(size=(4, 6)))
        ids = np.array([0, 5, 2, 2])
        w = r.normal(size=4)
        err = check_gradients(
            p, lambda v: tensor.ssum(tensor.cmul(tensor.pick(tensor.softmax(v["x"]), ids), w))
        )
        assert err < TOL

    def test_colselect_and_gather1d_repeated(self):
        r = rng()
        p = params_from(w=r.normal(size=(3, 6)), b=r.normal(size=6))
        ids = np.array([2, 2, 5, 0])
        c = r.normal(size=(3, 4))

        def build(v):
            cols = tensor.colselect(v["w"], ids)
            biased = tensor.add(cols, tensor.gather1d(v["b"], ids))
            return tensor.ssum(tensor.cmul(tensor.tanh(biased), c))

        assert check_gradients(p, build) < TOL

    def test_where_const(self):
        r = rng()
        p = params_from(a=r.normal(size=(3, 4)), b=r.normal(size=(3, 4)))
        mask = r.random(size=(3, 4)) > 0.5
        w = r.normal(size=(3, 4))
        err = check_gradients(
            p, lambda v: tensor.ssum(tensor.cmul(tensor.where_const(mask, v["a"], v["b"]), w))
        )
        assert err < TOL


class TestModelOpGradients:
    def test_dropout_fixed_mask(self):
        r = rng()
        p = params_from(x=r.normal(size=(4, 5)))
        mask = (r.random(size=(4, 5)) >= 0.3) / 0.7
        w = r.normal(size=(4, 5))
        err = check_gradients(
            p,
            lambda v: tensor.ssum(
                tensor.cmul(tensor.dropout(v["x"], 0.3, train=True, mask=mask), w)
            ),
        )
        assert err < TOL

    def test_scatter_rows(self):
        r = rng()
        p = params_from(mem=r.normal(size=(3, 4, 2)), h=r.normal(size=(3, 2)))
        write = np.array([True, False, True])
        slots = np.array([1, 0, 3])
        w = r.normal(size=(3, 4, 2))
        err = check_gradients(
            p,
            lambda v: tensor.ssum(
                tensor.cmul(tensor.scatter_rows(v["mem"], v["h"], write, slots), w)
            ),
        )
        assert err < TOL

    def test_scatter_logits_with_duplicates(self):
        r = rng()
        p = params_from(scores=r.normal(size=(2, 3)))
        mem_ids = np.array([[4, 1, 4], [0, 2, 3]])
        valid = np.array([[True, True, True], [True, True, False]])
        w = r.normal(size=(2, 6))

        def build(v):
            alpha = tensor.softmax(v["scores"])
            s = tensor.scatter_logits(alpha, mem_ids, valid, vocab_size=6, c=1000.0)
            return tensor.ssum(tensor.cmul(tensor.softmax(s), w))

        assert check_gradients(p, build) < TOL

    def test_scalar_mix(self):
        r = rng()
        p = params_from(ly=r.normal(size=(3, 4)), li=r.normal(size=(3, 4)), ll=r.normal(size=(3, 2)))
        w = r.normal(size=(3, 4))

        def build(v):
            y = tensor.softmax(v["ly"])
            i = tensor.softmax(v["li"])
            lam = tensor.softmax(v["ll"])
            return tensor.ssum(tensor.cmul(tensor.scalar_mix(y, i, lam), w))

        assert check_gradients(p, build) < TOL

    def test_cross_entropy_logits_masked(self):
        r = rng()
        p = params_from(logits=r.normal(size=(5, 7)))
        targets = np.array([3, 0, 6, 2, 2])
        mask = np.array([1.0, 1.0, 0.0, 1.0, 0.0])
        err = check_gradients(
            p, lambda v: tensor.cross_entropy_logits(v["logits"], targets, mask)
        )
        assert err < TOL

    def test_masked_mean_nll_matches_fused(self):
        r = rng()
        logits = r.normal(size=(4, 6))
        targets = np.array([1, 5, 0, 3])
        mask = np.array([1.0, 0.0, 1.0, 1.0])
        fused = tensor.cross_entropy_logits(Var(logits), targets, mask)
        composed = tensor.masked_mean_nll(tensor.softmax(Var(logits)), targets, mask)
        assert float(fused.value) == pytest.approx(float(composed.value), rel=1e-12)

    def test_masked_mean_nll_gradients(self):
        r = rng()
        p = params_from(logits=r.normal(size=(4, 6)))
        targets = np.array([1, 5, 0, 3])
        mask = np.array([1.0, 0.0, 1.0, 1.0])
        err = check_gradients(
            p, lambda v: tensor.masked_mean_nll(tensor.softmax(v["logits"]), targets, mask)
        )
        assert err < TOL

    def test_masked_mean_nll_tolerates_zero_prob_on_masked_rows(self):
        probs = np.array([[0.5, 0.5], [0.0, 1.0]])
        loss = tensor.masked_mean_nll(Var(probs), np.array([0, 0]), np.array([1.0, 0.0]))
        assert float(loss.value) == pytest.approx(math.log(2))

    def test_sampled_softmax_frozen_candidates(self):
        r = rng()
        p = params_from(w=r.normal(size=(3, 10)), b=r.normal(size=10), h=r.normal(size=(2, 3)))
        targets = np.array([4, 7])
        candidates = np.array([4, 7, 0, 1, 2, 9])
        err = check_gradients(
            p,
            lambda v: tensor.sampled_softmax_loss(
                v["w"], v["b"], v["h"], targets, sample_size=4,
                rng=np.random.default_rng(0), candidates=candidates,
            ),
        )
        assert err < TOL


class TestTrivialExamples:
    def test_softmax_of_zeros_is_uniform(self):
        y = tensor.softmax(Var(np.zeros((1, 2))))
        assert np.array_equal(y.value, [[0.5, 0.5]])

    def test_matmul_identity(self):
        a = np.arange(12.0).reshape(3, 4)
        out = tensor.matmul(Var(np.eye(3)), Var(a))
        assert np.array_equal(out.value, a)

    def test_sigmoid_at_zero(self):
        assert tensor.sigmoid(Var(np.zeros(2))).value == pytest.approx([0.5, 0.5])


class TestOptimizer:
    def test_clip_scales_when_over(self):
        grads = {"a": np.array([6.0, 8.0])}  # norm 10
        norm = tensor.clip_by_global_norm(grads, 5.0)
        assert norm == pytest.approx(10.0)
        assert grads["a"] == pytest.approx([3.0, 4.0])

    def test_clip_leaves_small_gradients(self):
        grads = {"a": np.array([3.0]), "b": np.array([0.0])}
        tensor.clip_by_global_norm(grads, 5.0)
        assert grads["a"] == pytest.approx([3.0])

    def test_clip_zero_gradients(self):
        grads = {"a": np.zeros(4)}
        assert tensor.clip_by_global_norm(grads, 5.0) == 0.0
        assert np.array_equal(grads["a"], np.zeros(4))

    def test_clip_is_joint_across_arrays(self):
        grads = {"a": np.array([6.0]), "b": np.array([8.0])}
        tensor.clip_by_global_norm(grads, 5.0)
        assert grads["a"] == pytest.approx([3.0])
        assert grads["b"] == pytest.approx([4.0])

    def test_sgd_arithmetic(self):
        params = {"p": np.array([1.0])}
        tensor.sgd_step(params, {"p": np.array([0.5])}, lr=0.7)
        assert params["p"] == pytest.approx([0.65])

    def test_sgd_zero_gradient(self):
        params = {"p": np.array([1.0])}
        tensor.sgd_step(params, {"p": np.array([0.0])}, lr=0.7)
        assert params["p"] == pytest.approx([1.0])

    def test_sgd_rejects_bad_lr(self):
        with pytest.raises(ValueError):
            tensor.sgd_step({}, {}, lr=0.0)

    def test_decay_schedule(self):
        lr = 0.7
        for _ in range(2):
            lr = tensor.decay_lr(lr, 0.9)
        assert lr == pytest.approx(0.7 * 0.81)


class TestDropout:
    def test_eval_mode_is_identity(self):
        x = Var(np.ones((2, 3)))
        assert tensor.dropout(x, 0.5, train=False) is x

    def test_zero_rate_is_identity(self):
        x = Var(np.ones((2, 3)))
        assert tensor.dropout(x, 0.0, rng=np.random.default_rng(0), train=True) is x

    def test_train_mode_preserves_expectation(self):
        r = np.random.default_rng(42)
        x = Var(np.full((100, 1000), 2.0))
        out = tensor.dropout(x, 0.1, rng=r, train=True)
        assert float(out.value.mean()) == pytest.approx(2.0, rel=0.01)

    def test_train_mode_needs_randomness(self):
        with pytest.raises(ValueError):
            tensor.dropout(Var(np.ones(3)), 0.1, train=True)


class TestSampledSoftmax:
    def test_log_uniform_mass_sums_to_one(self):
        v = 50
        total = tensor.log_uniform_mass(np.arange(v), v).sum()
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_empirical_frequency_of_id_zero(self):
        v = 100
        n = 100_000
        r = np.random.default_rng(7)
        u = r.random(n)
        draws = np.floor(np.power(v + 1.0, u)).astype(int) - 1
        p0 = float(tensor.log_uniform_mass(0, v))
        se = math.sqrt(p0 * (1 - p0) / n)
        assert abs((draws == 0).mean() - p0) <= 3 * se

    def test_sample_is_distinct_and_respects_exclusions(self):
        r = np.random.default_rng(5)
        exclude = {0, 1, 2}
        ids = tensor.log_uniform_sample(r, 30, 10, exclude=exclude)
        assert len(set(ids.tolist())) == 10
        assert not (set(ids.tolist()) & exclude)

    def test_sample_too_large_rejected(self):
        with pytest.raises(ValueError):
            tensor.log_uniform_sample(np.random.default_rng(0), 5, 6)

    def test_candidates_contain_targets_first(self):
        r = np.random.default_rng(9)
        w = Var(np.zeros((3, 20)))
        b = Var(np.zeros(20))
        h = Var(np.zeros((2, 3)))
        targets = np.array([11, 3])
        # No frozen candidates: the op draws negatives itself.
        loss = tensor.sampled_softmax_loss(w, b, h, targets, sample_size=5, rng=r)
        assert np.isfinite(float(loss.value))

    def test_matches_full_softmax_when_sampling_everything(self):
        # With all non-target ids as candidates the correction shifts
        # logits unevenly, so compare against the corrected full CE.
        r = np.random.default_rng(3)
        vs = 8
        w = Var(r.normal(size=(4, vs)))
        b = Var(r.normal(size=vs))
        h = Var(r.normal(size=(2, 4)))
        targets = np.array([2, 5])
        cand = np.array([2, 5] + [i for i in range(vs) if i not in (2, 5)])
        loss = tensor.sampled_softmax_loss(w, b, h, targets, sample_size=vs - 2,
                                           rng=r, candidates=cand)
        logits = h.value @ w.value + b.value
        corrected = logits[:, cand] - np.log((vs - 2) * tensor.log_uniform_mass(cand, vs))
        want = tensor.cross_entropy_logits(Var(corrected), np.array([0, 1]))
        assert float(loss.value) == pytest.approx(float(want.value), rel=1e-12)


class TestShapeErrors:
    def test_matmul_inner_dim(self):
        with pytest.raises(tensor.ShapeMismatch):
            tensor.matmul(Var(np.zeros((2, 3))), Var(np.zeros((4, 2))))

    def test_add_incompatible(self):
        with pytest.raises(tensor.ShapeMismatch):
            tensor.add(Var(np.zeros((2, 3))), Var(np.zeros((2, 4))))

    def test_backward_needs_scalar(self):
        with pytest.raises(tensor.ShapeMismatch):
            Var(np.zeros(3)).backward()

    def test_pick_needs_2d(self):
        with pytest.raises(tensor.ShapeMismatch):
            tensor.pick(Var(np.zeros(3)), np.array([0]))

    def test_scalar_mix_shapes(self):
        with pytest.raises(tensor.ShapeMismatch):
            tensor.scalar_mix(Var(np.zeros((2, 3))), Var(np.zeros((2, 4))), Var(np.zeros((2, 2))))


class TestParams:
    def test_duplicate_name_rejected(self):
        p = tensor.Params()
        p.add("w", np.zeros(3))
        with pytest.raises(ValueError):
            p.add("w", np.zeros(3))

    def test_begin_shares_storage(self):
        p = tensor.Params(dtype=np.float64)
        p.add("w", np.ones(3))
        leaves = p.begin()
        p.arrays["w"][0] = 5.0
        assert leaves["w"].value[0] == 5.0

    def test_grads_after_backward(self):
        p = tensor.Params(dtype=np.float64)
        p.add("w", np.array([2.0, 3.0]))
        leaves = p.begin()
        tensor.ssum(tensor.mul(leaves["w"], leaves["w"])).backward()
        assert p.grads()["w"] == pytest.approx([4.0, 6.0])

    def test_uniform_init_range_and_determinism(self):
        p1 = tensor.Params()
        p1.add_uniform("w", (50, 50), np.random.default_rng(11))
        p2 = tensor.Params()
        p2.add_uniform("w", (50, 50), np.random.default_rng(11))
        assert np.array_equal(p1.arrays["w"], p2.arrays["w"])
        assert float(p1.arrays["w"].max()) < 0.05
        assert float(p1.arrays["w"].min()) > -0.05

    def test_n_parameters(self):
        p = tensor.Params()
        p.add("a", np.zeros((3, 4)))
        p.add("b", np.zeros(5))
        assert p.n_parameters() == 17


class TestProperties:
    @settings(max_examples=100, deadline=None)
    @given(
        hnp.arrays(
            np.float64,
            hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=8),
            elements=st.floats(min_value=-50, max_value=50),
        )
    )
    def test_softmax_rows_normalize(self, x):
        # Logit gaps beyond ~745 underflow to an exact 0 in float64;
        # strict positivity is only meaningful below that.
        y = tensor.softmax(Var(x)).value
        assert np.all(y > 0.0)
        assert np.all(y < 1.0 + 1e-15)
        assert np.allclose(y.sum(axis=-1), 1.0, atol=1e-6)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=1, max_value=200))
    def test_log_uniform_mass_is_a_distribution(self, v):
        masses = tensor.log_uniform_mass(np.arange(v), v)
        assert np.all(masses > 0)
        assert masses.sum() == pytest.approx(1.0, abs=1e-9)
