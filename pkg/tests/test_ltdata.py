import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ltpdc.distributions import ClassDistribution, confusion_from_log, predicted_marginal
from ltpdc.errors import InfeasibleError, LTPDCError
from ltpdc.ltdata import (
    exp_profile,
    flat_profile,
    prior_shift,
    simulate_biased_log,
    subsample_indices,
    synth_gaussian_mixture,
)
from ltpdc.metrics import evaluate_confusion


def probs(x):
    x = np.asarray(x, dtype=float)
    return ClassDistribution(x / x.sum(), normalized=True)


class TestExpProfile:
    def test_cifar100_if100(self):
        p = exp_profile(100, 500, 100)
        assert p.counts[0] == 500 and p.counts[99] == 5
        direct = [round(500 * 100 ** (-i / 99)) for i in range(100)]
        # Python's round() is also half-to-even
        assert list(p.counts) == direct
        assert all(a >= b for a, b in zip(p.counts, p.counts[1:]))

    def test_near_flat(self):
        assert set(exp_profile(20, 100, 1.0001).counts) == {100}
        assert set(exp_profile(20, 100, 1).counts) == {100}

    def test_two_point(self):
        assert exp_profile(2, 100, 10).counts == (100, 10)

    def test_tail_empty(self):
        with pytest.raises(InfeasibleError, match="tail class would be empty"):
            exp_profile(10, 50, 100)

    @pytest.mark.parametrize("args", [(1, 100, 10), (10, 0, 10), (10, 100, 0.5)])
    def test_bad_args(self, args):
        with pytest.raises(LTPDCError):
            exp_profile(*args)

    @given(st.integers(2, 200), st.integers(1, 5000), st.floats(1.0, 500.0))
    def test_realized_if_within_rounding(self, C, n_max, imf):
        if n_max < imf:
            return
        p = exp_profile(C, n_max, imf)
        assert all(a >= b for a, b in zip(p.counts, p.counts[1:]))
        assert p.counts[0] == n_max and p.counts[-1] >= 1
        assert abs(p.realized_imbalance_factor - imf) <= imf / p.counts[-1]


class TestSubsample:
    def test_flat_is_noop(self):
        labels = np.repeat(np.arange(5), 100)
        idx = subsample_indices(labels, flat_profile(5, 100), seed=3)
        assert idx.tolist() == list(range(500))

    def test_deterministic(self, rng):
        labels = rng.integers(0, 10, 5000)
        prof = exp_profile(10, 300, 20)
        a = subsample_indices(labels, prof, 42)
        b = subsample_indices(labels, prof, 42)
        assert a.tolist() == b.tolist()
        assert subsample_indices(labels, prof, 43).tolist() != a.tolist()

    @settings(max_examples=40)
    @given(st.integers(2, 12), st.integers(0, 2**31 - 1))
    def test_histogram_matches_profile(self, C, seed):
        r = np.random.default_rng(seed)
        labels = r.permutation(np.repeat(np.arange(C), r.integers(60, 120, C)))
        prof = exp_profile(C, 60, float(r.uniform(1, 30)))
        idx = subsample_indices(labels, prof, seed)
        assert len(set(idx.tolist())) == idx.size
        assert np.bincount(labels[idx], minlength=C).tolist() == list(prof.counts)

    def test_insufficient_names_class(self):
        labels = np.array([0] * 10 + [1] * 2)
        with pytest.raises(InfeasibleError, match="class 1"):
            subsample_indices(labels, exp_profile(2, 10, 2), 0)


class TestGaussianMixture:
    def test_noiseless(self):
        prof = exp_profile(4, 20, 4)
        ds = synth_gaussian_mixture(4, 6, 3.0, prof, 0.0, seed=1)
        np.testing.assert_array_equal(ds.features, ds.class_means[ds.labels])
        assert ds.class_counts().tolist() == list(prof.counts)
        np.testing.assert_allclose(np.linalg.norm(ds.class_means, axis=1), 3.0, rtol=1e-12)

    def test_deterministic(self):
        prof = exp_profile(5, 50, 10)
        a = synth_gaussian_mixture(5, 8, 2.0, prof, 0.7, seed=9)
        b = synth_gaussian_mixture(5, 8, 2.0, prof, 0.7, seed=9)
        assert a.features.tobytes() == b.features.tobytes()
        assert a.labels.tobytes() == b.labels.tobytes()

    def test_more_classes_than_dims(self):
        ds = synth_gaussian_mixture(12, 3, 1.0, flat_profile(12, 2), 0.1, seed=0)
        np.testing.assert_allclose(np.linalg.norm(ds.class_means, axis=1), 1.0, rtol=1e-12)

    def test_well_separated_nearest_mean(self):
        C = 10
        prof = flat_profile(C, 200)
        ds = synth_gaussian_mixture(C, 20, 10.0, prof, 0.5, seed=4)
        d2 = ((ds.features[:, None, :] - ds.class_means[None]) ** 2).sum(-1)
        pred = d2.argmin(axis=1)
        recalls = [np.mean(pred[ds.labels == c] == c) for c in range(C)]
        assert np.mean(recalls) >= 0.99

    @pytest.mark.parametrize("kw", [dict(dim=1), dict(separation=0.0), dict(noise_sigma=-1.0)])
    def test_degenerate(self, kw):
        args = dict(num_classes=3, dim=4, separation=1.0, profile=flat_profile(3, 5), noise_sigma=1.0, seed=0)
        args.update(kw)
        with pytest.raises(LTPDCError):
            synth_gaussian_mixture(**args)


class TestPriorShift:
    def test_identity(self):
        p = probs([0.2, 0.5, 0.3])
        np.testing.assert_allclose(prior_shift(p, probs([1, 2, 3]), probs([1, 2, 3])).mass, p.mass, rtol=1e-15)

    def test_uniform_posterior_takes_prior(self):
        out = prior_shift(probs([0.5, 0.5]), ClassDistribution.uniform(2), probs([0.9, 0.1]))
        np.testing.assert_allclose(out.mass, [0.9, 0.1], rtol=1e-15)

    def test_bayes_arithmetic(self):
        out = prior_shift(probs([0.3, 0.7]), ClassDistribution.uniform(2), probs([0.9, 0.1]))
        np.testing.assert_allclose(out.mass, [27 / 34, 7 / 34], rtol=1e-15)

    def test_zero_entries(self):
        with pytest.raises(LTPDCError):
            prior_shift([0.0, 1.0], [0.5, 0.5], [0.5, 0.5])

    @given(st.integers(2, 10).flatmap(lambda c: st.tuples(*[st.lists(st.floats(0.01, 10), min_size=c, max_size=c)] * 3)))
    def test_round_trip(self, triple):
        p, a, b = (probs(v) for v in triple)
        back = prior_shift(prior_shift(p, a, b), b, a)
        np.testing.assert_allclose(back.mass, p.mass, rtol=0, atol=1e-12)
        assert np.argmax(prior_shift(p, a, a).mass) == np.argmax(p.mass)


class TestSimulator:
    def test_no_confusability_is_perfect(self):
        prior = exp_profile(10, 500, 100).counts
        log = simulate_biased_log(0.0, prior, 50, seed=0)
        cm = confusion_from_log(log, 10)
        rep = evaluate_confusion(cm, prior)
        assert rep.top1_acc == 1.0 and rep.pdc == 0.0

    def test_uniform_prior_gives_uniform_marginal(self):
        C, n = 10, 200
        log = simulate_biased_log(0.5, [1] * C, n, seed=1)
        marg = predicted_marginal(confusion_from_log(log, C)).mass
        sigma = math.sqrt((1 / C) * (1 - 1 / C) / (C * n))
        assert np.all(np.abs(marg - 1 / C) <= 3 * sigma)

    def test_skewed_prior_is_head_biased(self):
        C = 10
        prior = exp_profile(C, 500, 100).counts
        log = simulate_biased_log(0.5, prior, 200, seed=2)
        cm = confusion_from_log(log, C)
        assert predicted_marginal(cm).mass[0] > 1 / C
        assert evaluate_confusion(cm, prior).pdc > 0.2

    def test_deterministic(self):
        prior = exp_profile(5, 100, 10).counts
        a = simulate_biased_log(0.6, prior, 20, seed=5)
        assert a == simulate_biased_log(0.6, prior, 20, seed=5)

    def test_pdc_grows_with_skew(self):
        C = 10
        means = []
        for imf in (1, 10, 100):
            prior = exp_profile(C, 500, imf).counts
            vals = [evaluate_confusion(confusion_from_log(simulate_biased_log(0.5, prior, 200, s), C), prior).pdc
                    for s in range(5)]
            means.append(np.mean(vals))
        assert means[0] <= means[1] <= means[2]

    @pytest.mark.parametrize("args", [(1.0, [1, 1], 5), (-0.1, [1, 1], 5), (0.5, [1, 1], 0), (0.5, [1, 0], 5)])
    def test_degenerate(self, args):
        with pytest.raises(LTPDCError):
            simulate_biased_log(*args, seed=0)
