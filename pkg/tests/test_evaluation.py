import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pibearing.evaluation import (
    DegenerateTestError,
    EvalReport,
    InsufficientDataError,
    UndefinedAUCError,
    aggregate_reports,
    binary_auc,
    compute_metrics,
    confusion_matrix,
    independent_t_test,
    mean_ci,
    roc_auc,
    roc_curve,
)


def pairwise_auc(scores, positives):
    """O(n^2) Mann-Whitney oracle: P(score_pos > score_neg) + 0.5 P(tie)."""
    pos = [s for s, p in zip(scores, positives) if p]
    neg = [s for s, p in zip(scores, positives) if not p]
    wins = sum((a > b) + 0.5 * (a == b) for a in pos for b in neg)
    return wins / (len(pos) * len(neg))


class TestMetrics:
    def test_diagonal(self):
        m = compute_metrics(np.diag([5, 7, 9]))
        assert m.accuracy == 1.0 and m.macro_f1 == 1.0 and m.macro_precision == 1.0
        assert not m.zero_division

    def test_two_class_hand_values(self):
        m = compute_metrics([[50, 10], [5, 35]])
        assert m.accuracy == pytest.approx(0.85)
        assert m.precision[0] == pytest.approx(50 / 55)
        assert m.recall[0] == pytest.approx(50 / 60)

    def test_zero_division_flagged(self):
        m = compute_metrics([[3, 0, 0], [2, 0, 0], [1, 0, 0]])
        assert (1, "precision") in m.zero_division
        assert m.precision[1] == 0.0

    def test_empty(self):
        with pytest.raises(InsufficientDataError):
            compute_metrics(np.zeros((3, 3)))

    def test_chance_level(self, rng):
        y = np.repeat([0, 1, 2], 3000)
        m = compute_metrics(confusion_matrix(y, rng.integers(0, 3, y.size)))
        assert abs(m.accuracy - 1 / 3) < 0.03

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=40))
    def test_brute_force_recount(self, pairs):
        y, p = map(np.array, zip(*pairs))
        m = compute_metrics(confusion_matrix(y, p))
        assert m.accuracy == pytest.approx(np.mean(y == p))
        for k in range(3):
            tp = np.sum((y == k) & (p == k))
            fp = np.sum((y != k) & (p == k))
            fn = np.sum((y == k) & (p != k))
            assert m.precision[k] == pytest.approx(tp / (tp + fp) if tp + fp else 0.0)
            assert m.recall[k] == pytest.approx(tp / (tp + fn) if tp + fn else 0.0)
        assert min(m.f1) - 1e-12 <= m.macro_f1 <= max(m.f1) + 1e-12
        assert all(0 <= v <= 1 for v in m.precision + m.recall + m.f1)


class TestAUC:
    def test_separated(self):
        assert binary_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0

    def test_constant_scores(self):
        assert binary_auc(np.full(10, 0.3), np.arange(10) % 2 == 0) == 0.5

    def test_single_class(self):
        with pytest.raises(UndefinedAUCError):
            binary_auc([0.1, 0.2], [1, 1])

    @pytest.mark.parametrize("seed", range(20))
    def test_pairwise_oracle(self, seed):
        r = np.random.default_rng(seed)
        scores = np.round(r.uniform(size=50), 1)  # coarse grid -> many ties
        pos = r.uniform(size=50) < 0.4
        pos[:2] = True, False
        assert abs(binary_auc(scores, pos) - pairwise_auc(scores, pos)) < 1e-9

    def test_trapezoid_equivalence(self, rng):
        scores = np.round(rng.uniform(size=80), 1)
        pos = rng.uniform(size=80) < 0.5
        fpr, tpr = roc_curve(scores, pos)
        assert np.trapezoid(tpr, fpr) == pytest.approx(binary_auc(scores, pos), abs=1e-12)
        assert (fpr[0], tpr[0], fpr[-1], tpr[-1]) == (0, 0, 1, 1)

    def test_one_vs_rest(self, rng):
        probs = rng.dirichlet(np.ones(3), 30)
        y = np.arange(30) % 3
        aucs = roc_auc(probs, y)
        assert aucs == [binary_auc(probs[:, k], y == k) for k in range(3)]


class TestConfidenceInterval:
    def test_constant(self):
        assert mean_ci([2.0] * 6) == (2.0, 0.0)

    def test_one_to_five(self):
        # t_{0.975,4} = 2.7764451051977944 from direct quadrature of the t density
        mean, half = mean_ci([1, 2, 3, 4, 5], 0.05)
        assert mean == 3.0
        assert half == pytest.approx(1.9632431614775577, abs=1e-9)

    def test_shrinks_with_n(self, rng):
        x = rng.standard_normal(4000)
        halves = [mean_ci(x[:n])[1] for n in (10, 100, 1000, 4000)]
        assert all(a > b for a, b in zip(halves, halves[1:]))

    def test_too_few(self):
        with pytest.raises(InsufficientDataError):
            mean_ci([1.0])


A = [0.9521, 0.9487, 0.9603, 0.9550, 0.9498, 0.9576, 0.9532, 0.9511, 0.9589, 0.9540]
B = [0.9402, 0.9455, 0.9389, 0.9431, 0.9470, 0.9398, 0.9446, 0.9415, 0.9462, 0.9420]


class TestTTest:
    def test_reference_dataset(self):
        # Welch t, df and p evaluated independently at 40 significant digits
        res = independent_t_test(A, B)
        assert res.t_statistic == pytest.approx(7.3420778357975214, abs=1e-6)
        assert res.df == pytest.approx(16.503839959222604, abs=1e-6)
        assert res.p_value == pytest.approx(1.3756810054571348e-6, abs=1e-6, rel=1e-6)
        assert res.significant

    def test_identical(self):
        res = independent_t_test(A, A)
        assert res.t_statistic == 0.0 and res.p_value == 1.0 and not res.significant

    def test_identical_constants(self):
        res = independent_t_test([0.9] * 10, [0.9] * 10)
        assert res.p_value == 1.0

    def test_separated(self):
        b = np.array(A) - 0.2
        assert independent_t_test(A, b).p_value < 0.01

    def test_degenerate(self):
        with pytest.raises(DegenerateTestError):
            independent_t_test([1.0, 1.0], [2.0, 2.0])
        with pytest.raises(InsufficientDataError):
            independent_t_test([1.0], [2.0, 3.0])

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_symmetric_and_bounded(self, seed):
        r = np.random.default_rng(seed)
        a, b = r.normal(0, 1, 10), r.normal(0.3, 2, 10)
        ab, ba = independent_t_test(a, b), independent_t_test(b, a)
        assert 0 < ab.p_value <= 1
        assert ab.p_value == pytest.approx(ba.p_value, rel=1e-12)
        assert ab.t_statistic == pytest.approx(-ba.t_statistic)


class TestReport:
    def test_from_predictions(self):
        probs = np.eye(3)[[0, 1, 2, 2]] * 0.8 + 0.1 / 1.5
        rep = EvalReport.from_predictions([0, 1, 2, 1], probs, seeds=[3], note="x")
        assert rep.accuracy == 0.75
        assert np.sum(rep.confusion) == 4
        assert rep.extra["note"] == "x" and rep.seeds == [3]
        assert "accuracy" in rep.to_text() and '"accuracy"' in rep.to_json()

    def test_empty(self):
        with pytest.raises(InsufficientDataError):
            EvalReport.from_predictions([], np.zeros((0, 3)))

    def test_aggregate(self):
        reps = [EvalReport.from_predictions([0, 1, 2], np.eye(3)[p], seeds=[i])
                for i, p in enumerate(([0, 1, 2], [0, 1, 1], [0, 2, 2]))]
        agg = aggregate_reports(reps)
        assert agg.n_runs == 3 and agg.seeds == [0, 1, 2]
        assert agg.accuracy == pytest.approx(np.mean([1, 2 / 3, 2 / 3]))
        assert agg.ci_halfwidth == pytest.approx(mean_ci([1, 2 / 3, 2 / 3])[1])
