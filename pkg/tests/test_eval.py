"""Splits, ranking metrics, cross-validation protocol, and report writers."""
import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from spikecast.errors import (
    ConfigError,
    InsufficientDataError,
    UndefinedMetricError,
)
from spikecast.evaluation import (
    BASELINE_VARIANT,
    FoldPlan,
    baseline_logreg,
    classification_metrics,
    fit_fold_pca,
    fit_logreg,
    holdout_split,
    logreg_loss_grad,
    logreg_scores,
    roc_auc,
    roc_curve,
    run_cv,
    sample_features,
    time_series_split,
    unique_year_rows,
    write_report_csv,
    write_roc_csv,
    write_summary_json,
)
from spikecast.model import (
    ModelHyper,
    TrainConfig,
    WindowedSample,
    make_windows,
)

from conftest import pairwise_auc, planted_dataset


def windows(n=30, k=3, d=4, seed=0, **kw):
    return make_windows(planted_dataset(n=n, d=d, seed=seed, **kw), k)


class TestTimeSeriesSplit:
    def test_worked_example(self):
        plan = time_series_split(10, 3)
        assert plan.folds == (
            ((0, 4), (4, 6)),
            ((0, 6), (6, 8)),
            ((0, 8), (8, 10)),
        )

    def test_remainder_goes_to_first_train_block(self):
        plan = time_series_split(11, 3)
        assert plan.folds[0] == ((0, 5), (5, 7))
        assert plan.folds[-1][1][1] == 11

    def test_errors(self):
        with pytest.raises(ConfigError):
            time_series_split(10, 0)
        with pytest.raises(ConfigError):
            time_series_split(3, 3)
        assert time_series_split(4, 3).n_folds == 3

    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 200), st.integers(1, 8))
    def test_plan_invariants(self, n, n_folds):
        assume(n >= n_folds + 1)
        plan = time_series_split(n, n_folds)
        test_size = n // (n_folds + 1)
        assert len(plan.folds) == n_folds
        prev_hi = 0
        for (tr_lo, tr_hi), (te_lo, te_hi) in plan.folds:
            assert tr_lo == 0
            assert te_lo == tr_hi          # test follows training immediately
            assert te_hi - te_lo == test_size
            assert tr_hi > prev_hi         # strictly expanding training set
            prev_hi = tr_hi
        assert plan.folds[-1][1][1] == n   # last test block ends at the end


class TestFoldPlan:
    def test_rejects_train_not_anchored_at_zero(self):
        with pytest.raises(ConfigError):
            FoldPlan(n=10, n_folds=1, folds=(((1, 4), (4, 6)),))

    def test_rejects_test_overlapping_train(self):
        with pytest.raises(ConfigError):
            FoldPlan(n=10, n_folds=1, folds=(((0, 5), (4, 6)),))

    def test_rejects_non_expanding_training(self):
        with pytest.raises(ConfigError):
            FoldPlan(
                n=10, n_folds=2,
                folds=(((0, 4), (4, 6)), ((0, 4), (6, 8))),
            )

    def test_gap_between_train_and_test_is_legal(self):
        FoldPlan(n=10, n_folds=1, folds=(((0, 4), (6, 8)),))


class TestHoldout:
    def test_worked_example(self):
        samples = windows(n=62, k=2)  # 60 windows
        train, test = holdout_split(samples, 0.20)
        assert (len(train), len(test)) == (48, 12)
        assert train + test == samples

    def test_ceil_rounding(self):
        samples = windows(n=12, k=2)  # 10 windows
        train, test = holdout_split(samples, 0.25)
        assert (len(train), len(test)) == (7, 3)  # ceil(2.5) = 3

    def test_chronology(self):
        train, test = holdout_split(windows(n=40, k=3), 0.2)
        assert max(s.anchor_year for s in train) < min(s.anchor_year for s in test)

    def test_errors(self):
        samples = windows(n=12, k=2)
        with pytest.raises(ConfigError):
            holdout_split(samples, 0.0)
        with pytest.raises(ConfigError):
            holdout_split(samples, 0.6)
        with pytest.raises(InsufficientDataError):
            holdout_split(samples[:4], 0.2)


class TestRocAuc:
    def test_perfect_and_reversed(self):
        labels = [0, 0, 1, 1]
        assert roc_auc([0.1, 0.2, 0.8, 0.9], labels) == 1.0
        assert roc_auc([0.9, 0.8, 0.2, 0.1], labels) == 0.0

    def test_all_tied_is_half(self):
        assert roc_auc([0.5] * 6, [0, 1, 0, 1, 0, 1]) == 0.5

    def test_partial_ties(self):
        # pairs: (0.4,0.4) tie, (0.4,0.2) concordant, (0.7,*) concordant x2
        assert roc_auc([0.2, 0.4, 0.4, 0.7], [0, 0, 1, 1]) == 0.875

    def test_single_class_undefined(self):
        with pytest.raises(UndefinedMetricError):
            roc_auc([0.1, 0.9], [1, 1])
        with pytest.raises(UndefinedMetricError):
            roc_auc([0.1, 0.9], [0, 0])

    def test_bad_inputs(self):
        with pytest.raises(ConfigError):
            roc_auc([0.1, 0.2], [1])
        with pytest.raises(ConfigError):
            roc_auc([0.1, 0.2], [1, 2])

    @settings(max_examples=120, deadline=None)
    @given(st.lists(
        st.tuples(
            st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.5, 0.9, 1.0]),
            st.integers(0, 1),
        ),
        min_size=2, max_size=64,
    ))
    def test_equals_pairwise_oracle_exactly(self, pairs):
        scores = [s for s, _ in pairs]
        labels = [l for _, l in pairs]
        assume(0 < sum(labels) < len(labels))
        assert roc_auc(scores, labels) == pairwise_auc(scores, labels)


class TestRocCurve:
    def test_endpoints_and_monotonicity(self):
        rng = np.random.default_rng(3)
        scores = rng.choice([0.1, 0.3, 0.5, 0.7], size=40)
        labels = rng.integers(0, 2, size=40)
        points = roc_curve(scores, labels)
        assert points[0] == (0.0, 0.0)
        assert points[-1] == (1.0, 1.0)
        fprs = [p[0] for p in points]
        tprs = [p[1] for p in points]
        assert fprs == sorted(fprs)
        assert tprs == sorted(tprs)

    def test_trapezoid_area_equals_auc(self):
        rng = np.random.default_rng(9)
        for seed in range(5):
            rng = np.random.default_rng(seed)
            scores = rng.choice([0.2, 0.4, 0.6, 0.8], size=30)
            labels = rng.integers(0, 2, size=30)
            if len(set(labels.tolist())) < 2:
                continue
            points = roc_curve(scores, labels)
            area = sum(
                (x1 - x0) * (y0 + y1) / 2.0
                for (x0, y0), (x1, y1) in zip(points, points[1:])
            )
            assert area == pytest.approx(roc_auc(scores, labels), abs=1e-12)

    def test_single_class_undefined(self):
        with pytest.raises(UndefinedMetricError):
            roc_curve([0.2, 0.4], [1, 1])


class TestClassificationMetrics:
    def test_all_negative_worked_example(self):
        m = classification_metrics([0.2, 0.3, 0.1, 0.4], [1, 1, 0, 0])
        assert m.accuracy == 0.5
        assert m.precision_weighted == 0.25
        assert m.recall_weighted == 0.5
        assert m.f1_weighted == pytest.approx(1 / 3)
        assert m.confusion == (0, 0, 2, 2)

    def test_perfect_predictions(self):
        m = classification_metrics([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0])
        assert m.accuracy == 1.0
        assert m.precision_weighted == 1.0
        assert m.recall_weighted == 1.0
        assert m.f1_weighted == 1.0

    def test_threshold_is_strict(self):
        m = classification_metrics([0.5, 0.5], [1, 0], threshold=0.5)
        assert m.confusion == (0, 0, 1, 1)  # score == threshold predicts 0
        above = classification_metrics([0.5000001, 0.5], [1, 0], threshold=0.5)
        assert above.confusion == (1, 0, 0, 1)

    def test_confusion_sums_to_n(self):
        rng = np.random.default_rng(0)
        scores = rng.random(37)
        labels = rng.integers(0, 2, size=37)
        m = classification_metrics(scores, labels, threshold=0.4)
        assert sum(m.confusion) == 37 == m.n

    def test_custom_threshold_changes_predictions(self):
        scores = [0.3, 0.6]
        labels = [1, 1]
        low = classification_metrics(scores, labels, threshold=0.2)
        high = classification_metrics(scores, labels, threshold=0.7)
        assert low.accuracy == 1.0
        assert high.accuracy == 0.0

    def test_empty_rejected(self):
        with pytest.raises(InsufficientDataError):
            classification_metrics([], [])

    def test_float_fields(self):
        m = classification_metrics([0.9, 0.1], [1, 0])
        for value in (m.accuracy, m.precision_weighted, m.recall_weighted,
                      m.f1_weighted):
            assert type(value) is float


class TestUniqueYearRows:
    def test_dedup_across_overlapping_windows(self):
        samples = windows(n=12, k=3, d=4)
        years, rows = unique_year_rows(samples)
        assert years == tuple(range(1960, 1971))  # anchors stop one short
        assert rows.shape == (11, 4)
        ds = planted_dataset(n=12, d=4)
        np.testing.assert_array_equal(rows, ds.embeddings[:11])


class TestFitFoldPca:
    def test_rank_cap_warns(self):
        samples = windows(n=8, k=3, d=4)[:3]  # 5 unique years
        with pytest.warns(UserWarning, match="capped"):
            years, basis = fit_fold_pca(samples, d_prime=10)
        assert basis.components.shape[1] == 4  # min(10, d=4, rows-1=4)
        assert len(years) == 5

    def test_no_warning_when_feasible(self):
        samples = windows(n=20, k=3, d=6)
        years, basis = fit_fold_pca(samples, d_prime=2)
        assert basis.components.shape == (6, 2)
        assert years == tuple(range(1960, 1979))


class TestRunCv:
    CONFIG = TrainConfig(alpha=1e-2, batch_size=8, epochs=2, patience=2, seed=0)
    HYPER = ModelHyper(k=3, d_prime=3, h=4, h_a=4, dropout=0.0)

    def test_structure_no_news(self):
        samples = windows(n=33, k=3)  # 30 windows
        report = run_cv(samples, "no_news", self.CONFIG, self.HYPER,
                        n_folds=4, d_prime=3)
        assert report.variant == "no_news"
        assert len(report.folds) == 4
        plan = time_series_split(30, 4)
        for fold, ((tr_lo, tr_hi), (te_lo, te_hi)) in zip(report.folds, plan.folds):
            assert fold.n_train == tr_hi - tr_lo
            assert fold.n_test == te_hi - te_lo
            assert fold.pca_basis is None and fold.pca_train_years is None
        assert [f.fold for f in report.folds] == [1, 2, 3, 4]
        for key in ("accuracy", "precision_w", "recall_w", "f1_w"):
            assert key in report.mean and key in report.std

    def test_no_test_anchor_precedes_training(self):
        samples = windows(n=33, k=3)
        report = run_cv(samples, "no_news", self.CONFIG, self.HYPER,
                        n_folds=4, d_prime=3)
        for fold in report.folds:
            assert fold.train_anchor_span[1] < fold.test_anchor_span[0]

    @pytest.mark.filterwarnings("ignore::UserWarning")  # tiny folds may be single-class
    def test_fold_pca_fits_on_train_rows_only(self):
        samples = windows(n=27, k=3, d=5)  # 24 windows
        report = run_cv(samples, "full", self.CONFIG, self.HYPER,
                        n_folds=3, d_prime=3)
        plan = time_series_split(len(samples), 3)
        for fold, ((tr_lo, tr_hi), _) in zip(report.folds, plan.folds):
            years, basis = fit_fold_pca(samples[tr_lo:tr_hi], 3)
            assert fold.pca_train_years == years
            assert max(years) == fold.train_anchor_span[1]
            np.testing.assert_array_equal(fold.pca_basis.components,
                                          basis.components)
            np.testing.assert_array_equal(fold.pca_basis.mean, basis.mean)

    def test_unknown_variant(self):
        with pytest.raises(ConfigError):
            run_cv(windows(), "bilinear", self.CONFIG)


class TestLogregBaseline:
    def test_loss_grad_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(12, 4))
        y = rng.integers(0, 2, size=12).astype(float)
        w = rng.normal(size=4) * 0.5
        b = 0.3
        _, dw, db = logreg_loss_grad(w, b, x, y, l2=0.3)
        eps = 1e-6
        for i in range(4):
            w[i] += eps
            up, _, _ = logreg_loss_grad(w, b, x, y, l2=0.3)
            w[i] -= 2 * eps
            dn, _, _ = logreg_loss_grad(w, b, x, y, l2=0.3)
            w[i] += eps
            assert dw[i] == pytest.approx((up - dn) / (2 * eps), abs=1e-7)
        up, _, _ = logreg_loss_grad(w, b + eps, x, y, l2=0.3)
        dn, _, _ = logreg_loss_grad(w, b - eps, x, y, l2=0.3)
        assert db == pytest.approx((up - dn) / (2 * eps), abs=1e-7)

    def test_zero_iterations_scores_half(self):
        x = np.array([[1.0], [2.0]])
        w, b = fit_logreg(x, np.array([0.0, 1.0]), iters=0)
        np.testing.assert_array_equal(logreg_scores(w, b, x), [0.5, 0.5])

    def test_separable_data_reaches_auc_one(self):
        rng = np.random.default_rng(1)
        x = np.concatenate([rng.normal(-2, 0.1, 20), rng.normal(2, 0.1, 20)])
        y = np.array([0.0] * 20 + [1.0] * 20)
        w, b = fit_logreg(x.reshape(-1, 1), y)
        assert roc_auc(logreg_scores(w, b, x.reshape(-1, 1)), y.astype(int)) == 1.0

    def test_sample_features_layout(self):
        s = WindowedSample(
            prices=np.array([[1.0], [2.0]]),
            news=np.array([[1.0, 2.0, 3.0], [3.0, 4.0, 5.0]]),
            target=1, anchor_year=1961, years=(1960, 1961),
        )
        feats = sample_features([s])
        np.testing.assert_array_equal(feats, [[1.0, 2.0, 2.0, 3.0, 4.0]])

    def test_report_structure(self):
        samples = windows(n=33, k=3)
        report = baseline_logreg(samples, n_folds=3, d_prime=3, iters=50)
        assert report.variant == BASELINE_VARIANT
        assert len(report.folds) == 3
        for fold in report.folds:
            assert fold.pca_basis is not None
            assert fold.train_anchor_span[1] < fold.test_anchor_span[0]

    def test_same_fold_plan_as_model_cv(self):
        samples = windows(n=33, k=3)
        base = baseline_logreg(samples, n_folds=4, d_prime=3, iters=5)
        model = run_cv(samples, "no_news", TestRunCv.CONFIG, TestRunCv.HYPER,
                       n_folds=4, d_prime=3)
        for bf, mf in zip(base.folds, model.folds):
            assert (bf.n_train, bf.n_test) == (mf.n_train, mf.n_test)
            assert bf.test_anchor_span == mf.test_anchor_span


class TestSingleClassFold:
    def _rigged_samples(self):
        samples = windows(n=27, k=3)  # 24 windows -> 3 folds of test size 6
        rigged = []
        for i, s in enumerate(samples):
            target = 0 if i >= 18 else i % 2  # last test block single-class
            rigged.append(replace(s, target=target))
        return rigged

    def test_auc_excluded_with_warning(self):
        with pytest.warns(UserWarning, match="single-class"):
            report = baseline_logreg(self._rigged_samples(), n_folds=3,
                                     d_prime=3, iters=20)
        assert report.auc_folds_used == 2
        assert report.auc_folds_excluded == 1
        assert report.folds[-1].auc is None
        assert report.folds[0].auc is not None
        assert "auc" in report.mean  # mean over the two defined folds

    def test_csv_empty_cell_for_undefined_auc(self, tmp_path):
        with pytest.warns(UserWarning):
            report = baseline_logreg(self._rigged_samples(), n_folds=3,
                                     d_prime=3, iters=20)
        path = tmp_path / "report.csv"
        write_report_csv([report], path)
        lines = path.read_text().splitlines()
        assert lines[0] == "variant,fold,auc,accuracy,precision_w,recall_w,f1_w"
        last = lines[-1].split(",")
        assert last[0] == "logreg" and last[1] == "3" and last[2] == ""
        defined = lines[1].split(",")
        assert float(defined[2]) == report.folds[0].auc


class TestWriters:
    def _report(self):
        return baseline_logreg(windows(n=33, k=3), n_folds=3, d_prime=3, iters=20)

    def test_report_csv_row_count_and_parse(self, tmp_path):
        report = self._report()
        path = tmp_path / "report.csv"
        write_report_csv([report], path)
        lines = path.read_text().splitlines()
        assert len(lines) == 1 + 3
        row = lines[1].split(",")
        assert float(row[3]) == report.folds[0].metrics.accuracy

    def test_summary_json_shape(self, tmp_path):
        report = self._report()
        path = tmp_path / "summary.json"
        write_summary_json([report], path)
        doc = json.loads(path.read_text())
        block = doc["logreg"]
        assert set(block) == {
            "n_folds", "threshold", "mean", "std",
            "auc_folds_used", "auc_folds_excluded",
        }
        assert block["mean"]["accuracy"] == report.mean["accuracy"]
        assert block["n_folds"] == 3

    def test_roc_csv(self, tmp_path):
        rng = np.random.default_rng(2)
        scores = rng.random(20)
        labels = rng.integers(0, 2, size=20)
        path = tmp_path / "roc.csv"
        write_roc_csv(scores, labels, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "fpr,tpr"
        assert lines[1] == "0.0,0.0"
        assert lines[-1] == "1.0,1.0"
