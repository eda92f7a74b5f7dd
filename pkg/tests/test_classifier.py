import warnings

import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import average_precision_score, matthews_corrcoef, roc_auc_score

from ddirisk.classifier import (AgeGenderBaseline, BiasedBaseline, FeatureSet, LogRegParams,
                                UniformBaseline, auc_pr, auc_roc, best_age_cutoff, confusion,
                                cross_validate, f1, mcc, precision, recall, stratified_kfold,
                                train_logreg)
from ddirisk.errors import ClassTooSmall, ConvergenceWarning, SingleClassTest


def toy(n=400, seed=0, d=4):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = (X @ np.arange(1, d + 1) / d + rng.normal(size=n) > 0.5).astype(np.int64)
    age = rng.integers(0, 100, n).astype(float)
    gender = np.where(rng.random(n) < 0.5, "F", "M")
    return FeatureSet(X, y, [f"x{i}" for i in range(d)], [str(i) for i in range(n)], age, gender)


def test_confusion_by_hand():
    c = confusion([1, 1, 1, 0, 0, 0, 0, 1], [1, 1, 0, 1, 0, 0, 0, 0])
    assert (c.tp, c.fp, c.fn, c.tn) == (2, 1, 2, 3)
    assert precision(c) == 2 / 3
    assert recall(c) == 0.5
    assert f1(c) == pytest.approx(4 / 7)
    # (2*3 - 1*2) / sqrt(3 * 4 * 4 * 5)
    assert mcc(c) == pytest.approx(4 / np.sqrt(240))


def test_mcc_degenerate():
    assert mcc(confusion([1, 0, 1], [0, 0, 0])) == 0.0


def test_metrics_against_sklearn():
    rng = np.random.default_rng(3)
    y = rng.integers(0, 2, 300)
    s = np.round(rng.random(300) + 0.3 * y, 1)  # rounding creates ties
    pred = (s >= 0.7).astype(int)
    assert mcc(confusion(y, pred)) == pytest.approx(matthews_corrcoef(y, pred))
    assert auc_roc(y, s) == pytest.approx(roc_auc_score(y, s))
    assert auc_pr(y, s) >= average_precision_score(y, s) - 1e-12
    with pytest.raises(SingleClassTest):
        auc_roc([1, 1], [0.2, 0.3])


def test_auc_perfect_and_inverted():
    y = [0, 0, 1, 1]
    assert auc_roc(y, [0.1, 0.2, 0.8, 0.9]) == 1.0
    assert auc_roc(y, [0.9, 0.8, 0.2, 0.1]) == 0.0
    assert auc_roc(y, [0.5] * 4) == 0.5
    assert auc_pr(y, [0.1, 0.2, 0.8, 0.9]) == 1.0


def test_logreg_matches_sklearn():
    data = toy()
    n = len(data)
    model = train_logreg(data, LogRegParams(l2_penalty=0.01, max_iters=50_000, tolerance=1e-9))
    assert model.converged
    Z = (data.X - model.mean) / model.scale
    ref = LogisticRegression(C=1 / (0.01 * n), tol=1e-10, max_iter=10_000).fit(Z, data.y)
    assert np.allclose(model.weights, ref.coef_[0], atol=1e-4)
    assert model.intercept == pytest.approx(ref.intercept_[0], abs=1e-4)


def test_logreg_warns_when_capped():
    with pytest.warns(ConvergenceWarning):
        train_logreg(toy(), LogRegParams(max_iters=2))


def test_stratified_folds():
    y = np.array([1] * 10 + [0] * 30)
    folds = stratified_kfold(y, 4, seed=1)
    for f in range(4):
        assert np.sum(y[folds == f]) in (2, 3)
        assert np.sum(folds == f) == 10
    assert np.array_equal(folds, stratified_kfold(y, 4, seed=1))
    with pytest.raises(ClassTooSmall):
        stratified_kfold(np.array([1, 0, 0, 0, 0]), 2, 0)
    with pytest.raises(ValueError):
        stratified_kfold(y, 1, 0)


def test_baselines():
    data = toy()
    u = UniformBaseline(seed=4).fit(data)
    assert np.array_equal(u.predict(data), UniformBaseline(seed=4).predict(data))
    b = BiasedBaseline(seed=4).fit(data)
    assert b.p == pytest.approx(data.y.mean())
    assert abs(b.predict(data).mean() - data.y.mean()) < 0.1


def test_best_age_cutoff():
    age = np.array([10, 20, 30, 40, 50, 60])
    y = np.array([0, 0, 0, 1, 1, 1])
    assert best_age_cutoff(age, y) == 40
    # constant label: every cutoff scores MCC 0, the lowest one wins
    assert best_age_cutoff(age, np.zeros(6)) == 10
    model = AgeGenderBaseline().fit(FeatureSet(np.zeros((6, 1)), y, ["c"], list("abcdef"),
                                               age.astype(float), np.array(["F"] * 6)))
    assert model.cutoffs["F"] == 40


def test_cross_validate_reports():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        reps = cross_validate(toy(600), k=3, seed=2)
    assert set(reps) == {"LR", "Uniform", "Biased", "AgeGender"}
    assert len(reps["LR"].folds) == 3
    assert reps["LR"].mean["mcc"] > 0.4
    assert abs(reps["Uniform"].mean["mcc"]) < 0.15


def test_separable_toy_fits_perfectly():
    X = np.array([[0.0, 0.0], [0.2, 0.1], [0.1, 0.3], [2.0, 2.0], [2.2, 1.9], [1.8, 2.3]])
    y = np.array([0, 0, 0, 1, 1, 1])
    data = FeatureSet(X, y, ["a", "b"], list("uvwxyz"), np.zeros(6), np.array(["F"] * 6))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        model = train_logreg(data)
    assert np.array_equal(model.predict(data), y)


def test_constant_features_give_base_rate_intercept():
    y = np.array([1] * 30 + [0] * 70)
    data = FeatureSet(np.ones((100, 3)), y, list("abc"), [str(i) for i in range(100)],
                      np.zeros(100), np.array(["F"] * 100))
    model = train_logreg(data)
    assert np.allclose(model.weights, 0)
    assert model.intercept == pytest.approx(np.log(0.3 / 0.7), abs=1e-3)


def test_simple_feature_count():
    from ddirisk.classifier import build_features
    from ddirisk.data import PatientRecord
    from ddirisk.overlap import PatientProfile
    drugs = [f"D{i:03d}" for i in range(122)]
    prof = PatientProfile("p", nu=1)
    prof.per_drug = {"D005": None}
    data = build_features([prof], {"p": PatientRecord("p", "F", 50)}, drugs=drugs)
    assert len(data.columns) == 127
    assert data.X[0, data.columns.index("drug=D005")] == 1.0
