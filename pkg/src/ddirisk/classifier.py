"""Predict whether a patient is dispensed at least one known DDI.

Logistic regression (full-batch gradient descent, L2) against three
baselines, evaluated with stratified k-fold cross-validation.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .data import GENDERS, PatientRecord
from .errors import ClassTooSmall, ConvergenceWarning, MissingDemographic, SingleClassTest
from .overlap import PatientProfile

METRICS = ("precision", "recall", "f1", "mcc", "auc_roc", "auc_pr")


@dataclass
class FeatureSet:
    X: np.ndarray
    y: np.ndarray
    columns: list[str]
    patient_ids: list[str]
    age: np.ndarray
    gender: np.ndarray  # "F"/"M"

    def subset(self, idx) -> "FeatureSet":
        idx = np.asarray(idx)
        return FeatureSet(self.X[idx], self.y[idx], self.columns,
                          [self.patient_ids[i] for i in idx], self.age[idx], self.gender[idx])

    def __len__(self):
        return len(self.y)


def build_features(profiles: Sequence[PatientProfile], patients: Mapping[str, PatientRecord],
                   drugs: Sequence[str] | None = None, include_drugs: bool = True,
                   neighborhood_features: Mapping[str, Mapping[str, float]] | None = None,
                   education: bool = False) -> FeatureSet:
    """Feature matrix with columns in a fixed order.

    gender_F, gender_M, age, nu, psi, then ``drug=<name>`` per drug (sorted),
    then ``hood:<feature>`` per neighborhood feature (sorted), then
    ``edu=<level>`` one-hots. The label is 1 when the patient has at least
    one known DDI.
    """
    profiles = list(profiles)
    if drugs is None:
        drugs = sorted({d for p in profiles for d in p.per_drug})
    drugs = list(drugs) if include_drugs else []
    hood_cols = sorted({k for v in (neighborhood_features or {}).values() for k in v})
    edu_levels = []
    if education:
        edu_levels = sorted({patients[p.patient_id].education or "not_reported"
                             for p in profiles if p.patient_id in patients})
    columns = (["gender_F", "gender_M", "age", "nu", "psi"] + [f"drug={d}" for d in drugs]
               + [f"hood:{c}" for c in hood_cols] + [f"edu={e}" for e in edu_levels])
    didx = {d: 5 + n for n, d in enumerate(drugs)}
    hbase = 5 + len(drugs)
    ebase = hbase + len(hood_cols)
    eidx = {e: ebase + n for n, e in enumerate(edu_levels)}

    X = np.zeros((len(profiles), len(columns)))
    y = np.zeros(len(profiles), dtype=np.int64)
    ages = np.zeros(len(profiles))
    genders = np.empty(len(profiles), dtype="<U1")
    for r, p in enumerate(profiles):
        rec = patients.get(p.patient_id)
        if rec is None:
            raise MissingDemographic(f"no record for patient {p.patient_id!r}")
        X[r, 0 if rec.gender == "F" else 1] = 1.0
        X[r, 2:5] = (rec.age_years, p.nu, p.psi_count)
        for d in p.per_drug:
            if d in didx:
                X[r, didx[d]] = 1.0
        if hood_cols:
            vals = (neighborhood_features or {}).get(rec.neighborhood)
            if vals is None:
                raise MissingDemographic(f"no neighborhood features for {p.patient_id!r}")
            for n, c in enumerate(hood_cols):
                X[r, hbase + n] = float(vals[c])
        if edu_levels:
            X[r, eidx[rec.education or "not_reported"]] = 1.0
        y[r] = int(p.phi_count > 0)
        ages[r] = rec.age_years
        genders[r] = rec.gender
    return FeatureSet(X, y, columns, [p.patient_id for p in profiles], ages, genders)


def stratified_kfold(y, k: int, seed: int) -> np.ndarray:
    """Fold index per sample; each class is shuffled and dealt round-robin."""
    y = np.asarray(y)
    if k < 2:
        raise ValueError("k must be >= 2")
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y != 1)
    if len(pos) < k or len(neg) < k:
        raise ClassTooSmall(f"each class needs at least {k} samples "
                            f"(have {len(pos)} positive, {len(neg)} negative)")
    rng = np.random.default_rng(seed)
    folds = np.empty(len(y), dtype=np.int64)
    folds[rng.permutation(pos)] = np.arange(len(pos)) % k
    # continue dealing where the positives stopped so fold sizes differ by <= 1
    folds[rng.permutation(neg)] = (len(pos) + np.arange(len(neg))) % k
    return folds


# ---- models -------------------------------------------------------------

def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class LogRegModel:
    weights: np.ndarray
    intercept: float
    mean: np.ndarray
    scale: np.ndarray
    columns: list[str]
    converged: bool
    iterations: int
    name: str = "LR"

    def scores(self, data: FeatureSet) -> np.ndarray:
        return _sigmoid(((data.X - self.mean) / self.scale) @ self.weights + self.intercept)

    def predict(self, data: FeatureSet) -> np.ndarray:
        return (self.scores(data) >= 0.5).astype(np.int64)


@dataclass(frozen=True)
class LogRegParams:
    l2_penalty: float = 1e-3
    max_iters: int = 3000
    tolerance: float = 1e-5


def train_logreg(train: FeatureSet, params: LogRegParams = LogRegParams()) -> LogRegModel:
    """Minimize mean log-loss + l2/2 |w|^2 by gradient descent with step 1/L.

    Features are z-scored with training statistics; constant columns keep
    scale 1 and therefore stay at zero weight.
    """
    X, y = train.X, train.y.astype(float)
    if y.min() == y.max():
        raise ClassTooSmall("training split has a single class")
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Z = (X - mean) / scale
    n = len(y)
    A = np.hstack([Z, np.ones((n, 1))])
    # log-loss Hessian is bounded by A'A / 4n
    lip = np.linalg.norm(A, 2) ** 2 / (4 * n) + params.l2_penalty
    step = 1.0 / lip
    base = y.mean()
    theta = np.zeros(A.shape[1])
    theta[-1] = math.log(base / (1 - base))
    reg = np.full(A.shape[1], params.l2_penalty)
    reg[-1] = 0.0
    converged = False
    it = 0
    for it in range(1, params.max_iters + 1):
        grad = A.T @ (_sigmoid(A @ theta) - y) / n + reg * theta
        if np.linalg.norm(grad) < params.tolerance:
            converged = True
            break
        theta -= step * grad
    if not converged:
        warnings.warn(f"logistic regression stopped after {it} iterations", ConvergenceWarning)
    return LogRegModel(theta[:-1].copy(), float(theta[-1]), mean, scale, list(train.columns),
                       converged, it)


@dataclass
class UniformBaseline:
    seed: int = 0
    p: float = 0.5
    name: str = "Uniform"

    def fit(self, train: FeatureSet) -> "UniformBaseline":
        return self

    def scores(self, data: FeatureSet) -> np.ndarray:
        return np.random.default_rng(self.seed).random(len(data))

    def predict(self, data: FeatureSet) -> np.ndarray:
        return (self.scores(data) >= 1.0 - self.p).astype(np.int64)


@dataclass
class BiasedBaseline(UniformBaseline):
    name: str = "Biased"

    def fit(self, train: FeatureSet) -> "BiasedBaseline":
        self.p = float(train.y.mean())
        return self


@dataclass
class AgeGenderBaseline:
    """Per gender, predict positive from the age cutoff with the best training MCC."""
    cutoffs: dict = field(default_factory=dict)
    name: str = "AgeGender"

    def fit(self, train: FeatureSet) -> "AgeGenderBaseline":
        for g in GENDERS:
            m = train.gender == g
            self.cutoffs[g] = best_age_cutoff(train.age[m], train.y[m])
        return self

    def scores(self, data: FeatureSet) -> np.ndarray:
        cut = np.array([self.cutoffs.get(g, math.inf) for g in data.gender])
        return (data.age >= cut).astype(float)

    def predict(self, data: FeatureSet) -> np.ndarray:
        return self.scores(data).astype(np.int64)


def best_age_cutoff(age, y) -> float:
    """Cutoff c maximizing MCC of the rule age >= c; ties go to the lowest c."""
    age = np.asarray(age, dtype=float)
    y = np.asarray(y)
    if len(age) == 0:
        return math.inf
    best, best_c = -math.inf, math.inf
    for c in [*np.unique(age), math.inf]:
        m = mcc(confusion(y, (age >= c).astype(np.int64)))
        if m > best:
            best, best_c = m, float(c)
    return best_c


# ---- metrics ------------------------------------------------------------

@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    fn: int
    tn: int


def confusion(y_true, y_pred) -> Confusion:
    y_true = np.asarray(y_true).astype(bool)
    y_pred = np.asarray(y_pred).astype(bool)
    return Confusion(int(np.sum(y_true & y_pred)), int(np.sum(~y_true & y_pred)),
                     int(np.sum(y_true & ~y_pred)), int(np.sum(~y_true & ~y_pred)))


def precision(c: Confusion) -> float:
    return c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0


def recall(c: Confusion) -> float:
    return c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0


def f1(c: Confusion) -> float:
    p, r = precision(c), recall(c)
    return 2 * p * r / (p + r) if p + r else 0.0


def mcc(c: Confusion) -> float:
    den = math.sqrt(float((c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn)))
    return (c.tp * c.tn - c.fp * c.fn) / den if den else 0.0


def _roc_points(y, s):
    # one point per distinct score, so tied scores move diagonally
    order = np.argsort(-s, kind="stable")
    y, s = y[order], s[order]
    last = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]
    tps = np.cumsum(y)[last]
    fps = (last + 1) - tps
    return np.r_[0, fps], np.r_[0, tps]


def auc_roc(y_true, scores) -> float:
    y = np.asarray(y_true).astype(np.int64)
    s = np.asarray(scores, dtype=float)
    npos, nneg = y.sum(), len(y) - y.sum()
    if npos == 0 or nneg == 0:
        raise SingleClassTest("AUC needs both classes")
    fps, tps = _roc_points(y, s)
    x, h = fps / nneg, tps / npos
    return float(np.sum(np.diff(x) * (h[1:] + h[:-1]) / 2))


def auc_pr(y_true, scores) -> float:
    """Area under the step-interpolated precision/recall curve.

    Precision at recall r is the best precision at any recall >= r.
    """
    y = np.asarray(y_true).astype(np.int64)
    s = np.asarray(scores, dtype=float)
    npos = y.sum()
    if npos == 0 or npos == len(y):
        raise SingleClassTest("AUC-PR needs both classes")
    fps, tps = _roc_points(y, s)
    fps, tps = fps[1:], tps[1:]
    rec = tps / npos
    prec = tps / (tps + fps)
    interp = np.maximum.accumulate(prec[::-1])[::-1]
    return float(np.sum(np.diff(np.r_[0.0, rec]) * interp))


@dataclass
class FoldResult:
    fold: int
    confusion: Confusion
    metrics: dict


def evaluate(model, test: FeatureSet) -> FoldResult:
    if test.y.min() == test.y.max():
        raise SingleClassTest("test split has a single class")
    c = confusion(test.y, model.predict(test))
    s = model.scores(test)
    m = {"precision": precision(c), "recall": recall(c), "f1": f1(c), "mcc": mcc(c),
         "auc_roc": auc_roc(test.y, s), "auc_pr": auc_pr(test.y, s)}
    return FoldResult(-1, c, m)


@dataclass
class EvalReport:
    model: str
    folds: list[FoldResult]

    @property
    def mean(self) -> dict:
        return {k: float(np.mean([f.metrics[k] for f in self.folds])) for k in METRICS}


def _fit_model(name: str, train: FeatureSet, params: LogRegParams, seed: int):
    if name == "LR":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            return train_logreg(train, params)
    if name == "Uniform":
        return UniformBaseline(seed).fit(train)
    if name == "Biased":
        return BiasedBaseline(seed).fit(train)
    if name == "AgeGender":
        return AgeGenderBaseline().fit(train)
    raise ValueError(f"unknown model {name!r}")


MODELS = ("LR", "Uniform", "Biased", "AgeGender")


def cross_validate(data: FeatureSet, k: int = 4, seed: int = 0,
                   params: LogRegParams = LogRegParams(), models: Sequence[str] = MODELS,
                   threads: int = 1) -> dict[str, EvalReport]:
    folds = stratified_kfold(data.y, k, seed)

    def one(job):
        name, f = job
        train = data.subset(np.flatnonzero(folds != f))
        test = data.subset(np.flatnonzero(folds == f))
        res = evaluate(_fit_model(name, train, params, seed * 1000 + f), test)
        res.fold = f
        return res

    jobs = [(m, f) for m in models for f in range(k)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(j) for j in jobs]
    return {m: EvalReport(m, results[n * k:(n + 1) * k]) for n, m in enumerate(models)}


def write_reports_csv(path, reports: Mapping[str, EvalReport], dp: int = 4) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "fold", *METRICS, "tp", "fp", "fn", "tn"])
        for name, rep in reports.items():
            for f in rep.folds:
                c = f.confusion
                w.writerow([name, f.fold, *(f"{f.metrics[m]:.{dp}f}" for m in METRICS),
                            c.tp, c.fp, c.fn, c.tn])
            w.writerow([name, "mean", *(f"{rep.mean[m]:.{dp}f}" for m in METRICS),
                        "", "", "", ""])


def write_reports_json(path, reports: Mapping[str, EvalReport], dp: int = 6) -> None:
    doc = {name: {"mean": {m: round(v, dp) for m, v in rep.mean.items()},
                  "folds": [{"fold": f.fold, **{m: round(f.metrics[m], dp) for m in METRICS},
                             "confusion": [f.confusion.tp, f.confusion.fp, f.confusion.fn,
                                           f.confusion.tn]} for f in rep.folds]}
           for name, rep in reports.items()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_weights_csv(path, model: LogRegModel, dp: int = 6) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "weight"])
        w.writerow(["(intercept)", f"{model.intercept:.{dp}f}"])
        for c, v in sorted(zip(model.columns, model.weights), key=lambda t: (-abs(t[1]), t[0])):
            w.writerow([c, f"{v:.{dp}f}"])
