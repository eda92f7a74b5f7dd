import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from ddirisk.data import AdministrationInterval as Iv
from ddirisk.data import InteractionCatalog, PatientRecord, Severity, default_age_groups
from ddirisk.errors import EmptyBaseline, EmptyStratum, RankDeficient
from ddirisk.measures import (RelativeRisk, RiskKind, age_risks, age_table_from_counts,
                              drug_pi, drugcount_relative_risks, drugcount_table_from_counts,
                              fit_polynomial_trend, gender_relative_risks,
                              gender_table_from_counts, pair_measures, rank_product,
                              read_pair_csv, severity_relative_risks, write_pair_csv)
from ddirisk.overlap import profile_all


def test_relative_risk_kinds():
    rr = RelativeRisk.of(1, 4, 1, 8)
    assert rr.kind is RiskKind.FINITE and rr.value == Fraction(2)
    assert rr.reciprocal().value == Fraction(1, 2)
    assert RelativeRisk.of(3, 10, 0, 10).kind is RiskKind.POS_INF
    assert RelativeRisk.of(0, 10, 0, 10).kind is RiskKind.NOT_OBSERVED
    assert math.isinf(float(RelativeRisk.of(3, 10, 0, 10)))
    assert RelativeRisk.of(3, 10, 0, 10).reciprocal().value == 0
    for rr in (RelativeRisk.of(2, 3, 1, 7), RelativeRisk.of(1, 2, 0, 2)):
        assert RelativeRisk.parse(rr.format(6)).kind is rr.kind


def test_gender_table_hand_values():
    t = gender_table_from_counts({"F": {"u": 100, "u_psi": 50, "u_phi": 20},
                                  "M": {"u": 50, "u_psi": 20, "u_phi": 5}})
    assert t.row("F").values["rrc"].value == Fraction(5, 4)
    assert t.row("F").values["rri"].value == Fraction(2)
    assert t.row("M").values["rri"].value == Fraction(1, 2)
    assert t.audit()
    with pytest.raises(EmptyStratum):
        gender_table_from_counts({"F": {"u": 0}, "M": {"u": 3}})


def test_drugcount_baseline():
    t = drugcount_table_from_counts([("1", 10, 0, 0), ("2", 20, 10, 2), ("3", 10, 8, 4)])
    assert t.row("1").values["rri"] is None
    assert t.value("rri", "2") == 1.0
    assert t.value("rri", "3") == pytest.approx((4 / 10) / (2 / 20))
    with pytest.raises(EmptyBaseline):
        drugcount_table_from_counts([("1", 10, 0, 0)])


def test_age_table_requires_eligible_patients():
    with pytest.raises(EmptyStratum):
        age_table_from_counts([("00-04", "", 5, 0, 0, 0)])
    t = age_table_from_counts([("00-04", "", 5, 0, 0, 0)], skip_empty=True)
    assert t.row("00-04", "").values == {"rc": None, "ri": None}


@pytest.fixture
def cohort():
    cat = InteractionCatalog()
    cat.add("A", "B", Severity.MAJOR)
    cat.add("B", "C", Severity.MINOR)
    ivs = [
        Iv("f1", "A", 0, 10), Iv("f1", "B", 5, 15),          # A-B interacts, 5 days
        Iv("f2", "B", 0, 10), Iv("f2", "C", 0, 10),          # B-C interacts, 10 days
        Iv("f3", "A", 0, 3),                                  # one drug
        Iv("m1", "A", 0, 10), Iv("m1", "C", 5, 8),           # A-C not in catalog
        Iv("m2", "A", 0, 10), Iv("m2", "B", 20, 30),         # no overlap
    ]
    pats = {p.patient_id: p for p in [
        PatientRecord("f1", "F", 70), PatientRecord("f2", "F", 72), PatientRecord("f3", "F", 3),
        PatientRecord("m1", "M", 71), PatientRecord("m2", "M", 40)]}
    return profile_all(ivs, cat), pats, cat


def test_gender_from_profiles(cohort):
    profiles, pats, _ = cohort
    t = gender_relative_risks(profiles, pats)
    assert t.row("F").counts == {"u": 3, "u_nu2": 2, "u_psi": 2, "u_phi": 2}
    assert t.row("M").counts == {"u": 2, "u_nu2": 2, "u_psi": 1, "u_phi": 0}
    assert t.row("F").values["rri"].kind is RiskKind.POS_INF
    assert t.row("F").values["rrc"].value == Fraction(2, 3) / Fraction(1, 2)
    # dropping B removes both interactions but keeps every patient in the denominators
    t2 = gender_relative_risks(profiles, pats, exclude_drugs=["B"])
    assert t2.row("F").counts["u"] == 3 and t2.row("F").counts["u_phi"] == 0


def test_severity_from_profiles(cohort):
    profiles, pats, cat = cohort
    t = severity_relative_risks(profiles, pats, cat, skip_empty=True)
    assert [r.stratum[0] for r in t.rows] == ["Major", "Minor"]
    assert t.row("Major").counts["u_phi_f"] == 1


def test_age_from_profiles(cohort):
    profiles, pats, _ = cohort
    t = age_risks(profiles, pats, default_age_groups(), skip_empty=True)
    r = t.row("70-74", "")
    assert r.counts == {"u": 3, "u_nu2": 3, "u_psi": 3, "u_phi": 2}
    assert r.values["ri"] == Fraction(2, 3)


def test_drugcount_from_profiles(cohort):
    profiles, _, _ = cohort
    t = drugcount_relative_risks(profiles)
    assert t.row("2").counts == {"u": 4, "u_psi": 3, "u_phi": 2}


def test_pair_measures(cohort, tmp_path):
    profiles, pats, cat = cohort
    pm = {p.pair: p for p in pair_measures(profiles, cat, pats)}
    ab = pm[("A", "B")]
    assert (ab.u_psi, ab.u_phi, ab.severity) == (1, 1, Severity.MAJOR)
    assert ab.tau_phi == pytest.approx(5 / 15)
    assert ab.gamma_ij == pytest.approx(1 / 4)  # 4 users of A
    assert ab.gamma_ji == pytest.approx(1 / 3)  # 3 users of B
    assert ab.rri_f.kind is RiskKind.POS_INF
    ac = pm[("A", "C")]
    assert ac.severity is None and ac.tau_phi == 0.0 and ac.mean_len == 3
    write_pair_csv(tmp_path / "p.csv", pm.values())
    back = {p.pair: p for p in read_pair_csv(tmp_path / "p.csv")}
    assert back[("A", "B")].u_phi == 1 and back[("A", "B")].severity is Severity.MAJOR


def test_drug_pi(cohort):
    profiles, _, _ = cohort
    pi = {d.drug: d.pi for d in drug_pi(profiles)}
    assert pi == {"A": 0.5, "B": 1.0, "C": 0.5}


def test_rank_product_ties():
    items = [{"pair": "x", "tau_phi": 0.3, "u_phi": 10},
             {"pair": "y", "tau_phi": 0.3, "u_phi": 5},
             {"pair": "z", "tau_phi": 0.1, "u_phi": 20}]
    out = rank_product(items)
    ranks = {r.item["pair"]: r.ranks for r in out}
    assert ranks == {"x": (1.5, 2.0), "y": (1.5, 3.0), "z": (3.0, 1.0)}
    assert [(r.item["pair"], r.position) for r in out] == [("x", 1), ("z", 1), ("y", 3)]


@pytest.mark.parametrize("degree", [1, 2, 3])
def test_trend_against_scipy(degree):
    rng = np.random.default_rng(degree)
    x = np.arange(12, dtype=float)
    y = 0.1 * x ** 2 - x + rng.normal(size=12)
    fit = fit_polynomial_trend(x, y, degree)
    ref = np.polynomial.Polynomial.fit(x, y, degree).convert().coef
    assert np.allclose(fit.coefficients, ref)
    if degree == 1:
        assert fit.r_squared == pytest.approx(stats.linregress(x, y).rvalue ** 2)


def test_trend_errors():
    with pytest.raises(ValueError):
        fit_polynomial_trend([0, 1, 2, 3], [1, 2, 3, 4], 3)
    with pytest.raises(RankDeficient):
        fit_polynomial_trend([1, 1, 1, 1, 1], [1, 2, 3, 4, 5], 1)
