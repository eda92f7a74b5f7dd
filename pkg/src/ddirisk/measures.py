"""Population-level pair statistics and stratified (relative) risks.

Every risk table keeps the integer counts it was computed from, so tables can
be rebuilt from published counts alone and audited after the fact.
"""

from __future__ import annotations

import csv
import enum
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .data import AgeGroup, InteractionCatalog, PatientRecord, Severity, assign_age_group
from .errors import EmptyBaseline, EmptyStratum, MissingDemographic, RankDeficient
from .overlap import PatientProfile


class RiskKind(enum.Enum):
    FINITE = "finite"
    POS_INF = "inf"
    NOT_OBSERVED = "not_observed"


@dataclass(frozen=True)
class RelativeRisk:
    kind: RiskKind
    value: Fraction | None = None

    @classmethod
    def of(cls, num_a: int, den_a: int, num_b: int, den_b: int) -> "RelativeRisk":
        """(num_a/den_a) / (num_b/den_b) with explicit infinities."""
        if den_a <= 0 or den_b <= 0:
            raise EmptyStratum("relative risk with an empty reference population")
        if num_b == 0:
            return cls(RiskKind.POS_INF) if num_a > 0 else cls(RiskKind.NOT_OBSERVED)
        return cls(RiskKind.FINITE, Fraction(num_a * den_b, den_a * num_b))

    @property
    def is_finite(self) -> bool:
        return self.kind is RiskKind.FINITE

    def __float__(self) -> float:
        if self.kind is RiskKind.POS_INF:
            return math.inf
        if self.kind is RiskKind.NOT_OBSERVED:
            return math.nan
        return float(self.value)

    def reciprocal(self) -> "RelativeRisk":
        if self.kind is RiskKind.NOT_OBSERVED:
            return self
        if self.kind is RiskKind.POS_INF:
            return RelativeRisk(RiskKind.FINITE, Fraction(0))
        if self.value == 0:
            return RelativeRisk(RiskKind.POS_INF)
        return RelativeRisk(RiskKind.FINITE, 1 / self.value)

    def format(self, dp: int = 4) -> str:
        if self.kind is RiskKind.POS_INF:
            return "inf"
        if self.kind is RiskKind.NOT_OBSERVED:
            return ""
        return f"{float(self.value):.{dp}f}"

    @classmethod
    def parse(cls, text: str) -> "RelativeRisk":
        text = text.strip()
        if text.lower() == "inf":
            return cls(RiskKind.POS_INF)
        if not text:
            return cls(RiskKind.NOT_OBSERVED)
        return cls(RiskKind.FINITE, Fraction(text))


def _fmt(v, dp=4) -> str:
    if v is None:
        return ""
    if isinstance(v, RelativeRisk):
        return v.format(dp)
    if isinstance(v, (Fraction, float)):
        return f"{float(v):.{dp}f}"
    return str(v)


@dataclass
class RiskRow:
    stratum: tuple
    counts: dict
    values: dict


@dataclass
class RiskTable:
    kind: str
    stratum_fields: tuple
    count_fields: tuple
    value_fields: tuple
    rows: list = field(default_factory=list)

    def row(self, *stratum) -> RiskRow:
        for r in self.rows:
            if r.stratum == tuple(stratum):
                return r
        raise KeyError(stratum)

    def value(self, field_name: str, *stratum) -> float:
        v = self.row(*stratum).values[field_name]
        return math.nan if v is None else float(v)

    def audit(self) -> bool:
        """Recompute every value from the stored counts and compare exactly."""
        fresh = _rebuild(self)
        return all(a.values == b.values for a, b in zip(self.rows, fresh.rows))

    def write_csv(self, path, dp: int = 4) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([*self.stratum_fields, *self.count_fields, *self.value_fields])
            for r in self.rows:
                w.writerow([*r.stratum, *(r.counts[c] for c in self.count_fields),
                            *(_fmt(r.values[v], dp) for v in self.value_fields)])


def _ratio(num: int, den: int) -> Fraction | None:
    return Fraction(num, den) if den > 0 else None


# ---- gender -------------------------------------------------------------

def gender_table_from_counts(counts: Mapping[str, Mapping[str, int]]) -> RiskTable:
    """``counts[g]`` holds u, u_psi, u_phi (and optionally u_nu2) for g in F, M."""
    for g in ("F", "M"):
        if counts.get(g, {}).get("u", 0) <= 0:
            raise EmptyStratum(f"no patients of gender {g}")
    f, m = counts["F"], counts["M"]
    rrc_f = RelativeRisk.of(f["u_psi"], f["u"], m["u_psi"], m["u"])
    rri_f = RelativeRisk.of(f["u_phi"], f["u"], m["u_phi"], m["u"])
    table = RiskTable("gender", ("gender",), ("u", "u_nu2", "u_psi", "u_phi"), ("rrc", "rri"))
    for g, rrc, rri in (("F", rrc_f, rri_f), ("M", rrc_f.reciprocal(), rri_f.reciprocal())):
        c = counts[g]
        table.rows.append(RiskRow((g,), {k: int(c.get(k, 0)) for k in table.count_fields},
                                  {"rrc": rrc, "rri": rri}))
    return table


def _gender_of(patients: Mapping[str, PatientRecord], pid: str) -> str:
    try:
        return patients[pid].gender
    except KeyError:
        raise MissingDemographic(f"no demographic record for patient {pid!r}") from None


def _pair_counts(prof: PatientProfile, exclude: frozenset) -> tuple[int, int]:
    if not exclude:
        return prof.psi_count, prof.phi_count
    psi = phi = 0
    for (a, b), s in prof.pair_stats.items():
        if a in exclude or b in exclude:
            continue
        psi += 1
        phi += s.phi
    return psi, phi


def gender_relative_risks(profiles: Iterable[PatientProfile],
                          patients: Mapping[str, PatientRecord],
                          exclude_drugs: Iterable[str] = ()) -> RiskTable:
    """RRC and RRI of women versus men.

    ``exclude_drugs`` drops every pair involving those drugs before counting
    (used to set contraceptives aside). Denominators stay the full gender
    populations.
    """
    exclude = frozenset(exclude_drugs)
    counts = {g: defaultdict(int) for g in ("F", "M")}
    for prof in profiles:
        c = counts[_gender_of(patients, prof.patient_id)]
        psi, phi = _pair_counts(prof, exclude)
        c["u"] += 1
        c["u_nu2"] += prof.nu >= 2
        c["u_psi"] += psi > 0
        c["u_phi"] += phi > 0
    return gender_table_from_counts(counts)


# ---- severity -----------------------------------------------------------

def severity_table_from_counts(rows: Iterable[tuple[str, int, int]], u_f: int,
                               u_m: int) -> RiskTable:
    """``rows`` are (severity label, affected men, affected women)."""
    table = RiskTable("severity", ("severity",), ("u_phi_m", "u_phi_f", "u_m", "u_f"),
                      ("rri_f",))
    for label, n_m, n_f in rows:
        if n_m == 0 and n_f == 0:
            raise EmptyStratum(f"no patients with a {label} interaction")
        table.rows.append(RiskRow(
            (label,), {"u_phi_m": n_m, "u_phi_f": n_f, "u_m": u_m, "u_f": u_f},
            {"rri_f": RelativeRisk.of(n_f, u_f, n_m, u_m)}))
    return table


def severity_relative_risks(profiles: Iterable[PatientProfile],
                            patients: Mapping[str, PatientRecord],
                            catalog: InteractionCatalog, skip_empty: bool = False) -> RiskTable:
    """RRI^F per severity class; a patient counts once in each class they hit."""
    per = {s: {"F": 0, "M": 0} for s in Severity}
    tot = {"F": 0, "M": 0}
    for prof in profiles:
        g = _gender_of(patients, prof.patient_id)
        tot[g] += 1
        hit = {catalog.lookup(a, b) for (a, b), s in prof.pair_stats.items() if s.phi}
        for sev in hit:
            if sev is not None:
                per[sev][g] += 1
    rows = [(s.value, per[s]["M"], per[s]["F"]) for s in Severity
            if not skip_empty or per[s]["M"] + per[s]["F"] > 0]
    return severity_table_from_counts(rows, tot["F"], tot["M"])


# ---- per pair -----------------------------------------------------------

def pair_gender_risk(pair: tuple[str, str], profiles: Iterable[PatientProfile],
                     patients: Mapping[str, PatientRecord]) -> RelativeRisk:
    key = tuple(sorted(pair))
    hit = {"F": 0, "M": 0}
    tot = {"F": 0, "M": 0}
    for prof in profiles:
        g = _gender_of(patients, prof.patient_id)
        tot[g] += 1
        s = prof.pair_stats.get(key)
        if s is not None and s.phi:
            hit[g] += 1
    return RelativeRisk.of(hit["F"], tot["F"], hit["M"], tot["M"])


@dataclass
class PairMeasures:
    pair: tuple
    u_psi: int
    u_phi: int
    tau_pop: float
    tau_phi: float
    gamma_ij: float
    gamma_ji: float
    mean_len: float
    sd_len: float
    severity: Severity | None
    u_phi_f: int = 0
    u_phi_m: int = 0
    rri_f: RelativeRisk | None = None

    @property
    def in_catalog(self) -> bool:
        return self.severity is not None


def pair_measures(profiles: Sequence[PatientProfile], catalog: InteractionCatalog,
                  patients: Mapping[str, PatientRecord] | None = None) -> list[PairMeasures]:
    """Per-pair aggregates over all co-administering patients.

    Length mean and sd run over the interacting patients for catalog pairs
    and over the co-administering patients otherwise. The sd is the sample
    sd (n - 1), 0 for a single patient.
    """
    users: dict[str, int] = defaultdict(int)
    agg: dict = {}
    tot = {"F": 0, "M": 0}
    for prof in profiles:
        g = _gender_of(patients, prof.patient_id) if patients is not None else None
        if g:
            tot[g] += 1
        for d in prof.per_drug:
            users[d] += 1
        for key, s in prof.pair_stats.items():
            a = agg.get(key)
            if a is None:
                a = agg[key] = [0, 0.0, 0, 0, 0, 0, 0, 0]
            # psi, tau sum, phi, F phi, M phi, len n, len sum, len sumsq
            a[0] += 1
            a[1] += s.tau_u
            if s.phi:
                a[2] += 1
                if g == "F":
                    a[3] += 1
                elif g == "M":
                    a[4] += 1
            if s.phi or catalog.lookup(*key) is None:
                a[5] += 1
                a[6] += s.lambda_ij
                a[7] += s.lambda_ij * s.lambda_ij
    out = []
    for key in sorted(agg):
        u_psi, tau_sum, u_phi, phi_f, phi_m, n, lsum, lsq = agg[key]
        sev = catalog.lookup(*key)
        mean = lsum / n if n else math.nan
        var = (lsq - lsum * lsum / n) / (n - 1) if n > 1 else 0.0
        rri = None
        if patients is not None and tot["F"] and tot["M"] and sev is not None:
            rri = RelativeRisk.of(phi_f, tot["F"], phi_m, tot["M"])
        tau = tau_sum / u_psi
        out.append(PairMeasures(
            key, u_psi, u_phi, tau, tau if sev is not None else 0.0,
            u_phi / users[key[0]], u_phi / users[key[1]],
            mean, math.sqrt(max(var, 0.0)), sev, phi_f, phi_m, rri))
    return out


PAIR_CSV_FIELDS = ("drug_i", "drug_j", "u_psi", "u_phi", "tau", "gamma_ij", "gamma_ji",
                   "mean_len", "sd_len", "rri_f", "severity")


def write_pair_csv(path, pairs: Iterable[PairMeasures], dp: int = 4) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PAIR_CSV_FIELDS)
        for p in pairs:
            w.writerow([p.pair[0], p.pair[1], p.u_psi, p.u_phi, f"{p.tau_pop:.{dp}f}",
                        f"{p.gamma_ij:.{dp}f}", f"{p.gamma_ji:.{dp}f}",
                        f"{p.mean_len:.{dp}f}", f"{p.sd_len:.{dp}f}",
                        _fmt(p.rri_f, dp), p.severity.value if p.severity else ""])


def read_pair_csv(path) -> list[PairMeasures]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            out.append(PairMeasures(
                (r["drug_i"], r["drug_j"]), int(r["u_psi"]), int(r["u_phi"]),
                float(r["tau"]), float(r["tau"]) if r["severity"] else 0.0,
                float(r["gamma_ij"]), float(r["gamma_ji"]), float(r["mean_len"]),
                float(r["sd_len"]), Severity.parse(r["severity"]) if r["severity"] else None,
                rri_f=RelativeRisk.parse(r["rri_f"]) if r["severity"] else None))
    return out


# ---- per drug -----------------------------------------------------------

@dataclass(frozen=True)
class DrugMeasures:
    drug: str
    pi: float
    u_count: int
    phi_sum: int
    psi_sum: int


def drug_pi(profiles: Iterable[PatientProfile]) -> list[DrugMeasures]:
    """Share of each drug's co-administrations (counted in patients) that are known DDIs."""
    users: dict[str, int] = defaultdict(int)
    psi: dict[str, int] = defaultdict(int)
    phi: dict[str, int] = defaultdict(int)
    for prof in profiles:
        for d in prof.per_drug:
            users[d] += 1
        for (a, b), s in prof.pair_stats.items():
            psi[a] += 1
            psi[b] += 1
            if s.phi:
                phi[a] += 1
                phi[b] += 1
    return [DrugMeasures(d, phi[d] / psi[d], users[d], phi[d], psi[d])
            for d in sorted(psi) if psi[d] > 0]


# ---- age ----------------------------------------------------------------

def age_table_from_counts(rows: Iterable[tuple], skip_empty: bool = False) -> RiskTable:
    """``rows`` are (group label, gender or "", u, u_nu2, u_psi, u_phi)."""
    table = RiskTable("age", ("group", "gender"), ("u", "u_nu2", "u_psi", "u_phi"),
                      ("rc", "ri"))
    for label, gender, u, u_nu2, u_psi, u_phi in rows:
        if (u_nu2 == 0 or u_psi == 0) and not skip_empty:
            raise EmptyStratum(f"age group {label} {gender} has no eligible patients")
        table.rows.append(RiskRow(
            (label, gender), {"u": u, "u_nu2": u_nu2, "u_psi": u_psi, "u_phi": u_phi},
            {"rc": _ratio(u_psi, u_nu2), "ri": _ratio(u_phi, u_psi)}))
    return table


def age_risks(profiles: Iterable[PatientProfile], patients: Mapping[str, PatientRecord],
              groups: Sequence[AgeGroup], by_gender: bool = False,
              skip_empty: bool = False) -> RiskTable:
    """RC and RI per age bracket, optionally split by gender."""
    genders = ("F", "M") if by_gender else ("",)
    counts = {(g.label, s): [0, 0, 0, 0] for g in groups for s in genders}
    for prof in profiles:
        try:
            rec = patients[prof.patient_id]
        except KeyError:
            raise MissingDemographic(f"no record for patient {prof.patient_id!r}") from None
        c = counts[(assign_age_group(rec.age_years, groups).label,
                    rec.gender if by_gender else "")]
        c[0] += 1
        c[1] += prof.nu >= 2
        c[2] += prof.psi_count > 0
        c[3] += prof.phi_count > 0
    rows = [(g.label, s, *counts[(g.label, s)]) for s in genders for g in groups]
    return age_table_from_counts(rows, skip_empty)


def age_x(groups: Sequence[AgeGroup], encoding: str = "index") -> np.ndarray:
    """x coordinates of age brackets for trend fits: ordinal index or midpoint age."""
    if encoding == "index":
        return np.arange(len(groups), dtype=float)
    if encoding == "midpoint":
        return np.array([g.midpoint for g in groups])
    raise ValueError(f"unknown age encoding {encoding!r}")


# ---- drug count ---------------------------------------------------------

def drugcount_table_from_counts(rows: Iterable[tuple], baseline: str = "2") -> RiskTable:
    """``rows`` are (nu label, u, u_psi, u_phi); RRC/RRI are relative to ``baseline``."""
    rows = list(rows)
    base = next((r for r in rows if r[0] == baseline), None)
    if base is None or base[1] == 0:
        raise EmptyBaseline(f"no patients with nu = {baseline}")
    _, u2, psi2, phi2 = base
    table = RiskTable("drugcount", ("nu",), ("u", "u_psi", "u_phi"), ("rrc", "rri"))
    for label, u, u_psi, u_phi in rows:
        vals = {"rrc": None, "rri": None}
        if label != "1" and u > 0:
            vals = {"rrc": RelativeRisk.of(u_psi, u, psi2, u2),
                    "rri": RelativeRisk.of(u_phi, u, phi2, u2)}
        table.rows.append(RiskRow((label,), {"u": u, "u_psi": u_psi, "u_phi": u_phi}, vals))
    return table


def drugcount_relative_risks(profiles: Iterable[PatientProfile], cap: int = 20) -> RiskTable:
    """RRC and RRI by number of distinct drugs, with nu = 2 as baseline.

    Patients with more than ``cap`` drugs share one ``>cap`` bucket.
    """
    counts: dict[str, list] = {}
    for prof in profiles:
        if prof.nu < 1:
            continue
        label = str(prof.nu) if prof.nu <= cap else f">{cap}"
        c = counts.setdefault(label, [0, 0, 0])
        c[0] += 1
        c[1] += prof.psi_count > 0
        c[2] += prof.phi_count > 0
    order = [str(n) for n in range(1, cap + 1)] + [f">{cap}"]
    rows = [(k, *counts[k]) for k in order if k in counts]
    return drugcount_table_from_counts(rows)


def _rebuild(table: RiskTable) -> RiskTable:
    rows = table.rows
    if table.kind == "gender":
        return gender_table_from_counts({r.stratum[0]: r.counts for r in rows})
    if table.kind == "severity":
        return severity_table_from_counts(
            [(r.stratum[0], r.counts["u_phi_m"], r.counts["u_phi_f"]) for r in rows],
            rows[0].counts["u_f"], rows[0].counts["u_m"])
    if table.kind == "age":
        return age_table_from_counts(
            [(*r.stratum, *(r.counts[c] for c in table.count_fields)) for r in rows], True)
    return drugcount_table_from_counts(
        [(r.stratum[0], *(r.counts[c] for c in table.count_fields)) for r in rows])


# ---- ranking and trends -------------------------------------------------

@dataclass(frozen=True)
class RankedItem:
    item: object
    ranks: tuple
    product: float
    position: int


def _get(item, key):
    return item[key] if isinstance(item, Mapping) else getattr(item, key)


def rank_product(items: Sequence, keys: Sequence[str] = ("tau_phi", "u_phi"),
                 label: Callable = lambda it: _get(it, "pair")) -> list[RankedItem]:
    """Order items by the product of their per-key ranks.

    Each key is ranked in descending order with tied values sharing their
    mean rank. Items with equal products share the lowest position
    (1, 2, 2, 4, ...) and are listed by ``label``.
    """
    items = list(items)
    if not items:
        return []
    rank_cols = [rankdata([-float(_get(it, k)) for it in items], method="average")
                 for k in keys]
    prods = np.prod(np.vstack(rank_cols), axis=0)
    positions = rankdata(prods, method="min").astype(int)
    out = [RankedItem(it, tuple(float(c[n]) for c in rank_cols), float(prods[n]),
                      int(positions[n])) for n, it in enumerate(items)]
    return sorted(out, key=lambda r: (r.product, label(r.item)))


@dataclass(frozen=True)
class TrendFit:
    degree: int
    coefficients: tuple  # increasing powers
    r_squared: float

    def predict(self, x) -> np.ndarray:
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), self.coefficients)


def fit_polynomial_trend(x, y, degree: int) -> TrendFit:
    """Ordinary least squares polynomial fit with R^2 = 1 - RSS/TSS."""
    if degree not in (1, 2, 3):
        raise ValueError("degree must be 1, 2 or 3")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d and of equal length")
    if len(x) < degree + 2:
        raise ValueError(f"need at least {degree + 2} points for degree {degree}")
    design = np.vander(x, degree + 1, increasing=True)
    if np.linalg.matrix_rank(design) < degree + 1:
        raise RankDeficient(f"design matrix for degree {degree} is rank deficient")
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    rss = float(np.sum((y - design @ coef) ** 2))
    tss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    return TrendFit(degree, tuple(float(c) for c in coef), r2)
