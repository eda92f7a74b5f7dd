"""Randomized drug-pair null model for the age-stratified interaction risk.

Each run reassigns every patient ``nu`` distinct drugs drawn uniformly from
the drugs seen in their stratum, then ``Psi`` distinct pairs drawn uniformly
from the ``C(nu, 2)`` pairs those drugs form, and checks the drawn pairs
against the catalog. The per-patient counts nu and Psi are kept exactly.

Randomness comes from a Philox counter-based generator with one substream per
run (keyed by the run index), so results do not depend on how runs are
scheduled across threads.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import comb
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import chi2

from .data import AgeGroup, InteractionCatalog, PatientRecord, assign_age_group, default_age_groups
from .errors import InsufficientPool, MissingDemographic, PairBudgetExceeded, TooFewSamples
from .overlap import PatientProfile


@dataclass(frozen=True)
class NullModelConfig:
    runs: int = 100
    seed: int = 0
    confidence: float = 0.95
    groups: tuple = tuple(default_age_groups())
    stratify_gender: bool = False
    sample_fraction: float = 1.0
    chi_min_expected: float = 5.0
    threads: int = 1

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must lie in (0, 1)")
        if not 0.0 < self.sample_fraction <= 1.0:
            raise ValueError("sample_fraction must lie in (0, 1]")


@dataclass
class Stratum:
    group: str
    gender: str
    pool: np.ndarray  # drug names
    adjacency: np.ndarray  # catalog membership over the pool, bool (k, k)
    nu: np.ndarray  # per patient with Psi >= 1
    psi: np.ndarray
    n_patients: int  # all patients in the stratum
    u_psi_obs: int
    u_phi_obs: int

    @property
    def ri_obs(self) -> float:
        return self.u_phi_obs / self.u_psi_obs if self.u_psi_obs else float("nan")


@dataclass
class NullRow:
    group: str
    gender: str
    ri_obs: float
    ri_star_mean: float
    ci_low: float
    ci_high: float
    u_phi_obs: int
    u_phi_star_mean: float
    u_psi: int


@dataclass
class ChiSquare:
    statistic: float
    dof: int
    p_value: float
    bins: list = field(default_factory=list)


@dataclass
class NullModelResult:
    rows: list[NullRow]
    chi_square: ChiSquare
    ri_star_runs: np.ndarray  # (runs, strata)
    u_phi_star_runs: np.ndarray

    def row(self, group: str, gender: str = "") -> NullRow:
        return next(r for r in self.rows if r.group == group and r.gender == gender)


def empirical_ci(samples, confidence: float = 0.95) -> tuple[float, float]:
    """Central interval from linear interpolation between order statistics.

    Order statistic k (1-based) sits at cumulative probability (k - 0.5)/n,
    so 100 samples 1..100 give (3.0, 98.0) at 95%.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise TooFewSamples("need at least 2 samples for an interval")
    tail = (1.0 - confidence) / 2.0
    lo, hi = np.quantile(x, [tail, 1.0 - tail], method="hazen")
    return float(lo), float(hi)


def prepare_strata(profiles: Sequence[PatientProfile], patients: Mapping[str, PatientRecord],
                   catalog: InteractionCatalog, groups: Sequence[AgeGroup],
                   stratify_gender: bool = False) -> list[Stratum]:
    genders = ("F", "M") if stratify_gender else ("",)
    members: dict[tuple, list[PatientProfile]] = {(g.label, s): [] for s in genders
                                                  for g in groups}
    for prof in profiles:
        rec = patients.get(prof.patient_id)
        if rec is None:
            raise MissingDemographic(f"no record for patient {prof.patient_id!r}")
        key = (assign_age_group(rec.age_years, groups).label,
               rec.gender if stratify_gender else "")
        members[key].append(prof)

    strata = []
    for s in genders:
        for g in groups:
            profs = members[(g.label, s)]
            pool = sorted({d for p in profs for d in p.per_drug})
            idx = {d: n for n, d in enumerate(pool)}
            adj = np.zeros((len(pool), len(pool)), dtype=bool)
            for a, b in catalog:
                if a in idx and b in idx:
                    adj[idx[a], idx[b]] = adj[idx[b], idx[a]] = True
            active = [p for p in profs if p.psi_count > 0]
            nu = np.array([p.nu for p in active], dtype=np.int64)
            psi = np.array([p.psi_count for p in active], dtype=np.int64)
            for p in active:
                if p.nu > len(pool):
                    raise InsufficientPool(f"{g.label}{s}: patient {p.patient_id} has "
                                           f"{p.nu} drugs, pool has {len(pool)}")
                if p.psi_count > comb(p.nu, 2):
                    raise PairBudgetExceeded(f"patient {p.patient_id}: Psi {p.psi_count} "
                                             f"> C({p.nu}, 2)")
            strata.append(Stratum(g.label, s, np.array(pool, dtype=object), adj, nu, psi,
                                  len(profs), len(active),
                                  sum(p.phi_count > 0 for p in active)))
    return strata


_PAIR_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _pairs(nu: int):
    if nu not in _PAIR_CACHE:
        _PAIR_CACHE[nu] = np.triu_indices(nu, k=1)
    return _PAIR_CACHE[nu]


def draw_stratum(stratum: Stratum, rng: np.random.Generator,
                 sample_fraction: float = 1.0) -> int:
    """One null draw for a stratum: number of patients with at least one DDI."""
    n = len(stratum.nu)
    if n == 0 or stratum.adjacency.size == 0:
        return 0
    if sample_fraction < 1.0:
        keep = np.sort(rng.permutation(n)[:int(round(sample_fraction * n))])
        nu, psi = stratum.nu[keep], stratum.psi[keep]
    else:
        nu, psi = stratum.nu, stratum.psi
    k = stratum.adjacency.shape[0]
    hits = 0
    for v in np.unique(nu):
        sel = nu == v
        b = int(sel.sum())
        # a uniform v-subset is the set of the v smallest iid uniform keys
        keys = rng.random((b, k))
        drugs = keys.argpartition(v - 1, axis=1)[:, :v] if v < k else keys.argsort(axis=1)
        iu, ju = _pairs(int(v))
        pkeys = rng.random((b, len(iu)))
        cut = np.sort(pkeys, axis=1)[np.arange(b), psi[sel] - 1]
        chosen = pkeys <= cut[:, None]
        known = stratum.adjacency[drugs[:, iu], drugs[:, ju]]
        hits += int(np.any(chosen & known, axis=1).sum())
    return hits


def _run_rng(seed: int, run: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(run,))))


def _one_run(strata, seed, run, fraction) -> np.ndarray:
    rng = _run_rng(seed, run)
    return np.array([draw_stratum(s, rng, fraction) for s in strata], dtype=np.int64)


def chi_square(observed, expected, min_expected: float = 5.0) -> ChiSquare:
    """Pearson chi-square with adjacent bins merged until each expects >= min_expected."""
    bins, o_acc, e_acc, members, cur = [], 0.0, 0.0, [], []
    for n, (o, e) in enumerate(zip(observed, expected)):
        o_acc += o
        e_acc += e
        cur.append(n)
        if e_acc >= min_expected:
            bins.append((o_acc, e_acc))
            members.append(cur)
            o_acc, e_acc, cur = 0.0, 0.0, []
    if cur:
        if bins:
            o, e = bins.pop()
            bins.append((o + o_acc, e + e_acc))
            members[-1].extend(cur)
        else:
            bins.append((o_acc, e_acc))
            members.append(cur)
    stat = sum((o - e) ** 2 / e for o, e in bins if e > 0)
    dof = len(bins) - 1
    p = float(chi2.sf(stat, dof)) if dof > 0 else float("nan")
    return ChiSquare(float(stat), dof, p, members)


def run_null_model(profiles: Sequence[PatientProfile], patients: Mapping[str, PatientRecord],
                   catalog: InteractionCatalog, config: NullModelConfig = NullModelConfig(),
                   strata: list[Stratum] | None = None) -> NullModelResult:
    if strata is None:
        strata = prepare_strata(profiles, patients, catalog, config.groups,
                                config.stratify_gender)
    args = [(strata, config.seed, r, config.sample_fraction) for r in range(config.runs)]
    if config.threads > 1:
        with ThreadPoolExecutor(config.threads) as pool:
            runs = list(pool.map(lambda a: _one_run(*a), args))
    else:
        runs = [_one_run(*a) for a in args]
    u_star = np.vstack(runs) if runs else np.zeros((0, len(strata)), dtype=np.int64)

    # RI* per run; the denominator is the (sampled) number of co-administering patients
    denom = np.array([round(config.sample_fraction * len(s.nu)) for s in strata], dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        ri_star = u_star / denom[None, :]

    rows = []
    for n, s in enumerate(strata):
        col = ri_star[:, n]
        if denom[n] == 0:
            lo = hi = mean = float("nan")
        else:
            mean = float(col.mean())
            lo, hi = empirical_ci(col, config.confidence) if len(col) > 1 else (mean, mean)
        rows.append(NullRow(s.group, s.gender, s.ri_obs, mean, lo, hi, s.u_phi_obs,
                            float(u_star[:, n].mean() * len(s.nu) / max(denom[n], 1.0)),
                            s.u_psi_obs))
    obs = [r.u_phi_obs for r in rows if r.u_psi]
    exp = [r.u_phi_star_mean for r in rows if r.u_psi]
    return NullModelResult(rows, chi_square(obs, exp, config.chi_min_expected), ri_star, u_star)


def simulate_observed(strata: list[Stratum], seed: int) -> list[Stratum]:
    """Copies of ``strata`` whose observed interaction counts come from one null draw."""
    rng = _run_rng(seed, 2**32 - 1)
    out = []
    for s in strata:
        hits = draw_stratum(s, rng)
        out.append(Stratum(s.group, s.gender, s.pool, s.adjacency, s.nu, s.psi,
                           s.n_patients, s.u_psi_obs, hits))
    return out


NULL_CSV_FIELDS = ("group", "gender", "RI_obs", "RI_star_mean", "ci_low", "ci_high",
                   "U_phi_obs", "U_phi_star_mean")


def write_null_csv(path, result: NullModelResult, dp: int = 4) -> None:
    def f(v):
        return "" if v != v else f"{v:.{dp}f}"

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(NULL_CSV_FIELDS)
        for r in result.rows:
            w.writerow([r.group, r.gender, f(r.ri_obs), f(r.ri_star_mean), f(r.ci_low),
                        f(r.ci_high), r.u_phi_obs, f(r.u_phi_star_mean)])


def write_chi_json(path, result: NullModelResult) -> None:
    c = result.chi_square
    doc = {"statistic": round(c.statistic, 6), "dof": c.dof,
           "p_value": None if c.p_value != c.p_value else float(f"{c.p_value:.6g}"),
           "bins": c.bins}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
