"""Seeded synthetic EHR generator.

Produces patients and dispensation intervals whose marginals loosely follow a
mid-sized city population: 58.5% female, an age pyramid taken from the bundled
age-stratified counts, polypharmacy growing with age and a Zipf-like drug
popularity. Output is a pure function of ``(seed, config)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import AdministrationInterval, InteractionCatalog, PatientRecord, Severity
from .errors import InvalidConfig

# patients per 5-year age bracket, 00-04 through 90+
DEFAULT_AGE_WEIGHTS = (
    8946, 6390, 5631, 8305, 10382, 9725, 9100, 8844, 9184, 10085,
    10650, 9236, 8179, 6315, 4412, 3398, 2129, 1174, 637,
)
EDUCATION_LEVELS = ("none", "primary", "secondary", "college")


@dataclass(frozen=True)
class SynthConfig:
    n_patients: int = 1000
    female_fraction: float = 0.585
    age_weights: tuple = DEFAULT_AGE_WEIGHTS
    drugs: tuple = ()  # empty: use n_drugs generic names
    n_drugs: int = 122
    popularity_exponent: float = 1.0
    mean_drugs: float = 3.0  # distinct drugs for a 45-year-old
    mean_dispensations: float = 1.8  # per drug
    mean_length: float = 30.0  # days
    horizon: int = 540  # days, 18 months
    same_drug_overlap: bool = False
    n_neighborhoods: int = 20
    education_missing: float = 0.54

    def drug_names(self) -> tuple:
        if self.drugs:
            return tuple(self.drugs)
        return tuple(f"D{i:03d}" for i in range(self.n_drugs))

    def validate(self):
        names = self.drug_names()
        if not names:
            raise InvalidConfig("config has zero drugs")
        if len(set(names)) != len(names):
            raise InvalidConfig("drug names must be unique")
        if self.n_patients < 0:
            raise InvalidConfig("n_patients must be >= 0")
        if not 0.0 <= self.female_fraction <= 1.0:
            raise InvalidConfig("female_fraction must lie in [0, 1]")
        w = np.asarray(self.age_weights, dtype=float)
        if w.size != 19 or (w < 0).any() or w.sum() <= 0:
            raise InvalidConfig("age_weights needs 19 non-negative weights with positive sum")
        for name in ("mean_drugs", "mean_dispensations", "mean_length"):
            if getattr(self, name) < 1.0:
                raise InvalidConfig(f"{name} must be >= 1")
        if self.horizon <= 0 or self.popularity_exponent < 0:
            raise InvalidConfig("horizon must be positive and exponent non-negative")
        if not 0.0 <= self.education_missing <= 1.0:
            raise InvalidConfig("education_missing must lie in [0, 1]")


@dataclass
class SyntheticData:
    patients: list[PatientRecord]
    intervals: list[AdministrationInterval]
    config: SynthConfig = field(default_factory=SynthConfig)


def _popularity(n: int, exponent: float, rng) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1) ** exponent
    w = w[rng.permutation(n)]
    return w / w.sum()


def _drug_intervals(rng, k: int, mean_len: float, horizon: int, overlap: bool):
    lengths = rng.geometric(1.0 / mean_len, size=k)
    if overlap:
        starts = rng.integers(0, horizon, size=k)
        return sorted(zip(starts.tolist(), (starts + lengths).tolist()))
    # back to back with geometric gaps, so same-drug intervals never share a day
    gaps = rng.geometric(1.0 / mean_len, size=k) - 1
    t = int(rng.integers(0, horizon))
    out = []
    for g, n in zip(gaps.tolist(), lengths.tolist()):
        t += g
        out.append((t, t + n))
        t += n
    return out


def generate_synthetic(seed: int, config: SynthConfig = SynthConfig()) -> SyntheticData:
    config.validate()
    rng = np.random.default_rng(seed)
    names = config.drug_names()
    pop = _popularity(len(names), config.popularity_exponent, rng)
    age_w = np.asarray(config.age_weights, dtype=float)
    age_w = age_w / age_w.sum()
    width = len(str(max(config.n_patients, 1)))

    patients, intervals = [], []
    for n in range(config.n_patients):
        pid = f"P{n:0{width}d}"
        gender = "F" if rng.random() < config.female_fraction else "M"
        bracket = int(rng.choice(19, p=age_w))
        age = 5 * bracket + int(rng.integers(0, 10 if bracket == 18 else 5))
        hood = f"N{int(rng.integers(config.n_neighborhoods)):02d}"
        edu = None
        if rng.random() >= config.education_missing:
            edu = EDUCATION_LEVELS[int(rng.integers(len(EDUCATION_LEVELS)))]
        patients.append(PatientRecord(pid, gender, age, hood, edu))

        lam = max(config.mean_drugs * (0.4 + age / 75.0) - 1.0, 0.0)
        nu = min(1 + int(rng.poisson(lam)), len(names))
        chosen = np.sort(rng.choice(len(names), size=nu, replace=False, p=pop))
        for d in chosen.tolist():
            k = 1 + int(rng.poisson(config.mean_dispensations - 1.0))
            for s, e in _drug_intervals(rng, k, config.mean_length, config.horizon,
                                        config.same_drug_overlap):
                intervals.append(AdministrationInterval(pid, names[d], s, e))
    return SyntheticData(patients, intervals, config)


def synthetic_catalog(drugs, n_pairs: int, seed: int,
                      severity_weights=(0.3, 0.5, 0.1, 0.1)) -> InteractionCatalog:
    """Random catalog over ``drugs`` with severities drawn Major/Moderate/Minor/NA."""
    drugs = sorted(drugs)
    n_possible = len(drugs) * (len(drugs) - 1) // 2
    if not 0 <= n_pairs <= n_possible:
        raise InvalidConfig(f"n_pairs must lie in [0, {n_possible}]")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(len(drugs), k=1)
    pick = np.sort(rng.choice(n_possible, size=n_pairs, replace=False))
    sev_p = np.asarray(severity_weights, dtype=float)
    sevs = rng.choice(4, size=n_pairs, p=sev_p / sev_p.sum())
    order = (Severity.MAJOR, Severity.MODERATE, Severity.MINOR, Severity.NOT_AVAILABLE)
    cat = InteractionCatalog()
    for p, s in zip(pick.tolist(), sevs.tolist()):
        cat.add(drugs[iu[p]], drugs[ju[p]], order[s])
    return cat
