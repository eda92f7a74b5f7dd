"""Per-patient interval algebra.

Lengths follow the summed convention: a drug's administration length is the
sum of its interval lengths, and a pair's co-administration length is the sum
of the clamped overlaps over every cross pair of intervals. When a patient has
overlapping intervals of the same drug these sums can double-count days; such
patients are flagged through ``PatientProfile.clamped_pairs`` whenever the
resulting tau would exceed 1.
"""

from __future__ import annotations

import json
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .data import AdministrationInterval, InteractionCatalog, Severity, canonical
from .errors import MixedKeys, SameDrug, ZeroDenominator

PairKey = tuple  # (drug_lo, drug_hi), always canonical


def pair_key(drug_a: str, drug_b: str) -> PairKey:
    if drug_a == drug_b:
        raise SameDrug(f"no pair key for a drug with itself: {drug_a!r}")
    return canonical(drug_a, drug_b)


@dataclass(frozen=True)
class PairStat:
    lambda_ij: int
    psi: bool
    phi: bool
    tau_u: float
    severity: Severity | None = None


@dataclass(frozen=True)
class DrugStat:
    alpha: int  # dispensation count
    lambda_i: int


@dataclass
class PatientProfile:
    patient_id: str
    nu: int = 0
    psi_count: int = 0
    phi_count: int = 0
    pair_stats: dict = field(default_factory=dict)
    per_drug: dict = field(default_factory=dict)
    clamped_pairs: list = field(default_factory=list)

    @property
    def drugs(self):
        return sorted(self.per_drug)

    def to_json(self) -> str:
        return json.dumps({
            "patient_id": self.patient_id,
            "nu": self.nu,
            "psi": self.psi_count,
            "phi": self.phi_count,
            "drugs": {d: [s.alpha, s.lambda_i] for d, s in sorted(self.per_drug.items())},
            "pairs": [[a, b, s.lambda_ij, int(s.phi), s.tau_u]
                      for (a, b), s in sorted(self.pair_stats.items())],
            "clamped": [list(p) for p in self.clamped_pairs],
        }, separators=(",", ":"))


def administration_length(intervals: Sequence[AdministrationInterval]) -> int:
    keys = {(iv.patient_id, iv.drug_id) for iv in intervals}
    if len(keys) > 1:
        raise MixedKeys(f"intervals span several patient/drug keys: {sorted(keys)[:3]}")
    return sum(iv.end_day - iv.start_day for iv in intervals)


def _bounds(intervals) -> tuple[np.ndarray, np.ndarray]:
    if len(intervals) and isinstance(intervals[0], AdministrationInterval):
        s = np.fromiter((iv.start_day for iv in intervals), np.int64, len(intervals))
        e = np.fromiter((iv.end_day for iv in intervals), np.int64, len(intervals))
        return s, e
    arr = np.asarray(intervals, dtype=np.int64).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def pairwise_overlap(intervals_i, intervals_j) -> int:
    """Sum of clamped overlaps over all cross pairs of two drugs' intervals.

    Accepts AdministrationInterval lists or (start, end) pairs.
    """
    if intervals_i and intervals_j and isinstance(intervals_i[0], AdministrationInterval):
        drugs_i = {iv.drug_id for iv in intervals_i}
        if drugs_i & {iv.drug_id for iv in intervals_j}:
            raise SameDrug(f"overlap requested between a drug and itself: {drugs_i}")
    si, ei = _bounds(intervals_i)
    sj, ej = _bounds(intervals_j)
    if not len(si) or not len(sj):
        return 0
    ov = np.minimum(ei[:, None], ej[None, :]) - np.maximum(si[:, None], sj[None, :])
    return int(np.clip(ov, 0, None).sum())


def tau_raw(lambda_ij: int, lambda_i: int, lambda_j: int) -> float:
    denom = lambda_i + lambda_j - lambda_ij
    if denom == 0:
        raise ZeroDenominator("lambda_i + lambda_j - lambda_ij == 0")
    return lambda_ij / denom


def tau_patient(lambda_ij: int, lambda_i: int, lambda_j: int) -> float:
    """Overlap length over union length for one patient, clamped to [0, 1]."""
    t = tau_raw(lambda_ij, lambda_i, lambda_j)
    return min(max(t, 0.0), 1.0)


def _sweep(intervals: list[AdministrationInterval]) -> dict[PairKey, int]:
    # sweep by start day; every active interval started no later than the
    # current one, so its overlap with it is min(end_a, end_b) - start_b
    order = sorted(intervals, key=lambda iv: (iv.start_day, iv.end_day, iv.drug_id))
    active: list[AdministrationInterval] = []
    overlap: dict[PairKey, int] = defaultdict(int)
    for cur in order:
        active = [a for a in active if a.end_day > cur.start_day]
        for a in active:
            if a.drug_id == cur.drug_id:
                continue
            days = min(a.end_day, cur.end_day) - cur.start_day
            if days > 0:
                overlap[canonical(a.drug_id, cur.drug_id)] += days
        if cur.end_day > cur.start_day:
            active.append(cur)
    return overlap


def build_profile(intervals: Iterable[AdministrationInterval],
                  catalog: InteractionCatalog, patient_id: str | None = None) -> PatientProfile:
    intervals = list(intervals)
    pids = {iv.patient_id for iv in intervals}
    if len(pids) > 1:
        raise MixedKeys(f"dispensations of several patients: {sorted(pids)[:3]}")
    pid = patient_id if patient_id is not None else (pids.pop() if pids else "")
    prof = PatientProfile(pid)
    if not intervals:
        return prof

    alpha: dict[str, int] = defaultdict(int)
    lam: dict[str, int] = defaultdict(int)
    for iv in intervals:
        alpha[iv.drug_id] += 1
        lam[iv.drug_id] += iv.end_day - iv.start_day
    prof.per_drug = {d: DrugStat(alpha[d], lam[d]) for d in sorted(alpha)}
    prof.nu = len(prof.per_drug)

    for key, lij in sorted(_sweep(intervals).items()):
        a, b = key
        raw = tau_raw(lij, lam[a], lam[b])
        if raw > 1.0 or raw < 0.0:
            prof.clamped_pairs.append(key)
        sev = catalog.lookup(a, b)
        stat = PairStat(lij, True, sev is not None, min(max(raw, 0.0), 1.0), sev)
        prof.pair_stats[key] = stat
        prof.psi_count += 1
        prof.phi_count += stat.phi
    return prof


def group_by_patient(intervals: Iterable[AdministrationInterval]) -> dict[str, list]:
    out: dict[str, list] = defaultdict(list)
    for iv in intervals:
        out[iv.patient_id].append(iv)
    return out


def profile_all(intervals: Iterable[AdministrationInterval], catalog: InteractionCatalog,
                threads: int = 1) -> list[PatientProfile]:
    """One profile per patient with at least one dispensation, ordered by id."""
    groups = group_by_patient(intervals)
    ids = sorted(groups)
    if threads > 1 and len(ids) > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(lambda pid: build_profile(groups[pid], catalog, pid), ids))
    return [build_profile(groups[pid], catalog, pid) for pid in ids]


def dump_profiles(path, profiles: Iterable[PatientProfile]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in profiles:
            fh.write(p.to_json())
            fh.write("\n")


def load_profiles(path) -> list[PatientProfile]:
    """Inverse of ``dump_profiles``; severities are not stored and come back as None."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            d = json.loads(line)
            prof = PatientProfile(d["patient_id"], d["nu"], d["psi"], d["phi"])
            prof.per_drug = {k: DrugStat(a, l) for k, (a, l) in d["drugs"].items()}
            prof.pair_stats = {(a, b): PairStat(lij, True, bool(phi), tau)
                               for a, b, lij, phi, tau in d["pairs"]}
            prof.clamped_pairs = [tuple(p) for p in d["clamped"]]
            out.append(prof)
    return out
