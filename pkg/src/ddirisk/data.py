"""Domain types and CSV ingestion for dispensations, patients and the DDI catalog.

All dates become integer day offsets here. Everything downstream works in
whole days on half-open intervals ``[start_day, end_day)``.
"""

from __future__ import annotations

import csv
import datetime as _dt
import enum
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

from .errors import (
    DuplicateConflictingPair,
    MalformedRow,
    NegativeDuration,
    SelfPair,
    UnknownColumn,
    UnknownSeverityLabel,
)

GENDERS = ("F", "M")
MAX_AGE = 120


class Severity(enum.Enum):
    MAJOR = "Major"
    MODERATE = "Moderate"
    MINOR = "Minor"
    NOT_AVAILABLE = "NotAvailable"

    @classmethod
    def parse(cls, label: str) -> "Severity":
        key = (label or "").strip().lower()
        try:
            return _SEVERITY_LABELS[key]
        except KeyError:
            raise UnknownSeverityLabel(f"unknown severity label {label!r}") from None


# Drugs.com prints "None" for pairs it lists without a class, and the source
# tables use "*" for pairs it does not list at all. Both carry no class.
_SEVERITY_LABELS = {
    "major": Severity.MAJOR,
    "moderate": Severity.MODERATE,
    "minor": Severity.MINOR,
    "notavailable": Severity.NOT_AVAILABLE,
    "not available": Severity.NOT_AVAILABLE,
    "n/a": Severity.NOT_AVAILABLE,
    "na": Severity.NOT_AVAILABLE,
    "none": Severity.NOT_AVAILABLE,
    "*": Severity.NOT_AVAILABLE,
    "": Severity.NOT_AVAILABLE,
}


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    gender: str
    age_years: int
    neighborhood: str | None = None
    education: str | None = None
    marital_status: str | None = None

    def __post_init__(self):
        if self.gender not in GENDERS:
            raise ValueError(f"gender must be one of {GENDERS}, got {self.gender!r}")
        if not 0 <= self.age_years <= MAX_AGE:
            raise ValueError(f"age_years out of range: {self.age_years}")


@dataclass(frozen=True, order=True)
class AdministrationInterval:
    patient_id: str
    drug_id: str
    start_day: int
    end_day: int

    def __post_init__(self):
        if self.end_day < self.start_day:
            raise NegativeDuration(-1, f"end {self.end_day} < start {self.start_day}")

    @property
    def length(self) -> int:
        return self.end_day - self.start_day


@dataclass(frozen=True)
class CatalogEntry:
    severity: Severity
    description: str = ""


class InteractionCatalog:
    """Symmetric map of known interacting drug pairs.

    Pairs are stored once under a canonical (lo, hi) key, so lookups are
    order-insensitive by construction.
    """

    def __init__(self, entries: Mapping[tuple[str, str], CatalogEntry] | None = None):
        self._entries: dict[tuple[str, str], CatalogEntry] = {}
        for (a, b), entry in (entries or {}).items():
            self.add(a, b, entry.severity, entry.description)

    def add(self, drug_a: str, drug_b: str, severity: Severity, description: str = ""):
        if drug_a == drug_b:
            raise SelfPair(f"self-pair not allowed: {drug_a!r}")
        key = canonical(drug_a, drug_b)
        prev = self._entries.get(key)
        if prev is not None and prev.severity != severity:
            raise DuplicateConflictingPair(
                f"{key}: {prev.severity.value} vs {severity.value}")
        if prev is None:
            self._entries[key] = CatalogEntry(severity, description)

    def lookup(self, drug_a: str, drug_b: str) -> Severity | None:
        entry = self._entries.get(canonical(drug_a, drug_b))
        return entry.severity if entry else None

    def entry(self, drug_a: str, drug_b: str) -> CatalogEntry | None:
        return self._entries.get(canonical(drug_a, drug_b))

    def __contains__(self, pair) -> bool:
        a, b = pair
        return a != b and canonical(a, b) in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[tuple[str, str]]:
        return iter(sorted(self._entries))

    def items(self):
        return sorted(self._entries.items())

    @property
    def drugs(self) -> frozenset[str]:
        return frozenset(d for pair in self._entries for d in pair)


def canonical(drug_a: str, drug_b: str) -> tuple[str, str]:
    return (drug_a, drug_b) if drug_a < drug_b else (drug_b, drug_a)


@dataclass(frozen=True)
class AgeGroup:
    lower: int
    upper: int | None  # inclusive; None means open-ended
    label: str

    def contains(self, age: int) -> bool:
        return age >= self.lower and (self.upper is None or age <= self.upper)

    @property
    def midpoint(self) -> float:
        # open-ended bracket gets the same width as a regular 5-year bin
        upper = self.upper if self.upper is not None else self.lower + 4
        return (self.lower + upper) / 2


def default_age_groups(width: int = 5, last: int = 90) -> list[AgeGroup]:
    groups = [AgeGroup(lo, lo + width - 1, f"{lo:02d}-{lo + width - 1:02d}")
              for lo in range(0, last, width)]
    groups.append(AgeGroup(last, None, f"{last}+"))
    return groups


def check_partition(groups: list[AgeGroup]) -> None:
    if not groups or groups[0].lower != 0:
        raise ValueError("age groups must start at 0")
    for a, b in zip(groups, groups[1:]):
        if a.upper is None or b.lower != a.upper + 1:
            raise ValueError(f"age groups {a.label} and {b.label} do not abut")
    if groups[-1].upper is not None:
        raise ValueError("last age group must be open-ended")


def assign_age_group(age: int, groups: list[AgeGroup]) -> AgeGroup:
    for g in groups:
        if g.contains(age):
            return g
    raise ValueError(f"age {age} not covered by age groups")


@dataclass(frozen=True)
class DatasetSummary:
    patient_count: int
    dispensation_count: int
    distinct_drug_count: int
    population: int | None = None

    def __post_init__(self):
        if self.population is not None and self.patient_count > self.population:
            raise ValueError("patient_count exceeds population")


def summarize(intervals: Iterable[AdministrationInterval], population: int | None = None):
    patients, drugs, n = set(), set(), 0
    for iv in intervals:
        patients.add(iv.patient_id)
        drugs.add(iv.drug_id)
        n += 1
    return DatasetSummary(len(patients), n, len(drugs), population)


@dataclass(frozen=True)
class DispensationSchema:
    """Column names in a dispensation CSV.

    Exactly one of ``end`` or ``duration`` is used. When ``epoch`` is set,
    start/end values are ISO dates and become day offsets from it.
    """
    patient: str = "patient_id"
    drug: str = "drug_id"
    start: str = "start_day"
    end: str | None = "end_day"
    duration: str | None = None
    epoch: _dt.date | None = None


@dataclass
class IngestResult:
    intervals: list[AdministrationInterval]
    summary: DatasetSummary
    errors: list[MalformedRow] = field(default_factory=list)
    rows: int = 0


def _day(value: str, epoch: _dt.date | None) -> int:
    value = value.strip()
    if epoch is None:
        return int(value)
    return (_dt.date.fromisoformat(value) - epoch).days


def ingest_dispensations(path, schema: DispensationSchema = DispensationSchema(),
                         strict: bool = True, population: int | None = None) -> IngestResult:
    """Read a dispensation CSV.

    With ``strict`` the first bad row raises. Otherwise bad rows are
    collected in ``errors`` and ``rows == len(intervals) + len(errors)``.
    """
    use_duration = schema.duration is not None
    intervals: list[AdministrationInterval] = []
    errors: list[MalformedRow] = []
    rows = 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        needed = [schema.patient, schema.drug, schema.start,
                  schema.duration if use_duration else schema.end]
        missing = [c for c in needed if c is None or c not in header]
        if missing:
            raise UnknownColumn(f"columns not found in {path}: {missing}")
        for idx, row in enumerate(reader):
            rows += 1
            try:
                intervals.append(_parse_row(idx, row, schema, use_duration))
            except MalformedRow as exc:
                if strict:
                    raise
                errors.append(exc)
    return IngestResult(intervals, summarize(intervals, population), errors, rows)


def _parse_row(idx, row, schema, use_duration) -> AdministrationInterval:
    pid = (row.get(schema.patient) or "").strip()
    drug = (row.get(schema.drug) or "").strip()
    if not pid or not drug:
        raise MalformedRow(idx, "empty patient or drug")
    try:
        start = _day(row[schema.start], schema.epoch)
        if use_duration:
            end = start + int(row[schema.duration])
        else:
            end = _day(row[schema.end], schema.epoch)
    except (ValueError, TypeError, AttributeError) as exc:
        raise MalformedRow(idx, f"bad day value ({exc})") from None
    if end < start:
        raise NegativeDuration(idx, f"end {end} < start {start}")
    return AdministrationInterval(pid, drug, start, end)


def ingest_patients(path) -> list[PatientRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for col in ("patient_id", "gender", "age_years"):
            if col not in (reader.fieldnames or []):
                raise UnknownColumn(f"patients file lacks column {col!r}")
        for idx, row in enumerate(reader):
            try:
                out.append(PatientRecord(
                    row["patient_id"].strip(), row["gender"].strip().upper(),
                    int(row["age_years"]),
                    row.get("neighborhood") or None,
                    row.get("education") or None,
                    row.get("marital_status") or None,
                ))
            except (ValueError, TypeError) as exc:
                raise MalformedRow(idx, str(exc)) from None
    dup = [k for k, c in Counter(p.patient_id for p in out).items() if c > 1]
    if dup:
        raise MalformedRow(-1, f"duplicate patient ids: {dup[:5]}")
    return out


def ingest_catalog(path) -> InteractionCatalog:
    cat = InteractionCatalog()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for col in ("drug_i", "drug_j", "severity"):
            if col not in (reader.fieldnames or []):
                raise UnknownColumn(f"catalog lacks column {col!r}")
        for row in reader:
            cat.add(row["drug_i"].strip(), row["drug_j"].strip(),
                    Severity.parse(row["severity"]), (row.get("description") or "").strip())
    return cat


def write_dispensations(path, intervals: Iterable[AdministrationInterval]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient_id", "drug_id", "start_day", "end_day"])
        for iv in intervals:
            w.writerow([iv.patient_id, iv.drug_id, iv.start_day, iv.end_day])


def write_patients(path, patients: Iterable[PatientRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient_id", "gender", "age_years", "neighborhood", "education",
                    "marital_status"])
        for p in patients:
            w.writerow([p.patient_id, p.gender, p.age_years, p.neighborhood or "",
                        p.education or "", p.marital_status or ""])


def write_catalog(path, catalog: InteractionCatalog) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["drug_i", "drug_j", "severity", "description"])
        for (a, b), e in catalog.items():
            w.writerow([a, b, e.severity.value, e.description])


def patients_by_id(patients: Iterable[PatientRecord]) -> dict[str, PatientRecord]:
    return {p.patient_id: p for p in patients}
