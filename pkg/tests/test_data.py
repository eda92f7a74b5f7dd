import pytest

from ddirisk.data import (AdministrationInterval, DispensationSchema, InteractionCatalog,
                          PatientRecord, Severity, assign_age_group, check_partition,
                          default_age_groups, ingest_catalog, ingest_dispensations,
                          ingest_patients, write_catalog, write_dispensations, write_patients)
from ddirisk.errors import (DuplicateConflictingPair, MalformedRow, NegativeDuration, SelfPair,
                            UnknownColumn, UnknownSeverityLabel)


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


@pytest.mark.parametrize("label,expected", [
    ("Major", Severity.MAJOR), ("moderate", Severity.MODERATE), (" MINOR ", Severity.MINOR),
    ("None", Severity.NOT_AVAILABLE), ("*", Severity.NOT_AVAILABLE), ("", Severity.NOT_AVAILABLE),
])
def test_severity_labels(label, expected):
    assert Severity.parse(label) is expected


def test_unknown_severity():
    with pytest.raises(UnknownSeverityLabel):
        Severity.parse("catastrophic")


def test_catalog_symmetric_lookup():
    cat = InteractionCatalog()
    cat.add("Warfarin", "ASA", Severity.MAJOR)
    assert cat.lookup("ASA", "Warfarin") is Severity.MAJOR
    assert cat.lookup("Warfarin", "ASA") is Severity.MAJOR
    assert ("Warfarin", "ASA") in cat
    assert cat.lookup("ASA", "Ibuprofen") is None
    assert list(cat) == [("ASA", "Warfarin")]


def test_catalog_duplicates():
    cat = InteractionCatalog()
    cat.add("A", "B", Severity.MINOR)
    cat.add("B", "A", Severity.MINOR)  # same entry restated is fine
    assert len(cat) == 1
    with pytest.raises(DuplicateConflictingPair):
        cat.add("B", "A", Severity.MAJOR)
    with pytest.raises(SelfPair):
        cat.add("A", "A", Severity.MAJOR)


def test_catalog_round_trip(tmp_path):
    cat = InteractionCatalog()
    cat.add("A", "B", Severity.MAJOR, "x")
    cat.add("C", "B", Severity.NOT_AVAILABLE)
    write_catalog(tmp_path / "c.csv", cat)
    back = ingest_catalog(tmp_path / "c.csv")
    assert list(back.items()) == list(cat.items())


def test_interval_validation():
    assert AdministrationInterval("p", "d", 3, 3).length == 0
    with pytest.raises(NegativeDuration):
        AdministrationInterval("p", "d", 5, 4)


def test_patient_validation():
    with pytest.raises(ValueError):
        PatientRecord("p", "X", 30)
    with pytest.raises(ValueError):
        PatientRecord("p", "F", 121)


def test_age_groups_partition():
    groups = default_age_groups()
    check_partition(groups)
    assert len(groups) == 19
    assert assign_age_group(0, groups).label == "00-04"
    assert assign_age_group(64, groups).label == "60-64"
    assert assign_age_group(120, groups).label == "90+"
    assert groups[-1].midpoint == 92.0
    with pytest.raises(ValueError):
        check_partition(groups[1:])


def test_ingest_strict_and_lenient(tmp_path):
    p = write(tmp_path / "d.csv", "patient_id,drug_id,start_day,end_day\n"
              "P1,A,0,10\nP1,B,5,x\nP2,A,9,3\nP2,B,1,4\n")
    with pytest.raises(MalformedRow):
        ingest_dispensations(p)
    res = ingest_dispensations(p, strict=False)
    assert res.rows == 4
    assert len(res.intervals) == 2 and len(res.errors) == 2
    assert isinstance(res.errors[1], NegativeDuration)
    assert res.rows == len(res.intervals) + len(res.errors)
    assert (res.summary.patient_count, res.summary.dispensation_count) == (2, 2)


def test_ingest_dates_and_durations(tmp_path):
    import datetime as dt
    p = write(tmp_path / "d.csv", "pid,med,dispensed,days\nP1,A,2015-01-03,30\n")
    schema = DispensationSchema("pid", "med", "dispensed", None, "days", dt.date(2015, 1, 1))
    [iv] = ingest_dispensations(p, schema).intervals
    assert (iv.start_day, iv.end_day) == (2, 32)


def test_ingest_unknown_column(tmp_path):
    p = write(tmp_path / "d.csv", "patient,drug_id,start_day,end_day\n")
    with pytest.raises(UnknownColumn):
        ingest_dispensations(p)


def test_write_read_round_trip(tmp_path):
    ivs = [AdministrationInterval("P1", "A", 0, 5), AdministrationInterval("P1", "B", 2, 9)]
    pats = [PatientRecord("P1", "F", 44, "Centro", None, None)]
    write_dispensations(tmp_path / "d.csv", ivs)
    write_patients(tmp_path / "p.csv", pats)
    assert ingest_dispensations(tmp_path / "d.csv").intervals == ivs
    assert ingest_patients(tmp_path / "p.csv") == pats
