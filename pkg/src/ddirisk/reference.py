"""Loaders for the bundled reference tables.

The tables hold published aggregate counts (no patient-level data) so the
measures, network and cost code can be replayed against known values.
"""

from __future__ import annotations

import csv
import json
import math
from importlib import resources

from .data import InteractionCatalog, Severity
from .measures import DrugMeasures, PairMeasures, RelativeRisk

_PKG = "ddirisk"


def path(name: str):
    return resources.files(_PKG).joinpath("fixtures").joinpath(name)


def _rows(name: str) -> list[dict]:
    with path(name).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def catalog() -> InteractionCatalog:
    cat = InteractionCatalog()
    for r in _rows("ddi_pairs.csv"):
        cat.add(r["drug_i"], r["drug_j"], Severity.parse(r["severity"]), r["description"])
    return cat


def pair_table() -> list[PairMeasures]:
    """The 181 observed DDI pairs with their published statistics.

    Only interacting-patient counts are published, so ``u_psi`` is set to
    ``u_phi``. ``gamma`` fills both directions.
    """
    out = []
    for r in _rows("ddi_pairs.csv"):
        tau = float(r["tau"])
        g = float(r["gamma"])
        out.append(PairMeasures(
            tuple(sorted((r["drug_i"], r["drug_j"]))), int(r["u_phi"]), int(r["u_phi"]),
            tau, tau, g, g, float(r["mean_len"]), float(r["sd_len"]),
            Severity.parse(r["severity"]), rri_f=RelativeRisk.parse(r["rri_f"])))
    return out


def pair_rows() -> list[dict]:
    return _rows("ddi_pairs.csv")


def drug_nodes() -> list[dict]:
    return _rows("drug_nodes.csv")


def drug_measures() -> list[DrugMeasures]:
    return [DrugMeasures(r["drug"], float(r["pi"]), 0, 0, 0) for r in drug_nodes()]


def drug_classes() -> dict[str, str]:
    return {r["drug"]: r["drug_class"] for r in drug_nodes()}


def gender_counts() -> dict[str, dict[str, int]]:
    return {r["gender"]: {k: int(r[k]) for k in ("u", "u_nu2", "u_psi", "u_phi")}
            for r in _rows("gender_risk.csv")}


def gender_rows() -> list[dict]:
    return _rows("gender_risk.csv")


def severity_rows() -> list[dict]:
    return _rows("severity_gender.csv")


def age_rows(gender: str = "") -> list[dict]:
    return [r for r in _rows("age_risk.csv") if r["gender"] == gender]


def drugcount_rows() -> list[dict]:
    return _rows("drugcount_risk.csv")


def cost_rows(region: str = "city") -> list[dict]:
    return _rows(f"cost_{region}.csv")


def cost_params() -> dict:
    with path("cost_params.json").open(encoding="utf-8") as fh:
        return json.load(fh)


def parse_float(text: str) -> float:
    text = (text or "").strip()
    if not text:
        return math.nan
    return math.inf if text.lower() == "inf" else float(text)
