"""Projected hospitalization cost of major DDIs.

Money is held as integer minor units (cents/centavos) and rates as Decimals.
Money rounds half-up to the cent and displayed totals to whole units.
Patient counts are truncated by default, which is what the reference cost
tables do (5224 x 20% = 1044.8 is listed as 1044); ``rounding="half_up"``
is available.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from decimal import ROUND_DOWN, ROUND_HALF_UP, Decimal
from typing import Mapping, Sequence

from .errors import InvalidLevel, MissingRate, ZeroPopulation

D = Decimal


ROUNDING = {"floor": ROUND_DOWN, "half_up": ROUND_HALF_UP}


def _half_up(x: Decimal, places: str = "1") -> Decimal:
    return x.quantize(D(places), rounding=ROUND_HALF_UP)


def _count(x: Decimal, rounding: str) -> int:
    if rounding not in ROUNDING:
        raise ValueError(f"rounding must be one of {sorted(ROUNDING)}")
    return int(x.quantize(D(1), rounding=ROUNDING[rounding]))


def to_cents(amount) -> int:
    return int(_half_up(D(str(amount)) * 100))


def from_cents(cents: int) -> Decimal:
    return D(cents) / 100


@dataclass(frozen=True)
class CostParams:
    u_major: int  # patients dispensed at least one major DDI
    hospitalizations_total: int  # urgent, same period
    avg_cost: Decimal  # per hospitalization, local currency
    population: int
    currency: str = "BRL"
    period_months: int = 18
    hospitalizations_over64: int | None = None
    reference_adr_cost: Decimal | None = None  # per ADR hospitalization
    reference_currency: str = "CAD"
    fx_rates: Mapping[str, Decimal] = field(default_factory=dict)  # "CAD->USD" -> rate

    def __post_init__(self):
        for name in ("u_major", "hospitalizations_total", "population", "period_months"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if D(self.avg_cost) < 0:
            raise ValueError("avg_cost must be >= 0")


@dataclass(frozen=True)
class CostRow:
    p_h: Decimal
    patients: int
    pct_hosp: Decimal  # percent of urgent hospitalizations
    costs: dict  # currency -> cents over the period
    costs_12mo: dict  # currency -> cents over 12 months
    per_capita_12mo: dict  # currency -> Decimal per person per year


def convert(cents: int, frm: str, to: str, fx_rates: Mapping[str, Decimal]) -> int:
    if frm == to:
        return cents
    key = f"{frm}->{to}"
    if key not in fx_rates:
        raise MissingRate(f"no exchange rate {key}")
    return int(_half_up(D(cents) * D(str(fx_rates[key]))))


def per_capita(cents: int, population: int) -> Decimal:
    """Currency units per person (not rounded)."""
    if population <= 0:
        raise ZeroPopulation("population must be positive")
    return from_cents(cents) / D(population)


def patients_at(u_major: int, p_h, rounding: str = "floor") -> int:
    p = D(str(p_h))
    if not D(0) <= p <= D(1):
        raise InvalidLevel(f"p_h must lie in [0, 1], got {p_h}")
    return _count(D(u_major) * p, rounding)


def _row(params: CostParams, p_h: Decimal, patients: int, pct: Decimal) -> CostRow:
    costs = {params.currency: patients * to_cents(params.avg_cost)}
    if params.reference_adr_cost is not None:
        ref = patients * to_cents(params.reference_adr_cost)
        costs[params.reference_currency] = ref
        for key in sorted(params.fx_rates):
            frm, to = key.split("->")
            if frm == params.reference_currency and to not in costs:
                costs[to] = convert(ref, frm, to, params.fx_rates)
    annual = {c: int(_half_up(D(v) * 12 / params.period_months)) for c, v in costs.items()}
    pc = {c: per_capita(v, params.population) for c, v in annual.items()} \
        if params.population > 0 else {}
    return CostRow(p_h, patients, pct, costs, annual, pc)


def _pct(patients: int, total: int) -> Decimal:
    return D(patients) * 100 / D(total) if total else D(0)


def project_costs(params: CostParams, p_h_levels: Sequence,
                  rounding: str = "floor") -> list[CostRow]:
    """One row per hospitalization probability among major-DDI patients."""
    rows = []
    for level in p_h_levels:
        p = D(str(level))
        n = patients_at(params.u_major, p, rounding)
        rows.append(_row(params, p, n, _pct(n, params.hospitalizations_total)))
    return rows


def project_from_share(params: CostParams, share, over64: bool = True,
                       rounding: str = "half_up") -> CostRow:
    """Row for an assumed share of (over-64) urgent hospitalizations caused by DDIs."""
    basis = params.hospitalizations_over64 if over64 else params.hospitalizations_total
    if basis is None:
        raise ValueError("params lack the over-64 hospitalization count")
    n = _count(D(basis) * D(str(share)), rounding)
    p_h = D(n) / D(params.u_major) if params.u_major else D(0)
    return _row(params, p_h, n, D(str(share)) * 100)


def extrapolate(city_rows: Sequence[CostRow], region: CostParams,
                rounding: str = "floor") -> list[CostRow]:
    """Carry city rows to a larger region through their share of urgent hospitalizations.

    The share is taken as displayed (percent, 2 dp) and applied to the
    region's urgent hospitalization count.
    """
    rows = []
    for r in city_rows:
        pct = _half_up(r.pct_hosp, "0.01")
        n = _count(pct * D(region.hospitalizations_total) / 100, rounding)
        rows.append(_row(region, r.p_h, n, pct))
    return rows


def write_cost_csv(path, rows: Sequence[CostRow], currencies: Sequence[str],
                   period_months: int = 18) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        head = ["p_h", "patients", "pct_hosp"]
        for c in currencies:
            head += [f"cost_{c}_{period_months}mo", f"cost_{c}_12mo"]
        head += [f"per_capita_{c}_12mo" for c in currencies]
        w.writerow(head)
        for r in rows:
            line = [f"{_half_up(r.p_h * 100, '0.01')}%", r.patients,
                    f"{_half_up(r.pct_hosp, '0.01')}%"]
            for c in currencies:
                line += [_half_up(from_cents(r.costs[c])), _half_up(from_cents(r.costs_12mo[c]))]
            line += [_half_up(r.per_capita_12mo[c], "0.01") for c in currencies]
            w.writerow(line)


def params_from_json(doc: Mapping, region: str = "blumenau",
                     u_major: int | None = None) -> CostParams:
    reg = doc["regions"][region]
    ref = doc.get("reference_adr_cost")
    return CostParams(
        u_major=int(u_major if u_major is not None else doc["u_major"]),
        hospitalizations_total=int(reg["urgent_hospitalizations"]),
        avg_cost=D(str(reg["avg_cost"])),
        population=int(reg["population"]),
        currency=reg.get("currency", "BRL"),
        period_months=int(doc.get("period_months", 18)),
        hospitalizations_over64=reg.get("urgent_hospitalizations_over64"),
        reference_adr_cost=D(str(ref["amount"])) if ref else None,
        reference_currency=ref["currency"] if ref else "CAD",
        fx_rates={k: D(str(v)) for k, v in doc.get("fx_rates", {}).items()},
    )
