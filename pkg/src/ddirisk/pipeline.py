"""File-based pipeline stages and the run manifest.

Every stage reads plain files, writes plain files under ``<out>/<stage>/`` and
records sha256 hashes of what it read and wrote in ``<out>/manifest.json``.
No timestamps or absolute paths are written, so identical inputs, config and
seed give byte-identical output directories.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import logging
import warnings
from dataclasses import dataclass, fields, replace
from pathlib import Path

from . import __version__, reference
from .classifier import LogRegParams, build_features, cross_validate, train_logreg
from .classifier import write_reports_csv, write_reports_json, write_weights_csv
from .cost import extrapolate, params_from_json, project_costs, project_from_share, write_cost_csv
from .data import (DispensationSchema, Severity, default_age_groups, ingest_catalog,
                   ingest_dispensations, ingest_patients, patients_by_id, write_catalog,
                   write_dispensations, write_patients)
from .errors import ConvergenceWarning, InvalidConfig, MissingUpstreamArtifact, StageError
from .measures import (DrugMeasures, age_risks, age_x, drug_pi, drugcount_relative_risks,
                       fit_polynomial_trend, gender_relative_risks, pair_measures, rank_product, read_pair_csv,
                       severity_relative_risks, write_pair_csv)
from .network import build_graph, gender_subgraph, write_edge_csv, write_graphml, write_node_csv
from .nullmodel import NullModelConfig, run_null_model, write_chi_json, write_null_csv
from .overlap import dump_profiles, load_profiles, profile_all
from .synth import SynthConfig, generate_synthetic

log = logging.getLogger("ddirisk")

STAGES = ("synth", "profile", "measures", "nullmodel", "network", "classify", "cost")
CONTRACEPTIVES = ("Ethinyl Estradiol", "Estradiol", "Norethisterone", "Levonorgestrel",
                  "Estrogens Conjugated")


@dataclass
class RunConfig:
    out: str = "out"
    seed: int = 42
    threads: int = 1
    dispensations: str | None = None  # default: synth stage output
    patients: str | None = None
    catalog: str | None = None
    epoch: str | None = None  # ISO date; when set, start/end columns are dates
    col_patient: str = "patient_id"
    col_drug: str = "drug_id"
    col_start: str = "start_day"
    col_end: str | None = "end_day"
    col_duration: str | None = None
    age_width: int = 5
    age_last: int = 90
    trend_x: str = "index"
    synth_patients: int = 5000
    null_runs: int = 100
    null_confidence: float = 0.95
    null_by_gender: bool = False
    null_sample_fraction: float = 1.0
    cv_folds: int = 4
    l2_penalty: float = 1e-3
    max_iters: int = 3000
    include_drugs: bool = True
    gender_threshold: float = 3.0
    betweenness: str = "hops"
    cost_params: str | None = None  # default: bundled parameters
    cost_rounding: str = "floor"

    @classmethod
    def load(cls, path=None, **overrides) -> "RunConfig":
        data = {}
        if path:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise InvalidConfig(f"unknown config keys: {unknown}")
        cfg = cls(**data)
        return replace(cfg, **{k: v for k, v in overrides.items() if v is not None})

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    def schema(self) -> DispensationSchema:
        epoch = _dt.date.fromisoformat(self.epoch) if self.epoch else None
        return DispensationSchema(self.col_patient, self.col_drug, self.col_start,
                                  None if self.col_duration else self.col_end,
                                  self.col_duration, epoch)

    def groups(self):
        return default_age_groups(self.age_width, self.age_last)


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class Manifest:
    def __init__(self, out_dir: Path):
        self.path = out_dir / "manifest.json"
        self.out_dir = out_dir
        self.doc = {"version": __version__, "stages": {}}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                self.doc = json.load(fh)
            self.doc["version"] = __version__

    def _key(self, p: Path) -> str:
        p = Path(p)
        try:
            return p.resolve().relative_to(self.out_dir.resolve()).as_posix()
        except ValueError:
            return p.name

    def record(self, stage: str, inputs, outputs, params: dict) -> None:
        self.doc["stages"][stage] = {
            "inputs": {self._key(p): sha256(p) for p in sorted(inputs, key=str)},
            "outputs": {self._key(p): sha256(p) for p in sorted(outputs, key=str)},
            "params": params,
        }
        self.doc["stages"] = dict(sorted(self.doc["stages"].items(),
                                         key=lambda kv: STAGES.index(kv[0])))
        self.out_dir.mkdir(parents=True, exist_ok=True)
        with open(self.path, "w", encoding="utf-8") as fh:
            json.dump(self.doc, fh, indent=2)
            fh.write("\n")


def _stage_dir(cfg: RunConfig, stage: str) -> Path:
    d = cfg.out_dir / stage
    d.mkdir(parents=True, exist_ok=True)
    return d


def _require(*paths) -> None:
    for p in paths:
        if not Path(p).exists():
            raise MissingUpstreamArtifact(f"required input not found: {p}")


def _inputs(cfg: RunConfig) -> tuple[Path, Path, Path]:
    synth = cfg.out_dir / "synth"
    disp = Path(cfg.dispensations) if cfg.dispensations else synth / "dispensations.csv"
    pats = Path(cfg.patients) if cfg.patients else synth / "patients.csv"
    cat = Path(cfg.catalog) if cfg.catalog else synth / "catalog.csv"
    return disp, pats, cat


def validate_inputs(cfg: RunConfig) -> None:
    """Config-level check that explicitly configured input files exist."""
    for name in ("dispensations", "patients", "catalog", "cost_params"):
        p = getattr(cfg, name)
        if p is not None and not Path(p).exists():
            raise InvalidConfig(f"{name} path does not exist: {p}")


def _stage(name):
    def wrap(fn):
        def run(cfg: RunConfig, manifest: Manifest | None = None):
            manifest = manifest or Manifest(cfg.out_dir)
            try:
                return fn(cfg, manifest)
            except (StageError, MissingUpstreamArtifact, InvalidConfig):
                raise
            except Exception as exc:  # tag with the stage that failed
                raise StageError(name, exc) from exc
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run
    return wrap


# ---- stages -------------------------------------------------------------

def synth_drug_names(n: int = 122) -> tuple:
    """The bundled catalog's drugs padded with generic names up to ``n``."""
    names = sorted(reference.catalog().drugs)
    return tuple(names) + tuple(f"Other-{k:03d}" for k in range(n - len(names)))


@_stage("synth")
def cmd_synth(cfg: RunConfig, manifest: Manifest):
    """Synthetic patients and dispensations plus the bundled catalog."""
    d = _stage_dir(cfg, "synth")
    conf = SynthConfig(n_patients=cfg.synth_patients, drugs=synth_drug_names())
    data = generate_synthetic(cfg.seed, conf)
    outs = [d / "patients.csv", d / "dispensations.csv", d / "catalog.csv"]
    write_patients(outs[0], data.patients)
    write_dispensations(outs[1], data.intervals)
    write_catalog(outs[2], reference.catalog())
    manifest.record("synth", [], outs, {"seed": cfg.seed, "n_patients": cfg.synth_patients})
    return outs


def _load_base(cfg: RunConfig):
    disp, pats, cat = _inputs(cfg)
    _require(disp, pats, cat)
    return disp, pats, cat


@_stage("profile")
def cmd_profile(cfg: RunConfig, manifest: Manifest):
    """Ingest, build per-patient profiles, write the dataset summary."""
    disp, pats, cat_path = _load_base(cfg)
    catalog = ingest_catalog(cat_path)
    ing = ingest_dispensations(disp, cfg.schema(), strict=False)
    patients = ingest_patients(pats)
    profiles = profile_all(ing.intervals, catalog, cfg.threads)
    d = _stage_dir(cfg, "profile")
    outs = [d / "profiles.jsonl", d / "summary.csv", d / "diagnostics.json"]
    dump_profiles(outs[0], profiles)
    _write_summary(outs[1], ing.summary, profiles, catalog, len(patients))
    diag = {"rows": ing.rows, "intervals": len(ing.intervals),
            "errors": [str(e) for e in ing.errors],
            "clamped_tau": [[p.patient_id, *pair] for p in profiles for pair in p.clamped_pairs]}
    with open(outs[2], "w", encoding="utf-8") as fh:
        json.dump(diag, fh, indent=2)
        fh.write("\n")
    manifest.record("profile", [disp, pats, cat_path], outs, {"threads_independent": True})
    return outs


def _write_summary(path, summary, profiles, catalog, n_patients) -> None:
    psi = sum(p.psi_count for p in profiles)
    phi = sum(p.phi_count for p in profiles)
    u_psi = sum(p.psi_count > 0 for p in profiles)
    u_phi = sum(p.phi_count > 0 for p in profiles)
    rows = [("patients", "", n_patients), ("patients_dispensed", "", summary.patient_count),
            ("dispensations", "", summary.dispensation_count),
            ("drugs", "", summary.distinct_drug_count), ("co_administrations", "", psi),
            ("interactions", "", phi), ("patients_co_administered", "", u_psi),
            ("patients_interacting", "", u_phi)]
    for sev in Severity:
        n_pairs = sum(1 for p in profiles for k, s in p.pair_stats.items()
                      if s.phi and catalog.lookup(*k) is sev)
        n_pat = sum(1 for p in profiles if any(
            s.phi and catalog.lookup(*k) is sev for k, s in p.pair_stats.items()))
        rows += [("interactions", sev.value, n_pairs), ("patients_interacting", sev.value, n_pat)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "severity", "value", "share"])
        for metric, sev, v in rows:
            base = {"interactions": phi, "patients_interacting": u_phi}.get(metric) if sev else None
            share = f"{v / base:.4f}" if base else ""
            w.writerow([metric, sev, v, share])


def _profiles_and_patients(cfg: RunConfig):
    prof_path = cfg.out_dir / "profile" / "profiles.jsonl"
    _, pats, cat_path = _inputs(cfg)
    _require(prof_path, pats, cat_path)
    return prof_path, pats, cat_path


@_stage("measures")
def cmd_measures(cfg: RunConfig, manifest: Manifest):
    """Pair, drug and stratified risk measures plus trend fits and rank product."""
    prof_path, pats, cat_path = _profiles_and_patients(cfg)
    profiles = load_profiles(prof_path)
    patients = patients_by_id(ingest_patients(pats))
    catalog = ingest_catalog(cat_path)
    groups = cfg.groups()
    d = _stage_dir(cfg, "measures")
    out = {k: d / f"{k}.csv" for k in ("pairs", "drugs", "gender", "gender_no_contraceptives",
                                       "severity", "age", "age_gender", "drugcount", "trends",
                                       "rank_product")}
    pairs = pair_measures(profiles, catalog, patients)
    write_pair_csv(out["pairs"], pairs)
    with open(out["drugs"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["drug", "pi", "u", "phi_sum", "psi_sum"])
        for m in drug_pi(profiles):
            w.writerow([m.drug, f"{m.pi:.4f}", m.u_count, m.phi_sum, m.psi_sum])
    gender_relative_risks(profiles, patients).write_csv(out["gender"])
    gender_relative_risks(profiles, patients, CONTRACEPTIVES).write_csv(
        out["gender_no_contraceptives"])
    severity_relative_risks(profiles, patients, catalog, skip_empty=True).write_csv(
        out["severity"])
    age = age_risks(profiles, patients, groups, skip_empty=True)
    age.write_csv(out["age"])
    age_risks(profiles, patients, groups, by_gender=True, skip_empty=True).write_csv(
        out["age_gender"])
    drugcount_relative_risks(profiles).write_csv(out["drugcount"])
    _write_trends(out["trends"], age, groups, cfg.trend_x)
    ranked = rank_product([p for p in pairs if p.in_catalog and p.u_phi > 0])
    with open(out["rank_product"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["position", "drug_i", "drug_j", "rank_tau", "rank_u_phi", "product",
                    "tau", "u_phi"])
        for r in ranked:
            p = r.item
            w.writerow([r.position, *p.pair, *(f"{x:g}" for x in r.ranks), f"{r.product:g}",
                        f"{p.tau_phi:.4f}", p.u_phi])
    outs = list(out.values())
    manifest.record("measures", [prof_path, pats, cat_path], outs, {"trend_x": cfg.trend_x})
    return outs


def _write_trends(path, age_table, groups, encoding) -> None:
    xs = dict(zip((g.label for g in groups), age_x(groups, encoding)))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["series", "degree", "r_squared", "coefficients"])
        for series in ("rc", "ri"):
            pts = [(xs[r.stratum[0]], r.values[series]) for r in age_table.rows
                   if r.values[series] is not None]
            for deg in (1, 2, 3):
                if len(pts) < deg + 2:
                    continue
                fit = fit_polynomial_trend([p[0] for p in pts], [float(p[1]) for p in pts], deg)
                w.writerow([series, deg, f"{fit.r_squared:.4f}",
                            " ".join(f"{c:.6g}" for c in fit.coefficients)])


@_stage("nullmodel")
def cmd_nullmodel(cfg: RunConfig, manifest: Manifest):
    """Randomized pair null model per age group with CIs and chi-square."""
    prof_path, pats, cat_path = _profiles_and_patients(cfg)
    profiles = load_profiles(prof_path)
    patients = patients_by_id(ingest_patients(pats))
    catalog = ingest_catalog(cat_path)
    conf = NullModelConfig(runs=cfg.null_runs, seed=cfg.seed, confidence=cfg.null_confidence,
                           groups=tuple(cfg.groups()), stratify_gender=cfg.null_by_gender,
                           sample_fraction=cfg.null_sample_fraction, threads=cfg.threads)
    res = run_null_model(profiles, patients, catalog, conf)
    d = _stage_dir(cfg, "nullmodel")
    outs = [d / "null.csv", d / "chi_square.json"]
    write_null_csv(outs[0], res)
    write_chi_json(outs[1], res)
    manifest.record("nullmodel", [prof_path, pats, cat_path], outs,
                    {"seed": cfg.seed, "runs": cfg.null_runs})
    return outs


@_stage("network")
def cmd_network(cfg: RunConfig, manifest: Manifest):
    """DDI graph from the measures stage, node metrics and gender subgraphs."""
    m = cfg.out_dir / "measures"
    pairs_path, drugs_path = m / "pairs.csv", m / "drugs.csv"
    _require(pairs_path, drugs_path)
    with open(drugs_path, newline="", encoding="utf-8") as fh:
        drugs = [DrugMeasures(r["drug"], float(r["pi"]), int(r["u"]), int(r["phi_sum"]),
                              int(r["psi_sum"])) for r in csv.DictReader(fh)]
    g = build_graph(read_pair_csv(pairs_path), drugs)
    d = _stage_dir(cfg, "network")
    outs = [d / "graph.graphml", d / "edges.csv", d / "nodes.csv", d / "gender_subgraphs.json"]
    write_graphml(g, outs[0])
    write_edge_csv(g, outs[1])
    write_node_csv(g, outs[2], distance=cfg.betweenness)
    sub = {}
    for gender in ("F", "M"):
        s = gender_subgraph(g, cfg.gender_threshold, gender)
        sub[gender] = {"edges": s.number_of_edges(), "drugs": s.number_of_nodes(),
                       "pairs": sorted([sorted(e) for e in s.edges])}
    with open(outs[3], "w", encoding="utf-8") as fh:
        json.dump({"threshold": cfg.gender_threshold, **sub}, fh, indent=2)
        fh.write("\n")
    manifest.record("network", [pairs_path, drugs_path], outs,
                    {"betweenness": cfg.betweenness, "threshold": cfg.gender_threshold})
    return outs


@_stage("classify")
def cmd_classify(cfg: RunConfig, manifest: Manifest):
    """Logistic regression and baselines under stratified k-fold CV."""
    prof_path, pats, _ = _profiles_and_patients(cfg)
    profiles = load_profiles(prof_path)
    patients = patients_by_id(ingest_patients(pats))
    data = build_features(profiles, patients, include_drugs=cfg.include_drugs)
    params = LogRegParams(cfg.l2_penalty, cfg.max_iters)
    reports = cross_validate(data, cfg.cv_folds, cfg.seed, params, threads=cfg.threads)
    d = _stage_dir(cfg, "classify")
    outs = [d / "report.csv", d / "report.json", d / "weights.csv"]
    write_reports_csv(outs[0], reports)
    write_reports_json(outs[1], reports)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        write_weights_csv(outs[2], train_logreg(data, params))
    manifest.record("classify", [prof_path, pats], outs,
                    {"seed": cfg.seed, "folds": cfg.cv_folds, "features": len(data.columns)})
    return outs


@_stage("cost")
def cmd_cost(cfg: RunConfig, manifest: Manifest):
    """Cost projection tables for city, state and country."""
    if cfg.cost_params:
        src = Path(cfg.cost_params)
        with open(src, encoding="utf-8") as fh:
            doc = json.load(fh)
    else:
        src = None
        doc = reference.cost_params()
    city = params_from_json(doc, "blumenau")
    rows = project_costs(city, doc["p_h_levels"], cfg.cost_rounding)
    rows.append(project_from_share(city, "0.075"))
    d = _stage_dir(cfg, "cost")
    cur = [city.currency, city.reference_currency,
           *sorted({k.split("->")[1] for k in city.fx_rates})]
    outs = [d / "city.csv"]
    write_cost_csv(outs[0], rows, cur, city.period_months)
    for region in ("santa_catarina", "brazil"):
        if region not in doc["regions"]:
            continue
        reg_rows = extrapolate(rows[:-1], params_from_json(doc, region), cfg.cost_rounding)
        # the region's major-DDI patient count is its own 100% row
        reg = params_from_json(doc, region, u_major=reg_rows[0].patients)
        reg_rows.append(project_from_share(reg, "0.075"))
        outs.append(d / f"{region}.csv")
        write_cost_csv(outs[-1], reg_rows, cur, reg.period_months)
    manifest.record("cost", [src] if src else [], outs, {"rounding": cfg.cost_rounding})
    return outs


COMMANDS = {"synth": cmd_synth, "profile": cmd_profile, "measures": cmd_measures,
            "nullmodel": cmd_nullmodel, "network": cmd_network, "classify": cmd_classify,
            "cost": cmd_cost}
PIPELINE = ("synth", "profile", "measures", "nullmodel", "network", "classify")


def run_pipeline(cfg: RunConfig, stages=PIPELINE) -> Manifest:
    manifest = Manifest(cfg.out_dir)
    for name in stages:
        if name == "synth" and cfg.dispensations:
            continue
        log.info("stage %s", name)
        COMMANDS[name](cfg, manifest)
    return manifest
