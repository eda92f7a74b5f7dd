"""Weighted DDI network: construction, node metrics, gender subgraphs, export."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import networkx as nx

from .data import Severity
from .measures import DrugMeasures, PairMeasures, RelativeRisk, RiskKind

WEIGHT_KINDS = ("tau", "patients")
EDGE_CSV_FIELDS = ("drug_i", "drug_j", "tau", "u_phi", "rri_f", "severity")


def build_graph(pairs: Iterable[PairMeasures], drugs: Iterable[DrugMeasures] = (),
                weight_kind: str = "tau", drug_class: Mapping[str, str] | None = None) -> nx.Graph:
    """Graph over the observed known-DDI pairs.

    Edge weight is the pair's mean tau (``"tau"``) or its number of
    interacting patients (``"patients"``).
    """
    if weight_kind not in WEIGHT_KINDS:
        raise ValueError(f"weight_kind must be one of {WEIGHT_KINDS}")
    pi = {d.drug: d.pi for d in drugs}
    drug_class = drug_class or {}
    g = nx.Graph()
    edges = sorted((p for p in pairs if p.severity is not None and p.u_phi > 0),
                   key=lambda p: p.pair)
    for a in sorted({d for p in edges for d in p.pair}):
        g.add_node(a, pi=pi.get(a), drug_class=drug_class.get(a))
    for p in edges:
        w = p.tau_phi if weight_kind == "tau" else float(p.u_phi)
        g.add_edge(*p.pair, weight=w, tau=p.tau_phi, u_phi=p.u_phi,
                   rri_f=p.rri_f, severity=p.severity)
    return g


@dataclass(frozen=True)
class NodeMetrics:
    degree: int
    strength: float
    betweenness: float


BETWEENNESS_DISTANCES = ("hops", "tau")


def node_metrics(graph: nx.Graph, distance: str = "hops") -> dict[str, NodeMetrics]:
    """Degree, weighted degree and normalized betweenness.

    Shortest paths count hops by default. ``distance="tau"`` uses each edge's
    tau as its length instead.
    """
    if distance not in BETWEENNESS_DISTANCES:
        raise ValueError(f"distance must be one of {BETWEENNESS_DISTANCES}")
    btw = nx.betweenness_centrality(graph, normalized=True,
                                    weight=None if distance == "hops" else "tau")
    out = {}
    for n in sorted(graph.nodes):
        s = math.fsum(d.get("weight", 1.0) for _, _, d in sorted(graph.edges(n, data=True)))
        out[n] = NodeMetrics(graph.degree(n), s, btw[n])
    return out


def favored_gender(rri: RelativeRisk | None) -> str:
    if rri is None or rri.kind is RiskKind.NOT_OBSERVED:
        return "unknown"
    if rri.kind is RiskKind.POS_INF or rri.value > 1:
        return "F"
    if rri.value < 1:
        return "M"
    return "none"


def gender_risk(rri: RelativeRisk | None, gender: str) -> float:
    """RRI of ``gender`` versus the other one, as a float (inf allowed, nan if undefined)."""
    if rri is None:
        return math.nan
    if gender == "F":
        return float(rri)
    if gender == "M":
        return float(rri.reciprocal())
    raise ValueError(f"gender must be F or M, got {gender!r}")


def gender_subgraph(graph: nx.Graph, threshold: float, gender: str) -> nx.Graph:
    """Edges whose RRI for ``gender`` exceeds ``threshold`` (infinite included)."""
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    keep = [(a, b) for a, b, d in graph.edges(data=True)
            if gender_risk(d.get("rri_f"), gender) > threshold]
    return graph.edge_subgraph(keep).copy()


def _edge_row(a, b, d) -> list:
    rri = d.get("rri_f")
    sev = d.get("severity")
    return [a, b, repr(float(d["tau"])), int(d["u_phi"]),
            rri.format(4) if rri is not None else "",
            sev.value if isinstance(sev, Severity) else (sev or "")]


def write_edge_csv(graph: nx.Graph, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EDGE_CSV_FIELDS)
        for a, b, d in sorted(graph.edges(data=True), key=lambda e: tuple(sorted(e[:2]))):
            a, b = sorted((a, b))
            w.writerow(_edge_row(a, b, d))


def read_edge_csv(path, weight_kind: str = "tau") -> nx.Graph:
    g = nx.Graph()
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for a in sorted({r[k] for r in rows for k in ("drug_i", "drug_j")}):
        g.add_node(a, pi=None, drug_class=None)
    for r in rows:
        tau = float(r["tau"])
        u = int(r["u_phi"])
        g.add_edge(r["drug_i"], r["drug_j"], weight=tau if weight_kind == "tau" else float(u),
                   tau=tau, u_phi=u, rri_f=RelativeRisk.parse(r["rri_f"]),
                   severity=Severity.parse(r["severity"]))
    return g


def write_graphml(graph: nx.Graph, path) -> None:
    """GraphML 1.0 with scalar attributes only.

    ``rri_f`` is omitted on edges whose risk is infinite or undefined; the
    ``favored_gender`` attribute is always present.
    """
    out = nx.Graph()
    for n in sorted(graph.nodes):
        d = graph.nodes[n]
        attrs = {}
        if d.get("pi") is not None:
            attrs["pi"] = float(d["pi"])
        if d.get("drug_class"):
            attrs["drug_class"] = str(d["drug_class"])
        out.add_node(n, **attrs)
    for a, b, d in sorted(graph.edges(data=True), key=lambda e: tuple(sorted(e[:2]))):
        a, b = sorted((a, b))
        rri = d.get("rri_f")
        attrs = {"weight": float(d["weight"]), "tau": float(d["tau"]),
                 "u_phi": int(d["u_phi"]), "favored_gender": favored_gender(rri)}
        if rri is not None and rri.is_finite:
            attrs["rri_f"] = float(rri)
        sev = d.get("severity")
        if sev is not None:
            attrs["severity"] = sev.value if isinstance(sev, Severity) else str(sev)
        out.add_edge(a, b, **attrs)
    nx.write_graphml(out, path, encoding="utf-8", prettyprint=True)


def export_graph(graph: nx.Graph, path, fmt: str = "graphml") -> None:
    fmt = fmt.lower()
    if fmt == "graphml":
        write_graphml(graph, path)
    elif fmt in ("edgecsv", "csv"):
        write_edge_csv(graph, path)
    else:
        raise ValueError(f"unknown graph format {fmt!r}")


def write_node_csv(graph: nx.Graph, path, dp: int = 4, distance: str = "hops") -> None:
    metrics = node_metrics(graph, distance)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["drug", "degree", "strength", "betweenness", "pi", "drug_class"])
        for n, m in metrics.items():
            d = graph.nodes[n]
            pi = "" if d.get("pi") is None else f"{d['pi']:.{dp}f}"
            w.writerow([n, m.degree, f"{m.strength:.{dp}f}", f"{m.betweenness:.{dp}f}", pi,
                        d.get("drug_class") or ""])
