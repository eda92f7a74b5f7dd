"""
The interaction network
=======================

Drugs are nodes; an edge joins two drugs that were co-administered and are
listed as interacting. Edge weight is the mean overlap fraction tau.
"""

from ddirisk import reference
from ddirisk.network import build_graph, gender_subgraph, node_metrics

g = build_graph(reference.pair_table(), reference.drug_measures(),
                drug_class=reference.drug_classes())
print(g.number_of_nodes(), "drugs,", g.number_of_edges(), "interacting pairs")

hops = node_metrics(g)
tau = node_metrics(g, distance="tau")
top = sorted(hops, key=lambda d: -hops[d].degree)[:8]
print(f"{'drug':<16}{'deg':>4}{'strength':>10}{'btw(hops)':>11}{'btw(tau)':>10}")
for d in top:
    m = hops[d]
    print(f"{d:<16}{m.degree:>4}{m.strength:>10.2f}{m.betweenness:>11.3f}{tau[d].betweenness:>10.3f}")

# pairs where one gender is more than three times as exposed
for gender in ("F", "M"):
    sub = gender_subgraph(g, 3, gender)
    print(gender, sub.number_of_edges(), "edges over", sub.number_of_nodes(), "drugs")
