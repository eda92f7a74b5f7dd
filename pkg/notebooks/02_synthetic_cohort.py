"""
A synthetic cohort end to end
=============================

Generate dispensations, find co-administrations, then ask whether the
age pattern of interactions is more than polypharmacy alone would give.
"""

import numpy as np

from ddirisk import reference
from ddirisk.data import default_age_groups, patients_by_id
from ddirisk.measures import age_risks, gender_relative_risks, pair_measures, rank_product
from ddirisk.nullmodel import NullModelConfig, run_null_model
from ddirisk.overlap import profile_all
from ddirisk.pipeline import synth_drug_names
from ddirisk.synth import SynthConfig, generate_synthetic

catalog = reference.catalog()
data = generate_synthetic(7, SynthConfig(n_patients=5000, drugs=synth_drug_names()))
patients = patients_by_id(data.patients)
profiles = profile_all(data.intervals, catalog)
print(len(data.intervals), "dispensations,", len(profiles), "patients")

nu = np.array([p.nu for p in profiles])
print("drugs per patient: mean %.2f, max %d" % (nu.mean(), nu.max()))

g = gender_relative_risks(profiles, patients)
print("RRI_F on synthetic data:", g.row("F").values["rri"].format(3))

# top pairs by rank product of tau and patient count
pairs = [p for p in pair_measures(profiles, catalog, patients) if p.in_catalog and p.u_phi]
for r in rank_product(pairs)[:5]:
    print(r.position, r.item.pair, f"tau={r.item.tau_phi:.2f}", "patients", r.item.u_phi)

groups = default_age_groups()
age = age_risks(profiles, patients, groups, skip_empty=True)
null = run_null_model(profiles, patients, catalog, NullModelConfig(runs=50, seed=1))
print(f"{'group':>6} {'RI':>7} {'RI*':>7}  95% band")
for r in null.rows:
    if r.u_psi:
        print(f"{r.group:>6} {r.ri_obs:7.4f} {r.ri_star_mean:7.4f}  [{r.ci_low:.4f}, {r.ci_high:.4f}]")
c = null.chi_square
print(f"chi2 = {c.statistic:.1f} on {c.dof} dof, p = {c.p_value:.3g}")
