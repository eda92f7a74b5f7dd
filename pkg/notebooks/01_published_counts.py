"""
Risk measures from published counts
===================================

The bundled tables hold aggregate patient counts only. Every ratio below is
recomputed from those counts as an exact fraction.
"""

from ddirisk import reference
from ddirisk.data import default_age_groups
from ddirisk.measures import (age_table_from_counts, age_x, drugcount_table_from_counts,
                              fit_polynomial_trend, gender_table_from_counts)

# women versus men
g = gender_table_from_counts(reference.gender_counts())
print("RRC_F", g.row("F").values["rrc"].format(4), " RRI_F", g.row("F").values["rri"].format(4))
print("audit ok:", g.audit())

# age brackets
rows = reference.age_rows()
age = age_table_from_counts(
    [(r["group"], "", int(r["u"]), int(r["u_nu2"]), int(r["u_psi"]), int(r["u_phi"]))
     for r in rows])
for r in age.rows:
    print(f"{r.stratum[0]:>6}  RC={float(r.values['rc']):.4f}  RI={float(r.values['ri']):.4f}")

x = age_x(default_age_groups())
ri = [float(r.values["ri"]) for r in age.rows]
for deg in (1, 2, 3):
    print(f"RI trend, degree {deg}: R2 = {fit_polynomial_trend(x, ri, deg).r_squared:.4f}")

# number of drugs, relative to patients on two
dc = drugcount_table_from_counts(
    [(r["nu"], int(r["u"]), int(r["u_psi"] or 0), int(r["u_phi"] or 0))
     for r in reference.drugcount_rows()])
for r in dc.rows[1:8]:
    print(f"nu={r.stratum[0]:>3}  RRI={float(r.values['rri']):8.4f}")
