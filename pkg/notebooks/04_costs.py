"""
What major interactions might cost
==================================

If a fraction p_h of patients exposed to a major interaction were
hospitalized, what would it cost the city, the state and the country?
"""

from ddirisk import reference
from ddirisk.cost import extrapolate, params_from_json, project_costs, project_from_share

doc = reference.cost_params()
city = params_from_json(doc, "blumenau")
rows = project_costs(city, doc["p_h_levels"])

print(f"{'p_h':>7} {'patients':>9} {'% urgent':>9} {'R$ 18mo':>14} {'US$/capita/yr':>14}")
for r in rows:
    print(f"{r.p_h * 100:6.2f}% {r.patients:9d} {r.pct_hosp:8.2f}% "
          f"{r.costs['BRL'] / 100:14,.0f} {r.per_capita_12mo['USD']:14.2f}")

# 7.5% of urgent admissions among the over-64s, an outside estimate
share = project_from_share(city, "0.075")
print("7.5% of over-64 admissions:", share.patients, "patients,",
      f"US$ {share.per_capita_12mo['USD']:.2f} per capita per year")

for region in ("santa_catarina", "brazil"):
    reg = extrapolate(rows, params_from_json(doc, region))
    print(region, "at 2.68%:", reg[-1].patients, "patients,",
          f"R$ {reg[-1].costs['BRL'] / 100:,.0f} over 18 months")
