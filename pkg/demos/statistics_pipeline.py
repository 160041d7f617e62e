"""
Comparing experiment groups without distributional assumptions
==============================================================

Five runs per setup is far too few for t-tests, so the analysis stack is
rank-based: Kruskal-Wallis across all groups, pairwise Mann-Whitney U
with exact enumeration at these sizes, and a Bonferroni correction on
the family of pairwise comparisons.
"""

import numpy as np

from evopower.analysis import (
    SampleGroup,
    bonferroni,
    kruskal_wallis,
    mann_whitney_u,
    midranks,
    summarize,
)

# midranks are the shared primitive: ties get the average of the ranks
# they straddle
print("midranks of [10, 20, 20, 30]:", midranks([10, 20, 20, 30]).tolist())

# final-best left-model powers from three hypothetical setups
groups = [
    SampleGroup("baseline", [97.1, 96.4, 98.0, 95.9, 97.5]),
    SampleGroup("variant_a", [88.2, 91.0, 86.5, 90.1, 89.4]),
    SampleGroup("variant_b", [68.9, 72.3, 70.4, 69.8, 71.6]),
]
kw = kruskal_wallis(groups)
print("Kruskal-Wallis: H=%.4f p=%.6f (%s)" % (kw.statistic, kw.p_value, kw.method))

# pairwise exact Mann-Whitney; with 5 vs 5 completely separated samples
# the one-sided floor is 1/C(10,5)
raw = []
for i in range(len(groups)):
    for j in range(i + 1, len(groups)):
        res = mann_whitney_u(groups[i], groups[j], mode="exact")
        raw.append(res.p_value)
        print("%s vs %s: U=%.1f p=%.6f" % (groups[i].label, groups[j].label, res.statistic, res.p_value))

print("Bonferroni over %d comparisons:" % len(raw), [round(p, 6) for p in bonferroni(raw, len(raw))])

# summarize() produces the table rows the experiment report uses:
# mean, sd, median, and the median shift against the named baseline
for row in summarize(groups, baseline_label="baseline"):
    print(
        "%-10s mean %6.2f  sd %5.2f  median %6.2f  shift vs baseline %7.2f"
        % (row.label, row.mean, row.sd, row.median, row.diff_to_baseline_median)
    )

# the exact mode refuses silently wrong answers: past the enumeration
# cap it raises instead of approximating behind your back
big = SampleGroup("big", list(np.random.default_rng(0).normal(size=12)))
try:
    mann_whitney_u(big, SampleGroup("also_big", list(np.random.default_rng(1).normal(size=12))))
except Exception as err:
    print("exact mode on 12 vs 12:", type(err).__name__, "-", err)
