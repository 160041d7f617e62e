"""
Three ways to reward a model
============================

All fitness variants blend two accuracies (the full-depth left model and
the shallow right model) with the left model's measured power draw.  The
interesting one is f3: accuracy alone until either partition clears its
threshold, then an inverse-power bonus switches on, so efficient models
win among the accurate ones.
"""

import numpy as np

from evopower.fitness import FitnessConfig, evaluate_fitness, fitness_f1, fitness_f2, fitness_f3

# the capped variants always pay for power; note how f2 scales the bonus
for watts in (30.0, 50.0, 100.0):
    print(
        "acc (0.9, 0.9) at %5.1f W   f1=%.4f   f2=%.4f   f3=%.4f"
        % (watts, fitness_f1(0.9, 0.9, watts), fitness_f2(0.9, 0.9, watts), fitness_f3(0.9, 0.9, watts))
    )

# f3 across the accuracy plane at fixed power: below both thresholds the
# surface is the plain accuracy sum, above either one it jumps by w/P
print("\nf3 at 50 W (rows: left accuracy, cols: right accuracy)")
acc_grid = [0.70, 0.80, 0.85, 0.95]
print("        " + "".join("%8.2f" % a for a in acc_grid))
for al in acc_grid:
    row = [fitness_f3(al, ar, 50.0) for ar in acc_grid]
    print("  %.2f  " % al + "".join("%8.4f" % v for v in row))

# the boundary itself stays in the accuracy-only branch: sitting exactly
# on (0.80, 0.85) earns no power bonus, one epsilon above does
print("\non the boundary: %.6f" % fitness_f3(0.80, 0.85, 10.0))
print("just above:      %.6f" % fitness_f3(0.80 + 1e-9, 0.85, 10.0))

# the engine dispatches through a config; the baseline mode simply
# scores the left accuracy and ignores power entirely
proposed = FitnessConfig(kind="f3")
baseline = FitnessConfig(kind="accuracy")
print("\nproposed scores (0.97, 0.91, 52 W):", "%.4f" % evaluate_fitness(proposed, 0.97, 0.91, 52.0))
print("baseline scores the same record:   ", "%.4f" % evaluate_fitness(baseline, 0.97, 0.91, 52.0))
