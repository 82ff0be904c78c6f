"""Transfer operators: invariant density, mixing and loss of memory.

1. The Parry density of the golden mean map has two plateaus; Ulam's
   method recovers them as the grid is refined.
2. Correlations of [0, 1/3) under the doubling map decay geometrically.
3. Along a sequence of slopes converging to the golden mean, pushed
   forward Lebesgue measure forgets its start and approaches the limit
   density.
"""

import numpy as np

from seqevl import MapSequenceSpec, parry_density, ulam_discretize, ulam_stationary
from seqevl.transfer import correlation_decay_estimate, loss_of_memory_curve

GOLDEN = "(1+sqrt(5))/2"
h = parry_density(GOLDEN)
print("plateaus of the Parry density:", [round(float(v), 6) for v in h.plateaus()])
for bins in (256, 1024, 4096):
    st = ulam_stationary(ulam_discretize(GOLDEN, bins))
    err = np.abs(st.density - h.bin_averages(bins)).mean()
    print(f"  Ulam {bins:>5} bins: L1 distance {err:.2e}  ({st.iterations} iterations)")

est = correlation_decay_estimate(MapSequenceSpec.constant(2), (0, 1 / 3), (0, 1 / 3), 0, 10, 3 * 4096)
print("\ndoubling map, DC(t) for [0, 1/3):")
print("  " + "  ".join(f"{v:.1e}" for v in est.dc))
print(f"  fitted rate {est.rate:.3f}")

depths = [0, 5, 10, 20, 50, 100, 200]
errs = loss_of_memory_curve(MapSequenceSpec.fast(GOLDEN, amplitude="1/2", xi=2), depths, 4096)
print("\nloss of memory, ||Pi_n(1) - h||_1:")
for n, e in zip(depths, errs):
    print(f"  n={n:>3}  {e:.2e}")
