"""Empty time cells stop estimation. Regroup the time axis and refit.

A small sample leaves late days without events, and a clinic closed on
weekends never records type-1 events on days 7, 14 and 21.
"""

from dtsurv import CoefficientSpec, EstimabilityError, clip_tail, generate, merge_times, twostage
from dtsurv.simulation import weekend_scenario

small = generate(1000, CoefficientSpec.paper(), seed=7)
try:
    twostage.fit(small)
except EstimabilityError as err:
    print("sparse tail:", err.cells)
fitted = twostage.fit(clip_tail(small, 21))
print("after pooling days 21+:", fitted.grid.labels[-3:], "\n")

weekend = weekend_scenario(1000, seed=7)
try:
    twostage.fit(weekend)
except EstimabilityError as err:
    print("weekend gaps:", err.cells)
fitted = twostage.fit(merge_times(weekend, {7: 6, 14: 13, 21: 20}))
print("after folding weekend days:", fitted.grid.labels[:8])
