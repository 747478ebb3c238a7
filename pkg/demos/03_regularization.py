"""Elastic-net paths: watch coefficients shrink and drop out."""

import numpy as np

from dtsurv import CoefficientSpec, PenaltySpec, generate, twostage

ds = generate(20_000, CoefficientSpec.paper(), seed=2)
print("penalizer  event-1 coefficients (lasso)")
for w in (0.0, 10.0, 50.0, 200.0, 1000.0):
    fitted = twostage.fit(ds, PenaltySpec(w, l1_ratio=1.0))
    print(f"{w:9.0f}  {np.round(fitted.params.beta[0], 3)}")

# penalize only the first two covariates
fitted = twostage.fit(ds, PenaltySpec((200.0, 200.0, 0.0, 0.0, 0.0)))
print("\nweights (200, 200, 0, 0, 0):", np.round(fitted.params.beta[0], 3))
