"""Turn a fitted model into per-subject hazard, CIF and survival curves."""

import numpy as np

from dtsurv import CoefficientSpec, generate, twostage

ds = generate(20_000, CoefficientSpec.paper(), seed=1)
fitted = twostage.fit(ds)

profiles = np.array([[0.1] * 5, [0.5] * 5, [0.9] * 5])
pred = fitted.predict(profiles)
for obs, rows in pred.groupby("obs"):
    last = rows.iloc[-1]
    print(f"profile {profiles[obs][0]:.1f}: S(30) = {last.survival:.3f}, "
          f"F_1(30) = {last.cif_1:.3f}, F_2(30) = {last.cif_2:.3f}, "
          f"sum = {last.survival + last.cif_1 + last.cif_2:.12f}")
print()
print(pred[pred.obs == 0].head(5).to_string(index=False))
