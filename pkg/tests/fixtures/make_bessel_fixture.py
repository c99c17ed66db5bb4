"""Regenerate bessel_mpmath.json: J_n and K_n (n = 0..3) at 50-digit precision.

Run from this directory: ``python make_bessel_fixture.py``.
"""

import json

import mpmath as mp
import numpy as np

mp.mp.dps = 50
xs = sorted(set(np.round(np.geomspace(1e-3, 60.0, 61), 12).tolist() + [0.5, 1.0, 2.404825557695773, 4.0]))
rows = []
for x in xs:
    row = {"x": x}
    for n in range(4):
        row[f"J{n}"] = mp.nstr(mp.besselj(n, x), 30)
        row[f"K{n}"] = mp.nstr(mp.besselk(n, x), 30)
    rows.append(row)
with open("bessel_mpmath.json", "w") as fh:
    json.dump({"precision_digits": 50, "rows": rows}, fh, indent=1)
