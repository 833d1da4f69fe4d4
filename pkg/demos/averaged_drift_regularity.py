"""Averaging a discontinuous drift along a Brownian path smooths it.

The running integral of the raw sign field along one driver path is
tabulated over start times and spatial offsets.  In time the increments
fit an exponent near one, far above the 1/2-Hoelder envelope they are
measured against, and the envelope ratio Xi stays finite.  In space the
story is visible directly: the field itself jumps at the origin, but
its average along the path crosses zero smoothly.
"""

import numpy as np

from driftflow import paths
from driftflow.averaging import build_averaged_table, estimate_holder
from driftflow.fields import make_drift


def main():
    b = make_drift("sign", p=4, q=4)
    p = paths.generate_path(seed=3, horizon=1.0, level=10)
    x_grid = np.linspace(-1.0, 1.0, 17)
    table = build_averaged_table(b, p, x_grid, time_level=7)

    rep = estimate_holder(table, alpha=0.5, eps=0.5, min_scales=4)
    print(f"time exponent {rep.alpha_fit:.3f} (r2 {rep.r2_time:.3f}) "
          f"against a 0.5 envelope; Xi = {rep.xi:.3f}")

    print("\n     x   sign(x)   avg over [0, 1]")
    for j in range(5, 12):
        x = x_grid[j]
        raw = b.fn(np.array([0.5]), np.array([[x]]))[0, 0]
        avg = table.cumulative[-1, j, 0]
        print(f"{x:6.3f}  {raw:8.1f}  {avg:10.4f}")
    print("\nthe averaged column moves through zero with no jump; its")
    print("slope there is set by the time the path spends near -x.")


if __name__ == "__main__":
    main()
