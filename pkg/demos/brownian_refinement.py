"""Driver paths: deterministic generation and nested dyadic refinement.

Regenerating a path from its seed is bit-exact, and refinement inserts
midpoints without touching the nodes already drawn, so every coarse
statistic is preserved under refinement.  The quadratic variation of
the refined path converges to the horizon.
"""

import numpy as np

from driftflow import paths


def main():
    p = paths.generate_path(seed=12, horizon=1.0, level=6)
    again = paths.generate_path(seed=12, horizon=1.0, level=6)
    print("bit-exact regeneration:", np.array_equal(p.values, again.values))

    fine = p
    print("\nlevel  nodes  max|W|   quad.var")
    for _ in range(5):
        qv = float(np.sum(np.diff(fine.values[:, 0]) ** 2))
        print(
            f"{fine.level:5d}  {fine.values.shape[0]:5d}  "
            f"{np.max(np.abs(fine.values)):.4f}  {qv:.4f}"
        )
        fine = paths.refine(fine, 1)

    kept = fine.values[:: 1 << (fine.level - p.level), 0]
    print("\ncoarse nodes preserved under refinement:",
          np.array_equal(kept, p.values[:, 0]))
    print(f"final spacing: {fine.grid.spacing:.2e}")


if __name__ == "__main__":
    main()
