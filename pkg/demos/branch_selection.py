"""Noise selects a branch where the deterministic equation has two.

The square-root branch drift admits both y = 0 and y(t) = t^2 from the
origin, and the trapezoid residual confirms each exactly.  Add a
Brownian driver and solve the same initial problem with two unrelated
schemes: they land on the same path, and their gap contracts as the
grid refines.
"""

from driftflow.verify import regularization_demo


def main():
    rep = regularization_demo()
    print("deterministic residuals from x0 = 0:")
    print(f"  y = 0    -> {rep.residual_zero:g}")
    print(f"  y = t^2  -> {rep.residual_square:g}")

    print(f"\ncross-scheme gap, median over {rep.n_seeds} drivers:")
    for level, med in zip(rep.levels, rep.median_discrepancy):
        print(f"  level {level}: {med:.3e}")
    print("halving the step roughly halves the gap: both schemes chase")
    print("the one solution the noise picked.")


if __name__ == "__main__":
    main()
