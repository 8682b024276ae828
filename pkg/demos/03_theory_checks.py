"""Run the brute-force theory verifiers and print every check.

Covers: EMA divergence as a drift-rate estimate, outcome entropy vs reward
variance, the G_max * sqrt(variance) bound on the exact gradient norm (with
the vanishing-gradient demonstration), push-pull gradient restoration on a
collapsed batch, and Monte Carlo vs enumeration agreement.

Same checks as `deptlab verify`, in library form.
"""

from deptlab.oracle import run_verification_suite, velocity_divergence_check
from deptlab.core import SeededRng


def main():
    print("EMA divergence on a drifting reward stream R_t = c*t + noise:")
    for c in (0.005, 0.01, 0.02):
        measured, predicted = velocity_divergence_check(
            0.5, 0.95, c, noise_sd=0.1, steps=10_000, rng=SeededRng(7)
        )
        print(f"  drift {c:.3f}: measured {measured:.4f}, predicted "
              f"(T_slow - T_fast)*c = {predicted:.4f}")
    print()

    results = run_verification_suite()
    width = max(len(r.name) for r in results)
    for r in results:
        mark = "ok " if r.passed else "FAIL"
        print(f"  [{mark}] {r.name:<{width}}  {r.detail}")
    failed = sum(not r.passed for r in results)
    print(f"\n{len(results) - failed}/{len(results)} checks passed")


if __name__ == "__main__":
    main()
