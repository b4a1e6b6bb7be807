#!/usr/bin/env python3
"""Exact-arithmetic reference for the hand instance D0.

Recomputes every quantity the C++ test suites freeze for D0 using
fractions.Fraction only (no floating point), via brute-force definitions:

  * arm means and the difference-in-means estimate
  * per-unit residuals and per-cluster residual sums
  * the 2x2 bread matrix and its inverse (adjugate / determinant)
  * the meat matrix accumulated from per-cluster score outer products
  * the full sandwich product bread^-1 * meat * bread^-1
  * the simplified two-term variance
  * per-arm (outcome_sum, size) moments and the delta-method variance,
    population and sample divisors

It then checks all routes agree exactly and prints the frozen decimal
values used by tests/test_estimators.cpp and tests/test_acceptance.cpp.
Exits non-zero on any mismatch.
"""

from fractions import Fraction as Fr
import sys

# D0: cluster, assignment, outcome
UNITS = [
    ("g1", 1, Fr(1)),
    ("g1", 1, Fr(0)),
    ("g2", 1, Fr(1)),
    ("g3", 0, Fr(0)),
    ("g3", 0, Fr(0)),
    ("g4", 0, Fr(1)),
]


def mat_mul(a, b):
    return [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]


def main():
    failures = []

    def expect(name, got, want):
        if got != want:
            failures.append(f"{name}: got {got}, want {want}")

    n_treat = sum(w for _, w, _ in UNITS)
    n_control = sum(1 - w for _, w, _ in UNITS)
    expect("n_treat", n_treat, 3)
    expect("n_control", n_control, 3)

    treat_sum = sum(y for _, w, y in UNITS if w == 1)
    control_sum = sum(y for _, w, y in UNITS if w == 0)
    alpha = control_sum / n_control
    tau = treat_sum / n_treat - alpha
    expect("alpha_hat", alpha, Fr(1, 3))
    expect("tau_hat", tau, Fr(1, 3))

    residuals = [y - alpha - tau * w for _, w, y in UNITS]
    expect(
        "residuals",
        residuals,
        [Fr(1, 3), Fr(-2, 3), Fr(1, 3), Fr(-1, 3), Fr(-1, 3), Fr(2, 3)],
    )

    clusters = {}
    for (cid, w, y), eps in zip(UNITS, residuals):
        n, r, s = clusters.get(cid, (0, Fr(0), Fr(0)))
        clusters[cid] = (n + 1, r + y, s + eps)
    arms = {cid: UNITS[[u[0] for u in UNITS].index(cid)][1] for cid in clusters}

    s_treat = {cid: s for cid, (_, _, s) in clusters.items() if arms[cid] == 1}
    s_control = {cid: s for cid, (_, _, s) in clusters.items() if arms[cid] == 0}
    expect("S_g1T", s_treat["g1"], Fr(-1, 3))
    expect("S_g2T", s_treat["g2"], Fr(1, 3))
    expect("S_g3C", s_control["g3"], Fr(-2, 3))
    expect("S_g4C", s_control["g4"], Fr(2, 3))

    simplified = sum(s * s for s in s_treat.values()) / n_treat**2 + sum(
        s * s for s in s_control.values()
    ) / n_control**2
    expect("variance_simplified", simplified, Fr(10, 81))

    n_units = len(UNITS)
    bread = [[Fr(n_units), Fr(n_treat)], [Fr(n_treat), Fr(n_treat)]]
    det = bread[0][0] * bread[1][1] - bread[0][1] * bread[1][0]
    binv = [
        [bread[1][1] / det, -bread[0][1] / det],
        [-bread[1][0] / det, bread[0][0] / det],
    ]
    expect(
        "bread_inverse",
        binv,
        [[Fr(1, 3), Fr(-1, 3)], [Fr(-1, 3), Fr(2, 3)]],
    )
    # closed form [[1/N_C, -1/N_C], [-1/N_C, 1/N_T + 1/N_C]]
    expect(
        "bread_inverse_closed_form",
        binv,
        [
            [Fr(1, n_control), -Fr(1, n_control)],
            [-Fr(1, n_control), Fr(1, n_treat) + Fr(1, n_control)],
        ],
    )

    meat = [[Fr(0), Fr(0)], [Fr(0), Fr(0)]]
    for cid, (_, _, s) in clusters.items():
        st = s if arms[cid] == 1 else Fr(0)
        sc = s if arms[cid] == 0 else Fr(0)
        u = (st + sc, st)
        meat[0][0] += u[0] * u[0]
        meat[0][1] += u[0] * u[1]
        meat[1][0] += u[1] * u[0]
        meat[1][1] += u[1] * u[1]
    expect("meat", meat, [[Fr(10, 9), Fr(2, 9)], [Fr(2, 9), Fr(2, 9)]])

    sandwich = mat_mul(mat_mul(binv, meat), binv)
    expect("sandwich_11", sandwich[0][0], Fr(8, 81))
    expect("sandwich_22", sandwich[1][1], Fr(10, 81))
    expect("sandwich_equals_simplified", sandwich[1][1], simplified)

    # delta method from per-arm (outcome_sum, size) moments
    def delta_arm(arm, sample):
        pts = [(r, Fr(n)) for cid, (n, r, _) in clusters.items() if arms[cid] == arm]
        n = len(pts)
        mu_r = sum(r for r, _ in pts) / n
        mu_n = sum(m for _, m in pts) / n
        div = n - 1 if sample else n
        var_r = sum((r - mu_r) ** 2 for r, _ in pts) / div
        var_n = sum((m - mu_n) ** 2 for _, m in pts) / div
        cov = sum((r - mu_r) * (m - mu_n) for r, m in pts) / div
        theta = mu_r / mu_n
        return (var_r - 2 * theta * cov + theta * theta * var_n) / (n * mu_n * mu_n)

    t_pts = [(r, n) for cid, (n, r, _) in clusters.items() if arms[cid] == 1]
    expect("treat_mu_r", sum(r for r, _ in t_pts) / 2, Fr(1))
    expect("treat_mu_n", Fr(sum(n for _, n in t_pts), 2), Fr(3, 2))
    expect("delta_treat_pop", delta_arm(1, sample=False), Fr(2, 81))
    expect("delta_control_pop", delta_arm(0, sample=False), Fr(8, 81))
    delta_pop = delta_arm(1, False) + delta_arm(0, False)
    delta_sample = delta_arm(1, True) + delta_arm(0, True)
    expect("delta_pop", delta_pop, Fr(10, 81))
    expect("delta_sample", delta_sample, Fr(20, 81))
    expect("delta_equals_simplified", delta_pop, simplified)

    if failures:
        for f in failures:
            print("FAIL", f, file=sys.stderr)
        return 1

    print("D0 exact reference (all routes agree):")
    print(f"  alpha_hat            = {alpha} = {float(alpha):.17g}")
    print(f"  tau_hat              = {tau} = {float(tau):.17g}")
    print(f"  variance (all three) = {simplified} = {float(simplified):.17g}")
    print(f"  sandwich_11          = {sandwich[0][0]} = {float(sandwich[0][0]):.17g}")
    print(f"  delta_sample         = {delta_sample} = {float(delta_sample):.17g}")
    try:
        from statistics import NormalDist

        for level in (0.95, 0.99):
            z = NormalDist().inv_cdf((1 + level) / 2)
            print(f"  z({level})              = {z:.17g}")
    except ImportError:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
