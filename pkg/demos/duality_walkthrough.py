"""Forward moments of the frequency chain against the backward line-counting chain.

Prints E_z[Z_n^m] estimated by simulation next to the exact dual value E_m[z^(M_n)],
first for the neutral chain, then with selection and two-way mutation.
"""

from wfsim import duals

DELTA = 0.7

print("neutral chain, delta =", DELTA)
print(f"{'z':>5} {'m':>3} {'n':>3} {'forward MC':>12} {'dual exact':>12} {'z-score':>8}")
for res in duals.duality_sweep_neutral([0.2, 0.5, 0.8], [1, 3, 5], [1, 5, 20], DELTA, reps=200_000, master_seed=1):
    print(f"{res.z:5.2f} {res.m:3d} {res.n:3d} {res.lhs:12.6f} {res.rhs:12.6f} {res.zscore():8.2f}")

params = duals.FTWDualParams(0.4, 0.3, 0.2, (0.3, 0.15))
print("\nselection (0.3, 0.15) with mutation (0.3, 0.2), delta = 0.4")
print("branching law rho:", params.rho[1:], "killing per merger event:", params.delta0 * params.theta1)
print(f"{'z':>5} {'m':>3} {'n':>3} {'forward MC':>12} {'dual exact':>12} {'dual MC':>12}")
for res in duals.duality_sweep_ftw([0.4, 0.7], [1, 3], [1, 8], params, reps=200_000, master_seed=2):
    exact = duals.ftw_dual_moment(res.z, res.m, res.n, params)
    print(f"{res.z:5.2f} {res.m:3d} {res.n:3d} {res.lhs:12.6f} {exact:12.6f} {res.rhs:12.6f}")

print("\nabsorption at 0 before the cemetery, theta = (0.8, 0.6):")
for delta in (0.1, 0.05, 0.025):
    h = duals.absorption_table(4, delta, 0.8, 0.6)
    print(f"delta={delta:<6} ratios h_m/h_(m-1):", " ".join(f"{r:.4f}" for r in h[1:] / h[:-1]))
print("Beta(1.6, 1.2) moment ratios:        ", " ".join(f"{(m - 1 + 1.6) / (m - 1 + 2.8):.4f}" for m in range(1, 5)))
