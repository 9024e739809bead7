"""Minimize -tr(X^T A X) over the Stiefel manifold and check the answer.

The minimizer spans the invariant subspace of the p largest eigenvalues, so
the optimal value is minus their sum -- easy to verify with a dense solver.
"""

import numpy as np

from stiefelbb import SolverConfig, TraceEigenProblem, random_stiefel, solve


def main():
    n = 300
    rng = np.random.default_rng(0)
    a = rng.standard_normal((n, n))
    a = (a + a.T) / 2.0
    exact = np.sort(np.linalg.eigvalsh(a))[::-1]

    print(f"n = {n}")
    print(f"{'p':>3} {'f_final':>14} {'exact':>14} {'rel.err':>9} "
          f"{'feasi':>9} {'nfge':>5} {'stop':>12}")
    for p in (1, 5, 20):
        prob = TraceEigenProblem(a, p)
        x0 = random_stiefel(n, p, seed=1)
        rep = solve(prob, x0, SolverConfig(eps=1e-6, eps_x=1e-6, eps_f=1e-10))
        target = -float(exact[:p].sum())
        rel = abs(rep.f_final - target) / abs(target)
        print(f"{p:>3} {rep.f_final:>14.8f} {target:>14.8f} {rel:>9.1e} "
              f"{rep.feasi:>9.1e} {rep.nfge:>5} {rep.stop_reason:>12}")


if __name__ == "__main__":
    main()
