"""Inner-iteration counts and cross-iteration conjugacy on convex quadratics.

With the inverse quNac estimate the PCG directions of successive outer
iterations stay conjugate, so the total inner count approaches n.  The
conjugacy column degrades as the Hessian's condition number grows.
"""
import argparse

import numpy as np

from qunac import Method, NewtonConfig, minimize
from qunac.problems import hilbert_quadratic, tridiag_quadratic


def conjugacy(blocks, Q):
    cols = np.column_stack([S for _, S, _ in blocks])
    C = cols.T @ Q @ cols
    d = np.sqrt(np.diag(C))
    return float(np.abs(C / np.outer(d, d) - np.eye(len(d))).max())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--max-q", type=int, default=10)
    args = ap.parse_args()
    print(f"{'problem':<14}{'method':<16}{'cond':>10}{'outer':>7}{'inner':>7}{'conjugacy':>12}")
    for prob in (tridiag_quadratic(50), tridiag_quadratic(200), hilbert_quadratic(4), hilbert_quadratic(6)):
        Q = prob.meta["Q"]
        for method in (Method.INVERSE_QUNAC, Method.INVERSE_LQUNAC):
            rep = minimize(prob, NewtonConfig(method=method, max_q=args.max_q, eps=1e-8, record_blocks=True))
            print(f"{prob.name:<14}{method.value:<16}{np.linalg.cond(Q):>10.1e}{rep.outer_iterations:>7}"
                  f"{rep.total_inner:>7}{conjugacy(rep.blocks, Q):>12.1e}")


if __name__ == "__main__":
    main()
