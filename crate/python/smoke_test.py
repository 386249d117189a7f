"""Smoke test for the lssem_py extension.

Build first:
    cargo build -p lssem-py --release
    cp target/release/liblssem_py.so python/lssem_py.so
"""
import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import lssem_py  # noqa: E402


def dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def main():
    x, w = lssem_py.gll_nodes(5)
    assert abs(sum(w) - 2.0) < 1e-14
    assert x[0] == -1.0 and x[-1] == 1.0
    _, w = lssem_py.gauss_nodes(4)
    assert abs(sum(w) - 2.0) < 1e-14

    s = lssem_py.half_seminorm_matrix(6)
    assert max(abs(sum(row)) for row in s) < 1e-12

    prob = lssem_py.Problem(1, 6)
    assert prob.case_id == 1 and prob.w == 6
    n = prob.n_dofs
    assert n == 4 * 3 * 7 * 7

    exact = prob.interpolate_exact()
    assert prob.errors(exact)["E_u"] < 1e-3

    u = [math.sin(k) for k in range(n)]
    v = [math.cos(3 * k) for k in range(n)]
    au, av = prob.normal_action(u), prob.normal_action(v)
    assert abs(dot(au, v) - dot(u, av)) <= 1e-10 * abs(dot(au, v))
    assert dot(au, u) > 0.0

    sol, rep = prob.solve()
    assert rep["converged"] == 1.0, rep
    assert rep["E_u"] < 1e-4, rep
    assert prob.functional(sol) <= prob.functional(exact)
    assert len(prob.normal_rhs()) == n

    reps = lssem_py.sweep(2, [3, 4, 5], re=10.0)
    errs = [r["E_u"] for r in reps]
    assert errs == sorted(errs, reverse=True), errs

    try:
        lssem_py.Problem(9, 4)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown case accepted")

    print(f"smoke test ok: case 1 W=6 E_u={rep['E_u']:.3e} in {int(rep['iters'])} iterations")


if __name__ == "__main__":
    main()
