"""W_q for growing q against the bottleneck distance, and the kinetic
energy of the lifted plans, on a small segment space."""

import numpy as np

from mmlagrange.ambient import Density, GeodesicTemplate, discretize
from mmlagrange.plans import ke_q, lip_const
from mmlagrange.transport import good_infty_plan, lift_to_dynamical, optimal_coupling_q, winf


def main():
    space = discretize(GeodesicTemplate("segment", (1.0,)), 9)
    mu0 = Density.from_masses(space, np.array([3, 1, 0, 0, 0, 0, 0, 0, 0]) / 4)
    mu1 = Density.from_masses(space, np.array([0, 0, 0, 0, 1, 1, 0, 1, 1]) / 4)
    w = winf(mu0, mu1)
    print(f"W_inf = {w.value:.6f}  (lift Lip = {lip_const(lift_to_dynamical(w)):.6f})")
    print(" q      W_q        Ke_q(lift)^(1/q)")
    for q in (2, 4, 8, 16, 32, 64):
        res = optimal_coupling_q(mu0, mu1, q)
        ke = ke_q(lift_to_dynamical(res), q) ** (1 / q)
        print(f"{q:3d}  {res.value:.6f}   {ke:.6f}")
    g = good_infty_plan(mu0, mu1, [2, 4, 8, 16])
    for r in g.rows:
        print(f"q={r['q']:>3}: discarded {r['discarded']:.4f} (bound {1 / r['q']:.4f})")
    print(f"good plan Lip {g.lip:.6f} <= {w.value * 16 ** (1 / 16):.6f}")


if __name__ == "__main__":
    main()
