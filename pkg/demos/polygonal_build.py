"""Rebuild a product plan of the limit space as an M-polygonal plan on each
term of a refining segment sequence and print the build inequalities."""

from mmlagrange.ambient import GeodesicTemplate, refining_sequence
from mmlagrange.harness import product_plan, shipped_density_pairs
from mmlagrange.interpolation import build_polygonal_inf, build_polygonal_q
from mmlagrange.plans import ke_q, lip_const


def main():
    seq = refining_sequence(GeodesicTemplate("segment", (1.0,)), [8, 16, 32, 64], 128)
    _, mu0, mu1 = shipped_density_pairs(seq.limit)[1]
    eta = product_plan(mu0, mu1)
    print(f"eta: Ke_2 {ke_q(eta, 2):.5f}, Lip {lip_const(eta):.5f}")
    print(" M  n   sigma    bound    jensen lhs/rhs        Ke_2(result) <= bound")
    for M in (1, 2, 4):
        for n in range(len(seq)):
            b = build_polygonal_q(eta, seq, n, M, 2, "cd_general", K=-1)
            d = b.diagnostics
            ke = f"{d['ke_result']:.5f} <= {d['ke_bound']:.5f}" if b.feasible else "infeasible"
            print(f"{M:2d} {n:2d}  {d['sigma']:.5f}  {d['discarded_bound']:.5f}  "
                  f"{d['jensen_lhs']:.5f}/{d['jensen_rhs']:.5f}   {ke}")
    print("\n M  factor     Comp(result)  surrogate bound")
    for M in (1, 2, 4, 8):
        d = build_polygonal_inf(eta, seq, 3, M, "cd", K=-4).diagnostics
        print(f"{M:2d}  {d['factor']:.6f}  {d['comp_result']:.4f}       {d['comp_surrogate_bound']:.4f}")


if __name__ == "__main__":
    main()
