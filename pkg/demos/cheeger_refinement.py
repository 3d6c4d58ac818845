"""Cheeger energies of x and x^2 on refining uniform segment spaces.

Ch_2(x) is 1 on every space; Ch_2(x^2) sits above 4/3 by roughly 2.6/n
because the largest one-sided slope is taken at every point.
"""

from mmlagrange.ambient import GeodesicTemplate, discretize
from mmlagrange.calculus import SpaceFunction, cheeger_p, total_variation


def main():
    seg = GeodesicTemplate("segment", (1.0,))
    print("   n   Ch2(x)    Ch2(x^2)   gap to 4/3   TV(x^2)")
    for n in (8, 16, 32, 64, 128, 256, 512):
        s = discretize(seg, n)
        f = SpaceFunction.from_callable(s, lambda x: x[:, 0])
        g = SpaceFunction.from_callable(s, lambda x: x[:, 0] ** 2)
        ch = cheeger_p(g, 2)
        print(f"{n:4d}  {cheeger_p(f, 2):.6f}  {ch:.6f}   {ch - 4 / 3:+.5f}     {total_variation(g):.5f}")


if __name__ == "__main__":
    main()
