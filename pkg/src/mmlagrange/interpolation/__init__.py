"""Density transfer, gated corrections, polygonal builders and curvature
certificates."""

from .correction import CorrectionResult, LegPaths, correct_chain
from .curvature import (CompressionBound, DimensionOneWarning, c_kn, c_kn_grid, cd_infty_bound,
                        check_cd_convexity, check_mcp_inequality, entropy, mcp_bound, renyi, tau)
from .polygonal import (Ball, PolygonalBuild, approx_density, build_polygonal_inf, build_polygonal_q,
                        chebyshev_gate, enclosing_ball, grid_marginals, jensen_sides,
                        submarginal_correction, winf_marginal_transfer)
