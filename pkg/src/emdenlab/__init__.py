"""Numerical study of the planar Lane-Emden problem ``Delta u = u^p`` for large ``p``."""
from .bubbles import (BubbleAnalyzer, EIGHT_PI_E, SQRT_E, aitken, average_inequality,
                      detect_peaks, extract_bubble, extrapolate, liouville_profile,
                      liouville_residual, quantization_report)
from .elliptic import (DiscreteLaplacian, apply_laplacian, laplacian_matrix, solve_laplace,
                       solve_poisson, solve_spd)
from .exceptions import EmdenLabError, NumericalFailure, UsageError
from .geometry import (DomainSpec, Grid, GridField, build_grid, circle_average,
                       field_from_function, quadrature, read_field, sample_bilinear,
                       write_field)
from .greenfn import (GreenSolver, KRConfiguration, convloc_check, green, kr_gradient,
                      kr_stationary, robin_map)
from .lane_emden import (LaneEmdenSolver, SolutionRecord, SolveParams, continue_in_p,
                         newton_refine, record_from_radial, solve_minimizer)
from .radial import RadialOracle, RadialSolution, oracle_sweep, shoot

__version__ = "0.1.0"
