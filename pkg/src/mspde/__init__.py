"""Randomized domain decomposition for multiscale PDEs.

Local solution spaces of homogenizable problems are approximately
low-rank once boundary layers are pushed into a buffer zone; this
package sketches them by solving local problems with random Gaussian
boundary data and couples the patches through a least-squares
transmission system. Two models are instantiated: the 1D slab transport
equation with Henyey-Greenstein scattering and a 2D divergence-form
elliptic equation with oscillatory or high-contrast media.
"""

from ._version import __version__
from .elliptic import (EllipticField, EllipticPatch, MediaSpec, media_eval,
                       msfem_basis, solve_local_elliptic, trace_elliptic)
from .framework import (EllipticParams, GlobalSolution, GlobalSystem,
                        LocalBasis, Partition, RteParams, SolutionField,
                        assemble_global, basis_subspace_error,
                        det_local_basis, offline_bases, partition,
                        ran_local_basis, relative_error, solve_global)
from .linalg import (RngStream, SvdResult, kolmogorov_width, numerical_rank,
                     projection_error, qr, randomized_range,
                     solve_least_squares, spectral_norm, svd)
from .rte import (CollisionSpec, InflowData, RteField, RtePatch, VelocityGrid,
                  collision_kernel, solve_local_rte, trace_rte)

__all__ = [
    "__version__",
    "CollisionSpec", "EllipticField", "EllipticParams", "EllipticPatch",
    "GlobalSolution", "GlobalSystem", "InflowData", "LocalBasis", "MediaSpec",
    "Partition", "RngStream", "RteField", "RteParams", "RtePatch",
    "SolutionField", "SvdResult", "VelocityGrid",
    "assemble_global", "basis_subspace_error", "collision_kernel",
    "det_local_basis", "kolmogorov_width", "media_eval", "msfem_basis",
    "numerical_rank", "offline_bases", "partition", "projection_error", "qr",
    "ran_local_basis", "randomized_range", "relative_error",
    "solve_global", "solve_least_squares", "solve_local_elliptic",
    "solve_local_rte", "spectral_norm", "svd", "trace_elliptic", "trace_rte",
]
