"""A cheap skeleton the averaged tensor cannot see.

The 2-d medium is worth beta inside the cells of an eps-lattice and alpha on
the lattice lines themselves, a measure-zero set.  Shortest paths run along
the skeleton and converge to the anisotropic limit sqrt(alpha) |v|_1, while
the cell problem only sees beta and reports the isotropic distance
sqrt(beta) |v|_2: averaging and path-finding disagree in the limit.
"""

import numpy as np

from wgfh import cell, metrics
from wgfh import media as md

alpha, beta = 0.25, 1.0
source, target = (0.0, 0.0), (1.0, 1.0)

print(f"skeleton weight alpha = {alpha}, interior weight beta = {beta}")
print(f"{'eps':>10} {'spacing':>10} {'graph geodesic':>15} {'Finsler limit':>14}")
for eps in (1 / 8, 1 / 16, 1 / 32, 1 / 64):
    grid = metrics.GeodesicGrid2D(eps=eps, alpha=alpha, beta=beta, source=source)
    val = metrics.checkerboard_geodesic(grid, target)
    lim = metrics.finsler_limit(alpha, source, target)
    print(f"{eps:>10.5f} {grid.spacing:>10.5f} {val:>15.8f} {lim:>14.8f}")

# generic target: richer paths help, refinement never increases the distance
generic = (0.625, 0.875)
print(f"\ngeneric target {generic}, eps = 1/8, refining the lattice:")
for spacing in (1 / 64, 1 / 128, 1 / 256):
    grid = metrics.GeodesicGrid2D(eps=1 / 8, alpha=alpha, beta=beta, spacing=spacing)
    print(f"  spacing {spacing:<10.6f} geodesic {metrics.checkerboard_geodesic(grid, generic):.8f}")

# the averaged tensor: the skeleton is invisible to the cell problem
mob = md.MobilityTensor.checkerboard(alpha=alpha, beta=beta)
eff = cell.effective_tensors(md.Medium(mob, md.StationaryDensity.constant(1.0, dim=2)),
                             ycells=32)
d_bar = metrics.d_bar(eff.B_bar[0], source, target)
print(f"\naveraged-tensor distance sqrt(<B_bar v, v>) = {d_bar:.8f}"
      f"  (= sqrt(2 beta) = {np.sqrt(2 * beta):.8f})")
print("strictly larger than the geodesic limit", metrics.finsler_limit(alpha, source, target))
