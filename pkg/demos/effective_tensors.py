"""Cell problems and effective tensors, against the 1-d closed forms.

The corrector problem renormalizes the conductance D = pi B^{-1} of the fast
medium into slow-scale tensors.  In 1-d the answer has a closed form
B_bar = pi_bar * int B/pi dy, which makes a sharp oracle for the discrete
solves; in 2-d the variational route double-checks the tensor route.
"""

import numpy as np

from wgfh import cell
from wgfh import media as md

# -- 1-d sinusoidal medium ------------------------------------------------
mob = md.MobilityTensor.from_expr("2+sin(2*pi*y)", bounds=(1, 3))
flat = md.Medium(mob, md.StationaryDensity.constant(1.0))

eff = cell.effective_tensors(flat, ycells=256)
oracle = cell.closed_form_mobility_1d(flat)
print("flat density:      B_bar =", eff.mobility_scalar(), " closed form =", oracle)

# the equality medium pi = sqrt(B): effective mobility collapses to the
# squared mean of sqrt(B)
eq = md.Medium(mob, md.StationaryDensity.general("sqrt(2+sin(2*pi*y))"))
eff_eq = cell.effective_tensors(eq, ycells=256)
print("pi = sqrt(B):      B_bar =", eff_eq.mobility_scalar(),
      " closed form =", cell.closed_form_mobility_1d(eq))

# vanishing-oscillation density: pi0 scales out of the cell problem exactly
for pi0 in ("1", "3"):
    den = md.StationaryDensity.uniform(pi0, "0.25*sin(2*pi*y)")
    effu = cell.effective_tensors_uniform_case(md.Medium(mob, den), ycells=256)
    print(f"uniform pi0={pi0}:", "B_bar =", effu.mobility_scalar(),
          " pi_bar =", effu.pi_bar[0])

# -- layered medium: harmonic-mean conductance ----------------------------
layered = md.Medium(md.MobilityTensor.layered([1.0, 3.0]), md.StationaryDensity.constant(1.0))
sol = cell.solve_cell(layered, ycells=64)
print("\nlayered {1,3}: corrector gradient takes the two exact slab values",
      sorted(set(np.round(sol.grad[0], 12))))
print("effective flux :", cell.effective_tensors(layered, ycells=64).flux_tensor()[0, 0],
      " (harmonic mean of D = 1/2)")

# -- 2-d full tensor: tensor route vs variational route -------------------
b11 = "2 + 0.3*sin(2*pi*y1) + 0.2*cos(2*pi*y2)"
b22 = "2 + 0.25*cos(2*pi*y1)"
b12 = "0.3*sin(2*pi*y1)*sin(2*pi*y2)"
mob2 = md.MobilityTensor.from_expr([[b11, b12], [b12, b22]], bounds=(0.9, 3.1), dim=2)
med2 = md.Medium(mob2, md.StationaryDensity.constant(1.0, dim=2))
eff2 = cell.effective_tensors(med2, ycells=64)
print("\n2-d effective flux tensor:\n", eff2.flux_tensor())
for p in ([1.0, 0.0], [0.0, 1.0], [1.0, 1.0]):
    p = np.asarray(p)
    tensor_route = float(p @ eff2.flux_tensor() @ p)
    variational = cell.effective_tensor_variational(med2, p=p, ycells=64)
    print(f"  p={p}:  tensor {tensor_route:.12f}  variational {variational:.12f}")
