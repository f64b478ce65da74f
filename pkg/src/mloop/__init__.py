"""Momentum loop dynamics, the Euler ensemble and loop-functional estimators.

Submodules
----------
loops           spatial / momentum polygons, circulation sums, tensor areas, spokes loops
mle             discrete momentum loop equation, integration, residuals
euler_ensemble  star-polygon random walks and their sampler
number_theory   totients, coprime pairs, the cot^2 distribution law
observables     Monte Carlo loop functional, vorticity correlators, dissipation
rotation        global-rotation solution (polygonal Fourier construction)
init_measure    noisy initial data and the polygonal W-measure
cli             the ``mloop`` command line
"""

__version__ = "0.1.0"
