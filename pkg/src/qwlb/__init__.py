"""qwlb: unitary stream-collide lattice solvers for Dirac dynamics.

The package is organized around one generic engine (``walk``: shift plus
per-site 2x2 coin) that the concrete schemes instantiate:

``fields``       lattices, spinor fields, packets, observables, checkpoints
``coin``         coin constructors and exact parameter maps between the
                 mass-matrix and Euler-angle representations
``walk``         the stream-collide engine, plain and with residency
``solvers``      flat-space schemes (split / qlb / naive), dispersion,
                 convergence measurements
``equilibrium``  propagation-relaxation form and zero-mode detection
``curved``       finite-volume scheme for space-dependent advection speed
``multid``       (2+1)-D four-component solver with impurities and a
                 quartic self-interaction
``harness``      experiment configs, dispatch, CSV/checkpoint outputs
``cli``          the ``qwlb`` command-line entry point
"""

__version__ = "0.1.0"
