"""Numerical laboratory for stable self-similar blowup in the radial Keller-Segel system.

Submodules
----------
grids       radial grids, quadrature and the operators Δ, Λ, D^k
profiles    closed-form profiles, reduced mass, weighted norms, radial Fourier transform
spectral    half-line Schrödinger operators, SUSY partner, GGMT certificate, free semigroup
resolvent   the resolvent ODE for large λ by Frobenius series and asymptotic shooting
evolution   similarity-variable flow, shooting on the blowup time, physical-time runs
cli         command-line runs with persisted artifacts
"""

__version__ = "0.1.0"

from .grids import RadialField, RadialGrid, integrate, make_grid  # noqa: E402,F401
