"""Sub-Nyquist spectrum estimation and compressive recovery of line spectra.

Modules
-------
multicoset
    Multi-coset sampler and correlogram estimate of per-segment power.
corranalysis
    Analytical mean and covariance of that estimate for white input.
spectralcs
    Root-MUSIC based iterative recovery of sinusoids from ``y = Phi x + w``.
crb
    Cramer-Rao bound for the same measurement model.
experiments, cli
    Seeded Monte Carlo harness and command-line front end.
"""

from .errors import (
    ArtifactIOError,
    BoundsError,
    ConfigurationError,
    DegenerateSubspaceError,
    NumericalError,
    SingularityError,
    StructuralError,
    SubNyquistError,
)

__version__ = "0.1.0"
