"""Amortized Bayesian inversion with observation-conditioned transport maps.

The package learns maps T(u; y) that push a reference measure (the prior,
or the joint law of parameters and observations) to the posterior for any
observation y, by minimizing an averaged energy-distance objective over
joint samples.  Function-space problems use Cameron-Martin-structured maps
(identity plus a covariance-smoothed perturbation) so the pushforward stays
absolutely continuous with respect to the Gaussian prior.  Quadrature and
pCN MCMC oracles provide reference posteriors for validation.
"""

__version__ = "0.1.0"

from .grf import CovarianceSpec, GridField, ScalarPrior, SpectralCoeffs  # noqa: F401
from .transport import PosteriorEnsemble, TransportModel  # noqa: F401
