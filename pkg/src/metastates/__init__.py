"""Numerical laboratory for metastates of finite-type mean-field spin models
whose random fields are generated by a finite-state ergodic Markov chain.

Subpackages by concern:

* :mod:`metastates.markov` -- chain validation, stationary laws, sampling,
  occupation-time covariance (finite volume and limiting);
* :mod:`metastates.meanfield` -- free-energy functional, minimizer search,
  Hessians, stability vectors;
* :mod:`metastates.potts` -- closed forms for the random-field Potts model;
* :mod:`metastates.gibbs` -- exact finite-volume Gibbs laws of the total
  spin-count vector;
* :mod:`metastates.metastate` -- region classification, Gaussian and
  empirical weights, metastate estimators;
* :mod:`metastates.cli` -- command-line front end (``metastates``).
"""

from . import cli, errors, geometry, gibbs, markov, meanfield, metastate, potts

__version__ = "0.1.0"

__all__ = [
    "cli",
    "errors",
    "geometry",
    "gibbs",
    "markov",
    "meanfield",
    "metastate",
    "potts",
    "__version__",
]
