"""Steady-state cascade operators for LTI systems.

Sylvester-equation machinery for cascade interconnections: the primal and
dual steady-state cascade operators with their rank/solvability test
batteries, moment parameterizations, a catalog of cascade stabilizer and
estimator design pathways, moment-matching model reduction with structural
certificates, and an invariance-based observer for cascades driven by a
nonlinear signal generator.
"""

from ._backend import backend_name
from .errors import SscError

__version__ = "0.1.0"

__all__ = ["backend_name", "SscError", "__version__"]
