"""Exception hierarchy.

Every failure mode raised by the library derives from ``SscError`` so
callers (and the CLI) can distinguish design/numerics failures from
programming errors.
"""


class SscError(Exception):
    """Base class for all library errors."""


# --- matrix kernel errors -------------------------------------------------

class NonSquare(SscError):
    """A square matrix was required."""


class NumericalFailure(SscError):
    """A numerical routine failed to converge or returned garbage."""


class SpectraOverlap(SscError):
    """eig(A) and eig(F) are too close for a well-posed Sylvester solve."""


class NotHurwitz(SscError):
    """A Hurwitz matrix was required."""


class NotStabilizable(SscError):
    """The pair (A, B) is not stabilizable."""


class NotDetectable(SscError):
    """The pair (A, C) is not detectable."""


class RiccatiDivergence(SscError):
    """The algebraic Riccati equation could not be solved reliably."""


class DimensionMismatch(SscError):
    """Matrix dimensions are inconsistent."""


class ShapeMismatch(SscError):
    """Arguments of a batched operation do not share a common shape."""


# --- operator / design errors ---------------------------------------------

class Unsolvable(SscError):
    """A linear operator equation has no solution within tolerance."""


class RankConditionFailed(SscError):
    """A required rank (non-resonance) condition does not hold."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class NotSquarePlant(SscError):
    """The design pathway requires as many outputs as inputs (p == m)."""


class FNotNeutrallyStable(SscError):
    """eig(F) must lie in the closed left half-plane for low-gain designs."""


class NoEpsilonFound(SscError):
    """The low-gain sweep found no certifiable range of epsilon."""


# --- moments ----------------------------------------------------------------

class PoleAtPoint(SscError):
    """The expansion point coincides with an eigenvalue of A."""


class DefectiveUndeclared(SscError):
    """F appears defective but no block structure was declared."""


class IllConditioned(SscError):
    """An eigenstructure computation is too ill-conditioned to trust."""


# --- model reduction --------------------------------------------------------

class SingularPiHat(SscError):
    """The requested reduced-model coordinate change is singular."""


class SingularCrossGramian(SscError):
    """The two-sided product M @ Pi is singular."""


# --- nonlinear --------------------------------------------------------------

class TrajectoryEscape(SscError):
    """A backward orbit left the admissible bound before truncation."""


class NotConvergent(SscError):
    """A forward orbit did not approach the origin within the horizon."""


class ResidualTooLarge(SscError):
    """An invariance solution fails its residual validation."""


class O1Violated(SscError):
    """The monotone output factorization fails on the validation grid."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class O2Violated(SscError):
    """The differential detectability inequality fails on the grid."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class KappaTooSmall(SscError):
    """The observer gain scale kappa must dominate rho."""


class NonFinite(SscError):
    """A simulation produced NaN or Inf (blow-up)."""


# --- I/O --------------------------------------------------------------------

class ParseError(SscError):
    """A system file could not be parsed."""
