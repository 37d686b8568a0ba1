"""Exception hierarchy.

Every error carries an ``exit_code`` so the command-line layer can map
failures onto its contract: 2 for validation problems, 3 for numerical
failures, 4 for non-convergence.
"""

from __future__ import annotations


class SafError(Exception):
    """Base class for all library errors."""

    exit_code = 2


class ValidationError(SafError):
    """Bad input: shapes, domains, file contents, preconditions."""

    exit_code = 2


class NumericalError(SafError):
    """A computation failed numerically (breakdown, divergence, NaN)."""

    exit_code = 3


# --- graph-core -------------------------------------------------------------

class EmptyEdgeSet(ValidationError):
    pass


class DegenerateLabels(ValidationError):
    pass


# --- spectra ----------------------------------------------------------------

class DimensionTooLarge(ValidationError):
    pass


class NotSymmetric(ValidationError):
    pass


class BreakdownNotRecovered(NumericalError):
    pass


class InvalidMode(ValidationError):
    pass


# --- filters ----------------------------------------------------------------

class OutOfDomain(ValidationError):
    pass


class AllZeroCoefficients(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


# --- newgraph ---------------------------------------------------------------

class MisalignedBasis(ValidationError):
    pass


class NonPositiveTau(ValidationError):
    pass


class NegativeEpsilon(ValidationError):
    pass


class PartialBasisUnsupported(ValidationError):
    pass


class NoSurvivingEdges(ValidationError):
    pass


# --- model ------------------------------------------------------------------

class ShapeMismatch(ValidationError):
    pass


class NonPositiveDelta(ValidationError):
    pass


# --- train ------------------------------------------------------------------

class EmptyMask(ValidationError):
    pass


class NonFiniteValue(NumericalError):
    pass


class DivergedRun(NumericalError):
    pass


class InfeasibleScheme(ValidationError):
    pass


# --- data-io ----------------------------------------------------------------

class MissingFile(ValidationError):
    pass


class BadLabel(ValidationError):
    pass


class MalformedSplit(ValidationError):
    pass


# --- cli --------------------------------------------------------------------

class MissingCheckpoint(ValidationError):
    pass


class NotConverged(SafError):
    """An iteration did not reach its fixed point (contraction violated)."""

    exit_code = 4
