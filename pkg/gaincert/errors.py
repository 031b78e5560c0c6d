"""Exceptions raised by gaincert.

Everything derives from ValueError so callers that only know about bad input
values keep working; infeasible programs and failed checks are results, not
exceptions.
"""


class GainCertError(ValueError):
    """Base class for all gaincert errors."""


class InvalidRegionError(GainCertError):
    """The requested region or mesh parameters cannot produce a valid mesh."""


class DegenerateSimplexError(GainCertError):
    """A simplex is (numerically) affinely dependent."""


class OutOfRegionError(GainCertError):
    """A point lies outside the triangulated region."""


class ModelError(GainCertError):
    """A system model violates f(0) = 0, g(0) = 0 or h(0) = 0, or is malformed."""


class InvalidOracleError(GainCertError):
    """A Hessian-magnitude oracle returned a negative or non-finite value."""


class InvalidBoundError(GainCertError):
    """Negative bound constants passed to an error-bound routine."""


class ModeMismatchError(GainCertError):
    """CPA-only analysis requested for a model with a nonzero constant input matrix."""


class CompileError(GainCertError):
    """Constraints reference decision variables outside the layout."""


class PreconditionError(GainCertError):
    """A precondition of the analysis or oracle does not hold."""


class ConfigError(GainCertError):
    """Malformed or inconsistent run configuration."""
