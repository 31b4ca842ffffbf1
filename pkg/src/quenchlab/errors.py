"""Shared exception types.

Validation problems (bad parameters, malformed profiles, geometry that cannot
be meshed) raise ValidationError; mid-run failures of the integrator (NaN,
CFL violation) raise NumericalAbort.  The CLI maps these to exit codes 1 and 2.
"""


class QuenchlabError(Exception):
    pass


class ValidationError(QuenchlabError):
    """Bad input caught before any expensive work starts."""


class NumericalAbort(QuenchlabError):
    """The integrator produced NaN or violated its stability bound."""
