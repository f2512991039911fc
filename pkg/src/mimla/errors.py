"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes, so library code should raise the most
specific type that applies rather than bare ValueError.
"""


class MimlaError(Exception):
    """Base class for all package errors."""


class ContractViolation(MimlaError):
    """An argument breaks a documented precondition (shape, range, order)."""


class DataError(MimlaError):
    """A dataset, model file, or prediction file is structurally invalid."""


class NumericFailure(MimlaError):
    """A computation left the representable range (e.g. likelihood underflow)."""


class ZeroLikelihoodError(NumericFailure):
    """A bag cannot generate its own label set, so its likelihood is zero.

    Under the union assumption a bag needs at least one instance per labelled
    class; fewer instances than labels makes every assignment inconsistent.
    """
