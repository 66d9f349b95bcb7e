"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: usage errors exit 1, ``DataError`` and
its subclasses exit 2, ``NumericError`` exits 3.
"""


class DataError(ValueError):
    """Malformed, inconsistent, or unresolvable input data."""


class FormatError(DataError):
    """Corrupt or mis-declared file contents (bad magic, truncation, ...)."""


class TaxonomyMismatch(DataError):
    """A trained model's taxonomy differs from the evaluation taxonomy.

    In grid-style evaluation this is recorded as an ``X`` cell instead of
    being raised.
    """


class NumericError(RuntimeError):
    """Non-finite values or other failed numeric invariants at runtime."""
