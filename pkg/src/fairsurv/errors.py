"""Exception types shared across the package.

The CLI maps these onto stable exit codes: config problems exit 2,
data/parse problems exit 3, degenerate statistics exit 4. Plain
``ValueError`` is used for caller contract violations (bad arguments)
and also maps to exit 2.
"""


class FairsurvError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(FairsurvError):
    """Invalid or incomplete run configuration (schema config file, flags)."""


class SchemaError(FairsurvError):
    """Input data does not match the declared schema (e.g. missing column)."""


class ParseError(FairsurvError):
    """A cell or row of an input file could not be parsed.

    ``row`` is the 1-based data-row number (header excluded), or None when
    the error is not tied to a specific row.
    """

    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class DegenerateStatisticError(FairsurvError):
    """A statistic is undefined on the given input (zero variance, empty
    pair set, vanishing weights) and no meaningful value can be returned."""


class ModelFormatError(FairsurvError):
    """A model file is corrupt or has an unsupported format version."""
