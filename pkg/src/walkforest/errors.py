"""Exception and warning types."""


class DataError(ValueError):
    """Invalid input data: malformed files, inconsistent shapes, bad labels."""


class DataWarning(UserWarning):
    """Recoverable data issue (dropped rows, duplicate edges, unmatched columns)."""
