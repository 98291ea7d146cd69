"""Exception hierarchy shared by every diax module."""


class DiaxError(Exception):
    """Base class for all diax errors."""


class MalformedDocument(DiaxError, ValueError):
    pass


class SchemaViolation(DiaxError, ValueError):
    """A document parsed as JSON but breaks the DIAX layout.

    ``path`` is the key path of the offending node (e.g. ``"cgm"`` or
    ``"metadata.cgm.unit"``) and ``code`` the matching validation code.
    """

    def __init__(self, path, message, code="SCHEMA"):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
        self.code = code


class TimestampError(DiaxError, ValueError):
    pass


class InvariantViolation(DiaxError, ValueError):
    pass


class BadFilename(DiaxError, ValueError):
    pass


class BadComponent(DiaxError, ValueError):
    pass


class IoFailure(DiaxError, OSError):
    pass


class SpecError(DiaxError, ValueError):
    def __init__(self, path, message):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class ColumnMissing(DiaxError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class RowError(DiaxError, ValueError):
    """One or more source rows could not be converted.

    ``errors`` holds ``(table, row_number, message)`` tuples; row numbers
    are 1-based data rows (the header is row 0).
    """

    def __init__(self, errors):
        self.errors = list(errors)
        head = "; ".join(f"{t} row {r}: {m}" for t, r, m in self.errors[:5])
        more = f" (+{len(self.errors) - 5} more)" if len(self.errors) > 5 else ""
        super().__init__(f"{len(self.errors)} bad row(s): {head}{more}")


class TableError(DiaxError, ValueError):
    pass


class BadProfile(DiaxError, ValueError):
    pass


class BadRange(DiaxError, ValueError):
    pass


class PolicyMismatch(DiaxError, ValueError):
    pass


class NegativeRate(DiaxError, ValueError):
    pass


class UnknownKey(DiaxError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class EmptySignal(DiaxError, ValueError):
    pass


class NoData(DiaxError, ValueError):
    pass


class EmptyCohort(DiaxError, ValueError):
    pass


class BinMismatch(DiaxError, ValueError):
    pass


class EmptyProfile(DiaxError, ValueError):
    pass


class EmptySeries(DiaxError, ValueError):
    pass


class UnknownMetric(DiaxError, ValueError):
    pass
