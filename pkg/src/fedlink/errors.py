"""Exception hierarchy shared by every fedlink module."""


class FedlinkError(Exception):
    """Base class for all engine errors."""


class UnknownColumn(FedlinkError):
    pass


class SchemaMismatch(FedlinkError):
    pass


class CellTypeError(FedlinkError, TypeError):
    """A cell could not be parsed; carries the 1-based data row and column name."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class DuplicateIdentifier(FedlinkError):
    pass


class InvalidConfig(FedlinkError):
    pass


class IdentifierConflict(FedlinkError):
    pass


class UnknownIdentifier(FedlinkError):
    pass


class SpecSyntax(FedlinkError):
    pass


class ArityViolation(FedlinkError):
    pass


class LookupMiss(FedlinkError):
    pass


class CombinerMissing(FedlinkError):
    pass


class UnknownConditionType(FedlinkError):
    pass


class BadParams(FedlinkError):
    pass


class AccessDenied(FedlinkError):
    pass


class DuplicateAssetId(FedlinkError):
    pass


class UnknownAssetId(FedlinkError):
    pass


class ScriptSyntax(FedlinkError):
    pass
