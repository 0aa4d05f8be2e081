"""Exception hierarchy shared by every module of the package."""


class UavRiskError(Exception):
    """Base class for all package errors."""


class ValidationError(UavRiskError, ValueError):
    """Invalid input, configuration or file content."""


class NonPositiveDimension(ValidationError):
    pass


class NonDivisibleExtent(ValidationError):
    pass


class OutOfBounds(ValidationError, IndexError):
    pass


class DimensionMismatch(ValidationError):
    pass


class MissingDistrict(ValidationError):
    pass


class NonPositiveEnergy(ValidationError):
    pass


class NonPositiveHeight(ValidationError):
    pass


class ZeroMaximum(ValidationError):
    """A risk component is identically zero, so it cannot be normalized."""

    def __init__(self, component: str):
        super().__init__(f"component '{component}' has zero maximum over unoccupied cells")
        self.component = component


class InvalidConfig(ValidationError):
    pass


class ParseError(ValidationError):
    """Malformed scenario / map file. ``field`` names the offending entry."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.field = field
        self.line = line


class SchemaVersionMismatch(ParseError):
    pass


class NoPath(UavRiskError):
    """Destination is unreachable through unoccupied (or open) cells."""


class EmptyDominantSet(ValidationError):
    pass


class EmptyOpenSet(ValidationError):
    pass


class DegenerateGroup(ValidationError):
    pass
