"""Exception types shared across kellynet."""


class KellynetError(Exception):
    """Base class for all package errors."""


class ModelParseError(KellynetError):
    """A model file could not be read or does not follow the schema."""


class ModelValidationError(KellynetError):
    """A model was parsed but violates one or more invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class InstabilityError(KellynetError):
    """The normalizing series of at least one node diverges."""

    def __init__(self, message, nodes=()):
        self.nodes = tuple(nodes)
        super().__init__(message)


class ReducibleChainError(KellynetError):
    """A closed-network chain is not irreducible, so its traffic solution is not unique."""


class StateSpaceTooLargeError(KellynetError):
    """Enumeration would exceed the configured state cap."""

    def __init__(self, message, count):
        self.count = count
        super().__init__(message)
