"""Exception types shared by all modules."""


class MineregError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(MineregError, ValueError):
    """Input data or parameters violate a documented invariant."""


class ContractViolation(MineregError, ValueError):
    """A caller broke an operation's precondition (bounds, signs, lengths)."""
