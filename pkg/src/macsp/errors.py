"""Exception hierarchy shared by all modules."""


class MacspError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(MacspError, ValueError):
    """An input object violates its invariants (bad pmf, bad alphabet, ...)."""


class EnumerationCapError(MacspError):
    """An exhaustive enumeration would exceed the configured item cap."""

    def __init__(self, what, projected, cap):
        self.what = what
        self.projected = projected
        self.cap = cap
        super().__init__(
            f"{what}: projected {projected} items exceeds cap {cap}; "
            f"reduce n / codebook sizes or raise the cap"
        )


class InvalidCodeError(MacspError, ValueError):
    """A multiuser code is malformed or violates an operation's precondition."""


class HypothesisError(MacspError, ValueError):
    """The hypothesis of a lemma-backed operation does not hold."""


class RepairError(MacspError):
    """The repair construction found no eligible replacement."""
