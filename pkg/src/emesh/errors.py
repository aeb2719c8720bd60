"""Exception hierarchy shared by every emesh module."""


class EmeshError(Exception):
    pass


class AddressRangeError(EmeshError, ValueError):
    """A coordinate or offset does not fit the configured address layout."""


class MalformedAddressError(EmeshError, ValueError):
    """Reserved address bits [63:50] are nonzero."""


class MalformedPacketError(EmeshError, ValueError):
    pass


class ContractError(EmeshError):
    """A caller violated an operation's precondition."""


class UnroutableError(EmeshError):
    """Destination lies outside the configured mesh or chip array."""


class ConfigError(EmeshError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class IncompleteError(EmeshError):
    """A litmus table is missing one or more rows."""
