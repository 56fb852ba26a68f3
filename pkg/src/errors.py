"""Exception hierarchy. Each error knows the CLI exit code it maps to."""

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class LcfrsError(Exception):
    exit_code = EXIT_DATA


class ShapeError(LcfrsError):
    """Tensor shapes disagree with the declared dimensions or ranks."""


class TreeStructureError(LcfrsError):
    """A tree violates block/child invariants or uses a rule outside the inventory."""


class InputError(LcfrsError):
    """Bad sentence, out-of-vocabulary id, or malformed input data."""


class DiscbracketParseError(InputError):
    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        prefix = f"line {line_no}: " if line_no is not None else ""
        super().__init__(prefix + message)


class FormatError(InputError):
    """Binary container has the wrong magic, version or layout."""


class EnumerationRefused(InputError):
    """Brute-force enumeration refused for a sentence that is too long."""


class RejectionError(LcfrsError):
    """Sampler exhausted its attempts; callers resample with a new seed."""


class NoParseError(LcfrsError):
    """The grammar assigns zero probability to the sentence."""


class NumericError(LcfrsError):
    exit_code = EXIT_NUMERIC

    def __init__(self, message: str, where: str | None = None):
        self.where = where
        super().__init__(f"{message} ({where})" if where else message)


class ConfigError(LcfrsError):
    exit_code = EXIT_USAGE
