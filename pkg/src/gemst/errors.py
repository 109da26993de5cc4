"""Exception types raised across the engine."""


class ShapeError(ValueError):
    """Tensor extents do not fit the requested operation."""


class GroupingError(ValueError):
    """Temporal grouping is not a partition of the exponential bases."""


class ContractError(ValueError):
    """A precondition that the caller is responsible for was violated."""


class UnsupportedAmplitudeError(ValueError):
    """A spike operand carries an amplitude that is not a signed power of two."""


class MalformedTrainError(ValueError):
    """A spike train holds entries outside the binary (or signed) alphabet."""


class ConfigError(ValueError):
    """Model configuration is syntactically or structurally invalid."""


class WeightFileError(Exception):
    """Base class for weight container failures."""


class BadMagicError(WeightFileError):
    pass


class VersionError(WeightFileError):
    pass


class TruncatedFileError(WeightFileError):
    pass


class MissingEntryError(WeightFileError):
    def __init__(self, name):
        super().__init__(f"missing weight entry: {name}")
        self.name = name


class ShapeConflictError(WeightFileError):
    def __init__(self, name, expected, found):
        super().__init__(f"entry {name}: expected shape {tuple(expected)}, found {tuple(found)}")
        self.name = name
        self.expected = tuple(expected)
        self.found = tuple(found)


class UnexpectedEntryError(WeightFileError):
    def __init__(self, name):
        super().__init__(f"unexpected weight entry: {name}")
        self.name = name


class ConfigMismatchError(WeightFileError):
    pass


class InputError(ValueError):
    """Input images are missing, malformed or the wrong size."""
