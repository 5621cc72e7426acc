"""Exception types raised across the package."""


class TreescreenError(Exception):
    """Base class for all package errors."""


class SchemaError(TreescreenError):
    pass


class DuplicateItemId(SchemaError):
    pass


class UnknownColumn(TreescreenError):
    pass


class UnknownItem(TreescreenError):
    pass


class CodeOutOfRange(TreescreenError):
    def __init__(self, row, item, code):
        super().__init__(f"code {code!r} not a declared level of item {item!r} (row {row})")
        self.row = row
        self.item = item
        self.code = code


class MissingValue(TreescreenError):
    def __init__(self, row, item):
        super().__init__(f"missing value for item {item!r} at row {row} (complete cases required)")
        self.row = row
        self.item = item


class InvalidFactorDim(TreescreenError):
    pass


class DegenerateMarginal(TreescreenError):
    pass


class AcceptanceTooLow(TreescreenError):
    pass


class UnknownConditioningVar(TreescreenError):
    pass


class SingleClassOutcome(TreescreenError):
    pass


class InvalidConfig(TreescreenError):
    pass


class InsufficientData(TreescreenError):
    pass


class InvalidCount(TreescreenError):
    pass


class DegenerateTruths(TreescreenError):
    pass


class EmptyPopulation(TreescreenError):
    pass


class EmptyGrid(TreescreenError):
    pass
