"""Exception hierarchy. Each family carries the CLI exit code it maps to."""


class HetOrdinalError(Exception):
    exit_code = 1
    code = "error"


class ConfigError(HetOrdinalError, ValueError):
    exit_code = 2
    code = "config_error"


class DataError(HetOrdinalError, ValueError):
    exit_code = 3
    code = "data_error"


class NumericError(HetOrdinalError, ArithmeticError):
    exit_code = 4
    code = "numeric_error"


# data problems
class EmptyDataset(DataError):
    code = "empty_dataset"


class DegenerateItem(DataError):
    code = "degenerate_item"


class SchemaMismatch(DataError):
    code = "schema_mismatch"


class UnseenCategory(DataError):
    code = "unseen_category"


class ParseError(DataError):
    code = "parse_error"

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class NonIntegerCell(ParseError):
    code = "non_integer_cell"


class AllRowsDropped(DataError):
    code = "all_rows_dropped"


class LengthMismatch(DataError):
    code = "length_mismatch"


class NodeSetMismatch(DataError):
    code = "node_set_mismatch"


class EmptyTestSet(DataError):
    code = "empty_test_set"


class NoMatchedClusters(DataError):
    code = "no_matched_clusters"


# configuration problems
class InvalidSpec(ConfigError):
    code = "invalid_spec"


class InvalidVariant(ConfigError):
    code = "invalid_variant"


# numeric problems
class DomainError(NumericError, ValueError):
    code = "domain_error"


class SingularDesign(NumericError):
    code = "singular_design"


class IoError(HetOrdinalError, OSError):
    """Failure to read an input or write an artifact."""

    code = "io_error"
