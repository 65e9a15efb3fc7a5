class PackedAdtError(Exception):
    """Base class for every error raised by packedadt"""
    exit_code = 3


class ValidationError(PackedAdtError):
    """Bad input: schema text, values, programs, container headers"""
    exit_code = 2


class RuntimeFault(PackedAdtError):
    """Failure while allocating, traversing or evaluating"""
    exit_code = 3


class FuzzFailure(PackedAdtError):
    exit_code = 4


class ConfigError(ValidationError):
    pass


class InvalidArgument(ValidationError):
    pass


# schema

class SchemaError(ValidationError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        """
        :param message: What went wrong
        :param line: 1-based line of the offending statement, if known
        :param column: 1-based column, if known
        """
        self.line = line
        self.column = column
        if line is not None:
            message = f"{line}:{column or 1}: {message}"
        super().__init__(message)


class SchemaSyntaxError(SchemaError):
    pass


class DuplicateDatatype(SchemaError):
    pass


class DuplicateConstructor(SchemaError):
    pass


class UnknownDatatype(SchemaError):
    pass


class TooManyConstructors(SchemaError):
    pass


class FieldOrderViolation(SchemaError):
    pass


class UnsupportedFieldType(SchemaError):
    pass


class InfiniteShape(SchemaError):
    pass


class FactoredInsideFlat(SchemaError):
    pass


# regions

class RegionError(RuntimeFault):
    pass


class InvalidChunkSize(ValidationError):
    pass


class OutOfMemory(RegionError):
    pass


class NotAtFrontier(RegionError):
    pass


class UseAfterFree(RegionError):
    pass


class DoubleWrite(RegionError):
    pass


class OutlinkOrderViolation(RegionError):
    pass


# layout

class LayoutError(RuntimeFault):
    pass


class SchemaMismatch(ValidationError):
    pass


class IntegerOutOfRange(SchemaMismatch):
    pass


class CorruptTag(LayoutError):
    pass


class TruncatedBuffer(LayoutError):
    pass


class LayoutMismatch(LayoutError):
    pass


class FeatureDisabled(LayoutError):
    pass


class DanglingPatch(LayoutError):
    pass


class ContainerError(ValidationError):
    pass


class BadMagic(ContainerError):
    pass


class VersionMismatch(ContainerError):
    pass


class SchemaHashMismatch(ContainerError):
    pass


class TruncatedFile(ContainerError):
    pass


# traversal

class TraversalError(RuntimeFault):
    pass


class StackDepthExceeded(TraversalError):
    pass


class PassNotFound(ValidationError):
    pass


class PassDefinitionError(ValidationError):
    pass


# socal

class SocalError(ValidationError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{line}:{column or 1}: {message}"
        super().__init__(message)


class SocalSyntaxError(SocalError):
    pass


class UnboundName(SocalError):
    pass


class TypecheckFailed(ValidationError):
    def __init__(self, rejection):
        self.rejection = rejection
        super().__init__(str(rejection))


class Stuck(RuntimeFault):
    def __init__(self, rule: str, detail: str, state=None):
        self.rule = rule
        self.detail = detail
        self.state = state
        super().__init__(f"stuck in {rule}: {detail}")


class IllFormedStore(RuntimeFault):
    pass


# bench

class UnknownSuite(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass
