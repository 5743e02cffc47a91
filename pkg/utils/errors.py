class KGPlannerError(Exception):
    """Base error. `exit_code` is what the command line returns for it."""

    exit_code = 3

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


# --- input errors ---

class MappingError(KGPlannerError):
    exit_code = 2


class MappingSyntaxError(MappingError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"Turtle syntax error{where}: {message}")
        self.line = line
        self.column = column


class UnknownVocabularyError(MappingError):
    def __init__(self, iris):
        self.iris = sorted(str(i) for i in iris)
        super().__init__("Unsupported mapping vocabulary: " + ", ".join(self.iris))


class MissingLogicalSourceError(MappingError):
    pass


class UnsupportedFormulationError(MappingError):
    pass


class VacuousObjectMapError(MappingError):
    pass


class DanglingReferenceError(MappingError):
    pass


class MissingJoinConditionError(MappingError):
    pass


class ConfigError(KGPlannerError):
    exit_code = 2


class CostModelError(KGPlannerError):
    exit_code = 2


class EnumerationLimitError(KGPlannerError):
    exit_code = 2


# --- execution errors ---

class ExecutionError(KGPlannerError):
    exit_code = 3


class MissingColumnError(ExecutionError):
    def __init__(self, source: str, columns):
        self.source = source
        self.columns = sorted(columns)
        super().__init__(f"Source {source} lacks column(s): {', '.join(self.columns)}")


class SourceReadError(ExecutionError):
    pass


class LeafTimeoutError(ExecutionError):
    def __init__(self, group_id: str, seconds: float):
        self.group_id = group_id
        self.seconds = seconds
        super().__init__(f"Group {group_id} timed out after {seconds:g}s")


class PlanSoundnessError(ExecutionError):
    def __init__(self, triple: str, node: str | None = None):
        self.triple = triple
        self.node = node
        at = f" at {node}" if node else ""
        super().__init__(f"NDR union{at} received overlapping inputs; shared triple: {triple}")


# --- verification ---

class VerificationError(KGPlannerError):
    exit_code = 4
