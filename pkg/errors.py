"""
Error types for the DDIPNet pipeline
Every error carries the CLI exit code it maps to
"""

from typing import Optional


class PipelineError(Exception):
    """Base class for all pipeline failures"""
    exit_code = 1


class ConfigError(PipelineError):
    """Invalid or inconsistent configuration"""
    exit_code = 1


class DimensionError(PipelineError):
    """Shape mismatch between operands"""
    exit_code = 1


class ContractError(PipelineError):
    """Operation called outside its preconditions"""
    exit_code = 1


class DataError(PipelineError):
    """Problems with the supplied data"""
    exit_code = 2


class DatasetError(DataError):
    """Dataset cannot support the requested operation"""


class ParseError(DataError):
    """Malformed feature CSV"""

    def __init__(self, message: str, row: Optional[int] = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class LoadError(DataError):
    """File that cannot be read or decoded"""

    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        if path is not None:
            message = f"{path}: {message}"
        super().__init__(message)


class ReportError(DataError):
    """Output artifact could not be written"""


class NumericError(PipelineError):
    """NaN/Inf or other numeric breakdown"""
    exit_code = 3


class TrainingError(NumericError):
    """Non-finite state detected during optimization"""

    def __init__(self, message: str, step: Optional[int] = None, parameter: Optional[str] = None):
        self.step = step
        self.parameter = parameter
        details = []
        if step is not None:
            details.append(f"step {step}")
        if parameter is not None:
            details.append(f"parameter '{parameter}'")
        if details:
            message = f"{message} ({', '.join(details)})"
        super().__init__(message)


class ExperimentError(PipelineError):
    """A run failed; aborts the whole experiment"""

    def __init__(self, run_index: int, cause: Exception):
        self.run_index = run_index
        self.cause = cause
        self.exit_code = getattr(cause, 'exit_code', 1)
        super().__init__(f"run {run_index} failed: {cause}")
