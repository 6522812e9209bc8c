"""
WAVECAL Error Types
Every error carries the process exit status the CLI reports for it:
1 configuration, 2 input format, 3 model or run failure
"""

from typing import Optional


class CalibrationError(Exception):
    """Base class for all toolkit errors"""

    exit_code = 3


class ConfigError(CalibrationError):
    """Invalid configuration or request"""

    exit_code = 1


class BoundsError(ConfigError):
    """Parameter bounds are malformed or exclude the default configuration"""


class EmptyRequestError(ConfigError):
    """A request for zero items where at least one is required"""


class InputFormatError(CalibrationError):
    """An input file or in-memory series has the wrong format"""

    exit_code = 2


class ShapeError(InputFormatError):
    """Arrays or series with inconsistent dimensions"""


class ModelRunError(CalibrationError):
    """The wave model or a calibration run failed"""

    exit_code = 3


class ExternalModelError(ModelRunError):
    """External model process exited with a nonzero status"""

    def __init__(self, message: str, command: str = "", returncode: Optional[int] = None,
                 stdout: str = "", stderr: str = ""):
        self.command = command
        self.returncode = returncode
        self.stdout = stdout
        self.stderr = stderr
        details = message
        if returncode is not None:
            details += f" (exit {returncode})"
        if stderr.strip():
            details += f"\n--- stderr ---\n{stderr.strip()}"
        super().__init__(details)


class ModelTimeoutError(ModelRunError):
    """External model process exceeded its time limit"""


class EvaluationError(ModelRunError):
    """Objective evaluation failed for a genotype"""

    def __init__(self, message: str, genotype=None, member: Optional[int] = None):
        self.genotype = genotype
        self.member = member
        super().__init__(message)


class UndefinedBaselineError(ModelRunError):
    """Relative improvement against a zero baseline error"""


class ExperimentAbortedError(ModelRunError):
    """Too many failed runs in an experiment"""
