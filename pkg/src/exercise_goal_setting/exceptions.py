"""Descriptive exceptions for the exercise_goal_setting package
"""

class GoalSettingError(Exception):
    pass


class DomainError(GoalSettingError, ValueError):
    """An input lies outside the domain of a model function."""
    pass


class ConfigError(GoalSettingError, ValueError):
    pass


class DataError(GoalSettingError):
    """Data are insufficient or inconsistent for the requested operation."""
    pass


class NoDataError(DataError):
    pass


class ParseError(DataError):
    """A file row could not be parsed.

    Args:
        message (str): what went wrong
        path (str, optional): the file being parsed
        line (int, optional): 1-based line number in the file, header included
    """

    def __init__(self, message: str, path: str = None, line: int = None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}"
        if line is not None:
            location = f"{location}:{line}" if location else f"line {line}"
        super().__init__(f"{location}: {message}" if location else message)


class TrainingError(GoalSettingError):
    """Training diverged.

    Args:
        message (str): diagnostic
        checkpoint (dict, optional): the last valid parameter tensors
        global_step (int, optional): the global step at which training stopped
    """

    def __init__(self, message: str, checkpoint: dict = None, global_step: int = None):
        self.checkpoint = checkpoint
        self.global_step = global_step
        super().__init__(message)


class PolicyError(GoalSettingError):
    """A policy failed to produce an action; the episode is aborted."""
    pass
