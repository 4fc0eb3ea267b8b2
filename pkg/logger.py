import time
from enum import Enum
from pathlib import Path
from threading import Lock
from typing import Optional


class LogLevel(Enum):
    """Enumeration for logging levels."""
    DEBUG = 0
    INFO = 1
    WARN = 2
    ERROR = 3


class LogConfig:
    """Configuration object for logging."""

    def __init__(
            self,
            log_file: Optional[Path] = None,
            log_dir: Optional[Path] = None,
            level: LogLevel = LogLevel.INFO,
            console_print: bool = True,
    ):
        """
        Initialize the log configuration.

        Args:
            log_file: Path to the log file. If None, nothing is written to disk.
            log_dir: Path to the log directory. Will be created if it doesn't exist.
            level: Logging level (DEBUG, INFO, WARN, ERROR). Defaults to INFO.
            console_print: Echo log lines to the console. Defaults to True.
        """
        self.log_file = log_file
        self.log_dir = log_dir
        self.level = level
        self.console_print = console_print


class Logger:
    """
    Writes leveled, timestamped log lines with trailing key=value fields.

    Training workers share one instance, so writes are serialized by a lock.
    """

    def __init__(self, config: LogConfig):
        """
        Initialize the logger with a LogConfig object.

        Args:
            config: LogConfig object containing logging configuration.
        """
        self.config = config
        self._lock = Lock()

        if self.config.log_dir:
            self._create_log_directory(self.config.log_dir)

    @classmethod
    def null(cls) -> "Logger":
        """Returns a logger that neither writes files nor prints."""
        return cls(LogConfig(level=LogLevel.ERROR, console_print=False))

    def log_error(self, message: str, **fields) -> None:
        """
        Logs an error message.

        Args:
            message: The error message to log.
            **fields: Structured context rendered as key=value pairs.
        """
        if self.config.level.value <= LogLevel.ERROR.value:
            self._log("ERROR", message, fields)

    def log_info(self, message: str, **fields) -> None:
        """
        Logs an info message.

        Args:
            message: The info message to log.
            **fields: Structured context rendered as key=value pairs.
        """
        if self.config.level.value <= LogLevel.INFO.value:
            self._log("INFO", message, fields)

    def log_warning(self, message: str, **fields) -> None:
        """
        Logs a warning message.

        Args:
            message: The warning message to log.
            **fields: Structured context rendered as key=value pairs.
        """
        if self.config.level.value <= LogLevel.WARN.value:
            self._log("WARN", message, fields)

    def log_debug(self, message: str, **fields) -> None:
        """
        Logs a debug message (only if the level is DEBUG).

        Args:
            message: The debug message to log.
            **fields: Structured context rendered as key=value pairs.
        """
        if self.config.level.value <= LogLevel.DEBUG.value:
            self._log("DEBUG", message, fields)

    @staticmethod
    def format_fields(fields: dict) -> str:
        """
        Renders structured fields as sorted key=value pairs.

        Floats are printed with six significant digits so log lines stay short.
        """
        parts = []
        for key in sorted(fields):
            value = fields[key]
            if isinstance(value, float):
                value = f"{value:.6g}"
            parts.append(f"{key}={value}")
        return " ".join(parts)

    def _log(self, log_type: str, message: str, fields: dict) -> None:
        """
        Internal method to handle all logging with consistent formatting.

        Args:
            log_type: The type of log (ERROR, INFO, WARN, DEBUG).
            message: The message to log.
            fields: Structured context for the line.
        """
        log_message = f"{log_type} - {self._timemark()}: {message}"
        if fields:
            log_message += " " + self.format_fields(fields)

        with self._lock:
            if self.config.log_file:
                with open(self.config.log_file, 'a') as f:
                    f.write(log_message + "\n")

            if self.config.console_print:
                print(log_message)

    def _create_log_directory(self, log_dir: Path) -> None:
        """
        Creates the log directory if it doesn't exist.

        Args:
            log_dir: Path to the log directory.
        """
        if not log_dir.exists():
            log_dir.mkdir(parents=True, exist_ok=True)
            if self.config.level.value <= LogLevel.DEBUG.value and self.config.console_print:
                print(f"[DEBUG] Created log directory: {log_dir}")

    @staticmethod
    def _timemark() -> str:
        """Returns the current time formatted as a string in GMT."""
        return time.strftime("%d %b %Y %H:%M:%S", time.gmtime())
