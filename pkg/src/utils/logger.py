"""
Logging module for the calibration toolkit
Console logging on standard error, optional dated log files, tagged helpers
"""

import logging
from datetime import datetime
from pathlib import Path
from config import config


class CalibrationLogger:
    """Centralized logging for engines, harness and CLI"""

    _instances = {}
    _level_override = None
    _shared_handlers = []

    def __init__(self, name="wavecal"):
        self.name = name
        self.logger = logging.getLogger(name)
        self.logger.setLevel(self._level())
        self.logger.propagate = False

        # Prevent duplicate handlers
        if not self.logger.handlers:
            self._setup_handlers()
        for handler in self._shared_handlers:
            if handler not in self.logger.handlers:
                self.logger.addHandler(handler)

    @classmethod
    def _level(cls):
        return getattr(logging, cls._level_override or config.LOG_LEVEL)

    @classmethod
    def get_logger(cls, name="wavecal"):
        """Get or create logger instance"""
        if name not in cls._instances:
            cls._instances[name] = cls(name)
        inst = cls._instances[name]
        lg = inst.logger
        # Attach proxy methods for the tagged helpers
        if not hasattr(lg, 'log_generation'):
            lg.log_generation = lambda data, _inst=inst: _inst.log_generation(data)
        if not hasattr(lg, 'log_evaluation'):
            lg.log_evaluation = lambda data, _inst=inst: _inst.log_evaluation(data)
        if not hasattr(lg, 'log_run'):
            lg.log_run = lambda data, _inst=inst: _inst.log_run(data)
        return lg

    @classmethod
    def set_level(cls, level: str):
        """Apply a level to every logger created so far and to future ones"""
        level = level.upper()
        if not hasattr(logging, level):
            raise ValueError(f"Unknown log level: {level}")
        cls._level_override = level
        for inst in cls._instances.values():
            inst.logger.setLevel(getattr(logging, level))
            for handler in inst.logger.handlers:
                if handler not in cls._shared_handlers:
                    handler.setLevel(getattr(logging, level))

    @classmethod
    def add_handler(cls, handler: logging.Handler):
        """Attach a handler (e.g. a run directory log) to all loggers, present and future"""
        cls._shared_handlers.append(handler)
        for inst in cls._instances.values():
            inst.logger.addHandler(handler)

    @classmethod
    def remove_handler(cls, handler: logging.Handler):
        if handler in cls._shared_handlers:
            cls._shared_handlers.remove(handler)
        for inst in cls._instances.values():
            inst.logger.removeHandler(handler)

    def _setup_handlers(self):
        """Setup console and file handlers"""
        formatter = logging.Formatter(config.LOG_FORMAT)

        # Console handler (stderr)
        console_handler = logging.StreamHandler()
        console_handler.setLevel(self._level())
        console_handler.setFormatter(formatter)
        self.logger.addHandler(console_handler)

        if config.LOG_TO_FILE:
            log_dir = Path(config.LOG_DIR)
            log_dir.mkdir(parents=True, exist_ok=True)

            today = datetime.now().strftime("%Y-%m-%d")
            file_handler = logging.FileHandler(log_dir / f"wavecal_{today}.log")
            file_handler.setLevel(self._level())
            file_handler.setFormatter(formatter)
            self.logger.addHandler(file_handler)

    def log_generation(self, data):
        """Per-generation progress of an evolutionary run"""
        self.logger.info(f"GENERATION | {data}")

    def log_evaluation(self, data):
        """Single objective evaluation (debug volume)"""
        self.logger.debug(f"EVALUATION | {data}")

    def log_run(self, data):
        """Completed calibration run"""
        self.logger.info(f"RUN | {data}")


def set_log_level(level: str):
    """Shortcut used by the CLI --log-level flag"""
    CalibrationLogger.set_level(level)
