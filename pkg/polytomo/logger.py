"""
Logging and observability utilities
"""
import logging
import sys
from typing import Any, Dict, Optional

from polytomo.config import settings


class StructuredLogger:
    """Structured logging for better observability"""

    def __init__(self, name: str, component: Optional[str] = None, **context):
        self.logger = logging.getLogger(name)
        # polytomo.polytope -> component=polytope
        self.context: Dict[str, Any] = {"component": component or name.rsplit(".", 1)[-1], **context}
        self._setup_logger()

    def _setup_logger(self):
        """Configure logger with structured format"""
        # stdout is reserved for command results
        if not self.logger.handlers:
            handler = logging.StreamHandler(sys.stderr)
            formatter = logging.Formatter(
                '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
            )
            handler.setFormatter(formatter)
            self.logger.addHandler(handler)
            self.logger.propagate = False
        self.logger.setLevel(getattr(logging, settings.log_level.upper(), logging.INFO))
        self.logger.disabled = not settings.enable_logging

    def bind(self, **context) -> "StructuredLogger":
        """Child logger that adds context (e.g. kind, seed) to every record"""
        return StructuredLogger(self.logger.name, **{**self.context, **context})

    def info(self, message: str, **context):
        """Log info with context"""
        self._log(logging.INFO, message, context)

    def error(self, message: str, **context):
        """Log error with context"""
        self._log(logging.ERROR, message, context)

    def warning(self, message: str, **context):
        """Log warning with context"""
        self._log(logging.WARNING, message, context)

    def debug(self, message: str, **context):
        """Log debug with context"""
        self._log(logging.DEBUG, message, context)

    def render(self, message: str, context: Dict[str, Any]) -> str:
        merged = {**self.context, **context}
        return " | ".join([message] + [f"{k}={v}" for k, v in merged.items()])

    def _log(self, level: int, message: str, context: Dict[str, Any]):
        """Internal method to log with context"""
        if not self.logger.isEnabledFor(level):
            return
        self.logger.log(level, self.render(message, context))


def get_logger(name: str, **context) -> StructuredLogger:
    """Factory function to get logger instances"""
    return StructuredLogger(name, **context)
