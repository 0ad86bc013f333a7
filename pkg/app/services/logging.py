# app/services/logging.py

import json
import logging
import logging.handlers
import sys
from datetime import datetime, timezone
from typing import Optional

from app.core.config import Settings, get_settings


class RunFormatter(logging.Formatter):
    """Console format; records without a run id show '-'."""

    def format(self, record):
        if not hasattr(record, "run_id"):
            record.run_id = "-"
        return super().format(record)


class JsonFormatter(logging.Formatter):
    def __init__(self, **kwargs):
        super().__init__()
        self.default_fields = kwargs

    def format(self, record):
        json_record = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "logger": record.name,
            "level": record.levelname,
            "message": record.getMessage(),
            "module": record.module,
            "line": record.lineno
        }

        if record.exc_info:
            json_record["exception"] = self.formatException(record.exc_info)
        if hasattr(record, "run_id"):
            json_record["run_id"] = record.run_id

        json_record.update(self.default_fields)
        return json.dumps(json_record)


_HANDLER_TAG = "_unmix_handler"


def setup_logging(settings: Optional[Settings] = None, level: Optional[str] = None, json_console: Optional[bool] = None):
    """Configure the root logger; calling it again replaces earlier handlers."""
    settings = settings or get_settings()
    level = (level or settings.LOG_LEVEL).upper()
    json_console = settings.LOG_JSON if json_console is None else json_console

    json_formatter = JsonFormatter(app_name=settings.PROJECT_NAME, version=settings.VERSION)
    console_formatter = RunFormatter(
        "%(asctime)s - %(name)s - %(levelname)s - [%(run_id)s] - %(message)s"
    )

    root_logger = logging.getLogger()
    root_logger.setLevel(level)
    for handler in list(root_logger.handlers):
        if getattr(handler, _HANDLER_TAG, False):
            root_logger.removeHandler(handler)
            handler.close()

    # stderr keeps stdout free for command output
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(json_formatter if json_console else console_formatter)
    handlers = [console_handler]

    if settings.LOG_DIR is not None:
        settings.LOG_DIR.mkdir(parents=True, exist_ok=True)
        file_handler = logging.handlers.RotatingFileHandler(
            settings.LOG_DIR / "unmix.log",
            maxBytes=10485760,  # 10MB
            backupCount=5
        )
        file_handler.setFormatter(json_formatter)
        error_handler = logging.handlers.RotatingFileHandler(
            settings.LOG_DIR / "error.log",
            maxBytes=10485760,
            backupCount=5
        )
        error_handler.setLevel(logging.ERROR)
        error_handler.setFormatter(json_formatter)
        handlers += [file_handler, error_handler]

    for handler in handlers:
        setattr(handler, _HANDLER_TAG, True)
        root_logger.addHandler(handler)


def run_logger(name: str, run_id: str) -> logging.LoggerAdapter:
    """Logger stamping every record with the run id of one invocation."""
    return logging.LoggerAdapter(logging.getLogger(name), {"run_id": run_id})
