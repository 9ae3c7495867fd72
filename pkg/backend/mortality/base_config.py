"""
Base configuration and logging utilities for the mortality forecast toolkit
"""

# Standard library imports
import json
import logging
from datetime import datetime
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Optional

# Third-party imports
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict
from rich.logging import RichHandler

ACTIVITY_LOGGER_NAME = "activity"

_HANDLER_MARKER = "_mortality_handler"


class Settings(BaseSettings):
    """Runtime settings, read from MORTALITY_* environment variables and an optional .env file"""

    model_config = SettingsConfigDict(env_prefix="MORTALITY_", env_file=".env", extra="ignore")

    log_directory: Path = Field(default=Path("logs"), description="Directory for log files")
    log_level: str = Field(default="INFO", description="Console log level")
    storage_directory: Path = Field(default=Path("./storage"), description="Default output directory")
    database_url: Optional[str] = Field(
        default=None, description="SQLAlchemy URL; when set, activities and predictions are mirrored to SQL"
    )
    n_jobs: int = Field(default=1, ge=1, description="Worker threads for forests and evaluation repetitions")
    watch_interval_seconds: float = Field(default=86400.0, gt=0, description="Batch scorer re-scan interval")
    default_seed: int = Field(default=0, description="Seed used when a command gets none")


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Cached settings instance"""
    return Settings()


def setup_logging(settings: Optional[Settings] = None, quiet: bool = False) -> logging.Logger:
    """Setup console, file and activity logging for a CLI run"""
    settings = settings or get_settings()
    log_dir = Path(settings.log_directory)
    log_dir.mkdir(parents=True, exist_ok=True)

    detailed_formatter = logging.Formatter(
        '%(asctime)s | %(levelname)-8s | %(name)-20s | %(funcName)-15s | %(message)s'
    )

    root_logger = logging.getLogger()
    root_logger.setLevel(logging.DEBUG)

    # Re-running setup (tests, repeated main() calls) must not stack handlers
    for handler in list(root_logger.handlers):
        if getattr(handler, _HANDLER_MARKER, False):
            root_logger.removeHandler(handler)
            handler.close()
    activity_logger = logging.getLogger(ACTIVITY_LOGGER_NAME)
    for handler in list(activity_logger.handlers):
        if getattr(handler, _HANDLER_MARKER, False):
            activity_logger.removeHandler(handler)
            handler.close()

    console_handler = RichHandler(show_path=False, rich_tracebacks=True)
    console_handler.setLevel(logging.WARNING if quiet else settings.log_level.upper())

    file_handler = logging.FileHandler(log_dir / 'mortality_forecast.log')
    file_handler.setLevel(logging.DEBUG)
    file_handler.setFormatter(detailed_formatter)

    activity_handler = logging.FileHandler(log_dir / 'pipeline_activities.log')
    activity_handler.setLevel(logging.INFO)
    activity_handler.setFormatter(detailed_formatter)

    for handler in (console_handler, file_handler, activity_handler):
        setattr(handler, _HANDLER_MARKER, True)

    root_logger.addHandler(console_handler)
    root_logger.addHandler(file_handler)
    activity_logger.addHandler(activity_handler)

    return root_logger


def log_activity(component: str, activity: str, details: Optional[Dict[str, Any]] = None, level: str = "info"):
    """Structured activity logging, mirrored to the database when one is configured"""
    timestamp = datetime.now()
    details = details or {}

    log_entry = {
        "timestamp": timestamp.isoformat(),
        "component": component,
        "activity": activity,
        "details": details
    }

    activity_logger = logging.getLogger(ACTIVITY_LOGGER_NAME)

    details_str = json.dumps(details, indent=None, separators=(',', ':'), default=str) if details else ""
    message = f"[{component}] {activity}"
    if details_str:
        message += f" | {details_str}"

    log_method = getattr(activity_logger, level.lower(), activity_logger.info)
    log_method(message)

    database_url = get_settings().database_url
    if database_url:
        try:
            store_activity_in_db(database_url, component, activity, details, timestamp)
        except Exception as e:
            activity_logger.warning(f"Failed to store activity in database: {e}")

    return log_entry


def store_activity_in_db(database_url: str, component: str, activity: str,
                         details: Dict[str, Any], timestamp: datetime):
    """Store one activity row in the pipeline_activity table"""
    from database import ActivityLog, session_scope

    with session_scope(database_url) as db:
        db.add(ActivityLog(
            component=component,
            activity_type=activity,
            activity_details=json.dumps(details, default=str) if details else None,
            timestamp=timestamp
        ))


def log_processing_step(component: str, step: str, details: Optional[Dict[str, Any]] = None):
    """Log a pipeline step with its context"""
    step_details = {"step": step}
    if details:
        step_details.update(details)

    log_activity(component, f"Processing Step: {step}", step_details)


def log_performance_metrics(component: str, operation: str, duration_ms: float,
                            details: Optional[Dict[str, Any]] = None):
    """Log operation timing for monitoring"""
    perf_details = {
        "operation": operation,
        "duration_ms": round(duration_ms, 3),
        "performance_category": "slow" if duration_ms > 5000 else "normal" if duration_ms > 1000 else "fast"
    }
    if details:
        perf_details.update(details)

    level = "warning" if duration_ms > 60000 else "info"
    log_activity(component, f"Performance: {operation}", perf_details, level)


def log_error(component: str, operation: str, error: Exception, context: Optional[Dict[str, Any]] = None):
    """Log an error with its full context"""
    error_details = {
        "operation": operation,
        "error_type": type(error).__name__,
        "error_message": str(error),
        "context": context or {}
    }

    log_activity(component, f"Error: {operation}", error_details, "error")
