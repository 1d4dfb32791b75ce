# Configuration settings for facefuse
# Purpose: environment variables, runtime limits, and logging setup

import logging
import os
import sys

import torch
from dotenv import load_dotenv

load_dotenv()

# logging.getLevelNamesMapping() is Python 3.11+; it returns a copy of _nameToLevel
_level_names_mapping = getattr(
    logging, "getLevelNamesMapping", lambda: dict(logging._nameToLevel)
)


def _env_int(name: str, default: int) -> int:
    """Integer variable; unparsable or negative values fall back to default"""
    try:
        value = int(os.getenv(name, str(default)))
    except ValueError:
        return default
    return value if value >= 0 else default


class RuntimeSettings:
    """Process-wide runtime settings read from the environment (.env supported)

    Bad values fall back to defaults here; validate_environment() reports them.
    """

    def __init__(self):
        self.threads = _env_int("FACEFUSE_THREADS", 0)
        self.device = os.getenv("FACEFUSE_DEVICE", "cpu")
        level = os.getenv("FACEFUSE_LOG_LEVEL", "INFO").upper()
        self.log_level = level if level in _level_names_mapping() else "INFO"
        self.out_dir = os.getenv("FACEFUSE_OUT_DIR", "runs")

    def apply(self) -> None:
        """Cap worker parallelism; 0 keeps the torch default"""
        if self.threads > 0:
            torch.set_num_threads(self.threads)

    def worker_count(self) -> int:
        if self.threads > 0:
            return self.threads
        return max(1, os.cpu_count() or 1)


settings = RuntimeSettings()

_logging_configured = False


def configure_logging(level: str | None = None) -> None:
    global _logging_configured
    if _logging_configured and level is None:
        return
    logging.basicConfig(
        level=(level or settings.log_level),
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )
    _logging_configured = True


def get_logger(name: str) -> logging.Logger:
    configure_logging()
    return logging.getLogger(name)


# Environment Validation

def validate_environment() -> tuple[bool, list[str]]:
    """Validate facefuse environment variables"""
    issues = []

    try:
        if int(os.getenv("FACEFUSE_THREADS", "0")) < 0:
            issues.append("FACEFUSE_THREADS must be >= 0")
    except ValueError:
        issues.append("FACEFUSE_THREADS must be a valid integer")

    level = os.getenv("FACEFUSE_LOG_LEVEL", "INFO").upper()
    if level not in _level_names_mapping():
        issues.append(f"FACEFUSE_LOG_LEVEL is not a logging level: {level}")

    device = os.getenv("FACEFUSE_DEVICE", "cpu")
    if device.startswith("cuda") and not torch.cuda.is_available():
        issues.append(f"FACEFUSE_DEVICE={device} but CUDA is not available")

    return len(issues) == 0, issues
