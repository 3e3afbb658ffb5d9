"""
Shared plumbing of the IDD management commands
"""
import json
import logging
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from idd_monitor.exceptions import ConfigError, IDDError

logger = logging.getLogger('benchmarks')


def load_json(path) -> dict:
    """Read a JSON config file; unreadable or malformed files are config errors"""
    try:
        payload = json.loads(Path(path).read_text(encoding='utf-8'))
    except OSError as exc:
        raise ConfigError(f"Cannot read {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}")
    if not isinstance(payload, dict):
        raise ConfigError(f"{path} must hold a JSON object")
    return payload


class IDDCommand(BaseCommand):
    """Runs ``execute_command`` and reports IDD errors with their exit codes"""

    def execute_command(self, *args, **options):
        raise NotImplementedError

    def handle(self, *args, **options):
        try:
            return self.execute_command(*args, **options)
        except IDDError as exc:
            logger.error(f"{type(exc).__name__}: {exc}")
            raise CommandError(f"{type(exc).__name__}: {exc}", returncode=exc.exit_code)
