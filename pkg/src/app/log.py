"""Root logger setup: rich console output, or one JSON object per line."""

from __future__ import annotations

import logging
import sys

from pythonjsonlogger.json import JsonFormatter
from rich.console import Console
from rich.logging import RichHandler

JSON_FIELDS = "%(asctime)s %(levelname)s %(name)s %(message)s"


def make_console(no_color: bool = False, stderr: bool = False) -> Console:
    if no_color:
        return Console(stderr=stderr, color_system=None, no_color=True, highlight=False)
    return Console(stderr=stderr)


def setup_logging(level: str = "INFO", fmt: str = "rich", no_color: bool = False) -> None:
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    if fmt == "json":
        handler: logging.Handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(JsonFormatter(JSON_FIELDS))
    else:
        handler = RichHandler(
            console=make_console(no_color, stderr=True),
            show_path=False,
            markup=False,
            rich_tracebacks=False,
        )
    root.addHandler(handler)
    root.setLevel(level)
    # joblib workers and matplotlib are chatty at DEBUG
    logging.getLogger("matplotlib").setLevel(max(logging.INFO, root.level))
