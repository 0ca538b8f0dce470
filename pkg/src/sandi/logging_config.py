from __future__ import annotations

import logging
from pathlib import Path
from typing import Iterable

from sandi.redact import redact_text


class SecretRedactFilter(logging.Filter):
    """Masks registered secret values in the rendered message of every record."""

    def __init__(self, secrets: Iterable[str] = ()) -> None:
        super().__init__()
        self._secrets: set[str] = {s for s in secrets if s}

    def add(self, secret: str | None) -> None:
        if secret:
            self._secrets.add(secret)

    def filter(self, record: logging.LogRecord) -> bool:
        if not self._secrets:
            return True
        message = record.getMessage()
        redacted = redact_text(message, self._secrets)
        if redacted != message:
            record.msg, record.args = redacted, None
        return True


_redact_filter = SecretRedactFilter()


def register_secret(secret: str | None) -> None:
    _redact_filter.add(secret)


def setup_logging(
    level: str = "INFO",
    log_file: Path | None = None,
    secrets: Iterable[str] = (),
) -> None:
    handlers: list[logging.Handler] = [logging.StreamHandler()]

    if log_file is not None:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file, encoding="utf-8"))

    for s in secrets:
        _redact_filter.add(s)
    for h in handlers:
        h.addFilter(_redact_filter)

    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s | %(levelname)s | %(name)s | %(message)s",
        handlers=handlers,
        force=True,
    )
