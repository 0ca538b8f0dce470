from __future__ import annotations

from typing import Iterable


def mask_secret(value: str | None, keep_last: int = 4) -> str:
    if not value:
        return "<empty>"
    if len(value) <= keep_last * 4:
        return "<masked>"
    return "<masked>..." + value[-keep_last:]


def short_id(raw: bytes, keep: int = 4) -> str:
    # enough of a sender id to correlate log lines, not enough to enumerate accounts
    return raw[:keep].hex()


def redact_text(text: str, secrets: Iterable[str]) -> str:
    for s in secrets:
        if s and s in text:
            text = text.replace(s, mask_secret(s))
    return text
