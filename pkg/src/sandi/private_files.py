from __future__ import annotations

import os
from pathlib import Path


def write_private_text(path: Path, data: str) -> None:
    """Replaces `path` with `data`; the file is 0600 from the moment it exists."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    # a tmp left by a crash may carry looser bits; O_EXCL only creates fresh
    tmp.unlink(missing_ok=True)
    fd = os.open(tmp, os.O_WRONLY | os.O_CREAT | os.O_EXCL, 0o600)
    with os.fdopen(fd, "w", encoding="utf-8") as f:
        f.write(data)
        f.flush()
        os.fsync(f.fileno())
    tmp.replace(path)
