# contracts.py
# Data contracts shared by the accountability server, the clients and the CLI.
# Principle: the server state holds only what scoring needs (id, credential hash,
# score, report counter, reported commitments). Messages, openings and receiver
# addresses never cross into these types.

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Dict, Optional

if TYPE_CHECKING:
    from sandi.scorekit import Score

# -----------------------------
# Common enums and error values
# -----------------------------


class Severity(str, Enum):
    WARNING = "warning"
    ERROR = "error"


class SourceSystem(str, Enum):
    SCORE = "score"
    CRYPTO = "crypto"
    SERVER = "server"
    STORAGE = "storage"
    CLIENT = "client"
    SIM = "sim"
    CONFIG = "config"


@dataclass(frozen=True)
class AppError:
    """Uniform error/warning value for the server, clients and CLI."""

    code: str  # e.g. "AUTH_BAD_CREDENTIAL", "TAG_TRUNCATED", "GAME_INVALID"
    source: SourceSystem
    severity: Severity
    message: str
    details: Optional[Dict[str, str]] = None  # diagnostics only, never secrets


class SandiError(RuntimeError):
    """Base exception; carries an AppError so callers can render or map it."""

    code = "SANDI_ERROR"
    source = SourceSystem.SERVER

    def __init__(self, message: str, *, code: str | None = None, **details: str) -> None:
        super().__init__(message)
        self.error = AppError(
            code=code or self.code,
            source=self.source,
            severity=Severity.ERROR,
            message=message,
            details=dict(details) or None,
        )

    @property
    def reason(self) -> str:
        return self.error.code


class ConfigError(SandiError):
    code = "CONFIG_INVALID"
    source = SourceSystem.CONFIG


class ParameterError(SandiError):
    code = "PARAMETER_INVALID"
    source = SourceSystem.SCORE


class DecodeError(SandiError):
    """Malformed wire bytes; `field` names the first field that failed."""

    code = "DECODE_FAILED"
    source = SourceSystem.CRYPTO

    def __init__(self, message: str, *, field: str) -> None:
        super().__init__(message, field=field)
        self.field = field


class DecryptError(SandiError):
    """Authenticated decryption failed: forged or corrupted ciphertext."""

    code = "DECRYPT_FAILED"
    source = SourceSystem.CRYPTO


class AuthError(SandiError):
    code = "AUTH_FAILED"


class RequestError(SandiError):
    code = "REQUEST_INVALID"


class StorageError(SandiError):
    code = "STORAGE_FAILED"
    source = SourceSystem.STORAGE


class ProtocolError(SandiError):
    """Client-side verification failure: the tag or the server cannot be trusted."""

    code = "PROTOCOL_FAILED"
    source = SourceSystem.CLIENT

    def __init__(self, message: str, *, reason: str, **details: str) -> None:
        super().__init__(message, reason=reason, **details)
        self._reason = reason

    @property
    def reason(self) -> str:
        # "commitment", "signature", "decode", "vk_changed", "transport", "server"
        return self._reason


class InvalidGameSpec(SandiError):
    code = "GAME_INVALID"
    source = SourceSystem.SIM


class InstanceTooLarge(SandiError):
    code = "GAME_TOO_LARGE"
    source = SourceSystem.SIM


# -----------------------------
# Reports
# -----------------------------


class RejectReason(str, Enum):
    DECODE = "decode"
    SIGNATURE = "signature"
    DECRYPT = "decrypt"
    EXPIRED = "expired"
    REPLAY = "replay"


@dataclass(frozen=True)
class ReportOutcome:
    accepted: bool
    reason: Optional[RejectReason] = None

    @classmethod
    def ok(cls) -> ReportOutcome:
        return cls(accepted=True)

    @classmethod
    def rejected(cls, reason: RejectReason) -> ReportOutcome:
        return cls(accepted=False, reason=reason)


# -----------------------------
# Server-side state (owned by the state store, mutated under its lock)
# -----------------------------


@dataclass
class SenderAccount:
    """
    One registered sender. `x` is the report counter of the running epoch,
    reset to zero at every epoch boundary.
    """

    sender_id: bytes  # 16 random bytes, never derived from an address
    credential_hash: str  # sha256 hex of the bearer credential
    sc: Score
    x: int = 0
    created_epoch: int = 0


@dataclass
class EpochState:
    """
    index grows by one per advance. started_at / previous_started_at are whole
    seconds; a tag is inside the report window iff tau >= previous_started_at
    (or >= started_at when there is no previous epoch).
    """

    index: int
    started_at: int
    duration_secs: int
    previous_started_at: Optional[int] = None
    # com -> tau of its accepted tag; pruned with the same tau >= window_start rule as expiry
    seen_commitments: Dict[bytes, int] = field(default_factory=dict)

    @property
    def window_start(self) -> int:
        if self.previous_started_at is None:
            return self.started_at
        return self.previous_started_at


@dataclass(frozen=True)
class EpochSummary:
    epoch: int
    updated: int
