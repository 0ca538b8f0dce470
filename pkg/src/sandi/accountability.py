# src/sandi/accountability.py
"""
Accountability server (AS) use-case layer.

- Port (Protocol) for the state store; the file adapter lives in adapters/
- Orchestration of the AS flows: register -> issue tag -> ingest report -> advance epoch
- Server keys (K for sender-id encryption, Ed25519 sk/vk for tags)

Locking: one lock guards accounts, the epoch and the store. Crypto work on the request
path (signing, signature check, decryption) runs outside it; the counter increment,
the replay check and the log append run inside it, and advance_epoch holds it for the
whole score sweep, so no report interleaves with an epoch transition.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import secrets
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Protocol, Tuple

import numpy as np
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from sandi import tagcrypt
from sandi.adapters.state_store_file import FileStateStore, LoadedState
from sandi.config import Settings
from sandi.contracts import (
    AppError,
    AuthError,
    DecodeError,
    DecryptError,
    EpochState,
    EpochSummary,
    RejectReason,
    ReportOutcome,
    RequestError,
    SenderAccount,
    StorageError,
)
from sandi.private_files import write_private_text
from sandi.redact import short_id
from sandi.scorekit import (
    ZERO,
    ReputationConfig,
    Score,
    ScoreParams,
    noised_update,
    reputation,
    reputation_index,
)
from sandi.tagcrypt import EndorsementTag, RandBytes

log = logging.getLogger(__name__)

CREDENTIAL_BYTES = 32

# -----------------------------
# Ports
# -----------------------------


class StateStore(Protocol):
    def load(self) -> Tuple[LoadedState, List[AppError]]: ...

    def append(self, event: Dict[str, Any]) -> None: ...

    def write_snapshot(self, state: Dict[str, Any]) -> None: ...

    def close(self) -> None: ...


# -----------------------------
# Keys
# -----------------------------


@dataclass(frozen=True)
class ServerKeys:
    """K and sk never leave the server; vk is published."""

    enc_key: bytes
    sk: Ed25519PrivateKey
    admin_token: str | None = None

    @property
    def vk(self) -> Ed25519PublicKey:
        return self.sk.public_key()

    @classmethod
    def generate(cls, admin_token: str | None = None) -> ServerKeys:
        return cls(
            enc_key=tagcrypt.generate_encryption_key(),
            sk=tagcrypt.generate_signing_key(),
            admin_token=admin_token,
        )

    @classmethod
    def load_or_create(cls, path: Path, admin_token: str | None = None) -> ServerKeys:
        if path.exists():
            data = json.loads(path.read_text(encoding="utf-8"))
            return cls(
                enc_key=base64.b64decode(data["K"]),
                sk=Ed25519PrivateKey.from_private_bytes(base64.b64decode(data["sk"])),
                admin_token=admin_token,
            )

        keys = cls.generate(admin_token)
        raw_sk = keys.sk.private_bytes_raw()
        write_private_text(
            path, json.dumps({"K": tagcrypt.b64e(keys.enc_key), "sk": tagcrypt.b64e(raw_sk)})
        )
        log.info("generated new server keys at %s", path)
        return keys


def hash_credential(credential: str) -> str:
    return hashlib.sha256(credential.encode("utf-8")).hexdigest()


def _token_ok(given: str | None, expected: str | None) -> bool:
    if not given or not expected:
        return False
    return secrets.compare_digest(given.encode("utf-8"), expected.encode("utf-8"))


# -----------------------------
# Use cases
# -----------------------------


class AccountabilityServer:
    def __init__(
        self,
        *,
        keys: ServerKeys,
        params: ScoreParams,
        reputation_cfg: ReputationConfig,
        store: StateStore,
        registration_token: str | None,
        epoch_duration_secs: int = 86_400,
        snapshot_every: int = 1000,
        noise_seed: int | None = None,
        clock: Callable[[], float] = time.time,
        randbytes: RandBytes = secrets.token_bytes,
    ) -> None:
        self._keys = keys
        self._vk_bytes = tagcrypt.vk_to_bytes(keys.vk)
        self.params = params
        self.reputation_cfg = reputation_cfg
        self._store = store
        self._registration_token = registration_token
        self._snapshot_every = snapshot_every
        self._noise_seed = noise_seed
        self._clock = clock
        self._randbytes = randbytes

        self._lock = threading.Lock()
        self._accounts: Dict[bytes, SenderAccount] = {}
        self._by_credential: Dict[str, bytes] = {}
        self._seq = 0
        self._events_since_snapshot = 0
        self._epoch = EpochState(
            index=0, started_at=int(clock()), duration_secs=epoch_duration_secs
        )
        self._recover()

    @classmethod
    def from_settings(cls, settings: Settings, **overrides: Any) -> AccountabilityServer:
        srv = settings.server
        store = FileStateStore(srv.data_dir, fsync=srv.fsync)
        keys = ServerKeys.load_or_create(srv.data_dir / "keys.json", srv.admin_token)
        kwargs: Dict[str, Any] = dict(
            keys=keys,
            params=settings.score,
            reputation_cfg=settings.reputation,
            store=store,
            registration_token=srv.registration_token,
            epoch_duration_secs=srv.epoch_duration_secs,
            snapshot_every=srv.snapshot_every,
            noise_seed=srv.noise_seed,
        )
        kwargs.update(overrides)
        return cls(**kwargs)

    # -----------------------------
    # Public read-only views
    # -----------------------------

    @property
    def vk(self) -> Ed25519PublicKey:
        return self._keys.vk

    @property
    def vk_bytes(self) -> bytes:
        return self._vk_bytes

    @property
    def epoch(self) -> EpochState:
        with self._lock:
            e = self._epoch
            return EpochState(
                index=e.index,
                started_at=e.started_at,
                duration_secs=e.duration_secs,
                previous_started_at=e.previous_started_at,
                seen_commitments=dict(e.seen_commitments),
            )

    def account_count(self) -> int:
        with self._lock:
            return len(self._accounts)

    # -----------------------------
    # Flows
    # -----------------------------

    def register_sender(self, registration_token: str | None) -> str:
        if not _token_ok(registration_token, self._registration_token):
            raise AuthError("registration token rejected", code="AUTH_BAD_REGISTRATION")

        credential = secrets.token_urlsafe(CREDENTIAL_BYTES)
        cred_hash = hash_credential(credential)
        with self._lock:
            sender_id = self._randbytes(tagcrypt.SENDER_ID_LEN)
            while sender_id in self._accounts:
                sender_id = self._randbytes(tagcrypt.SENDER_ID_LEN)
            self._log_event(
                {
                    "type": "register",
                    "sender_id": sender_id.hex(),
                    "credential_hash": cred_hash,
                    "epoch": self._epoch.index,
                }
            )
            self._apply_register(sender_id, cred_hash, self._epoch.index)
        log.info("registered sender %s", short_id(sender_id))
        return credential

    def issue_tag(self, credential: str | None, com: bytes) -> EndorsementTag:
        if len(com) != tagcrypt.DIGEST_LEN:
            raise RequestError(
                f"com must be {tagcrypt.DIGEST_LEN} bytes", code="REQUEST_BAD_COM"
            )
        with self._lock:
            account = self._account_for(credential)
            sender_id = account.sender_id
            y = reputation_index(account.sc, self.reputation_cfg)

        tau = int(self._clock())
        ct = tagcrypt.encrypt_sender_id(self._keys.enc_key, sender_id, self._randbytes)
        sigma = tagcrypt.sign_tag(self._keys.sk, com, tau, y, ct)
        return EndorsementTag(com=com, tau=tau, y=y, ct=ct, sigma=sigma)

    def ingest_report(self, tag_bytes: bytes) -> ReportOutcome:
        try:
            tag = tagcrypt.decode_tag(tag_bytes)
        except DecodeError as e:
            return self._reject(RejectReason.DECODE, e.field)
        if not tagcrypt.verify_tag_signature(self._keys.vk, tag):
            return self._reject(RejectReason.SIGNATURE)
        try:
            sender_id = tagcrypt.decrypt_sender_id(self._keys.enc_key, tag.ct)
        except DecryptError:
            return self._reject(RejectReason.DECRYPT)

        with self._lock:
            epoch = self._epoch
            if tag.tau < epoch.window_start:
                return self._reject(RejectReason.EXPIRED)
            if tag.com in epoch.seen_commitments:
                return self._reject(RejectReason.REPLAY)
            if sender_id not in self._accounts:
                # authentic ciphertext for an account this server does not know
                return self._reject(RejectReason.DECRYPT, "unknown sender")

            self._log_event(
                {
                    "type": "report",
                    "sender_id": sender_id.hex(),
                    "com": tag.com.hex(),
                    "tau": tag.tau,
                    "epoch": epoch.index,
                }
            )
            self._apply_report(sender_id, tag.com, tag.tau)
        return ReportOutcome.ok()

    def advance_epoch(self, admin_token: str | None) -> EpochSummary:
        if not _token_ok(admin_token, self._keys.admin_token):
            raise AuthError("admin token rejected", code="AUTH_BAD_ADMIN")
        with self._lock:
            return self._advance_locked()

    def maybe_advance(self) -> Optional[EpochSummary]:
        """Timer hook: advances iff the running epoch has outlived its duration."""
        with self._lock:
            e = self._epoch
            if self._clock() - e.started_at < e.duration_secs:
                return None
            return self._advance_locked()

    def get_score(self, credential: str | None) -> Tuple[Score, str]:
        with self._lock:
            account = self._account_for(credential)
            return account.sc, reputation(account.sc, self.reputation_cfg)

    def close(self) -> None:
        with self._lock:
            self._store.close()

    # -----------------------------
    # Internals (caller holds the lock)
    # -----------------------------

    def _account_for(self, credential: str | None) -> SenderAccount:
        sender_id = self._by_credential.get(hash_credential(credential or ""))
        if sender_id is None:
            raise AuthError("unknown credential", code="AUTH_BAD_CREDENTIAL")
        return self._accounts[sender_id]

    def _reject(self, reason: RejectReason, detail: str = "") -> ReportOutcome:
        log.info("report rejected: %s %s", reason.value, detail)
        return ReportOutcome.rejected(reason)

    def _log_event(self, event: Dict[str, Any]) -> None:
        # durable before the in-memory mutation; a failed append leaves state untouched
        self._store.append(dict(event, seq=self._seq + 1))
        self._seq += 1
        self._events_since_snapshot += 1

    def _apply_register(self, sender_id: bytes, cred_hash: str, epoch: int) -> None:
        self._accounts[sender_id] = SenderAccount(
            sender_id=sender_id, credential_hash=cred_hash, sc=ZERO, x=0, created_epoch=epoch
        )
        self._by_credential[cred_hash] = sender_id
        self._maybe_compact()

    def _apply_report(self, sender_id: bytes, com: bytes, tau: int) -> None:
        self._accounts[sender_id].x += 1
        self._epoch.seen_commitments[com] = tau
        self._maybe_compact()

    def _maybe_compact(self) -> None:
        if self._events_since_snapshot < self._snapshot_every:
            return
        try:
            self._store.write_snapshot(self._state_dict(self._accounts, self._epoch))
            self._events_since_snapshot = 0
        except StorageError as e:
            # the log still holds every event; compaction is retried on the next event
            log.warning("compaction snapshot failed: %s", e)

    def _noise_rng(self, new_index: int) -> np.random.Generator:
        if self._noise_seed is None:
            return np.random.default_rng()
        return np.random.default_rng([self._noise_seed, new_index])

    def _advance_locked(self) -> EpochSummary:
        old = self._epoch
        new_index = old.index + 1
        rng = self._noise_rng(new_index)

        new_accounts: Dict[bytes, SenderAccount] = {}
        for sender_id in sorted(self._accounts):
            acc = self._accounts[sender_id]
            new_accounts[sender_id] = SenderAccount(
                sender_id=sender_id,
                credential_hash=acc.credential_hash,
                sc=noised_update(acc.sc, acc.x, self.params, rng),
                x=0,
                created_epoch=acc.created_epoch,
            )
        new_epoch = EpochState(
            index=new_index,
            started_at=int(self._clock()),
            duration_secs=old.duration_secs,
            previous_started_at=old.started_at,
            # the new window starts at old.started_at; a com stays while its tag can still arrive
            seen_commitments={
                com: tau for com, tau in old.seen_commitments.items() if tau >= old.started_at
            },
        )

        # persisted before acknowledging; on failure nothing in memory has changed
        self._store.write_snapshot(self._state_dict(new_accounts, new_epoch))
        self._accounts = new_accounts
        self._epoch = new_epoch
        self._events_since_snapshot = 0

        log.info("epoch advanced to %d, %d accounts updated", new_index, len(new_accounts))
        return EpochSummary(epoch=new_index, updated=len(new_accounts))

    def _state_dict(
        self, accounts: Dict[bytes, SenderAccount], epoch: EpochState
    ) -> Dict[str, Any]:
        return {
            "seq": self._seq,
            "epoch": {
                "index": epoch.index,
                "started_at": epoch.started_at,
                "previous_started_at": epoch.previous_started_at,
                "duration_secs": epoch.duration_secs,
            },
            "accounts": [
                {
                    "sender_id": a.sender_id.hex(),
                    "credential_hash": a.credential_hash,
                    "sc": str(a.sc),
                    "x": a.x,
                    "created_epoch": a.created_epoch,
                }
                for _, a in sorted(accounts.items())
            ],
            "seen_commitments": {
                com.hex(): t for com, t in sorted(epoch.seen_commitments.items())
            },
        }

    def _recover(self) -> None:
        loaded, warnings = self._store.load()
        for w in warnings:
            log.warning("%s: %s %s", w.code, w.message, w.details or "")

        snap = loaded.snapshot
        if snap is not None:
            ep = snap["epoch"]
            self._epoch = EpochState(
                index=int(ep["index"]),
                started_at=int(ep["started_at"]),
                duration_secs=self._epoch.duration_secs,
                previous_started_at=ep.get("previous_started_at"),
                seen_commitments={
                    bytes.fromhex(com): int(t) for com, t in snap["seen_commitments"].items()
                },
            )
            for a in snap["accounts"]:
                sender_id = bytes.fromhex(a["sender_id"])
                self._accounts[sender_id] = SenderAccount(
                    sender_id=sender_id,
                    credential_hash=a["credential_hash"],
                    sc=Score.of(a["sc"]),
                    x=int(a["x"]),
                    created_epoch=int(a["created_epoch"]),
                )
                self._by_credential[a["credential_hash"]] = sender_id
            self._seq = int(snap["seq"])

        for ev in loaded.events:
            if ev["type"] == "register":
                self._apply_register(
                    bytes.fromhex(ev["sender_id"]), ev["credential_hash"], int(ev["epoch"])
                )
            elif ev["type"] == "report":
                self._apply_report(
                    bytes.fromhex(ev["sender_id"]), bytes.fromhex(ev["com"]), int(ev["tau"])
                )
            else:
                raise StorageError(f"unknown event type {ev['type']!r}", seq=str(ev["seq"]))
            self._seq = int(ev["seq"])

        if snap is not None or loaded.events:
            log.info(
                "recovered epoch %d with %d accounts (%d events replayed)",
                self._epoch.index,
                len(self._accounts),
                len(loaded.events),
            )
        # fold the replayed tail (and any torn line) into a fresh snapshot
        self._store.write_snapshot(self._state_dict(self._accounts, self._epoch))
        self._events_since_snapshot = 0

    def state_for_inspection(self) -> Dict[str, Any]:
        """Full in-memory state as plain data (privacy checks, debugging)."""
        with self._lock:
            return self._state_dict(self._accounts, self._epoch)
