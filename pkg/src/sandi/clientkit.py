# src/sandi/clientkit.py
"""
Sender and receiver flows.

Sender:   commit locally -> POST {credential, com} -> check the signed tag -> (tag, m, op)
Receiver: open the commitment against its own address, check the signature, read y
Report:   POST the tag bytes alone

The receiver side needs no account; only the published vk.
"""

from __future__ import annotations

import logging
import secrets
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple

import httpx
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PublicKey

from sandi import tagcrypt
from sandi.contracts import (
    AuthError,
    DecodeError,
    EpochSummary,
    ProtocolError,
    RejectReason,
    ReportOutcome,
    RequestError,
)
from sandi.private_files import write_private_text
from sandi.scorekit import DEFAULT_LABELS
from sandi.tagcrypt import EndorsedMessage, EndorsementTag, RandBytes

log = logging.getLogger(__name__)


# -----------------------------
# HTTP client of the v1 API
# -----------------------------


class AsdClient:
    """
    Thin client over /v1. Any httpx.Client works as transport, including
    fastapi.testclient.TestClient for in-process use.
    """

    def __init__(
        self,
        base_url: str,
        client: Optional[httpx.Client] = None,
        timeout_seconds: float = 10.0,
        max_retries: int = 3,
        retry_backoff_seconds: float = 0.6,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self._c = client or httpx.Client()
        self._timeout = timeout_seconds
        self._max_retries = max_retries
        self._backoff = retry_backoff_seconds

    def _request(
        self,
        method: str,
        path: str,
        *,
        json: Optional[Dict[str, Any]] = None,
        headers: Optional[Dict[str, str]] = None,
        retry: bool = True,
    ) -> httpx.Response:
        # transport errors and 5xx are retried; 4xx are answers, not failures
        attempts = self._max_retries if retry else 1
        last_exc: Optional[Exception] = None
        for attempt in range(1, attempts + 1):
            try:
                r = self._c.request(
                    method,
                    f"{self.base_url}{path}",
                    json=json,
                    headers=headers,
                    timeout=self._timeout,
                )
                if r.status_code < 500:
                    return r
                last_exc = ProtocolError(
                    f"server answered {r.status_code} on {path}", reason="server"
                )
            except httpx.TransportError as e:
                last_exc = ProtocolError(f"{path}: {e!r}", reason="transport")
            if attempt < attempts:
                time.sleep(self._backoff * attempt)
        assert last_exc is not None
        raise last_exc

    @staticmethod
    def _raise_for_client_error(r: httpx.Response) -> None:
        if r.status_code < 400:
            return
        try:
            body = r.json()
        except ValueError:
            body = {}
        code = str(body.get("error", ""))
        message = str(body.get("message", f"HTTP {r.status_code}"))
        if r.status_code == 401:
            raise AuthError(message, code=code or None)
        raise RequestError(message, code=code or None)

    def register(self, token: str) -> str:
        # not retried: a lost response would otherwise create a second account
        r = self._request("POST", "/v1/register", json={"token": token}, retry=False)
        self._raise_for_client_error(r)
        return str(r.json()["credential"])

    def issue_tag(self, credential: str, com: bytes) -> bytes:
        r = self._request(
            "POST", "/v1/tag", json={"credential": credential, "com": tagcrypt.b64e(com)}
        )
        self._raise_for_client_error(r)
        try:
            return tagcrypt.b64d(str(r.json()["tag"]), field="tag")
        except (DecodeError, KeyError, ValueError) as e:
            raise ProtocolError("server returned an unreadable tag", reason="decode") from e

    def report(self, tag_bytes: bytes) -> ReportOutcome:
        r = self._request("POST", "/v1/report", json={"tag": tagcrypt.b64e(tag_bytes)})
        if r.status_code == 204:
            return ReportOutcome.ok()
        if r.status_code == 400:
            try:
                return ReportOutcome.rejected(RejectReason(r.json()["reason"]))
            except (KeyError, ValueError):
                pass
        self._raise_for_client_error(r)
        raise ProtocolError(f"unexpected status {r.status_code} on report", reason="server")

    def advance_epoch(self, admin_token: str) -> EpochSummary:
        r = self._request(
            "POST",
            "/v1/epoch/advance",
            headers={"Authorization": f"Bearer {admin_token}"},
            retry=False,
        )
        self._raise_for_client_error(r)
        body = r.json()
        return EpochSummary(epoch=int(body["epoch"]), updated=int(body["updated"]))

    def get_score(self, credential: str) -> Tuple[str, str]:
        r = self._request("GET", "/v1/score", headers={"Authorization": f"Bearer {credential}"})
        self._raise_for_client_error(r)
        body = r.json()
        return str(body["sc"]), str(body["y"])

    def fetch_vk(self) -> Tuple[bytes, Tuple[str, ...]]:
        r = self._request("GET", "/v1/vk")
        self._raise_for_client_error(r)
        body = r.json()
        try:
            vk = tagcrypt.b64d(str(body["vk"]), field="vk")
        except (DecodeError, KeyError) as e:
            raise ProtocolError("server returned an unreadable vk", reason="decode") from e
        labels = tuple(str(x) for x in body.get("labels", DEFAULT_LABELS))
        return vk, labels


# -----------------------------
# Local files (credential, vk pin)
# -----------------------------


def save_credential(path: Path, credential: str) -> None:
    write_private_text(path, credential + "\n")


def load_credential(path: Path) -> str:
    try:
        credential = path.read_text(encoding="utf-8").strip()
    except FileNotFoundError as e:
        raise AuthError(f"no credential at {path}; run register first") from e
    if not credential:
        raise AuthError(f"credential file {path} is empty")
    return credential


def pinned_vk(client: AsdClient, pin_file: Path) -> Tuple[Ed25519PublicKey, Tuple[str, ...]]:
    """Trust on first use: pin the server key the first time, fail closed on change."""
    raw, labels = client.fetch_vk()
    vk = tagcrypt.vk_from_bytes(raw)
    fresh = tagcrypt.b64e(raw)
    if pin_file.exists():
        pinned = pin_file.read_text(encoding="utf-8").strip()
        if not secrets.compare_digest(pinned, fresh):
            raise ProtocolError(
                f"server verification key differs from the one pinned in {pin_file}",
                reason="vk_changed",
            )
    else:
        write_private_text(pin_file, fresh + "\n")
        log.info("pinned server verification key in %s", pin_file)
    return vk, labels


# -----------------------------
# Sender
# -----------------------------


@dataclass
class SenderSession:
    client: AsdClient
    credential: str = field(repr=False)
    vk: Ed25519PublicKey
    labels: Tuple[str, ...] = DEFAULT_LABELS

    @property
    def server_url(self) -> str:
        return self.client.base_url

    @classmethod
    def open(cls, client: AsdClient, credential: str, pin_file: Path) -> SenderSession:
        vk, labels = pinned_vk(client, pin_file)
        return cls(client=client, credential=credential, vk=vk, labels=labels)


def prepare_endorsed_message(
    session: SenderSession,
    m: bytes,
    receiver_addr: str,
    rng: RandBytes = secrets.token_bytes,
) -> EndorsedMessage:
    c = tagcrypt.commit(m, receiver_addr, rng)
    raw = session.client.issue_tag(session.credential, c.com)
    try:
        tag = tagcrypt.decode_tag(raw)
    except DecodeError as e:
        raise ProtocolError(f"issued tag does not decode ({e.field})", reason="decode") from e

    if tag.com != c.com:
        raise ProtocolError("server signed a different commitment", reason="commitment")
    if not tagcrypt.verify_tag_signature(session.vk, tag):
        raise ProtocolError("issued tag signature does not verify", reason="signature")
    return EndorsedMessage(tag=tag, m=m, op=c.op)


# -----------------------------
# Receiver
# -----------------------------


@dataclass(frozen=True)
class VerifyResult:
    valid: bool
    reason: Optional[str] = None  # "commitment" | "signature" when invalid
    y: Optional[int] = None
    label: Optional[str] = None
    tau: Optional[int] = None


def verify_endorsed_message(
    vk: Ed25519PublicKey,
    em: EndorsedMessage,
    my_addr: str,
    labels: Sequence[str] = DEFAULT_LABELS,
) -> VerifyResult:
    tag = em.tag
    if not tagcrypt.verify_commitment(tag.com, em.op, em.m, my_addr):
        return VerifyResult(valid=False, reason="commitment")
    if not tagcrypt.verify_tag_signature(vk, tag):
        return VerifyResult(valid=False, reason="signature")
    label = labels[tag.y] if tag.y < len(labels) else str(tag.y)
    return VerifyResult(valid=True, y=tag.y, label=label, tau=tag.tau)


def report(client: AsdClient, tag: EndorsementTag | bytes) -> ReportOutcome:
    raw = tag if isinstance(tag, bytes) else tagcrypt.encode_tag(tag)
    return client.report(raw)
