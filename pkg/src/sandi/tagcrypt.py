# src/sandi/tagcrypt.py
"""
Cryptographic core of endorsement tags.

Primitives:
  - SHA-256 for commitments and receiver digests
  - ChaCha20-Poly1305 (random 96-bit nonce) for the sender-id ciphertext
  - Ed25519 (64-byte signatures) over the canonical tag payload

Every hash and signature input starts with its own domain-separation string.

Tag wire layout (big-endian):
  "SND1" | 0x01 | com(32) | tau(8) | y(1) | ct_len(2) | ct | sig_len(2) | sigma
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import secrets
import struct
from dataclasses import dataclass
from typing import Callable, Final

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from sandi.contracts import DecodeError, DecryptError

RandBytes = Callable[[int], bytes]

COM_DOMAIN: Final = b"sandi-com-v1"
RCPT_DOMAIN: Final = b"sandi-rcpt-v1"
TAG_DOMAIN: Final = b"sandi-tag-v1"
CT_DOMAIN: Final = b"sandi-ct-v1"

TAG_MAGIC: Final = b"SND1"
TAG_VERSION: Final = 0x01
MAX_TAG_BYTES: Final = 512

DIGEST_LEN: Final = 32
OPENING_LEN: Final = 32
SENDER_ID_LEN: Final = 16
NONCE_LEN: Final = 12
MAX_CT_LEN: Final = 256
MAX_SIG_LEN: Final = 64

_HEAD = struct.Struct(">4sB32sQBH")  # magic, version, com, tau, y, ct_len
_U16 = struct.Struct(">H")


# -----------------------------
# Contracts
# -----------------------------


@dataclass(frozen=True)
class Commitment:
    com: bytes
    op: bytes


@dataclass(frozen=True)
class EndorsementTag:
    com: bytes
    tau: int  # issuance time, whole seconds since the Unix epoch
    y: int  # reputation label index, 0 = lowest
    ct: bytes
    sigma: bytes


@dataclass(frozen=True)
class EndorsedMessage:
    tag: EndorsementTag
    m: bytes
    op: bytes


# -----------------------------
# Commitments
# -----------------------------


def normalize_address(receiver_addr: str) -> str:
    return receiver_addr.strip().lower()


def receiver_digest(receiver_addr: str) -> bytes:
    addr = normalize_address(receiver_addr)
    if not addr:
        raise ValueError("receiver address must be non-empty")
    return hashlib.sha256(RCPT_DOMAIN + addr.encode("utf-8")).digest()


def _commit_digest(m: bytes, h_r: bytes, op: bytes) -> bytes:
    h = hashlib.sha256(COM_DOMAIN)
    h.update(h_r)
    h.update(len(m).to_bytes(8, "big"))
    h.update(m)
    h.update(op)
    return h.digest()


def commit(m: bytes, receiver_addr: str, rng: RandBytes = secrets.token_bytes) -> Commitment:
    h_r = receiver_digest(receiver_addr)
    op = rng(OPENING_LEN)
    return Commitment(com=_commit_digest(m, h_r, op), op=op)


def verify_commitment(com: bytes, op: bytes, m: bytes, receiver_addr: str) -> bool:
    try:
        h_r = receiver_digest(receiver_addr)
    except ValueError:
        return False
    return secrets.compare_digest(_commit_digest(m, h_r, op), com)


# -----------------------------
# Sender-id encryption
# -----------------------------


def generate_encryption_key() -> bytes:
    return ChaCha20Poly1305.generate_key()


def encrypt_sender_id(
    key: bytes, sender_id: bytes, rng: RandBytes = secrets.token_bytes
) -> bytes:
    if len(sender_id) != SENDER_ID_LEN:
        raise ValueError(f"sender id must be {SENDER_ID_LEN} bytes")
    nonce = rng(NONCE_LEN)
    return nonce + ChaCha20Poly1305(key).encrypt(nonce, sender_id, CT_DOMAIN)


def decrypt_sender_id(key: bytes, ct: bytes) -> bytes:
    if len(ct) <= NONCE_LEN:
        raise DecryptError("ciphertext too short")
    try:
        sender_id = ChaCha20Poly1305(key).decrypt(ct[:NONCE_LEN], ct[NONCE_LEN:], CT_DOMAIN)
    except InvalidTag as e:
        raise DecryptError("ciphertext failed authentication") from e
    if len(sender_id) != SENDER_ID_LEN:
        raise DecryptError("decrypted sender id has wrong length")
    return sender_id


# -----------------------------
# Signatures
# -----------------------------


def generate_signing_key() -> Ed25519PrivateKey:
    return Ed25519PrivateKey.generate()


def vk_to_bytes(vk: Ed25519PublicKey) -> bytes:
    return vk.public_bytes(Encoding.Raw, PublicFormat.Raw)


def vk_from_bytes(raw: bytes) -> Ed25519PublicKey:
    try:
        return Ed25519PublicKey.from_public_bytes(raw)
    except ValueError as e:
        raise DecodeError("verification key must be 32 raw bytes", field="vk") from e


def tag_payload(com: bytes, tau: int, y: int, ct: bytes) -> bytes:
    return TAG_DOMAIN + com + tau.to_bytes(8, "big") + bytes([y]) + _U16.pack(len(ct)) + ct


def sign_tag(sk: Ed25519PrivateKey, com: bytes, tau: int, y: int, ct: bytes) -> bytes:
    return sk.sign(tag_payload(com, tau, y, ct))


def verify_tag_signature(vk: Ed25519PublicKey, tag: EndorsementTag) -> bool:
    try:
        vk.verify(tag.sigma, tag_payload(tag.com, tag.tau, tag.y, tag.ct))
    except (InvalidSignature, ValueError, OverflowError):
        return False
    return True


# -----------------------------
# Tag codec
# -----------------------------


def encode_tag(tag: EndorsementTag) -> bytes:
    if len(tag.com) != DIGEST_LEN:
        raise ValueError("com must be 32 bytes")
    if not 0 <= tag.y <= 0xFF:
        raise ValueError("y must fit in one byte")
    if not 0 <= tag.tau < 2**64:
        raise ValueError("tau must fit in 64 bits")
    if len(tag.ct) > MAX_CT_LEN or len(tag.sigma) > MAX_SIG_LEN:
        raise ValueError("ct or sigma too long")
    head = _HEAD.pack(TAG_MAGIC, TAG_VERSION, tag.com, tag.tau, tag.y, len(tag.ct))
    return head + tag.ct + _U16.pack(len(tag.sigma)) + tag.sigma


def _take(buf: bytes, off: int, n: int, field: str) -> tuple[bytes, int]:
    if off + n > len(buf):
        raise DecodeError(f"tag truncated in {field}", field=field)
    return buf[off : off + n], off + n


def decode_tag(data: bytes) -> EndorsementTag:
    if len(data) > MAX_TAG_BYTES:
        raise DecodeError(f"tag longer than {MAX_TAG_BYTES} bytes", field="length")

    magic, off = _take(data, 0, 4, "magic")
    if magic != TAG_MAGIC:
        raise DecodeError("bad magic", field="magic")
    version, off = _take(data, off, 1, "version")
    if version[0] != TAG_VERSION:
        raise DecodeError(f"unsupported version {version[0]}", field="version")
    com, off = _take(data, off, DIGEST_LEN, "com")
    tau_raw, off = _take(data, off, 8, "tau")
    y_raw, off = _take(data, off, 1, "y")
    ct_len_raw, off = _take(data, off, 2, "ct_len")
    (ct_len,) = _U16.unpack(ct_len_raw)
    if ct_len > MAX_CT_LEN:
        raise DecodeError(f"ct_len {ct_len} over limit", field="ct_len")
    ct, off = _take(data, off, ct_len, "ct")
    sig_len_raw, off = _take(data, off, 2, "sig_len")
    (sig_len,) = _U16.unpack(sig_len_raw)
    if sig_len > MAX_SIG_LEN:
        raise DecodeError(f"sig_len {sig_len} over limit", field="sig_len")
    sigma, off = _take(data, off, sig_len, "sigma")
    if off != len(data):
        raise DecodeError(f"{len(data) - off} trailing bytes", field="trailing")

    return EndorsementTag(
        com=com,
        tau=int.from_bytes(tau_raw, "big"),
        y=y_raw[0],
        ct=ct,
        sigma=sigma,
    )


# -----------------------------
# Base64 and the endorsed-message file
# -----------------------------


def b64e(raw: bytes) -> str:
    return base64.b64encode(raw).decode("ascii")


def b64d(text: str, *, field: str) -> bytes:
    try:
        return base64.b64decode(text.strip(), validate=True)
    except (binascii.Error, ValueError) as e:
        raise DecodeError(f"{field} is not valid base64", field=field) from e


def dump_endorsed_message(em: EndorsedMessage) -> bytes:
    head = f"tag: {b64e(encode_tag(em.tag))}\nop: {b64e(em.op)}\n\n"
    return head.encode("ascii") + em.m


def load_endorsed_message(data: bytes) -> EndorsedMessage:
    """
    Parses:
      tag: <base64 tag bytes>
      op: <base64 opening>
      <blank line>
      <raw message bytes>
    """
    head, sep, body = data.partition(b"\n\n")
    if not sep:
        raise DecodeError("missing blank line after header", field="file")
    lines = head.split(b"\n")
    if len(lines) != 2 or not (lines[0].startswith(b"tag: ") and lines[1].startswith(b"op: ")):
        raise DecodeError("header must be 'tag: ...' then 'op: ...'", field="file")

    tag = decode_tag(b64d(lines[0][5:].decode("ascii", "replace"), field="tag"))
    op = b64d(lines[1][4:].decode("ascii", "replace"), field="op")
    if len(op) != OPENING_LEN:
        raise DecodeError("opening must be 32 bytes", field="op")
    return EndorsedMessage(tag=tag, m=body, op=op)
