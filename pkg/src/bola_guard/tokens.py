"""Minimal HMAC-signed bearer tokens.

Three dot-separated base64url parts (header, claims, HMAC-SHA-256 signature),
no padding. Claims are exactly ``{user_id, user_name, groups, exp}``.
Verification compares the *encoded* signature strings, so any single-byte
tamper of the serialized token is rejected, including flips that only touch
base64 slack bits. Clocks are always passed in explicitly.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import hmac
import json
from dataclasses import dataclass, field

from .errors import TokenExpired, TokenInvalid

_HEADER = {"alg": "HS256", "typ": "JWT"}


def _b64url(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).rstrip(b"=").decode("ascii")


def _b64url_decode(text: str) -> bytes:
    padded = text + "=" * (-len(text) % 4)
    try:
        return base64.urlsafe_b64decode(padded.encode("ascii"))
    except (binascii.Error, UnicodeEncodeError, ValueError) as exc:
        raise TokenInvalid(f"invalid base64url segment: {exc}") from exc


@dataclass(frozen=True)
class AuthToken:
    """Verified principal: who is calling and which groups they belong to."""

    user_id: str
    user_name: str
    groups: frozenset[str]
    expiry: float
    signature: bytes = field(default=b"", repr=False)
    raw: str = field(default="", repr=False, compare=False)


def issue_token(user_id: str, user_name: str, groups: frozenset[str] | set[str],
                ttl: float, key: bytes, now: float) -> AuthToken:
    """Sign a token valid for ``ttl`` seconds from ``now``."""
    if ttl <= 0:
        raise ValueError("ttl must be positive")
    expiry = now + ttl
    claims = {
        "user_id": user_id,
        "user_name": user_name,
        "groups": sorted(groups),
        "exp": expiry,
    }
    signing_input = (_b64url(json.dumps(_HEADER, separators=(",", ":")).encode())
                     + "."
                     + _b64url(json.dumps(claims, separators=(",", ":")).encode()))
    signature = hmac.new(key, signing_input.encode("ascii"), hashlib.sha256).digest()
    return AuthToken(
        user_id=user_id,
        user_name=user_name,
        groups=frozenset(groups),
        expiry=expiry,
        signature=signature,
        raw=f"{signing_input}.{_b64url(signature)}",
    )


def verify_token(raw: str, key: bytes, now: float) -> AuthToken:
    """Return the claims iff the signature is valid and the token is unexpired."""
    parts = raw.split(".")
    if len(parts) != 3:
        raise TokenInvalid("token must have exactly three parts")
    header_part, claims_part, signature_part = parts

    header = _decode_json(header_part)
    if header.get("alg") != "HS256":
        raise TokenInvalid(f"unsupported algorithm {header.get('alg')!r}")

    try:
        signing_input = f"{header_part}.{claims_part}".encode("ascii")
    except UnicodeEncodeError as exc:
        raise TokenInvalid("token is not ASCII") from exc
    expected = hmac.new(key, signing_input, hashlib.sha256).digest()
    # Compare encoded strings: only the canonical encoding of the right MAC passes.
    if not hmac.compare_digest(_b64url(expected), signature_part):
        raise TokenInvalid("signature mismatch")

    claims = _decode_json(claims_part)
    try:
        user_id = claims["user_id"]
        user_name = claims["user_name"]
        groups = frozenset(claims["groups"])
        expiry = float(claims["exp"])
    except (KeyError, TypeError, ValueError) as exc:
        raise TokenInvalid(f"claims are incomplete or ill-typed: {exc}") from exc
    if now >= expiry:
        raise TokenExpired(f"token expired at {expiry}")
    return AuthToken(user_id=user_id, user_name=user_name, groups=groups,
                     expiry=expiry, signature=expected, raw=raw)


def _decode_json(part: str) -> dict:
    try:
        decoded = json.loads(_b64url_decode(part).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise TokenInvalid(f"undecodable token part: {exc}") from exc
    if not isinstance(decoded, dict):
        raise TokenInvalid("token part is not a JSON object")
    return decoded
