"""Access tokens, session keys, and TOTP one-time guest grants.

Tokens are issued off-chain and ratified on-chain via a TokenCommit record
carrying only the token digest. The serving device grants access when the
session key and token match.
"""

from __future__ import annotations

import hmac
import hashlib
import secrets
import struct
import threading
from dataclasses import dataclass, field
from enum import Enum

from .dac import Decision
from .errors import (
    DecisionRefusal,
    ExhaustedError,
    ExpiryRefusal,
    MismatchRefusal,
    NotRatifiedRefusal,
    PairingRefusal,
    ReplayRefusal,
    RevocationRefusal,
)
from .identity import digest
from .records import PermissionType, TokenCommit, TokenKind


class TokenStatus(Enum):
    PENDING = "pending"
    RATIFIED = "ratified"
    REVOKED = "revoked"
    CONSUMED = "consumed"


@dataclass
class AccessToken:
    token_id: bytes
    user: bytes
    device: bytes
    service: str | None
    permission: PermissionType
    kind: TokenKind
    expiry: int  # ms; 0 unless kind is EXPIRING
    issuing_hub: bytes
    status: TokenStatus = TokenStatus.PENDING


@dataclass(frozen=True)
class SessionKey:
    key: bytes
    token_id: bytes


class TokenService:
    """Serializes token status transitions; redeem is atomic."""

    def __init__(self, hub_fingerprint: bytes):
        self.hub = hub_fingerprint
        self._lock = threading.Lock()
        self._tokens: dict[bytes, AccessToken] = {}
        self._key_digests: dict[bytes, bytes] = {}
        self._counter = 0

    def get(self, token_id: bytes) -> AccessToken:
        return self._tokens[token_id]

    def issue_token(
        self,
        decision: Decision,
        user: bytes,
        device: bytes,
        service: str | None,
        permission: PermissionType,
        kind: TokenKind,
        now: int,
        expiry: int = 0,
    ) -> tuple[AccessToken, SessionKey, TokenCommit]:
        """Issue a PENDING token and its session key.

        The returned TokenCommit is what the hub submits to the validators;
        ratification happens when the caller reports the commit back.
        """
        if decision != Decision.PERMIT:
            raise DecisionRefusal("cannot issue a token for a DENY decision")
        with self._lock:
            self._counter += 1
            token_id = digest(
                self.hub
                + user
                + device
                + (service or "").encode()
                + struct.pack(">BQQ", int(permission), now, self._counter)
            )
            key = secrets.token_bytes(32)
            token = AccessToken(
                token_id=token_id,
                user=user,
                device=device,
                service=service,
                permission=permission,
                kind=kind,
                expiry=expiry if kind == TokenKind.EXPIRING else 0,
                issuing_hub=self.hub,
            )
            self._tokens[token_id] = token
            self._key_digests[token_id] = digest(key)
        commit = TokenCommit(
            token_digest=token_id,
            user=user,
            device=device,
            service=service,
            permission=permission,
            kind=kind,
            expiry=token.expiry,
        )
        return token, SessionKey(key=key, token_id=token_id), commit

    def ratify(self, token_id: bytes) -> None:
        with self._lock:
            token = self._tokens[token_id]
            if token.status == TokenStatus.PENDING:
                token.status = TokenStatus.RATIFIED

    def revoke(self, token_id: bytes) -> None:
        with self._lock:
            token = self._tokens[token_id]
            if token.status in (TokenStatus.PENDING, TokenStatus.RATIFIED):
                token.status = TokenStatus.REVOKED

    def redeem(
        self,
        token_id: bytes,
        session_key: bytes,
        now: int,
        allow_pending: bool = False,
    ) -> AccessToken:
        """Grant access or raise a typed refusal. allow_pending enables the
        shortcut-path redemption of a not-yet-ratified token."""
        with self._lock:
            token = self._tokens.get(token_id)
            if token is None:
                raise PairingRefusal("unknown token")
            if not hmac.compare_digest(
                self._key_digests[token_id], digest(session_key)
            ):
                raise PairingRefusal("session key does not match token")
            if token.status == TokenStatus.REVOKED:
                raise RevocationRefusal("token was revoked")
            if token.status == TokenStatus.CONSUMED:
                raise ReplayRefusal("single-use token already redeemed")
            if token.status == TokenStatus.PENDING and not allow_pending:
                raise NotRatifiedRefusal("token pending ratification")
            if token.kind == TokenKind.EXPIRING and now > token.expiry:
                raise ExpiryRefusal("token expired")
            if token.kind == TokenKind.SINGLE_USE:
                token.status = TokenStatus.CONSUMED
            return token


# --- TOTP one-time guest access ----------------------------------------------

@dataclass
class TotpGrant:
    secret: bytes
    step_seconds: int = 30
    digits: int = 6
    allowed_visits: int = 1
    window: int = 1  # tolerance in steps on either side
    remaining_visits: int = field(default=-1)

    def __post_init__(self):
        if self.remaining_visits < 0:
            self.remaining_visits = self.allowed_visits


def _time_step(now_ms: int, step_seconds: int) -> int:
    return (now_ms // 1000) // step_seconds


def totp_code(secret: bytes, step: int, digits: int) -> str:
    """RFC-6238 style HMAC-SHA1 code with dynamic truncation."""
    mac = hmac.new(secret, struct.pack(">Q", step), hashlib.sha1).digest()
    offset = mac[-1] & 0x0F
    value = struct.unpack(">I", mac[offset : offset + 4])[0] & 0x7FFFFFFF
    return str(value % (10**digits)).zfill(digits)


def totp_issue(grant: TotpGrant, now: int) -> str:
    if grant.remaining_visits <= 0:
        raise ExhaustedError("no visits remain on this grant")
    return totp_code(grant.secret, _time_step(now, grant.step_seconds), grant.digits)


# How far to look for a matching step when classifying a refusal as expiry
# rather than mismatch.
_EXPIRY_SEARCH_STEPS = 64


def totp_redeem(
    grant: TotpGrant,
    passphrase: str,
    now: int,
    service: "TokenService",
    user: bytes,
    device: bytes,
    target_service: str | None,
    permission: PermissionType,
) -> tuple[AccessToken, SessionKey, TokenCommit]:
    """Trade a valid passphrase for a single-use token."""
    if grant.remaining_visits <= 0:
        raise ExhaustedError("no visits remain on this grant")
    now_step = _time_step(now, grant.step_seconds)
    for delta in range(-grant.window, grant.window + 1):
        if now_step + delta < 0:
            continue
        if totp_code(grant.secret, now_step + delta, grant.digits) == passphrase:
            grant.remaining_visits -= 1
            return service.issue_token(
                Decision.PERMIT,
                user,
                device,
                target_service,
                permission,
                TokenKind.SINGLE_USE,
                now,
            )
    for delta in range(-_EXPIRY_SEARCH_STEPS, _EXPIRY_SEARCH_STEPS + 1):
        if now_step + delta < 0:
            continue
        if totp_code(grant.secret, now_step + delta, grant.digits) == passphrase:
            raise ExpiryRefusal("passphrase valid for a step outside the window")
    raise MismatchRefusal("passphrase does not match any step")
