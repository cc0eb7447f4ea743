"""Transaction payloads, canonical encoding, and signed records.

Every policy change travels as one tagged payload. The canonical encoding is
fixed-schema binary: a one-byte tag, then the dataclass fields in declaration
order, integers as fixed-width big-endian, byte strings and text length
prefixed. Checksums and golden fixtures depend on this layout staying put.
"""

from __future__ import annotations

import struct
import types
import typing
from dataclasses import dataclass, fields
from enum import IntEnum

from .errors import ParseError, SigningCapabilityError
from .identity import Identity, digest, fingerprint_of, verify_signature


class PermissionType(IntEnum):
    LIST = 1
    CHMOD = 2
    EXECUTE = 3


class Effect(IntEnum):
    GRANT = 1
    DENY = 2


class TokenKind(IntEnum):
    SINGLE_USE = 1
    EXPIRING = 2
    PERMANENT = 3


# --- payload schema ----------------------------------------------------------

@dataclass(frozen=True)
class DomainRegistration:
    domain: str
    owner: bytes
    ac_model: str  # "dac" | "abac" | "rbac"


@dataclass(frozen=True)
class DeviceRegistration:
    device: bytes
    owner: bytes
    services: tuple[str, ...]


@dataclass(frozen=True)
class DeviceRevocation:
    device: bytes


@dataclass(frozen=True)
class PermissionGranted:
    user: bytes
    device: bytes
    service: str | None
    permission: PermissionType


@dataclass(frozen=True)
class PermissionRevoked:
    user: bytes
    device: bytes
    service: str | None
    permission: PermissionType


@dataclass(frozen=True)
class NewAttribute:
    domain: str
    name: bytes  # opaque; may be ciphertext
    uid: int


@dataclass(frozen=True)
class DeleteAttribute:
    domain: str
    uid: int


@dataclass(frozen=True)
class AssignAttributeDevice:
    domain: str
    uid: int
    device: bytes
    service: str | None


@dataclass(frozen=True)
class RemoveAttributeDevice:
    domain: str
    uid: int
    device: bytes
    service: str | None


@dataclass(frozen=True)
class AssignAttributeUser:
    domain: str
    uid: int
    user: bytes


@dataclass(frozen=True)
class RemoveAttributeUser:
    domain: str
    uid: int
    user: bytes


@dataclass(frozen=True)
class AssignAttributePermission:
    domain: str
    user_uid: int
    device_uid: int
    permission: PermissionType
    effect: Effect


@dataclass(frozen=True)
class RevokeAttributePermission:
    # Removes the tuple regardless of effect.
    domain: str
    user_uid: int
    device_uid: int
    permission: PermissionType


@dataclass(frozen=True)
class NewRole:
    domain: str
    name: str
    uid: int


@dataclass(frozen=True)
class DeleteRole:
    domain: str
    uid: int


@dataclass(frozen=True)
class AssignRoleUser:
    domain: str
    uid: int
    user: bytes


@dataclass(frozen=True)
class RemoveRoleUser:
    domain: str
    uid: int
    user: bytes


@dataclass(frozen=True)
class AssignRolePermission:
    domain: str
    uid: int
    device: bytes
    service: str | None
    permission: PermissionType
    effect: Effect


@dataclass(frozen=True)
class RevokeRolePermission:
    domain: str
    uid: int
    device: bytes
    service: str | None
    permission: PermissionType


@dataclass(frozen=True)
class AddRoleHierarchy:
    domain: str
    parent_uid: int
    child_uid: int


@dataclass(frozen=True)
class RemoveRoleHierarchy:
    domain: str
    parent_uid: int
    child_uid: int


@dataclass(frozen=True)
class RoleHierarchyBatch:
    """Atomic batch; used for hierarchy edits that would otherwise detach roles."""

    domain: str
    ops: tuple["Payload", ...]


@dataclass(frozen=True)
class TokenCommit:
    """On-chain ratification of an off-chain token, identified by digest."""

    token_digest: bytes
    user: bytes
    device: bytes
    service: str | None
    permission: PermissionType
    kind: TokenKind
    expiry: int  # ms since epoch; 0 when not expiring


Payload = typing.Union[
    DomainRegistration,
    DeviceRegistration,
    DeviceRevocation,
    PermissionGranted,
    PermissionRevoked,
    NewAttribute,
    DeleteAttribute,
    AssignAttributeDevice,
    RemoveAttributeDevice,
    AssignAttributeUser,
    RemoveAttributeUser,
    AssignAttributePermission,
    RevokeAttributePermission,
    NewRole,
    DeleteRole,
    AssignRoleUser,
    RemoveRoleUser,
    AssignRolePermission,
    RevokeRolePermission,
    AddRoleHierarchy,
    RemoveRoleHierarchy,
    RoleHierarchyBatch,
    TokenCommit,
]

PAYLOAD_TAGS: dict[type, int] = {
    DomainRegistration: 1,
    DeviceRegistration: 2,
    DeviceRevocation: 3,
    PermissionGranted: 4,
    PermissionRevoked: 5,
    NewAttribute: 16,
    DeleteAttribute: 17,
    AssignAttributeDevice: 18,
    RemoveAttributeDevice: 19,
    AssignAttributeUser: 20,
    RemoveAttributeUser: 21,
    AssignAttributePermission: 22,
    RevokeAttributePermission: 23,
    NewRole: 32,
    DeleteRole: 33,
    AssignRoleUser: 34,
    RemoveRoleUser: 35,
    AssignRolePermission: 36,
    RevokeRolePermission: 37,
    AddRoleHierarchy: 38,
    RemoveRoleHierarchy: 39,
    RoleHierarchyBatch: 40,
    TokenCommit: 48,
}
TAG_PAYLOADS = {tag: cls for cls, tag in PAYLOAD_TAGS.items()}

DAC_KINDS = (
    DomainRegistration,
    DeviceRegistration,
    DeviceRevocation,
    PermissionGranted,
    PermissionRevoked,
)
ABAC_KINDS = (
    NewAttribute,
    DeleteAttribute,
    AssignAttributeDevice,
    RemoveAttributeDevice,
    AssignAttributeUser,
    RemoveAttributeUser,
    AssignAttributePermission,
    RevokeAttributePermission,
)
RBAC_KINDS = (
    NewRole,
    DeleteRole,
    AssignRoleUser,
    RemoveRoleUser,
    AssignRolePermission,
    RevokeRolePermission,
    AddRoleHierarchy,
    RemoveRoleHierarchy,
    RoleHierarchyBatch,
)

_HINTS_CACHE: dict[type, list[tuple[str, object]]] = {}


def _field_hints(cls: type) -> list[tuple[str, object]]:
    cached = _HINTS_CACHE.get(cls)
    if cached is None:
        hints = typing.get_type_hints(cls)
        cached = [(f.name, hints[f.name]) for f in fields(cls)]
        _HINTS_CACHE[cls] = cached
    return cached


def _is_optional(hint) -> bool:
    return typing.get_origin(hint) in (typing.Union, types.UnionType) and type(
        None
    ) in typing.get_args(hint)


def _is_payload_union(hint) -> bool:
    if typing.get_origin(hint) not in (typing.Union, types.UnionType):
        return False
    args = typing.get_args(hint)
    return type(None) not in args and all(a in PAYLOAD_TAGS for a in args)


def _encode_value(value, hint, out: bytearray) -> None:
    if _is_optional(hint):
        if value is None:
            out.append(0)
            return
        out.append(1)
        inner = [a for a in typing.get_args(hint) if a is not type(None)][0]
        _encode_value(value, inner, out)
    elif hint is bytes:
        out += struct.pack(">I", len(value))
        out += value
    elif hint is str:
        raw = value.encode("utf-8")
        out += struct.pack(">I", len(raw))
        out += raw
    elif isinstance(hint, type) and issubclass(hint, IntEnum):
        out.append(int(value))
    elif hint is int:
        out += struct.pack(">Q", value)
    elif typing.get_origin(hint) is tuple:
        elem = typing.get_args(hint)[0]
        out += struct.pack(">I", len(value))
        for item in value:
            if _is_payload_union(elem):
                out += canonical_encode(item)
            else:
                _encode_value(item, elem, out)
    else:  # pragma: no cover - schema bug
        raise TypeError(f"unsupported field type: {hint!r}")


def canonical_encode(payload: Payload) -> bytes:
    """Deterministic byte encoding; equal payloads yield byte-equal output."""
    out = bytearray()
    out.append(PAYLOAD_TAGS[type(payload)])
    for name, hint in _field_hints(type(payload)):
        _encode_value(getattr(payload, name), hint, out)
    return bytes(out)


class _Reader:
    """Byte cursor that turns short reads into ParseError with the offset."""

    def __init__(self, data: bytes, base_offset: int = 0):
        self.data = data
        self.pos = 0
        self.base = base_offset

    @property
    def offset(self) -> int:
        return self.base + self.pos

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ParseError("unexpected end of data", self.offset)
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]

    def blob(self) -> bytes:
        return self.take(self.u32())


def _decode_value(reader: _Reader, hint):
    if _is_optional(hint):
        if reader.u8() == 0:
            return None
        inner = [a for a in typing.get_args(hint) if a is not type(None)][0]
        return _decode_value(reader, inner)
    if hint is bytes:
        return reader.blob()
    if hint is str:
        return reader.blob().decode("utf-8")
    if isinstance(hint, type) and issubclass(hint, IntEnum):
        raw = reader.u8()
        try:
            return hint(raw)
        except ValueError:
            raise ParseError(f"invalid {hint.__name__} value {raw}", reader.offset - 1)
    if hint is int:
        return reader.u64()
    if typing.get_origin(hint) is tuple:
        elem = typing.get_args(hint)[0]
        count = reader.u32()
        items = []
        for _ in range(count):
            if _is_payload_union(elem):
                items.append(_decode_payload(reader))
            else:
                items.append(_decode_value(reader, elem))
        return tuple(items)
    raise TypeError(f"unsupported field type: {hint!r}")  # pragma: no cover


def _decode_payload(reader: _Reader) -> Payload:
    tag = reader.u8()
    cls = TAG_PAYLOADS.get(tag)
    if cls is None:
        raise ParseError(f"unknown payload tag {tag}", reader.offset - 1)
    values = {name: _decode_value(reader, hint) for name, hint in _field_hints(cls)}
    return cls(**values)


def canonical_decode(data: bytes, base_offset: int = 0) -> Payload:
    reader = _Reader(data, base_offset)
    payload = _decode_payload(reader)
    if reader.pos != len(data):
        raise ParseError("trailing bytes after payload", reader.offset)
    return payload


# --- signed records ----------------------------------------------------------

@dataclass(frozen=True)
class SignedRecord:
    payload: Payload
    issuer: bytes  # fingerprint of public_key
    public_key: bytes
    timestamp: int  # ms since epoch, caller-supplied
    checksum: bytes  # digest of canonical payload encoding; record identity
    signature: bytes


def _signing_message(payload_bytes: bytes, timestamp: int, checksum: bytes) -> bytes:
    return payload_bytes + struct.pack(">Q", timestamp) + checksum


def sign_record(payload: Payload, issuer: Identity, timestamp: int) -> SignedRecord:
    if not issuer.can_sign:
        raise SigningCapabilityError("issuer identity cannot sign")
    payload_bytes = canonical_encode(payload)
    checksum = digest(payload_bytes)
    signature = issuer.sign(_signing_message(payload_bytes, timestamp, checksum))
    return SignedRecord(
        payload=payload,
        issuer=issuer.fingerprint,
        public_key=issuer.public_key,
        timestamp=timestamp,
        checksum=checksum,
        signature=signature,
    )


def verify_record(record: SignedRecord) -> bool:
    if fingerprint_of(record.public_key) != record.issuer:
        return False
    payload_bytes = canonical_encode(record.payload)
    if digest(payload_bytes) != record.checksum:
        return False
    return verify_signature(
        record.public_key,
        record.signature,
        _signing_message(payload_bytes, record.timestamp, record.checksum),
    )


def encode_record(record: SignedRecord) -> bytes:
    out = bytearray()
    payload_bytes = canonical_encode(record.payload)
    out += struct.pack(">I", len(payload_bytes))
    out += payload_bytes
    out += record.issuer
    out += struct.pack(">I", len(record.public_key))
    out += record.public_key
    out += struct.pack(">Q", record.timestamp)
    out += record.checksum
    out += struct.pack(">I", len(record.signature))
    out += record.signature
    return bytes(out)


def decode_record(reader: _Reader, verify_checksum: bool = True) -> SignedRecord:
    payload_bytes = reader.blob()
    payload = canonical_decode(payload_bytes, reader.offset - len(payload_bytes))
    issuer = reader.take(32)
    public_key = reader.blob()
    timestamp = reader.u64()
    checksum = reader.take(32)
    signature = reader.blob()
    if verify_checksum and digest(payload_bytes) != checksum:
        from .errors import IntegrityError

        raise IntegrityError("record checksum does not match payload")
    return SignedRecord(payload, issuer, public_key, timestamp, checksum, signature)
