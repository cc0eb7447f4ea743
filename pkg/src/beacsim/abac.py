"""Attribute registry replay and attribute-based access decisions.

Attributes live on the hub as UID-keyed metadata. Deleting an attribute
nullifies its UID forever; a new attribute with the same name gets a fresh
UID. Decisions layer over the DAC tree: a matching DENY tuple beats any ACL
grant, except for the device owner.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .dac import Decision, DeviceTree, check_access_dac
from .errors import AuthorityViolation, DuplicateUidError, StaleUidError
from .identity import fp_hex
from .records import (
    AssignAttributeDevice,
    AssignAttributePermission,
    AssignAttributeUser,
    DeleteAttribute,
    Effect,
    NewAttribute,
    Payload,
    PermissionType,
    RemoveAttributeDevice,
    RemoveAttributeUser,
    RevokeAttributePermission,
)

PermTuple = tuple[int, int, PermissionType, Effect]  # (user-attr, device-attr, ...)


@dataclass
class AttributeRegistry:
    domain: str
    admin: bytes  # domain owner; only issuer allowed to manage attributes
    live: dict[int, bytes] = field(default_factory=dict)  # uid -> opaque name
    nullified: set[int] = field(default_factory=set)
    user_assignments: dict[bytes, set[int]] = field(default_factory=dict)
    device_assignments: dict[tuple[bytes, str | None], set[int]] = field(
        default_factory=dict
    )
    tuples: set[PermTuple] = field(default_factory=set)

    def next_uid(self) -> int:
        issued = self.live.keys() | self.nullified
        return max(issued, default=0) + 1

    def _require_live(self, uid: int) -> None:
        if uid not in self.live:
            raise StaleUidError(f"attribute UID {uid} is unknown or nullified")


def apply_abac(registry: AttributeRegistry, payload: Payload, issuer: bytes) -> None:
    if payload.domain != registry.domain:
        return  # record belongs to another domain
    if issuer != registry.admin:
        raise AuthorityViolation(
            f"issuer {fp_hex(issuer)} may not manage attributes of {registry.domain}"
        )
    if isinstance(payload, NewAttribute):
        if payload.uid in registry.live or payload.uid in registry.nullified:
            raise DuplicateUidError(f"attribute UID {payload.uid} already issued")
        registry.live[payload.uid] = payload.name
    elif isinstance(payload, DeleteAttribute):
        registry._require_live(payload.uid)
        del registry.live[payload.uid]
        registry.nullified.add(payload.uid)
        for uids in registry.user_assignments.values():
            uids.discard(payload.uid)
        for uids in registry.device_assignments.values():
            uids.discard(payload.uid)
        registry.tuples = {
            t for t in registry.tuples if payload.uid not in (t[0], t[1])
        }
    elif isinstance(payload, AssignAttributeUser):
        registry._require_live(payload.uid)
        registry.user_assignments.setdefault(payload.user, set()).add(payload.uid)
    elif isinstance(payload, RemoveAttributeUser):
        registry._require_live(payload.uid)
        registry.user_assignments.get(payload.user, set()).discard(payload.uid)
    elif isinstance(payload, AssignAttributeDevice):
        registry._require_live(payload.uid)
        key = (payload.device, payload.service)
        registry.device_assignments.setdefault(key, set()).add(payload.uid)
    elif isinstance(payload, RemoveAttributeDevice):
        registry._require_live(payload.uid)
        key = (payload.device, payload.service)
        registry.device_assignments.get(key, set()).discard(payload.uid)
    elif isinstance(payload, AssignAttributePermission):
        registry._require_live(payload.user_uid)
        registry._require_live(payload.device_uid)
        registry.tuples.add(
            (payload.user_uid, payload.device_uid, payload.permission, payload.effect)
        )
    elif isinstance(payload, RevokeAttributePermission):
        registry._require_live(payload.user_uid)
        registry._require_live(payload.device_uid)
        # Removes the tuple whatever its effect.
        registry.tuples = {
            t
            for t in registry.tuples
            if not (
                t[0] == payload.user_uid
                and t[1] == payload.device_uid
                and t[2] == payload.permission
            )
        }
    else:
        raise TypeError(f"not an ABAC record: {type(payload).__name__}")


def _device_attrs(
    registry: AttributeRegistry, device: bytes, service: str | None
) -> set[int]:
    # Device-level attributes describe the whole device and so apply to its
    # services as well; service-level attributes are scoped to the service.
    attrs = set(registry.device_assignments.get((device, None), set()))
    if service is not None:
        attrs |= registry.device_assignments.get((device, service), set())
    return attrs


def check_access_abac(
    registry: AttributeRegistry,
    tree: DeviceTree,
    user: bytes,
    device: bytes,
    service: str | None,
    permission: PermissionType,
) -> Decision:
    dac = check_access_dac(tree, user, device, service, permission)
    node = tree.node_of(device)
    if node is not None and user == node.owner:
        return Decision.PERMIT  # owner exempt from attribute denials
    user_attrs = registry.user_assignments.get(user, set())
    dev_attrs = _device_attrs(registry, device, service)
    matched_grant = False
    for u_uid, d_uid, perm, effect in registry.tuples:
        if perm != permission or u_uid not in user_attrs or d_uid not in dev_attrs:
            continue
        if effect == Effect.DENY:
            return Decision.DENY  # denial precedence over any ACL grant
        matched_grant = True
    if matched_grant or dac == Decision.PERMIT:
        return Decision.PERMIT
    return Decision.DENY


def dump_attributes(registry: AttributeRegistry) -> str:
    lines = [f"attributes domain={registry.domain}"]
    for uid in sorted(registry.live):
        lines.append(f"  live {uid} name={registry.live[uid].hex()}")
    if registry.nullified:
        lines.append("  nullified " + ",".join(str(u) for u in sorted(registry.nullified)))
    for user in sorted(registry.user_assignments):
        uids = registry.user_assignments[user]
        if uids:
            lines.append(
                f"  user {fp_hex(user)} -> {sorted(uids)}"
            )
    for (device, service) in sorted(
        registry.device_assignments, key=lambda k: (k[0], k[1] or "")
    ):
        uids = registry.device_assignments[(device, service)]
        if uids:
            svc = f"/{service}" if service else ""
            lines.append(f"  device {fp_hex(device)}{svc} -> {sorted(uids)}")
    for u_uid, d_uid, perm, effect in sorted(
        registry.tuples, key=lambda t: (t[0], t[1], t[2], t[3])
    ):
        lines.append(f"  tuple ({u_uid},{d_uid},{perm.name},{effect.name})")
    return "\n".join(lines) + "\n"
