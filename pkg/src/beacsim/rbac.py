"""Role registry replay with an optional lattice hierarchy.

Flat RBAC is just the hierarchy-free special case. A parent role subsumes the
permissions of its children, so a user's effective roles are their assigned
roles plus everything reachable downward through parent->child edges.
Hierarchy restructuring ships as an atomic batch so role UIDs survive
temporary detachments.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .dac import Decision, DeviceTree, check_access_dac
from .errors import (
    AuthorityViolation,
    BatchAbortError,
    DuplicateUidError,
    HierarchyCycleError,
    StaleUidError,
)
from .identity import fp_hex
from .records import (
    AddRoleHierarchy,
    AssignRolePermission,
    AssignRoleUser,
    DeleteRole,
    Effect,
    NewRole,
    Payload,
    PermissionType,
    RemoveRoleHierarchy,
    RemoveRoleUser,
    RevokeRolePermission,
    RoleHierarchyBatch,
)

RolePerm = tuple[int, bytes, str | None, PermissionType, Effect]


@dataclass
class RoleRegistry:
    domain: str
    admin: bytes
    live: dict[int, str] = field(default_factory=dict)  # uid -> role name
    nullified: set[int] = field(default_factory=set)
    members: dict[int, set[bytes]] = field(default_factory=dict)
    permissions: set[RolePerm] = field(default_factory=set)
    hierarchy: set[tuple[int, int]] = field(default_factory=set)  # (parent, child)

    def next_uid(self) -> int:
        issued = self.live.keys() | self.nullified
        return max(issued, default=0) + 1

    def _require_live(self, uid: int) -> None:
        if uid not in self.live:
            raise StaleUidError(f"role UID {uid} is unknown or nullified")


def _descendants(registry: RoleRegistry, uid: int) -> set[int]:
    seen: set[int] = set()
    frontier = [uid]
    while frontier:
        current = frontier.pop()
        for parent, child in registry.hierarchy:
            if parent == current and child not in seen:
                seen.add(child)
                frontier.append(child)
    return seen


def apply_rbac(registry: RoleRegistry, payload: Payload, issuer: bytes) -> None:
    if payload.domain != registry.domain:
        return
    if issuer != registry.admin:
        raise AuthorityViolation(
            f"issuer {fp_hex(issuer)} may not manage roles of {registry.domain}"
        )
    if isinstance(payload, RoleHierarchyBatch):
        apply_rbac_batch(registry, payload.ops, issuer)
    elif isinstance(payload, NewRole):
        if payload.uid in registry.live or payload.uid in registry.nullified:
            raise DuplicateUidError(f"role UID {payload.uid} already issued")
        registry.live[payload.uid] = payload.name
    elif isinstance(payload, DeleteRole):
        registry._require_live(payload.uid)
        del registry.live[payload.uid]
        registry.nullified.add(payload.uid)
        registry.members.pop(payload.uid, None)
        registry.permissions = {p for p in registry.permissions if p[0] != payload.uid}
        registry.hierarchy = {
            e for e in registry.hierarchy if payload.uid not in e
        }
    elif isinstance(payload, AssignRoleUser):
        registry._require_live(payload.uid)
        registry.members.setdefault(payload.uid, set()).add(payload.user)
    elif isinstance(payload, RemoveRoleUser):
        registry._require_live(payload.uid)
        registry.members.get(payload.uid, set()).discard(payload.user)
    elif isinstance(payload, AssignRolePermission):
        registry._require_live(payload.uid)
        registry.permissions.add(
            (payload.uid, payload.device, payload.service, payload.permission, payload.effect)
        )
    elif isinstance(payload, RevokeRolePermission):
        registry._require_live(payload.uid)
        registry.permissions = {
            p
            for p in registry.permissions
            if not (
                p[0] == payload.uid
                and p[1] == payload.device
                and p[2] == payload.service
                and p[3] == payload.permission
            )
        }
    elif isinstance(payload, AddRoleHierarchy):
        registry._require_live(payload.parent_uid)
        registry._require_live(payload.child_uid)
        if payload.parent_uid == payload.child_uid or payload.parent_uid in _descendants(
            registry, payload.child_uid
        ):
            raise HierarchyCycleError(
                f"edge {payload.parent_uid}->{payload.child_uid} would create a cycle"
            )
        registry.hierarchy.add((payload.parent_uid, payload.child_uid))
    elif isinstance(payload, RemoveRoleHierarchy):
        registry._require_live(payload.parent_uid)
        registry._require_live(payload.child_uid)
        registry.hierarchy.discard((payload.parent_uid, payload.child_uid))
    else:
        raise TypeError(f"not an RBAC record: {type(payload).__name__}")


def apply_rbac_batch(
    registry: RoleRegistry, payloads: Sequence[Payload], issuer: bytes
) -> None:
    """All records apply or none do; intermediate states never escape."""
    staged = copy.deepcopy(registry)
    for index, payload in enumerate(payloads):
        try:
            apply_rbac(staged, payload, issuer)
        except Exception as exc:
            raise BatchAbortError(index, exc) from exc
    registry.live = staged.live
    registry.nullified = staged.nullified
    registry.members = staged.members
    registry.permissions = staged.permissions
    registry.hierarchy = staged.hierarchy


def effective_roles(registry: RoleRegistry, user: bytes) -> set[int]:
    assigned = {uid for uid, users in registry.members.items() if user in users}
    result = set(assigned)
    for uid in assigned:
        result |= _descendants(registry, uid)
    return result


def check_access_rbac(
    registry: RoleRegistry,
    tree: DeviceTree,
    user: bytes,
    device: bytes,
    service: str | None,
    permission: PermissionType,
) -> Decision:
    dac = check_access_dac(tree, user, device, service, permission)
    node = tree.node_of(device)
    if node is not None and user == node.owner:
        return Decision.PERMIT
    roles = effective_roles(registry, user)
    matched_grant = False
    for uid, dev, svc, perm, effect in registry.permissions:
        if uid not in roles or dev != device or perm != permission:
            continue
        if svc is not None and svc != service:
            continue  # device-level entries (svc None) cover every service
        if effect == Effect.DENY:
            return Decision.DENY
        matched_grant = True
    if matched_grant or dac == Decision.PERMIT:
        return Decision.PERMIT
    return Decision.DENY


def dump_roles(registry: RoleRegistry) -> str:
    lines = [f"roles domain={registry.domain}"]
    for uid in sorted(registry.live):
        lines.append(f"  live {uid} name={registry.live[uid]}")
    if registry.nullified:
        lines.append("  nullified " + ",".join(str(u) for u in sorted(registry.nullified)))
    for uid in sorted(registry.members):
        users = registry.members[uid]
        if users:
            lines.append(f"  members {uid} -> [" + ", ".join(sorted(fp_hex(u) for u in users)) + "]")
    for uid, dev, svc, perm, effect in sorted(
        registry.permissions, key=lambda p: (p[0], p[1], p[2] or "", p[3], p[4])
    ):
        target = fp_hex(dev) + (f"/{svc}" if svc else "")
        lines.append(f"  perm ({uid},{target},{perm.name},{effect.name})")
    for parent, child in sorted(registry.hierarchy):
        lines.append(f"  edge {parent}->{child}")
    return "\n".join(lines) + "\n"
