"""Device tree reconstruction and discretionary access decisions.

The tree is rebuilt by replaying registration and permission records in ledger
order. Replay starts at the genesis domain registration matching the
activation user; every later record dispatches to one handler. Handlers also
enforce the validation steps a live hub needs (issuer authority, registration
immutability, leaf-only revocation) and raise PolicyViolation subclasses so
validators can reject bad records before commit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator

from .errors import (
    AuthorityViolation,
    ConsistencyError,
    ImmutabilityViolation,
    NoGenesisError,
    UnknownDeviceError,
)
from .identity import EVERYBODY, fp_hex
from .records import (
    DAC_KINDS,
    DeviceRegistration,
    DeviceRevocation,
    DomainRegistration,
    Payload,
    PermissionGranted,
    PermissionRevoked,
    PermissionType,
)

logger = logging.getLogger(__name__)

AclEntry = tuple[bytes, PermissionType]


class Decision(Enum):
    PERMIT = "permit"
    DENY = "deny"


@dataclass
class DeviceNode:
    device: bytes  # fingerprint; empty for the synthetic root node
    owner: bytes
    acl: set[AclEntry] = field(default_factory=set)
    services: dict[str, set[AclEntry]] = field(default_factory=dict)
    children: list["DeviceNode"] = field(default_factory=list)


@dataclass
class DeviceTree:
    domain: str
    owner: bytes  # activation user / hub owner
    ac_model: str
    root: DeviceNode
    known_id_map: dict[bytes, DeviceNode] = field(default_factory=dict)
    revoked: set[bytes] = field(default_factory=set)

    @classmethod
    def bootstrap(cls, record: DomainRegistration) -> "DeviceTree":
        root = DeviceNode(device=b"", owner=record.owner)
        tree = cls(
            domain=record.domain,
            owner=record.owner,
            ac_model=record.ac_model,
            root=root,
        )
        # The hub owner's fingerprint anchors root-level device insertion.
        tree.known_id_map[record.owner] = root
        return tree

    def node_of(self, device: bytes) -> DeviceNode | None:
        node = self.known_id_map.get(device)
        if node is not None and node.device == device:
            return node
        return None


def _is_authorized(node: DeviceNode, issuer: bytes) -> bool:
    """Owner, or holder of CHMOD on this node (not inherited from ancestors)."""
    return issuer == node.owner or (issuer, PermissionType.CHMOD) in node.acl


def handle_device_add(tree: DeviceTree, record: DeviceRegistration, issuer: bytes) -> None:
    existing = tree.node_of(record.device)
    if existing is not None:
        raise ImmutabilityViolation(
            f"device {fp_hex(record.device)} already registered"
        )
    parent = tree.known_id_map.get(record.owner)
    if parent is None:
        # Owner unknown to this domain: not an error, the record simply
        # belongs elsewhere (matches the reconstruction guard).
        return
    if issuer not in (record.owner, record.device) and not _is_authorized(parent, issuer):
        raise AuthorityViolation(
            f"issuer {fp_hex(issuer)} may not register under {fp_hex(record.owner)}"
        )
    node = DeviceNode(
        device=record.device,
        owner=record.owner,
        services={name: set() for name in record.services},
    )
    parent.children.append(node)  # devices always enter as leaves
    tree.known_id_map[record.device] = node
    tree.revoked.discard(record.device)


def handle_device_del(tree: DeviceTree, record: DeviceRevocation, issuer: bytes) -> None:
    node = tree.node_of(record.device)
    if node is None:
        return
    if issuer != node.owner:
        raise AuthorityViolation(
            f"issuer {fp_hex(issuer)} is not the owner of {fp_hex(record.device)}"
        )
    if node.children:
        raise ConsistencyError(
            f"device {fp_hex(record.device)} has children; revoke leaves first"
        )
    parent = tree.known_id_map.get(node.owner)
    if parent is not None:
        parent.children.remove(node)
    del tree.known_id_map[record.device]
    tree.revoked.add(record.device)


def _target_acl(node: DeviceNode, service: str | None) -> set[AclEntry]:
    if service is None:
        return node.acl
    return node.services.setdefault(service, set())


def handle_perm_add(tree: DeviceTree, record: PermissionGranted, issuer: bytes) -> None:
    node = tree.node_of(record.device)
    if node is None:
        return
    if not _is_authorized(node, issuer):
        raise AuthorityViolation(
            f"issuer {fp_hex(issuer)} may not grant on {fp_hex(record.device)}"
        )
    _target_acl(node, record.service).add((record.user, record.permission))


def handle_perm_del(tree: DeviceTree, record: PermissionRevoked, issuer: bytes) -> None:
    node = tree.node_of(record.device)
    if node is None:
        return
    if not _is_authorized(node, issuer):
        raise AuthorityViolation(
            f"issuer {fp_hex(issuer)} may not revoke on {fp_hex(record.device)}"
        )
    if record.service is not None:
        acl = node.services.get(record.service)
        if acl is None:
            return  # absent service: no-op, do not materialize an empty ACL
    else:
        acl = node.acl
    acl.discard((record.user, record.permission))


_DAC_HANDLERS = {
    DeviceRegistration: handle_device_add,
    DeviceRevocation: handle_device_del,
    PermissionGranted: handle_perm_add,
    PermissionRevoked: handle_perm_del,
}


def apply_dac(tree: DeviceTree, payload: Payload, issuer: bytes) -> None:
    handler = _DAC_HANDLERS.get(type(payload))
    if handler is None:
        logger.warning("ignoring non-DAC record %s", type(payload).__name__)
        return
    handler(tree, payload, issuer)


def build_device_tree(
    records: Iterable[tuple[Payload, bytes]], activation_user: bytes
) -> DeviceTree:
    """Rebuild a device tree from (payload, issuer) pairs in ledger order.

    Consumes records until a domain registration owned by the activation user
    appears (the genesis), then replays the remainder through the handlers.
    """
    stream: Iterator[tuple[Payload, bytes]] = iter(records)
    tree: DeviceTree | None = None
    for payload, _issuer in stream:
        if isinstance(payload, DomainRegistration) and payload.owner == activation_user:
            tree = DeviceTree.bootstrap(payload)
            break
    if tree is None:
        raise NoGenesisError(
            f"no domain registration owned by {fp_hex(activation_user)}"
        )
    for payload, issuer in stream:
        if isinstance(payload, DAC_KINDS) and not isinstance(payload, DomainRegistration):
            apply_dac(tree, payload, issuer)
    return tree


def check_access_dac(
    tree: DeviceTree,
    user: bytes,
    device: bytes,
    service: str | None,
    permission: PermissionType,
) -> Decision:
    node = tree.node_of(device)
    if node is None:
        raise UnknownDeviceError(f"device {fp_hex(device)} is not registered")
    if user == node.owner:
        return Decision.PERMIT  # owner access is irrevocable
    if service is not None:
        acl = node.services.get(service, set())
    else:
        acl = node.acl
    if (user, permission) in acl or (EVERYBODY, permission) in acl:
        return Decision.PERMIT
    return Decision.DENY


def _dump_acl(acl: set[AclEntry]) -> str:
    entries = sorted((fp_hex(u), p.name) for u, p in acl)
    return "[" + ", ".join(f"({u},{p})" for u, p in entries) + "]"


def _dump_node(node: DeviceNode, depth: int, lines: list[str]) -> None:
    pad = "  " * depth
    name = fp_hex(node.device) if node.device else "<root>"
    lines.append(f"{pad}{name} owner={fp_hex(node.owner)} acl={_dump_acl(node.acl)}")
    for svc in sorted(node.services):
        lines.append(f"{pad}  service {svc} acl={_dump_acl(node.services[svc])}")
    for child in sorted(node.children, key=lambda n: n.device):
        _dump_node(child, depth + 1, lines)


def dump_tree(tree: DeviceTree) -> str:
    """Canonical text rendering with stable ordering; used for equality tests."""
    lines = [
        f"domain {tree.domain} owner={fp_hex(tree.owner)} model={tree.ac_model}"
    ]
    _dump_node(tree.root, 1, lines)
    return "\n".join(lines) + "\n"
