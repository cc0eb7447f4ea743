"""Composite policy state for one domain: device tree plus model registry.

This is what a hub holds in memory and what validators replay records against.
A domain runs exactly one access-control model; registering a combined domain
is rejected.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable

from .abac import AttributeRegistry, apply_abac, check_access_abac, dump_attributes
from .dac import (
    Decision,
    DeviceTree,
    apply_dac,
    check_access_dac,
    dump_tree,
)
from .errors import NoGenesisError, PolicyViolation
from .identity import fp_hex
from .rbac import RoleRegistry, apply_rbac, check_access_rbac, dump_roles
from .records import (
    ABAC_KINDS,
    DAC_KINDS,
    RBAC_KINDS,
    DomainRegistration,
    Payload,
    PermissionType,
    TokenCommit,
)

logger = logging.getLogger(__name__)

VALID_MODELS = ("dac", "abac", "rbac")


@dataclass
class DomainState:
    tree: DeviceTree
    attributes: AttributeRegistry | None = None
    roles: RoleRegistry | None = None

    @classmethod
    def bootstrap(cls, genesis: DomainRegistration) -> "DomainState":
        if genesis.ac_model not in VALID_MODELS:
            raise PolicyViolation(
                f"unsupported access-control model {genesis.ac_model!r}"
            )
        tree = DeviceTree.bootstrap(genesis)
        state = cls(tree=tree)
        if genesis.ac_model == "abac":
            state.attributes = AttributeRegistry(
                domain=genesis.domain, admin=genesis.owner
            )
        elif genesis.ac_model == "rbac":
            state.roles = RoleRegistry(domain=genesis.domain, admin=genesis.owner)
        return state

    @property
    def model(self) -> str:
        return self.tree.ac_model

    def apply(self, payload: Payload, issuer: bytes) -> None:
        if isinstance(payload, DomainRegistration):
            return  # later domain registrations belong to other domains
        if isinstance(payload, DAC_KINDS):
            apply_dac(self.tree, payload, issuer)
        elif isinstance(payload, ABAC_KINDS):
            if payload.domain != self.tree.domain:
                return
            if self.attributes is None:
                raise PolicyViolation(
                    f"domain {self.tree.domain} does not run ABAC"
                )
            apply_abac(self.attributes, payload, issuer)
        elif isinstance(payload, RBAC_KINDS):
            if payload.domain != self.tree.domain:
                return
            if self.roles is None:
                raise PolicyViolation(f"domain {self.tree.domain} does not run RBAC")
            apply_rbac(self.roles, payload, issuer)
        elif isinstance(payload, TokenCommit):
            pass  # ratification marker; carries no policy state
        else:
            logger.warning("ignoring unknown record kind %s", type(payload).__name__)

    def decide(
        self,
        user: bytes,
        device: bytes,
        service: str | None,
        permission: PermissionType,
    ) -> Decision:
        if self.attributes is not None:
            return check_access_abac(
                self.attributes, self.tree, user, device, service, permission
            )
        if self.roles is not None:
            return check_access_rbac(
                self.roles, self.tree, user, device, service, permission
            )
        return check_access_dac(self.tree, user, device, service, permission)

    def dump(self) -> str:
        parts = [dump_tree(self.tree)]
        if self.attributes is not None:
            parts.append(dump_attributes(self.attributes))
        if self.roles is not None:
            parts.append(dump_roles(self.roles))
        return "".join(parts)


def replay(
    records: Iterable[tuple[Payload, bytes]], activation_user: bytes
) -> DomainState:
    """Reconstruct domain state from (payload, issuer) pairs in ledger order."""
    stream = iter(records)
    state: DomainState | None = None
    for payload, _issuer in stream:
        if isinstance(payload, DomainRegistration) and payload.owner == activation_user:
            state = DomainState.bootstrap(payload)
            break
    if state is None:
        raise NoGenesisError(
            f"no domain registration owned by {fp_hex(activation_user)}"
        )
    for payload, issuer in stream:
        state.apply(payload, issuer)
    return state
