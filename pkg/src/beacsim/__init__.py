"""Blockchain-embedded access control: ledger, policy replay, and latency sim."""

from .chain import Block, Ledger, load, persist, verify_chain
from .dac import Decision, DeviceTree, build_device_tree, check_access_dac
from .abac import AttributeRegistry, apply_abac, check_access_abac
from .rbac import RoleRegistry, apply_rbac, apply_rbac_batch, check_access_rbac, effective_roles
from .identity import EVERYBODY, NOBODY, Identity
from .netsim import Channel, DistSpec, LatencyModel, LatencySampler, SimClock, Topology
from .protocols import (
    AccessRequest,
    Eligibility,
    Outcome,
    PathKind,
    ProtocolTrace,
    run_full_path,
    run_shortcut_internet,
    run_shortcut_local,
)
from .records import (
    Effect,
    PermissionType,
    SignedRecord,
    TokenKind,
    canonical_encode,
    sign_record,
    verify_record,
)
from .state import DomainState, replay
from .tokens import AccessToken, SessionKey, TokenService, TotpGrant, totp_issue, totp_redeem
from .validators import DelayMode, ValidatorCluster, commit, validate_records

__version__ = "0.1.0"
