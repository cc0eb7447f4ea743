"""The three access procedures: full path, internet shortcut, local shortcut.

Each run produces a timestamped trace over the virtual clock. Per-trial
latency draws are shared between paths so protocol comparisons isolate the
protocol effect from sampling noise: every path reads the same T_int stream,
the same T_loc, and the same T_p2p.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .chain import Ledger
from .dac import Decision
from .errors import EligibilityError, StallTimeoutError, TopologyError
from .identity import Identity
from .netsim import Channel, LatencySampler, SimClock, Topology
from .records import PermissionType, TokenKind, sign_record
from .state import DomainState
from .tokens import TokenService
from .validators import ValidatorCluster, Verdict, validate_records
from .validators import commit as cluster_commit


class PathKind(Enum):
    FULL = "full"
    SHORTCUT_INTERNET = "shortcut_internet"
    SHORTCUT_LOCAL = "shortcut_local"


class Eligibility(Enum):
    OWNER = "owner"
    PERMANENT_USER = "permanent_user"
    GUEST = "guest"


class Outcome(Enum):
    GRANTED = "granted"
    DENIED = "denied"
    REVOKED_AFTER_GRANT = "revoked_after_grant"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class AccessRequest:
    user: bytes
    device: bytes
    service: str | None
    permission: PermissionType
    path: PathKind
    eligibility: Eligibility
    token_kind: TokenKind | None = None  # default derived from eligibility
    expiry: int = 0


@dataclass(frozen=True)
class Step:
    name: str
    start: float
    end: float

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass
class ProtocolTrace:
    path: PathKind
    steps: list[Step]
    total: float
    outcome: Outcome
    token_id: bytes | None = None


class TrialDraws:
    """Memoized per-trial latency tuple shared by all paths."""

    def __init__(self, sampler: LatencySampler):
        self._sampler = sampler
        self._t_int: list[float] = []
        self._t_loc: float | None = None
        self._t_p2p: float | None = None

    def t_int(self, i: int) -> float:
        while len(self._t_int) <= i:
            self._t_int.append(self._sampler.sample(Channel.INT))
        return self._t_int[i]

    @property
    def t_loc(self) -> float:
        if self._t_loc is None:
            self._t_loc = self._sampler.sample(Channel.LOC)
        return self._t_loc

    @property
    def t_p2p(self) -> float:
        if self._t_p2p is None:
            self._t_p2p = self._sampler.sample(Channel.P2P)
        return self._t_p2p


@dataclass
class World:
    clock: SimClock
    sampler: LatencySampler
    topology: Topology
    cluster: ValidatorCluster
    state: DomainState
    ledger: Ledger
    tokens: TokenService
    hub_identity: Identity
    validators_online: bool = True


def _default_kind(request: AccessRequest) -> TokenKind:
    if request.token_kind is not None:
        return request.token_kind
    if request.eligibility in (Eligibility.OWNER, Eligibility.PERMANENT_USER):
        return TokenKind.PERMANENT
    return TokenKind.EXPIRING if request.expiry else TokenKind.SINGLE_USE


def _commit_token(world: World, commit_payload, draws: TrialDraws, base: int):
    """Run consensus over the token commit using the shared T_int stream.

    Returns (latency, verdict). Raises StallTimeoutError when the quorum is
    unreachable.
    """
    honest = tuple(
        v for v in world.cluster.validators if v not in world.cluster.faulty
    )
    if not world.validators_online or len(honest) < world.cluster.quorum:
        raise StallTimeoutError(world.cluster.timeout_ms)
    record = sign_record(commit_payload, world.hub_identity, int(world.clock.now))
    (verdict,) = validate_records(world.cluster, world.state, world.ledger, [record])
    latency = sum(
        draws.t_int(base + i) for i in range(world.cluster.rounds)
    )
    if verdict.accepted:
        world.ledger.append_block([record], frozenset(honest))
    return latency, verdict


def run_full_path(request: AccessRequest, world: World, draws: TrialDraws | None = None) -> ProtocolTrace:
    """Initiation, hub verification, consensus, token acquisition, service."""
    if draws is None:
        draws = TrialDraws(world.sampler)
    t0 = world.clock.now
    steps = [Step("connection-initiation", t0, t0 + draws.t_int(0))]
    cursor = steps[-1].end
    steps.append(Step("hub-verification", cursor, cursor + draws.t_int(1)))
    cursor = steps[-1].end
    decision = world.state.decide(
        request.user, request.device, request.service, request.permission
    )
    if decision != Decision.PERMIT:
        total = cursor - t0
        world.clock.advance(total)
        return ProtocolTrace(PathKind.FULL, steps, total, Outcome.DENIED)
    token, key, commit_payload = world.tokens.issue_token(
        decision,
        request.user,
        request.device,
        request.service,
        request.permission,
        _default_kind(request),
        int(world.clock.now),
        expiry=request.expiry,
    )
    try:
        latency, verdict = _commit_token(world, commit_payload, draws, base=2)
    except StallTimeoutError as exc:
        steps.append(Step("validator-consensus", cursor, cursor + exc.bound_ms))
        total = steps[-1].end - t0
        world.clock.advance(total)
        return ProtocolTrace(PathKind.FULL, steps, total, Outcome.TIMEOUT, token.token_id)
    steps.append(Step("validator-consensus", cursor, cursor + latency))
    cursor = steps[-1].end
    if not verdict.accepted:
        world.tokens.revoke(token.token_id)
        total = cursor - t0
        world.clock.advance(total)
        return ProtocolTrace(PathKind.FULL, steps, total, Outcome.DENIED, token.token_id)
    world.tokens.ratify(token.token_id)
    steps.append(
        Step("token-acquisition", cursor, cursor + draws.t_int(2 + world.cluster.rounds))
    )
    cursor = steps[-1].end
    # Session key to the device, then the user's direct p2p connection.
    steps.append(Step("service-initiation", cursor, cursor + draws.t_loc + draws.t_p2p))
    total = steps[-1].end - t0
    world.clock.advance(total)
    world.tokens.redeem(token.token_id, key.key, int(world.clock.now))
    return ProtocolTrace(PathKind.FULL, steps, total, Outcome.GRANTED, token.token_id)


def run_shortcut_internet(
    request: AccessRequest,
    world: World,
    draws: TrialDraws | None = None,
    interfere: Callable[[World], None] | None = None,
) -> ProtocolTrace:
    """Immediate token with background validation; p2p races the token round.

    `interfere` runs between token issuance and background validation, standing
    in for policy changes that race the grant.
    """
    if request.eligibility == Eligibility.GUEST:
        raise EligibilityError("shortcut access requires owner or permanent user")
    if draws is None:
        draws = TrialDraws(world.sampler)
    t0 = world.clock.now
    d0, d1 = draws.t_int(0), draws.t_int(1)
    steps = [Step("connection-initiation", t0, t0 + d0)]
    cursor = steps[-1].end
    steps.append(Step("hub-verification", cursor, cursor + d1))
    cursor = steps[-1].end
    decision = world.state.decide(
        request.user, request.device, request.service, request.permission
    )
    if decision != Decision.PERMIT:
        total = cursor - t0
        world.clock.advance(total)
        return ProtocolTrace(PathKind.SHORTCUT_INTERNET, steps, total, Outcome.DENIED)
    token, key, commit_payload = world.tokens.issue_token(
        decision,
        request.user,
        request.device,
        request.service,
        request.permission,
        _default_kind(request),
        int(world.clock.now),
        expiry=request.expiry,
    )
    # Session key delivery overlaps the service step; never on the critical path.
    steps.append(Step("session-key-delivery", cursor, cursor + draws.t_loc))
    steps.append(
        Step("service-initiation", cursor, cursor + max(draws.t_p2p - (d0 + d1), 0.0))
    )
    total = steps[-1].end - t0
    world.clock.advance(total)
    world.tokens.redeem(token.token_id, key.key, int(world.clock.now), allow_pending=True)
    if interfere is not None:
        interfere(world)
    outcome = Outcome.GRANTED
    if world.validators_online:
        try:
            _, verdict = _commit_token(world, commit_payload, draws, base=2)
        except StallTimeoutError:
            verdict = None  # ratification deferred; token stays pending
        if verdict is not None:
            if verdict.accepted:
                world.tokens.ratify(token.token_id)
            else:
                world.tokens.revoke(token.token_id)
                outcome = Outcome.REVOKED_AFTER_GRANT
    return ProtocolTrace(PathKind.SHORTCUT_INTERNET, steps, total, outcome, token.token_id)


def run_shortcut_local(
    request: AccessRequest, world: World, draws: TrialDraws | None = None
) -> ProtocolTrace:
    """Three local round trips; works with validators unreachable."""
    if request.eligibility == Eligibility.GUEST:
        raise EligibilityError("shortcut access requires owner or permanent user")
    if request.user in world.topology.peers and request.device in world.topology.peers:
        if not world.topology.same_subnet(request.user, request.device):
            raise TopologyError("local shortcut requires user and device in one subnet")
    if draws is None:
        draws = TrialDraws(world.sampler)
    t0 = world.clock.now
    t_loc = draws.t_loc
    steps = [Step("token-retrieval", t0, t0 + t_loc)]
    cursor = steps[-1].end
    decision = world.state.decide(
        request.user, request.device, request.service, request.permission
    )
    steps.append(Step("hub-verification", cursor, cursor + t_loc))
    cursor = steps[-1].end
    if decision != Decision.PERMIT:
        total = cursor - t0
        world.clock.advance(total)
        return ProtocolTrace(PathKind.SHORTCUT_LOCAL, steps, total, Outcome.DENIED)
    token, key, commit_payload = world.tokens.issue_token(
        decision,
        request.user,
        request.device,
        request.service,
        request.permission,
        _default_kind(request),
        int(world.clock.now),
        expiry=request.expiry,
    )
    steps.append(Step("service-initiation", cursor, cursor + t_loc))
    total = steps[-1].end - t0
    world.clock.advance(total)
    world.tokens.redeem(token.token_id, key.key, int(world.clock.now), allow_pending=True)
    outcome = Outcome.GRANTED
    if world.validators_online:
        # Deferred ratification happens in the background; it never gates access.
        try:
            result = cluster_commit(
                world.cluster,
                [sign_record(commit_payload, world.hub_identity, int(world.clock.now))],
                world.sampler,
            )
        except StallTimeoutError:
            result = None
        if result is not None:
            world.tokens.ratify(token.token_id)
    return ProtocolTrace(PathKind.SHORTCUT_LOCAL, steps, total, outcome, token.token_id)


_RUNNERS = {
    PathKind.FULL: run_full_path,
    PathKind.SHORTCUT_INTERNET: run_shortcut_internet,
    PathKind.SHORTCUT_LOCAL: run_shortcut_local,
}


def run_path(request: AccessRequest, world: World, draws: TrialDraws | None = None) -> ProtocolTrace:
    return _RUNNERS[request.path](request, world, draws)
