"""Simulated consortium validator cluster.

The real chained-BFT protocol is treated as a black box: non-faulty
validators check records deterministically and vote, a commit needs 2f+1
votes, and commit latency follows the configured delay formula (5 internet
round trips in the optimal case, R+4 in the worst case).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from enum import Enum

from .chain import Ledger
from .dac import Decision
from .errors import BeacError, PolicyViolation, StallTimeoutError
from .netsim import Channel, LatencySampler
from .records import DomainRegistration, SignedRecord, TokenCommit
from .state import DomainState
from .identity import fp_hex


class DelayMode(Enum):
    OPTIMAL = "optimal"
    WORST = "worst"


OPTIMAL_ROUNDS = 5  # consensus cost in internet round trips, optimal case


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    reason: str = ""


@dataclass(frozen=True)
class CommitResult:
    certificate: frozenset[bytes]
    latency_ms: float


@dataclass
class ValidatorCluster:
    validators: tuple[bytes, ...]  # fingerprints
    f: int
    faulty: frozenset[bytes] = frozenset()
    mode: DelayMode = DelayMode.OPTIMAL
    r: int = 4  # round parameter for the worst-case formula
    timeout_ms: float = 60_000.0
    consortium: frozenset[bytes] = frozenset()  # allowed domain registrars

    def __post_init__(self):
        if len(self.validators) != 3 * self.f + 1:
            raise ValueError("cluster size must be 3f+1")
        if not self.faulty <= set(self.validators):
            raise ValueError("fault set must be a subset of the validators")

    @property
    def n(self) -> int:
        return len(self.validators)

    @property
    def quorum(self) -> int:
        return 2 * self.f + 1

    @property
    def rounds(self) -> int:
        if self.mode == DelayMode.OPTIMAL:
            return OPTIMAL_ROUNDS
        return self.r + 4


def validate_records(
    cluster: ValidatorCluster,
    state: DomainState | None,
    ledger: Ledger,
    records: list[SignedRecord],
) -> list[Verdict]:
    """One deterministic verdict per record, as every honest validator computes.

    Checks: signature, issuer authority, record uniqueness, and a clean apply
    against a scratch copy of the committed policy state.
    """
    from .records import verify_record

    verdicts: list[Verdict] = []
    scratch = copy.deepcopy(state) if state is not None else None
    seen: set[bytes] = set()
    for record in records:
        if not verify_record(record):
            verdicts.append(Verdict(False, "invalid signature or checksum"))
            continue
        if record.checksum in ledger.index or record.checksum in seen:
            verdicts.append(Verdict(False, "duplicate record"))
            continue
        payload = record.payload
        if isinstance(payload, DomainRegistration):
            if cluster.consortium and record.issuer not in cluster.consortium:
                verdicts.append(Verdict(False, "registrar not a consortium member"))
                continue
            if scratch is None:
                try:
                    scratch = DomainState.bootstrap(payload)
                except PolicyViolation as exc:
                    verdicts.append(Verdict(False, str(exc)))
                    continue
            seen.add(record.checksum)
            verdicts.append(Verdict(True))
            continue
        if scratch is None:
            verdicts.append(Verdict(False, "no domain state; genesis missing"))
            continue
        if isinstance(payload, TokenCommit):
            try:
                decision = scratch.decide(
                    payload.user, payload.device, payload.service, payload.permission
                )
            except BeacError as exc:
                verdicts.append(Verdict(False, str(exc)))
                continue
            if decision != Decision.PERMIT:
                verdicts.append(
                    Verdict(False, f"policy denies {fp_hex(payload.user)[:16]}")
                )
                continue
            seen.add(record.checksum)
            verdicts.append(Verdict(True))
            continue
        try:
            scratch.apply(payload, record.issuer)
        except PolicyViolation as exc:
            verdicts.append(Verdict(False, str(exc)))
            continue
        seen.add(record.checksum)
        verdicts.append(Verdict(True))
    return verdicts


def commit(
    cluster: ValidatorCluster,
    records: list[SignedRecord],
    sampler: LatencySampler,
) -> CommitResult:
    """Collect quorum votes and return the certificate plus consensus latency.

    Faulty validators withhold their vote; with more than f of them the
    quorum is unreachable and the commit stalls out.
    """
    honest = tuple(v for v in cluster.validators if v not in cluster.faulty)
    if len(honest) < cluster.quorum:
        raise StallTimeoutError(cluster.timeout_ms)
    latency = sum(sampler.sample(Channel.INT) for _ in range(cluster.rounds))
    return CommitResult(certificate=frozenset(honest), latency_ms=latency)
