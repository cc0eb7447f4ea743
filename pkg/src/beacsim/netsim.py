"""Discrete-event substrate: virtual clock, seeded latency sampling, topology.

Three latency channels drive every protocol trace: INT (pub-sub internet
round trip), LOC (local round trip), and P2P (connection establishment
including hole punching). Each channel is either a fixed value or a lognormal
solved from a (median, P99) pair.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from statistics import NormalDist

import numpy as np

logger = logging.getLogger(__name__)

_Z99 = NormalDist().inv_cdf(0.99)


class Channel(Enum):
    INT = "int"
    LOC = "loc"
    P2P = "p2p"


@dataclass(frozen=True)
class DistSpec:
    kind: str  # "deterministic" | "lognormal"
    value: float = 0.0
    median: float = 0.0
    p99: float = 0.0

    @classmethod
    def deterministic(cls, value: float) -> "DistSpec":
        if value <= 0:
            raise ValueError("latencies must be strictly positive")
        return cls(kind="deterministic", value=value)

    @classmethod
    def lognormal(cls, median: float, p99: float) -> "DistSpec":
        if not (0 < median <= p99):
            raise ValueError("need 0 < median <= p99")
        return cls(kind="lognormal", median=median, p99=p99)

    def params(self) -> tuple[float, float]:
        """(mu, sigma) such that the lognormal hits the configured quantiles."""
        mu = math.log(self.median)
        sigma = (math.log(self.p99) - mu) / _Z99
        return mu, sigma


@dataclass(frozen=True)
class LatencyModel:
    t_int: DistSpec
    t_loc: DistSpec
    t_p2p: DistSpec
    seed: int = 0


class LatencySampler:
    """One seeded generator; deterministic sample streams per channel order."""

    def __init__(self, model: LatencyModel):
        self.model = model
        self.rng = np.random.default_rng(model.seed)
        self._specs = {
            Channel.INT: model.t_int,
            Channel.LOC: model.t_loc,
            Channel.P2P: model.t_p2p,
        }

    def sample(self, which: Channel) -> float:
        spec = self._specs[which]
        if spec.kind == "deterministic":
            return spec.value
        mu, sigma = spec.params()
        if sigma == 0.0:
            return spec.median
        return float(self.rng.lognormal(mean=mu, sigma=sigma))

    def uniform(self) -> float:
        return float(self.rng.random())


# --- topology ----------------------------------------------------------------

class PeerRole(Enum):
    USER = "user"
    DEVICE = "device"
    HUB = "hub"
    VALIDATOR = "validator"


@dataclass(frozen=True)
class Peer:
    fingerprint: bytes
    subnet: str
    role: PeerRole


@dataclass
class Topology:
    peers: dict[bytes, Peer] = field(default_factory=dict)
    firewalled_subnets: set[str] = field(default_factory=set)
    hubs: dict[str, bytes] = field(default_factory=dict)  # domain -> hub fp
    subscriptions: dict[str, set[bytes]] = field(default_factory=dict)

    def add_peer(self, peer: Peer) -> None:
        self.peers[peer.fingerprint] = peer

    def subscribe(self, topic: str, fingerprint: bytes) -> None:
        self.subscriptions.setdefault(topic, set()).add(fingerprint)

    def same_subnet(self, a: bytes, b: bytes) -> bool:
        return self.peers[a].subnet == self.peers[b].subnet


# --- virtual clock and events --------------------------------------------------

@dataclass(frozen=True, order=True)
class Event:
    time: float
    seq: int
    kind: str = field(compare=False)
    data: dict = field(compare=False, default_factory=dict)


class SimClock:
    """Virtual milliseconds; event order deterministic via (time, seq)."""

    def __init__(self):
        self.now: float = 0.0
        self._seq = 0
        self._queue: list[Event] = []
        self.log: list[Event] = []

    def schedule(self, delay: float, kind: str, **data) -> Event:
        if delay < 0:
            raise ValueError("cannot schedule into the past")
        self._seq += 1
        event = Event(time=self.now + delay, seq=self._seq, kind=kind, data=data)
        heapq.heappush(self._queue, event)
        return event

    def advance(self, delta: float) -> None:
        if delta < 0:
            raise ValueError("clock is monotonic")
        self.now += delta

    def pop_next(self) -> Event | None:
        if not self._queue:
            return None
        event = heapq.heappop(self._queue)
        self.now = max(self.now, event.time)
        self.log.append(event)
        return event

    def drain(self) -> list[Event]:
        out = []
        while True:
            event = self.pop_next()
            if event is None:
                return out
            out.append(event)


def publish(
    topology: Topology,
    clock: SimClock,
    sampler: LatencySampler,
    sender: bytes,
    topic: str,
    message,
) -> list[Event]:
    """Reliable delivery: one event per subscriber, local or internet latency."""
    if sender not in topology.peers:
        raise KeyError(f"unknown sender {sender.hex()[:16]}")
    subscribers = topology.subscriptions.get(topic)
    if not subscribers:
        logger.warning("publish to unknown topic %r dropped", topic)
        return []
    events = []
    for sub in sorted(subscribers):
        channel = Channel.LOC if topology.same_subnet(sender, sub) else Channel.INT
        delay = sampler.sample(channel)
        events.append(
            clock.schedule(
                delay, "delivery", topic=topic, to=sub, sender=sender, message=message
            )
        )
    return events


def connect_p2p(
    topology: Topology,
    clock: SimClock,
    sampler: LatencySampler,
    a: bytes,
    b: bytes,
    punch_failure_prob: float = 0.0,
) -> Event:
    """Connection establishment; failed hole punches fall back to a relay."""
    if a == b:
        raise ValueError("cannot connect a peer to itself")
    if topology.same_subnet(a, b):
        delay = sampler.sample(Channel.LOC)
        relayed = False
    else:
        delay = sampler.sample(Channel.P2P)
        relayed = sampler.uniform() < punch_failure_prob
    return clock.schedule(delay, "p2p-established", a=a, b=b, relayed=relayed)


def event_log_lines(events: list[Event]) -> list[str]:
    lines = []
    for event in events:
        extra = " ".join(
            f"{k}={v.hex()[:16] if isinstance(v, bytes) else v}"
            for k, v in sorted(event.data.items())
        )
        lines.append(f"{event.time:.6f} {event.seq} {event.kind} {extra}".rstrip())
    return lines
