"""Scenario loading, trial execution, and percentile reporting.

A scenario file is YAML with a version key. Each trial draws one shared
latency tuple and runs every selected path over it; the per-trial results go
to a line-delimited JSON trace file and the report aggregates P50/P99/mean,
histogram buckets, and pairwise savings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import yaml

from .chain import Ledger
from .dac import Decision
from .errors import ScenarioError
from .identity import Identity
from .netsim import (
    DistSpec,
    LatencyModel,
    LatencySampler,
    Peer,
    PeerRole,
    SimClock,
    Topology,
)
from .protocols import (
    AccessRequest,
    Eligibility,
    Outcome,
    PathKind,
    ProtocolTrace,
    TrialDraws,
    World,
    run_path,
)
from .records import (
    DeviceRegistration,
    DomainRegistration,
    PermissionGranted,
    PermissionType,
)
from .state import DomainState
from .tokens import TokenService
from .validators import DelayMode, ValidatorCluster

SCENARIO_VERSION = 1

_PATH_NAMES = {p.value: p for p in PathKind}
_SAVINGS_PAIRS = [
    (PathKind.SHORTCUT_INTERNET, PathKind.FULL),
    (PathKind.SHORTCUT_LOCAL, PathKind.SHORTCUT_INTERNET),
    (PathKind.SHORTCUT_LOCAL, PathKind.FULL),
]


@dataclass(frozen=True)
class ValidatorSpec:
    f: int = 1
    faulty: int = 0
    mode: DelayMode = DelayMode.OPTIMAL
    r: int = 4


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    trials: int
    paths: tuple[PathKind, ...]
    latency: LatencyModel
    validators: ValidatorSpec = ValidatorSpec()
    model: str = "dac"
    eligibility: Eligibility = Eligibility.PERMANENT_USER
    histogram_bucket_ms: float = 50.0

    @classmethod
    def from_dict(cls, raw: dict, seed_override: int | None = None) -> "ScenarioConfig":
        if not isinstance(raw, dict):
            raise ScenarioError("scenario root must be a mapping")
        if raw.get("version") != SCENARIO_VERSION:
            raise ScenarioError(f"version: expected {SCENARIO_VERSION}")
        trials = raw.get("trials", 1)
        if not isinstance(trials, int) or trials < 1:
            raise ScenarioError("trials: must be an integer >= 1")
        paths = []
        for name in raw.get("paths", [p.value for p in PathKind]):
            if name not in _PATH_NAMES:
                raise ScenarioError(f"paths: unknown path {name!r}")
            paths.append(_PATH_NAMES[name])
        latency_raw = raw.get("latency")
        if not isinstance(latency_raw, dict):
            raise ScenarioError("latency: section missing")
        seed = seed_override if seed_override is not None else raw.get("seed", 0)
        if not isinstance(seed, int):
            raise ScenarioError("seed: must be an integer")
        latency = LatencyModel(
            t_int=_parse_dist("latency.t_int", latency_raw.get("t_int")),
            t_loc=_parse_dist("latency.t_loc", latency_raw.get("t_loc")),
            t_p2p=_parse_dist("latency.t_p2p", latency_raw.get("t_p2p")),
            seed=seed,
        )
        vraw = raw.get("validators", {})
        try:
            mode = DelayMode(vraw.get("mode", "optimal"))
        except ValueError:
            raise ScenarioError(f"validators.mode: unknown mode {vraw.get('mode')!r}")
        validators = ValidatorSpec(
            f=int(vraw.get("f", 1)),
            faulty=int(vraw.get("faulty", 0)),
            mode=mode,
            r=int(vraw.get("r", 4)),
        )
        if validators.faulty > 3 * validators.f + 1:
            raise ScenarioError("validators.faulty: exceeds cluster size")
        model = raw.get("model", "dac")
        if model not in ("dac", "abac", "rbac"):
            raise ScenarioError(f"model: unknown access-control model {model!r}")
        try:
            eligibility = Eligibility(raw.get("eligibility", "permanent_user"))
        except ValueError:
            raise ScenarioError(f"eligibility: unknown class {raw.get('eligibility')!r}")
        bucket = float(raw.get("histogram_bucket_ms", 50.0))
        if bucket <= 0:
            raise ScenarioError("histogram_bucket_ms: must be positive")
        return cls(
            seed=seed,
            trials=trials,
            paths=tuple(paths),
            latency=latency,
            validators=validators,
            model=model,
            eligibility=eligibility,
            histogram_bucket_ms=bucket,
        )

    @classmethod
    def from_yaml(cls, path, seed_override: int | None = None) -> "ScenarioConfig":
        with open(path) as fh:
            try:
                raw = yaml.safe_load(fh)
            except yaml.YAMLError as exc:
                raise ScenarioError(f"invalid YAML: {exc}")
        return cls.from_dict(raw, seed_override)


def _parse_dist(name: str, raw) -> DistSpec:
    if not isinstance(raw, dict):
        raise ScenarioError(f"{name}: expected a mapping")
    try:
        if "deterministic" in raw:
            return DistSpec.deterministic(float(raw["deterministic"]))
        if "lognormal" in raw:
            ln = raw["lognormal"]
            return DistSpec.lognormal(float(ln["median"]), float(ln["p99"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"{name}: {exc}")
    raise ScenarioError(f"{name}: need 'deterministic' or 'lognormal'")


@dataclass
class PathStats:
    totals: list[float] = field(default_factory=list)

    @property
    def p50(self) -> float:
        return float(np.percentile(self.totals, 50))

    @property
    def p99(self) -> float:
        return float(np.percentile(self.totals, 99))

    @property
    def mean(self) -> float:
        return float(np.mean(self.totals))

    def histogram(self, bucket_ms: float) -> dict[int, int]:
        buckets: dict[int, int] = {}
        for total in self.totals:
            b = int(total // bucket_ms)
            buckets[b] = buckets.get(b, 0) + 1
        return dict(sorted(buckets.items()))


@dataclass
class PercentileReport:
    per_path: dict[PathKind, PathStats]
    bucket_ms: float

    def savings(self, fast: PathKind, slow: PathKind, pct: int) -> float:
        """1 - fast/slow at the given percentile; positive means fast wins."""
        slow_v = float(np.percentile(self.per_path[slow].totals, pct))
        fast_v = float(np.percentile(self.per_path[fast].totals, pct))
        return 1.0 - fast_v / slow_v

    def render(self) -> str:
        lines = []
        for path in PathKind:
            stats = self.per_path.get(path)
            if stats is None:
                continue
            lines.append(
                f"path {path.value}: n={len(stats.totals)} "
                f"p50={stats.p50:.3f}ms p99={stats.p99:.3f}ms mean={stats.mean:.3f}ms"
            )
            hist = stats.histogram(self.bucket_ms)
            rendered = " ".join(
                f"[{int(b * self.bucket_ms)},{int((b + 1) * self.bucket_ms)}):{n}"
                for b, n in hist.items()
            )
            lines.append(f"  histogram bucket={self.bucket_ms:g}ms {rendered}")
        for fast, slow in _SAVINGS_PAIRS:
            if fast in self.per_path and slow in self.per_path:
                lines.append(
                    f"savings {fast.value} vs {slow.value}: "
                    f"p50={self.savings(fast, slow, 50) * 100:.1f}% "
                    f"p99={self.savings(fast, slow, 99) * 100:.1f}%"
                )
        return "\n".join(lines) + "\n"


def build_world(config: ScenarioConfig) -> tuple[World, dict[PathKind, AccessRequest]]:
    """Deterministic world from the scenario: one domain, one device, one
    remote and one local user, both granted EXECUTE."""
    hub = Identity.from_seed(b"scenario-hub")
    owner = hub  # hub owner bootstraps the domain
    device = Identity.from_seed(b"scenario-device")
    remote_user = Identity.from_seed(b"scenario-remote-user")
    local_user = Identity.from_seed(b"scenario-local-user")
    validator_ids = [
        Identity.from_seed(b"scenario-validator-%d" % i)
        for i in range(3 * config.validators.f + 1)
    ]

    genesis = DomainRegistration("scenario", owner.fingerprint, config.model)
    state = DomainState.bootstrap(genesis)
    state.apply(
        DeviceRegistration(device.fingerprint, owner.fingerprint, ("main",)),
        owner.fingerprint,
    )
    for user in (remote_user, local_user):
        state.apply(
            PermissionGranted(
                user.fingerprint, device.fingerprint, "main", PermissionType.EXECUTE
            ),
            owner.fingerprint,
        )

    topology = Topology()
    topology.add_peer(Peer(hub.fingerprint, "home", PeerRole.HUB))
    topology.add_peer(Peer(device.fingerprint, "home", PeerRole.DEVICE))
    topology.add_peer(Peer(local_user.fingerprint, "home", PeerRole.USER))
    topology.add_peer(Peer(remote_user.fingerprint, "remote", PeerRole.USER))
    for v in validator_ids:
        topology.add_peer(Peer(v.fingerprint, "cloud", PeerRole.VALIDATOR))
    topology.hubs["scenario"] = hub.fingerprint
    topology.subscribe("scenario/access", hub.fingerprint)

    cluster = ValidatorCluster(
        validators=tuple(v.fingerprint for v in validator_ids),
        f=config.validators.f,
        faulty=frozenset(
            v.fingerprint for v in validator_ids[: config.validators.faulty]
        ),
        mode=config.validators.mode,
        r=config.validators.r,
    )
    world = World(
        clock=SimClock(),
        sampler=LatencySampler(config.latency),
        topology=topology,
        cluster=cluster,
        state=state,
        ledger=Ledger(quorum=cluster.quorum),
        tokens=TokenService(hub.fingerprint),
        hub_identity=hub,
    )
    requests = {
        PathKind.FULL: AccessRequest(
            remote_user.fingerprint,
            device.fingerprint,
            "main",
            PermissionType.EXECUTE,
            PathKind.FULL,
            config.eligibility,
        ),
        PathKind.SHORTCUT_INTERNET: AccessRequest(
            remote_user.fingerprint,
            device.fingerprint,
            "main",
            PermissionType.EXECUTE,
            PathKind.SHORTCUT_INTERNET,
            config.eligibility,
        ),
        PathKind.SHORTCUT_LOCAL: AccessRequest(
            local_user.fingerprint,
            device.fingerprint,
            "main",
            PermissionType.EXECUTE,
            PathKind.SHORTCUT_LOCAL,
            config.eligibility,
        ),
    }
    return world, requests


def trace_line(trial: int, trace: ProtocolTrace) -> str:
    return json.dumps(
        {
            "trial": trial,
            "path": trace.path.value,
            "steps": {s.name: round(s.duration, 6) for s in trace.steps},
            "total": round(trace.total, 6),
            "outcome": trace.outcome.value,
        },
        sort_keys=True,
    )


def run_scenario(config: ScenarioConfig, trace_path=None) -> PercentileReport:
    world, requests = build_world(config)
    stats = {path: PathStats() for path in config.paths}
    lines: list[str] = []
    for trial in range(config.trials):
        draws = TrialDraws(world.sampler)
        for path in config.paths:
            trace = run_path(requests[path], world, draws)
            stats[path].totals.append(trace.total)
            lines.append(trace_line(trial, trace))
    if trace_path is not None:
        with open(trace_path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    return PercentileReport(per_path=stats, bucket_ms=config.histogram_bucket_ms)


def savings_from_trace(path) -> dict[tuple[str, str], dict[int, float]]:
    """Recompute pairwise savings from a trace file; must equal the report."""
    totals: dict[str, list[float]] = {}
    with open(path) as fh:
        for line in fh:
            rec = json.loads(line)
            totals.setdefault(rec["path"], []).append(rec["total"])
    out: dict[tuple[str, str], dict[int, float]] = {}
    for fast, slow in _SAVINGS_PAIRS:
        if fast.value in totals and slow.value in totals:
            out[(fast.value, slow.value)] = {
                pct: 1.0
                - float(np.percentile(totals[fast.value], pct))
                / float(np.percentile(totals[slow.value], pct))
                for pct in (50, 99)
            }
    return out
