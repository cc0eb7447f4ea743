import pytest
from hypothesis import given, settings, strategies as st

from beacsim.bench import ScenarioConfig, build_world
from beacsim.errors import EligibilityError, TopologyError
from beacsim.identity import Identity
from beacsim.netsim import DistSpec, LatencyModel
from beacsim.protocols import (
    AccessRequest,
    Eligibility,
    Outcome,
    PathKind,
    TrialDraws,
    run_path,
)
from beacsim.records import PermissionRevoked, PermissionType
from beacsim.tokens import TokenStatus
from beacsim.validators import DelayMode


def _config(**kw):
    raw = {
        "version": 1,
        "seed": kw.pop("seed", 1),
        "trials": 1,
        "latency": {
            "t_int": {"deterministic": kw.pop("t_int", 150.0)},
            "t_loc": {"deterministic": kw.pop("t_loc", 1.0)},
            "t_p2p": {"deterministic": kw.pop("t_p2p", 890.0)},
        },
    }
    raw.update(kw)
    return ScenarioConfig.from_dict(raw)


def _run(path, **kw):
    world, requests = build_world(_config(**kw))
    return run_path(requests[path], world, TrialDraws(world.sampler)), world


def test_full_path_closed_form():
    trace, world = _run(PathKind.FULL)
    # 2 handshake + 5 consensus + 1 token round trips, plus local + p2p
    assert trace.total == pytest.approx(8 * 150.0 + 1.0 + 890.0)
    assert trace.outcome == Outcome.GRANTED
    assert [s.name for s in trace.steps] == [
        "connection-initiation",
        "hub-verification",
        "validator-consensus",
        "token-acquisition",
        "service-initiation",
    ]
    assert trace.total == pytest.approx(sum(s.duration for s in trace.steps))
    assert world.tokens.get(trace.token_id).status == TokenStatus.RATIFIED
    assert len(world.ledger.blocks) == 1


def test_full_path_worst_case_rounds():
    trace, _ = _run(PathKind.FULL, validators={"mode": "worst", "r": 4})
    # consensus takes R+4 = 8 rounds instead of 5
    assert trace.total == pytest.approx(11 * 150.0 + 1.0 + 890.0)


def test_internet_shortcut_closed_form():
    trace, world = _run(PathKind.SHORTCUT_INTERNET)
    # p2p establishment dominates the two handshake round trips
    assert trace.total == pytest.approx(890.0)
    assert trace.outcome == Outcome.GRANTED
    # permanent tokens survive redemption; background validation ratified it
    assert world.tokens.get(trace.token_id).status == TokenStatus.RATIFIED
    assert len(world.ledger.blocks) == 1


def test_internet_shortcut_clamps_to_handshake():
    trace, _ = _run(PathKind.SHORTCUT_INTERNET, t_p2p=200.0)
    # p2p finishes inside the handshake window; handshake is the floor
    assert trace.total == pytest.approx(300.0)


def test_local_shortcut_closed_form():
    trace, world = _run(PathKind.SHORTCUT_LOCAL)
    assert trace.total == pytest.approx(3.0)
    assert trace.outcome == Outcome.GRANTED
    assert world.tokens.get(trace.token_id).status == TokenStatus.RATIFIED


def test_denied_full_path_stops_at_hub():
    world, requests = build_world(_config())
    stranger = Identity.from_seed(b"nobody-in-particular")
    request = AccessRequest(
        stranger.fingerprint,
        requests[PathKind.FULL].device,
        "main",
        PermissionType.EXECUTE,
        PathKind.FULL,
        Eligibility.PERMANENT_USER,
    )
    trace = run_path(request, world, TrialDraws(world.sampler))
    assert trace.outcome == Outcome.DENIED
    assert len(trace.steps) == 2
    assert trace.total == pytest.approx(300.0)
    assert trace.token_id is None


def test_guest_cannot_shortcut():
    world, requests = build_world(_config())
    base = requests[PathKind.SHORTCUT_INTERNET]
    guest = AccessRequest(
        base.user, base.device, base.service, base.permission,
        PathKind.SHORTCUT_INTERNET, Eligibility.GUEST,
    )
    with pytest.raises(EligibilityError):
        run_path(guest, world)


def test_local_shortcut_requires_same_subnet():
    world, requests = build_world(_config())
    remote = requests[PathKind.SHORTCUT_INTERNET]
    wrong = AccessRequest(
        remote.user, remote.device, remote.service, remote.permission,
        PathKind.SHORTCUT_LOCAL, Eligibility.PERMANENT_USER,
    )
    with pytest.raises(TopologyError):
        run_path(wrong, world)


def test_full_path_timeout_when_quorum_unreachable():
    trace, world = _run(PathKind.FULL, validators={"f": 1, "faulty": 2})
    assert trace.outcome == Outcome.TIMEOUT
    assert trace.total == pytest.approx(2 * 150.0 + world.cluster.timeout_ms)
    assert world.tokens.get(trace.token_id).status == TokenStatus.PENDING


def test_local_shortcut_grants_with_validators_offline():
    world, requests = build_world(_config())
    world.validators_online = False
    trace = run_path(requests[PathKind.SHORTCUT_LOCAL], world, TrialDraws(world.sampler))
    assert trace.outcome == Outcome.GRANTED
    # ratification is deferred: nothing landed on the ledger
    assert world.ledger.blocks == []


def test_internet_shortcut_revoked_after_grant():
    world, requests = build_world(_config())
    request = requests[PathKind.SHORTCUT_INTERNET]
    hub = Identity.from_seed(b"scenario-hub")

    def revoke_grant(w):
        w.state.apply(
            PermissionRevoked(
                request.user, request.device, "main", PermissionType.EXECUTE
            ),
            hub.fingerprint,
        )

    trace = run_path(request, world, TrialDraws(world.sampler))
    assert trace.outcome == Outcome.GRANTED

    from beacsim.protocols import run_shortcut_internet

    trace2 = run_shortcut_internet(
        request, world, TrialDraws(world.sampler), interfere=revoke_grant
    )
    assert trace2.outcome == Outcome.REVOKED_AFTER_GRANT
    assert world.tokens.get(trace2.token_id).status == TokenStatus.REVOKED


def test_clock_advances_by_trace_total():
    world, requests = build_world(_config())
    t0 = world.clock.now
    trace = run_path(requests[PathKind.FULL], world, TrialDraws(world.sampler))
    assert world.clock.now == pytest.approx(t0 + trace.total)


def test_totals_equal_step_sums_for_sequential_paths():
    for path in (PathKind.FULL, PathKind.SHORTCUT_LOCAL):
        trace, _ = _run(path)
        assert trace.total == pytest.approx(sum(s.duration for s in trace.steps))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(min_value=0, max_value=10**9))
def test_shortcut_dominance_per_trial(seed):
    """With shared draws, local <= internet <= full, strictly where it matters."""
    config = ScenarioConfig.from_dict(
        {
            "version": 1,
            "seed": seed,
            "trials": 1,
            "latency": {
                "t_int": {"lognormal": {"median": 150.0, "p99": 165.0}},
                "t_loc": {"deterministic": 1.0},
                "t_p2p": {"lognormal": {"median": 890.0, "p99": 7780.0}},
            },
        }
    )
    world, requests = build_world(config)
    draws = TrialDraws(world.sampler)
    totals = {
        path: run_path(requests[path], world, draws).total for path in PathKind
    }
    assert totals[PathKind.SHORTCUT_LOCAL] < totals[PathKind.SHORTCUT_INTERNET]
    assert totals[PathKind.SHORTCUT_INTERNET] < totals[PathKind.FULL]
