"""Acceptance gate: one test per release criterion.

Each test prints a single pass/fail line (visible with `pytest -s` or in
captured output) so the gate can be audited at a glance.
"""

import hashlib
import itertools
import random
import threading
import time
from contextlib import contextmanager

import numpy as np
import pytest

from beacsim.abac import AttributeRegistry, apply_abac, check_access_abac
from beacsim.bench import ScenarioConfig, build_world, run_scenario
from beacsim.dac import Decision, build_device_tree, check_access_dac
from beacsim.errors import (
    BatchAbortError,
    DuplicateUidError,
    ExpiryRefusal,
    ImmutabilityViolation,
    MismatchRefusal,
    ReplayRefusal,
    StallTimeoutError,
)
from beacsim.netsim import Channel, DistSpec, LatencyModel, LatencySampler
from beacsim.protocols import PathKind, TrialDraws, run_path
from beacsim.rbac import RoleRegistry, apply_rbac, apply_rbac_batch, check_access_rbac
from beacsim.records import (
    AssignAttributePermission,
    AssignAttributeDevice,
    AssignAttributeUser,
    AssignRolePermission,
    AssignRoleUser,
    AddRoleHierarchy,
    DeviceRegistration,
    DomainRegistration,
    Effect,
    NewAttribute,
    NewRole,
    PermissionGranted,
    PermissionType,
    RemoveRoleHierarchy,
    TokenKind,
)
from beacsim.state import DomainState, replay
from beacsim.tokens import TokenService, TotpGrant, totp_code, totp_redeem
from beacsim.validators import ValidatorCluster, commit

from seqgen import SequenceGenerator, generate_sequence

A = b"\x0a" * 32
B = b"\x0b" * 32
CAM = b"\xca" * 32


@contextmanager
def criterion(number: int, description: str):
    try:
        yield
    except BaseException:
        print(f"criterion {number:2d} FAIL: {description}")
        raise
    print(f"criterion {number:2d} PASS: {description}")


def _mixed_sequence(seed: int):
    """Two interleaved domains (one abac, one rbac) sharing a record stream."""
    rng = random.Random(seed)
    gen_a = SequenceGenerator(random.Random(rng.getrandbits(64)), "abac", "dom-a")
    gen_b = SequenceGenerator(random.Random(rng.getrandbits(64)), "rbac", "dom-b")
    gen_a.run(10)
    gen_b.run(10)
    a, b = list(gen_a.emitted), list(gen_b.emitted)
    merged = []
    while a or b:
        src = a if (a and (not b or rng.random() < 0.5)) else b
        merged.append(src.pop(0))
    return merged, gen_a, gen_b


def test_criterion_1_replay_equivalence():
    with criterion(1, "replay equivalence over 1000 sequences x 4 models, <60s"):
        started = time.monotonic()
        for seed in range(1000):
            for model in ("dac", "abac", "rbac"):
                records, incremental = generate_sequence(seed, model, steps=15)
                assert replay(records, incremental.tree.owner).dump() == (
                    incremental.dump()
                )
            merged, gen_a, gen_b = _mixed_sequence(seed)
            assert replay(merged, gen_a.owner).dump() == gen_a.state.dump()
            assert replay(merged, gen_b.owner).dump() == gen_b.state.dump()
        elapsed = time.monotonic() - started
        assert elapsed < 60.0, f"took {elapsed:.1f}s"


def test_criterion_2_reconstruction_fidelity():
    with criterion(2, "hand-replayed fixture log reconstructs exactly"):
        tree = build_device_tree(
            [
                (DomainRegistration("home", A, "dac"), A),
                (DeviceRegistration(CAM, A, ()), A),
                (PermissionGranted(B, CAM, None, PermissionType.EXECUTE), A),
            ],
            A,
        )
        cam = tree.node_of(CAM)
        assert cam.acl == {(B, PermissionType.EXECUTE)}
        assert cam.owner == A and cam.services == {}
        assert set(tree.known_id_map) == {A, CAM}
        assert tree.root.children == [cam]


def test_criterion_3_immutability_and_lifecycle():
    with criterion(3, "immutability, 1e5 UID ops, batch atomicity everywhere"):
        # Duplicate registration is rejected.
        state = DomainState.bootstrap(DomainRegistration("home", A, "dac"))
        state.apply(DeviceRegistration(CAM, A, ()), A)
        with pytest.raises(ImmutabilityViolation):
            state.apply(DeviceRegistration(CAM, B, ()), A)

        # Nullified UIDs are never reissued across 1e5 randomized operations.
        from beacsim.records import DeleteAttribute

        rng = random.Random(3)
        registry = AttributeRegistry(domain="d", admin=A)
        issued: set[int] = set()
        live_list: list[int] = []  # mirror of registry.live for O(1) choice
        nullified_list: list[int] = []
        for step in range(100_000):
            if live_list and rng.random() < 0.4:
                i = rng.randrange(len(live_list))
                uid = live_list[i]
                live_list[i] = live_list[-1]
                live_list.pop()
                nullified_list.append(uid)
                apply_abac(registry, DeleteAttribute("d", uid), A)
            else:
                uid = len(issued) + 1
                assert uid not in issued, "UID reissued"
                apply_abac(registry, NewAttribute("d", b"x", uid), A)
                issued.add(uid)
                live_list.append(uid)
            if step % 1000 == 0:
                assert registry.next_uid() not in issued  # always fresh
                if nullified_list:
                    dead = rng.choice(nullified_list)
                    with pytest.raises(DuplicateUidError):
                        apply_abac(registry, NewAttribute("d", b"y", dead), A)
        assert set(live_list) == set(registry.live)
        assert not (registry.nullified & set(registry.live))

        # RBAC batch atomicity holds with a failure injected at every position.
        for fail_at in range(5):
            roles = RoleRegistry(domain="d", admin=A)
            for uid in (1, 2, 3):
                apply_rbac(roles, NewRole("d", f"r{uid}", uid), A)
            ops = [
                AddRoleHierarchy("d", 1, 2),
                AssignRoleUser("d", 2, B),
                AddRoleHierarchy("d", 2, 3),
                AssignRoleUser("d", 3, B),
            ]
            ops.insert(fail_at, AssignRoleUser("d", 99, B))  # unknown UID
            from beacsim.rbac import dump_roles
            from beacsim.records import RoleHierarchyBatch

            before = dump_roles(roles)
            with pytest.raises(BatchAbortError) as exc:
                apply_rbac_batch(roles, ops, A)
            assert exc.value.index == fail_at
            assert dump_roles(roles) == before


def _truth_table_expected(owner, acl, deny, grant):
    if owner:
        return Decision.PERMIT
    if deny:
        return Decision.DENY
    return Decision.PERMIT if (grant or acl) else Decision.DENY


def test_criterion_4_denial_precedence():
    with criterion(4, "16-row denial-precedence truth table, abac and rbac"):
        for owner, acl, deny, grant in itertools.product([False, True], repeat=4):
            user = A if owner else B
            expected = _truth_table_expected(owner, acl, deny, grant)

            tree = build_device_tree(
                [
                    (DomainRegistration("d", A, "abac"), A),
                    (DeviceRegistration(CAM, A, ()), A),
                ],
                A,
            )
            if acl:
                from beacsim.dac import handle_perm_add

                handle_perm_add(
                    tree, PermissionGranted(user, CAM, None, PermissionType.EXECUTE), A
                )

            attrs = AttributeRegistry(domain="d", admin=A)
            apply_abac(attrs, NewAttribute("d", b"u", 1), A)
            apply_abac(attrs, NewAttribute("d", b"d", 2), A)
            apply_abac(attrs, AssignAttributeUser("d", 1, user), A)
            apply_abac(attrs, AssignAttributeDevice("d", 2, CAM, None), A)
            if deny:
                apply_abac(
                    attrs,
                    AssignAttributePermission(
                        "d", 1, 2, PermissionType.EXECUTE, Effect.DENY
                    ),
                    A,
                )
            if grant:
                apply_abac(
                    attrs,
                    AssignAttributePermission(
                        "d", 1, 2, PermissionType.EXECUTE, Effect.GRANT
                    ),
                    A,
                )
            got = check_access_abac(attrs, tree, user, CAM, None, PermissionType.EXECUTE)
            assert got == expected, f"abac {owner, acl, deny, grant}: {got}"

            roles = RoleRegistry(domain="d", admin=A)
            apply_rbac(roles, NewRole("d", "r", 1), A)
            apply_rbac(roles, AssignRoleUser("d", 1, user), A)
            if deny:
                apply_rbac(
                    roles,
                    AssignRolePermission(
                        "d", 1, CAM, None, PermissionType.EXECUTE, Effect.DENY
                    ),
                    A,
                )
            if grant:
                apply_rbac(
                    roles,
                    AssignRolePermission(
                        "d", 1, CAM, None, PermissionType.EXECUTE, Effect.GRANT
                    ),
                    A,
                )
            got = check_access_rbac(roles, tree, user, CAM, None, PermissionType.EXECUTE)
            assert got == expected, f"rbac {owner, acl, deny, grant}: {got}"


def test_criterion_5_consensus_thresholds():
    with criterion(5, "n=3f+1 commits with <=f faults, stalls with f+1, exact"):
        sampler = LatencySampler(
            LatencyModel(
                t_int=DistSpec.deterministic(150.0),
                t_loc=DistSpec.deterministic(1.0),
                t_p2p=DistSpec.deterministic(890.0),
            )
        )
        for f in (1, 2, 3):
            validators = tuple(bytes([i + 1]) * 32 for i in range(3 * f + 1))
            for faulty in range(f + 1):
                cluster = ValidatorCluster(
                    validators=validators, f=f, faulty=frozenset(validators[:faulty])
                )
                result = commit(cluster, [], sampler)
                assert len(result.certificate) == 3 * f + 1 - faulty
                assert len(result.certificate) >= cluster.quorum
            stalled = ValidatorCluster(
                validators=validators, f=f, faulty=frozenset(validators[: f + 1])
            )
            with pytest.raises(StallTimeoutError):
                commit(stalled, [], sampler)


def _deterministic_config(trials=1):
    return ScenarioConfig.from_dict(
        {
            "version": 1,
            "seed": 1,
            "trials": trials,
            "latency": {
                "t_int": {"deterministic": 150.0},
                "t_loc": {"deterministic": 1.0},
                "t_p2p": {"deterministic": 890.0},
            },
        }
    )


def test_criterion_6_closed_form_latencies():
    with criterion(6, "deterministic paths: full 2091ms, internet 890ms, local 3ms"):
        world, requests = build_world(_deterministic_config())
        draws = TrialDraws(world.sampler)
        totals = {p: run_path(requests[p], world, draws).total for p in PathKind}
        assert totals[PathKind.FULL] == 2091.0
        assert totals[PathKind.SHORTCUT_INTERNET] == 890.0
        assert totals[PathKind.SHORTCUT_LOCAL] == 3.0


def _benchmark_config(trials=500, seed=42):
    return ScenarioConfig.from_dict(
        {
            "version": 1,
            "seed": seed,
            "trials": trials,
            "latency": {
                "t_int": {"lognormal": {"median": 150.0, "p99": 165.0}},
                "t_loc": {"deterministic": 1.0},
                "t_p2p": {"lognormal": {"median": 890.0, "p99": 7780.0}},
            },
        }
    )


def test_criterion_7_distributional_comparison():
    with criterion(
        7, "500 shared-sample trials: 100% dominance, savings bands hold, <30s"
    ):
        started = time.monotonic()
        config = _benchmark_config()
        world, requests = build_world(config)
        totals = {p: [] for p in PathKind}
        for _ in range(config.trials):
            draws = TrialDraws(world.sampler)
            for path in PathKind:
                totals[path].append(run_path(requests[path], world, draws).total)

        dominated = sum(
            1
            for loc, net, full in zip(
                totals[PathKind.SHORTCUT_LOCAL],
                totals[PathKind.SHORTCUT_INTERNET],
                totals[PathKind.FULL],
            )
            if loc <= net <= full
        )
        assert dominated == config.trials  # (a) 100% per-trial dominance

        def savings(fast, slow, pct):
            return 1.0 - float(np.percentile(totals[fast], pct)) / float(
                np.percentile(totals[slow], pct)
            )

        median_net = savings(PathKind.SHORTCUT_INTERNET, PathKind.FULL, 50)
        assert 0.30 <= median_net <= 0.65  # (b)
        for fast, slow in [
            (PathKind.SHORTCUT_INTERNET, PathKind.FULL),
            (PathKind.SHORTCUT_LOCAL, PathKind.SHORTCUT_INTERNET),
            (PathKind.SHORTCUT_LOCAL, PathKind.FULL),
        ]:
            for pct in (50, 99):
                assert savings(fast, slow, pct) > 0  # (c)
        elapsed = time.monotonic() - started
        assert elapsed < 30.0, f"took {elapsed:.1f}s"


def test_criterion_8_netsim_percentile_fidelity():
    with criterion(8, "lognormal median and P99 within 5% over 1e5 samples"):
        for median, p99 in ((150.0, 165.0), (890.0, 7780.0)):
            model = LatencyModel(
                t_int=DistSpec.lognormal(median, p99),
                t_loc=DistSpec.deterministic(1.0),
                t_p2p=DistSpec.deterministic(890.0),
                seed=8,
            )
            sampler = LatencySampler(model)
            samples = np.array([sampler.sample(Channel.INT) for _ in range(100_000)])
            assert abs(np.percentile(samples, 50) / median - 1) < 0.05
            assert abs(np.percentile(samples, 99) / p99 - 1) < 0.05


def test_criterion_9_token_linearity_and_totp_window():
    with criterion(9, "1e4 single-use interleavings each redeem once; TOTP iff window"):
        service = TokenService(b"\x11" * 32)
        rng = random.Random(9)
        # Serialized interleavings: attempts in random order, one success each.
        for _ in range(10_000):
            token, key, _ = service.issue_token(
                Decision.PERMIT, A, CAM, None, PermissionType.EXECUTE,
                TokenKind.SINGLE_USE, 0,
            )
            service.ratify(token.token_id)
            attempts = rng.randint(2, 5)
            outcomes = []
            for _ in range(attempts):
                try:
                    service.redeem(token.token_id, key.key, 0)
                    outcomes.append("ok")
                except ReplayRefusal:
                    outcomes.append("replay")
            assert outcomes.count("ok") == 1

        # True concurrency over a sample of tokens.
        for _ in range(50):
            token, key, _ = service.issue_token(
                Decision.PERMIT, A, CAM, None, PermissionType.EXECUTE,
                TokenKind.SINGLE_USE, 0,
            )
            service.ratify(token.token_id)
            wins: list[int] = []

            def attempt():
                try:
                    service.redeem(token.token_id, key.key, 0)
                    wins.append(1)
                except ReplayRefusal:
                    pass

            threads = [threading.Thread(target=attempt) for _ in range(8)]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
            assert len(wins) == 1

        # TOTP: redemption succeeds iff the step offset is inside the window.
        secret = b"acceptance-secret"
        for base_step in range(100, 140):
            neighborhood = [totp_code(secret, base_step + d, 6) for d in range(-4, 5)]
            if len(set(neighborhood)) != len(neighborhood):
                continue  # skip rare code collisions; "iff" is then ambiguous
            code = totp_code(secret, base_step, 6)
            for delta in range(-3, 4):
                grant = TotpGrant(secret=secret, allowed_visits=1, window=1)
                now = (base_step + delta) * 30 * 1000
                if abs(delta) <= 1:
                    token, _, _ = totp_redeem(
                        grant, code, now, service, A, CAM, None, PermissionType.LIST
                    )
                    assert token.kind == TokenKind.SINGLE_USE
                else:
                    with pytest.raises((ExpiryRefusal, MismatchRefusal)):
                        totp_redeem(
                            grant, code, now, service, A, CAM, None, PermissionType.LIST
                        )


def test_criterion_10_determinism(tmp_path):
    with criterion(10, "same seed+scenario: byte-identical traces and reports"):
        hashes, reports = [], []
        for name in ("run1.jsonl", "run2.jsonl"):
            trace = tmp_path / name
            report = run_scenario(_benchmark_config(trials=50), trace_path=trace)
            hashes.append(hashlib.sha256(trace.read_bytes()).hexdigest())
            reports.append(hashlib.sha256(report.render().encode()).hexdigest())
        assert hashes[0] == hashes[1]
        assert reports[0] == reports[1]
