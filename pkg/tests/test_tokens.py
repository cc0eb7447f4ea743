import threading

import pytest
from hypothesis import given, settings, strategies as st

from beacsim.dac import Decision
from beacsim.errors import (
    DecisionRefusal,
    ExhaustedError,
    ExpiryRefusal,
    MismatchRefusal,
    NotRatifiedRefusal,
    PairingRefusal,
    ReplayRefusal,
    RevocationRefusal,
)
from beacsim.records import PermissionType, TokenKind
from beacsim.tokens import (
    AccessToken,
    TokenService,
    TokenStatus,
    TotpGrant,
    totp_code,
    totp_issue,
    totp_redeem,
)

HUB = b"\x11" * 32
USER = b"\x22" * 32
DEV = b"\x33" * 32

NOW = 1_000_000


def _issue(service, kind=TokenKind.SINGLE_USE, expiry=0, now=NOW):
    return service.issue_token(
        Decision.PERMIT, USER, DEV, "main", PermissionType.EXECUTE, kind, now, expiry
    )


@pytest.fixture
def service():
    return TokenService(HUB)


def test_deny_decision_refused(service):
    with pytest.raises(DecisionRefusal):
        service.issue_token(
            Decision.DENY, USER, DEV, None, PermissionType.LIST, TokenKind.SINGLE_USE, NOW
        )


def test_lifecycle_single_use(service):
    token, key, commit = _issue(service)
    assert token.status == TokenStatus.PENDING
    assert commit.token_digest == token.token_id
    with pytest.raises(NotRatifiedRefusal):
        service.redeem(token.token_id, key.key, NOW)
    service.ratify(token.token_id)
    assert token.status == TokenStatus.RATIFIED
    redeemed = service.redeem(token.token_id, key.key, NOW)
    assert redeemed.status == TokenStatus.CONSUMED
    with pytest.raises(ReplayRefusal):
        service.redeem(token.token_id, key.key, NOW)


def test_pending_redeem_with_allow_pending(service):
    token, key, _ = _issue(service)
    redeemed = service.redeem(token.token_id, key.key, NOW, allow_pending=True)
    assert redeemed.status == TokenStatus.CONSUMED


def test_revoked_token_refused(service):
    token, key, _ = _issue(service)
    service.ratify(token.token_id)
    service.revoke(token.token_id)
    with pytest.raises(RevocationRefusal):
        service.redeem(token.token_id, key.key, NOW)


def test_consumed_token_cannot_be_revoked(service):
    token, key, _ = _issue(service)
    service.ratify(token.token_id)
    service.redeem(token.token_id, key.key, NOW)
    service.revoke(token.token_id)
    assert token.status == TokenStatus.CONSUMED


def test_wrong_key_pairing_refusal(service):
    token, key, _ = _issue(service)
    service.ratify(token.token_id)
    with pytest.raises(PairingRefusal):
        service.redeem(token.token_id, b"\x00" * 32, NOW)
    # the failed pairing must not consume the token
    assert service.redeem(token.token_id, key.key, NOW).status == TokenStatus.CONSUMED


def test_unknown_token_pairing_refusal(service):
    with pytest.raises(PairingRefusal):
        service.redeem(b"\xaa" * 32, b"\x00" * 32, NOW)


def test_expiring_boundary(service):
    token, key, _ = _issue(service, kind=TokenKind.EXPIRING, expiry=NOW + 500)
    service.ratify(token.token_id)
    # now == expiry is still valid; strictly after expires
    assert service.redeem(token.token_id, key.key, NOW + 500)
    with pytest.raises(ExpiryRefusal):
        service.redeem(token.token_id, key.key, NOW + 501)


def test_expiry_zeroed_for_non_expiring(service):
    token, _, commit = _issue(service, kind=TokenKind.PERMANENT, expiry=12345)
    assert token.expiry == 0
    assert commit.expiry == 0


def test_permanent_many_redemptions(service):
    token, key, _ = _issue(service, kind=TokenKind.PERMANENT)
    service.ratify(token.token_id)
    for i in range(1000):
        assert (
            service.redeem(token.token_id, key.key, NOW + i).status
            == TokenStatus.RATIFIED
        )


def test_single_use_linearity_threaded(service):
    token, key, _ = _issue(service)
    service.ratify(token.token_id)
    successes, replays = [], []

    def worker():
        try:
            service.redeem(token.token_id, key.key, NOW)
            successes.append(1)
        except ReplayRefusal:
            replays.append(1)

    threads = [threading.Thread(target=worker) for _ in range(16)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(successes) == 1
    assert len(replays) == 15


def test_token_ids_deterministic():
    a = TokenService(HUB)
    b = TokenService(HUB)
    ta, _, _ = _issue(a)
    tb, _, _ = _issue(b)
    assert ta.token_id == tb.token_id


def test_token_ids_unique(service):
    ids = {_issue(service)[0].token_id for _ in range(100)}
    assert len(ids) == 100


@settings(max_examples=50, deadline=None)
@given(wrong=st.binary(min_size=0, max_size=48))
def test_pairing_property_random_keys(wrong):
    service = TokenService(HUB)
    token, key, _ = _issue(service)
    service.ratify(token.token_id)
    if wrong == key.key:
        return
    with pytest.raises(PairingRefusal):
        service.redeem(token.token_id, wrong, NOW)


# --- TOTP ----------------------------------------------------------------------

SECRET = b"guest-secret-0123456789"


def test_totp_deterministic():
    assert totp_code(SECRET, 1234, 6) == totp_code(SECRET, 1234, 6)


def test_totp_adjacent_steps_differ():
    codes = {totp_code(SECRET, step, 6) for step in range(20)}
    assert len(codes) > 1


def test_totp_digit_range():
    for step in range(50):
        code = totp_code(SECRET, step, 6)
        assert len(code) == 6 and code.isdigit()


def test_totp_issue_matches_current_step():
    grant = TotpGrant(secret=SECRET)
    now = 90_000  # 90s -> step 3
    assert totp_issue(grant, now) == totp_code(SECRET, 3, 6)


def test_totp_redeem_within_window(service):
    grant = TotpGrant(secret=SECRET, allowed_visits=2)
    now = 300_000
    code = totp_issue(grant, now)
    # one step later is inside the default +/-1 window
    token, key, _ = totp_redeem(
        grant, code, now + 30_000, service, USER, DEV, "main", PermissionType.EXECUTE
    )
    assert token.kind == TokenKind.SINGLE_USE
    assert grant.remaining_visits == 1
    service.ratify(token.token_id)
    assert service.redeem(token.token_id, key.key, now).status == TokenStatus.CONSUMED


def test_totp_redeem_outside_window_is_expiry(service):
    grant = TotpGrant(secret=SECRET)
    now = 300_000
    code = totp_issue(grant, now)
    with pytest.raises(ExpiryRefusal):
        totp_redeem(
            grant, code, now + 120_000, service, USER, DEV, None, PermissionType.LIST
        )
    assert grant.remaining_visits == 1


def test_totp_garbage_is_mismatch(service):
    grant = TotpGrant(secret=SECRET)
    with pytest.raises(MismatchRefusal):
        totp_redeem(
            grant, "000000x", NOW, service, USER, DEV, None, PermissionType.LIST
        )


def test_totp_visit_exhaustion(service):
    grant = TotpGrant(secret=SECRET, allowed_visits=1)
    code = totp_issue(grant, NOW)
    totp_redeem(grant, code, NOW, service, USER, DEV, None, PermissionType.LIST)
    with pytest.raises(ExhaustedError):
        totp_issue(grant, NOW)
    with pytest.raises(ExhaustedError):
        totp_redeem(grant, code, NOW, service, USER, DEV, None, PermissionType.LIST)


@settings(max_examples=40, deadline=None)
@given(
    step=st.integers(min_value=10, max_value=10**6),
    delta=st.integers(min_value=-4, max_value=4),
)
def test_totp_window_iff(step, delta):
    """A code redeems iff the step offset is within the window."""
    grant = TotpGrant(secret=SECRET, allowed_visits=10**9, window=1)
    service = TokenService(HUB)
    code = totp_code(SECRET, step, 6)
    now = (step + delta) * 30 * 1000
    in_window = abs(delta) <= 1 or any(
        totp_code(SECRET, step + delta + w, 6) == code for w in (-1, 0, 1)
    )
    if in_window:
        token, _, _ = totp_redeem(
            grant, code, now, service, USER, DEV, None, PermissionType.LIST
        )
        assert token.kind == TokenKind.SINGLE_USE
    else:
        with pytest.raises((ExpiryRefusal, MismatchRefusal)):
            totp_redeem(
                grant, code, now, service, USER, DEV, None, PermissionType.LIST
            )
