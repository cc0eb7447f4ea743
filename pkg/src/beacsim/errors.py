"""Exception hierarchy shared across the package."""

from __future__ import annotations


class BeacError(Exception):
    """Base class for all domain errors."""


# --- chain / record errors -------------------------------------------------

class SigningCapabilityError(BeacError):
    """Identity has no private key handle."""


class RejectedRecordError(BeacError):
    """A record failed verification on append; carries the offender."""

    def __init__(self, record, reason: str):
        super().__init__(f"record rejected: {reason}")
        self.record = record
        self.reason = reason


class DuplicateRecordError(BeacError):
    """Record with the same checksum already exists in the ledger."""


class QuorumError(BeacError):
    """Commit certificate smaller than the quorum threshold."""


class ParseError(BeacError):
    """Malformed chain file; carries the byte offset where parsing failed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class IntegrityError(BeacError):
    """Digest mismatch while loading persisted data."""


# --- policy replay errors --------------------------------------------------

class PolicyViolation(BeacError):
    """A record that a live hub (and the validators) must reject."""


class NoGenesisError(PolicyViolation):
    """Record stream exhausted before a matching domain registration."""


class UnknownDeviceError(PolicyViolation):
    """Access check against a device that was never registered."""


class ImmutabilityViolation(PolicyViolation):
    """Re-registration of an active fingerprint."""


class ConsistencyError(PolicyViolation):
    """Structural rule broken, e.g. revoking a non-leaf device."""


class AuthorityViolation(PolicyViolation):
    """Issuer is neither the owner nor a CHMOD holder for the target."""


class StaleUidError(PolicyViolation):
    """Operation references a nullified or unknown UID."""


class DuplicateUidError(PolicyViolation):
    """UID already issued (live or nullified); UIDs are never reused."""


class HierarchyCycleError(PolicyViolation):
    """Role hierarchy edge would create a cycle."""


class BatchAbortError(PolicyViolation):
    """Atomic batch failed; carries the index of the failing record."""

    def __init__(self, index: int, cause: Exception):
        super().__init__(f"batch aborted at record {index}: {cause}")
        self.index = index
        self.cause = cause


# --- token errors ----------------------------------------------------------

class RefusalError(BeacError):
    """Base for token redemption refusals."""


class DecisionRefusal(RefusalError):
    """Token issuance requested for a DENY decision."""


class ExpiryRefusal(RefusalError):
    """Token or passphrase presented outside its validity window."""


class ReplayRefusal(RefusalError):
    """Second redemption of a single-use token."""


class PairingRefusal(RefusalError):
    """Session key does not match the token."""


class RevocationRefusal(RefusalError):
    """Token was revoked."""


class NotRatifiedRefusal(RefusalError):
    """Token still pending ratification and shortcut redemption not allowed."""


class MismatchRefusal(RefusalError):
    """TOTP passphrase matches no step at all."""


class ExhaustedError(RefusalError):
    """TOTP grant has no remaining visits."""


# --- simulation errors -----------------------------------------------------

class StallTimeoutError(BeacError):
    """Quorum unreachable; commit stalled past the configured bound."""

    def __init__(self, bound_ms: float):
        super().__init__(f"consensus stalled; timed out after {bound_ms} ms")
        self.bound_ms = bound_ms


class EligibilityError(BeacError):
    """Shortcut paths require owner or permanent-user eligibility."""


class TopologyError(BeacError):
    """Request incompatible with peer placement, e.g. local shortcut cross-subnet."""


class ScenarioError(BeacError):
    """Scenario configuration invalid; message names the offending field."""
