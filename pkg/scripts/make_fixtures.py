"""Regenerate the frozen golden fixtures under tests/fixtures/.

Run from the repo root: python3 scripts/make_fixtures.py
Identities derive from fixed seeds and signatures are deterministic, so the
output is stable across runs.
"""

from pathlib import Path

from beacsim.chain import Ledger, dump_text, persist
from beacsim.identity import Identity
from beacsim.records import DeviceRegistration, canonical_encode, sign_record

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)

    payload = DeviceRegistration(b"\xab" * 32, b"\xcd" * 32, ("cam",))
    (FIXTURES / "device_registration.bin").write_bytes(canonical_encode(payload))

    alice = Identity.from_seed(b"alice")
    cert = frozenset(bytes([i]) * 32 for i in range(1, 4))
    ledger = Ledger(quorum=3)
    for i in range(3):
        record = sign_record(
            DeviceRegistration(bytes([i + 1]) * 32, alice.fingerprint, ()),
            alice,
            timestamp=1000 + i,
        )
        ledger.append_block([record], cert)
    persist(ledger, FIXTURES / "ledger3.chain")
    (FIXTURES / "ledger3.dump").write_text(dump_text(ledger))

    print("fixtures written to", FIXTURES)


if __name__ == "__main__":
    main()
