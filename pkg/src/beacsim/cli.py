"""Command-line front end.

Subcommands:
  run <scenario.yaml> [--trace FILE] [--seed N]
  chain verify|dump|replay <path> [--activation FP]
  token issue|redeem|totp ...

Exit codes: 0 ok, 1 domain error, 2 usage error. BEACSIM_SEED sets the
default seed for `run`.
"""

from __future__ import annotations

import argparse
import base64
import json
import os
import sys

from . import bench, chain
from .dac import Decision
from .errors import BeacError, RefusalError
from .records import PermissionType, TokenKind
from .state import replay
from .tokens import TokenService, TotpGrant, totp_code, totp_issue, _time_step


def _cmd_run(args) -> int:
    seed = args.seed
    if seed is None and "BEACSIM_SEED" in os.environ:
        seed = int(os.environ["BEACSIM_SEED"])
    config = bench.ScenarioConfig.from_yaml(args.scenario, seed_override=seed)
    report = bench.run_scenario(config, trace_path=args.trace)
    sys.stdout.write(report.render())
    return 0


def _cmd_chain_verify(args) -> int:
    ledger = chain.load(args.path)
    ok, diagnostics = chain.verify_chain(ledger)
    if ok:
        print(f"ok: {len(ledger)} blocks verified")
        return 0
    for line in diagnostics:
        print(line, file=sys.stderr)
    return 1


def _cmd_chain_dump(args) -> int:
    sys.stdout.write(chain.dump_text(chain.load(args.path)))
    return 0


def _cmd_chain_replay(args) -> int:
    ledger = chain.load(args.path)
    ok, diagnostics = chain.verify_chain(ledger)
    if not ok:
        for line in diagnostics:
            print(line, file=sys.stderr)
        raise BeacError("chain verification failed; refusing to replay")
    records = [(r.payload, r.issuer) for r in ledger.records()]
    if args.activation:
        activation = bytes.fromhex(args.activation)
    else:
        from .records import DomainRegistration

        activation = next(
            (p.owner for p, _ in records if isinstance(p, DomainRegistration)), None
        )
        if activation is None:
            raise BeacError("no domain registration in chain; use --activation")
    state = replay(records, activation)
    sys.stdout.write(state.dump())
    return 0


# --- token store helpers -------------------------------------------------------

def _load_store(path) -> TokenService:
    service = TokenService(hub_fingerprint=b"\x11" * 32)
    if os.path.exists(path):
        with open(path) as fh:
            raw = json.load(fh)
        from .tokens import AccessToken, TokenStatus

        service._counter = raw["counter"]
        for entry in raw["tokens"]:
            token = AccessToken(
                token_id=bytes.fromhex(entry["id"]),
                user=bytes.fromhex(entry["user"]),
                device=bytes.fromhex(entry["device"]),
                service=entry["service"],
                permission=PermissionType[entry["permission"]],
                kind=TokenKind[entry["kind"]],
                expiry=entry["expiry"],
                issuing_hub=service.hub,
                status=TokenStatus(entry["status"]),
            )
            service._tokens[token.token_id] = token
            service._key_digests[token.token_id] = bytes.fromhex(entry["key_digest"])
    return service


def _save_store(service: TokenService, path) -> None:
    raw = {
        "counter": service._counter,
        "tokens": [
            {
                "id": t.token_id.hex(),
                "user": t.user.hex(),
                "device": t.device.hex(),
                "service": t.service,
                "permission": t.permission.name,
                "kind": t.kind.name,
                "expiry": t.expiry,
                "status": t.status.value,
                "key_digest": service._key_digests[t.token_id].hex(),
            }
            for t in service._tokens.values()
        ],
    }
    with open(path, "w") as fh:
        json.dump(raw, fh, indent=1, sort_keys=True)


def _cmd_token_issue(args) -> int:
    service = _load_store(args.store)
    token, key, _commit = service.issue_token(
        Decision.PERMIT,
        bytes.fromhex(args.user),
        bytes.fromhex(args.device),
        args.service,
        PermissionType[args.permission],
        TokenKind[args.kind],
        args.now,
        expiry=args.expiry,
    )
    if args.ratified:
        service.ratify(token.token_id)
    _save_store(service, args.store)
    print(f"token {token.token_id.hex()}")
    print(f"session-key {base64.b64encode(key.key).decode()}")
    return 0


def _cmd_token_redeem(args) -> int:
    service = _load_store(args.store)
    try:
        token = service.redeem(
            bytes.fromhex(args.token),
            base64.b64decode(args.key),
            args.now,
            allow_pending=args.allow_pending,
        )
    except RefusalError as exc:
        _save_store(service, args.store)
        print(f"refused: {exc}", file=sys.stderr)
        return 1
    _save_store(service, args.store)
    print(f"granted: {token.permission.name} on {token.device.hex()}")
    return 0


def _cmd_token_totp(args) -> int:
    secret = bytes.fromhex(args.secret)
    grant = TotpGrant(
        secret=secret,
        step_seconds=args.step,
        digits=args.digits,
        allowed_visits=args.visits,
        window=args.window,
    )
    if args.redeem is None:
        print(totp_issue(grant, args.now))
        return 0
    step = _time_step(args.now, args.step)
    for delta in range(-args.window, args.window + 1):
        if totp_code(secret, step + delta, args.digits) == args.redeem:
            print("ok")
            return 0
    print("refused: passphrase invalid or outside window", file=sys.stderr)
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="beacsim")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a benchmark scenario")
    run.add_argument("scenario")
    run.add_argument("--trace", help="write per-trial trace lines to this file")
    run.add_argument("--seed", type=int, default=None)
    run.set_defaults(func=_cmd_run)

    chain_p = sub.add_parser("chain", help="inspect a persisted chain file")
    chain_sub = chain_p.add_subparsers(dest="chain_command", required=True)
    for name, func in (
        ("verify", _cmd_chain_verify),
        ("dump", _cmd_chain_dump),
        ("replay", _cmd_chain_replay),
    ):
        p = chain_sub.add_parser(name)
        p.add_argument("path")
        if name == "replay":
            p.add_argument("--activation", help="activation user fingerprint (hex)")
        p.set_defaults(func=func)

    token_p = sub.add_parser("token", help="token scripting against a store file")
    token_sub = token_p.add_subparsers(dest="token_command", required=True)

    issue = token_sub.add_parser("issue")
    issue.add_argument("--store", required=True)
    issue.add_argument("--user", required=True, help="user fingerprint (hex)")
    issue.add_argument("--device", required=True, help="device fingerprint (hex)")
    issue.add_argument("--service", default=None)
    issue.add_argument(
        "--permission", choices=[p.name for p in PermissionType], default="EXECUTE"
    )
    issue.add_argument("--kind", choices=[k.name for k in TokenKind], default="SINGLE_USE")
    issue.add_argument("--expiry", type=int, default=0)
    issue.add_argument("--now", type=int, required=True)
    issue.add_argument("--ratified", action="store_true", help="mark ratified at once")
    issue.set_defaults(func=_cmd_token_issue)

    redeem = token_sub.add_parser("redeem")
    redeem.add_argument("--store", required=True)
    redeem.add_argument("--token", required=True, help="token id (hex)")
    redeem.add_argument("--key", required=True, help="session key (base64)")
    redeem.add_argument("--now", type=int, required=True)
    redeem.add_argument("--allow-pending", action="store_true")
    redeem.set_defaults(func=_cmd_token_redeem)

    totp = token_sub.add_parser("totp")
    totp.add_argument("--secret", required=True, help="shared secret (hex)")
    totp.add_argument("--now", type=int, required=True)
    totp.add_argument("--step", type=int, default=30)
    totp.add_argument("--digits", type=int, default=6)
    totp.add_argument("--window", type=int, default=1)
    totp.add_argument("--visits", type=int, default=1)
    totp.add_argument("--redeem", default=None, help="verify this passphrase")
    totp.set_defaults(func=_cmd_token_totp)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BeacError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
