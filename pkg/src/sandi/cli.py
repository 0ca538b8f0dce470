# src/sandi/cli.py
"""
sandi command line.

Secrets come from the environment (or .env) or from files, never from positional args:
  SANDI_REGISTRATION_TOKEN / --token-file     register
  SANDI_ADMIN_TOKEN / --admin-token-file      epoch advance
  credential file (client.credential_file)    send, score

Exit codes: 0 ok, 1 failure with a reason, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import httpx
import numpy as np

from sandi import tagcrypt
from sandi.bench import run_bench
from sandi.clientkit import (
    AsdClient,
    SenderSession,
    load_credential,
    pinned_vk,
    prepare_endorsed_message,
    report,
    save_credential,
    verify_endorsed_message,
)
from sandi.config import Settings, load_settings
from sandi.contracts import AuthError, SandiError
from sandi.logging_config import register_secret, setup_logging
from sandi.stratsim import (
    brute_force_value,
    optimal_policy,
    simulate,
    verify_theorem_structure,
)
from sandi.stratsim.io import load_game, result_to_dict, write_policy_csv, write_result_json

log = logging.getLogger(__name__)


# -----------------------------
# Helpers
# -----------------------------


def _emit(args: argparse.Namespace, text: str, data: Dict[str, Any]) -> None:
    if args.format == "json":
        print(json.dumps(data, ensure_ascii=False, sort_keys=True))
    else:
        print(text)


def _read_secret(env_name: str, path: Optional[Path], fallback: Optional[str]) -> str:
    if path is not None:
        value = path.read_text(encoding="utf-8").strip()
    else:
        value = os.environ.get(env_name) or fallback or ""
    if not value:
        raise AuthError(f"set {env_name} or pass a secret file")
    register_secret(value)
    return value


class Context:
    def __init__(self, args: argparse.Namespace, http_client: Optional[httpx.Client]) -> None:
        self.args = args
        self.settings: Settings = load_settings(args.config)
        setup_logging(
            args.log_level or self.settings.log_level,
            self.settings.log_file,
            self.settings.secrets(),
        )
        self._http = http_client

    @property
    def credential_file(self) -> Path:
        return self.args.credential_file or self.settings.client.credential_file

    def client(self) -> AsdClient:
        url = self.args.server_url or self.settings.client.server_url
        return AsdClient(url, client=self._http)

    def credential(self) -> str:
        credential = load_credential(self.credential_file)
        register_secret(credential)
        return credential


# -----------------------------
# Subcommands
# -----------------------------


def cmd_serve(ctx: Context) -> int:
    import uvicorn

    from sandi.accountability import AccountabilityServer
    from sandi.api import create_app
    from sandi.epoch_timer import EpochTimer

    s = ctx.settings
    server = AccountabilityServer.from_settings(s)
    host, _, port = (ctx.args.listen or s.server.listen_addr).rpartition(":")
    timer = EpochTimer(server)
    timer.start()
    log.info(
        "serving on %s:%s, epoch %d, %d accounts, epsilon=%s",
        host,
        port,
        server.epoch.index,
        server.account_count(),
        s.score.epsilon if s.score.epsilon is not None else "off",
    )
    try:
        uvicorn.run(create_app(server), host=host or "127.0.0.1", port=int(port), log_level="info")
    finally:
        timer.stop()
        server.close()
    return 0


def cmd_register(ctx: Context) -> int:
    token = _read_secret(
        "SANDI_REGISTRATION_TOKEN", ctx.args.token_file, ctx.settings.server.registration_token
    )
    credential = ctx.client().register(token)
    register_secret(credential)
    save_credential(ctx.credential_file, credential)
    _emit(
        ctx.args,
        f"registered; credential stored in {ctx.credential_file}",
        {"credential_file": str(ctx.credential_file)},
    )
    return 0


def cmd_send(ctx: Context) -> int:
    a = ctx.args
    if a.message_file is not None:
        m = a.message_file.read_bytes()
    else:
        m = (a.message or "").encode("utf-8")
    client = ctx.client()
    session = SenderSession.open(client, ctx.credential(), ctx.settings.client.vk_pin_file)
    em = prepare_endorsed_message(session, m, a.to)
    blob = tagcrypt.dump_endorsed_message(em)
    label = session.labels[em.tag.y] if em.tag.y < len(session.labels) else str(em.tag.y)
    if a.out == "-":
        sys.stdout.buffer.write(blob)
        sys.stdout.flush()
        return 0
    Path(a.out).write_bytes(blob)
    _emit(
        a,
        f"endorsed message written to {a.out} (label {label})",
        {"out": a.out, "y": em.tag.y, "label": label, "tau": em.tag.tau},
    )
    return 0


def cmd_verify(ctx: Context) -> int:
    a = ctx.args
    em = tagcrypt.load_endorsed_message(Path(a.in_file).read_bytes())
    pin = ctx.settings.client.vk_pin_file
    labels = ctx.settings.reputation.labels
    if pin.exists() and not a.refresh_vk:
        vk = tagcrypt.vk_from_bytes(
            tagcrypt.b64d(pin.read_text(encoding="utf-8"), field="vk")
        )
    else:
        vk, labels = pinned_vk(ctx.client(), pin)
    res = verify_endorsed_message(vk, em, a.me, labels)
    if not res.valid:
        _emit(a, f"invalid: {res.reason}", {"valid": False, "reason": res.reason})
        return 1
    _emit(
        a,
        f"valid: sender reputation {res.label} (tau={res.tau})",
        {"valid": True, "y": res.y, "label": res.label, "tau": res.tau},
    )
    return 0


def cmd_report(ctx: Context) -> int:
    em = tagcrypt.load_endorsed_message(Path(ctx.args.in_file).read_bytes())
    outcome = report(ctx.client(), em.tag)
    if outcome.accepted:
        _emit(ctx.args, "report accepted", {"accepted": True})
        return 0
    reason = outcome.reason.value if outcome.reason else "unknown"
    _emit(ctx.args, f"report rejected: {reason}", {"accepted": False, "reason": reason})
    return 1


def cmd_epoch(ctx: Context) -> int:
    token = _read_secret(
        "SANDI_ADMIN_TOKEN", ctx.args.admin_token_file, ctx.settings.server.admin_token
    )
    summary = ctx.client().advance_epoch(token)
    _emit(
        ctx.args,
        f"epoch {summary.epoch}, {summary.updated} accounts updated",
        {"epoch": summary.epoch, "updated": summary.updated},
    )
    return 0


def cmd_score(ctx: Context) -> int:
    sc, label = ctx.client().get_score(ctx.credential())
    _emit(ctx.args, f"sc={sc} y={label}", {"sc": sc, "y": label})
    return 0


def cmd_sim(ctx: Context) -> int:
    a = ctx.args
    g = load_game(a.game)
    base = g.without_noise()
    pol, value = optimal_policy(base)
    oracle = brute_force_value(base) if a.oracle else None
    structure = verify_theorem_structure(base, pol) if a.structure else None
    sim = None
    if a.trials > 0:
        rng = np.random.default_rng(a.seed)
        sim = simulate(g, pol, a.trials, rng, observe_reports=not a.hide_reports)

    result = result_to_dict(base, value, oracle=oracle, structure=structure, sim=sim)
    if a.out_json is not None:
        write_result_json(a.out_json, result)
    if a.out_csv is not None:
        write_policy_csv(a.out_csv, base, pol)

    lines = [f"value={value!r}"]
    if oracle is not None:
        lines.append(f"brute_force_value={oracle!r}")
    if structure is not None:
        lines.append(f"structure {structure.summary()}")
    if sim is not None:
        noise = f" epsilon={g.dp}" if g.dp is not None else ""
        lines.append(f"simulated mean={sim.mean:.6f} stderr={sim.stderr:.6f}{noise}")
    _emit(a, "\n".join(lines), result)
    return 0


def cmd_bench(ctx: Context) -> int:
    res = run_bench(ctx.args.iterations, threads=ctx.args.threads, fsync=ctx.args.fsync)
    text = "\n".join(
        [
            f"issue (server)  median {res.issue_server.median_us:9.1f} us  "
            f"p95 {res.issue_server.p95_us:9.1f} us",
            f"issue (total)   median {res.issue_total.median_us:9.1f} us  "
            f"p95 {res.issue_total.p95_us:9.1f} us",
            f"report          median {res.report.median_us:9.1f} us  "
            f"p95 {res.report.p95_us:9.1f} us",
            f"tag size        {res.tag_bytes} bytes",
        ]
        + (
            [f"parallel        {res.parallel_reports_per_sec:.0f} reports/s ({res.threads} thr)"]
            if res.parallel_reports_per_sec is not None
            else []
        )
    )
    _emit(ctx.args, text, res.as_dict())
    return 0


# -----------------------------
# Parser
# -----------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sandi", description="Sandi accountability tools")
    p.add_argument("--config", type=Path, default=None, help="config.yaml path")
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.add_argument("--log-level", default=None)
    p.add_argument("--server-url", default=None)
    p.add_argument("--credential-file", type=Path, default=None)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("serve", help="run the accountability server")
    s.add_argument("--listen", default=None, help="host:port, overrides server.listen_addr")
    s.set_defaults(func=cmd_serve)

    s = sub.add_parser("register", help="register a sender account")
    s.add_argument("--token-file", type=Path, default=None)
    s.set_defaults(func=cmd_register)

    s = sub.add_parser("send", help="endorse a message for one receiver")
    s.add_argument("--to", required=True, help="receiver address")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--message")
    src.add_argument("--message-file", type=Path)
    s.add_argument("--out", default="-", help="output file, '-' for stdout")
    s.set_defaults(func=cmd_send)

    s = sub.add_parser("verify", help="verify a received endorsed message")
    s.add_argument("--in", dest="in_file", required=True)
    s.add_argument("--me", required=True, help="your own receiver address")
    s.add_argument("--refresh-vk", action="store_true", help="fetch vk and check the pin")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("report", help="report a received endorsed message")
    s.add_argument("--in", dest="in_file", required=True)
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("epoch", help="epoch control")
    epoch_sub = s.add_subparsers(dest="epoch_command", required=True)
    adv = epoch_sub.add_parser("advance", help="close the running epoch now")
    adv.add_argument("--admin-token-file", type=Path, default=None)
    adv.set_defaults(func=cmd_epoch)

    s = sub.add_parser("score", help="show your score and reputation")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("sim", help="solve and simulate a sender game")
    s.add_argument("--game", type=Path, required=True)
    s.add_argument("--oracle", action="store_true", help="also run the brute-force oracle")
    s.add_argument("--structure", action="store_true", help="check threshold structure")
    s.add_argument("--trials", type=int, default=0)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--hide-reports", action="store_true", help="policy never sees reports")
    s.add_argument("--out-json", type=Path, default=None)
    s.add_argument("--out-csv", type=Path, default=None)
    s.set_defaults(func=cmd_sim)

    s = sub.add_parser("bench", help="in-process timings")
    s.add_argument("--iterations", type=int, default=10_000)
    s.add_argument("--threads", type=int, default=0)
    s.add_argument("--fsync", action="store_true")
    s.set_defaults(func=cmd_bench)

    return p


def main(argv: Optional[List[str]] = None, http_client: Optional[httpx.Client] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        ctx = Context(args, http_client)
        return int(args.func(ctx))
    except SandiError as e:
        print(f"error: {e.reason}: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: io: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
