"""Accountability server flows: registration, issuance, reports, epochs, recovery."""

from __future__ import annotations

import json
import math
import secrets
import shutil
import stat
from concurrent.futures import ThreadPoolExecutor

import pytest
from conftest import ADMIN_TOKEN, EPOCH_SECS, REG_TOKEN, FakeClock

from sandi import tagcrypt
from sandi.accountability import AccountabilityServer, ServerKeys
from sandi.adapters.state_store_file import FileStateStore
from sandi.config import settings_from_mapping
from sandi.contracts import AuthError, RejectReason, RequestError, StorageError
from sandi.epoch_timer import EpochTimer
from sandi.scorekit import Score
from sandi.tagcrypt import EndorsedMessage

# ── Helpers ───────────────────────────────────────────────


def endorse(
    server: AccountabilityServer, credential: str, m: bytes, addr: str = "bob@example.org"
) -> tuple[EndorsedMessage, bytes]:
    c = tagcrypt.commit(m, addr)
    tag = server.issue_tag(credential, c.com)
    return EndorsedMessage(tag=tag, m=m, op=c.op), tagcrypt.encode_tag(tag)


def fresh_tag(server: AccountabilityServer, credential: str) -> bytes:
    return tagcrypt.encode_tag(server.issue_tag(credential, secrets.token_bytes(32)))


def counters(server: AccountabilityServer) -> list[int]:
    return [a["x"] for a in server.state_for_inspection()["accounts"]]


def advance(server: AccountabilityServer, clock: FakeClock) -> None:
    clock.advance(EPOCH_SECS)
    server.advance_epoch(ADMIN_TOKEN)


# ── Registration and issuance ─────────────────────────────


class TestRegistration:
    def test_fresh_account(self, server):
        cred = server.register_sender(REG_TOKEN)
        assert len(cred) >= 43
        assert server.get_score(cred) == (Score(0), "medium")

    def test_bad_token(self, server):
        with pytest.raises(AuthError):
            server.register_sender("nope")
        with pytest.raises(AuthError):
            server.register_sender(None)

    def test_distinct_ids_and_no_plain_credential(self, server):
        c1 = server.register_sender(REG_TOKEN)
        c2 = server.register_sender(REG_TOKEN)
        state = server.state_for_inspection()
        ids = {a["sender_id"] for a in state["accounts"]}
        assert len(ids) == 2
        dumped = json.dumps(state)
        assert c1 not in dumped and c2 not in dumped

    def test_bad_credential(self, server):
        with pytest.raises(AuthError):
            server.get_score("not-a-credential")


class TestIssuance:
    def test_tag_verifies_under_vk(self, server):
        cred = server.register_sender(REG_TOKEN)
        em, _ = endorse(server, cred, b"hello")
        assert tagcrypt.verify_tag_signature(server.vk, em.tag)
        assert tagcrypt.verify_commitment(em.tag.com, em.op, b"hello", "bob@example.org")

    def test_ciphertexts_fresh_per_call(self, server):
        cred = server.register_sender(REG_TOKEN)
        com = secrets.token_bytes(32)
        assert server.issue_tag(cred, com).ct != server.issue_tag(cred, com).ct

    def test_label_at_ceiling(self, make_server, clock):
        server = make_server(b="1", M=1)
        cred = server.register_sender(REG_TOKEN)
        advance(server, clock)
        assert server.get_score(cred) == (Score.of(1), "very high")
        tag = server.issue_tag(cred, secrets.token_bytes(32))
        assert tag.y == server.reputation_cfg.index_of("very high")

    def test_bad_com_length(self, server):
        cred = server.register_sender(REG_TOKEN)
        with pytest.raises(RequestError):
            server.issue_tag(cred, b"\x00" * 31)

    def test_unknown_credential(self, server):
        with pytest.raises(AuthError):
            server.issue_tag("forged", b"\x00" * 32)

    def test_unlinkable_bytes(self, server):
        cred = server.register_sender(REG_TOKEN)
        tags = [server.issue_tag(cred, secrets.token_bytes(32)) for _ in range(100)]
        for field in ("com", "ct", "sigma"):
            assert len({getattr(t, field) for t in tags}) == 100


# ── Reports ───────────────────────────────────────────────


class TestReports:
    def test_accept_increments_counter(self, server):
        cred = server.register_sender(REG_TOKEN)
        _, raw = endorse(server, cred, b"spam")
        assert counters(server) == [0]
        assert server.ingest_report(raw).accepted
        assert counters(server) == [1]

    def test_replay_rejected(self, server):
        cred = server.register_sender(REG_TOKEN)
        _, raw = endorse(server, cred, b"spam")
        assert server.ingest_report(raw).accepted
        assert server.ingest_report(raw).reason is RejectReason.REPLAY
        assert counters(server) == [1]

    def test_replay_of_reissued_commitment_rejected(self, server):
        # a second tag over the same commitment is the same message
        cred = server.register_sender(REG_TOKEN)
        com = secrets.token_bytes(32)
        first = tagcrypt.encode_tag(server.issue_tag(cred, com))
        second = tagcrypt.encode_tag(server.issue_tag(cred, com))
        assert server.ingest_report(first).accepted
        assert server.ingest_report(second).reason is RejectReason.REPLAY

    def test_previous_epoch_tag_accepted(self, server, clock):
        cred = server.register_sender(REG_TOKEN)
        raw = fresh_tag(server, cred)
        advance(server, clock)
        assert server.ingest_report(raw).accepted

    def test_tag_two_epochs_old_expired(self, server, clock):
        cred = server.register_sender(REG_TOKEN)
        raw = fresh_tag(server, cred)
        advance(server, clock)
        advance(server, clock)
        assert server.ingest_report(raw).reason is RejectReason.EXPIRED

    def test_replay_across_epoch_boundary(self, server, clock):
        cred = server.register_sender(REG_TOKEN)
        raw = fresh_tag(server, cred)
        assert server.ingest_report(raw).accepted
        advance(server, clock)
        assert server.ingest_report(raw).reason is RejectReason.REPLAY

    def test_replay_when_epoch_closes_in_the_issuing_second(self, server, clock):
        cred = server.register_sender(REG_TOKEN)
        raw = fresh_tag(server, cred)
        assert server.ingest_report(raw).accepted
        # the next epoch starts in the tag's own second, so tau == window_start one epoch on
        server.advance_epoch(ADMIN_TOKEN)
        advance(server, clock)
        assert tagcrypt.decode_tag(raw).tau == server.epoch.window_start
        assert server.ingest_report(raw).reason is RejectReason.REPLAY
        assert counters(server) == [0]

        advance(server, clock)
        assert server.ingest_report(raw).reason is RejectReason.EXPIRED
        assert server.epoch.seen_commitments == {}

    def test_seen_set_follows_the_report_window(self, server, clock):
        cred = server.register_sender(REG_TOKEN)
        old = fresh_tag(server, cred)
        assert server.ingest_report(old).accepted
        advance(server, clock)
        young = fresh_tag(server, cred)
        assert server.ingest_report(young).accepted
        advance(server, clock)
        # old's tau is before the window now; young's is not
        seen = server.epoch.seen_commitments
        assert tagcrypt.decode_tag(old).com not in seen
        assert seen == {tagcrypt.decode_tag(young).com: tagcrypt.decode_tag(young).tau}

    def test_decode_rejected(self, server):
        assert server.ingest_report(b"junk").reason is RejectReason.DECODE

    def test_bad_signature(self, server):
        cred = server.register_sender(REG_TOKEN)
        raw = bytearray(fresh_tag(server, cred))
        raw[-1] ^= 0x01
        assert server.ingest_report(bytes(raw)).reason is RejectReason.SIGNATURE

    def test_undecryptable_ct(self, server, keys: ServerKeys, clock):
        com, tau = secrets.token_bytes(32), int(clock())
        ct = secrets.token_bytes(44)
        tag = tagcrypt.EndorsementTag(com, tau, 1, ct, tagcrypt.sign_tag(keys.sk, com, tau, 1, ct))
        assert server.ingest_report(tagcrypt.encode_tag(tag)).reason is RejectReason.DECRYPT

    def test_unknown_sender(self, server, keys: ServerKeys, clock):
        com, tau = secrets.token_bytes(32), int(clock())
        ct = tagcrypt.encrypt_sender_id(keys.enc_key, secrets.token_bytes(16))
        tag = tagcrypt.EndorsementTag(com, tau, 1, ct, tagcrypt.sign_tag(keys.sk, com, tau, 1, ct))
        assert server.ingest_report(tagcrypt.encode_tag(tag)).reason is RejectReason.DECRYPT

    def test_rejections_do_not_mutate(self, server, clock):
        cred = server.register_sender(REG_TOKEN)
        raw = fresh_tag(server, cred)
        server.ingest_report(raw)
        before = server.state_for_inspection()
        for bad in (b"junk", raw, raw[:-1] + bytes([raw[-1] ^ 1])):
            assert not server.ingest_report(bad).accepted
        assert server.state_for_inspection() == before

    def test_concurrent_reports_are_all_counted(self, server):
        cred = server.register_sender(REG_TOKEN)
        tags = [fresh_tag(server, cred) for _ in range(200)]
        with ThreadPoolExecutor(max_workers=8) as pool:
            outcomes = list(pool.map(server.ingest_report, tags))
        assert all(o.accepted for o in outcomes)
        assert counters(server) == [200]


# ── Epochs ────────────────────────────────────────────────


class TestEpochs:
    def test_three_reports_then_advance(self, server, clock):
        cred = server.register_sender(REG_TOKEN)
        for i in range(3):
            _, raw = endorse(server, cred, f"msg {i}".encode())
            assert server.ingest_report(raw).accepted
        summary = server.advance_epoch(ADMIN_TOKEN)
        assert (summary.epoch, summary.updated) == (1, 1)
        assert server.get_score(cred) == (Score.of(-2), "low")
        assert counters(server) == [0]

    def test_quiet_epoch_recovers(self, server):
        cred = server.register_sender(REG_TOKEN)
        server.advance_epoch(ADMIN_TOKEN)
        assert server.get_score(cred)[0] == Score.of("0.5")

    def test_bad_admin_token(self, server):
        with pytest.raises(AuthError):
            server.advance_epoch("wrong")
        assert server.epoch.index == 0

    def test_maybe_advance_follows_clock(self, server, clock):
        assert server.maybe_advance() is None
        clock.advance(EPOCH_SECS - 1)
        assert server.maybe_advance() is None
        clock.advance(1)
        summary = server.maybe_advance()
        assert summary is not None and summary.epoch == 1
        assert server.epoch.started_at == int(clock())

    def test_timer_tick(self, server, clock):
        timer = EpochTimer(server)
        clock.advance(EPOCH_SECS)
        timer.tick()
        assert server.epoch.index == 1

    def test_snapshot_failure_aborts_advance(self, make_server, tmp_path):
        class FlakyStore(FileStateStore):
            fail = False

            def write_snapshot(self, state):
                if self.fail:
                    raise StorageError("disk full")
                super().write_snapshot(state)

        flaky = FlakyStore(tmp_path / "flaky", fsync=False)
        server = make_server(store=flaky)
        cred = server.register_sender(REG_TOKEN)
        assert server.ingest_report(fresh_tag(server, cred)).accepted
        assert server.ingest_report(fresh_tag(server, cred)).accepted

        flaky.fail = True
        with pytest.raises(StorageError):
            server.advance_epoch(ADMIN_TOKEN)
        assert server.epoch.index == 0
        assert counters(server) == [2]
        assert server.get_score(cred)[0] == Score(0)

    def test_noise_applied_when_enabled(self, make_server, clock):
        server = make_server(epsilon=math.log(2), noise_seed=3, M=10)
        creds = [server.register_sender(REG_TOKEN) for _ in range(30)]
        server.advance_epoch(ADMIN_TOKEN)
        scores = {server.get_score(c)[0] for c in creds}
        # without noise all thirty would sit at exactly 0.5
        assert len(scores) > 1
        assert all(s <= Score.of(10) for s in scores)


# ── Persistence ───────────────────────────────────────────


class TestRecovery:
    def test_restart_keeps_accounts_and_counters(self, make_server, clock):
        server = make_server("a")
        cred = server.register_sender(REG_TOKEN)
        raw = fresh_tag(server, cred)
        assert server.ingest_report(raw).accepted
        server.close()

        again = make_server("a")
        assert counters(again) == [1]
        assert again.ingest_report(raw).reason is RejectReason.REPLAY
        again.advance_epoch(ADMIN_TOKEN)
        assert again.get_score(cred)[0] == Score(0)

    @pytest.mark.parametrize("epsilon,torn", [(None, False), (None, True), (math.log(2), False)])
    def test_crash_consistency(self, make_server, clock, tmp_path, epsilon, torn):
        kw = dict(epsilon=epsilon, noise_seed=11, snapshot_every=40, M=10)
        live = make_server("live", **kw)
        creds = [live.register_sender(REG_TOKEN) for _ in range(3)]
        tags = [fresh_tag(live, creds[i % 3]) for i in range(150)]
        for raw in tags[:120]:
            assert live.ingest_report(raw).accepted

        # a kill leaves exactly what has been written so far
        shutil.copytree(tmp_path / "live", tmp_path / "crashed")
        if torn:
            with (tmp_path / "crashed" / "events.jsonl").open("ab") as f:
                f.write(b'{"com":"ab","epoch":0,"se')
        revived = make_server("crashed", **kw)
        assert counters(revived) == counters(live)

        for srv in (live, revived):
            for raw in tags[120:]:
                assert srv.ingest_report(raw).accepted
            srv.advance_epoch(ADMIN_TOKEN)

        assert [a for a in revived.state_for_inspection()["accounts"]] == [
            a for a in live.state_for_inspection()["accounts"]
        ]
        assert (tmp_path / "crashed" / "snapshot.json").read_bytes() == (
            tmp_path / "live" / "snapshot.json"
        ).read_bytes()

    def test_keys_persist_with_private_mode(self, tmp_path):
        path = tmp_path / "keys.json"
        first = ServerKeys.load_or_create(path)
        second = ServerKeys.load_or_create(path)
        assert tagcrypt.vk_to_bytes(first.vk) == tagcrypt.vk_to_bytes(second.vk)
        assert first.enc_key == second.enc_key
        assert stat.S_IMODE(path.stat().st_mode) == 0o600

    def test_keys_never_exist_with_loose_mode(self, tmp_path, monkeypatch):
        import sandi.private_files as private_files

        path = tmp_path / "keys.json"
        stale = tmp_path / "keys.json.tmp"
        stale.write_text("left by a crash")
        stale.chmod(0o644)

        real_open = private_files.os.open
        calls: list[tuple[int, int]] = []

        def spy(p, flags, mode=0o777):
            calls.append((flags, mode))
            return real_open(p, flags, mode)

        monkeypatch.setattr(private_files.os, "open", spy)
        ServerKeys.load_or_create(path)

        assert calls
        for flags, mode in calls:
            assert mode == 0o600
            assert flags & private_files.os.O_EXCL
        assert stat.S_IMODE(path.stat().st_mode) == 0o600
        assert not stale.exists()

    def test_from_settings(self, tmp_path, clock):
        settings = settings_from_mapping(
            {"server": {"data_dir": str(tmp_path / "srv"), "fsync": False}},
            {"SANDI_REGISTRATION_TOKEN": REG_TOKEN, "SANDI_ADMIN_TOKEN": ADMIN_TOKEN},
        )
        server = AccountabilityServer.from_settings(settings, clock=clock)
        cred = server.register_sender(REG_TOKEN)
        server.close()
        again = AccountabilityServer.from_settings(settings, clock=clock)
        assert again.get_score(cred) == (Score(0), "medium")
        assert again.vk_bytes == server.vk_bytes
        again.close()


# ── Privacy by state inspection ───────────────────────────


def test_server_state_holds_no_message_opening_or_address(server: AccountabilityServer):
    cred = server.register_sender(REG_TOKEN)
    secrets_seen: list[bytes] = []
    for i in range(20):
        m = f"confidential message #{i} {secrets.token_hex(8)}".encode()
        addr = f"receiver{i}-{secrets.token_hex(4)}@example.org"
        em, raw = endorse(server, cred, m, addr)
        if i % 2 == 0:
            assert server.ingest_report(raw).accepted
        h_r = tagcrypt.receiver_digest(addr)
        for blob in (m, addr.encode(), em.op, h_r):
            secrets_seen += [blob, blob.hex().encode(), tagcrypt.b64e(blob).encode()]

    store = server._store  # noqa: SLF001
    assert isinstance(store, FileStateStore)
    dump = store.dump_all() + json.dumps(server.state_for_inspection()).encode()
    for needle in secrets_seen:
        assert needle not in dump
