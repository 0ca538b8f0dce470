# src/sandi/bench.py
"""
In-process timings (no network): server-side issuance, full issuance as the sender sees it
minus transport, and report ingestion. Numbers are per operation in microseconds.
"""

from __future__ import annotations

import logging
import secrets
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from sandi import tagcrypt
from sandi.accountability import AccountabilityServer, ServerKeys
from sandi.adapters.state_store_file import FileStateStore
from sandi.scorekit import ReputationConfig, ScoreParams

log = logging.getLogger(__name__)

BENCH_TOKEN = "bench-registration"


@dataclass(frozen=True)
class Timing:
    median_us: float
    p95_us: float
    n: int

    @classmethod
    def of(cls, samples_ns: List[int]) -> Timing:
        arr = np.asarray(samples_ns, dtype=np.float64) / 1_000.0
        return cls(
            median_us=float(np.median(arr)),
            p95_us=float(np.percentile(arr, 95)),
            n=len(samples_ns),
        )


@dataclass(frozen=True)
class BenchResult:
    issue_server: Timing
    issue_total: Timing
    report: Timing
    tag_bytes: int
    threads: int = 0
    parallel_reports_per_sec: Optional[float] = None

    def as_dict(self) -> Dict[str, object]:
        out: Dict[str, object] = {
            "issue_server_us": vars(self.issue_server),
            "issue_total_us": vars(self.issue_total),
            "report_us": vars(self.report),
            "tag_bytes": self.tag_bytes,
        }
        if self.threads:
            out["parallel"] = {
                "threads": self.threads,
                "reports_per_sec": self.parallel_reports_per_sec,
            }
        return out


def _timed(fn: Callable[[], object]) -> int:
    t0 = time.perf_counter_ns()
    fn()
    return time.perf_counter_ns() - t0


def run_bench(
    iterations: int = 10_000,
    *,
    threads: int = 0,
    fsync: bool = False,
    data_dir: Optional[Path] = None,
) -> BenchResult:
    with tempfile.TemporaryDirectory(prefix="sandi-bench-") as tmp:
        root = data_dir or Path(tmp)
        server = AccountabilityServer(
            keys=ServerKeys.generate(),
            params=ScoreParams.create(),
            reputation_cfg=ReputationConfig.default(),
            store=FileStateStore(root, fsync=fsync),
            registration_token=BENCH_TOKEN,
            snapshot_every=10**9,
        )
        try:
            return _run(server, iterations, threads)
        finally:
            server.close()


def _run(server: AccountabilityServer, iterations: int, threads: int) -> BenchResult:
    credential = server.register_sender(BENCH_TOKEN)
    vk = server.vk
    coms = [secrets.token_bytes(tagcrypt.DIGEST_LEN) for _ in range(iterations)]

    issue_server: List[int] = []
    tags: List[bytes] = []
    for com in coms:
        t0 = time.perf_counter_ns()
        tag = server.issue_tag(credential, com)
        issue_server.append(time.perf_counter_ns() - t0)
        tags.append(tagcrypt.encode_tag(tag))

    def sender_side() -> None:
        c = tagcrypt.commit(b"bench message", "bench@example.org")
        raw = tagcrypt.encode_tag(server.issue_tag(credential, c.com))
        tagcrypt.verify_tag_signature(vk, tagcrypt.decode_tag(raw))

    issue_total = [_timed(sender_side) for _ in range(iterations)]
    report = [_timed(lambda raw=raw: server.ingest_report(raw)) for raw in tags]

    per_sec: Optional[float] = None
    if threads > 0:
        fresh = [
            tagcrypt.encode_tag(server.issue_tag(credential, secrets.token_bytes(32)))
            for _ in range(iterations)
        ]
        t0 = time.perf_counter()
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(server.ingest_report, fresh))
        per_sec = iterations / (time.perf_counter() - t0)

    result = BenchResult(
        issue_server=Timing.of(issue_server),
        issue_total=Timing.of(issue_total),
        report=Timing.of(report),
        tag_bytes=len(tags[0]),
        threads=threads,
        parallel_reports_per_sec=per_sec,
    )
    log.info("bench done: %d iterations", iterations)
    return result
