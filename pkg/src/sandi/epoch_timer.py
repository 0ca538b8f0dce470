# src/sandi/epoch_timer.py
from __future__ import annotations

import logging
import threading

from sandi.accountability import AccountabilityServer
from sandi.contracts import SandiError

log = logging.getLogger(__name__)


class EpochTimer:
    """Daemon thread that closes epochs on the wall clock.

    Manual advances and timer advances go through the server lock, so they serialize;
    a manual advance simply restarts the running epoch's clock.
    """

    def __init__(self, server: AccountabilityServer, poll_secs: float = 1.0) -> None:
        self._server = server
        self._poll_secs = poll_secs
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, name="epoch-timer", daemon=True)

    def start(self) -> None:
        self._thread.start()

    def stop(self, timeout: float | None = 5.0) -> None:
        self._stop.set()
        if self._thread.is_alive():
            self._thread.join(timeout)

    def tick(self) -> None:
        try:
            summary = self._server.maybe_advance()
        except SandiError as e:
            # state is untouched on a failed advance; the next tick retries
            log.error("timed epoch advance failed: %s", e)
            return
        if summary is not None:
            log.info("timer closed epoch, now %d", summary.epoch)

    def _run(self) -> None:
        while not self._stop.wait(self._poll_secs):
            self.tick()
