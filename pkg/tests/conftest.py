from __future__ import annotations

from pathlib import Path
from typing import Any, Callable, Iterator

import pytest
from fastapi.testclient import TestClient

from sandi.accountability import AccountabilityServer, ServerKeys
from sandi.adapters.state_store_file import FileStateStore
from sandi.api import create_app
from sandi.clientkit import AsdClient
from sandi.scorekit import ReputationConfig, ScoreParams

REG_TOKEN = "test-registration-token-0001"
ADMIN_TOKEN = "test-admin-token-0002"
EPOCH_SECS = 1000
T0 = 1_700_000_000


class FakeClock:
    def __init__(self, now: float = T0) -> None:
        self.now = float(now)

    def __call__(self) -> float:
        return self.now

    def advance(self, secs: float) -> None:
        self.now += secs


ServerFactory = Callable[..., AccountabilityServer]


@pytest.fixture
def clock() -> FakeClock:
    return FakeClock()


@pytest.fixture
def keys() -> ServerKeys:
    return ServerKeys.generate(admin_token=ADMIN_TOKEN)


@pytest.fixture
def make_server(
    tmp_path: Path, clock: FakeClock, keys: ServerKeys
) -> Iterator[ServerFactory]:
    """Builds servers over tmp_path/<name>; same name = same data dir (restart)."""
    opened: list[AccountabilityServer] = []

    def _make(
        name: str = "state",
        *,
        k: int = 1,
        b: str = "0.5",
        M: int = 100,
        epsilon: float | None = None,
        **kw: Any,
    ) -> AccountabilityServer:
        params = ScoreParams.create(k=k, b=b, M=M, epsilon=epsilon)
        kwargs: dict[str, Any] = dict(
            keys=keys,
            params=params,
            reputation_cfg=ReputationConfig.default(params.M),
            store=FileStateStore(tmp_path / name, fsync=False),
            registration_token=REG_TOKEN,
            epoch_duration_secs=EPOCH_SECS,
            clock=clock,
        )
        kwargs.update(kw)
        srv = AccountabilityServer(**kwargs)
        opened.append(srv)
        return srv

    yield _make
    for srv in opened:
        srv.close()


@pytest.fixture
def server(make_server: ServerFactory) -> AccountabilityServer:
    return make_server()


@pytest.fixture
def http(server: AccountabilityServer) -> TestClient:
    return TestClient(create_app(server))


@pytest.fixture
def asd(http: TestClient) -> AsdClient:
    return AsdClient("http://testserver", client=http, retry_backoff_seconds=0.0)
