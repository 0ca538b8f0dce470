from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml
from dotenv import load_dotenv

from sandi.contracts import ConfigError, ParameterError
from sandi.scorekit import ReputationConfig, ScoreParams

ENV_PATH = Path(".env")
CONFIG_PATH = Path("config.yaml")

DEFAULT_LISTEN_ADDR = "127.0.0.1:8080"


@dataclass(frozen=True)
class ServerSettings:
    epoch_duration_secs: int = 86_400
    data_dir: Path = Path("state")
    listen_addr: str = DEFAULT_LISTEN_ADDR
    snapshot_every: int = 1000
    fsync: bool = True
    noise_seed: int | None = None
    registration_token: str | None = None
    admin_token: str | None = None


@dataclass(frozen=True)
class ClientSettings:
    server_url: str = f"http://{DEFAULT_LISTEN_ADDR}"
    credential_file: Path = Path(".sandi/credential")
    vk_pin_file: Path = Path(".sandi/vk.pin")


@dataclass(frozen=True)
class Settings:
    server: ServerSettings
    client: ClientSettings
    score: ScoreParams
    reputation: ReputationConfig
    log_level: str = "INFO"
    log_file: Path | None = None
    raw: dict[str, Any] = field(default_factory=dict)

    def secrets(self) -> list[str]:
        return [s for s in (self.server.registration_token, self.server.admin_token) if s]


def _section(data: Mapping[str, Any], name: str) -> Mapping[str, Any]:
    value = data.get(name) or {}
    if not isinstance(value, Mapping):
        raise ConfigError(f"'{name}' must be a mapping", key=name)
    return value


_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _parse_bool(raw: Any, key: str) -> bool:
    if isinstance(raw, bool):
        return raw
    if isinstance(raw, int) and raw in (0, 1):
        return bool(raw)
    if isinstance(raw, str):
        word = raw.strip().lower()
        if word in _TRUE:
            return True
        if word in _FALSE:
            return False
    raise ConfigError(f"{key} must be true or false, got {raw!r}", key=key)


def _parse_epsilon(raw: Any) -> float | None:
    if raw is None or (isinstance(raw, str) and raw.strip().lower() == "off"):
        return None
    try:
        return float(raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"score.epsilon must be a number or 'off', got {raw!r}") from e


def _parse_reputation(section: Mapping[str, Any], score: ScoreParams) -> ReputationConfig:
    preset = section.get("preset")
    if preset == "five_star":
        return ReputationConfig.five_star(score.M)
    if preset not in (None, "default"):
        raise ConfigError(f"unknown reputation preset {preset!r}", key="reputation.preset")
    labels = section.get("labels")
    thresholds = section.get("thresholds")
    if labels is None and thresholds is None:
        return ReputationConfig.default(score.M)
    if labels is None or thresholds is None:
        raise ConfigError("reputation.labels and reputation.thresholds go together")
    return ReputationConfig.from_values(labels, thresholds)


def settings_from_mapping(data: Mapping[str, Any], env: Mapping[str, str]) -> Settings:
    """Builds Settings from parsed YAML; environment values win over the file."""
    srv = _section(data, "server")
    sc = _section(data, "score")
    rep = _section(data, "reputation")
    cli = _section(data, "client")
    lg = _section(data, "log")

    try:
        score = ScoreParams.create(
            k=int(sc.get("k", 1)),
            b=sc.get("b", "0.5"),
            M=int(sc.get("M", 100)),
            epsilon=_parse_epsilon(env.get("SANDI_EPSILON", sc.get("epsilon", "off"))),
        )
        reputation = _parse_reputation(rep, score)
        seed = env.get("SANDI_NOISE_SEED", srv.get("noise_seed"))
        server = ServerSettings(
            epoch_duration_secs=int(srv.get("epoch_duration_secs", 86_400)),
            data_dir=Path(env.get("SANDI_DATA_DIR", srv.get("data_dir", "state"))),
            listen_addr=str(
                env.get("SANDI_LISTEN_ADDR", srv.get("listen_addr", DEFAULT_LISTEN_ADDR))
            ),
            snapshot_every=int(srv.get("snapshot_every", 1000)),
            fsync=_parse_bool(srv.get("fsync", True), "server.fsync"),
            noise_seed=None if seed is None else int(seed),
            registration_token=(
                env.get("SANDI_REGISTRATION_TOKEN") or srv.get("registration_token")
            ),
            admin_token=env.get("SANDI_ADMIN_TOKEN") or srv.get("admin_token"),
        )
        client = ClientSettings(
            server_url=str(
                env.get("SANDI_SERVER_URL", cli.get("server_url", ClientSettings.server_url))
            ),
            credential_file=Path(cli.get("credential_file", ClientSettings.credential_file)),
            vk_pin_file=Path(cli.get("vk_pin_file", ClientSettings.vk_pin_file)),
        )
    except ConfigError:
        raise
    except ParameterError as e:
        raise ConfigError(f"invalid score or reputation setting: {e}") from e
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid configuration value: {e}") from e

    if server.epoch_duration_secs < 1:
        raise ConfigError(
            "server.epoch_duration_secs must be >= 1", key="server.epoch_duration_secs"
        )
    if server.snapshot_every < 1:
        raise ConfigError("server.snapshot_every must be >= 1", key="server.snapshot_every")

    log_file = env.get("SANDI_LOG_FILE", lg.get("file"))
    return Settings(
        server=server,
        client=client,
        score=score,
        reputation=reputation,
        log_level=str(env.get("SANDI_LOG_LEVEL", lg.get("level", "INFO"))),
        log_file=Path(log_file) if log_file else None,
        raw=dict(data),
    )


def load_settings(config_path: Path | None = None, env_path: Path = ENV_PATH) -> Settings:
    # 1) .env first (if present); real environment variables are not overridden
    if env_path.exists():
        load_dotenv(env_path)

    # 2) config.yaml (if present)
    path = config_path or Path(os.getenv("SANDI_CONFIG", CONFIG_PATH))
    if path.exists():
        config_data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    elif config_path is not None:
        raise ConfigError(f"config file not found: {path}", key="path")
    else:
        config_data = {}
    if not isinstance(config_data, dict):
        raise ConfigError(f"{path} must contain a mapping at top level")

    return settings_from_mapping(config_data, os.environ)
