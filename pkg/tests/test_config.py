from __future__ import annotations

import logging
from pathlib import Path

import pytest

from sandi.config import load_settings, settings_from_mapping
from sandi.contracts import ConfigError
from sandi.logging_config import SecretRedactFilter
from sandi.redact import mask_secret, redact_text
from sandi.scorekit import Score

# ── Settings ──────────────────────────────────────────────


def test_defaults_from_empty_mapping():
    s = settings_from_mapping({}, {})
    assert s.server.epoch_duration_secs == 86_400
    assert s.server.fsync is True
    assert s.score.epsilon is None
    assert s.reputation.labels == ("low", "medium", "high", "very high")
    assert s.secrets() == []


def test_environment_wins_over_file():
    data = {
        "server": {"data_dir": "from-file", "registration_token": "file-token"},
        "score": {"epsilon": "off"},
        "log": {"level": "INFO"},
    }
    env = {
        "SANDI_DATA_DIR": "from-env",
        "SANDI_REGISTRATION_TOKEN": "env-token",
        "SANDI_EPSILON": "0.5",
        "SANDI_NOISE_SEED": "42",
        "SANDI_LOG_LEVEL": "DEBUG",
    }
    s = settings_from_mapping(data, env)
    assert s.server.data_dir == Path("from-env")
    assert s.server.registration_token == "env-token"
    assert s.server.noise_seed == 42
    assert s.score.epsilon == 0.5
    assert s.log_level == "DEBUG"


def test_reputation_from_file():
    s = settings_from_mapping(
        {"reputation": {"labels": ["bad", "good"], "thresholds": ["1.5"]}}, {}
    )
    assert s.reputation.thresholds == (Score.of("1.5"),)
    stars = settings_from_mapping({"reputation": {"preset": "five_star"}}, {})
    assert len(stars.reputation.labels) == 5


@pytest.mark.parametrize(
    "data",
    [
        {"server": "not a mapping"},
        {"score": {"epsilon": "lots"}},
        {"score": {"k": 0}},
        {"score": {"b": "-1"}},
        {"server": {"epoch_duration_secs": 0}},
        {"server": {"snapshot_every": 0}},
        {"reputation": {"preset": "ten_star"}},
        {"reputation": {"labels": ["a", "b"]}},
        {"reputation": {"labels": ["a", "b", "c"], "thresholds": ["2", "1"]}},
    ],
)
def test_bad_settings_raise_config_error(data: dict):
    with pytest.raises(ConfigError):
        settings_from_mapping(data, {})


@pytest.mark.parametrize(
    ("raw", "expected"),
    [(False, False), ("false", False), ("No", False), ("0", False), (True, True), ("yes", True)],
)
def test_fsync_flag_parsed_as_boolean(raw, expected: bool):
    s = settings_from_mapping({"server": {"fsync": raw}}, {})
    assert s.server.fsync is expected


def test_unknown_fsync_word_is_rejected():
    with pytest.raises(ConfigError) as exc:
        settings_from_mapping({"server": {"fsync": "maybe"}}, {})
    assert exc.value.error.details == {"key": "server.fsync"}


def test_load_settings_reads_yaml_and_dotenv(tmp_path: Path, monkeypatch: pytest.MonkeyPatch):
    monkeypatch.delenv("SANDI_ADMIN_TOKEN", raising=False)
    cfg = tmp_path / "config.yaml"
    cfg.write_text("server:\n  snapshot_every: 7\n", encoding="utf-8")
    env_file = tmp_path / ".env"
    env_file.write_text("SANDI_ADMIN_TOKEN=from-dotenv\n", encoding="utf-8")

    s = load_settings(cfg, env_path=env_file)
    assert s.server.snapshot_every == 7
    assert s.server.admin_token == "from-dotenv"
    monkeypatch.delenv("SANDI_ADMIN_TOKEN")


def test_missing_explicit_config_is_an_error(tmp_path: Path):
    with pytest.raises(ConfigError):
        load_settings(tmp_path / "nope.yaml", env_path=tmp_path / ".env")


def test_top_level_must_be_mapping(tmp_path: Path):
    cfg = tmp_path / "config.yaml"
    cfg.write_text("- a\n- b\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_settings(cfg, env_path=tmp_path / ".env")


# ── Redaction ─────────────────────────────────────────────


def test_mask_secret_keeps_short_values_hidden():
    assert mask_secret(None) == "<empty>"
    assert mask_secret("short") == "<masked>"
    assert mask_secret("a" * 30 + "wxyz") == "<masked>...wxyz"


def test_redact_text():
    secret = "s3cr3t-token-value-abcdefgh"
    assert secret not in redact_text(f"token={secret}", [secret])


def test_filter_masks_formatted_message():
    secret = "credential-0123456789abcdef"
    flt = SecretRedactFilter([secret])
    record = logging.LogRecord("sandi", logging.INFO, __file__, 1, "got %s", (secret,), None)
    assert flt.filter(record)
    assert secret not in record.getMessage()
    assert record.getMessage().startswith("got <masked>")


def test_filter_leaves_clean_records_alone():
    flt = SecretRedactFilter(["never-appears-anywhere"])
    record = logging.LogRecord("sandi", logging.INFO, __file__, 1, "epoch %d", (3,), None)
    flt.filter(record)
    assert (record.msg, record.args) == ("epoch %d", (3,))
