"""Score function, reputation mapping and parameter validation."""

from __future__ import annotations

import pytest

from sandi.contracts import ParameterError
from sandi.scorekit import (
    SCORE_DENOM,
    ZERO,
    ReputationConfig,
    Score,
    ScoreParams,
    reputation,
    reputation_index,
    update_score,
)

# ── Helpers ───────────────────────────────────────────────

GRID_PARAMS = [(1, "0.5", 10), (2, "1", 100), (3, "0.25", 50)]


def score_grid(p: ScoreParams) -> list[Score]:
    lo = -20 * SCORE_DENOM
    return [Score(u) for u in range(lo, p.M.units + 1, p.b.units)]


# ── Update rule ───────────────────────────────────────────


class TestUpdateExamples:
    def test_over_tolerance_pays_excess(self):
        p = ScoreParams.create(k=1, b="0.5", M=10)
        assert update_score(ZERO, 3, p) == Score.of(-2)

    def test_quiet_epoch_recovers_by_b(self):
        p = ScoreParams.create(k=1, b="0.5", M=10)
        assert update_score(ZERO, 0, p) == Score.of("0.5")

    def test_recovery_capped_at_m(self):
        p = ScoreParams.create(k=1, b="0.5", M=10)
        assert update_score(Score.of("9.8"), 0, p) == Score.of(10)

    def test_negative_score_recovers_by_tolerance(self):
        p = ScoreParams.create(k=2, b=1, M=100)
        # x < k from below zero: sc - x + k, never above 0
        assert update_score(Score.of(-5), 0, p) == Score.of(-3)
        assert update_score(Score.of(-1), 0, p) == ZERO

    def test_x_equal_k_is_free(self):
        p = ScoreParams.create(k=1, b="0.5", M=10)
        assert update_score(Score.of(4), 1, p) == Score.of(4)

    def test_negative_count_rejected(self):
        with pytest.raises(ParameterError):
            update_score(ZERO, -1, ScoreParams.create())

    def test_score_above_ceiling_rejected(self):
        with pytest.raises(ParameterError):
            update_score(Score.of(11), 0, ScoreParams.create(M=10))


class TestUpdateGrid:
    @pytest.mark.parametrize("k,b,M", GRID_PARAMS)
    def test_invariants(self, k, b, M):
        p = ScoreParams.create(k=k, b=b, M=M)
        for sc in score_grid(p):
            prev = None
            for x in range(21):
                new = update_score(sc, x, p)
                # ceiling
                assert new <= p.M
                # monotone non-increasing in x
                if prev is not None:
                    assert new <= prev
                prev = new
                if x >= k:
                    # penalty exactness
                    assert new.units == sc.units - (x - k) * SCORE_DENOM
                elif sc.units >= 0:
                    # tolerance: under k reports never lose score
                    assert new >= sc
                    assert new.units == min(sc.units + p.b.units, p.M.units)
                else:
                    assert sc <= new <= ZERO

    @pytest.mark.parametrize("k,b,M", GRID_PARAMS)
    def test_monotone_in_score(self, k, b, M):
        p = ScoreParams.create(k=k, b=b, M=M)
        grid = score_grid(p)
        for x in range(21):
            outs = [update_score(sc, x, p) for sc in grid]
            assert outs == sorted(outs)


class TestRecoveryLadder:
    def test_from_minus_five(self):
        p = ScoreParams.create(k=1, b="0.5", M=10)
        sc = Score.of(-5)
        hit_zero = hit_max = None
        for epoch in range(1, 40):
            sc = update_score(sc, 0, p)
            if hit_zero is None and sc == ZERO:
                hit_zero = epoch
            if hit_max is None and sc == p.M:
                hit_max = epoch
        assert hit_zero == 5
        assert hit_max == 25


# ── Reputation ────────────────────────────────────────────


class TestReputation:
    def test_default_labels_and_cuts(self):
        cfg = ReputationConfig.default(100)
        assert cfg.labels == ("low", "medium", "high", "very high")
        assert [str(t) for t in cfg.thresholds] == ["0.00", "25.00", "75.00"]

    @pytest.mark.parametrize(
        "sc,label",
        [("-0.01", "low"), ("0", "medium"), ("24.99", "medium"), ("25", "high"),
         ("74.99", "high"), ("75", "very high"), ("100", "very high"), ("-50", "low")],
    )
    def test_boundaries_inclusive(self, sc, label):
        assert reputation(Score.of(sc), ReputationConfig.default(100)) == label

    def test_index_is_monotone(self):
        cfg = ReputationConfig.default(10)
        idx = [reputation_index(Score(u), cfg) for u in range(-500, 1001, 7)]
        assert idx == sorted(idx)

    def test_five_star_preset(self):
        cfg = ReputationConfig.five_star(100)
        assert reputation(Score.of(-1), cfg) == "1"
        assert reputation(Score.of(0), cfg) == "2"
        assert reputation(Score.of(50), cfg) == "4"
        assert reputation(Score.of(100), cfg) == "5"

    def test_threshold_count_must_match(self):
        with pytest.raises(ParameterError):
            ReputationConfig.from_values(["a", "b", "c"], [0])

    def test_thresholds_strictly_increasing(self):
        with pytest.raises(ParameterError):
            ReputationConfig.from_values(["a", "b", "c"], [5, 5])


# ── Parameters ────────────────────────────────────────────


class TestParams:
    @pytest.mark.parametrize(
        "kw",
        [dict(k=0), dict(b="0"), dict(b="1.5"), dict(M=0), dict(epsilon=0.0),
         dict(epsilon=-1.0), dict(b="0.005")],
    )
    def test_rejects(self, kw):
        with pytest.raises(ParameterError):
            ScoreParams.create(**kw)

    def test_score_string_form(self):
        assert str(Score.of(-2)) == "-2.00"
        assert str(Score.of("0.5")) == "0.50"

    def test_off_grid_score_rejected(self):
        with pytest.raises(ParameterError):
            Score.of("0.001")
