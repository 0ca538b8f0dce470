# src/sandi/stratsim/game.py
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Dict, List, Tuple

from sandi.contracts import InstanceTooLarge, InvalidGameSpec
from sandi.scorekit import ReputationConfig, Score, ScoreParams, update_score

WAIT = -1  # action code; any other action is the index of the message sent

MAX_STATES = 10**7


@dataclass(frozen=True)
class MessageType:
    """Per-label engagement (q) and report (p) probabilities, lowest label first."""

    reward: float
    q_by_label: Tuple[float, ...]
    p_by_label: Tuple[float, ...]
    name: str = ""

    def ratio(self, y: int) -> float:
        # (q/p)*Reward, the per-report payoff of sending this message at label y
        return self.q_by_label[y] / self.p_by_label[y] * self.reward


@dataclass(frozen=True)
class GameSpec:
    horizon: int  # n, epochs left at the start
    messages: Tuple[MessageType, ...]
    send_cap: int  # L, sends per epoch
    params: ScoreParams  # params.epsilon is the game's dp setting
    rep_cfg: ReputationConfig
    initial_sc: Score

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise InvalidGameSpec(f"horizon must be >= 1, got {self.horizon}")
        if self.send_cap < 1:
            raise InvalidGameSpec(f"send_cap must be >= 1, got {self.send_cap}")
        if not self.messages:
            raise InvalidGameSpec("at least one message type is required")
        if self.initial_sc.units > self.params.M.units:
            raise InvalidGameSpec(f"initial score {self.initial_sc} is above M={self.params.M}")

        n_labels = len(self.rep_cfg.labels)
        for i, m in enumerate(self.messages):
            where = m.name or f"messages[{i}]"
            if not (math.isfinite(m.reward) and m.reward >= 0):
                raise InvalidGameSpec(f"{where}: reward must be a finite number >= 0")
            if len(m.q_by_label) != n_labels or len(m.p_by_label) != n_labels:
                raise InvalidGameSpec(f"{where}: q and p need one value per label ({n_labels})")
            if not all(0.0 <= v <= 1.0 for v in m.q_by_label + m.p_by_label):
                raise InvalidGameSpec(f"{where}: probabilities must lie in [0, 1]")
            if any(v <= 0.0 for v in m.p_by_label):
                raise InvalidGameSpec(f"{where}: report probability p must be > 0")
            if any(a > b for a, b in zip(m.q_by_label, m.q_by_label[1:], strict=False)):
                raise InvalidGameSpec(f"{where}: q must be non-decreasing in label order")
            if any(a < b for a, b in zip(m.p_by_label, m.p_by_label[1:], strict=False)):
                raise InvalidGameSpec(f"{where}: p must be non-increasing in label order")

    @property
    def dp(self) -> float | None:
        return self.params.epsilon

    def without_noise(self) -> GameSpec:
        if self.params.epsilon is None:
            return self
        return dataclasses.replace(
            self, params=dataclasses.replace(self.params, epsilon=None)
        )

    def decision_states(self) -> List[Tuple[int, int]]:
        """(reports, sends) pairs where the sender still has a choice; s == L forces wait."""
        return [(r, s) for s in range(self.send_cap) for r in range(s + 1)]


def reachable_scores(g: GameSpec, limit: int = MAX_STATES) -> Dict[int, List[int]]:
    """epochs_left -> sorted score units the sender can enter that epoch with (no noise)."""
    levels: Dict[int, List[int]] = {g.horizon: [g.initial_sc.units]}
    total = 1
    for e in range(g.horizon, 1, -1):
        nxt = {
            update_score(Score(u), r, g.params).units
            for u in levels[e]
            for r in range(g.send_cap + 1)
        }
        levels[e - 1] = sorted(nxt)
        total += len(nxt)
        if total > limit:
            raise InstanceTooLarge(f"more than {limit} reachable (epoch, score) slices")
    return levels
