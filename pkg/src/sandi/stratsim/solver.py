# src/sandi/stratsim/solver.py
"""
Exact backward induction for the sender game (dp off).

State: (epochs_left e, entering score sc, reports r, sends s) with 0 <= r <= s <= L.

  V(e, sc, r, L) = W(e, sc, r)
  V(e, sc, r, s) = max( W(e, sc, r),
                        max_m  q*R + p*V(e, sc, r+1, s+1) + (1-p)*V(e, sc, r, s+1) )
  W(e, sc, r)    = V(e-1, upd(sc, r), 0, 0)   and 0 when e == 1

q and p are read at the label of sc; waiting ends the epoch.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple

from sandi.contracts import InstanceTooLarge, InvalidGameSpec
from sandi.scorekit import Score, reputation_index, update_score
from sandi.stratsim.game import MAX_STATES, WAIT, GameSpec, reachable_scores

log = logging.getLogger(__name__)

TIE_EPS = 1e-12

SliceKey = Tuple[int, int]  # (epochs_left, sc units)
StateKey = Tuple[int, int]  # (reports, sends)


@dataclass
class SliceSolution:
    values: Dict[StateKey, float]  # every (r, s) with r <= s <= L
    actions: Dict[StateKey, int]  # decision states only (s < L)
    continuation: Dict[int, float]  # r -> W(e, sc, r)

    @property
    def value(self) -> float:
        return self.values[(0, 0)]


class BackwardInduction:
    """Memoized slice solver. Slices are solved on demand, so a policy can follow
    scores that the noiseless game never reaches (dp rollouts)."""

    def __init__(self, g: GameSpec) -> None:
        self.g = g.without_noise()
        self._slices: Dict[SliceKey, SliceSolution] = {}

    def slice(self, e: int, sc_units: int) -> SliceSolution:
        key = (e, sc_units)
        cached = self._slices.get(key)
        if cached is None:
            cached = self._solve_slice(e, sc_units)
            self._slices[key] = cached
        return cached

    def solved_slices(self) -> Mapping[SliceKey, SliceSolution]:
        return self._slices

    def _continuation(self, e: int, sc_units: int, r: int) -> float:
        if e <= 1:
            return 0.0
        nxt = update_score(Score(sc_units), r, self.g.params)
        return self.slice(e - 1, nxt.units).value

    def _solve_slice(self, e: int, sc_units: int) -> SliceSolution:
        g = self.g
        L = g.send_cap
        y = reputation_index(Score(sc_units), g.rep_cfg)
        cont = {r: self._continuation(e, sc_units, r) for r in range(L + 1)}

        values: Dict[StateKey, float] = {(r, L): cont[r] for r in range(L + 1)}
        actions: Dict[StateKey, int] = {}
        for s in range(L - 1, -1, -1):
            for r in range(s + 1):
                hit, miss = values[(r + 1, s + 1)], values[(r, s + 1)]
                best_action, best = WAIT, cont[r]
                best_send = float("-inf")
                for i, m in enumerate(g.messages):
                    q, p = m.q_by_label[y], m.p_by_label[y]
                    v = q * m.reward + p * hit + (1.0 - p) * miss
                    best_send = max(best_send, v)
                    # ties go to wait, then to the lowest message index
                    if v > best + TIE_EPS:
                        best_action, best = i, v
                actions[(r, s)] = best_action
                values[(r, s)] = max(cont[r], best_send)
        return SliceSolution(values=values, actions=actions, continuation=cont)


@dataclass
class Policy:
    """
    Action map (e, sc units, r, s) -> WAIT or message index.

    A table policy answers only from `actions` (falling back to `default`);
    a solved policy also carries its solver and fills in unseen slices lazily.
    """

    game: GameSpec
    actions: Dict[Tuple[int, int, int, int], int] = field(default_factory=dict)
    value: Optional[float] = None
    default: Optional[int] = None
    solver: Optional[BackwardInduction] = field(default=None, repr=False)

    def action(self, e: int, sc_units: int, r: int, s: int) -> int:
        if s >= self.game.send_cap:
            return WAIT
        key = (e, sc_units, r, s)
        a = self.actions.get(key)
        if a is not None:
            return a
        if self.solver is not None:
            sol = self.solver.slice(e, sc_units)
            for (rr, ss), act in sol.actions.items():
                self.actions[(e, sc_units, rr, ss)] = act
            return sol.actions[(r, s)]
        if self.default is not None:
            return self.default
        raise KeyError(f"policy has no action for state {key}")

    def state_value(self, e: int, sc_units: int, r: int, s: int) -> Optional[float]:
        if self.solver is None:
            return None
        return self.solver.slice(e, sc_units).values[(r, s)]

    @classmethod
    def always_wait(cls, g: GameSpec) -> Policy:
        return cls(game=g, default=WAIT)

    @classmethod
    def from_table(
        cls,
        g: GameSpec,
        table: Mapping[Tuple[int, int, int, int], int],
        default: Optional[int] = WAIT,
    ) -> Policy:
        return cls(game=g, actions=dict(table), default=default)


def optimal_policy(g: GameSpec) -> Tuple[Policy, float]:
    if g.dp is not None:
        raise InvalidGameSpec(
            "optimal_policy needs dp off; solve g.without_noise() and simulate the noisy game"
        )
    levels = reachable_scores(g)
    L = g.send_cap
    n_states = sum(len(v) for v in levels.values()) * (L + 1) * (L + 2) // 2
    if n_states > MAX_STATES:
        raise InstanceTooLarge(f"{n_states} states exceed the limit of {MAX_STATES}")
    log.debug("solving %d states over %d epochs", n_states, g.horizon)

    solver = BackwardInduction(g)
    pol = Policy(game=g, solver=solver)
    for e, scores in levels.items():
        for u in scores:
            for r, s in g.decision_states():
                pol.action(e, u, r, s)
    value = solver.slice(g.horizon, g.initial_sc.units).value
    pol.value = value
    return pol, value
