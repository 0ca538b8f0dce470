# src/sandi/stratsim/oracle.py
"""
Brute-force reference value: enumerate every deterministic within-epoch plan.

A plan assigns wait or send(m) to each decision state (r, s < L) of one slice and is
scored by walking its outcome tree. Epochs are not enumerated jointly: the value of the
next slice is taken from a memoised continuation, the same backward decomposition the
solver uses, so this checks the within-epoch optimisation and not the composition across
epochs. Plans of different slices never interact (the next slice is fixed by the reports
this slice ended with). Shares nothing with the solver except the score function and the
game types; tests cover the cross-epoch part by enumerating whole policies on small games.
"""

from __future__ import annotations

import itertools
from functools import lru_cache
from typing import Dict, Sequence, Tuple

from sandi.contracts import InstanceTooLarge, InvalidGameSpec
from sandi.scorekit import Score, reputation_index, update_score
from sandi.stratsim.game import GameSpec, reachable_scores

MAX_PLANS = 10**6


def brute_force_value(g: GameSpec, max_plans: int = MAX_PLANS) -> float:
    if g.dp is not None:
        raise InvalidGameSpec("brute_force_value needs dp off")

    L = g.send_cap
    decisions = [(r, s) for s in range(L) for r in range(s + 1)]
    index = {st: i for i, st in enumerate(decisions)}
    choices = len(g.messages) + 1  # 0 = wait, i + 1 = send messages[i]

    n_slices, plans_per_slice = plan_count(g)
    if n_slices * plans_per_slice > max_plans:
        raise InstanceTooLarge(
            f"{n_slices} slices x {plans_per_slice} plans exceed {max_plans}"
        )

    @lru_cache(maxsize=None)
    def slice_value(e: int, sc_units: int) -> float:
        y = reputation_index(Score(sc_units), g.rep_cfg)
        cont: Dict[int, float] = {}
        for r in range(L + 1):
            if e == 1:
                cont[r] = 0.0
            else:
                cont[r] = slice_value(e - 1, update_score(Score(sc_units), r, g.params).units)

        def walk(plan: Sequence[int], r: int, s: int) -> float:
            if s == L:
                return cont[r]
            choice = plan[index[(r, s)]]
            if choice == 0:
                return cont[r]
            m = g.messages[choice - 1]
            q, p = m.q_by_label[y], m.p_by_label[y]
            return q * m.reward + p * walk(plan, r + 1, s + 1) + (1.0 - p) * walk(plan, r, s + 1)

        best = float("-inf")
        for plan in itertools.product(range(choices), repeat=len(decisions)):
            best = max(best, walk(plan, 0, 0))
        return best

    return slice_value(g.horizon, g.initial_sc.units)


def plan_count(g: GameSpec) -> Tuple[int, int]:
    """(reachable slices, plans per slice); the oracle enumerates their product."""
    L = g.send_cap
    return (
        sum(len(v) for v in reachable_scores(g).values()),
        (len(g.messages) + 1) ** (L * (L + 1) // 2),
    )
