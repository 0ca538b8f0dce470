# src/sandi/stratsim/montecarlo.py
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, Sequence, Tuple

import numpy as np

from sandi.contracts import ParameterError
from sandi.scorekit import SCORE_DENOM, Score, sample_report_noise_batch, update_score
from sandi.stratsim.game import WAIT, GameSpec
from sandi.stratsim.solver import Policy

QUANTILE_LEVELS: Tuple[float, ...] = (0.05, 0.25, 0.5, 0.75, 0.95)


@dataclass(frozen=True)
class SimResult:
    trials: int
    mean: float
    stderr: float
    report_histogram: Dict[int, int]  # reports in one epoch -> (trial, epoch) count
    quantile_levels: Tuple[float, ...]
    score_quantiles: np.ndarray  # shape (horizon + 1, levels); row 0 is the start


def _lookup(keys: np.ndarray, fn: Callable[[int, int], int]) -> np.ndarray:
    return np.array([fn(int(a), int(b)) for a, b in keys.T], dtype=np.int64)


def simulate(
    g: GameSpec,
    pol: Policy,
    trials: int,
    rng: np.random.Generator,
    *,
    observe_reports: bool = True,
    quantile_levels: Sequence[float] = QUANTILE_LEVELS,
) -> SimResult:
    """
    I.i.d. rollouts of `pol` in `g`, all trials advanced together.

    With dp on, the epoch update draws report noise; the sender still sees its own
    reports when observe_reports is set, otherwise the policy is always asked with r=0.
    """
    if trials < 1:
        raise ParameterError(f"trials must be >= 1, got {trials}", field="trials")

    n, L = g.horizon, g.send_cap
    cuts = np.array([t.units for t in g.rep_cfg.thresholds], dtype=np.int64)
    q = np.array([m.q_by_label for m in g.messages])
    p = np.array([m.p_by_label for m in g.messages])
    reward = np.array([m.reward for m in g.messages])

    sc = np.full(trials, g.initial_sc.units, dtype=np.int64)
    total = np.zeros(trials)
    trajectory = np.empty((n + 1, trials), dtype=np.int64)
    trajectory[0] = sc
    hist = np.zeros(L + 1, dtype=np.int64)

    for step, e in enumerate(range(n, 0, -1), start=1):
        y = np.searchsorted(cuts, sc, side="right")
        r = np.zeros(trials, dtype=np.int64)
        active = np.ones(trials, dtype=bool)

        for s in range(L):
            seen = r if observe_reports else np.zeros_like(r)
            # few distinct (score, reports) states per step; ask the policy once per state
            keys, inv = np.unique(np.stack([sc, seen]), axis=1, return_inverse=True)
            act = _lookup(keys, lambda u, rr, s=s, e=e: pol.action(e, u, rr, s))[inv.ravel()]
            active &= act != WAIT
            if not active.any():
                break
            a = np.where(active, act, 0)
            engaged = active & (rng.random(trials) < q[a, y])
            reported = active & (rng.random(trials) < p[a, y])
            total += np.where(engaged, reward[a], 0.0)
            r += reported

        hist += np.bincount(r, minlength=L + 1)[: L + 1]
        if g.dp is None:
            x = r
        else:
            x = np.maximum(0, r + sample_report_noise_batch(g.dp, rng, trials))
        keys, inv = np.unique(np.stack([sc, x]), axis=1, return_inverse=True)
        sc = _lookup(keys, lambda u, xx: update_score(Score(u), xx, g.params).units)[inv.ravel()]
        trajectory[step] = sc

    stderr = float(total.std(ddof=1)) / math.sqrt(trials) if trials > 1 else 0.0
    levels = tuple(float(v) for v in quantile_levels)
    quantiles = np.quantile(trajectory / SCORE_DENOM, levels, axis=1).T
    return SimResult(
        trials=trials,
        mean=float(total.mean()),
        stderr=stderr,
        report_histogram={i: int(c) for i, c in enumerate(hist)},
        quantile_levels=levels,
        score_quantiles=quantiles,
    )
