# src/sandi/stratsim/structure.py
"""
Checks a policy for the threshold-then-wait shape:

  (a) per (epochs_left, score) slice there is a t <= k with send for r < t and wait for
      r >= t at every decision state (r, s < L);
  (b) each send uses a message maximizing (q/p)*Reward at the slice's label, or swapping
      in such a message leaves the state's value unchanged.

The terminal epoch has no future cost, so neither clause is enforced there; its
thresholds are listed separately.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from sandi.scorekit import Score, reputation_index
from sandi.stratsim.game import WAIT, GameSpec, reachable_scores
from sandi.stratsim.solver import TIE_EPS, Policy

SliceKey = Tuple[int, int]


@dataclass(frozen=True)
class Violation:
    clause: str  # "threshold" | "message"
    epochs_left: int
    sc: Score
    reports: int
    sends: int
    detail: str


@dataclass
class StructureReport:
    thresholds: Dict[SliceKey, int] = field(default_factory=dict)
    terminal_thresholds: Dict[SliceKey, Optional[int]] = field(default_factory=dict)
    violations: List[Violation] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        if self.passed:
            worst = max(self.thresholds.values(), default=0)
            return f"pass: {len(self.thresholds)} slices, max threshold {worst}"
        first = self.violations[0]
        return (
            f"fail: {len(self.violations)} violations, first {first.clause} at "
            f"e={first.epochs_left} sc={first.sc} r={first.reports} s={first.sends} "
            f"({first.detail})"
        )


def _threshold(
    g: GameSpec, pol: Policy, e: int, u: int
) -> Tuple[Optional[int], List[Tuple[int, int]]]:
    """Smallest report count with a wait anywhere in the slice, plus the states breaking
    send-below / wait-at-or-above it. None means the slice never sends."""
    states = g.decision_states()
    acts = {(r, s): pol.action(e, u, r, s) for r, s in states}
    waits_at = [r for (r, s), a in acts.items() if a == WAIT]
    t = min(waits_at) if waits_at else g.send_cap
    broken = [
        (r, s)
        for (r, s), a in sorted(acts.items())
        if (r < t and a == WAIT) or (r >= t and a != WAIT)
    ]
    if all(a == WAIT for a in acts.values()):
        return None, broken
    return t, broken


def verify_theorem_structure(g: GameSpec, pol: Policy) -> StructureReport:
    report = StructureReport()
    k = g.params.k

    for e, scores in sorted(reachable_scores(g).items(), reverse=True):
        terminal = e == 1
        for u in scores:
            sc = Score(u)
            t, broken = _threshold(g, pol, e, u)
            if terminal:
                report.terminal_thresholds[(e, u)] = t
            else:
                report.thresholds[(e, u)] = 0 if t is None else t
                for r, s in broken:
                    report.violations.append(
                        Violation("threshold", e, sc, r, s, f"not monotone around t={t}")
                    )
                if t is not None and t > k:
                    report.violations.append(
                        Violation("threshold", e, sc, t, 0, f"threshold {t} exceeds k={k}")
                    )
            if not terminal:
                _check_messages(g, pol, e, u, report)

    return report


def _check_messages(g: GameSpec, pol: Policy, e: int, u: int, report: StructureReport) -> None:
    y = reputation_index(Score(u), g.rep_cfg)
    ratios = [m.ratio(y) for m in g.messages]
    best_ratio = max(ratios)
    argmax = [i for i, v in enumerate(ratios) if v >= best_ratio - TIE_EPS]

    for r, s in g.decision_states():
        a = pol.action(e, u, r, s)
        if a == WAIT or a in argmax:
            continue
        here = pol.state_value(e, u, r, s)
        hit = pol.state_value(e, u, r + 1, s + 1)
        miss = pol.state_value(e, u, r, s + 1)
        if here is not None and hit is not None and miss is not None:
            swapped = max(
                g.messages[i].q_by_label[y] * g.messages[i].reward
                + g.messages[i].p_by_label[y] * hit
                + (1.0 - g.messages[i].p_by_label[y]) * miss
                for i in argmax
            )
            if abs(swapped - here) <= TIE_EPS:
                continue
            detail = f"sends {a}, argmax {argmax} loses {here - swapped:.3g}"
        else:
            detail = f"sends {a}, argmax {argmax}"
        report.violations.append(Violation("message", e, Score(u), r, s, detail))
