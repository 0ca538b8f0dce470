# src/sandi/stratsim/io.py
"""GameSpec JSON documents in, JSON / CSV results out. Schema: docs/game_spec_v1.md."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from sandi.contracts import InvalidGameSpec, ParameterError
from sandi.scorekit import (
    SCORE_DENOM,
    ReputationConfig,
    Score,
    ScoreParams,
    reputation,
)
from sandi.stratsim.game import WAIT, GameSpec, MessageType, reachable_scores
from sandi.stratsim.montecarlo import SimResult
from sandi.stratsim.solver import Policy
from sandi.stratsim.structure import StructureReport


def _epsilon(raw: Any) -> Optional[float]:
    if raw is None or (isinstance(raw, str) and raw.strip().lower() == "off"):
        return None
    return float(raw)


def game_from_mapping(data: Mapping[str, Any]) -> GameSpec:
    try:
        score = data.get("score") or {}
        params = ScoreParams.create(
            k=int(score.get("k", 1)),
            b=score.get("b", "0.5"),
            M=int(score.get("M", 100)),
            epsilon=_epsilon(score.get("epsilon")),
        )
        rep = data.get("reputation") or {}
        if rep.get("preset") == "five_star":
            rep_cfg = ReputationConfig.five_star(params.M)
        elif "labels" in rep:
            rep_cfg = ReputationConfig.from_values(rep["labels"], rep["thresholds"])
        else:
            rep_cfg = ReputationConfig.default(params.M)

        messages = tuple(
            MessageType(
                reward=float(m["reward"]),
                q_by_label=tuple(float(v) for v in m["q"]),
                p_by_label=tuple(float(v) for v in m["p"]),
                name=str(m.get("name", "")),
            )
            for m in data["messages"]
        )
        return GameSpec(
            horizon=int(data["horizon"]),
            messages=messages,
            send_cap=int(data["send_cap"]),
            params=params,
            rep_cfg=rep_cfg,
            initial_sc=Score.of(data.get("initial_sc", 0)),
        )
    except InvalidGameSpec:
        raise
    except ParameterError as e:
        raise InvalidGameSpec(f"bad score parameters: {e}") from e
    except KeyError as e:
        raise InvalidGameSpec(f"missing key {e}") from e
    except (TypeError, ValueError) as e:
        raise InvalidGameSpec(f"bad value: {e}") from e


def load_game(path: Path) -> GameSpec:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        raise InvalidGameSpec(f"cannot read game file {path}: {e}") from e
    if not isinstance(data, dict):
        raise InvalidGameSpec(f"{path} must hold a JSON object")
    return game_from_mapping(data)


def result_to_dict(
    g: GameSpec,
    value: float,
    *,
    oracle: Optional[float] = None,
    structure: Optional[StructureReport] = None,
    sim: Optional[SimResult] = None,
) -> Dict[str, Any]:
    out: Dict[str, Any] = {
        "horizon": g.horizon,
        "send_cap": g.send_cap,
        "messages": len(g.messages),
        "value": value,
    }
    if oracle is not None:
        out["brute_force_value"] = oracle
    if structure is not None:
        out["structure"] = {
            "passed": structure.passed,
            "thresholds": [
                {"epochs_left": e, "sc": u / SCORE_DENOM, "t": t}
                for (e, u), t in sorted(structure.thresholds.items())
            ],
            "terminal_thresholds": [
                {"epochs_left": e, "sc": u / SCORE_DENOM, "t": t}
                for (e, u), t in sorted(structure.terminal_thresholds.items())
            ],
            "violations": [
                {
                    "clause": v.clause,
                    "epochs_left": v.epochs_left,
                    "sc": str(v.sc),
                    "reports": v.reports,
                    "sends": v.sends,
                    "detail": v.detail,
                }
                for v in structure.violations
            ],
        }
    if sim is not None:
        out["simulation"] = {
            "trials": sim.trials,
            "mean": sim.mean,
            "stderr": sim.stderr,
            "report_histogram": {str(k): v for k, v in sim.report_histogram.items()},
            "quantile_levels": list(sim.quantile_levels),
            "score_quantiles": sim.score_quantiles.tolist(),
        }
    return out


def write_result_json(path: Path, result: Mapping[str, Any]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(result, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def write_policy_csv(path: Path, g: GameSpec, pol: Policy) -> int:
    """One row per reachable decision state; returns the number of rows."""
    rows = []
    for e, scores in sorted(reachable_scores(g).items(), reverse=True):
        for u in scores:
            label = reputation(Score(u), g.rep_cfg)
            for r, s in g.decision_states():
                a = pol.action(e, u, r, s)
                rows.append(
                    {
                        "epochs_left": e,
                        "sc": str(Score(u)),
                        "label": label,
                        "reports": r,
                        "sends": s,
                        "action": "wait" if a == WAIT else f"send:{a}",
                        "value": pol.state_value(e, u, r, s),
                    }
                )

    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        w = csv.DictWriter(
            f,
            fieldnames=["epochs_left", "sc", "label", "reports", "sends", "action", "value"],
        )
        w.writeheader()
        w.writerows(rows)
    return len(rows)
