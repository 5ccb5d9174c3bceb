"""Train/test splitting and decision-based top-N metrics.

Splits are temporal per user: the newest like/view events are held out so
no configuration ever trains on the future. Precision counts hits among
the recommended list; recall counts them against the user's held-out
items; scores are macro-averaged per user by default.
"""

from __future__ import annotations

import csv
import io
import json
import math
import random
from dataclasses import dataclass
from typing import Optional, Sequence

from .catalog import ActivityEvent, Dataset, EventKind
from .cf import EventWeights
from .hybrid import BlendConfig, recommend, train_models


class FractionError(ValueError):
    """test_fraction outside (0, 1)."""


class EvalError(RuntimeError):
    """Training or scoring failed for a named configuration."""


def split_events(
    events: Sequence[ActivityEvent], test_fraction: float, seed: int
) -> tuple[list[ActivityEvent], list[ActivityEvent]]:
    """Per-user temporal split; the seed only breaks equal-timestamp ties.

    Each user's latest ceil(test_fraction * count) like/view events go to
    test. Search events and users with fewer than two like/view events stay
    wholly in train.
    """
    if not 0.0 < test_fraction < 1.0:
        raise FractionError(f"test_fraction must lie strictly between 0 and 1, got {test_fraction}")
    rng = random.Random(seed)
    tiebreak = {id(e): rng.random() for e in events}

    by_user: dict[str, list[ActivityEvent]] = {}
    for event in events:
        by_user.setdefault(event.user_id, []).append(event)

    test_ids: set[int] = set()
    for user_events in by_user.values():
        likeview = [e for e in user_events if e.kind is not EventKind.SEARCH]
        if len(likeview) < 2:
            continue
        likeview.sort(key=lambda e: (e.timestamp, tiebreak[id(e)]))
        n_test = math.ceil(test_fraction * len(likeview))
        for event in likeview[len(likeview) - n_test :]:
            test_ids.add(id(event))

    train = [e for e in events if id(e) not in test_ids]
    test = [e for e in events if id(e) in test_ids]
    return train, test


def precision_recall_f(
    recommended: Sequence[str], relevant: set[str], possible: set[str]
) -> tuple[float, float, float]:
    """Decision metrics; an empty recommendation list scores precision 0.

    Recall counts hits against the reachable relevant items
    (``relevant & possible``); in the harness ``possible`` is the user's
    held-out set itself.
    """
    p = len(set(recommended) & relevant) / len(recommended) if recommended else 0.0
    reachable = relevant & possible
    r = len(set(recommended) & reachable) / len(reachable) if reachable else 0.0
    f = 2 * p * r / (p + r) if (p + r) > 0 else 0.0
    return p, r, f


@dataclass(frozen=True)
class EvalConfig:
    name: str
    alpha: float  # 1.0 is pure CF, 0.0 pure CBF

    @staticmethod
    def hybrid(alpha: float = 0.5) -> "EvalConfig":
        return EvalConfig(f"hybrid:{alpha:g}", alpha)

    @staticmethod
    def cf_only() -> "EvalConfig":
        return EvalConfig("cf", 1.0)

    @staticmethod
    def cbf_only() -> "EvalConfig":
        return EvalConfig("cbf", 0.0)


DEFAULT_CONFIGS = (EvalConfig.hybrid(0.5), EvalConfig.cf_only(), EvalConfig.cbf_only())


@dataclass(frozen=True)
class EvalRow:
    name: str
    precision: float
    recall: float
    f_measure: float
    n_users: int
    seed: int

    def to_obj(self) -> dict:
        return {
            "name": self.name,
            "precision": self.precision,
            "recall": self.recall,
            "f_measure": self.f_measure,
            "n_users": self.n_users,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[EvalRow, ...]
    n: int
    test_fraction: float

    def to_obj(self) -> dict:
        return {
            "n": self.n,
            "test_fraction": self.test_fraction,
            "rows": [row.to_obj() for row in self.rows],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_obj(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        headers = ("config", "seed", f"precision@{self.n}", f"recall@{self.n}", f"f@{self.n}", "users")
        lines = [list(headers)]
        for row in self.rows:
            lines.append(
                [row.name, str(row.seed), f"{row.precision:.4f}", f"{row.recall:.4f}",
                 f"{row.f_measure:.4f}", str(row.n_users)]
            )
        widths = [max(len(line[c]) for line in lines) for c in range(len(headers))]
        rendered = []
        for i, line in enumerate(lines):
            rendered.append("  ".join(cell.ljust(widths[c]) for c, cell in enumerate(line)).rstrip())
            if i == 0:
                rendered.append("  ".join("-" * widths[c] for c in range(len(headers))))
        return "\n".join(rendered)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["config", "seed", "precision", "recall", "f_measure", "n_users"])
        for row in self.rows:
            writer.writerow([row.name, row.seed, row.precision, row.recall, row.f_measure, row.n_users])
        return buf.getvalue()


def compare_filters(
    dataset: Dataset,
    configs: Sequence[EvalConfig] = DEFAULT_CONFIGS,
    n: int = 10,
    test_fraction: float = 0.2,
    seed: int = 0,
    k: Optional[int] = None,
    weights: EventWeights = EventWeights(),
    average: str = "macro",
) -> EvalReport:
    """Evaluate each configuration on a shared temporal split.

    All configurations share one trained model set per call (training is
    deterministic, so per-config retraining would produce identical models);
    seen-item exclusion therefore only sees train events. Rows come back
    sorted by descending f-measure.
    """
    if average not in ("macro", "micro"):
        raise ValueError("average must be 'macro' or 'micro'")
    train, test = split_events(dataset.events, test_fraction, seed)
    train_ds = Dataset(items=dataset.items, users=dataset.users, events=train)
    models = train_models(train_ds, k=k, weights=weights)

    # relevant = held-out items the user had NOT touched in train; items the
    # recommender must exclude as already-seen cannot count against it
    train_seen: dict[str, set[str]] = {}
    for event in train:
        train_seen.setdefault(event.user_id, set()).add(event.item_id)
    relevant_by_user: dict[str, set[str]] = {}
    for event in test:
        if event.item_id not in train_seen.get(event.user_id, set()):
            relevant_by_user.setdefault(event.user_id, set()).add(event.item_id)
    relevant_by_user = {u: items for u, items in relevant_by_user.items() if items}

    rows = []
    for config in configs:
        try:
            per_user = []
            totals = {"hits": 0, "recommended": 0, "relevant": 0}
            for user_id in sorted(relevant_by_user):
                relevant = relevant_by_user[user_id]
                recs = [
                    r.item_id
                    for r in recommend(user_id, n, models, BlendConfig(alpha=config.alpha))
                ]
                per_user.append(precision_recall_f(recs, relevant, relevant))
                totals["hits"] += len(set(recs) & relevant)
                totals["recommended"] += len(recs)
                totals["relevant"] += len(relevant)
            if average == "macro":
                count = len(per_user)
                p = sum(x[0] for x in per_user) / count if count else 0.0
                r = sum(x[1] for x in per_user) / count if count else 0.0
                f = sum(x[2] for x in per_user) / count if count else 0.0
            else:
                p = totals["hits"] / totals["recommended"] if totals["recommended"] else 0.0
                r = totals["hits"] / totals["relevant"] if totals["relevant"] else 0.0
                f = 2 * p * r / (p + r) if (p + r) > 0 else 0.0
            rows.append(EvalRow(config.name, p, r, f, len(relevant_by_user), seed))
        except Exception as exc:
            raise EvalError(f"configuration {config.name!r}: {exc}") from exc

    rows.sort(key=lambda row: (-row.f_measure, row.name))
    return EvalReport(rows=tuple(rows), n=n, test_fraction=test_fraction)
