"""Blended recommendations: CF + CBF scores with preference personalization.

Collaborative and content scores are min-max normalized onto [0, 1] over
the candidate set and mixed with a convex weight. Cold starts route around
the blend: users with activity the CF model has never seen get content-only
lists, users with no activity at all fall back to popularity. Items the
user already interacted with are always excluded.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import cbf as cbf_mod
from .catalog import ActivityEvent, Dataset, EventKind, Item, PreferenceFilter, UserProfile
from .cbf import TfIdfModel, build_tfidf
from .cf import (
    CfModel,
    EventWeights,
    UnknownUserError,
    build_interaction_matrix,
    train_cf,
)

SOURCE_CF = "cf"
SOURCE_CBF = "cbf"
SOURCE_HYBRID = "hybrid"
SOURCE_POPULARITY = "popularity"

MODE_FILTER = "filter"
MODE_BOOST = "boost"


@dataclass(frozen=True)
class Recommendation:
    item_id: str
    score: float
    source: str
    reason: str

    def to_obj(self) -> dict:
        return {"item_id": self.item_id, "score": self.score, "source": self.source, "reason": self.reason}


@dataclass(frozen=True)
class BlendConfig:
    alpha: float = 0.5  # CF weight; CBF weight is 1 - alpha
    preference_mode: str = MODE_FILTER
    boost_factor: float = 2.0
    n_default: int = 10

    def validate(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.preference_mode not in (MODE_FILTER, MODE_BOOST):
            raise ValueError(f"unknown preference_mode {self.preference_mode!r}")
        if self.boost_factor < 1.0:
            raise ValueError("boost_factor must be >= 1")


@dataclass(frozen=True)
class ModelSet:
    """Everything a recommendation request needs, frozen at train time."""

    items: dict[str, Item]
    users: dict[str, UserProfile]
    cf: Optional[CfModel]
    tfidf: TfIdfModel
    events: tuple[ActivityEvent, ...]
    weights: EventWeights
    fingerprint: str
    trained_at: float
    events_by_user: dict[str, tuple[ActivityEvent, ...]] = field(default_factory=dict)
    item_event_counts: dict[str, int] = field(default_factory=dict)

    def seen_items(self, user_id: str) -> set[str]:
        return {e.item_id for e in self.events_by_user.get(user_id, ())}


def training_fingerprint(events: Sequence[ActivityEvent], weights: EventWeights, k: Optional[int]) -> str:
    digest = hashlib.sha256()
    digest.update(json.dumps({"weights": weights.to_obj(), "k": k}, sort_keys=True).encode())
    for e in events:
        digest.update(f"{e.user_id}\x1f{e.item_id}\x1f{e.kind.value}\x1f{e.timestamp}\n".encode())
    return digest.hexdigest()


def assemble(
    dataset: Dataset,
    cf_model: Optional[CfModel],
    tfidf: TfIdfModel,
    weights: EventWeights,
    fingerprint: str,
    trained_at: float,
) -> ModelSet:
    """Wire trained models to a dataset snapshot (possibly newer than the models)."""
    by_user: dict[str, list[ActivityEvent]] = {}
    counts: dict[str, int] = {}
    for e in dataset.events:
        by_user.setdefault(e.user_id, []).append(e)
        counts[e.item_id] = counts.get(e.item_id, 0) + 1
    return ModelSet(
        items=dataset.items_by_id(),
        users=dataset.users_by_id(),
        cf=cf_model,
        tfidf=tfidf,
        events=tuple(dataset.events),
        weights=weights,
        fingerprint=fingerprint,
        trained_at=trained_at,
        events_by_user={u: tuple(evs) for u, evs in by_user.items()},
        item_event_counts=counts,
    )


def train_models(
    dataset: Dataset,
    k: Optional[int] = None,
    weights: EventWeights = EventWeights(),
    trained_at: float = 0.0,
) -> ModelSet:
    """Fit the TF-IDF and CF models over a dataset snapshot."""
    tfidf = build_tfidf(dataset.items)
    cf_model = None
    if dataset.events:
        matrix = build_interaction_matrix(
            dataset.events,
            weights,
            user_ids=[u.id for u in dataset.users],
            item_ids=[i.id for i in dataset.items],
        )
        cf_model = train_cf(matrix, k, trained_at=trained_at)
    fingerprint = training_fingerprint(dataset.events, weights, k)
    return assemble(dataset, cf_model, tfidf, weights, fingerprint, trained_at)


def min_max_normalize(scores: Mapping[str, float]) -> dict[str, float]:
    """Rescale onto [0, 1]; an all-equal input maps everything to 0.5."""
    if not scores:
        return {}
    lo = min(scores.values())
    hi = max(scores.values())
    if hi == lo:
        return {key: 0.5 for key in scores}
    span = hi - lo
    return {key: (value - lo) / span for key, value in scores.items()}


def cbf_user_scores(
    model: TfIdfModel,
    user_events: Iterable[ActivityEvent],
    weights: EventWeights = EventWeights(),
) -> dict[str, float]:
    """Cosine of every item against the user's weighted like/view profile."""
    profile = np.zeros(len(model.vocabulary))
    used = False
    for event in user_events:
        if event.kind not in (EventKind.LIKE, EventKind.VIEW):
            continue
        row = model.item_row.get(event.item_id)
        if row is None:
            continue
        idx, w = model.row_slice(row)
        profile[idx] += weights.of(event.kind) * w
        used = True
    if not used:
        return {}
    scores = cbf_mod.scores_against(model, profile)
    return {model.item_ids[r]: float(scores[r]) for r in range(model.n_docs)}


def popularity_fallback(
    items: Iterable[Item],
    events: Iterable[ActivityEvent],
    prefs: PreferenceFilter,
    n: int,
) -> list[Recommendation]:
    """Items ranked by total event count, preference-filtered; score = count/max."""
    counts: dict[str, int] = {}
    for e in events:
        counts[e.item_id] = counts.get(e.item_id, 0) + 1
    allowed = sorted((i for i in items if prefs.matches(i)), key=lambda i: i.id)
    top = max(counts.values(), default=0)
    ranked = sorted(
        ((item.id, counts.get(item.id, 0) / top if top else 0.0) for item in allowed),
        key=lambda pair: (-pair[1], pair[0]),
    )
    return [
        Recommendation(item_id, score, SOURCE_POPULARITY, "popular in the library")
        for item_id, score in ranked[:n]
    ]


def _apply_preferences(
    scores: dict[str, float],
    items: Mapping[str, Item],
    prefs: PreferenceFilter,
    blend: BlendConfig,
) -> dict[str, float]:
    if blend.preference_mode == MODE_FILTER:
        return {i: s for i, s in scores.items() if prefs.matches(items[i])}
    boosted = {
        i: s * (blend.boost_factor if prefs.matches(items[i]) else 1.0)
        for i, s in scores.items()
    }
    return min_max_normalize(boosted)


def recommend(
    user_id: str,
    n: int,
    models: ModelSet,
    blend: Optional[BlendConfig] = None,
) -> list[Recommendation]:
    """Top-n personalized recommendations for a registered user."""
    blend = blend or BlendConfig()
    blend.validate()
    if n < 1:
        raise ValueError("n must be >= 1")
    user = models.users.get(user_id)
    if user is None:
        raise UnknownUserError(user_id)
    prefs = user.preferences
    user_events = models.events_by_user.get(user_id, ())

    if not user_events:
        return popularity_fallback(models.items.values(), models.events, prefs, n)

    candidates = [i for i in models.items if i not in models.seen_items(user_id)]

    known_to_cf = (
        models.cf is not None
        and user_id in models.cf.user_row
        and len(models.cf.seen[models.cf.user_row[user_id]]) > 0
    )
    raw_cbf = cbf_user_scores(models.tfidf, user_events, models.weights)

    if not known_to_cf:
        scores = min_max_normalize({i: raw_cbf.get(i, 0.0) for i in candidates})
        source = SOURCE_CBF
        reason_for = lambda i: "similar to items you liked or viewed"
        scores = _apply_preferences(scores, models.items, prefs, blend)
        ranked = sorted(scores.items(), key=lambda pair: (-pair[1], pair[0]))[:n]
        return [Recommendation(i, s, source, reason_for(i)) for i, s in ranked]

    cf_row = models.cf.predict_row(user_id)
    cf_norm = min_max_normalize(
        {i: float(cf_row[models.cf.item_col[i]]) for i in candidates}
    )
    cbf_norm = min_max_normalize({i: raw_cbf.get(i, 0.0) for i in candidates})
    blended = {
        i: blend.alpha * cf_norm.get(i, 0.0) + (1.0 - blend.alpha) * cbf_norm.get(i, 0.0)
        for i in candidates
    }
    blended = _apply_preferences(blended, models.items, prefs, blend)

    if blend.alpha == 1.0:
        source = SOURCE_CF
    elif blend.alpha == 0.0:
        source = SOURCE_CBF
    else:
        source = SOURCE_HYBRID

    def reason_for(item_id: str) -> str:
        if source == SOURCE_CF:
            return "users with similar activity engaged with this"
        if source == SOURCE_CBF:
            return "similar to items you liked or viewed"
        if cbf_norm.get(item_id, 0.0) >= cf_norm.get(item_id, 0.0):
            return "similar to items you liked or viewed"
        return "users with similar activity engaged with this"

    ranked = sorted(blended.items(), key=lambda pair: (-pair[1], pair[0]))[:n]
    return [Recommendation(i, s, source, reason_for(i)) for i, s in ranked]
