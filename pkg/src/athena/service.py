"""HTTP API over the engine: catalog, search, events, recommendations, admin.

JSON in, JSON out. Reads are served from an immutable model snapshot that
retraining replaces with a single reference swap, so concurrent readers
never observe a half-trained model. Event appends go through one lock and
hit events.jsonl before the request is acknowledged. No authentication:
user_id is a trusted parameter, suitable for desk-scale deployments only.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import cbf
from .catalog import (
    ActivityEvent,
    Community,
    Dataset,
    EventKind,
    MaterialType,
    UserProfile,
    load_dataset,
    parse_preferences,
    ValidationError,
)
from .cf import EventWeights, UnknownUserError
from .hybrid import BlendConfig, ModelSet, recommend, train_models
from .notify import ScheduleError, parse_schedule

DEFAULT_PAGE_SIZE = 20
MAX_PAGE_SIZE = 100


class ApiError(Exception):
    def __init__(self, status: int, error: str, field: Optional[str] = None, extra: Optional[dict] = None):
        super().__init__(error)
        self.status = status
        self.error = error
        self.field = field
        self.extra = extra or {}

    def body(self) -> dict:
        body = {"error": self.error, "field": self.field}
        body.update(self.extra)
        return body


class EventStore:
    """Catalog + users in memory, events append-only through events.jsonl."""

    def __init__(self, data_dir):
        self.data_dir = Path(data_dir)
        ds = load_dataset(self.data_dir)
        self.items = {i.id: i for i in ds.items}
        self.item_order = [i.id for i in ds.items]
        self.users = {u.id: u for u in ds.users}
        self.user_order = [u.id for u in ds.users]
        self.events: list[ActivityEvent] = list(ds.events)
        self._lock = threading.Lock()

    def append_event(self, event: ActivityEvent) -> None:
        with self._lock:
            line = json.dumps(event.to_obj(), sort_keys=True)
            with open(self.data_dir / "events.jsonl", "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            self.events.append(event)

    def replace_user(self, user: UserProfile) -> None:
        with self._lock:
            self.users[user.id] = user
            tmp = self.data_dir / "users.jsonl.tmp"
            with open(tmp, "w", encoding="utf-8") as fh:
                for uid in self.user_order:
                    fh.write(json.dumps(self.users[uid].to_obj(), sort_keys=True) + "\n")
            os.replace(tmp, self.data_dir / "users.jsonl")

    def snapshot(self) -> Dataset:
        with self._lock:
            return Dataset(
                items=[self.items[i] for i in self.item_order],
                users=list(self.users.values()),
                events=sorted(self.events, key=lambda e: e.timestamp),
            )

    def stats(self) -> dict:
        with self._lock:
            by_kind = {k.value: 0 for k in EventKind}
            per_item: dict[str, int] = {}
            for e in self.events:
                by_kind[e.kind.value] += 1
                per_item[e.item_id] = per_item.get(e.item_id, 0) + 1
            top = sorted(per_item.items(), key=lambda p: (-p[1], p[0]))[:10]
            per_community = {c.value: 0 for c in Community}
            for item in self.items.values():
                for c in item.communities:
                    per_community[c.value] += 1
            return {
                "n_items": len(self.items),
                "n_users": len(self.users),
                "n_events": len(self.events),
                "events_by_kind": by_kind,
                "top_items_by_events": [{"item_id": i, "count": c} for i, c in top],
                "items_per_community": per_community,
            }


class ModelHandle:
    """Holds the published (version, models) pair; retrains swap it atomically."""

    def __init__(self, k: Optional[int] = None, weights: EventWeights = EventWeights()):
        self.k = k
        self.weights = weights
        self._published: tuple[int, Optional[ModelSet]] = (0, None)
        self._state_lock = threading.Lock()
        self._worker: Optional[threading.Thread] = None
        self._target_version = 0

    def published(self) -> tuple[int, Optional[ModelSet]]:
        return self._published

    def train_now(self, store: EventStore) -> int:
        """Synchronous retrain; used at startup and by the CLI."""
        dataset = store.snapshot()
        models = train_models(dataset, k=self.k, weights=self.weights, trained_at=time.time())
        with self._state_lock:
            version = self._published[0] + 1
            self._published = (version, models)
        return version

    def start_retrain(self, store: EventStore) -> tuple[int, str]:
        """Kick a background retrain; concurrent calls coalesce into one run."""
        with self._state_lock:
            if self._worker is not None and self._worker.is_alive():
                raise ApiError(
                    409, "retrain already queued", extra={"version": self._target_version}
                )
            self._target_version = self._published[0] + 1
            target = self._target_version

            def run():
                dataset = store.snapshot()
                models = train_models(
                    dataset, k=self.k, weights=self.weights, trained_at=time.time()
                )
                self._published = (target, models)

            self._worker = threading.Thread(target=run, daemon=True)
            self._worker.start()
        return target, "started"

    def wait(self) -> None:
        worker = self._worker
        if worker is not None:
            worker.join()


def _parse_int(raw: Optional[str], name: str, default: int, lo: int, hi: Optional[int] = None) -> int:
    if raw is None or raw == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ApiError(400, f"{name} must be an integer", field=name) from None
    if value < lo or (hi is not None and value > hi):
        raise ApiError(400, f"{name} out of range", field=name)
    return value


def create_app(
    store: EventStore,
    handle: Optional[ModelHandle] = None,
    train_on_start: bool = True,
    static_dir: Optional[Path] = None,
) -> FastAPI:
    handle = handle or ModelHandle()
    app = FastAPI(title="athena", docs_url=None, redoc_url=None)
    app.state.store = store
    app.state.handle = handle
    if train_on_start:
        handle.train_now(store)

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content=exc.body())

    def current_models() -> tuple[int, ModelSet]:
        version, models = handle.published()
        if models is None:
            raise ApiError(503, "no model trained yet; POST /admin/retrain first")
        return version, models

    def get_user(user_id: str) -> UserProfile:
        user = store.users.get(user_id)
        if user is None:
            raise ApiError(404, f"unknown user {user_id!r}")
        return user

    @app.get("/users")
    def list_users():
        return {
            "users": [
                {"id": uid, "full_name": store.users[uid].full_name}
                for uid in store.user_order
            ]
        }

    @app.get("/items")
    def list_items(
        community: Optional[str] = None,
        material_type: Optional[str] = None,
        page: Optional[str] = None,
        page_size: Optional[str] = None,
    ):
        page_n = _parse_int(page, "page", 1, 1)
        size = _parse_int(page_size, "page_size", DEFAULT_PAGE_SIZE, 1, MAX_PAGE_SIZE)
        wanted_community = None
        if community:
            try:
                wanted_community = Community(community)
            except ValueError:
                raise ApiError(400, f"unknown community {community!r}", field="community") from None
        wanted_material = None
        if material_type:
            try:
                wanted_material = MaterialType(material_type)
            except ValueError:
                raise ApiError(400, f"unknown material_type {material_type!r}", field="material_type") from None
        selected = [
            store.items[i]
            for i in store.item_order
            if (wanted_community is None or wanted_community in store.items[i].communities)
            and (wanted_material is None or store.items[i].material_type is wanted_material)
        ]
        start = (page_n - 1) * size
        return {
            "items": [item.to_obj() for item in selected[start : start + size]],
            "page": page_n,
            "page_size": size,
            "total": len(selected),
        }

    @app.get("/items/{item_id}")
    def get_item(item_id: str):
        item = store.items.get(item_id)
        if item is None:
            raise ApiError(404, f"unknown item {item_id!r}")
        version, models = handle.published()
        related = []
        if models is not None and item_id in models.tfidf.item_row:
            related = [
                {"item_id": rid, "score": score, "title": store.items[rid].title}
                for rid, score in cbf.related_items(models.tfidf, item_id, 5)
            ]
        return {"item": item.to_obj(), "related": related, "model_version": version}

    @app.get("/search")
    def search(q: Optional[str] = None, limit: Optional[str] = None):
        if not q:
            raise ApiError(400, "missing query", field="q")
        max_hits = _parse_int(limit, "limit", 10, 1, MAX_PAGE_SIZE)
        version, models = current_models()
        hits = cbf.search_items(models.tfidf, q, max_hits)
        return {
            "query": q,
            "results": [
                {"item_id": iid, "score": score, "title": store.items[iid].title}
                for iid, score in hits
                if iid in store.items
            ],
            "model_version": version,
        }

    @app.post("/events", status_code=202)
    async def post_event(request: Request):
        try:
            body = await request.json()
        except Exception:
            raise ApiError(400, "body is not valid JSON", field=None) from None
        if not isinstance(body, dict):
            raise ApiError(400, "body must be a JSON object")
        user = get_user(str(body.get("user_id", "")))
        item_id = str(body.get("item_id", ""))
        if item_id not in store.items:
            raise ApiError(404, f"unknown item {item_id!r}")
        try:
            kind = EventKind(body.get("kind"))
        except ValueError:
            raise ApiError(400, f"unknown kind {body.get('kind')!r}", field="kind") from None
        query = body.get("query")
        if kind is EventKind.SEARCH and not query:
            raise ApiError(400, "search events must carry the query text", field="query")
        if kind is not EventKind.SEARCH and query is not None:
            raise ApiError(400, f"{kind.value} events must not carry a query", field="query")
        timestamp = body.get("timestamp", int(time.time()))
        if not isinstance(timestamp, int) or isinstance(timestamp, bool) or timestamp <= 0:
            raise ApiError(400, "timestamp must be a positive integer", field="timestamp")
        store.append_event(ActivityEvent(user.id, item_id, kind, timestamp, query))
        return {"status": "accepted"}

    @app.get("/users/{user_id}/recommendations")
    def get_recommendations(user_id: str, n: Optional[str] = None, alpha: Optional[str] = None):
        user = get_user(user_id)
        version, models = current_models()
        count = _parse_int(n, "n", 10, 1)
        blend = BlendConfig()
        if alpha not in (None, ""):
            try:
                blend = BlendConfig(alpha=float(alpha))
                blend.validate()
            except ValueError:
                raise ApiError(400, "alpha must be a number in [0, 1]", field="alpha") from None
        try:
            recs = recommend(user.id, count, models, blend)
        except UnknownUserError:
            # user added after the current model snapshot: fall back to empty
            recs = []
        return {
            "user_id": user.id,
            "model_version": version,
            "recommendations": [r.to_obj() for r in recs],
        }

    @app.get("/users/{user_id}/preferences")
    def get_preferences(user_id: str):
        return get_user(user_id).preferences.to_obj()

    @app.put("/users/{user_id}/preferences")
    async def put_preferences(user_id: str, request: Request):
        user = get_user(user_id)
        try:
            body = await request.json()
        except Exception:
            raise ApiError(400, "body is not valid JSON") from None
        try:
            prefs = parse_preferences(body)
        except ValidationError as exc:
            raise ApiError(400, str(exc), field=exc.field) from None
        store.replace_user(UserProfile(user.id, user.full_name, user.email, prefs, user.schedule))
        return prefs.to_obj()

    @app.get("/users/{user_id}/schedule")
    def get_schedule(user_id: str):
        return get_user(user_id).schedule.to_obj()

    @app.put("/users/{user_id}/schedule")
    async def put_schedule(user_id: str, request: Request):
        user = get_user(user_id)
        try:
            body = await request.json()
        except Exception:
            raise ApiError(400, "body is not valid JSON") from None
        try:
            schedule = parse_schedule(body)
        except ScheduleError as exc:
            raise ApiError(400, str(exc), field=f"schedule.{exc.field}") from None
        store.replace_user(UserProfile(user.id, user.full_name, user.email, user.preferences, schedule))
        return schedule.to_obj()

    @app.post("/admin/retrain")
    def retrain():
        version, status = handle.start_retrain(store)
        return {"version": version, "status": status}

    @app.get("/stats")
    def stats():
        payload = store.stats()
        payload["model_version"] = handle.published()[0]
        return payload

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
