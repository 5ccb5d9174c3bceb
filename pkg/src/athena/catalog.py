"""Catalog data model and line-delimited JSON persistence.

One entity per line, UTF-8, schemas documented in the README. All loaders
validate eagerly and report the offending line and field; unknown enum
values are hard errors so that a typo can never silently defeat a user's
preference filter.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .notify import DeliverySchedule, ScheduleError, parse_schedule


class MaterialType(str, Enum):
    BOOK = "book"
    SERIAL = "serial"
    THESIS = "thesis"
    NON_PRINT = "non_print"
    VERTICAL_FILE = "vertical_file"
    INVENTORY_PROJECT = "inventory_project"
    TECHNICAL_REPORT = "technical_report"
    REPRINT = "reprint"
    ANALYTIC = "analytic"
    JOURNAL = "journal"
    ARTICLE = "article"
    POSTER = "poster"


class Community(str, Enum):
    BANANA = "banana"
    CACAO = "cacao"
    COCONUT = "coconut"
    COFFEE = "coffee"
    CORN = "corn"
    RICE = "rice"
    SOYBEAN = "soybean"
    SUGARCANE = "sugarcane"
    TOMATO = "tomato"
    OTHER = "other"


class EventKind(str, Enum):
    SEARCH = "search"
    VIEW = "view"
    LIKE = "like"


class ParseError(ValueError):
    """A line is not valid JSON."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ValidationError(ValueError):
    """A parsed entity violates an invariant; carries line and field."""

    def __init__(self, line_no: int, field_name: str, message: str):
        super().__init__(f"line {line_no}, field {field_name!r}: {message}")
        self.line_no = line_no
        self.field = field_name


class ConfigError(ValueError):
    """Degenerate generator configuration."""


@dataclass(frozen=True)
class Item:
    id: str
    title: str
    description: str
    material_type: MaterialType
    communities: frozenset[Community]
    publication_date: date

    def to_obj(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "description": self.description,
            "material_type": self.material_type.value,
            "communities": sorted(c.value for c in self.communities),
            "publication_date": self.publication_date.isoformat(),
        }


@dataclass(frozen=True)
class PreferenceFilter:
    """Allowed communities and material types; an empty set means no restriction."""

    communities: frozenset[Community] = frozenset()
    material_types: frozenset[MaterialType] = frozenset()

    def matches(self, item: Item) -> bool:
        if self.communities and not (self.communities & item.communities):
            return False
        if self.material_types and item.material_type not in self.material_types:
            return False
        return True

    def to_obj(self) -> dict:
        return {
            "communities": sorted(c.value for c in self.communities),
            "material_types": sorted(m.value for m in self.material_types),
        }


@dataclass(frozen=True)
class UserProfile:
    id: str
    full_name: str
    email: str
    preferences: PreferenceFilter = PreferenceFilter()
    schedule: DeliverySchedule = DeliverySchedule()

    def to_obj(self) -> dict:
        return {
            "id": self.id,
            "full_name": self.full_name,
            "email": self.email,
            "preferences": self.preferences.to_obj(),
            "schedule": self.schedule.to_obj(),
        }


@dataclass(frozen=True)
class ActivityEvent:
    user_id: str
    item_id: str
    kind: EventKind
    timestamp: int
    query: Optional[str] = None

    def to_obj(self) -> dict:
        return {
            "user_id": self.user_id,
            "item_id": self.item_id,
            "kind": self.kind.value,
            "timestamp": self.timestamp,
            "query": self.query,
        }


@dataclass
class Dataset:
    items: list[Item] = field(default_factory=list)
    users: list[UserProfile] = field(default_factory=list)
    events: list[ActivityEvent] = field(default_factory=list)

    def items_by_id(self) -> dict[str, Item]:
        return {item.id: item for item in self.items}

    def users_by_id(self) -> dict[str, UserProfile]:
        return {user.id: user for user in self.users}


# --- field helpers ------------------------------------------------------------

def _require_str(obj: dict, key: str, line_no: int, allow_empty: bool = False) -> str:
    value = obj.get(key)
    if not isinstance(value, str):
        raise ValidationError(line_no, key, "missing or not a string")
    if not allow_empty and not value:
        raise ValidationError(line_no, key, "must be non-empty")
    return value


def _parse_enum(enum_cls, raw, key: str, line_no: int):
    try:
        return enum_cls(raw)
    except ValueError:
        known = ", ".join(e.value for e in enum_cls)
        raise ValidationError(line_no, key, f"unknown value {raw!r} (known: {known})") from None


def _iter_jsonl(path) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(line_no, f"invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise ParseError(line_no, "line is not a JSON object")
            yield line_no, obj


# --- items ---------------------------------------------------------------------

def parse_item(obj: dict, line_no: int = 0) -> Item:
    item_id = _require_str(obj, "id", line_no)
    title = _require_str(obj, "title", line_no)
    description = obj.get("description", "")
    if not isinstance(description, str):
        raise ValidationError(line_no, "description", "must be a string")
    material = _parse_enum(MaterialType, obj.get("material_type"), "material_type", line_no)
    raw_comms = obj.get("communities")
    if not isinstance(raw_comms, list) or not raw_comms:
        raise ValidationError(line_no, "communities", "must be a non-empty list")
    communities = frozenset(_parse_enum(Community, c, "communities", line_no) for c in raw_comms)
    raw_date = _require_str(obj, "publication_date", line_no)
    try:
        pub_date = date.fromisoformat(raw_date)
    except ValueError:
        raise ValidationError(line_no, "publication_date", f"not an ISO date: {raw_date!r}") from None
    return Item(item_id, title, description, material, communities, pub_date)


def load_items(path) -> list[Item]:
    """Read items.jsonl; duplicate ids are rejected."""
    items: list[Item] = []
    seen: dict[str, int] = {}
    for line_no, obj in _iter_jsonl(path):
        item = parse_item(obj, line_no)
        if item.id in seen:
            raise ValidationError(line_no, "id", f"duplicate id {item.id!r} (first on line {seen[item.id]})")
        seen[item.id] = line_no
        items.append(item)
    return items


# --- users ---------------------------------------------------------------------

def parse_preferences(obj, line_no: int = 0) -> PreferenceFilter:
    if obj is None:
        return PreferenceFilter()
    if not isinstance(obj, dict):
        raise ValidationError(line_no, "preferences", "must be an object")
    comms = frozenset(
        _parse_enum(Community, c, "preferences.communities", line_no)
        for c in obj.get("communities", [])
    )
    mats = frozenset(
        _parse_enum(MaterialType, m, "preferences.material_types", line_no)
        for m in obj.get("material_types", [])
    )
    return PreferenceFilter(communities=comms, material_types=mats)


def parse_user(obj: dict, line_no: int = 0) -> UserProfile:
    user_id = _require_str(obj, "id", line_no)
    full_name = _require_str(obj, "full_name", line_no)
    email = _require_str(obj, "email", line_no)
    local, sep, domain = email.partition("@")
    if not sep or not local or not domain or "@" in domain:
        raise ValidationError(line_no, "email", f"not an address: {email!r}")
    preferences = parse_preferences(obj.get("preferences"), line_no)
    try:
        schedule = parse_schedule(obj.get("schedule", {}))
    except ScheduleError as exc:
        raise ValidationError(line_no, f"schedule.{exc.field}", str(exc)) from None
    return UserProfile(user_id, full_name, email, preferences, schedule)


def load_users(path) -> list[UserProfile]:
    users: list[UserProfile] = []
    seen: dict[str, int] = {}
    for line_no, obj in _iter_jsonl(path):
        user = parse_user(obj, line_no)
        if user.id in seen:
            raise ValidationError(line_no, "id", f"duplicate id {user.id!r} (first on line {seen[user.id]})")
        seen[user.id] = line_no
        users.append(user)
    return users


# --- events --------------------------------------------------------------------

def parse_event(obj: dict, line_no: int = 0) -> ActivityEvent:
    user_id = _require_str(obj, "user_id", line_no)
    item_id = _require_str(obj, "item_id", line_no)
    kind = _parse_enum(EventKind, obj.get("kind"), "kind", line_no)
    timestamp = obj.get("timestamp")
    if not isinstance(timestamp, int) or isinstance(timestamp, bool) or timestamp <= 0:
        raise ValidationError(line_no, "timestamp", "must be a positive integer")
    query = obj.get("query")
    if query is not None and not isinstance(query, str):
        raise ValidationError(line_no, "query", "must be a string or null")
    if kind is EventKind.SEARCH and not query:
        raise ValidationError(line_no, "query", "search events must carry the query text")
    if kind is not EventKind.SEARCH and query is not None:
        raise ValidationError(line_no, "query", f"{kind.value} events must not carry a query")
    return ActivityEvent(user_id, item_id, kind, timestamp, query)


def load_events(path) -> list[ActivityEvent]:
    """Read events.jsonl; the result is sorted by timestamp (stable)."""
    events = [parse_event(obj, line_no) for line_no, obj in _iter_jsonl(path)]
    events.sort(key=lambda e: e.timestamp)
    return events


# --- dataset -------------------------------------------------------------------

ITEMS_FILE = "items.jsonl"
USERS_FILE = "users.jsonl"
EVENTS_FILE = "events.jsonl"


def load_dataset(data_dir) -> Dataset:
    """Load the three JSONL files and cross-check event references."""
    data_dir = Path(data_dir)
    ds = Dataset(
        items=load_items(data_dir / ITEMS_FILE),
        users=load_users(data_dir / USERS_FILE),
        events=load_events(data_dir / EVENTS_FILE),
    )
    item_ids = {i.id for i in ds.items}
    user_ids = {u.id for u in ds.users}
    for pos, event in enumerate(ds.events, start=1):
        if event.user_id not in user_ids:
            raise ValidationError(pos, "user_id", f"event references unknown user {event.user_id!r}")
        if event.item_id not in item_ids:
            raise ValidationError(pos, "item_id", f"event references unknown item {event.item_id!r}")
    return ds


def _write_jsonl(path, objs: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for obj in objs:
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def save_dataset(ds: Dataset, data_dir) -> None:
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    _write_jsonl(data_dir / ITEMS_FILE, (i.to_obj() for i in ds.items))
    _write_jsonl(data_dir / USERS_FILE, (u.to_obj() for u in ds.users))
    _write_jsonl(data_dir / EVENTS_FILE, (e.to_obj() for e in ds.events))


def validate_dataset(ds: Dataset) -> None:
    """Assert every dataset invariant; used by tests and the generator."""
    seen_items: set[str] = set()
    for item in ds.items:
        if not item.id or item.id in seen_items:
            raise ValueError(f"bad or duplicate item id {item.id!r}")
        seen_items.add(item.id)
        if not item.title or not item.communities:
            raise ValueError(f"item {item.id}: empty title or communities")
    seen_users: set[str] = set()
    for user in ds.users:
        if not user.id or user.id in seen_users:
            raise ValueError(f"bad or duplicate user id {user.id!r}")
        seen_users.add(user.id)
        local, sep, domain = user.email.partition("@")
        if not sep or not local or not domain:
            raise ValueError(f"user {user.id}: bad email {user.email!r}")
        user.schedule.validate()
    last_ts = 0
    for event in ds.events:
        if event.user_id not in seen_users or event.item_id not in seen_items:
            raise ValueError("event references unknown user or item")
        if event.timestamp <= 0 or event.timestamp < last_ts:
            raise ValueError("events not sorted by positive timestamp")
        last_ts = event.timestamp
        if (event.kind is EventKind.SEARCH) != (event.query is not None):
            raise ValueError("query present iff kind=search violated")
