"""Personalized notification digests: schedules, rendering, delivery sinks.

Due-time arithmetic happens in the user's fixed UTC offset and comes back
as UTC seconds. Delivery is pluggable; the default sink writes .eml-style
files into an outbox directory so tests and desk-scale deployments never
need a mail server.
"""

from __future__ import annotations

import os
import re
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Mapping, Optional, Protocol

import json

if TYPE_CHECKING:
    from .catalog import Item, UserProfile
    from .hybrid import BlendConfig, ModelSet, Recommendation

WEEKDAYS = ("mon", "tue", "wed", "thu", "fri", "sat", "sun")
_TIME_RE = re.compile(r"^([01]\d|2[0-3]):([0-5]\d)$")


class Frequency(str, Enum):
    DAILY = "daily"
    WEEKLY = "weekly"


class ScheduleError(ValueError):
    """A schedule document field is malformed."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class DeliverySchedule:
    enabled: bool = False
    frequency: Frequency = Frequency.WEEKLY
    weekday: Optional[str] = "mon"
    time_of_day: str = "08:00"
    utc_offset_minutes: int = 0

    def validate(self) -> None:
        if self.frequency is Frequency.WEEKLY:
            if self.weekday not in WEEKDAYS:
                raise ScheduleError("weekday", f"required for weekly schedules, one of {WEEKDAYS}")
        elif self.weekday is not None:
            raise ScheduleError("weekday", "only allowed for weekly schedules")
        if not _TIME_RE.match(self.time_of_day):
            raise ScheduleError("time_of_day", "must be HH:MM in 24h time")
        if not -720 <= self.utc_offset_minutes <= 840:
            raise ScheduleError("utc_offset_minutes", "must lie in [-720, 840]")

    def to_obj(self) -> dict:
        obj = {
            "enabled": self.enabled,
            "frequency": self.frequency.value,
            "time_of_day": self.time_of_day,
            "utc_offset_minutes": self.utc_offset_minutes,
        }
        if self.frequency is Frequency.WEEKLY:
            obj["weekday"] = self.weekday
        return obj


def parse_schedule(obj: Mapping) -> DeliverySchedule:
    """Build a validated schedule from a JSON document."""
    if not isinstance(obj, Mapping):
        raise ScheduleError("schedule", "must be an object")
    enabled = obj.get("enabled", False)
    if not isinstance(enabled, bool):
        raise ScheduleError("enabled", "must be a boolean")
    raw_freq = obj.get("frequency", "weekly")
    try:
        frequency = Frequency(raw_freq)
    except ValueError:
        raise ScheduleError("frequency", f"unknown frequency {raw_freq!r}") from None
    weekday = obj.get("weekday")
    if frequency is Frequency.WEEKLY and weekday is None:
        weekday = "mon"
    offset = obj.get("utc_offset_minutes", 0)
    if not isinstance(offset, int) or isinstance(offset, bool):
        raise ScheduleError("utc_offset_minutes", "must be an integer")
    sched = DeliverySchedule(
        enabled=enabled,
        frequency=frequency,
        weekday=weekday,
        time_of_day=obj.get("time_of_day", "08:00"),
        utc_offset_minutes=offset,
    )
    sched.validate()
    return sched


def _occurrence_ts(day, hour: int, minute: int, tz: timezone) -> int:
    return int(datetime(day.year, day.month, day.day, hour, minute, tzinfo=tz).timestamp())


def next_due(schedule: DeliverySchedule, last_sent: Optional[int], now: int) -> Optional[int]:
    """UTC timestamp of the next occurrence owed to this user, or None.

    With a previous attempt on record this is the earliest occurrence
    strictly after it. Never-notified users get the current period's
    occurrence, so a schedule whose time has already passed today (or this
    week) is immediately due.
    """
    if not schedule.enabled:
        return None
    schedule.validate()
    tz = timezone(timedelta(minutes=schedule.utc_offset_minutes))
    hour, minute = (int(p) for p in schedule.time_of_day.split(":"))

    if schedule.frequency is Frequency.DAILY:
        if last_sent is None:
            return _occurrence_ts(datetime.fromtimestamp(now, tz).date(), hour, minute, tz)
        day = datetime.fromtimestamp(last_sent, tz).date()
        while True:
            ts = _occurrence_ts(day, hour, minute, tz)
            if ts > last_sent:
                return ts
            day += timedelta(days=1)

    target = WEEKDAYS.index(schedule.weekday)
    if last_sent is None:
        today = datetime.fromtimestamp(now, tz).date()
        monday = today - timedelta(days=today.weekday())
        return _occurrence_ts(monday + timedelta(days=target), hour, minute, tz)
    day = datetime.fromtimestamp(last_sent, tz).date()
    day += timedelta(days=(target - day.weekday()) % 7)
    while True:
        ts = _occurrence_ts(day, hour, minute, tz)
        if ts > last_sent:
            return ts
        day += timedelta(days=7)


@dataclass(frozen=True)
class NotificationDigest:
    user_id: str
    generated_at: int
    recommendations: tuple
    period_label: str


@dataclass(frozen=True)
class DeliveryRecord:
    user_id: str
    sent_at: int
    item_ids: tuple[str, ...]
    sink_name: str
    status: str  # "delivered" | "failed"

    def to_obj(self) -> dict:
        return {
            "user_id": self.user_id,
            "sent_at": self.sent_at,
            "item_ids": list(self.item_ids),
            "sink_name": self.sink_name,
            "status": self.status,
        }

    @staticmethod
    def from_obj(obj: Mapping) -> "DeliveryRecord":
        return DeliveryRecord(
            user_id=obj["user_id"],
            sent_at=int(obj["sent_at"]),
            item_ids=tuple(obj["item_ids"]),
            sink_name=obj["sink_name"],
            status=obj["status"],
        )


class DeliveryLog:
    """Append-only delivery history, optionally persisted as deliveries.jsonl."""

    def __init__(self, path: Optional[Path] = None):
        self.path = Path(path) if path is not None else None
        self.records: list[DeliveryRecord] = []
        if self.path is not None and self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        self.records.append(DeliveryRecord.from_obj(json.loads(line)))

    def append(self, record: DeliveryRecord) -> None:
        self.records.append(record)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record.to_obj(), sort_keys=True) + "\n")

    def last_attempt_at(self, user_id: str) -> Optional[int]:
        stamps = [r.sent_at for r in self.records if r.user_id == user_id]
        return max(stamps) if stamps else None

    def delivered_item_ids(self, user_id: str) -> set[str]:
        out: set[str] = set()
        for r in self.records:
            if r.user_id == user_id and r.status == "delivered":
                out.update(r.item_ids)
        return out


@dataclass(frozen=True)
class EmailMessage:
    to: str
    subject: str
    text_body: str
    html_body: str


def build_digest(
    user: "UserProfile",
    models: "ModelSet",
    n: int,
    delivery_log: DeliveryLog,
    now: Optional[int] = None,
    blend: Optional["BlendConfig"] = None,
) -> Optional[NotificationDigest]:
    """Fresh recommendations for the user, minus anything already delivered."""
    from . import hybrid

    already = delivery_log.delivered_item_ids(user.id)
    recs = hybrid.recommend(user.id, n + len(already), models, blend)
    kept = tuple(r for r in recs if r.item_id not in already)[:n]
    if not kept:
        return None
    return NotificationDigest(
        user_id=user.id,
        generated_at=int(time.time()) if now is None else int(now),
        recommendations=kept,
        period_label=user.schedule.frequency.value,
    )


def render_email(digest: NotificationDigest, user: "UserProfile", items: Mapping[str, "Item"]) -> EmailMessage:
    """Deterministic text + html rendering of a digest."""
    count = len(digest.recommendations)
    subject = f"Your {digest.period_label} recommendations ({count} items)"
    text_lines = [f"Hello {user.full_name},", "", "We picked these for you:", ""]
    html_lines = [
        "<html><body>",
        f"<p>Hello {user.full_name},</p>",
        "<p>We picked these for you:</p>",
        "<ul>",
    ]
    for rec in digest.recommendations:
        item = items[rec.item_id]
        snippet = item.description[:200]
        text_lines.append(f"- {item.title}")
        if snippet:
            text_lines.append(f"  {snippet}")
        text_lines.append(f"  why: {rec.reason}")
        html_lines.append(
            f"<li><strong>{item.title}</strong>"
            + (f"<br>{snippet}" if snippet else "")
            + f"<br><em>why: {rec.reason}</em></li>"
        )
    text_lines.append("")
    text_lines.append("Happy reading!")
    html_lines.extend(["</ul>", "<p>Happy reading!</p>", "</body></html>"])
    return EmailMessage(
        to=user.email,
        subject=subject,
        text_body="\n".join(text_lines) + "\n",
        html_body="\n".join(html_lines) + "\n",
    )


class DeliverySink(Protocol):
    name: str

    def deliver(self, message: EmailMessage, user_id: str, sent_at: int) -> None: ...


class FileSink:
    """Writes each message as <user_id>-<sent_at>.eml into an outbox directory."""

    name = "file"

    def __init__(self, outbox_dir: Path):
        self.outbox_dir = Path(outbox_dir)
        self.outbox_dir.mkdir(parents=True, exist_ok=True)

    def deliver(self, message: EmailMessage, user_id: str, sent_at: int) -> None:
        body = (
            f"To: {message.to}\n"
            f"Subject: {message.subject}\n"
            "\n"
            f"{message.text_body}"
            "\n--- html ---\n"
            f"{message.html_body}"
        )
        (self.outbox_dir / f"{user_id}-{sent_at}.eml").write_text(body, encoding="utf-8")


class StdoutSink:
    name = "stdout"

    def deliver(self, message: EmailMessage, user_id: str, sent_at: int) -> None:
        sys.stdout.write(f"[{user_id}] {message.subject}\n{message.text_body}\n")


class SmtpSink:
    """Real SMTP transport, configured through ATHENA_SMTP_* environment variables."""

    name = "smtp"

    def __init__(self):
        self.host = os.environ.get("ATHENA_SMTP_HOST", "localhost")
        self.port = int(os.environ.get("ATHENA_SMTP_PORT", "25"))
        self.user = os.environ.get("ATHENA_SMTP_USER")
        self.password = os.environ.get("ATHENA_SMTP_PASS")

    def deliver(self, message: EmailMessage, user_id: str, sent_at: int) -> None:
        import smtplib
        from email.message import EmailMessage as MimeMessage

        mime = MimeMessage()
        mime["To"] = message.to
        mime["From"] = self.user or "athena@localhost"
        mime["Subject"] = message.subject
        mime.set_content(message.text_body)
        mime.add_alternative(message.html_body, subtype="html")
        with smtplib.SMTP(self.host, self.port) as client:
            if self.user and self.password:
                client.starttls()
                client.login(self.user, self.password)
            client.send_message(mime)


def scheduler_tick(
    now: int,
    users: Iterable["UserProfile"],
    models: "ModelSet",
    delivery_log: DeliveryLog,
    sink: DeliverySink,
) -> list[DeliveryRecord]:
    """Send every digest that has come due; one attempt per user per tick.

    Sink failures are recorded per user and never abort the tick. Re-running
    with the same ``now`` sends nothing new, and a failed attempt is retried
    at the next scheduled occurrence rather than the next tick.
    """
    sent: list[DeliveryRecord] = []
    for user in sorted(users, key=lambda u: u.id):
        due = next_due(user.schedule, delivery_log.last_attempt_at(user.id), now)
        if due is None or due > now:
            continue
        digest = build_digest(user, models, n=10, delivery_log=delivery_log, now=now)
        if digest is None:
            continue
        message = render_email(digest, user, models.items)
        item_ids = tuple(r.item_id for r in digest.recommendations)
        try:
            sink.deliver(message, user.id, now)
            status = "delivered"
        except Exception:
            status = "failed"
        record = DeliveryRecord(
            user_id=user.id,
            sent_at=now,
            item_ids=item_ids,
            sink_name=sink.name,
            status=status,
        )
        delivery_log.append(record)
        sent.append(record)
    return sent
