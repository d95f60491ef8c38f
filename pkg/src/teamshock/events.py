"""Event-log data model: parsing, validation, and activity classification.

Input schema (newline-delimited JSON, one record per line):

    {"type": "PushEvent", "repo": "<repo id>", "actor": "<actor id>",
     "ts": "2019-11-02T10:00:00Z", "body": "optional comment text"}

The ``type`` field uses the archive's event-token vocabulary; the table
below maps each known token to an internal event kind and an activity
class.  Unknown tokens are retained (classified Excluded) so that schema
drift between archive years does not abort a run.

Actor profiles are a CSV with columns ``actor_id, created_at, country,
followers`` (country may be empty).  Actor languages are a CSV with
columns ``actor_id, language``.
"""

import csv
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Callable, Iterable, Iterator, Optional

import pandas as pd


class EventType(Enum):
    PUSH = "push"
    PULL_REQUEST_OPEN = "pull_request_open"
    ISSUE = "issue"
    ISSUE_COMMENT = "issue_comment"
    PR_REVIEW_COMMENT = "pr_review_comment"
    COMMIT_COMMENT = "commit_comment"
    OTHER_CONTRIBUTION = "other_contribution"
    WATCH = "watch"
    FORK = "fork"
    STAR = "star"
    UNKNOWN = "unknown"


class ActivityClass(Enum):
    CONTRIBUTION = "contribution"
    ATTENTION = "attention"
    EXCLUDED = "excluded"


#: Bit-exact token table for the input schema's ``type`` field.
TOKEN_TABLE = {
    "PushEvent": EventType.PUSH,
    "PullRequestEvent": EventType.PULL_REQUEST_OPEN,
    "IssuesEvent": EventType.ISSUE,
    "IssueCommentEvent": EventType.ISSUE_COMMENT,
    "PullRequestReviewCommentEvent": EventType.PR_REVIEW_COMMENT,
    "CommitCommentEvent": EventType.COMMIT_COMMENT,
    "CreateEvent": EventType.OTHER_CONTRIBUTION,
    "DeleteEvent": EventType.OTHER_CONTRIBUTION,
    "GollumEvent": EventType.OTHER_CONTRIBUTION,
    "MemberEvent": EventType.OTHER_CONTRIBUTION,
    "PublicEvent": EventType.OTHER_CONTRIBUTION,
    "ReleaseEvent": EventType.OTHER_CONTRIBUTION,
    "PullRequestReviewEvent": EventType.OTHER_CONTRIBUTION,
    "WatchEvent": EventType.WATCH,
    "ForkEvent": EventType.FORK,
    "StarEvent": EventType.STAR,
}

_TOKEN_BY_TYPE = {v: k for k, v in TOKEN_TABLE.items()}

COMMENT_TYPES = frozenset(
    {EventType.ISSUE_COMMENT, EventType.PR_REVIEW_COMMENT, EventType.COMMIT_COMMENT}
)


def classify_event(event_type: EventType) -> ActivityClass:
    """Total, deterministic mapping from event kind to activity class.

    Watch and fork signal attention to a repository rather than work on it;
    star events and unknown tokens are excluded outright.
    """
    if event_type in (EventType.WATCH, EventType.FORK):
        return ActivityClass.ATTENTION
    if event_type in (EventType.STAR, EventType.UNKNOWN):
        return ActivityClass.EXCLUDED
    return ActivityClass.CONTRIBUTION


@dataclass(frozen=True)
class Event:
    repo_id: str
    actor_id: str
    event_type: EventType
    timestamp: datetime  # always UTC
    body: Optional[str] = None

    @property
    def activity_class(self) -> ActivityClass:
        return classify_event(self.event_type)

    def to_record(self) -> dict:
        rec = {
            "type": _TOKEN_BY_TYPE.get(self.event_type, "UnknownEvent"),
            "repo": self.repo_id,
            "actor": self.actor_id,
            "ts": self.timestamp.strftime("%Y-%m-%dT%H:%M:%SZ"),
        }
        if self.body is not None:
            rec["body"] = self.body
        return rec


@dataclass(frozen=True)
class ActorProfile:
    actor_id: str
    account_created_at: datetime
    country: Optional[str] = None
    follower_count: int = 0

    def __post_init__(self):
        if self.follower_count < 0:
            raise ValueError(f"negative follower count for actor {self.actor_id}")


@dataclass(frozen=True)
class ActorLanguage:
    actor_id: str
    primary_language: Optional[str] = None


class EventParseError(ValueError):
    """Recoverable per-record parse failure; carries the input line number."""

    def __init__(self, message, line_number=None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


def parse_timestamp(value: str) -> datetime:
    try:
        ts = datetime.fromisoformat(value.replace("Z", "+00:00"))
    except (ValueError, TypeError) as exc:
        raise ValueError(f"bad timestamp {value!r}") from exc
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def parse_event_line(line: str, line_number: Optional[int] = None) -> Event:
    """Parse one NDJSON record into a validated Event.

    Unknown ``type`` tokens are kept as EventType.UNKNOWN (class Excluded);
    structural problems raise EventParseError.
    """
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise EventParseError(f"invalid JSON: {exc.msg}", line_number) from exc
    if not isinstance(rec, dict):
        raise EventParseError("record is not an object", line_number)

    repo = rec.get("repo")
    actor = rec.get("actor")
    if not repo or not isinstance(repo, str):
        raise EventParseError("missing or empty 'repo'", line_number)
    if not actor or not isinstance(actor, str):
        raise EventParseError("missing or empty 'actor'", line_number)
    try:
        ts = parse_timestamp(rec.get("ts"))
    except ValueError as exc:
        raise EventParseError(str(exc), line_number) from exc

    event_type = TOKEN_TABLE.get(rec.get("type"), EventType.UNKNOWN)
    body = rec.get("body")
    if body is not None and not isinstance(body, str):
        raise EventParseError("'body' must be a string when present", line_number)
    return Event(repo_id=repo, actor_id=actor, event_type=event_type,
                 timestamp=ts, body=body)


@dataclass
class ScanReport:
    total: int = 0
    parsed: int = 0
    yielded: int = 0
    skipped: int = 0
    unknown_type: int = 0
    errors: list = field(default_factory=list)  # first few (line, message) pairs

    MAX_RECORDED_ERRORS = 20

    def record_error(self, line_number, message):
        self.skipped += 1
        if len(self.errors) < self.MAX_RECORDED_ERRORS:
            self.errors.append((line_number, message))


def scan_events(
    lines: Iterable[str],
    predicate: Optional[Callable[[Event], bool]] = None,
    report: Optional[ScanReport] = None,
) -> Iterator[Event]:
    """Stream validated events from raw lines, skipping malformed records.

    The optional ``report`` accumulates bookkeeping so that
    ``yielded_or_filtered + skipped == total`` always holds.  Blank lines
    are ignored entirely.
    """
    if report is None:
        report = ScanReport()
    for line_number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        report.total += 1
        try:
            event = parse_event_line(line, line_number)
        except EventParseError as exc:
            report.record_error(line_number, str(exc))
            continue
        report.parsed += 1
        if event.event_type is EventType.UNKNOWN:
            report.unknown_type += 1
        if predicate is None or predicate(event):
            report.yielded += 1
            yield event


def read_events_file(path, predicate=None, report=None) -> Iterator[Event]:
    with open(path, "r", encoding="utf-8") as fh:
        yield from scan_events(fh, predicate=predicate, report=report)


def events_to_frame(events: Iterable[Event]) -> pd.DataFrame:
    """Materialize events into the columnar layout used by aggregation and
    feature extraction.  ``ts`` is tz-aware UTC."""
    rows = [
        (e.repo_id, e.actor_id, e.event_type.value, e.activity_class.value,
         e.timestamp, e.body)
        for e in events
    ]
    df = pd.DataFrame(
        rows, columns=["repo", "actor", "event_type", "activity_class", "ts", "body"]
    )
    if not df.empty:
        df["ts"] = pd.to_datetime(df["ts"], utc=True)
    else:
        df["ts"] = pd.to_datetime(df["ts"], utc=True)
    return df


def load_events_frame(path, report=None) -> pd.DataFrame:
    return events_to_frame(read_events_file(path, report=report))


def load_profiles(path) -> dict:
    """Read the actor-profile CSV into {actor_id: ActorProfile}."""
    profiles = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            country = row.get("country") or None
            profiles[row["actor_id"]] = ActorProfile(
                actor_id=row["actor_id"],
                account_created_at=parse_timestamp(row["created_at"]),
                country=country,
                follower_count=int(row["followers"]),
            )
    return profiles


def load_languages(path) -> dict:
    """Read the actor-language CSV into {actor_id: primary language}."""
    langs = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            lang = row.get("language") or None
            langs[row["actor_id"]] = lang
    return langs
