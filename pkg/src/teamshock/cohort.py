"""Team selection and the team-property feature registry.

Teams are repositories observed through contribution events.  Selection
keeps repositories that were active (>= a minimum number of contributing
members) in every quarter of a year and had push history by year end.
Features describe each selected team in the fourth quarter of its year:
size, multitasking, tenure, prestige, demographics, languages, working
schedule, communication, age, and activity controls.

Missing values are first-class: any feature that cannot be computed is
NaN, never silently zero.  ``drop_incomplete`` removes rows with NaN
before modeling.
"""

import re
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np
import pandas as pd

MISSING = float("nan")

#: Canonical registry: every regression table row label maps to exactly one
#: entry here.  Long-tailed raw counts are stored log1p-transformed, as named.
FEATURE_REGISTRY = (
    "n_members",
    "n_dedicated_members",
    "avg_contributed_repos",
    "platform_tenure_max",
    "platform_tenure_median",
    "platform_tenure_sd",
    "platform_tenure_cv",
    "coding_tenure_max",
    "coding_tenure_median",
    "coding_tenure_sd",
    "coding_tenure_cv",
    "team_tenure_max",
    "team_tenure_median",
    "team_tenure_sd",
    "team_tenure_cv",
    "followers_log1p_max",
    "followers_log1p_median",
    "followers_log1p_sd",
    "followers_log1p_cv",
    "n_countries",
    "country_entropy",
    "n_languages",
    "language_entropy",
    "hour_entropy",
    "off_segment_len_16",
    "off_segment_len_32",
    "off_segment_len_64",
    "weekday_entropy",
    "n_comments_log1p",
    "emoji_post_proportion",
    "repo_age_days",
    "q4_pushes_log1p",
    "q4_pull_requests_log1p",
    "q4_issues_log1p",
    "avg_monthly_pushes_log",
    "all_watches_log1p",
    "all_forks_log1p",
    "q4_watches_log1p",
    "q4_forks_log1p",
)

OFF_SEGMENT_THRESHOLDS = (16, 32, 64)

COMMENT_EVENT_TYPES = ("issue_comment", "pr_review_comment", "commit_comment")

# Unicode emoji blocks plus GitHub-style :shortcode: tokens.
_EMOJI_PATTERN = re.compile(
    "[\U0001F000-\U0001FAFF\U00002600-\U000027BF\U0001F1E6-\U0001F1FF"
    "\U00002190-\U000021FF\U00002B00-\U00002BFF\U0000FE0F]"
    "|:[a-z0-9_+-]+:"
)


def contains_emoji(text) -> bool:
    if not text:
        return False
    return _EMOJI_PATTERN.search(text) is not None


@dataclass
class SelectionCriteria:
    year: int
    min_active_members_per_quarter: int = 3
    require_push_by_year_end: bool = True

    def __post_init__(self):
        if self.min_active_members_per_quarter < 1:
            raise ValueError("min_active_members_per_quarter must be >= 1")


# ---------------------------------------------------------------------------
# Scalar kernels

def shannon_entropy(counts) -> float:
    """Shannon entropy (natural log) of a nonnegative count vector."""
    c = np.asarray(counts, dtype=float)
    if np.any(c < 0):
        raise ValueError("counts must be non-negative")
    total = c.sum()
    if total <= 0:
        raise ValueError("entropy of an all-zero distribution is undefined")
    p = c[c > 0] / total
    return float(-(p * np.log(p)).sum())


def coefficient_of_variation(values) -> float:
    """Sample (n-1 denominator) standard deviation over the mean.

    Returns NaN for fewer than two values or a non-positive mean.
    """
    v = np.asarray(values, dtype=float)
    if len(v) < 2:
        return MISSING
    mean = v.mean()
    if mean <= 0:
        return MISSING
    return float(v.std(ddof=1) / mean)


def off_segment_length(hour_counts, threshold: int) -> int:
    """Longest circular run of day-hours with activity below ``threshold``.

    ``hour_counts[h]`` is the number of quarter-days with team activity in
    UTC hour h.  Runs may wrap midnight; 0 if no hour is quiet, 24 if all
    are.
    """
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    c = np.asarray(hour_counts)
    if c.shape != (24,):
        raise ValueError("hour vector must have exactly 24 entries")
    quiet = c < threshold
    if quiet.all():
        return 24
    if not quiet.any():
        return 0
    # doubling handles the midnight wrap
    doubled = np.concatenate([quiet, quiet])
    best = run = 0
    for q in doubled:
        run = run + 1 if q else 0
        best = max(best, run)
    return min(best, 24)


def _spread_stats(values, singleton_sd=0.0):
    """max/median/sd/cv over the defined values; singleton sd and cv are 0."""
    v = np.asarray([x for x in values if np.isfinite(x)], dtype=float)
    if len(v) == 0:
        return {"max": MISSING, "median": MISSING, "sd": MISSING, "cv": MISSING}
    if len(v) == 1:
        return {"max": float(v[0]), "median": float(v[0]),
                "sd": singleton_sd, "cv": 0.0}
    cv = coefficient_of_variation(v)
    return {"max": float(v.max()), "median": float(np.median(v)),
            "sd": float(v.std(ddof=1)), "cv": cv}


# ---------------------------------------------------------------------------
# Frame preparation and team selection

def prepare_events(events: pd.DataFrame) -> pd.DataFrame:
    """Attach month/quarter/date/hour/weekday columns used downstream."""
    ev = events.copy()
    ts = ev["ts"].dt
    ev["year"] = ts.year
    ev["month_idx"] = ts.year * 12 + (ts.month - 1)
    ev["quarter_idx"] = ts.year * 4 + (ts.month - 1) // 3
    ev["date"] = ts.date
    ev["hour"] = ts.hour
    ev["weekday"] = ts.weekday
    return ev


def select_teams(events: pd.DataFrame, criteria: SelectionCriteria) -> list:
    """Repositories with >= N contributing members in every quarter of the
    year, and (optionally) at least one push on record by year end."""
    ev = events
    if "quarter_idx" not in ev.columns:
        ev = prepare_events(ev)
    contrib = ev[ev["activity_class"] == "contribution"]
    year = criteria.year
    in_year = contrib[contrib["year"] == year]
    if in_year.empty:
        return []
    members = in_year.groupby(["repo", "quarter_idx"])["actor"].nunique()
    enough = members[members >= criteria.min_active_members_per_quarter]
    quarters_ok = enough.groupby(level="repo").size()
    selected = set(quarters_ok[quarters_ok == 4].index)
    if criteria.require_push_by_year_end and selected:
        year_end = pd.Timestamp(year=year + 1, month=1, day=1, tz="UTC")
        pushes = ev[(ev["event_type"] == "push") & (ev["ts"] < year_end)]
        selected &= set(pushes["repo"].unique())
    return sorted(selected)


# ---------------------------------------------------------------------------
# Feature extraction

class FeatureExtractor:
    """Computes the Q4 feature registry for selected repositories.

    A corpus-wide pass builds actor-level indices (first push anywhere,
    per-quarter contributed-repo counts) once; per-repo extraction then
    works from each repository's own event slice.
    """

    def __init__(self, events: pd.DataFrame, profiles: dict, languages: dict):
        self.ev = prepare_events(events) if "quarter_idx" not in events.columns \
            else events
        self.profiles = profiles
        self.languages = languages
        contrib = self.ev[self.ev["activity_class"] == "contribution"]
        self._contrib = contrib
        pushes = self.ev[self.ev["event_type"] == "push"]
        self.actor_first_push = pushes.groupby("actor")["ts"].min()
        self.repo_created = self.ev.groupby("repo")["ts"].min()
        # distinct repos each actor contributed to, per quarter
        self.actor_repos_per_quarter = (
            contrib.groupby(["quarter_idx", "actor"])["repo"].nunique()
        )
        self._repo_rows = self.ev.groupby("repo").indices

    def _repo_events(self, repo) -> pd.DataFrame:
        rows = self._repo_rows.get(repo)
        if rows is None:
            raise KeyError(f"repository {repo!r} has no events in the corpus")
        return self.ev.iloc[rows]

    def hour_activity_vector(self, repo_contrib_q4: pd.DataFrame) -> np.ndarray:
        """24 counts: days in the quarter with >=1 member contribution in
        that UTC hour."""
        counts = np.zeros(24, dtype=int)
        per_hour = repo_contrib_q4.groupby("hour")["date"].nunique()
        for hour, n_days in per_hour.items():
            counts[int(hour)] = int(n_days)
        return counts

    def weekday_entropy(self, repo_contrib_q4: pd.DataFrame) -> float:
        per_day = repo_contrib_q4.groupby("weekday")["date"].nunique()
        if per_day.empty:
            return MISSING
        counts = np.zeros(7)
        for wd, n in per_day.items():
            counts[int(wd)] = n
        return shannon_entropy(counts)

    def tenure_stats(self, members, repo_contrib_all, kind: str,
                     as_of: pd.Timestamp) -> dict:
        """Tenure statistics in days over members with a defined value.

        platform: days since account creation; coding: days since the
        actor's first push anywhere in the corpus; team: days since the
        actor's first contribution to this repository.
        """
        values = []
        if kind == "team":
            firsts = repo_contrib_all.groupby("actor")["ts"].min()
        for actor in members:
            if kind == "platform":
                prof = self.profiles.get(actor)
                if prof is None:
                    continue
                start = pd.Timestamp(prof.account_created_at)
            elif kind == "coding":
                start = self.actor_first_push.get(actor)
                if start is None or pd.isna(start):
                    continue
            elif kind == "team":
                start = firsts.get(actor)
                if start is None or pd.isna(start):
                    continue
            else:
                raise ValueError(f"unknown tenure kind {kind!r}")
            days = (as_of - start).total_seconds() / 86400.0
            if days >= 0:
                values.append(days)
        return _spread_stats(values)

    def extract(self, repo, year: int) -> dict:
        """Feature registry values for one repository's Q4 of ``year``.

        Returns {name: value} with NaN marking missing entries.
        """
        rev = self._repo_events(repo)
        q4 = year * 4 + 3
        year_end = pd.Timestamp(year=year + 1, month=1, day=1, tz="UTC")
        as_of = year_end - pd.Timedelta(seconds=1)
        by_year_end = rev[rev["ts"] < year_end]
        contrib_all = by_year_end[by_year_end["activity_class"] == "contribution"]
        cq4 = contrib_all[contrib_all["quarter_idx"] == q4]
        if cq4.empty:
            raise ValueError(f"repository {repo!r} has no Q4/{year} contributions")

        members = sorted(cq4["actor"].unique())
        f = {}
        f["n_members"] = float(len(members))

        repos_per_actor = self.actor_repos_per_quarter.loc[q4]
        n_repos = repos_per_actor.reindex(members)
        f["n_dedicated_members"] = float((n_repos == 1).sum())
        f["avg_contributed_repos"] = float(n_repos.mean())

        for kind in ("platform", "coding", "team"):
            stats = self.tenure_stats(members, contrib_all, kind, as_of)
            for stat, value in stats.items():
                f[f"{kind}_tenure_{stat}"] = value

        followers = [np.log1p(self.profiles[a].follower_count)
                     for a in members if a in self.profiles]
        stats = _spread_stats(followers)
        for stat, value in stats.items():
            f[f"followers_log1p_{stat}"] = value

        countries = [self.profiles[a].country for a in members
                     if a in self.profiles and self.profiles[a].country]
        if countries:
            counts = pd.Series(countries).value_counts().to_numpy()
            f["n_countries"] = float(len(counts))
            f["country_entropy"] = shannon_entropy(counts)
        else:
            f["n_countries"] = MISSING
            f["country_entropy"] = MISSING

        langs = [self.languages.get(a) for a in members]
        langs = [l for l in langs if l]
        if langs:
            counts = pd.Series(langs).value_counts().to_numpy()
            f["n_languages"] = float(len(counts))
            f["language_entropy"] = shannon_entropy(counts)
        else:
            f["n_languages"] = MISSING
            f["language_entropy"] = MISSING

        hours = self.hour_activity_vector(cq4)
        f["hour_entropy"] = shannon_entropy(hours) if hours.sum() > 0 else MISSING
        for th in OFF_SEGMENT_THRESHOLDS:
            f[f"off_segment_len_{th}"] = float(off_segment_length(hours, th))
        f["weekday_entropy"] = self.weekday_entropy(cq4)

        comments = cq4[cq4["event_type"].isin(COMMENT_EVENT_TYPES)]
        f["n_comments_log1p"] = float(np.log1p(len(comments)))
        if len(comments) > 0:
            with_emoji = comments["body"].map(contains_emoji).sum()
            f["emoji_post_proportion"] = float(with_emoji / len(comments))
        else:
            f["emoji_post_proportion"] = MISSING

        created = self.repo_created[repo]
        f["repo_age_days"] = float((as_of - created).total_seconds() / 86400.0)

        q4_counts = cq4["event_type"].value_counts()
        f["q4_pushes_log1p"] = float(np.log1p(q4_counts.get("push", 0)))
        f["q4_pull_requests_log1p"] = float(
            np.log1p(q4_counts.get("pull_request_open", 0)))
        f["q4_issues_log1p"] = float(np.log1p(q4_counts.get("issue", 0)))

        total_pushes = int((contrib_all["event_type"] == "push").sum())
        first_month = created.year * 12 + (created.month - 1)
        last_month = year * 12 + 11
        months_active = max(last_month - first_month + 1, 1)
        f["avg_monthly_pushes_log"] = float(
            np.log1p(total_pushes / months_active))

        attention = by_year_end[by_year_end["activity_class"] == "attention"]
        att_counts = attention["event_type"].value_counts()
        f["all_watches_log1p"] = float(np.log1p(att_counts.get("watch", 0)))
        f["all_forks_log1p"] = float(np.log1p(att_counts.get("fork", 0)))
        att_q4 = attention[attention["quarter_idx"] == q4]
        att_q4_counts = att_q4["event_type"].value_counts()
        f["q4_watches_log1p"] = float(np.log1p(att_q4_counts.get("watch", 0)))
        f["q4_forks_log1p"] = float(np.log1p(att_q4_counts.get("fork", 0)))

        return {name: f[name] for name in FEATURE_REGISTRY}

    def extract_matrix(self, repos, year: int) -> pd.DataFrame:
        rows = {repo: self.extract(repo, year) for repo in repos}
        df = pd.DataFrame.from_dict(rows, orient="index", columns=FEATURE_REGISTRY)
        df.index.name = "repo"
        return df


def missingness_mask(features: pd.DataFrame) -> pd.DataFrame:
    return features.isna()


def drop_incomplete(features: pd.DataFrame):
    """Drop rows with any missing feature before modeling; report the count."""
    complete = features.dropna()
    return complete, len(features) - len(complete)


def monthly_outcomes(events: pd.DataFrame, repos, year: int, months,
                     outcome: str) -> pd.DataFrame:
    """Observed per-repo outcomes in log1p space.

    productivity = log1p(pushes in the month); team_size = log1p(distinct
    contributing members in the month).  Repos with no activity that month
    get log1p(0) = 0: silence is an observed zero outcome, not missingness.
    """
    ev = events if "month_idx" in events.columns else prepare_events(events)
    contrib = ev[(ev["activity_class"] == "contribution")
                 & (ev["repo"].isin(set(repos)))]
    out = pd.DataFrame(index=pd.Index(sorted(repos), name="repo"),
                       columns=list(months), dtype=float)
    for month in months:
        midx = year * 12 + (month - 1)
        sub = contrib[contrib["month_idx"] == midx]
        if outcome == "productivity":
            counts = sub[sub["event_type"] == "push"].groupby("repo").size()
        elif outcome == "team_size":
            counts = sub.groupby("repo")["actor"].nunique()
        else:
            raise ValueError(f"unknown outcome {outcome!r}")
        out[month] = np.log1p(counts.reindex(out.index).fillna(0).astype(float))
    return out
