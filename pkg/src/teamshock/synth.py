"""Seeded synthetic corpus generator with injectable shocks.

Each synthetic team has latent traits (push rate, size, activity
probability, working-hour center/spread, country/language concentration,
emoji propensity) that drive monthly event streams in the exact ingestion
schema.  The shock multiplies post-boundary push rates by exp(ate) and
thins active members, with the untreated counterfactual drawn from the
same randomness, so the ground-truth file records exact per-team ITEs:

    true_ite = log1p(treated count) - log1p(untreated count)

A lighter tabular mode emits feature/outcome matrices from the same latent
model without materializing event logs, for model-level verification.
"""

import csv
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import pandas as pd

from .base import rng_for

COUNTRIES = ["US", "DE", "CN", "IN", "GB", "BR", "JP", "FR", "CA", "NL", "RU", "AU"]
LANGUAGES = ["python", "javascript", "java", "go", "rust", "cpp", "ruby", "typescript"]

_COMMENT_PLAIN = ["looks good to me", "can you rebase this?", "fixed in latest commit",
                  "tests are failing on CI", "merged, thanks"]
_COMMENT_EMOJI = ["looks good :+1:", "ship it \U0001F680", "thanks! \U0001F389",
                  "nice catch :eyes:", "\U0001F44D approved"]


@dataclass
class ShockSpec:
    start_month: int = 1          # first shocked month for productivity
    productivity_ate: float = 0.0  # additive effect on log push rate
    team_size_ate: float = 0.0     # additive effect on log active-member rate
    size_onset_month: int = 4      # first shocked month for team size


@dataclass
class SyntheticSpec:
    n_repos: int = 200
    members_low: int = 4
    members_high: int = 12
    activity_low: float = 1.0      # latent log push rate range
    activity_high: float = 3.2
    seasonal_amplitude: float = 0.25
    trend_slope: float = 0.002     # per-month multiplicative drift on log rate
    noise_scale: float = 0.45      # sd of per-team-month log-rate noise
    start_year: int = 2017
    reference_year: int = 2018
    target_year: int = 2019
    months_of_interest: tuple = (1, 2, 3, 4, 5, 6)
    shock: ShockSpec = field(default_factory=ShockSpec)
    #: feature name -> coefficient; modulates per-team shock size via the
    #: standardized generator proxy of that feature (supported proxies:
    #: n_members, hour_entropy, q4_pushes_log1p)
    planted_coefficients: dict = field(default_factory=dict)
    multitask_prob: float = 0.4
    #: teams start emitting at a uniform month offset in [0, spread); gives
    #: repo-age/tenure features realistic cross-sectional variance
    founding_spread_months: int = 0

    @property
    def shock_year(self) -> int:
        return self.target_year + 1


@dataclass
class _Team:
    repo: str
    members: list
    log_rate: float
    p_active: float
    hour_center: int
    hour_spread: float
    weekend_weight: float
    emoji_prob: float
    shock_shift_prod: float
    shock_shift_size: float
    founding_offset: int = 0


def _season(month: int, amplitude: float) -> float:
    return amplitude * np.sin(2.0 * np.pi * (month - 1) / 12.0)


def _standardize(v: np.ndarray) -> np.ndarray:
    sd = v.std()
    return (v - v.mean()) / sd if sd > 0 else np.zeros_like(v)


def _build_teams(spec: SyntheticSpec, seed) -> list:
    rng = rng_for(seed, "teams")
    n = spec.n_repos
    sizes = rng.integers(spec.members_low, spec.members_high + 1, size=n)
    rates = rng.uniform(spec.activity_low, spec.activity_high, size=n)
    p_active = rng.uniform(0.6, 0.95, size=n)
    centers = rng.integers(0, 24, size=n)
    spreads = rng.uniform(1.5, 6.0, size=n)
    weekend = rng.uniform(0.1, 0.9, size=n)
    emoji = rng.uniform(0.0, 0.6, size=n)
    if spec.founding_spread_months > 0:
        offsets = rng.integers(0, spec.founding_spread_months, size=n)
    else:
        offsets = np.zeros(n, dtype=int)

    proxies = {
        "n_members": _standardize(sizes.astype(float)),
        "hour_entropy": _standardize(spreads),
        "q4_pushes_log1p": _standardize(rates),
    }
    shift_prod = np.zeros(n)
    shift_size = np.zeros(n)
    for name, beta in spec.planted_coefficients.items():
        if name not in proxies:
            raise ValueError(
                f"no generator proxy for feature {name!r}; "
                f"supported: {sorted(proxies)}"
            )
        shift_prod += beta * proxies[name]
        shift_size += beta * proxies[name]

    teams = []
    for j in range(n):
        repo = f"org/repo{j:05d}"
        members = [f"u{j:05d}_{k:02d}" for k in range(sizes[j])]
        teams.append(_Team(
            repo=repo, members=members, log_rate=float(rates[j]),
            p_active=float(p_active[j]), hour_center=int(centers[j]),
            hour_spread=float(spreads[j]), weekend_weight=float(weekend[j]),
            emoji_prob=float(emoji[j]),
            shock_shift_prod=float(shift_prod[j]),
            shock_shift_size=float(shift_size[j]),
            founding_offset=int(offsets[j]),
        ))
    return teams


def _month_days(year, month):
    first = pd.Timestamp(year=year, month=month, day=1)
    return int((first + pd.offsets.MonthEnd(1)).day)


_WEEKDAY_CACHE = {}


def _month_weekdays(year, month):
    key = (year, month)
    cached = _WEEKDAY_CACHE.get(key)
    if cached is None:
        days = _month_days(year, month)
        start = pd.Timestamp(year=year, month=month, day=1)
        cached = np.array([(start + pd.Timedelta(days=d)).weekday()
                           for d in range(days)])
        _WEEKDAY_CACHE[key] = cached
    return cached


def _timestamp(rng, year, month, day, hour):
    minute = int(rng.integers(0, 60))
    second = int(rng.integers(0, 60))
    return f"{year:04d}-{month:02d}-{day:02d}T{hour:02d}:{minute:02d}:{second:02d}Z"


def _draw_hour(rng, team):
    return int(round(float(rng.normal(team.hour_center, team.hour_spread)))) % 24


_DAY_CDF_CACHE = {}


def _draw_day(rng, team, year, month):
    key = (team.weekend_weight, year, month)
    cdf = _DAY_CDF_CACHE.get(key)
    if cdf is None:
        weekdays = _month_weekdays(year, month)
        weights = np.where(weekdays >= 5, team.weekend_weight, 1.0)
        cdf = np.cumsum(weights / weights.sum())
        _DAY_CDF_CACHE[key] = cdf
    return int(np.searchsorted(cdf, rng.random())) + 1


def generate_synthetic(spec: SyntheticSpec, seed: int, out_dir) -> dict:
    """Write events.ndjson, profiles.csv, languages.csv, and
    ground_truth.csv under ``out_dir``; returns the path map."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    teams = _build_teams(spec, seed)

    profiles_path = out / "profiles.csv"
    languages_path = out / "languages.csv"
    events_path = out / "events.ndjson"
    truth_path = out / "ground_truth.csv"

    corpus_start = pd.Timestamp(year=spec.start_year, month=1, day=1, tz="UTC")
    prof_rng = rng_for(seed, "profiles")
    with open(profiles_path, "w", newline="", encoding="utf-8") as pf, \
         open(languages_path, "w", newline="", encoding="utf-8") as lf:
        pw = csv.writer(pf)
        lw = csv.writer(lf)
        pw.writerow(["actor_id", "created_at", "country", "followers"])
        lw.writerow(["actor_id", "language"])
        for team in teams:
            home = COUNTRIES[int(prof_rng.integers(0, len(COUNTRIES)))]
            home_lang = LANGUAGES[int(prof_rng.integers(0, len(LANGUAGES)))]
            concentration = prof_rng.uniform(0.3, 1.0)
            for actor in team.members:
                created = corpus_start - pd.Timedelta(
                    days=int(prof_rng.integers(30, 4000)))
                if prof_rng.random() < 0.15:
                    country = ""
                elif prof_rng.random() < concentration:
                    country = home
                else:
                    country = COUNTRIES[int(prof_rng.integers(0, len(COUNTRIES)))]
                followers = int(np.expm1(prof_rng.normal(2.0, 1.2)))
                pw.writerow([actor, created.strftime("%Y-%m-%dT%H:%M:%SZ"),
                             country, max(followers, 0)])
                if prof_rng.random() < 0.9:
                    lang = home_lang if prof_rng.random() < concentration else \
                        LANGUAGES[int(prof_rng.integers(0, len(LANGUAGES)))]
                    lw.writerow([actor, lang])
                else:
                    lw.writerow([actor, ""])

    shock_year = spec.shock_year
    truth_rows = []
    with open(events_path, "w", encoding="utf-8") as ef:
        def emit(rec):
            ef.write(json.dumps(rec, separators=(",", ":")) + "\n")

        for team in teams:
            rng = rng_for(seed, "events", team.repo)
            t = 0
            for year in range(spec.start_year, shock_year + 1):
                for month in range(1, 13):
                    if t < team.founding_offset:
                        t += 1
                        continue
                    log_rate = (team.log_rate
                                + _season(month, spec.seasonal_amplitude)
                                + spec.trend_slope * t
                                + rng.normal(0.0, spec.noise_scale))
                    t += 1
                    n_push_untr = int(rng.poisson(np.exp(log_rate)))

                    shocked_prod = (year == shock_year
                                    and month >= spec.shock.start_month
                                    and spec.shock.productivity_ate != 0.0)
                    shocked_size = (year == shock_year
                                    and month >= spec.shock.size_onset_month
                                    and spec.shock.team_size_ate != 0.0)

                    if shocked_prod:
                        mult = np.exp(spec.shock.productivity_ate
                                      + team.shock_shift_prod)
                        if mult <= 1.0:
                            n_push = int(rng.binomial(n_push_untr, mult)) \
                                if n_push_untr > 0 else 0
                        else:
                            n_push = n_push_untr + int(
                                rng.poisson(np.exp(log_rate) * (mult - 1.0)))
                    else:
                        n_push = n_push_untr

                    active = [m for m in team.members
                              if rng.random() < team.p_active]
                    if shocked_size:
                        keep = np.exp(spec.shock.team_size_ate
                                      + team.shock_shift_size)
                        treated_active = [m for m in active
                                          if rng.random() < min(keep, 1.0)]
                    else:
                        treated_active = active

                    n_pr = int(rng.poisson(0.25 * np.exp(log_rate)))
                    n_comment = int(rng.poisson(0.35 * np.exp(log_rate)))

                    # observed world: the treated active set contributes; if
                    # it is empty but work exists, one member shows up
                    contributors = list(treated_active)
                    has_work = (n_push + n_pr + n_comment) > 0
                    if not contributors and has_work:
                        contributors = [team.members[0]]
                    untreated_size = len(active) if active else (
                        1 if (n_push_untr + n_pr + n_comment) > 0 else 0)

                    if year == shock_year and month in spec.months_of_interest:
                        truth_rows.append({
                            "repo": team.repo, "month": month,
                            "outcome": "productivity",
                            "y_treated": float(np.log1p(n_push)),
                            "y_untreated": float(np.log1p(n_push_untr)),
                        })
                        truth_rows.append({
                            "repo": team.repo, "month": month,
                            "outcome": "team_size",
                            "y_treated": float(np.log1p(len(contributors))),
                            "y_untreated": float(np.log1p(untreated_size)),
                        })

                    # anchor contribution (issue) so every active member is
                    # observable as a member that month
                    for actor in contributors:
                        day = _draw_day(rng, team, year, month)
                        hour = _draw_hour(rng, team)
                        emit({"type": "IssuesEvent", "repo": team.repo,
                              "actor": actor,
                              "ts": _timestamp(rng, year, month, day, hour)})
                    for _ in range(n_push):
                        actor = contributors[int(rng.integers(0, len(contributors)))] \
                            if contributors else team.members[0]
                        day = _draw_day(rng, team, year, month)
                        hour = _draw_hour(rng, team)
                        emit({"type": "PushEvent", "repo": team.repo,
                              "actor": actor,
                              "ts": _timestamp(rng, year, month, day, hour)})
                    for _ in range(n_pr):
                        actor = contributors[int(rng.integers(0, len(contributors)))] \
                            if contributors else team.members[0]
                        day = _draw_day(rng, team, year, month)
                        emit({"type": "PullRequestEvent", "repo": team.repo,
                              "actor": actor,
                              "ts": _timestamp(rng, year, month, day,
                                               _draw_hour(rng, team))})
                    for _ in range(n_comment):
                        actor = contributors[int(rng.integers(0, len(contributors)))] \
                            if contributors else team.members[0]
                        day = _draw_day(rng, team, year, month)
                        if rng.random() < team.emoji_prob:
                            body = _COMMENT_EMOJI[int(rng.integers(0, len(_COMMENT_EMOJI)))]
                        else:
                            body = _COMMENT_PLAIN[int(rng.integers(0, len(_COMMENT_PLAIN)))]
                        emit({"type": "IssueCommentEvent", "repo": team.repo,
                              "actor": actor, "body": body,
                              "ts": _timestamp(rng, year, month, day,
                                               _draw_hour(rng, team))})
                    for _ in range(int(rng.poisson(0.8))):
                        emit({"type": "WatchEvent", "repo": team.repo,
                              "actor": f"spectator{int(rng.integers(0, 10**6)):06d}",
                              "ts": _timestamp(rng, year, month,
                                               _draw_day(rng, team, year, month),
                                               int(rng.integers(0, 24)))})
                    for _ in range(int(rng.poisson(0.3))):
                        emit({"type": "ForkEvent", "repo": team.repo,
                              "actor": f"spectator{int(rng.integers(0, 10**6)):06d}",
                              "ts": _timestamp(rng, year, month,
                                               _draw_day(rng, team, year, month),
                                               int(rng.integers(0, 24)))})

            # quarterly side-repo pushes create multitasking variation
            founding_year = spec.start_year + team.founding_offset // 12
            for actor in team.members:
                if rng.random() < spec.multitask_prob:
                    for year in range(founding_year, shock_year + 1):
                        for qmonth in (2, 5, 8, 11):
                            emit({"type": "PushEvent",
                                  "repo": f"side/{actor}", "actor": actor,
                                  "ts": _timestamp(rng, year, qmonth,
                                                   14, _draw_hour(rng, team))})

    truth = pd.DataFrame(truth_rows)
    if not truth.empty:
        truth["true_ite"] = truth["y_treated"] - truth["y_untreated"]
    truth.to_csv(truth_path, index=False, float_format="%.10g")

    meta = {"spec": asdict(spec), "seed": seed}
    meta_path = out / "synthetic_meta.json"
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)

    return {"events": str(events_path), "profiles": str(profiles_path),
            "languages": str(languages_path), "ground_truth": str(truth_path),
            "meta": str(meta_path)}


# ---------------------------------------------------------------------------
# Tabular mode: same latent model, no event materialization

def make_tabular_corpus(n_teams: int = 2000, seed: int = 0,
                        noise_scale: float = 0.45,
                        seasonal_amplitude: float = 0.25,
                        months=(1, 2, 3, 4, 5, 6),
                        n_nuisance: int = 6) -> dict:
    """Feature/outcome matrices straight from the latent team model.

    Returns X (per-team Q4 features of the reference year), per-month
    outcome vectors for the following year (``y``), and the prior-year
    same-month outcomes (``y_prior``) for the seasonal-naive baseline.
    """
    rng = rng_for(seed, "tabular")
    rates = rng.uniform(1.0, 3.2, size=n_teams)
    sizes = rng.integers(4, 13, size=n_teams).astype(float)
    spreads = rng.uniform(1.5, 6.0, size=n_teams)

    def month_counts(month):
        noise = rng.normal(0.0, noise_scale, size=n_teams)
        lam = np.exp(rates + _season(month, seasonal_amplitude) + noise)
        return rng.poisson(lam)

    q4 = sum(month_counts(m) for m in (10, 11, 12))
    X = pd.DataFrame({
        "q4_pushes_log1p": np.log1p(q4),
        "n_members": sizes,
        "hour_entropy": np.log(spreads) + rng.normal(0, 0.05, n_teams),
    })
    for i in range(n_nuisance):
        X[f"nuisance_{i}"] = rng.normal(0.0, 1.0, size=n_teams)

    y = {m: np.log1p(month_counts(m)) for m in months}
    y_prior = {m: np.log1p(month_counts(m)) for m in months}
    return {"X": X, "y": y, "y_prior": y_prior, "latent_rates": rates}
