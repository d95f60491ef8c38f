import math
import statistics

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from teamshock.cohort import (FEATURE_REGISTRY, FeatureExtractor,
                              SelectionCriteria, coefficient_of_variation,
                              contains_emoji, drop_incomplete,
                              missingness_mask, monthly_outcomes,
                              off_segment_length, prepare_events,
                              select_teams, shannon_entropy)
from teamshock.events import ActorProfile, parse_timestamp


def test_registry_has_39_unique_names():
    assert len(FEATURE_REGISTRY) == 39
    assert len(set(FEATURE_REGISTRY)) == 39


# ---------------------------------------------------------------------------
# Scalar kernels

def test_entropy_uniform_and_degenerate():
    # [DERIVED] H(uniform over k) = ln k; H(point mass) = 0
    assert shannon_entropy([1, 1]) == pytest.approx(math.log(2), abs=1e-12)
    assert shannon_entropy([5, 5, 5, 5]) == pytest.approx(math.log(4), abs=1e-12)
    assert shannon_entropy([7, 0, 0]) == 0.0


def test_entropy_hand_computed_nonuniform():
    # [DERIVED] p = (0.25, 0.75): H = -(0.25 ln 0.25 + 0.75 ln 0.75)
    expected = -(0.25 * math.log(0.25) + 0.75 * math.log(0.75))
    assert shannon_entropy([1, 3]) == pytest.approx(expected, abs=1e-12)


def test_entropy_rejects_invalid():
    with pytest.raises(ValueError):
        shannon_entropy([0, 0])
    with pytest.raises(ValueError):
        shannon_entropy([1, -1])


def test_cv_matches_stdlib_oracle():
    values = [3.0, 5.0, 9.0, 11.0]
    expected = statistics.stdev(values) / statistics.mean(values)
    assert coefficient_of_variation(values) == pytest.approx(expected, abs=1e-12)


def test_cv_edge_cases():
    assert math.isnan(coefficient_of_variation([4.0]))
    assert math.isnan(coefficient_of_variation([-1.0, 1.0]))  # mean 0
    assert coefficient_of_variation([2.0, 2.0]) == 0.0


def _off_segment_brute(hour_counts, threshold):
    quiet = [c < threshold for c in hour_counts]
    if all(quiet):
        return 24
    best = 0
    for start in range(24):
        run = 0
        for k in range(24):
            if quiet[(start + k) % 24]:
                run += 1
            else:
                break
        best = max(best, run)
    return best


def test_off_segment_overnight_case():
    # Activity present 07:00 through 20:00; quiet 21:00 through 06:00 wraps
    # midnight and spans 10 hours.
    counts = [0] * 24
    for h in range(7, 21):
        counts[h] = 30
    assert off_segment_length(counts, 16) == 10
    assert _off_segment_brute(counts, 16) == 10


def test_off_segment_edge_values():
    assert off_segment_length([50] * 24, 16) == 0
    assert off_segment_length([0] * 24, 16) == 24
    single = [10] * 24
    single[5] = 0
    assert off_segment_length(single, 1) == 1


def test_off_segment_validation():
    with pytest.raises(ValueError):
        off_segment_length([0] * 23, 16)
    with pytest.raises(ValueError):
        off_segment_length([0] * 24, 0)


@settings(max_examples=300, deadline=None)
@given(counts=st.lists(st.integers(0, 90), min_size=24, max_size=24),
       threshold=st.sampled_from([1, 16, 32, 64]),
       shift=st.integers(0, 23))
def test_off_segment_matches_brute_force_and_rotation_invariant(counts,
                                                                threshold,
                                                                shift):
    assert off_segment_length(counts, threshold) == _off_segment_brute(
        counts, threshold)
    rotated = counts[shift:] + counts[:shift]
    assert off_segment_length(rotated, threshold) == off_segment_length(
        counts, threshold)


def test_contains_emoji():
    assert contains_emoji("nice \U0001F389")
    assert contains_emoji("ship it :rocket:")
    assert not contains_emoji("plain text 1234 :)")
    assert not contains_emoji("")
    assert not contains_emoji(None)


# ---------------------------------------------------------------------------
# Selection

def _frame(rows):
    df = pd.DataFrame(rows, columns=["repo", "actor", "event_type",
                                     "activity_class", "ts", "body"])
    df["ts"] = pd.to_datetime(df["ts"], utc=True, format="ISO8601")
    return df


def _quarterly_rows(repo, actors, year, event_type="push"):
    rows = []
    for q, month in enumerate((2, 5, 8, 11)):
        for actor in actors:
            rows.append((repo, actor, event_type, "contribution",
                         f"{year}-{month:02d}-10", None))
    return rows


def test_select_teams_requires_all_four_quarters():
    rows = _quarterly_rows("steady", ["a", "b", "c"], 2018)
    # three-quarters team: drop Q4
    rows += [r for r in _quarterly_rows("flaky", ["a", "b", "c"], 2018)
             if not r[5 - 1].startswith("2018-11")]
    selected = select_teams(_frame(rows), SelectionCriteria(2018, 3))
    assert selected == ["steady"]


def test_select_teams_member_threshold_and_monotonicity():
    rows = (_quarterly_rows("big", ["a", "b", "c", "d"], 2018)
            + _quarterly_rows("small", ["a", "b"], 2018))
    events = _frame(rows)
    at2 = select_teams(events, SelectionCriteria(2018, 2))
    at3 = select_teams(events, SelectionCriteria(2018, 3))
    at5 = select_teams(events, SelectionCriteria(2018, 5))
    assert at2 == ["big", "small"]
    assert at3 == ["big"]
    assert at5 == []
    assert set(at5) <= set(at3) <= set(at2)  # monotone in the threshold


def test_select_teams_push_requirement():
    rows = _quarterly_rows("talkers", ["a", "b", "c"], 2018, "issue_comment")
    events = _frame(rows)
    assert select_teams(events, SelectionCriteria(2018, 3)) == []
    relaxed = SelectionCriteria(2018, 3, require_push_by_year_end=False)
    assert select_teams(events, relaxed) == ["talkers"]


def test_select_teams_attention_does_not_count():
    rows = _quarterly_rows("real", ["a", "b", "c"], 2018)
    for month in (2, 5, 8, 11):
        for actor in ("x", "y", "z"):
            rows.append(("fans", actor, "watch", "attention",
                         f"2018-{month:02d}-10", None))
    assert select_teams(_frame(rows), SelectionCriteria(2018, 3)) == ["real"]


# ---------------------------------------------------------------------------
# Feature extraction on a hand-computed corpus

@pytest.fixture
def small_corpus():
    rows = []
    # repo "t" active all four quarters of 2018 with 2-3 members
    rows += _quarterly_rows("t", ["a", "b"], 2018)
    # Q4 2018 details: a pushes twice more, c contributes an issue and
    # comments; one comment has an emoji
    rows += [
        ("t", "a", "push", "contribution", "2018-10-05T09:00:00", None),
        ("t", "a", "push", "contribution", "2018-10-05T10:00:00", None),
        ("t", "c", "issue", "contribution", "2018-11-20T22:00:00", None),
        ("t", "c", "issue_comment", "contribution", "2018-12-01T22:30:00",
         "looks good :tada:"),
        ("t", "c", "issue_comment", "contribution", "2018-12-02T22:30:00",
         "plain note"),
        ("t", "z", "watch", "attention", "2018-12-05", None),
        ("t", "z", "fork", "attention", "2017-06-05", None),
        # c also contributes elsewhere in Q4 -> not dedicated
        ("other", "c", "push", "contribution", "2018-11-25", None),
        # repo creation marker: earliest event in 2017
        ("t", "a", "push", "contribution", "2017-01-01T00:00:00", None),
    ]
    events = _frame(rows)
    profiles = {
        "a": ActorProfile("a", parse_timestamp("2015-01-01T00:00:00Z"),
                          "US", 10),
        "b": ActorProfile("b", parse_timestamp("2017-01-01T00:00:00Z"),
                          "DE", 0),
        "c": ActorProfile("c", parse_timestamp("2018-01-01T00:00:00Z"),
                          "US", 100),
    }
    languages = {"a": "python", "b": "go", "c": "python"}
    return events, profiles, languages


def test_feature_extraction_hand_values(small_corpus):
    events, profiles, languages = small_corpus
    fx = FeatureExtractor(events, profiles, languages)
    f = fx.extract("t", 2018)
    assert set(f) == set(FEATURE_REGISTRY)

    # [DERIVED] Q4/2018 contributors: a (pushes), b (push), c (issue+comments)
    assert f["n_members"] == 3.0
    # c contributed to two repos in Q4, a and b only to t
    assert f["n_dedicated_members"] == 2.0
    assert f["avg_contributed_repos"] == pytest.approx((1 + 1 + 2) / 3)

    # countries: US, DE, US -> 2 countries, H = -(2/3 ln 2/3 + 1/3 ln 1/3)
    assert f["n_countries"] == 2.0
    expected_h = -(2 / 3 * math.log(2 / 3) + 1 / 3 * math.log(1 / 3))
    assert f["country_entropy"] == pytest.approx(expected_h, abs=1e-12)
    assert f["n_languages"] == 2.0
    assert f["language_entropy"] == pytest.approx(expected_h, abs=1e-12)

    # comments: 2, one with emoji
    assert f["n_comments_log1p"] == pytest.approx(math.log1p(2))
    assert f["emoji_post_proportion"] == pytest.approx(0.5)

    # Q4 pushes: quarterly 2 members on 11-10, plus two on 10-05 -> 4
    assert f["q4_pushes_log1p"] == pytest.approx(math.log1p(4))
    assert f["q4_issues_log1p"] == pytest.approx(math.log1p(1))
    assert f["q4_pull_requests_log1p"] == pytest.approx(math.log1p(0))

    # attention: 1 watch + 1 fork all-time; only the watch is in Q4/2018
    assert f["all_watches_log1p"] == pytest.approx(math.log1p(1))
    assert f["all_forks_log1p"] == pytest.approx(math.log1p(1))
    assert f["q4_watches_log1p"] == pytest.approx(math.log1p(1))
    assert f["q4_forks_log1p"] == pytest.approx(math.log1p(0))

    # followers log1p over a,b,c: max = log1p(100)
    assert f["followers_log1p_max"] == pytest.approx(math.log1p(100))
    assert f["followers_log1p_median"] == pytest.approx(math.log1p(10))

    # platform tenure max: a created 2015-01-01, as-of 2018-12-31 23:59:59
    assert f["platform_tenure_max"] == pytest.approx(1460.99, abs=0.1)

    # repo age: first event 2017-01-01
    assert f["repo_age_days"] == pytest.approx(730.0, abs=0.1)


def test_feature_extraction_missingness_not_zero(small_corpus):
    events, _, _ = small_corpus
    fx = FeatureExtractor(events, {}, {})
    f = fx.extract("t", 2018)
    # no profiles -> demographic and prestige features are missing, not 0
    assert math.isnan(f["n_countries"])
    assert math.isnan(f["country_entropy"])
    assert math.isnan(f["followers_log1p_max"])
    assert math.isnan(f["n_languages"])
    # activity features remain defined
    assert f["n_members"] == 3.0


def test_extract_matrix_and_drop_incomplete(small_corpus):
    events, profiles, languages = small_corpus
    fx = FeatureExtractor(events, profiles, languages)
    X = fx.extract_matrix(["t"], 2018)
    assert list(X.columns) == list(FEATURE_REGISTRY)
    assert X.index.tolist() == ["t"]
    mask = missingness_mask(X)
    assert mask.shape == X.shape
    complete, dropped = drop_incomplete(X)
    assert dropped == len(X) - len(complete)


def test_extract_unknown_repo_raises(small_corpus):
    events, profiles, languages = small_corpus
    fx = FeatureExtractor(events, profiles, languages)
    with pytest.raises(KeyError):
        fx.extract("ghost", 2018)
    with pytest.raises(ValueError, match="no Q4"):
        fx.extract("other", 2017)  # exists but inactive in Q4/2017


# ---------------------------------------------------------------------------
# Outcomes

def test_monthly_outcomes_zero_is_observed(small_corpus):
    events, _, _ = small_corpus
    out = monthly_outcomes(events, ["t"], 2018, (1, 2, 3), "productivity")
    # [DERIVED] Feb 2018 has the quarterly push x2 (actors a,b); Jan/Mar none
    assert out.loc["t", 2] == pytest.approx(math.log1p(2))
    assert out.loc["t", 1] == 0.0
    assert out.loc["t", 3] == 0.0


def test_monthly_outcomes_team_size(small_corpus):
    events, _, _ = small_corpus
    out = monthly_outcomes(events, ["t"], 2018, (11,), "team_size")
    # Nov 2018: actors a, b (quarterly pushes) and c (issue) -> 3 members
    assert out.loc["t", 11] == pytest.approx(math.log1p(3))


def test_monthly_outcomes_unknown_outcome(small_corpus):
    events, _, _ = small_corpus
    with pytest.raises(ValueError, match="unknown outcome"):
        monthly_outcomes(events, ["t"], 2018, (1,), "velocity")
