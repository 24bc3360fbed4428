import io
import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinequad import study
from spinequad.resources import data_path
from spinequad.study import (
    BaselineMissingError,
    EmptyInputError,
    SchemaError,
    VoteRecord,
    interact_match_rate,
    naturalness_scores,
    parse_votes,
    validate_participants,
)

HEADER = "participant,video,gait,left,center,right,most_natural,least_natural,most_interact"
SHOWN = ("alpha", "fixed", "beta")


def ballot(most, least, interact=None, shown=SHOWN, pid="p1", video="walk_01", gait="walk"):
    return VoteRecord(pid, video, gait, tuple(shown), most, least, interact or most)


def rank_sign(rec, strategy, baseline):
    """Oracle: compare explicit rank positions (most=0, middle=1, least=2)."""
    ranks = {rec.most_natural: 0, rec.least_natural: 2}
    for s in rec.shown:
        ranks.setdefault(s, 1)
    return int(np.sign(ranks[baseline] - ranks[strategy]))


def swap_roles(rec, strategy, baseline):
    sub = {strategy: baseline, baseline: strategy}
    return replace(
        rec,
        most_natural=sub.get(rec.most_natural, rec.most_natural),
        least_natural=sub.get(rec.least_natural, rec.least_natural),
        most_interact=sub.get(rec.most_interact, rec.most_interact),
    )


# ---------------------------------------------------------------------------
# parsing


def test_parse_empty_file_with_header():
    assert parse_votes(io.StringIO(HEADER + "\n")) == []


def test_parse_round_trip():
    lines = [HEADER]
    for pid in ("p1", "p2", "p3"):
        lines.append(f"{pid},walk_01,walk,alpha,fixed,beta,alpha,beta,alpha")
        lines.append(f"{pid},trot_01,trot,beta,alpha,fixed,fixed,alpha,fixed")
    records = parse_votes(io.StringIO("\n".join(lines) + "\n"))
    assert len(records) == 6
    assert records[0] == VoteRecord(
        "p1", "walk_01", "walk", ("alpha", "fixed", "beta"), "alpha", "beta", "alpha"
    )
    assert records[5].shown == ("beta", "alpha", "fixed")
    assert records[5].most_interact == "fixed"


def test_parse_rejects_vote_for_unshown_strategy():
    text = f"{HEADER}\np1,walk_01,walk,alpha,fixed,beta,gamma,beta,alpha\n"
    with pytest.raises(SchemaError) as err:
        parse_votes(io.StringIO(text))
    assert err.value.rows[0][0] == 2
    assert "gamma" in err.value.rows[0][1]


def test_parse_rejects_duplicate_shown():
    text = f"{HEADER}\np1,walk_01,walk,alpha,alpha,beta,alpha,beta,alpha\n"
    with pytest.raises(SchemaError):
        parse_votes(io.StringIO(text))


def test_parse_rejects_bad_header():
    with pytest.raises(SchemaError):
        parse_votes(io.StringIO("who,what\n"))


def test_parse_collects_all_bad_rows():
    text = "\n".join(
        [
            HEADER,
            "p1,walk_01,walk,alpha,fixed,beta,alpha,beta,alpha",
            "p1,walk_02,walk,alpha,fixed",
            "p2,walk_01,walk,alpha,fixed,beta,gamma,beta,alpha",
        ]
    )
    with pytest.raises(SchemaError) as err:
        parse_votes(io.StringIO(text))
    assert [n for n, _ in err.value.rows] == [3, 4]


def test_parse_contradictory_ballot_is_not_a_schema_error():
    text = f"{HEADER}\np1,walk_01,walk,alpha,fixed,beta,alpha,alpha,alpha\n"
    (rec,) = parse_votes(io.StringIO(text))
    assert rec.contradictory


# ---------------------------------------------------------------------------
# participant screening


def test_validate_keeps_clean_participants():
    records = [ballot("alpha", "beta", pid=p) for p in ("p1", "p2")]
    kept, dropped = validate_participants(records)
    assert kept == records
    assert dropped == []


def test_validate_drops_repeat_offender():
    records = [ballot("alpha", "beta", pid="good", video=f"v{k}") for k in range(18)]
    records += [
        ballot(
            "alpha",
            "alpha" if k < 3 else "beta",
            pid="bad",
            video=f"v{k}",
        )
        for k in range(18)
    ]
    kept, dropped = validate_participants(records)
    assert dropped == ["bad"]
    assert {r.participant for r in kept} == {"good"}
    assert len(kept) == 18


def test_validate_tolerates_single_contradiction():
    records = [ballot("alpha", "alpha", pid="p1", video="v0")]
    records += [ballot("alpha", "beta", pid="p1", video=f"v{k}") for k in range(1, 18)]
    kept, dropped = validate_participants(records)
    assert dropped == []
    assert len(kept) == 18
    kept, dropped = validate_participants(records, threshold=1)
    assert dropped == ["p1"]
    assert kept == []


# ---------------------------------------------------------------------------
# naturalness scores


def test_score_bounds_attained():
    best = [ballot("alpha", "fixed", pid=f"p{k}") for k in range(5)]
    assert naturalness_scores(best, "fixed").scores["alpha"] == 1.0
    worst = [ballot("fixed", "beta", pid=f"p{k}") for k in range(5)]
    assert naturalness_scores(worst, "fixed").scores["alpha"] == -1.0
    assert naturalness_scores(worst, "fixed").scores["beta"] == -1.0


def test_scores_match_rank_oracle_on_mixed_votes():
    votes = [
        ballot("alpha", "beta"),
        ballot("alpha", "fixed"),
        ballot("beta", "fixed"),
        ballot("beta", "alpha"),
        ballot("fixed", "alpha"),
        ballot("fixed", "beta"),
        ballot("alpha", "fixed"),
        ballot("beta", "fixed"),
        ballot("fixed", "beta"),
        ballot("alpha", "beta"),
    ]
    report = naturalness_scores(votes, "fixed")
    for s in ("alpha", "beta"):
        expect = np.mean([rank_sign(v, s, "fixed") for v in votes])
        assert report.scores[s] == expect


def test_scores_antisymmetric_under_role_swap():
    votes = [
        ballot("alpha", "beta"),
        ballot("fixed", "alpha"),
        ballot("beta", "fixed"),
        ballot("alpha", "fixed"),
        ballot("fixed", "beta"),
    ]
    swapped = [swap_roles(v, "alpha", "fixed") for v in votes]
    a = naturalness_scores(votes, "fixed").scores["alpha"]
    b = naturalness_scores(swapped, "fixed").scores["alpha"]
    assert b == -a


def test_unranked_vote_pulls_score_toward_zero():
    votes = [ballot("alpha", "fixed"), ballot("alpha", "beta")]
    before = naturalness_scores(votes, "fixed").scores["alpha"]
    # most == least == beta says nothing about alpha vs fixed
    votes.append(ballot("beta", "beta"))
    after = naturalness_scores(votes, "fixed").scores["alpha"]
    assert 0 < after < before


def test_scores_ignore_record_order():
    votes = [
        ballot("alpha", "beta", pid="p1"),
        ballot("fixed", "alpha", pid="p2"),
        ballot("beta", "fixed", pid="p3"),
    ]
    fwd = naturalness_scores(votes, "fixed")
    rev = naturalness_scores(votes[::-1], "fixed")
    assert fwd == rev


def test_missing_baseline_rejected():
    votes = [ballot("alpha", "beta", shown=("alpha", "beta", "gamma"), video="walk_09")]
    with pytest.raises(BaselineMissingError) as err:
        naturalness_scores(votes, "fixed")
    assert "walk_09" in str(err.value)


def test_vote_count_halving():
    votes = [ballot("fixed", "beta", pid=f"p{k}") for k in range(4)]
    votes += [ballot("alpha", "fixed", pid=f"p{k}", video="walk_02") for k in range(3)]
    halved = naturalness_scores(votes, "fixed")
    assert halved.vote_counts == {"alpha": 3, "fixed": 2}
    assert halved.baseline_halved
    raw = naturalness_scores(votes, "fixed", halve_baseline=False)
    assert raw.vote_counts == {"alpha": 3, "fixed": 4}


def test_per_gait_breakdown_splits_votes():
    votes = [ballot("alpha", "fixed", gait="walk", pid="p1")]
    votes += [ballot("fixed", "alpha", gait="trot", video="trot_01", pid="p1")]
    report = naturalness_scores(votes, "fixed")
    assert report.by_gait["walk"]["alpha"] == 1.0
    assert report.by_gait["trot"]["alpha"] == -1.0
    assert report.scores["alpha"] == 0.0


@settings(max_examples=60, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.sampled_from(SHOWN), st.sampled_from(SHOWN), st.sampled_from(SHOWN)
        ),
        min_size=1,
        max_size=30,
    ),
    st.randoms(use_true_random=False),
)
def test_score_properties_on_random_ballots(picks, rng):
    votes = [
        ballot(m, l, i, pid=f"p{k}", video=f"walk_{k % 4}")
        for k, (m, l, i) in enumerate(picks)
    ]
    report = naturalness_scores(votes, "fixed")
    for s, v in report.scores.items():
        assert -1.0 <= v <= 1.0
    shuffled = votes[:]
    rng.shuffle(shuffled)
    assert naturalness_scores(shuffled, "fixed") == report
    swapped = [swap_roles(v, "alpha", "fixed") for v in votes]
    assert naturalness_scores(swapped, "fixed").scores["alpha"] == -report.scores["alpha"]


# ---------------------------------------------------------------------------
# interaction match


def test_match_rate_bounds():
    all_match = [ballot("alpha", "beta") for _ in range(4)]
    assert interact_match_rate(all_match) == 1.0
    none = [ballot("alpha", "beta", interact="beta") for _ in range(4)]
    assert interact_match_rate(none) == 0.0
    with pytest.raises(EmptyInputError):
        interact_match_rate([])


# ---------------------------------------------------------------------------
# shipped fixture and report output


def test_synthetic_fixture_match_rate():
    records = parse_votes(data_path("fixtures/votes_synthetic.csv"))
    assert len(records) == 882
    kept, dropped = validate_participants(records)
    assert dropped == []
    rate = interact_match_rate(records)
    assert rate == 862 / 882
    assert abs(rate - 0.9773) < 1e-4


def test_synthetic_fixture_scores_are_sane():
    records = parse_votes(data_path("fixtures/votes_synthetic.csv"))
    report = naturalness_scores(records, "fixed")
    assert set(report.scores) == {"stiffness", "foot_tracking", "time_real", "time_opt"}
    assert report.scores["time_opt"] > report.scores["foot_tracking"] > 0
    assert report.scores["time_real"] < 0
    assert set(report.by_gait) == {"walk", "trot", "turn"}
    # each strategy appears in 9 of 18 videos, 49 ballots each
    assert report.n_votes == 882


def test_report_serialisation(tmp_path):
    records = parse_votes(data_path("fixtures/votes_synthetic.csv"))
    report = naturalness_scores(records, "fixed")
    blob = json.loads(report.to_json())
    assert blob["baseline"] == "fixed"
    assert blob["scores"] == report.scores
    assert blob["baseline_halved"] is True

    csv_text = report.breakdown_csv()
    lines = csv_text.splitlines()
    assert lines[0] == "gait,strategy,score"
    assert len(lines) == 1 + 3 * 4
    gait, strategy, score = lines[1].split(",")
    assert gait == "trot" and float(score) == report.by_gait["trot"][strategy]
