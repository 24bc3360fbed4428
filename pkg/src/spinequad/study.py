"""Analysis of the side-by-side naturalness ballots.

Raters watch spliced clips showing three strategies at once and pick the most
natural, the least natural, and the one they would most want to interact with.
This module ingests those ballots, screens out raters who routinely contradict
themselves, and turns the remainder into relative naturalness scores.

There is no single canonical way to collapse best/worst ballots into a scalar,
so the scoring rule here is a deliberate convention rather than received
truth: every ballot is read as a pairwise comparison between each shown
candidate and the fixed-spine baseline, contributing +1 when the candidate
outranks the baseline, -1 when the baseline outranks it, 0 when the ballot
says nothing about the pair.  The rule was chosen for its properties -- scores
are bounded to [-1, 1], antisymmetric under swapping a candidate with the
baseline, and normalised by exposure so a strategy is not rewarded merely for
appearing in more clips.

Ballot CSV schema (header required, one ballot per row)::

    participant,video,gait,left,center,right,most_natural,least_natural,most_interact

``left/center/right`` are the strategy ids in screen order; the three vote
columns must each name one of them.  A ballot with ``most_natural`` equal to
``least_natural`` parses fine -- flagging raters who do that repeatedly is
:func:`validate_participants`' job, not the parser's.
"""

from __future__ import annotations

import csv
import json
from collections import Counter, defaultdict
from dataclasses import dataclass

VOTE_HEADER = (
    "participant",
    "video",
    "gait",
    "left",
    "center",
    "right",
    "most_natural",
    "least_natural",
    "most_interact",
)


class SchemaError(ValueError):
    """Ballot file violates the documented schema.

    ``rows`` holds (line_number, reason) pairs for every offending row.
    """

    def __init__(self, rows):
        self.rows = list(rows)
        lines = "; ".join(f"line {n}: {why}" for n, why in self.rows)
        super().__init__(f"bad ballot rows -- {lines}")


class BaselineMissingError(ValueError):
    """A scored video does not include the baseline strategy."""


class EmptyInputError(ValueError):
    """No ballots to analyse."""


@dataclass(frozen=True)
class VoteRecord:
    """One rater's ballot for one spliced video."""

    participant: str
    video: str
    gait: str
    shown: tuple  # (left, center, right) strategy ids, distinct
    most_natural: str
    least_natural: str
    most_interact: str

    @property
    def contradictory(self) -> bool:
        return self.most_natural == self.least_natural


def parse_votes(file) -> list:
    """Read ballots from a CSV path or open text file.

    Rejects the whole file if the header is wrong; otherwise collects every
    malformed row and raises a single :class:`SchemaError` naming them all.
    """
    if hasattr(file, "read"):
        return _parse(file)
    with open(file, "r", newline="") as f:
        return _parse(f)


def _parse(f) -> list:
    reader = csv.reader(f)
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError([(1, "empty file, expected header")]) from None
    if tuple(h.strip() for h in header) != VOTE_HEADER:
        raise SchemaError([(1, f"header must be {','.join(VOTE_HEADER)}")])

    records, bad = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(VOTE_HEADER):
            bad.append((lineno, f"expected {len(VOTE_HEADER)} fields, got {len(row)}"))
            continue
        part, video, gait, a, b, c, most, least, interact = (x.strip() for x in row)
        shown = (a, b, c)
        if any(not x for x in (part, video, gait, *shown, most, least, interact)):
            bad.append((lineno, "empty field"))
            continue
        if len(set(shown)) != 3:
            bad.append((lineno, f"shown strategies not distinct: {shown}"))
            continue
        stray = [v for v in (most, least, interact) if v not in shown]
        if stray:
            bad.append((lineno, f"vote for strategy not shown: {stray[0]}"))
            continue
        records.append(
            VoteRecord(
                participant=part,
                video=video,
                gait=gait,
                shown=shown,
                most_natural=most,
                least_natural=least,
                most_interact=interact,
            )
        )
    if bad:
        raise SchemaError(bad)
    return records


def validate_participants(records, threshold: int = 2):
    """Drop raters who contradict themselves in ``threshold`` or more ballots.

    A contradiction is voting the same strategy both most and least natural in
    one ballot.  One slip is tolerated by default; a repeat offender's ballots
    are all removed.  Returns (kept records in input order, sorted dropped ids).
    """
    if threshold < 1:
        raise ValueError(f"threshold must be >= 1, got {threshold}")
    strikes = Counter(r.participant for r in records if r.contradictory)
    dropped = {p for p, n in strikes.items() if n >= threshold}
    kept = [r for r in records if r.participant not in dropped]
    return kept, sorted(dropped)


def _pair_sign(rec: VoteRecord, strategy: str, baseline: str) -> int:
    """+1 / 0 / -1: does this ballot rank ``strategy`` above ``baseline``?"""
    up = rec.most_natural == strategy or (
        rec.least_natural == baseline and rec.most_natural != baseline
    )
    down = rec.most_natural == baseline or (
        rec.least_natural == strategy and rec.most_natural != strategy
    )
    return int(up) - int(down)


@dataclass(frozen=True)
class ScoreReport:
    """Relative naturalness scores against a fixed baseline.

    ``scores`` maps each non-baseline strategy to its mean pairwise sign over
    every ballot whose video showed it; ``by_gait`` is the same restricted to
    one gait's videos.  ``vote_counts`` are raw most-natural tallies -- the
    baseline appears in every video, so with ``baseline_halved`` its tally is
    divided by two to put it on the same exposure footing as the others.
    """

    baseline: str
    scores: dict
    by_gait: dict
    vote_counts: dict
    baseline_halved: bool
    n_votes: int

    def as_dict(self) -> dict:
        return {
            "baseline": self.baseline,
            "n_votes": self.n_votes,
            "scores": dict(self.scores),
            "by_gait": {g: dict(s) for g, s in self.by_gait.items()},
            "vote_counts": dict(self.vote_counts),
            "baseline_halved": self.baseline_halved,
        }

    def to_json(self, **kwargs) -> str:
        kwargs.setdefault("indent", 2)
        kwargs.setdefault("sort_keys", True)
        return json.dumps(self.as_dict(), **kwargs)

    def breakdown_csv(self) -> str:
        """Per-gait scores as ``gait,strategy,score`` rows."""
        lines = ["gait,strategy,score"]
        for gait in sorted(self.by_gait):
            for strategy in sorted(self.by_gait[gait]):
                lines.append(f"{gait},{strategy},{self.by_gait[gait][strategy]!r}")
        return "\n".join(lines) + "\n"


def naturalness_scores(records, baseline: str, halve_baseline: bool = True) -> ScoreReport:
    """Score every strategy's naturalness relative to ``baseline``.

    Every video must include the baseline; each ballot then contributes one
    pairwise sign per non-baseline strategy it showed, and a strategy's score
    is the mean of its signs.  +1 means unanimously preferred over the
    baseline, -1 unanimously rejected.
    """
    missing = sorted({r.video for r in records if baseline not in r.shown})
    if missing:
        raise BaselineMissingError(
            f"baseline {baseline!r} absent from videos: {', '.join(missing)}"
        )

    total = defaultdict(int)
    count = Counter()
    gait_total = defaultdict(int)
    gait_count = Counter()
    tally = Counter()
    for rec in records:
        tally[rec.most_natural] += 1
        for s in rec.shown:
            if s == baseline:
                continue
            sign = _pair_sign(rec, s, baseline)
            total[s] += sign
            count[s] += 1
            gait_total[(rec.gait, s)] += sign
            gait_count[(rec.gait, s)] += 1

    scores = {s: total[s] / count[s] for s in sorted(count)}
    by_gait = defaultdict(dict)
    for (gait, s), n in sorted(gait_count.items()):
        by_gait[gait][s] = gait_total[(gait, s)] / n

    vote_counts = {s: int(n) for s, n in sorted(tally.items())}
    if halve_baseline and baseline in vote_counts:
        vote_counts[baseline] //= 2
    return ScoreReport(
        baseline=baseline,
        scores=scores,
        by_gait=dict(by_gait),
        vote_counts=vote_counts,
        baseline_halved=halve_baseline,
        n_votes=len(records),
    )


def interact_match_rate(records) -> float:
    """Fraction of ballots whose most-natural pick is also the interaction pick."""
    records = list(records)
    if not records:
        raise EmptyInputError("no ballots")
    hits = sum(r.most_natural == r.most_interact for r in records)
    return hits / len(records)
