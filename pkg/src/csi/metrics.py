"""Contribution measurement: dialogue-act classification, per-user counts,
and the two-arm comparison.

A contribution is a user message classified as a suggestion, explanation,
agreement, disagreement, or question.  Classification is a fixed-precedence
rule table over a replaceable lexicon, so the whole pipeline is deterministic
and byte-reproducible.  The comparison reports percent changes in mean and
variance of per-user contribution counts plus a seeded two-sided permutation
test on the pooled counts (Welch's t emitted alongside for reference).
"""

from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy import stats as _scipy_stats

from .core import Message, Participant, ParticipantKind, seed_to_u64
from .errors import NoParticipants


class Category(str, Enum):
    SUGGESTION = "suggestion"
    EXPLANATION = "explanation"
    AGREEMENT = "agreement"
    DISAGREEMENT = "disagreement"
    QUESTION = "question"
    OTHER = "other"


# First matching rule wins.  Lexicon categories in precedence order; the
# question rule (terminal "?" or interrogative opener) runs before all of them.
_PRECEDENCE = (
    Category.DISAGREEMENT,
    Category.AGREEMENT,
    Category.SUGGESTION,
    Category.EXPLANATION,
)

CONTRIBUTION_CATEGORIES = frozenset(c for c in Category if c is not Category.OTHER)


def _pattern_regex(pattern: str) -> str:
    """Wrap a lexicon pattern with word boundaries where it has word edges."""
    escaped = re.escape(pattern)
    if re.match(r"\w", pattern):
        escaped = r"\b" + escaped
    if re.search(r"\w\Z", pattern):
        escaped = escaped + r"\b"
    return escaped


class Lexicon:
    """Compiled classification lexicon.

    ``data`` maps category name -> list of patterns, plus the special key
    ``question_starters``.  Matching is case-insensitive on word boundaries.
    """

    def __init__(self, data: Mapping[str, Sequence[str]]):
        self.data = {key: tuple(values) for key, values in data.items()}
        starters = self.data.get("question_starters", ())
        self._starter_re = re.compile(
            r"^(?:" + "|".join(re.escape(s) for s in starters) + r")\b",
            re.IGNORECASE,
        ) if starters else None
        self._matchers: dict[Category, re.Pattern] = {}
        for category in _PRECEDENCE:
            patterns = self.data.get(category.value, ())
            if patterns:
                joined = "|".join(_pattern_regex(p) for p in patterns)
                self._matchers[category] = re.compile(joined, re.IGNORECASE)

    def is_question_opener(self, trimmed: str) -> bool:
        return bool(self._starter_re and self._starter_re.match(trimmed))

    def hits(self, category: Category, text: str) -> bool:
        matcher = self._matchers.get(category)
        return bool(matcher and matcher.search(text))

    @classmethod
    def from_file(cls, path) -> "Lexicon":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(json.load(fh))

    @classmethod
    def default(cls) -> "Lexicon":
        text = resources.files("csi").joinpath("data/lexicon.json").read_text("utf-8")
        return cls(json.loads(text))


_DEFAULT_LEXICON: Optional[Lexicon] = None


def default_lexicon() -> Lexicon:
    global _DEFAULT_LEXICON
    if _DEFAULT_LEXICON is None:
        _DEFAULT_LEXICON = Lexicon.default()
    return _DEFAULT_LEXICON


def classify(text: str, lexicon: Optional[Lexicon] = None) -> Category:
    """Classify one utterance into exactly one category.

    Precedence: question (ends with "?" or opens interrogatively), then
    disagreement, agreement, suggestion, explanation, else other.  Total and
    deterministic: the same text always maps to the same category.
    """
    lexicon = lexicon or default_lexicon()
    trimmed = text.strip()
    if trimmed.endswith("?") or lexicon.is_question_opener(trimmed):
        return Category.QUESTION
    for category in _PRECEDENCE:
        if lexicon.hits(category, trimmed):
            return category
    return Category.OTHER


@dataclass(frozen=True)
class ContributionRecord:
    message_id: str
    author_id: str
    category: Category


def classify_messages(
    messages: Iterable[Message],
    lexicon: Optional[Lexicon] = None,
) -> list[ContributionRecord]:
    """Classify user messages; agent-authored input is rejected outright."""
    lexicon = lexicon or default_lexicon()
    records = []
    for message in messages:
        if message.author_kind is ParticipantKind.AGENT:
            raise ValueError(
                f"agent message {message.id} must be excluded before classification"
            )
        records.append(
            ContributionRecord(
                message_id=message.id,
                author_id=message.author_id,
                category=classify(message.text, lexicon),
            )
        )
    return records


@dataclass
class ContributionStats:
    """Per-user contribution counts with their mean and variance.

    ``variance`` is the sample (n-1) estimator; the population estimator is
    kept alongside since either could be the one a given report used.
    ``raw_message_counts`` counts all messages including ``other`` so analysts
    can compare contribution definitions.
    """

    counts: dict[str, float]
    mean: float
    variance: float
    population_variance: float
    raw_message_counts: Optional[dict[str, int]] = None

    @classmethod
    def from_counts(
        cls,
        counts: Mapping[str, float],
        raw_message_counts: Optional[Mapping[str, int]] = None,
    ) -> "ContributionStats":
        if not counts:
            raise NoParticipants("no participants to compute statistics over")
        values = np.array(list(counts.values()), dtype=float)
        return cls(
            counts=dict(counts),
            mean=float(values.mean()),
            variance=float(values.var(ddof=1)) if len(values) > 1 else 0.0,
            population_variance=float(values.var()),
            raw_message_counts=dict(raw_message_counts) if raw_message_counts else None,
        )

    def values(self) -> np.ndarray:
        return np.array(list(self.counts.values()), dtype=float)


def contribution_stats(
    transcripts: Iterable[Message],
    participants: Sequence[Participant],
    lexicon: Optional[Lexicon] = None,
) -> ContributionStats:
    """Count non-``other`` records per participant, zeros included.

    ``transcripts`` must already exclude agent messages; ``participants``
    lists every human and bot in the condition (silent ones count as zero).
    """
    users = [p for p in participants if p.kind is not ParticipantKind.AGENT]
    if not users:
        raise NoParticipants("no human or bot participants")
    counts: dict[str, float] = {p.id: 0 for p in users}
    raw: dict[str, int] = {p.id: 0 for p in users}
    for record in classify_messages(transcripts, lexicon):
        if record.author_id not in counts:
            raise ValueError(f"message author {record.author_id} not in participants")
        raw[record.author_id] += 1
        if record.category is not Category.OTHER:
            counts[record.author_id] += 1
    return ContributionStats.from_counts(counts, raw)


@dataclass
class ComparisonReport:
    """Two-arm comparison of contribution statistics.

    Percent changes are treatment relative to control.  ``p_value`` comes from
    a seeded two-sided permutation test (difference of per-user means) on the
    pooled counts; ``degenerate`` flags the all-identical case where the test
    carries no information and 1.0 is reported.
    """

    mean_pct_change: float
    variance_pct_change: float
    p_value: float
    test: str
    resamples: int
    seed: int
    degenerate: bool = False
    observed_mean_diff: float = 0.0
    control_mean: float = 0.0
    treatment_mean: float = 0.0
    control_variance: float = 0.0
    treatment_variance: float = 0.0
    welch_t: float = float("nan")
    welch_p: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "mean_pct_change": self.mean_pct_change,
            "variance_pct_change": self.variance_pct_change,
            "p_value": self.p_value,
            "test": self.test,
            "resamples": self.resamples,
            "seed": self.seed,
            "degenerate": self.degenerate,
            "observed_mean_diff": self.observed_mean_diff,
            "control_mean": self.control_mean,
            "treatment_mean": self.treatment_mean,
            "control_variance": self.control_variance,
            "treatment_variance": self.treatment_variance,
            "welch_t": self.welch_t,
            "welch_p": self.welch_p,
        }


def _pct_change(before: float, after: float) -> float:
    if before == 0.0:
        if after == 0.0:
            return 0.0
        return float("inf") if after > 0 else float("-inf")
    return 100.0 * (after - before) / before


def permutation_p_value(
    control_values: np.ndarray,
    treatment_values: np.ndarray,
    resamples: int,
    seed: int,
) -> float:
    """Two-sided permutation p-value for the difference of means.

    Pools both arms, redraws the arm labels ``resamples`` times with a seeded
    generator, and applies the add-one estimate (B+1)/(R+1) so p stays in
    (0, 1] and is uniform under the null up to resampling noise.
    """
    observed = abs(treatment_values.mean() - control_values.mean())
    pooled = np.concatenate([treatment_values, control_values])
    n_treatment = len(treatment_values)
    rng = np.random.Generator(np.random.PCG64(seed_to_u64(seed)))
    permuted = rng.permuted(np.tile(pooled, (resamples, 1)), axis=1)
    diffs = permuted[:, :n_treatment].mean(axis=1) - permuted[:, n_treatment:].mean(axis=1)
    hits = int(np.count_nonzero(np.abs(diffs) >= observed))
    return (hits + 1) / (resamples + 1)


def compare(
    control: ContributionStats,
    treatment: ContributionStats,
    resamples: int = 10_000,
    seed: int = 0,
) -> ComparisonReport:
    """Compare two arms' contribution statistics.

    Pooled counts that are all identical make the permutation distribution a
    point mass; the report then flags ``degenerate`` and returns p = 1.0.
    """
    if resamples < 1000:
        raise ValueError(f"resamples must be >= 1000, got {resamples}")
    control_values = control.values()
    treatment_values = treatment.values()
    if control_values.size == 0 or treatment_values.size == 0:
        raise NoParticipants("both arms need at least one participant")
    pooled = np.concatenate([control_values, treatment_values])
    degenerate = bool(np.all(pooled == pooled[0]))
    if degenerate:
        p_value = 1.0
        test = "permutation_two_sided_diff_means[degenerate]"
    else:
        p_value = permutation_p_value(control_values, treatment_values, resamples, seed)
        test = "permutation_two_sided_diff_means"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # constant input makes Welch warn
        welch = _scipy_stats.ttest_ind(treatment_values, control_values, equal_var=False)
    return ComparisonReport(
        mean_pct_change=_pct_change(control.mean, treatment.mean),
        variance_pct_change=_pct_change(control.variance, treatment.variance),
        p_value=p_value,
        test=test,
        resamples=resamples,
        seed=seed,
        degenerate=degenerate,
        observed_mean_diff=float(treatment_values.mean() - control_values.mean()),
        control_mean=control.mean,
        treatment_mean=treatment.mean,
        control_variance=control.variance,
        treatment_variance=treatment.variance,
        welch_t=float(welch.statistic),
        welch_p=float(welch.pvalue),
    )


def category_table(
    transcripts: Iterable[Message],
    lexicon: Optional[Lexicon] = None,
) -> dict[str, int]:
    """Message counts per category, all categories present."""
    table = {category.value: 0 for category in Category}
    for record in classify_messages(transcripts, lexicon):
        table[record.category.value] += 1
    return table


def user_messages_from_log(log) -> list[Message]:
    """Pull every human/bot message out of an event log.

    Relay injections are agent-authored by construction and stay excluded;
    posting is only open to humans and bots, so message_posted covers it.
    """
    from .events import message_from_payload  # events has no metrics dependency

    return [
        message_from_payload(event.payload["message"])
        for event in log
        if event.kind == "message_posted"
    ]


def participants_from_log(log) -> list[Participant]:
    return [
        Participant(
            id=event.payload["id"],
            display_name=event.payload["display_name"],
            kind=ParticipantKind(event.payload["kind"]),
        )
        for event in log
        if event.kind == "participant_joined"
    ]


def arm_summary(log, lexicon: Optional[Lexicon] = None) -> tuple[ContributionStats, dict]:
    """Contribution stats plus the per-category table for one arm's log."""
    messages = user_messages_from_log(log)
    participants = participants_from_log(log)
    stats = contribution_stats(messages, participants, lexicon)
    return stats, category_table(messages, lexicon)


def analyze_logs(
    control_log,
    treatment_log,
    resamples: int = 10_000,
    seed: int = 0,
    lexicon: Optional[Lexicon] = None,
) -> dict:
    """Full two-arm analysis of a pair of event logs, as a JSON-ready dict."""
    control_stats, control_table = arm_summary(control_log, lexicon)
    treatment_stats, treatment_table = arm_summary(treatment_log, lexicon)
    report = compare(control_stats, treatment_stats, resamples=resamples, seed=seed)

    def _arm(stats: ContributionStats, table: dict) -> dict:
        return {
            "participants": len(stats.counts),
            "messages": int(sum(table.values())),
            "contributions": int(sum(stats.counts.values())),
            "mean": stats.mean,
            "variance": stats.variance,
            "population_variance": stats.population_variance,
            "per_category": table,
        }

    return {
        "comparison": report.to_dict(),
        "control": _arm(control_stats, control_table),
        "treatment": _arm(treatment_stats, treatment_table),
    }
