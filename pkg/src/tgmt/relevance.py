"""Text relevance analysis: score candidate object classes against a set
of target activity labels and keep the top-m.

Pairwise relevance is the cosine similarity of label embeddings; the
overall relevance of a candidate is the sum of its pairwise relevances
over all activities. Candidates are ranked by descending overall
relevance (ties broken by ascending label) and the refined set is the
rank <= m prefix.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .embeddings import EmbeddingTable, cosine
from .errors import (
    DegenerateVectorError,
    DuplicateClassError,
    EmptyActivitySetError,
    EmptyLabelError,
    UnembeddableLabelError,
)

_CAMEL_SPLIT = re.compile(r"(?<=[a-z])(?=[A-Z])")
_SEPARATORS = re.compile(r"[\s_\-]+")
_EDGE_JUNK = re.compile(r"^[^0-9A-Za-z]+|[^0-9A-Za-z]+$")


@dataclass(frozen=True)
class LabelPhrase:
    """A label string together with its normalized tokens."""

    raw: str
    tokens: tuple[str, ...]

    @property
    def joined(self) -> str:
        return "_".join(self.tokens)


def tokenize_label(raw: str) -> LabelPhrase:
    """Split a label on whitespace, underscores, hyphens and camelCase
    boundaries; lowercase everything and strip non-alphanumeric edges."""
    if raw is None or raw == "":
        raise EmptyLabelError("empty label")
    tokens = []
    for part in _SEPARATORS.split(raw):
        if not part:
            continue
        for piece in _CAMEL_SPLIT.split(part):
            piece = _EDGE_JUNK.sub("", piece).lower()
            if piece:
                tokens.append(piece)
    if not tokens:
        raise EmptyLabelError(f"label {raw!r} tokenizes to nothing")
    return LabelPhrase(raw, tuple(tokens))


def as_phrase(label) -> LabelPhrase:
    """Coerce a raw string to a LabelPhrase; pass phrases through."""
    if isinstance(label, LabelPhrase):
        return label
    return tokenize_label(label)


def embed_label(phrase: LabelPhrase, table: EmbeddingTable) -> np.ndarray:
    """Vector for a label: the stored phrase entry (tokens joined with
    underscores) when present, otherwise the mean of the stored token
    vectors. Raises when no token is stored or the result has zero norm."""
    phrase = as_phrase(phrase)
    hit = table.lookup(phrase.joined)
    if hit is not None:
        out = hit.astype(np.float64)
    else:
        found = [table.lookup(t) for t in phrase.tokens]
        found = [v for v in found if v is not None]
        if not found:
            raise UnembeddableLabelError(phrase.raw)
        out = np.mean(np.stack([v.astype(np.float64) for v in found]), axis=0)
    if not np.linalg.norm(out) > 0.0:
        raise DegenerateVectorError(f"label {phrase.raw!r} embeds to a zero vector")
    return out


def pairwise_relevance(x, y, table: EmbeddingTable) -> float:
    """Cosine similarity between the embeddings of labels x and y."""
    try:
        vx = embed_label(x, table)
    except UnembeddableLabelError as exc:
        raise UnembeddableLabelError(exc.label, side="x") from None
    try:
        vy = embed_label(y, table)
    except UnembeddableLabelError as exc:
        raise UnembeddableLabelError(exc.label, side="y") from None
    return cosine(vx, vy)


def overall_relevance(y, activities, table: EmbeddingTable) -> float:
    """Summed pairwise relevance of candidate y over the activity set.

    Accumulated in float64 in a fixed (label-sorted) order so repeated
    runs are bitwise identical.
    """
    activities = [as_phrase(x) for x in activities]
    if not activities:
        raise EmptyActivitySetError("activity set is empty")
    try:
        vy = embed_label(y, table)
    except UnembeddableLabelError as exc:
        raise UnembeddableLabelError(exc.label, side="y") from None
    total = 0.0
    for x in sorted(activities, key=lambda p: p.raw):
        total += cosine(embed_label(x, table), vy)
    return total


@dataclass(frozen=True)
class RelevanceRanking:
    """Scores and ranks for every embeddable candidate class.

    `ranks` maps label -> 1-based rank (1 = most relevant); labels the
    table could not embed are excluded and listed in `skipped` with a
    reason. `phi` holds the pairwise relevance matrix, one row per ranked
    class in `class_order`, one column per activity in `activity_order`
    (sorted by label).
    """

    scores: dict[str, float]
    ranks: dict[str, int]
    activity_set: tuple[str, ...]
    skipped: tuple[tuple[str, str], ...] = ()
    activity_order: tuple[str, ...] = ()
    class_order: tuple[str, ...] = ()
    phi: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)), repr=False)

    def ordered_labels(self) -> list[str]:
        return sorted(self.ranks, key=self.ranks.get)

    def pair_score(self, activity: str, label: str) -> float:
        i = self.class_order.index(label)
        j = self.activity_order.index(activity)
        return float(self.phi[i, j])


def rank_classes(activities, candidates, table: EmbeddingTable) -> RelevanceRanking:
    """Score every candidate class against the activity set and rank them.

    Unembeddable candidates are skipped and reported; an unembeddable
    activity is fatal. Duplicate candidate labels are rejected.
    """
    activities = [as_phrase(x) for x in activities]
    if not activities:
        raise EmptyActivitySetError("activity set is empty")
    candidate_phrases = []
    seen = set()
    for label in candidates:
        phrase = label if isinstance(label, LabelPhrase) else None
        raw = label.raw if phrase is not None else label
        if raw in seen:
            raise DuplicateClassError(f"candidate label {raw!r} appears twice")
        seen.add(raw)
        candidate_phrases.append((raw, phrase))
    if not candidate_phrases:
        raise EmptyActivitySetError("candidate set is empty")

    act_sorted = sorted(activities, key=lambda p: p.raw)
    act_vecs = []
    for x in act_sorted:
        try:
            act_vecs.append(embed_label(x, table))
        except UnembeddableLabelError as exc:
            raise UnembeddableLabelError(exc.label, side="x") from None
    amat = np.stack(act_vecs)
    amat = amat / np.linalg.norm(amat, axis=1, keepdims=True)

    kept_labels = []
    kept_vecs = []
    skipped = []
    for raw, phrase in candidate_phrases:
        try:
            if phrase is None:
                phrase = tokenize_label(raw)
            kept_vecs.append(embed_label(phrase, table))
            kept_labels.append(raw)
        except (UnembeddableLabelError, EmptyLabelError, DegenerateVectorError) as exc:
            skipped.append((raw, type(exc).__name__))

    if kept_labels:
        cmat = np.stack(kept_vecs)
        cmat = cmat / np.linalg.norm(cmat, axis=1, keepdims=True)
        phi = np.clip(cmat @ amat.T, -1.0, 1.0)
        kappa = phi.sum(axis=1)
    else:
        phi = np.zeros((0, len(act_sorted)))
        kappa = np.zeros(0)

    order = sorted(range(len(kept_labels)), key=lambda i: (-kappa[i], kept_labels[i]))
    scores = {kept_labels[i]: float(kappa[i]) for i in range(len(kept_labels))}
    ranks = {kept_labels[i]: pos + 1 for pos, i in enumerate(order)}
    return RelevanceRanking(
        scores=scores,
        ranks=ranks,
        activity_set=tuple(x.raw for x in activities),
        skipped=tuple(skipped),
        activity_order=tuple(x.raw for x in act_sorted),
        class_order=tuple(kept_labels),
        phi=phi,
    )


@dataclass(frozen=True)
class RefinedClassSet:
    """The rank <= m prefix of a ranking, in rank order."""

    selected: tuple[str, ...]
    m: int
    source_ranking: RelevanceRanking


def select_top_m(ranking: RelevanceRanking, m: int) -> RefinedClassSet:
    """Keep the m highest-ranked classes (all of them when m exceeds the
    candidate count; none when m is zero)."""
    if m < 0:
        raise ValueError(f"selection size must be non-negative, got {m}")
    selected = tuple(ranking.ordered_labels()[:m])
    return RefinedClassSet(selected=selected, m=m, source_ranking=ranking)


@dataclass(frozen=True)
class ReportRow:
    activity: str
    rank: int
    label: str
    phi: float


def tra_report(refined: RefinedClassSet, k: int) -> list[ReportRow]:
    """For each activity, the k selected classes with the highest pairwise
    relevance, in descending order (ties broken by label)."""
    if k < 1:
        raise ValueError(f"report size must be >= 1, got {k}")
    ranking = refined.source_ranking
    index = {label: i for i, label in enumerate(ranking.class_order)}
    rows = []
    for activity in ranking.activity_set:
        j = ranking.activity_order.index(activity)
        pairs = sorted(
            ((label, float(ranking.phi[index[label], j])) for label in refined.selected),
            key=lambda item: (-item[1], item[0]),
        )
        for pos, (label, score) in enumerate(pairs[:k], start=1):
            rows.append(ReportRow(activity=activity, rank=pos, label=label, phi=score))
    return rows


def ranking_to_tsv(ranking: RelevanceRanking) -> str:
    lines = ["rank\tlabel\tkappa"]
    for label in ranking.ordered_labels():
        lines.append(f"{ranking.ranks[label]}\t{label}\t{ranking.scores[label]:.9g}")
    return "\n".join(lines) + "\n"


def report_to_tsv(rows: list[ReportRow]) -> str:
    lines = ["activity\trank\tobject_label\tphi"]
    for row in rows:
        lines.append(f"{row.activity}\t{row.rank}\t{row.label}\t{row.phi:.9g}")
    return "\n".join(lines) + "\n"


def skipped_to_text(ranking: RelevanceRanking) -> str:
    return "".join(f"{label}\t{reason}\n" for label, reason in ranking.skipped)


class RelevanceSelector(BaseEstimator):
    """Estimator-style interface to relevance selection.

    fit() takes the target activity labels; transform() filters a list of
    candidate class labels down to the `m` most relevant ones. The full
    ranking from the last transform is kept on `ranking_` and the refined
    set on `refined_`, so reports can be produced afterwards.
    """

    def __init__(self, table=None, m=10, top_k=3):
        self.table = table
        self.m = m
        self.top_k = top_k

    def fit(self, X, y=None):
        if self.table is None or len(self.table) == 0:
            raise ValueError("RelevanceSelector requires a non-empty embedding table")
        activities = [as_phrase(x) for x in X]
        if not activities:
            raise EmptyActivitySetError("activity set is empty")
        self.activities_ = tuple(activities)
        return self

    def transform(self, Y):
        if not hasattr(self, "activities_"):
            raise RuntimeError("RelevanceSelector.transform called before fit")
        ranking = rank_classes(self.activities_, list(Y), self.table)
        refined = select_top_m(ranking, self.m)
        self.ranking_ = ranking
        self.refined_ = refined
        return list(refined.selected)

    def fit_transform(self, X, Y):
        return self.fit(X).transform(Y)

    def report(self, k=None) -> list[ReportRow]:
        if not hasattr(self, "refined_"):
            raise RuntimeError("RelevanceSelector.report called before transform")
        return tra_report(self.refined_, self.top_k if k is None else k)
