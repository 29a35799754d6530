import numpy as np
import pytest

from tgmt.embeddings import EmbeddingTable, cosine
from tgmt.errors import (
    DegenerateVectorError,
    DuplicateClassError,
    EmptyActivitySetError,
    EmptyLabelError,
    UnembeddableLabelError,
)
from tgmt.relevance import (
    RelevanceSelector,
    embed_label,
    overall_relevance,
    pairwise_relevance,
    rank_classes,
    ranking_to_tsv,
    select_top_m,
    tokenize_label,
    tra_report,
)


# --------------------------------------------------------------- tokenizing

@pytest.mark.parametrize(
    "raw,tokens",
    [
        ("ApplyEyeMakeup", ("apply", "eye", "makeup")),
        ("nail_polish", ("nail", "polish")),
        ("horse-riding", ("horse", "riding")),
        ("Mixing_Batter", ("mixing", "batter")),
        ("  spaced   out ", ("spaced", "out")),
        ("C++", ("c",)),
        ("XMLParser", ("xmlparser",)),  # acronym runs stay together
        ("simple", ("simple",)),
    ],
)
def test_tokenize(raw, tokens):
    phrase = tokenize_label(raw)
    assert phrase.tokens == tokens
    assert phrase.raw == raw


def test_tokenize_rejects_empty():
    for bad in ("", "___", "--", "!!"):
        with pytest.raises(EmptyLabelError):
            tokenize_label(bad)


# ----------------------------------------------------------------- embedding

def small_table():
    entries = [
        ("nail", np.array([1.0, 0.0, 0.0], dtype=np.float32)),
        ("polish", np.array([0.0, 1.0, 0.0], dtype=np.float32)),
        ("nail_polish", np.array([0.0, 0.0, 4.0], dtype=np.float32)),
        ("zero", np.zeros(3, dtype=np.float32)),
    ]
    return EmbeddingTable(3, entries)


def test_embed_prefers_whole_phrase_entry():
    v = embed_label(tokenize_label("Nail Polish"), small_table())
    assert np.array_equal(v, [0.0, 0.0, 4.0])


def test_embed_falls_back_to_token_mean():
    table = small_table()
    v = embed_label(tokenize_label("nail polish remover"), table)
    # 'remover' is absent; mean of the two stored token vectors
    assert np.allclose(v, [0.5, 0.5, 0.0], atol=0)


def test_embed_unknown_label_raises():
    with pytest.raises(UnembeddableLabelError) as err:
        embed_label(tokenize_label("quantum flux"), small_table())
    assert err.value.label == "quantum flux"


def test_embed_zero_vector_raises():
    with pytest.raises(DegenerateVectorError):
        embed_label(tokenize_label("zero"), small_table())


def test_pairwise_is_cosine_of_embeddings():
    table = small_table()
    got = pairwise_relevance("nail", "polish", table)
    assert got == 0.0
    got = pairwise_relevance("nail", "nail polish remover", table)
    assert abs(got - cosine([1, 0, 0], [0.5, 0.5, 0.0])) < 1e-15


def test_pairwise_reports_which_side_failed():
    table = small_table()
    with pytest.raises(UnembeddableLabelError) as err:
        pairwise_relevance("missing", "nail", table)
    assert err.value.side == "x"
    with pytest.raises(UnembeddableLabelError) as err:
        pairwise_relevance("nail", "missing", table)
    assert err.value.side == "y"


# ------------------------------------------------------ brute-force oracle

def build_instance(rng):
    """Random activities/candidates over a shared token vocabulary.

    Labels are underscore joins of known tokens, so the expected token
    split is known by construction and the oracle needs no tokenizer.
    """
    dim = int(rng.integers(2, 9))
    vocab = [f"t{i}" for i in range(int(rng.integers(8, 26)))]
    vecs = {}
    for tok in vocab:
        v = rng.normal(size=dim).astype(np.float32)
        vecs[tok] = v
    # a few multi-token phrase entries stored directly
    phrases = []
    for _ in range(int(rng.integers(0, 4))):
        a, b = rng.choice(len(vocab), size=2, replace=False)
        phrase = f"{vocab[a]}_{vocab[b]}"
        if phrase not in vecs:
            vecs[phrase] = rng.normal(size=dim).astype(np.float32)
            phrases.append(phrase)
    table = EmbeddingTable(dim, sorted(vecs.items()))

    def make_label(allow_unknown):
        n = int(rng.integers(1, 4))
        toks = []
        for _ in range(n):
            if allow_unknown and rng.random() < 0.15:
                toks.append(f"unk{int(rng.integers(100))}")
            else:
                toks.append(vocab[int(rng.integers(len(vocab)))])
        return "_".join(toks)

    n_act = int(rng.integers(1, 11))
    activities = []
    while len(activities) < n_act:
        label = make_label(allow_unknown=False)
        if label not in activities:
            activities.append(label)
    n_cand = int(rng.integers(1, 51))
    candidates = []
    while len(candidates) < n_cand:
        label = make_label(allow_unknown=True)
        if label not in candidates:
            candidates.append(label)
    for phrase in phrases:
        if phrase not in candidates:
            candidates.append(phrase)
    return table, vecs, activities, candidates


def oracle_embed(label, vecs):
    toks = label.split("_")
    if label in vecs:
        return np.asarray(vecs[label], dtype=np.float64)
    found = [np.asarray(vecs[t], dtype=np.float64) for t in toks if t in vecs]
    if not found:
        return None
    return sum(found) / len(found)


def oracle_kappa(label, activities, vecs):
    vy = oracle_embed(label, vecs)
    if vy is None:
        return None
    total = 0.0
    for x in sorted(activities):
        vx = oracle_embed(x, vecs)
        c = float(np.dot(vx, vy) / (np.linalg.norm(vx) * np.linalg.norm(vy)))
        total += min(1.0, max(-1.0, c))
    return total


def test_ranking_matches_brute_force():
    rng = np.random.default_rng(42)
    for _ in range(30):
        table, vecs, activities, candidates = build_instance(rng)
        ranking = rank_classes(activities, candidates, table)
        expect = {}
        expect_skipped = set()
        for label in candidates:
            kappa = oracle_kappa(label, activities, vecs)
            if kappa is None:
                expect_skipped.add(label)
            else:
                expect[label] = kappa
        assert set(ranking.scores) == set(expect)
        assert {s for s, _ in ranking.skipped} == expect_skipped
        for label, kappa in expect.items():
            assert abs(ranking.scores[label] - kappa) < 1e-12
        order = sorted(expect, key=lambda l: (-expect[l], l))
        assert ranking.ordered_labels() == order
        assert [ranking.ranks[l] for l in order] == list(range(1, len(order) + 1))


def test_kappa_additive_over_activity_sets():
    rng = np.random.default_rng(5)
    table, vecs, activities, candidates = build_instance(rng)
    if len(activities) < 2:
        activities = activities + ["t0_t1"]
    half = len(activities) // 2
    a1, a2 = activities[:half] or activities[:1], activities[half:]
    y = None
    for label in candidates:
        if oracle_embed(label, vecs) is not None:
            y = label
            break
    full = overall_relevance(y, a1 + a2, table)
    parts = overall_relevance(y, a1, table) + overall_relevance(y, a2, table)
    assert abs(full - parts) < 1e-12


def test_selection_nesting_and_bounds():
    table = small_table()
    candidates = ["nail", "polish", "nail polish"]
    ranking = rank_classes(["nail"], candidates, table)
    prev = []
    for m in range(len(candidates) + 2):
        sel = select_top_m(ranking, m).selected
        assert len(sel) == min(m, len(candidates))
        assert list(sel[: len(prev)]) == list(prev)
        prev = sel
    with pytest.raises(ValueError):
        select_top_m(ranking, -1)


def test_exact_ties_rank_by_label():
    v = np.array([2.0, 1.0], dtype=np.float32)
    table = EmbeddingTable(
        2,
        [("act", np.array([1.0, 0.0], dtype=np.float32)), ("b", v), ("a", v),
         ("c", v)],
    )
    ranking = rank_classes(["act"], ["b", "c", "a"], table)
    assert ranking.ordered_labels() == ["a", "b", "c"]


def test_ranking_is_deterministic():
    rng = np.random.default_rng(9)
    table, _, activities, candidates = build_instance(rng)
    r1 = rank_classes(activities, candidates, table)
    r2 = rank_classes(activities, candidates, table)
    assert r1.scores == r2.scores
    assert r1.ranks == r2.ranks
    assert r1.skipped == r2.skipped


def test_rank_classes_error_paths():
    table = small_table()
    with pytest.raises(UnembeddableLabelError) as err:
        rank_classes(["unknown token"], ["nail"], table)
    assert err.value.side == "x"
    with pytest.raises(EmptyActivitySetError):
        rank_classes([], ["nail"], table)
    with pytest.raises(EmptyActivitySetError):
        rank_classes(["nail"], [], table)
    with pytest.raises(DuplicateClassError):
        rank_classes(["nail"], ["polish", "polish"], table)


def test_all_candidates_skipped_gives_empty_ranking():
    table = small_table()
    ranking = rank_classes(["nail"], ["missing1", "missing2"], table)
    assert ranking.ranks == {}
    assert len(ranking.skipped) == 2
    assert select_top_m(ranking, 5).selected == ()


# ------------------------------------------------------------------ report

def report_table():
    # activities along distinct axes; candidate phi values are designed
    entries = [
        ("a1", np.array([1.0, 0.0, 0.0, 0.0], dtype=np.float32)),
        ("a2", np.array([0.0, 1.0, 0.0, 0.0], dtype=np.float32)),
        ("c1", np.array([1.0, 0.0, 0.0, 0.0], dtype=np.float32)),
        ("c2", np.array([1.0, 1.0, 0.0, 0.0], dtype=np.float32)),
        ("c3", np.array([0.0, 0.0, 1.0, 0.0], dtype=np.float32)),
    ]
    return EmbeddingTable(4, entries)


def test_report_orders_by_pairwise_relevance():
    table = report_table()
    ranking = rank_classes(["a1", "a2"], ["c1", "c2", "c3"], table)
    refined = select_top_m(ranking, 3)
    rows = tra_report(refined, k=2)
    by_activity = {}
    for row in rows:
        by_activity.setdefault(row.activity, []).append((row.rank, row.label, row.phi))
    s = 1 / np.sqrt(2.0)
    assert by_activity["a1"] == [(1, "c1", 1.0), (2, "c2", pytest.approx(s, abs=1e-12))]
    assert by_activity["a2"] == [(1, "c2", pytest.approx(s, abs=1e-12)), (2, "c1", 0.0)]


def test_report_covers_only_selected_classes():
    table = report_table()
    ranking = rank_classes(["a1"], ["c1", "c2", "c3"], table)
    refined = select_top_m(ranking, 1)
    rows = tra_report(refined, k=5)
    assert {row.label for row in rows} == set(refined.selected)
    with pytest.raises(ValueError):
        tra_report(refined, k=0)


def test_ranking_tsv_shape():
    table = report_table()
    ranking = rank_classes(["a1"], ["c1", "c3"], table)
    text = ranking_to_tsv(ranking)
    lines = text.strip().split("\n")
    assert lines[0] == "rank\tlabel\tkappa"
    assert lines[1].startswith("1\tc1\t")
    assert len(lines) == 3


# --------------------------------------------------------------- estimator

def test_selector_fit_transform_report():
    table = report_table()
    sel = RelevanceSelector(table=table, m=2, top_k=1)
    kept = sel.fit_transform(["a1", "a2"], ["c1", "c2", "c3"])
    assert kept == list(sel.refined_.selected)
    assert len(kept) == 2
    rows = sel.report()
    assert {row.activity for row in rows} == {"a1", "a2"}
    params = sel.get_params()
    assert params["m"] == 2 and params["top_k"] == 1
    sel2 = RelevanceSelector(**params)
    assert sel2.fit_transform(["a1", "a2"], ["c1", "c2", "c3"]) == kept


def test_selector_guards():
    with pytest.raises(ValueError):
        RelevanceSelector(table=None).fit(["a"])
    sel = RelevanceSelector(table=report_table())
    with pytest.raises(RuntimeError):
        sel.transform(["c1"])
    with pytest.raises(RuntimeError):
        sel.report()
