import math
import random

import numpy as np
import pytest

from platy.corpus import QuestionRecord, normalize_text
from platy.similarity import (
    DimensionMismatchError,
    EmbedderSpec,
    LexicalEmbedder,
    SimilarPair,
    cosine,
    embed,
    exact_duplicates,
    make_embedder,
    near_duplicates,
    resolve_duplicates,
    _tokens,
)

from tests.synth import make_dedup_corpus, make_vocab, sentence


def make_record(instruction, output="out", source="s"):
    return QuestionRecord.create(instruction=instruction, output=output, source=source)


# --- embedding ---------------------------------------------------------------

def test_embed_deterministic():
    v1, v2 = embed("abc"), embed("abc")
    assert np.array_equal(v1, v2)


def test_embed_unit_norm():
    rng = random.Random(0)
    vocab = make_vocab(rng, 50)
    for _ in range(30):
        vec = embed(sentence(rng, vocab, (1, 12)))
        assert abs(np.linalg.norm(vec) - 1.0) <= 1e-9


def test_embed_empty_text_is_zero_vector():
    assert np.linalg.norm(embed("")) == 0.0
    assert np.linalg.norm(embed(" \t\n")) == 0.0


def test_disjoint_texts_have_cosine_zero():
    # no shared words and no shared character 3-grams (checked below via the
    # token sets), so the term-vector cosine is exactly zero
    a, b = "alpha beta", "gamma delta"
    assert not set(_tokens(a, 3)) & set(_tokens(b, 3))
    emb = LexicalEmbedder()
    assert cosine(emb.embed(a), emb.embed(b)) == 0.0

    # term-vector oracle over raw token counts, no hashing
    def term_vector_cosine(x, y):
        from collections import Counter
        cx, cy = Counter(_tokens(x, 3)), Counter(_tokens(y, 3))
        dot = sum(cx[t] * cy[t] for t in cx)
        nx = math.sqrt(sum(v * v for v in cx.values()))
        ny = math.sqrt(sum(v * v for v in cy.values()))
        return dot / (nx * ny)

    assert term_vector_cosine(a, b) == 0.0


def test_idf_weighting_uses_fitted_corpus():
    corpus = ["common alpha", "common beta", "common gamma"]
    emb = LexicalEmbedder().fit(corpus)
    unfit = LexicalEmbedder()
    # the shared word is down-weighted after fitting, so the two variants
    # look less similar than under uniform weights
    fitted = cosine(emb.embed("common alpha"), emb.embed("common beta"))
    uniform = cosine(unfit.embed("common alpha"), unfit.embed("common beta"))
    assert fitted < uniform


def test_embedder_spec_identity_and_validation():
    assert "builtin-lexical" in EmbedderSpec().identity
    with pytest.raises(ValueError):
        EmbedderSpec(kind="external-service")
    spec = EmbedderSpec(kind="external-service", endpoint="http://localhost:9")
    assert "localhost" in spec.identity
    assert make_embedder(spec).endpoint == "http://localhost:9"


def test_external_embedder_unreachable_raises_retryable():
    from platy.similarity import EmbeddingServiceError, ExternalEmbedder

    client = ExternalEmbedder("http://127.0.0.1:1/embed", timeout=0.2)
    with pytest.raises(EmbeddingServiceError) as err:
        client.embed_many(["x"], text_ids=["rec1"])
    assert err.value.retryable
    assert err.value.text_ids == ["rec1"]


# --- cosine -------------------------------------------------------------------

def test_cosine_identity():
    v = embed("some text here")
    assert cosine(v, v) == pytest.approx(1.0, abs=1e-12)


def test_cosine_orthonormal():
    v = np.zeros(8); v[0] = 1.0
    w = np.zeros(8); w[3] = 1.0
    assert cosine(v, w) == 0.0


def test_cosine_analytic_value():
    v = np.array([1.0, 1.0]) / math.sqrt(2)
    w = np.array([1.0, 0.0])
    assert cosine(v, w) == pytest.approx(1 / math.sqrt(2), abs=1e-9)
    assert f"{cosine(v, w):.8f}" == "0.70710678"


def test_cosine_symmetry_exact():
    rng = np.random.default_rng(5)
    for _ in range(20):
        v = rng.normal(size=64)
        w = rng.normal(size=64)
        v /= np.linalg.norm(v)
        w /= np.linalg.norm(w)
        assert cosine(v, w) == cosine(w, v)


def test_cosine_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        cosine(np.zeros(4), np.zeros(5))


# --- exact duplicates -----------------------------------------------------------

def test_exact_duplicates_collapse_case_and_whitespace():
    records = [make_record("a b"), make_record("A  b", output="x"), make_record("c")]
    groups = exact_duplicates(records)
    assert len(groups) == 1
    assert {r.id for r in groups[0]} == {records[0].id, records[1].id}


def test_exact_duplicates_all_distinct():
    records = [make_record(f"q{i}") for i in range(10)]
    assert exact_duplicates(records) == []


def test_exact_duplicates_match_hashmap_oracle():
    rng = random.Random(21)
    vocab = make_vocab(rng, 2000)
    texts = [sentence(rng, vocab) for _ in range(960)]
    clones = []
    for i in rng.sample(range(len(texts)), 40):
        clones.append(texts[i].upper() + "  ")
    all_texts = texts + clones
    rng.shuffle(all_texts)
    records = [make_record(t, output=f"o{i}") for i, t in enumerate(all_texts)]

    oracle: dict[str, list[str]] = {}
    for rec in records:
        oracle.setdefault(normalize_text(rec.instruction), []).append(rec.id)
    expected = {frozenset(ids) for ids in oracle.values() if len(ids) > 1}

    got = {frozenset(r.id for r in g) for g in exact_duplicates(records)}
    assert got == expected
    assert len(got) == 40


# --- near duplicates --------------------------------------------------------------

def test_identical_instructions_pair_at_one():
    records = [make_record("same question", output="a"), make_record("same question", output="b")]
    pairs = near_duplicates(records)
    assert len(pairs) == 1
    assert pairs[0].score == pytest.approx(1.0, abs=1e-12)


def test_threshold_one_yields_empty():
    records = [make_record(f"q{i} alpha beta") for i in range(5)]
    assert near_duplicates(records, threshold=1.0) == []


def test_near_duplicates_match_brute_force_oracle():
    records, _ = make_dedup_corpus(13, 200)
    got = near_duplicates(records, 0.80)

    # independent oracle: re-embed and scan all O(n^2) pairs with plain dots
    emb = LexicalEmbedder().fit(normalize_text(r.instruction) for r in records)
    vectors = {r.id: emb.embed(normalize_text(r.instruction)) for r in records}
    expected = {}
    for i in range(len(records)):
        for j in range(i + 1, len(records)):
            a, b = records[i].id, records[j].id
            score = float(np.dot(vectors[a], vectors[b]))
            if score > 0.80:
                expected[(min(a, b), max(a, b))] = score

    assert {(p.id_a, p.id_b) for p in got} == set(expected)
    for p in got:
        assert p.score == pytest.approx(expected[(p.id_a, p.id_b)], abs=1e-9)


def test_near_duplicates_monotone_in_threshold():
    records, _ = make_dedup_corpus(17, 120)
    loose = {(p.id_a, p.id_b) for p in near_duplicates(records, 0.80)}
    tight = {(p.id_a, p.id_b) for p in near_duplicates(records, 0.90)}
    assert tight <= loose


def test_near_duplicates_canonical_order_and_reproducible():
    records, _ = make_dedup_corpus(19, 150)
    first = near_duplicates(records)
    second = near_duplicates(records)
    assert first == second
    assert [(p.id_a, p.id_b) for p in first] == sorted((p.id_a, p.id_b) for p in first)
    assert all(p.id_a < p.id_b for p in first)


def test_similar_pair_rejects_unordered_ids():
    with pytest.raises(ValueError):
        SimilarPair("b", "a", 0.9)
    with pytest.raises(ValueError):
        SimilarPair("a", "a", 0.9)


def test_bad_threshold_rejected():
    with pytest.raises(ValueError):
        near_duplicates([make_record("x"), make_record("y")], threshold=0.0)


# --- resolve ------------------------------------------------------------------------

def test_verbose_answer_survives():
    short = make_record("the question", output="short")
    long = make_record("the question", output="a much longer detailed answer")
    result = resolve_duplicates([short, long], exact_duplicates([short, long]), [])
    assert result.survivors == [long]
    assert result.removed == [short]
    assert result.log[0].removed_id == short.id
    assert result.log[0].survivor_id == long.id


def test_equal_length_tie_breaks_on_smaller_id():
    a = make_record("the question", output="aaaa")
    b = make_record("the question", output="bbbb")
    result = resolve_duplicates([a, b], exact_duplicates([a, b]), [])
    survivor = min((a, b), key=lambda r: r.id)
    assert result.survivors == [survivor]


def test_chain_components_resolve_to_single_survivor():
    a = make_record("alpha beta gamma delta epsilon one", output="x" * 5)
    b = make_record("alpha beta gamma delta epsilon two", output="x" * 9)
    c = make_record("alpha beta gamma delta epsilon three", output="x" * 7)
    pairs = [
        SimilarPair(*sorted((a.id, b.id)), score=0.95),
        SimilarPair(*sorted((b.id, c.id)), score=0.95),
    ]
    result = resolve_duplicates([a, b, c], [], pairs)
    assert result.survivors == [b]  # longest output in the union-found component
    assert {r.id for r in result.removed} == {a.id, c.id}
    assert all(e.survivor_id == b.id for e in result.log)


def test_resolve_never_touches_unflagged_records():
    records, _ = make_dedup_corpus(23, 150)
    groups = exact_duplicates(records)
    pairs = near_duplicates(records)
    members = {r.id for g in groups for r in g} | {
        i for p in pairs for i in (p.id_a, p.id_b)
    }
    result = resolve_duplicates(records, groups, pairs)
    assert {r.id for r in result.removed} <= members
    assert len(result.survivors) + len(result.removed) == len(records)
    assert len(result.log) == len(result.removed)


def test_resolve_keeps_longest_output_per_planted_component():
    records, components = make_dedup_corpus(29, 300)
    result = resolve_duplicates(
        records, exact_duplicates(records), near_duplicates(records)
    )
    by_id = {r.id: r for r in records}
    survivor_ids = {r.id for r in result.survivors}
    for comp in components:
        expected = min(
            comp, key=lambda rid: (-len(normalize_text(by_id[rid].output)), rid)
        )
        assert comp & survivor_ids == {expected}
