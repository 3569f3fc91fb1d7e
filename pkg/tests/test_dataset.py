from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topqa.dataset import (IoError, SchemaViolation, corpus_stats, dumps_instance,
                           instance_from_json, instance_to_json, label_coverage, loads_qa_jsonl,
                           read_qa_jsonl, read_tsv, render_stats, sample_spis, write_qa_jsonl,
                           write_tsv)
from topqa.generation import generate_multiturn, generate_singleturn, to_msp
from topqa.ontology import extract_ontology
from topqa.synthetic import TreeSpec, random_corpus
from topqa.tree import parse_linearized

from conftest import FIXTURES, bracket_depth, expected_question_count, trees


def test_read_fig1():
    result = read_tsv(FIXTURES / "fig1.tsv")
    assert len(result) == 1 and not result.rejects
    assert result.records[0].domain == "navigation"
    assert result.records[0].record_id == "navigation-1"
    assert result.trees[0].utterance.startswith("Look up directions")


def test_read_empty_and_missing(tmp_path):
    empty = tmp_path / "empty.tsv"
    empty.write_text("", encoding="utf-8")
    assert len(read_tsv(empty)) == 0
    with pytest.raises(IoError):
        read_tsv(tmp_path / "absent.tsv")


def test_rejects_keep_line_numbers(tmp_path):
    path = tmp_path / "mixed.tsv"
    path.write_text(
        "domain\tutterance\tsemantic_parse\n"
        "d\thi there\t[IN:GREET hi there ]\n"
        "d\tbroken\t[IN:GREET broken\n"
        "d\ttwo columns only\n"
        "d\tbye\t[IN:BYE bye ]\n", encoding="utf-8")
    result = read_tsv(path)
    assert [r.line for r in result.records] == [2, 5]
    assert [(r.line, r.reason) for r in result.rejects] == [
        (3, "UnbalancedBrackets"), (4, "ColumnCountMismatch")]


def test_tsv_write_read_round_trip(tmp_path):
    corpus = random_corpus(50, seed=3)
    path = tmp_path / "out.tsv"
    write_tsv(corpus, path, header=True)
    back = read_tsv(path)
    assert [t.serialize() for t in back.trees] == [t.serialize() for t in corpus]
    assert [t.utterance for t in back.trees] == [t.utterance for t in corpus]


def test_fig2_jsonl_lossless(tmp_path, fig1, nav_schema, nav_lexicon):
    insts = [to_msp(i) for i in generate_multiturn(fig1, nav_schema, nav_lexicon, record_id="r")]
    insts.append(to_msp(generate_singleturn(fig1, nav_schema, nav_lexicon, record_id="r")))
    path = tmp_path / "qa.jsonl"
    write_qa_jsonl(insts, path)
    assert read_qa_jsonl(path) == insts
    first = json.loads(path.read_text(encoding="utf-8").splitlines()[0])
    assert list(first)[:10] == ["id", "record_id", "domain", "turn", "kind", "utterance",
                                "context", "question", "answer", "masked_question"]


def test_empty_jsonl(tmp_path):
    path = tmp_path / "qa.jsonl"
    write_qa_jsonl([], path)
    assert path.read_text(encoding="utf-8") == ""
    assert read_qa_jsonl(path) == []


@pytest.mark.parametrize("mutate", [
    lambda o: o.pop("question"),
    lambda o: o.update(turn="three"),
    lambda o: o.update(kind="Riddle"),
    lambda o: o.update(target_path=[{"kind": "Slot"}]),
])
def test_schema_violations(fig1, mutate):
    o = extract_ontology([fig1])
    obj = instance_to_json(generate_multiturn(fig1, o)[1])
    mutate(obj)
    with pytest.raises(SchemaViolation):
        instance_from_json(obj)


def test_bad_json_line():
    with pytest.raises(SchemaViolation):
        loads_qa_jsonl("{not json}\n")


def test_jsonl_byte_stability_1000():
    rng = random.Random(11)
    insts = []
    for tree in random_corpus(120, seed=11):
        o = extract_ontology([tree])
        insts.extend(generate_multiturn(tree, o, record_id=f"t{len(insts)}"))
        insts.append(generate_singleturn(tree, o, record_id=f"s{len(insts)}"))
    insts = [to_msp(i) if rng.random() < 0.5 else i for i in insts][:1000]
    assert len(insts) == 1000
    text = "".join(dumps_instance(i) + "\n" for i in insts)
    back = loads_qa_jsonl(text)
    assert back == insts
    assert "".join(dumps_instance(i) + "\n" for i in back) == text


@settings(max_examples=50, deadline=None)
@given(trees(), st.text(min_size=1, max_size=12))
def test_jsonl_round_trip_random(tree, rid):
    o = extract_ontology([tree])
    for inst in generate_multiturn(tree, o, record_id=rid):
        line = dumps_instance(inst)
        assert "\n" not in line
        assert loads_qa_jsonl(line + "\n") == [inst]


def test_spis_coverage_and_determinism():
    corpus = random_corpus(400, seed=2, spec=TreeSpec(n_intents=6, n_slots=8, max_depth=5))
    available = label_coverage(corpus)
    for k in (1, 2, 5):
        sample = sample_spis(corpus, k, seed=4)
        got = label_coverage(sample)
        assert all(got[l] >= min(k, n) for l, n in available.items())
        assert sample == sample_spis(corpus, k, seed=4)
        positions = [corpus.index(t) for t in sample]
        assert positions == sorted(positions)
        assert len(sample) < len(corpus)
    assert sample_spis(corpus[:3], 10) == corpus[:3]
    with pytest.raises(ValueError):
        sample_spis(corpus, 0)


def test_fig1_stats(fig1):
    (row,) = corpus_stats([fig1])
    assert (row.n, row.flat_pct, row.mean_depth, row.questions_per_instance) == (1, 0.0, 6.0, 12.0)
    assert (row.n_intents, row.n_slots) == (2, 5)
    assert render_stats([row]).splitlines()[1].startswith("navigation\t1\t2\t5\t0.00\t6.00")


def test_all_flat_domain():
    corpus = [parse_linearized("[IN:A x [SL:B y ] ]", "x y", "flat"),
              parse_linearized("[IN:C z ]", "z", "flat")]
    (row,) = corpus_stats(corpus)
    assert row.flat_pct == 100.0


def test_stats_brute_recount():
    corpus = random_corpus(300, seed=8)
    for i, t in enumerate(corpus):
        object.__setattr__(t, "domain", "ab"[i % 2])
    rows = {r.domain: r for r in corpus_stats(corpus)}
    for dom in "ab":
        part = [t for t in corpus if t.domain == dom]
        depths = [bracket_depth(t.serialize()) for t in part]
        o = extract_ontology(part)
        row = rows[dom]
        assert row.n == len(part)
        assert abs(row.mean_depth - sum(depths) / len(part)) < 1e-9
        assert abs(row.flat_pct - 100 * sum(d <= 2 for d in depths) / len(part)) < 1e-9
        q = sum(expected_question_count(t.root, o) for t in part)
        assert abs(row.questions_per_instance - q / len(part)) < 1e-9
