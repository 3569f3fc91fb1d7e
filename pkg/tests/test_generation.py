from __future__ import annotations

import pytest
from hypothesis import given, settings

from topqa.generation import (LabelNotInOntology, NoTemplateForKind, PathStep, QaInstance,
                              QaKind, QaOptions, build_question, generate_multiturn,
                              generate_singleturn, join_and, join_or, to_msp)
from topqa.ontology import Lexicon, Ontology, extract_ontology
from topqa.tree import parse_linearized

from conftest import expected_question_count, msp_violations, trees


def test_fig2_multiturn_prefix(fig1, nav_schema, nav_lexicon, fig2_golden):
    mt = generate_multiturn(fig1, nav_schema, nav_lexicon, record_id="r")
    for inst, gold in zip(mt, fig2_golden["multiturn"]):
        assert inst.kind.value == gold["kind"]
        assert inst.question == gold["question"]
        assert inst.answer == gold["answer"]
        assert inst.metadata_context == gold["metadata"]
        assert inst.state_context == gold["state"]


def test_fig2_singleturn(fig1, nav_schema, nav_lexicon, fig2_golden):
    st_gold = fig2_golden["singleturn"]
    inst = generate_singleturn(fig1, nav_schema, nav_lexicon)
    assert inst.answer == st_gold["answer"]
    assert inst.question.endswith(st_gold["question_tail"])
    assert inst.metadata_context.startswith(st_gold["metadata_head"])
    assert st_gold["metadata_middle"] in inst.metadata_context


def test_fig1_question_sequence(fig1):
    o = extract_ontology([fig1])
    mt = generate_multiturn(fig1, o, record_id="r")
    assert [i.kind for i in mt] == [
        QaKind.ROOT_INTENT, QaKind.SLOTS, QaKind.SLOT_VALUE, QaKind.NESTED_INTENT,
        QaKind.SLOTS, QaKind.SLOT_VALUE, QaKind.NESTED_INTENT, QaKind.NESTED_INTENT,
        QaKind.SLOTS, QaKind.SLOT_VALUE, QaKind.SLOT_VALUE, QaKind.SLOT_VALUE]
    assert [i.turn for i in mt] == list(range(12))
    assert mt[5].answer == "nearest; near S Beritania Street"
    assert mt[6].answer == "none" and mt[7].answer == "get location"
    assert len({i.id for i in mt}) == len(mt)
    assert all(i.id.startswith("r:") for i in mt)


def test_answers_use_full_text_and_slot_order(fig1):
    o = extract_ontology([fig1])
    mt = generate_multiturn(fig1, o)
    slots = [i.answer for i in mt if i.kind is QaKind.SLOTS]
    assert slots == ["destination", "location modifier, category location", "search radius, location"]


def test_missing_label_raises(fig1):
    with pytest.raises(LabelNotInOntology):
        generate_multiturn(fig1, Ontology(intents=("IN:GET_DIRECTIONS",)))


def test_root_without_slots_in_ontology():
    t = parse_linearized("[IN:UNSUPPORTED hello there]", "hello there")
    mt = generate_multiturn(t, extract_ontology([t]))
    assert len(mt) == 1 and mt[0].answer == "unsupported"


def test_join_rules():
    assert join_or(["a"]) == "a"
    assert join_or(["a", "b"]) == "a or b"
    assert join_and(["a", "b", "c"]) == "a, b, and c"


def test_ablation_flags_only_drop_their_sentences(fig1, nav_schema, nav_lexicon):
    full = generate_multiturn(fig1, nav_schema, nav_lexicon)
    no_meta = generate_multiturn(fig1, nav_schema, nav_lexicon, QaOptions(metadata=False))
    no_state = generate_multiturn(fig1, nav_schema, nav_lexicon, QaOptions(state=False))
    for f, m, s in zip(full, no_meta, no_state):
        assert m.question == f.question.replace(f.metadata_context + " ", "", 1) if f.metadata_context else m.question == f.question
        expected = f.question.replace(" " + f.state_context, "", 1) if f.state_context else f.question
        assert s.question == expected
        assert (m.answer, s.answer) == (f.answer, f.answer)


def test_custom_quotes(fig1):
    o = extract_ontology([fig1])
    opts = QaOptions(open_quote='"', close_quote='"')
    q = generate_multiturn(fig1, o, options=opts)[0].question
    assert f'"{fig1.utterance}"' in q and "``" not in q


def test_force_nested_asks_everywhere(fig1):
    o = extract_ontology([fig1])
    n_default = len(generate_multiturn(fig1, o))
    n_forced = len(generate_multiturn(fig1, o, options=QaOptions(force_nested=True)))
    assert n_forced == expected_question_count(fig1.root, o, force_nested=True)
    assert n_forced > n_default


def test_msp_form(fig1, nav_schema, nav_lexicon):
    mt = [to_msp(i, "<mask>") for i in generate_multiturn(fig1, nav_schema, nav_lexicon)]
    assert mt[0].masked_declarative.endswith("The user's intent is to <mask>.")
    assert mt[1].masked_declarative.endswith("The user's intent is to get directions, and the slot is <mask>.")
    assert mt[3].masked_declarative.endswith(
        "The intent included in ``the nearest parking near S Beritania Street'' is <mask>.")
    assert msp_violations(generate_multiturn(fig1, nav_schema, nav_lexicon)) == []


def test_msp_requires_template():
    bare = QaInstance(id="x", turn=0, kind=QaKind.ROOT_INTENT, utterance="u", question="q")
    with pytest.raises(NoTemplateForKind):
        to_msp(bare)


def test_build_question_matches_generation(fig1, nav_schema, nav_lexicon):
    mt = generate_multiturn(fig1, nav_schema, nav_lexicon, record_id="r")
    for inst in mt:
        rebuilt = build_question(inst.kind, inst.target_path, fig1.utterance, nav_schema,
                                 nav_lexicon, record_id="r", domain=fig1.domain, key=inst.key,
                                 turn=inst.turn)
        assert rebuilt.with_answer(inst.answer) == inst


def test_target_path_for_nested(fig1, nav_schema, nav_lexicon):
    nested = [i for i in generate_multiturn(fig1, nav_schema, nav_lexicon)
              if i.kind is QaKind.NESTED_INTENT]
    assert nested[0].target_path == (
        PathStep("Intent", "IN:GET_DIRECTIONS"),
        PathStep("Slot", "SL:DESTINATION", "the nearest parking near S Beritania Street", 0))


@settings(max_examples=150, deadline=None)
@given(trees())
def test_question_count_matches_rules(tree):
    o = extract_ontology([tree])
    mt = generate_multiturn(tree, o)
    assert len(mt) == expected_question_count(tree.root, o)
    assert [i.key for i in mt] == sorted(i.key for i in mt)


@settings(max_examples=100, deadline=None)
@given(trees())
def test_msp_invariant_random(tree):
    o = extract_ontology([tree])
    assert msp_violations(generate_multiturn(tree, o, Lexicon())) == []


@settings(max_examples=100, deadline=None)
@given(trees())
def test_singleturn_has_one_question(tree):
    o = extract_ontology([tree])
    inst = to_msp(generate_singleturn(tree, o))
    assert inst.masked_declarative.count("[MASK]") == 1
    assert inst.answer.startswith("The user intended to ")
