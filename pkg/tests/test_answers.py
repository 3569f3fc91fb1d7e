from __future__ import annotations

import pytest
from hypothesis import given, settings

from topqa.answers import (ReconstructionError, ReconstructionReason, parse_multiturn_answers,
                           parse_singleturn_answer)
from topqa.generation import QaKind, generate_multiturn, generate_singleturn
from topqa.metrics import unordered_em
from topqa.ontology import extract_ontology
from topqa.tree import to_decoupled

from conftest import brute_equal, trees


def _mt(tree, ontology, lexicon=None):
    return [(i, i.answer) for i in generate_multiturn(tree, ontology, lexicon, record_id="r")]


def test_fig2_singleturn_reparses(fig1, nav_schema, nav_lexicon, fig2_golden):
    for key in ("answer", "answer_as_printed"):
        tree = parse_singleturn_answer(fig2_golden["singleturn"][key], fig1.utterance,
                                       nav_schema, nav_lexicon)
        assert brute_equal(tree.root, to_decoupled(fig1).root)


def test_fig1_multiturn_reparses(fig1, nav_schema, nav_lexicon):
    tree = parse_multiturn_answers(_mt(fig1, nav_schema, nav_lexicon), nav_schema, nav_lexicon)
    assert brute_equal(tree.root, to_decoupled(fig1).root)


def _reason(fn):
    with pytest.raises(ReconstructionError) as info:
        fn()
    return info.value.reason


def test_invalid_root_intent(fig1):
    o = extract_ontology([fig1])
    turns = _mt(fig1, o)
    turns[0] = (turns[0][0], "order a pizza")
    assert _reason(lambda: parse_multiturn_answers(turns, o)) is ReconstructionReason.INVALID_ENTITY


def test_unlocatable_value(fig1):
    o = extract_ontology([fig1])
    turns = _mt(fig1, o)
    idx = next(i for i, (inst, _) in enumerate(turns) if inst.kind is QaKind.SLOT_VALUE)
    turns[idx] = (turns[idx][0], "the moon")
    reason = _reason(lambda: parse_multiturn_answers(turns, o))
    assert reason is ReconstructionReason.UNLOCATABLE_SUBUTTERANCE


def test_announced_slot_never_filled(fig1):
    o = extract_ontology([fig1])
    turns = _mt(fig1, o)[:-1]  # last turn fills a leaf slot announced earlier
    reason = _reason(lambda: parse_multiturn_answers(turns, o))
    assert reason is ReconstructionReason.CONTRADICTORY_ANSWERS


def test_error_carries_turn(fig1):
    o = extract_ontology([fig1])
    turns = _mt(fig1, o)
    turns[1] = (turns[1][0], "destination, warp drive")
    with pytest.raises(ReconstructionError) as info:
        parse_multiturn_answers(turns, o)
    assert info.value.turn == 1


@pytest.mark.parametrize("answer,reason", [
    ("", ReconstructionReason.MALFORMED_ANSWER),
    ("hello", ReconstructionReason.MALFORMED_ANSWER),
    ("The user intended to fly to mars.", ReconstructionReason.INVALID_ENTITY),
    ("The user intended to get directions, where destination is the moon.",
     ReconstructionReason.UNLOCATABLE_SUBUTTERANCE),
])
def test_singleturn_errors(fig1, answer, reason):
    o = extract_ontology([fig1])
    assert _reason(lambda: parse_singleturn_answer(answer, fig1.utterance, o)) is reason


def test_singleturn_case_insensitive_labels(fig1):
    o = extract_ontology([fig1])
    answer = generate_singleturn(fig1, o).answer.replace("get directions", "Get Directions")
    assert unordered_em(parse_singleturn_answer(answer, fig1.utterance, o), fig1)


@settings(max_examples=150, deadline=None)
@given(trees())
def test_singleturn_round_trip(tree):
    o = extract_ontology([tree])
    answer = generate_singleturn(tree, o).answer
    rebuilt = parse_singleturn_answer(answer, tree.utterance, o)
    assert brute_equal(rebuilt.root, to_decoupled(tree).root)


@settings(max_examples=150, deadline=None)
@given(trees())
def test_multiturn_round_trip(tree):
    o = extract_ontology([tree])
    rebuilt = parse_multiturn_answers(_mt(tree, o), o)
    assert brute_equal(rebuilt.root, to_decoupled(tree).root)
