from __future__ import annotations

import pytest
from hypothesis import given, settings

from topqa.synthetic import TreeSpec
from topqa.tree import (EmptyNode, IllegalNesting, InvalidLabel, NodeKind, RootNotIntent,
                        TrailingInput, TreeParseError, UnbalancedBrackets, bracket_tokens,
                        compute_stats, intent, parse_linearized, slot, to_decoupled, tree_depth)

from conftest import FIG1_TREE, bracket_depth, trees


def test_fig1_parses(fig1):
    assert fig1.root.kind is NodeKind.INTENT
    assert fig1.root.label == "IN:GET_DIRECTIONS"
    assert fig1.root.text() == "Look up directions to the nearest parking near S Beritania Street"


def test_fig1_depth_is_six(fig1):
    stats = compute_stats(fig1)
    assert stats.depth == 6 == bracket_depth(FIG1_TREE)
    assert not stats.is_flat
    assert stats.length == 11


def test_decoupled_fig1(fig1):
    d = to_decoupled(fig1)
    assert d.serialize() == (
        "[IN:GET_DIRECTIONS [SL:DESTINATION [IN:GET_LOCATION [SL:LOCATION_MODIFIER nearest] "
        "[SL:CATEGORY_LOCATION parking] [SL:LOCATION_MODIFIER [IN:GET_LOCATION "
        "[SL:SEARCH_RADIUS near] [SL:LOCATION S Beritania Street]]]]]]")


def test_serialize_minimal():
    assert parse_linearized("[IN:X ]").serialize() == "[IN:X ]"
    assert parse_linearized("[IN:X [SL:A nearest]]").serialize() == "[IN:X [SL:A nearest]]"


@pytest.mark.parametrize("text,error", [
    ("", EmptyNode),
    ("[IN:X", UnbalancedBrackets),
    ("[IN:X ]]", UnbalancedBrackets),
    ("[SL:X a]", RootNotIntent),
    ("hello", RootNotIntent),
    ("[IN:X [IN:Y a]]", IllegalNesting),
    ("[IN:X [SL:A [SL:B a]]]", IllegalNesting),
    ("[IN:X [FOO a]]", InvalidLabel),
    ("[IN:X [SL: a]]", InvalidLabel),
    ("[IN:X [SL:A ]]", EmptyNode),
    ("[IN:X ] [IN:Y ]", TrailingInput),
    ("[IN:X ] extra", TrailingInput),
    ("[ ]", EmptyNode),
])
def test_malformed_inputs(text, error):
    with pytest.raises(error):
        parse_linearized(text)
    assert issubclass(error, TreeParseError)


def test_lenient_mode_accepts_unprefixed_labels():
    t = parse_linearized("[ORDER [PIZZAORDER [NUMBER two ] ] ]", strict=False)
    assert t.root.kind is NodeKind.INTENT
    assert t.root.children[0].kind is NodeKind.SLOT
    assert t.root.children[0].children[0].kind is NodeKind.SLOT


def test_flat_boundary():
    assert compute_stats(parse_linearized("[IN:X a b]")).depth == 1
    flat = parse_linearized("[IN:X [SL:A a] [SL:B b]]")
    assert compute_stats(flat).is_flat
    nested = parse_linearized("[IN:X [SL:A [IN:Y a]]]")
    assert compute_stats(nested).depth == 3 and not compute_stats(nested).is_flat


def test_builders_match_parser():
    built = intent("IN:X", "go to", slot("SL:A", "the park"))
    assert built == parse_linearized("[IN:X go to [SL:A the park]]").root


@settings(max_examples=150, deadline=None)
@given(trees())
def test_parse_serialize_identity(tree):
    text = tree.serialize()
    again = parse_linearized(text, tree.utterance, tree.domain)
    assert again == tree
    assert again.serialize() == text


@settings(max_examples=150, deadline=None)
@given(trees())
def test_depth_matches_bracket_oracle(tree):
    assert tree_depth(tree.root) == bracket_depth(tree.serialize())


@settings(max_examples=100, deadline=None)
@given(trees())
def test_decoupling_keeps_only_leaf_slot_tokens(tree):
    d = to_decoupled(tree).root
    for node in d.walk():
        if node.is_token:
            continue
        if node.kind is NodeKind.INTENT or not node.is_leaf_slot():
            assert not node.token_children()
    assert to_decoupled(to_decoupled(tree)) == to_decoupled(tree)
    assert compute_stats(to_decoupled(tree)).depth == compute_stats(tree).depth


@settings(max_examples=100, deadline=None)
@given(trees(TreeSpec(min_depth=1, max_depth=2)))
def test_shallow_trees_are_flat(tree):
    assert compute_stats(tree).is_flat


def test_whitespace_insensitive():
    a = parse_linearized("[IN:X   [SL:A  a   b ]  ]")
    b = parse_linearized("[IN:X [SL:A a b]]")
    assert a == b
    assert bracket_tokens("[IN:X [SL:A a b]]") == ["[", "IN:X", "[", "SL:A", "a", "b", "]", "]"]
