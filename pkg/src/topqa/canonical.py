"""Closed-world canonical paraphrases for order trees, and Pizza-style QA.

A grammar is a JSON document.  Each order type (and each composite slot)
is a list of template items, rendered left to right and joined by spaces:

* ``{"text": "pizza"}`` is a literal that always appears;
* ``{"slot": "STYLE", "format": "in the {} style", "repeat": true}`` renders
  the values of every ``STYLE`` child, joined by ``list_separator``, into the
  ``{}`` hole.  The item is dropped when the slot is absent unless
  ``"mandatory": true``.

``vocab`` lists the closed set of surface values per slot; parsing relies
on it to find boundaries between adjacent slots.  Slots named under
``composites`` hold further slots instead of text.
"""
from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field, replace
from functools import cached_property
from importlib import resources
from typing import Iterable, Mapping, Sequence

from .answers import ReconstructionError, ReconstructionReason
from .generation import (NONE_ANSWER, PathStep, QaInstance, QaKind, QaOptions,
                         make_id)
from .tree import NodeKind, ParseTree, TreeNode, normalize_text, slot

ST_HEAD = "The user ordered "


class GrammarError(ValueError):
    pass


class UnknownOrderType(GrammarError):
    pass


class MissingMandatorySlot(GrammarError):
    pass


class DuplicateSlot(GrammarError):
    pass


class UnknownSlot(GrammarError):
    pass


class OutOfVocabulary(GrammarError):
    pass


class NotInCanonicalFragment(GrammarError):
    pass


@dataclass(frozen=True)
class TemplateItem:
    slot: str | None = None
    text: str | None = None
    format: str = "{}"
    mandatory: bool = False
    repeat: bool = False

    @classmethod
    def from_json(cls, data: Mapping) -> TemplateItem:
        item = cls(slot=data.get("slot"), text=data.get("text"), format=data.get("format", "{}"),
                   mandatory=bool(data.get("mandatory", False)),
                   repeat=bool(data.get("repeat", False)))
        if (item.slot is None) == (item.text is None):
            raise GrammarError(f"template item needs exactly one of slot/text: {dict(data)}")
        if item.slot is not None and item.format.count("{}") != 1:
            raise GrammarError(f"format {item.format!r} needs one '{{}}' hole")
        return item


@dataclass(frozen=True)
class CanonicalGrammar:
    root: str = "ORDER"
    prefix: str = "I want"
    order_separator: str = "; "
    list_separator: str = "; "
    orders: Mapping[str, tuple[TemplateItem, ...]] = field(default_factory=dict)
    composites: Mapping[str, tuple[TemplateItem, ...]] = field(default_factory=dict)
    vocab: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        for label, items in self.composites.items():
            if any(i.repeat for i in items):
                raise GrammarError(f"composite {label} may not repeat inner slots")

    @classmethod
    def from_json(cls, data: Mapping) -> CanonicalGrammar:
        def items(seq):
            return tuple(TemplateItem.from_json(d) for d in seq)
        return cls(
            root=data.get("root", "ORDER"),
            prefix=data.get("prefix", "I want"),
            order_separator=data.get("order_separator", "; "),
            list_separator=data.get("list_separator", "; "),
            orders={k: items(v) for k, v in data.get("orders", {}).items()},
            composites={k: items(v) for k, v in data.get("composites", {}).items()},
            vocab={k: tuple(v) for k, v in data.get("vocab", {}).items()},
        )

    def template(self, label: str) -> tuple[TemplateItem, ...]:
        if label in self.orders:
            return self.orders[label]
        return self.composites[label]

    @cached_property
    def _patterns(self) -> dict[str, re.Pattern]:
        return {label: re.compile(_template_regex(self, label, capture=True))
                for label in list(self.orders) + list(self.composites)}

    def pattern(self, label: str) -> re.Pattern:
        return self._patterns[label]


def load_grammar(path: str | os.PathLike | None = None) -> CanonicalGrammar:
    """Load a grammar file; without a path, the bundled Pizza grammar."""
    if path is None:
        text = resources.files("topqa").joinpath("data/pizza_grammar.json").read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return CanonicalGrammar.from_json(json.loads(text))


# -- rendering ------------------------------------------------------------------

def render_canonical(node: TreeNode, grammar: CanonicalGrammar) -> str:
    """Render one order (or composite) subtree with its template."""
    if node.label not in grammar.orders and node.label not in grammar.composites:
        raise UnknownOrderType(node.label)
    items = grammar.template(node.label)
    known = {i.slot for i in items if i.slot}
    by_label: dict[str, list[TreeNode]] = {}
    for child in node.labeled_children():
        if child.label not in known:
            raise UnknownSlot(f"{child.label} has no place in a {node.label}")
        by_label.setdefault(child.label, []).append(child)

    words: list[str] = []
    for item in items:
        if item.text is not None:
            words.append(item.text)
            continue
        values = by_label.get(item.slot, [])
        if not values:
            if item.mandatory:
                raise MissingMandatorySlot(f"{node.label} needs {item.slot}")
            continue
        if len(values) > 1 and not item.repeat:
            raise DuplicateSlot(f"{node.label} has {len(values)} {item.slot} slots")
        rendered = [_render_value(v, grammar) for v in values]
        words.append(item.format.replace("{}", grammar.list_separator.join(rendered)))
    return " ".join(words)


def _render_value(node: TreeNode, grammar: CanonicalGrammar) -> str:
    if node.label in grammar.composites:
        return render_canonical(node, grammar)
    text = normalize_text(node.text())
    vocab = grammar.vocab.get(node.label)
    if vocab is not None and text not in vocab:
        raise OutOfVocabulary(f"{text!r} is not a known {node.label}")
    if not text:
        raise MissingMandatorySlot(f"{node.label} has no text")
    return text


def orders_of(tree: ParseTree | TreeNode, grammar: CanonicalGrammar) -> list[TreeNode]:
    root = tree.root if isinstance(tree, ParseTree) else tree
    if root.label != grammar.root:
        raise UnknownOrderType(f"root {root.label} is not {grammar.root}")
    return root.labeled_children()


def render_canonical_utterance(tree: ParseTree | TreeNode, grammar: CanonicalGrammar) -> str:
    parts = [render_canonical(o, grammar) for o in orders_of(tree, grammar)]
    return (grammar.prefix + " " + grammar.order_separator.join(parts)).strip()


# -- parsing ----------------------------------------------------------------------

def _value_regex(grammar: CanonicalGrammar, label: str) -> str:
    if label in grammar.composites:
        return "(?:" + _template_regex(grammar, label, capture=False) + ")"
    vocab = grammar.vocab.get(label)
    if vocab is None:
        return r"(?:[^\s;]+(?: [^\s;]+)*?)"
    alts = sorted(vocab, key=len, reverse=True)
    return "(?:" + "|".join(re.escape(v) for v in alts) + ")"


def _template_regex(grammar: CanonicalGrammar, label: str, capture: bool) -> str:
    # Every item is matched with a leading space; callers prepend one.  A
    # composite value brings its own leading space, so the space before it
    # (and after a list separator) is dropped.
    out = []
    for n, item in enumerate(grammar.template(label)):
        if item.text is not None:
            out.append(" " + re.escape(item.text))
            continue
        value = _value_regex(grammar, item.slot)
        before, after = item.format.split("{}")
        sep = grammar.list_separator
        if item.slot in grammar.composites:
            sep, lead = sep.rstrip(), (" " + before.rstrip() if before.strip() else "")
        else:
            lead = " " + before
        listed = value + (f"(?:{re.escape(sep)}{value})*" if item.repeat else "")
        group = f"(?P<g{n}>{listed})" if capture else f"(?:{listed})"
        part = re.escape(lead) + group + re.escape(after)
        out.append(part if item.mandatory else f"(?:{part})?")
    return "".join(out)


def _parse_template(text: str, label: str, grammar: CanonicalGrammar) -> TreeNode:
    m = grammar.pattern(label).fullmatch(" " + text)
    if m is None:
        raise NotInCanonicalFragment(f"{text!r} is not a canonical {label}")
    children: list[TreeNode] = []
    for n, item in enumerate(grammar.template(label)):
        if item.slot is None or m.group(f"g{n}") is None:
            continue
        raw = m.group(f"g{n}")
        if item.slot in grammar.composites:
            values = raw.split(grammar.list_separator.rstrip()) if item.repeat else [raw]
            children.extend(_parse_template(v.strip(), item.slot, grammar) for v in values)
        else:
            values = raw.split(grammar.list_separator) if item.repeat else [raw]
            children.extend(slot(item.slot, v) for v in values)
    return TreeNode(NodeKind.SLOT, label, tuple(children))


def parse_canonical(text: str, grammar: CanonicalGrammar, order_type: str | None = None) -> TreeNode:
    """Invert :func:`render_canonical` for one order."""
    text = normalize_text(text)
    if not text:
        raise NotInCanonicalFragment("empty text")
    candidates = [order_type] if order_type else list(grammar.orders)
    for label in candidates:
        if label not in grammar.orders:
            raise UnknownOrderType(label)
        try:
            node = _parse_template(text, label, grammar)
        except NotInCanonicalFragment:
            continue
        if render_canonical(node, grammar) == text:
            return node
    raise NotInCanonicalFragment(f"{text!r} matches no order template")


def split_orders(text: str, grammar: CanonicalGrammar) -> list[TreeNode]:
    """Split a ``separator``-joined list of orders.

    The order separator may also occur inside an order (topping lists), so
    the split is found by dynamic programming over the separator positions.
    """
    pieces = text.split(grammar.order_separator)
    n = len(pieces)
    best: list[list[TreeNode] | None] = [None] * (n + 1)
    best[0] = []
    for end in range(1, n + 1):
        for start in range(end - 1, -1, -1):
            if best[start] is None:
                continue
            try:
                node = parse_canonical(grammar.order_separator.join(pieces[start:end]), grammar)
            except NotInCanonicalFragment:
                continue
            best[end] = best[start] + [node]
            break
    if best[n] is None:
        raise NotInCanonicalFragment(f"{text!r} does not split into orders")
    return best[n]


def parse_canonical_utterance(text: str, grammar: CanonicalGrammar) -> ParseTree:
    text = normalize_text(text)
    head = grammar.prefix + " "
    if text == grammar.prefix:
        return ParseTree(TreeNode(NodeKind.INTENT, grammar.root, ()))
    if not text.startswith(head):
        raise NotInCanonicalFragment(f"expected {grammar.prefix!r} at the start")
    orders = split_orders(text[len(head):], grammar)
    return ParseTree(TreeNode(NodeKind.INTENT, grammar.root, tuple(orders)))


# -- QA ------------------------------------------------------------------------------

def _said(utterance: str, options: QaOptions) -> str:
    return f"A user said: {options.quote(utterance)}"


def build_pizza_question(utterance: str, previous: Sequence[str], index: int,
                         options: QaOptions = QaOptions(), *, record_id: str = "",
                         domain: str = "") -> QaInstance:
    """The MT question asking for the order after ``previous``."""
    said = _said(utterance, options)
    addition = " in addition to " + " and ".join(previous) if previous and options.state else ""
    return QaInstance(
        id=make_id(record_id, (index,)),
        turn=index,
        kind=QaKind.ORDER,
        utterance=utterance,
        question=f"{said} What order did the user place{addition}?",
        context=said,
        state_context=addition.strip(),
        decl_prefix=f"{said} {ST_HEAD}",
        decl_suffix=addition + ".",
        record_id=record_id,
        domain=domain,
        key=(index,),
    )


def generate_pizza_qa(tree: ParseTree, grammar: CanonicalGrammar, mode: str = "mt",
                      options: QaOptions = QaOptions(), record_id: str = "") -> list[QaInstance]:
    """MT: one question per order plus a final one answered ``none``.

    ST: a single question whose answer lists every order.  Its declarative
    form masks only the list, leaving ``The user ordered`` in place.
    """
    orders = orders_of(tree, grammar)
    rendered = [render_canonical(o, grammar) for o in orders]
    if mode == "st":
        said = _said(tree.utterance, options)
        answer = ST_HEAD + ("; ".join(rendered) if rendered else NONE_ANSWER)
        return [QaInstance(
            id=make_id(record_id, (0,)), turn=0, kind=QaKind.SINGLE_TURN,
            utterance=tree.utterance, question=f"{said} What orders did the user place?",
            answer=answer, context=said, decl_prefix=f"{said} {ST_HEAD}", decl_suffix=".",
            record_id=record_id, domain=tree.domain, key=(0,))]
    if mode != "mt":
        raise ValueError(f"unknown mode {mode!r}")
    out = []
    for k in range(len(rendered) + 1):
        inst = build_pizza_question(tree.utterance, rendered[:k], k, options,
                                    record_id=record_id, domain=tree.domain)
        if k < len(rendered):
            step = PathStep(NodeKind.SLOT.value, orders[k].label, rendered[k], k)
            inst = replace(inst, answer=rendered[k], target_path=(step,))
        else:
            inst = inst.with_answer(NONE_ANSWER)
        out.append(inst)
    return out


def _order_or_error(text: str, grammar: CanonicalGrammar, turn: int | None) -> TreeNode:
    try:
        return parse_canonical(text, grammar)
    except GrammarError as exc:
        raise ReconstructionError(ReconstructionReason.MALFORMED_ANSWER, str(exc), turn) from None


def parse_pizza_answers(transcript: Iterable[tuple[QaInstance, str]],
                        grammar: CanonicalGrammar) -> ParseTree:
    """Rebuild the ORDER tree from MT answers; the first ``none`` ends it."""
    orders: list[TreeNode] = []
    utterance = domain = ""
    finished = False
    for inst, answer in transcript:
        utterance, domain = inst.utterance, inst.domain
        if finished:
            raise ReconstructionError(ReconstructionReason.CONTRADICTORY_ANSWERS,
                                      "turn after the terminal none", inst.turn)
        if normalize_text(answer).lower() == NONE_ANSWER:
            finished = True
            continue
        orders.append(_order_or_error(answer, grammar, inst.turn))
    return ParseTree(TreeNode(NodeKind.INTENT, grammar.root, tuple(orders)), utterance, domain)


def parse_pizza_st_answer(answer: str, utterance: str, grammar: CanonicalGrammar,
                          domain: str = "") -> ParseTree:
    text = normalize_text(answer)
    if not text.startswith(ST_HEAD):
        raise ReconstructionError(ReconstructionReason.MALFORMED_ANSWER,
                                  f"answer does not start with {ST_HEAD!r}")
    body = text[len(ST_HEAD):]
    if body.lower() == NONE_ANSWER:
        orders: list[TreeNode] = []
    else:
        try:
            orders = split_orders(body, grammar)
        except GrammarError as exc:
            raise ReconstructionError(ReconstructionReason.MALFORMED_ANSWER, str(exc)) from None
    return ParseTree(TreeNode(NodeKind.INTENT, grammar.root, tuple(orders)), utterance, domain)


def pizza_oracle_answer(instance: QaInstance, gold: ParseTree, grammar: CanonicalGrammar) -> str:
    orders = orders_of(gold, grammar)
    if instance.kind is QaKind.SINGLE_TURN:
        return ST_HEAD + ("; ".join(render_canonical(o, grammar) for o in orders) or NONE_ANSWER)
    k = instance.key[0] if instance.key else instance.turn
    return render_canonical(orders[k], grammar) if k < len(orders) else NONE_ANSWER


def drive_pizza(utterance: str, grammar: CanonicalGrammar, answerer, options: QaOptions = QaOptions(),
                *, record_id: str = "", domain: str = "", budget: int = 64) -> list[tuple[QaInstance, str]]:
    """Ask for orders one at a time until the answerer says ``none``."""
    from .dialogue import TurnBudgetExceeded

    transcript: list[tuple[QaInstance, str]] = []
    previous: list[str] = []
    while True:
        if len(transcript) >= budget:
            raise TurnBudgetExceeded(f"{record_id or utterance!r}: over {budget} turns")
        inst = build_pizza_question(utterance, previous, len(transcript), options,
                                    record_id=record_id, domain=domain)
        answer = answerer.answer(inst)
        transcript.append((inst.with_answer(answer), answer))
        if normalize_text(answer).lower() == NONE_ANSWER:
            return transcript
        previous.append(normalize_text(answer))


def order_tree(*orders: TreeNode, utterance: str = "", domain: str = "pizza",
               root: str = "ORDER") -> ParseTree:
    return ParseTree(TreeNode(NodeKind.INTENT, root, tuple(orders)), utterance, domain)


def order(label: str, *slots: TreeNode) -> TreeNode:
    return TreeNode(NodeKind.SLOT, label, tuple(slots))

