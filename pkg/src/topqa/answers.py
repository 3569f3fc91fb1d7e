"""Rebuild parse trees from QA answers.

Both readers return the tree in TOP-decoupled form.  Any answer that cannot be
turned into a tree raises :class:`ReconstructionError`; no partial trees are
returned, so the instance simply counts as wrong.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .generation import (NONE_ANSWER, SLOT_SEPARATOR, VALUE_SEPARATOR, QaInstance, QaKind,
                         QaOptions)
from .ontology import AmbiguousPhrase, Lexicon, Ontology, PhraseIndex, UnknownPhrase
from .tree import NodeKind, ParseTree, TreeNode, normalize_text, to_decoupled, token


class ReconstructionReason(str, enum.Enum):
    INVALID_ENTITY = "InvalidEntity"
    UNLOCATABLE_SUBUTTERANCE = "UnlocatableSubutterance"
    MALFORMED_ANSWER = "MalformedAnswer"
    CONTRADICTORY_ANSWERS = "ContradictoryAnswers"


class ReconstructionError(Exception):
    def __init__(self, reason: ReconstructionReason, detail: str = "", turn: int | None = None):
        self.reason = ReconstructionReason(reason)
        self.detail = detail
        self.turn = turn
        where = f" at turn {turn}" if turn is not None else ""
        super().__init__(f"{self.reason.value}{where}: {detail}")

    def at_turn(self, turn: int) -> ReconstructionError:
        if self.turn is None:
            self.turn = turn
        return self


def _invalid(what: str) -> ReconstructionError:
    return ReconstructionError(ReconstructionReason.INVALID_ENTITY, what)


def _malformed(what: str) -> ReconstructionError:
    return ReconstructionError(ReconstructionReason.MALFORMED_ANSWER, what)


# -- answer fragments shared with the dialogue driver ------------------------------

def lookup(index: PhraseIndex, phrase: str, kind: NodeKind) -> str:
    try:
        return index.lookup(phrase, kind)
    except (UnknownPhrase, AmbiguousPhrase) as exc:
        raise _invalid(f"{kind.value.lower()} phrase {phrase!r}") from exc


def is_none(answer: str) -> bool:
    return normalize_text(answer).lower() == NONE_ANSWER


def read_intent(answer: str, index: PhraseIndex) -> str:
    if not normalize_text(answer):
        raise _malformed("empty intent answer")
    return lookup(index, answer, NodeKind.INTENT)


def read_nested(answer: str, index: PhraseIndex) -> str | None:
    return None if is_none(answer) else read_intent(answer, index)


def read_slots(answer: str, index: PhraseIndex) -> list[str]:
    text = normalize_text(answer)
    if not text:
        raise _malformed("empty slots answer")
    if is_none(text):
        return []
    labels = [lookup(index, p, NodeKind.SLOT) for p in text.split(SLOT_SEPARATOR.strip())]
    if len(set(labels)) != len(labels):
        raise _malformed(f"slot listed twice in {answer!r}")
    return labels


def read_values(answer: str) -> list[str]:
    text = normalize_text(answer)
    values = [v.strip() for v in text.split(VALUE_SEPARATOR.strip())]
    if not text or not all(values):
        raise _malformed(f"empty slot value in {answer!r}")
    return values


# -- mutable builder ------------------------------------------------------------

@dataclass(eq=False)
class _Node:
    kind: NodeKind
    label: str
    tokens: list[str] = field(default_factory=list)
    children: list[_Node] = field(default_factory=list)
    subutterance: str = ""
    announced: list[str] | None = None
    filled: set[str] = field(default_factory=set)
    asked: bool = False

    @property
    def text(self) -> str:
        return " ".join(self.tokens)

    def intent_child(self) -> _Node | None:
        return next((c for c in self.children if c.kind is NodeKind.INTENT), None)

    def slots(self, label: str | None = None) -> list[_Node]:
        return [c for c in self.children
                if c.kind is NodeKind.SLOT and (label is None or c.label == label)]

    def preorder(self):
        yield self
        for c in self.children:
            yield from c.preorder()

    def freeze(self) -> TreeNode:
        kids = tuple(token(t) for t in self.tokens) + tuple(c.freeze() for c in self.children)
        return TreeNode(self.kind, self.label, kids)


def _finish(root: _Node, utterance: str, domain: str) -> ParseTree:
    return to_decoupled(ParseTree(root.freeze(), utterance, domain))


# -- single-turn --------------------------------------------------------------------

_ST_HEAD = "The user intended to "


def parse_singleturn_answer(answer: str, utterance: str, ontology: Ontology,
                            lexicon: Lexicon | None = None,
                            options: QaOptions = QaOptions()) -> ParseTree:
    """Rebuild a tree from an ST answer.

    Each sentence after the first names its anchor (``The intent for ``V''``);
    the anchor is resolved to the first not-yet-expanded leaf slot, in
    preorder, whose text is exactly ``V``.
    """
    try:
        return _parse_st(answer, utterance, PhraseIndex(ontology, lexicon), options)
    except ReconstructionError:
        raise
    except Exception as exc:  # arbitrary model output must never escape untyped
        raise _malformed(f"{type(exc).__name__}: {exc}") from exc


def _parse_st(answer: str, utterance: str, index: PhraseIndex, options: QaOptions) -> ParseTree:
    text = normalize_text(answer)
    if not text.startswith(_ST_HEAD):
        raise _malformed("answer does not start with the root sentence")
    if text.endswith("."):
        text = text[:-1]
    pattern = clause_pattern(index)
    marker = f". The intent for {options.open_quote}"
    first, *rest = text.split(marker)

    phrase, clauses = _split_where(first[len(_ST_HEAD):])
    root = _Node(NodeKind.INTENT, read_intent(phrase, index), subutterance=utterance)
    _attach_clauses(root, clauses, index, pattern, utterance)

    for sentence in rest:
        end = sentence.find(options.close_quote + " is ")
        if end < 0:
            raise _malformed(f"cannot find the anchor in {sentence!r}")
        anchor = normalize_text(sentence[:end])
        body = sentence[end + len(options.close_quote) + 4:]
        if body.startswith("to "):
            body = body[3:]
        phrase, clauses = _split_where(body)
        label = read_intent(phrase, index)
        target = _find_anchor(root, anchor, label, index.ontology)
        child = _Node(NodeKind.INTENT, label, subutterance=anchor)
        target.children.append(child)
        target.asked = True
        _attach_clauses(child, clauses, index, pattern, utterance)
    return _finish(root, utterance, index.ontology.domain)


def _split_where(body: str) -> tuple[str, str | None]:
    i = body.find(", where ")
    if i < 0:
        return body, None
    return body[:i], body[i + len(", where "):]


def _find_anchor(root: _Node, anchor: str, intent_label: str, ontology: Ontology) -> _Node:
    candidates = [n for n in root.preorder()
                  if n.kind is NodeKind.SLOT and not n.asked and n.text == anchor]
    if not candidates:
        raise ReconstructionError(ReconstructionReason.UNLOCATABLE_SUBUTTERANCE, anchor)
    for n in candidates:
        if intent_label in ontology.nested_for(n.label):
            return n
    return candidates[0]


def _occurs_in_order(value: str, text: str) -> bool:
    # Values of slots with nested intents skip filler words, so only the
    # order of the words is checked, not adjacency.
    text, pos = text.lower(), 0
    for word in value.lower().split():
        pos = text.find(word, pos)
        if pos < 0:
            return False
        pos += len(word)
    return True


def clause_pattern(index: PhraseIndex) -> re.Pattern:
    """Matches ``<slot phrase> is|are `` at the start or after `` and ``."""
    phrases = sorted(index.phrases(NodeKind.SLOT), key=len, reverse=True)
    alt = "|".join(re.escape(p) for p in phrases) or r"(?!)"
    return re.compile(r"(?:^|(?<= and ))(" + alt + r") (?:is|are) ", re.IGNORECASE)


def _attach_clauses(node: _Node, clauses: str | None, index: PhraseIndex,
                     pattern: re.Pattern, utterance: str) -> None:
    if clauses is None:
        return
    matches = list(pattern.finditer(clauses))
    if not matches or matches[0].start() != 0:
        if re.match(r"^.+? (?:is|are) ", clauses):
            raise _invalid(f"unknown slot in {clauses!r}")
        raise _malformed(f"unreadable slot clause {clauses!r}")
    for k, m in enumerate(matches):
        end = matches[k + 1].start() - len(" and ") if k + 1 < len(matches) else len(clauses)
        label = lookup(index, m.group(1), NodeKind.SLOT)
        for value in read_values(clauses[m.end():end]):
            if not _occurs_in_order(value, utterance):
                raise ReconstructionError(ReconstructionReason.UNLOCATABLE_SUBUTTERANCE,
                                          f"{value!r} is not part of the utterance")
            node.children.append(_Node(NodeKind.SLOT, label, tokens=value.split()))


# -- multi-turn ---------------------------------------------------------------------

def parse_multiturn_answers(transcript: Iterable[tuple[QaInstance, str]], ontology: Ontology,
                            lexicon: Lexicon | None = None) -> ParseTree:
    """Rebuild a tree from an ordered MT transcript.

    The question's target path says which intent a Slots/SlotValue turn is
    about; NestedIntent turns locate their leaf by exact text among the slots
    with the named label, taking the first one not yet asked about.
    """
    index = PhraseIndex(ontology, lexicon)
    root: _Node | None = None
    utterance = ""
    for inst, answer in transcript:
        try:
            utterance = utterance or inst.utterance
            root = _apply_turn(root, inst, answer, index)
        except ReconstructionError as exc:
            raise exc.at_turn(inst.turn)
        except Exception as exc:
            raise _malformed(f"{type(exc).__name__}: {exc}").at_turn(inst.turn) from exc
    if root is None:
        raise _malformed("transcript has no root intent answer")
    for node in root.preorder():
        if node.announced and set(node.announced) - node.filled:
            missing = sorted(set(node.announced) - node.filled)
            raise ReconstructionError(ReconstructionReason.CONTRADICTORY_ANSWERS,
                                      f"slots {missing} announced but never filled")
    return _finish(root, utterance, ontology.domain)


def _contradiction(what: str) -> ReconstructionError:
    return ReconstructionError(ReconstructionReason.CONTRADICTORY_ANSWERS, what)


def _apply_turn(root: _Node | None, inst: QaInstance, answer: str,
                index: PhraseIndex) -> _Node:
    kind = QaKind(inst.kind)
    path = inst.target_path
    if kind is QaKind.ROOT_INTENT:
        if root is not None:
            raise _contradiction("second root intent answer")
        return _Node(NodeKind.INTENT, read_intent(answer, index), subutterance=inst.utterance)
    if root is None:
        raise _contradiction("turn precedes the root intent answer")

    if kind is QaKind.SLOTS:
        node = _locate_intent(root, path)
        if node.announced is not None:
            raise _contradiction(f"slots of {node.label} asked twice")
        node.announced = read_slots(answer, index)
    elif kind is QaKind.SLOT_VALUE:
        node = _locate_intent(root, path[:-1])
        label = path[-1].label
        if node.announced is None or label not in node.announced:
            raise _contradiction(f"value for unannounced slot {label}")
        if label in node.filled:
            raise _contradiction(f"slot {label} filled twice")
        node.filled.add(label)
        for value in read_values(answer):
            node.children.append(_Node(NodeKind.SLOT, label, tokens=value.split()))
    elif kind is QaKind.NESTED_INTENT:
        node = _locate_intent(root, path[:-1])
        step = path[-1]
        leaf = _locate_leaf(node, step.label, step.value, step.ordinal)
        leaf.asked = True
        nested = read_nested(answer, index)
        if nested is not None:
            leaf.children.append(
                _Node(NodeKind.INTENT, nested, subutterance=normalize_text(step.value or "")))
    else:
        raise _malformed(f"{kind.value} turn in a multi-turn transcript")
    return root


def _locate_leaf(node: _Node, label: str, value: str | None, ordinal: int) -> _Node:
    text = normalize_text(value or "")
    same_label = node.slots(label)
    candidates = [s for s in same_label if not s.asked and s.text == text]
    if not candidates:
        raise ReconstructionError(ReconstructionReason.UNLOCATABLE_SUBUTTERANCE, text)
    if ordinal < len(same_label) and same_label[ordinal] in candidates:
        return same_label[ordinal]
    return candidates[0]


def _locate_intent(root: _Node, path: Sequence) -> _Node:
    if not path or path[0].kind != NodeKind.INTENT.value:
        raise _malformed("target path does not start at an intent")
    if path[0].label != root.label:
        raise _contradiction(f"path root {path[0].label} differs from answered root {root.label}")
    node = root
    for i in range(1, len(path), 2):
        slot_step = path[i]
        if i + 1 >= len(path):
            raise _malformed("target path ends on a slot")
        intent_step = path[i + 1]
        same_label = node.slots(slot_step.label)
        text = normalize_text(slot_step.value or "")
        if slot_step.ordinal >= len(same_label) or same_label[slot_step.ordinal].text != text:
            raise ReconstructionError(ReconstructionReason.UNLOCATABLE_SUBUTTERANCE, text)
        child = same_label[slot_step.ordinal].intent_child()
        if child is None or child.label != intent_step.label:
            raise _contradiction(f"no {intent_step.label} under ``{text}''")
        node = child
    return node
