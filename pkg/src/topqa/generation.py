"""Turn parse trees into abstractive QA instances.

Multi-turn (MT) generation asks one question per node group, top-down and
left-to-right: the root intent, then the slots of each intent, then the value
of each slot, then whether a slot value hides a nested intent.  Later turns
carry the answers of their ancestors as declarative sentences (the dialogue
state) and, optionally, the labels the ontology admits at that position.

Single-turn (ST) generation compresses the whole tree into one answer of the
form ``The user intended to I, where S is V. The intent for ``V'' is to ...``.

Every instance also records a declarative rewrite of itself split around the
answer position, which is what masked span prediction (MSP) training uses.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

from .ontology import Lexicon, Ontology, naturalize
from .tree import NodeKind, ParseTree, TreeNode, to_decoupled

DEFAULT_MASK = "[MASK]"
NONE_ANSWER = "none"
SLOT_SEPARATOR = ", "
VALUE_SEPARATOR = "; "


class GenerationError(ValueError):
    pass


class LabelNotInOntology(GenerationError):
    pass


class UnsupportedTree(GenerationError):
    """The tree has a shape the QA encoding cannot express (e.g. an empty slot value)."""


class NoTemplateForKind(GenerationError):
    pass


class QaKind(str, enum.Enum):
    ROOT_INTENT = "RootIntent"
    SLOTS = "Slots"
    SLOT_VALUE = "SlotValue"
    NESTED_INTENT = "NestedIntent"
    SINGLE_TURN = "SingleTurn"
    ORDER = "Order"


MT_KINDS = (QaKind.ROOT_INTENT, QaKind.SLOTS, QaKind.SLOT_VALUE, QaKind.NESTED_INTENT)


class PathStep(NamedTuple):
    """One hop from the root towards the node a question asks about.

    Intent steps carry no value.  Slot steps carry the slot value once it is
    known and the index of that value among same-label siblings.
    """

    kind: str
    label: str
    value: str | None = None
    ordinal: int = 0


@dataclass(frozen=True)
class QaOptions:
    metadata: bool = True
    state: bool = True
    force_nested: bool = False
    open_quote: str = "``"
    close_quote: str = "''"

    def quote(self, text: str) -> str:
        return f"{self.open_quote}{text}{self.close_quote}"


@dataclass(frozen=True)
class QaInstance:
    id: str
    turn: int
    kind: QaKind
    utterance: str
    question: str
    answer: str = ""
    context: str = ""
    metadata_context: str = ""
    state_context: str = ""
    masked_declarative: str = ""
    decl_prefix: str = ""
    decl_suffix: str = ""
    target_path: tuple[PathStep, ...] = ()
    record_id: str = ""
    domain: str = ""
    key: tuple[int, ...] = field(default=(), compare=False)

    def fill(self, answer: str) -> str:
        """The declarative rewrite with ``answer`` in the masked position."""
        return self.decl_prefix + answer + self.decl_suffix

    def with_answer(self, answer: str) -> QaInstance:
        return replace(self, answer=answer)


@dataclass(frozen=True)
class DialogueState:
    assertions: tuple[str, ...] = ()

    def render(self) -> str:
        return " ".join(self.assertions)


def join_or(items: Sequence[str]) -> str:
    return _join(items, "or")


def join_and(items: Sequence[str]) -> str:
    return _join(items, "and")


def _join(items: Sequence[str], conj: str) -> str:
    items = list(items)
    if len(items) <= 1:
        return "".join(items)
    if len(items) == 2:
        return f"{items[0]} {conj} {items[1]}"
    return ", ".join(items[:-1]) + f", {conj} " + items[-1]


def make_id(record_id: str, key: Sequence[int]) -> str:
    return f"{record_id}:{'.'.join(str(k) for k in key)}"


# -- dialogue state ---------------------------------------------------------

def _openers(path: Sequence[PathStep], lexicon: Lexicon, options: QaOptions) -> list[str]:
    out = []
    prev_value = None
    for i in range(0, len(path), 2):
        phrase = naturalize(path[i].label, lexicon)
        if i == 0:
            out.append(f"The user's intent is to {phrase}")
        else:
            out.append(f"The intent included in {options.quote(prev_value)} is {phrase}")
        if i + 1 < len(path):
            prev_value = path[i + 1].value
    return out


def dialogue_state(path: Sequence[PathStep], lexicon: Lexicon,
                   options: QaOptions = QaOptions()) -> DialogueState:
    """Render the ancestors named by ``path``, one sentence per intent level."""
    sentences = []
    for level, opener in enumerate(_openers(path, lexicon, options)):
        j = 2 * level + 1
        if j < len(path):
            step = path[j]
            slot_phrase = naturalize(step.label, lexicon)
            if step.value is None:
                opener += f", and the slot is {slot_phrase}"
            else:
                opener += f", and the {slot_phrase} is {step.value}"
        sentences.append(opener + ".")
    return DialogueState(tuple(sentences))


# -- question construction ----------------------------------------------------

def _metadata(kind: QaKind, path: Sequence[PathStep], ontology: Ontology,
              lexicon: Lexicon) -> str:
    if kind is QaKind.ROOT_INTENT:
        phrases = [naturalize(l, lexicon) for l in ontology.root_intents]
        return f"A user may intend to {join_or(phrases)}." if phrases else ""
    if kind is QaKind.SLOTS:
        intent_label = path[-1].label
        phrases = [naturalize(l, lexicon, plural=True) for l in ontology.slots_for(intent_label)]
        if not phrases:
            return ""
        return f"The slots for {naturalize(intent_label, lexicon)} may be {join_and(phrases)}."
    if kind is QaKind.NESTED_INTENT:
        slot_label = path[-1].label
        phrases = [naturalize(l, lexicon) for l in ontology.nested_for(slot_label)]
        if not phrases:
            return ""
        return f"The nested intent in {naturalize(slot_label, lexicon)} may be {join_and(phrases)}."
    return ""


def build_question(kind: QaKind, path: Sequence[PathStep], utterance: str,
                   ontology: Ontology, lexicon: Lexicon, options: QaOptions = QaOptions(),
                   *, record_id: str = "", domain: str = "",
                   key: Sequence[int] = (), turn: int = 0) -> QaInstance:
    """Build the MT question addressed by ``path`` (answer left empty)."""
    path = tuple(PathStep(*p) for p in path)
    q = options.quote
    metadata = _metadata(kind, path, ontology, lexicon) if options.metadata else ""
    said = f"A user said, {q(utterance)}" if kind is QaKind.ROOT_INTENT else f"A user said {q(utterance)}"
    state = dialogue_state(path, lexicon, options) if options.state else DialogueState()

    if kind is QaKind.ROOT_INTENT:
        interrogative = "What did the user intend to do?"
    elif kind is QaKind.SLOTS:
        interrogative = "What are the slots?"
    elif kind is QaKind.SLOT_VALUE:
        interrogative = f"What is the {naturalize(path[-1].label, lexicon)}?"
    elif kind is QaKind.NESTED_INTENT:
        interrogative = f"Is there an intent included in {options.open_quote}{path[-1].value}?{options.close_quote}"
    else:
        raise NoTemplateForKind(kind)

    # Declarative rewrite: the sentence this turn adds to the state of its
    # descendants, with the answer cut out.
    openers = _openers(path, lexicon, options)
    if kind is QaKind.ROOT_INTENT:
        kept, head = [], "The user's intent is to "
    elif kind is QaKind.NESTED_INTENT:
        kept, head = list(state.assertions), f"The intent included in {q(path[-1].value)} is "
    elif not options.state:
        kept = []
        head = ("The slots are " if kind is QaKind.SLOTS
                else f"The {naturalize(path[-1].label, lexicon)} is ")
    else:
        kept = list(state.assertions[:-1])
        head = (f"{openers[-1]}, and the slot is " if kind is QaKind.SLOTS
                else f"{openers[-1]}, and the {naturalize(path[-1].label, lexicon)} is ")

    context = _sentences(metadata, said, state.render())
    return QaInstance(
        id=make_id(record_id, key),
        turn=turn,
        kind=kind,
        utterance=utterance,
        question=_sentences(context, interrogative),
        context=context,
        metadata_context=metadata,
        state_context=state.render(),
        decl_prefix=_sentences(metadata, said, *kept) + " " + head,
        decl_suffix=".",
        target_path=path,
        record_id=record_id,
        domain=domain,
        key=tuple(key),
    )


def _sentences(*parts: str) -> str:
    return " ".join(p for p in parts if p)


def to_msp(instance: QaInstance, mask_token: str = DEFAULT_MASK) -> QaInstance:
    """Fill ``masked_declarative``; the answer is unchanged."""
    if not instance.decl_prefix and not instance.decl_suffix:
        raise NoTemplateForKind(f"{instance.kind.value} instance {instance.id} has no declarative form")
    return replace(instance, masked_declarative=instance.fill(mask_token))


# -- static multi-turn generation ---------------------------------------------

def slot_value_text(slot_node: TreeNode) -> str:
    return slot_node.text()


def single_intent_child(slot_node: TreeNode) -> TreeNode | None:
    intents = [c for c in slot_node.children if c.kind is NodeKind.INTENT]
    if len(intents) > 1:
        raise UnsupportedTree(f"slot {slot_node.label} holds {len(intents)} intents")
    return intents[0] if intents else None


def grouped_slots(intent_node: TreeNode) -> list[tuple[str, list[TreeNode]]]:
    """Slot children grouped by label, labels in order of first appearance."""
    groups: dict[str, list[TreeNode]] = {}
    for c in intent_node.children:
        if c.kind is NodeKind.SLOT:
            groups.setdefault(c.label, []).append(c)
    return list(groups.items())


def check_coverage(tree: ParseTree, ontology: Ontology) -> None:
    for node in tree.root.walk():
        if node.kind is NodeKind.INTENT and not ontology.has_intent(node.label):
            raise LabelNotInOntology(node.label)
        if node.kind is NodeKind.SLOT and not ontology.has_slot(node.label):
            raise LabelNotInOntology(node.label)


def asks_slots(intent_label: str, ontology: Ontology) -> bool:
    return bool(ontology.slots_for(intent_label))


def asks_nested(slot_label: str, ontology: Ontology, options: QaOptions) -> bool:
    return options.force_nested or bool(ontology.nested_for(slot_label))


def generate_multiturn(tree: ParseTree, ontology: Ontology, lexicon: Lexicon | None = None,
                       options: QaOptions = QaOptions(), record_id: str = "") -> list[QaInstance]:
    """All MT QA instances for ``tree``, in dialogue (preorder) order."""
    lexicon = lexicon or Lexicon()
    check_coverage(tree, ontology)
    out: list[QaInstance] = []

    def emit(kind, path, key, answer):
        inst = build_question(kind, path, tree.utterance, ontology, lexicon, options,
                              record_id=record_id, domain=tree.domain, key=key, turn=len(out))
        out.append(inst.with_answer(answer))

    def visit(node: TreeNode, path: tuple[PathStep, ...], key: tuple[int, ...]):
        here = path + (PathStep(NodeKind.INTENT.value, node.label),)
        groups = grouped_slots(node)
        if asks_slots(node.label, ontology):
            answer = SLOT_SEPARATOR.join(naturalize(l, lexicon) for l, _ in groups) or NONE_ANSWER
            emit(QaKind.SLOTS, here, key + (0,), answer)
        elif groups:
            raise LabelNotInOntology(f"ontology lists no slots for {node.label}")
        for i, (label, nodes) in enumerate(groups):
            values = [slot_value_text(s) for s in nodes]
            if not all(values):
                raise UnsupportedTree(f"slot {label} has no text")
            emit(QaKind.SLOT_VALUE, here + (PathStep(NodeKind.SLOT.value, label),),
                 key + (i + 1, 0), VALUE_SEPARATOR.join(values))
            nested_ok = asks_nested(label, ontology, options)
            for j, (s, value) in enumerate(zip(nodes, values)):
                child = single_intent_child(s)
                if not nested_ok:
                    if child is not None:
                        raise LabelNotInOntology(f"ontology admits no nested intent under {label}")
                    continue
                step_path = here + (PathStep(NodeKind.SLOT.value, label, value, j),)
                nested_key = key + (i + 1, j + 1)
                emit(QaKind.NESTED_INTENT, step_path, nested_key,
                     naturalize(child.label, lexicon) if child else NONE_ANSWER)
                if child is not None:
                    visit(child, step_path, nested_key)

    emit(QaKind.ROOT_INTENT, (), (0,), naturalize(tree.root.label, lexicon))
    visit(tree.root, (), (0,))
    return out


# -- single-turn generation ----------------------------------------------------

def st_value_text(slot_node: TreeNode) -> str:
    """Slot value as written in ST answers: decoupled text, else full text."""
    text = to_decoupled(ParseTree(slot_node)).root.text()
    return text or slot_node.text()


def singleturn_answer(tree: ParseTree, lexicon: Lexicon | None = None,
                      options: QaOptions = QaOptions()) -> str:
    lexicon = lexicon or Lexicon()
    sentences: list[str] = []

    def visit(node: TreeNode, anchor: str | None):
        phrase = naturalize(node.label, lexicon)
        if anchor is None:
            head = f"The user intended to {phrase}"
        else:
            head = f"The intent for {options.quote(anchor)} is to {phrase}"
        clauses = []
        expand: list[tuple[TreeNode, str]] = []
        for label, nodes in sorted(grouped_slots(node), key=lambda g: g[0]):
            entries = []
            for s in nodes:
                text = st_value_text(s)
                if not text:
                    raise UnsupportedTree(f"slot {label} has no text")
                child = single_intent_child(s)
                entries.append((text, child is None, child))
            # Equal texts: the one hiding an intent goes first so that
            # first-match anchoring on the way back finds it.
            entries.sort(key=lambda e: (e[0], e[1]))
            texts = [e[0] for e in entries]
            if len(texts) == 1:
                clauses.append(f"{naturalize(label, lexicon)} is {texts[0]}")
            else:
                clauses.append(f"{naturalize(label, lexicon, plural=True)} are "
                               f"{VALUE_SEPARATOR.join(texts)}")
            expand.extend((child, text) for text, _, child in entries if child is not None)
        sentence = head + (", where " + " and ".join(clauses) if clauses else "") + "."
        sentences.append(sentence)
        for child, text in expand:
            visit(child, text)

    visit(tree.root, None)
    return " ".join(sentences)


def generate_singleturn(tree: ParseTree, ontology: Ontology, lexicon: Lexicon | None = None,
                        options: QaOptions = QaOptions(), record_id: str = "") -> QaInstance:
    lexicon = lexicon or Lexicon()
    check_coverage(tree, ontology)
    metadata = ""
    if options.metadata:
        intents = ", ".join(naturalize(l, lexicon) for l in ontology.intents)
        slots = ", ".join(naturalize(l, lexicon) for l in ontology.slots)
        metadata = f"All possible intents from a user are {intents}, and slots could be {slots}."
    said = f"A user said, {options.quote(tree.utterance)}"
    context = _sentences(metadata, said)
    return QaInstance(
        id=make_id(record_id, (0,)),
        turn=0,
        kind=QaKind.SINGLE_TURN,
        utterance=tree.utterance,
        question=_sentences(context, "What did the user intend to do?"),
        answer=singleturn_answer(tree, lexicon, options),
        context=context,
        metadata_context=metadata,
        decl_prefix=context + " ",
        decl_suffix="",
        record_id=record_id,
        domain=tree.domain,
        key=(0,),
    )
