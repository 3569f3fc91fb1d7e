"""Drive multi-turn QA against an answerer, one dependency wave at a time.

Questions are built from the answers received so far, never from a gold
tree, so the same driver serves oracle round-trips, noise studies, and real
models plugged in over a pipe.
"""
from __future__ import annotations

import json
import random
import shlex
import subprocess
import threading
from concurrent.futures import Executor
from dataclasses import dataclass, field, replace
from typing import Collection, Protocol, Sequence

from .answers import (ReconstructionError, is_none, read_intent, read_nested, read_slots,
                      read_values)
from .generation import (NONE_ANSWER, SLOT_SEPARATOR, VALUE_SEPARATOR, PathStep, QaInstance,
                         QaKind, QaOptions, asks_nested, asks_slots, build_question,
                         grouped_slots, single_intent_child, singleturn_answer)
from .ontology import Lexicon, Ontology, PhraseIndex, naturalize
from .tree import NodeKind, ParseTree, TreeNode, normalize_text

DEFAULT_BUDGET = 64


class TurnBudgetExceeded(RuntimeError):
    pass


class PathNotInGold(LookupError):
    pass


class Answerer(Protocol):
    single_flight: bool

    def answer(self, instance: QaInstance) -> str: ...


@dataclass
class Transcript:
    turns: list[tuple[QaInstance, str]] = field(default_factory=list)
    waves: list[list[str]] = field(default_factory=list)
    error: ReconstructionError | None = None

    @property
    def instances(self) -> list[QaInstance]:
        return [inst for inst, _ in self.turns]

    def __len__(self) -> int:
        return len(self.turns)


# -- oracle -----------------------------------------------------------------------

def _resolve_intent(root: TreeNode, path: Sequence[PathStep]) -> TreeNode:
    if not path or path[0].label != root.label:
        raise PathNotInGold(f"root {root.label} does not match {path[:1]}")
    node = root
    for i in range(1, len(path) - 1, 2):
        slot_node = _resolve_slot(node, path[i])
        child = single_intent_child(slot_node)
        if child is None or child.label != path[i + 1].label:
            raise PathNotInGold(f"no {path[i + 1].label} under {path[i].label}")
        node = child
    if len(path) % 2 == 0:
        raise PathNotInGold("path ends on a slot")
    return node


def _resolve_slot(intent_node: TreeNode, step: PathStep) -> TreeNode:
    same = [c for c in intent_node.children if c.kind is NodeKind.SLOT and c.label == step.label]
    if step.ordinal >= len(same):
        raise PathNotInGold(f"no {step.label} #{step.ordinal} under {intent_node.label}")
    node = same[step.ordinal]
    if step.value is not None and normalize_text(node.text()) != normalize_text(step.value):
        raise PathNotInGold(f"{step.label} #{step.ordinal} is not {step.value!r}")
    return node


def oracle_answer(instance: QaInstance, gold: ParseTree, lexicon: Lexicon | None = None,
                  options: QaOptions = QaOptions()) -> str:
    """The answer generation would have emitted for this question on ``gold``."""
    lexicon = lexicon or Lexicon()
    kind = QaKind(instance.kind)
    path = instance.target_path
    if kind is QaKind.SINGLE_TURN:
        return singleturn_answer(gold, lexicon, options)
    if kind is QaKind.ROOT_INTENT:
        return naturalize(gold.root.label, lexicon)
    if kind is QaKind.SLOTS:
        node = _resolve_intent(gold.root, path)
        return SLOT_SEPARATOR.join(naturalize(l, lexicon) for l, _ in grouped_slots(node)) or NONE_ANSWER
    if kind is QaKind.SLOT_VALUE:
        node = _resolve_intent(gold.root, path[:-1])
        values = [c.text() for c in node.children
                  if c.kind is NodeKind.SLOT and c.label == path[-1].label]
        if not values:
            raise PathNotInGold(f"{node.label} has no {path[-1].label}")
        return VALUE_SEPARATOR.join(values)
    if kind is QaKind.NESTED_INTENT:
        node = _resolve_intent(gold.root, path[:-1])
        child = single_intent_child(_resolve_slot(node, path[-1]))
        return naturalize(child.label, lexicon) if child else NONE_ANSWER
    raise PathNotInGold(f"no oracle for {kind.value}")


class OracleAnswerer:
    """Answers from a gold tree; questions off the gold tree get ``none``."""

    single_flight = False

    def __init__(self, gold: ParseTree, lexicon: Lexicon | None = None,
                 options: QaOptions = QaOptions()):
        self.gold = gold
        self.lexicon = lexicon or Lexicon()
        self.options = options

    def answer(self, instance: QaInstance) -> str:
        try:
            return oracle_answer(instance, self.gold, self.lexicon, self.options)
        except PathNotInGold:
            return NONE_ANSWER


# -- noise --------------------------------------------------------------------------

def _wrong_candidates(instance: QaInstance, correct: str, ontology: Ontology,
                      lexicon: Lexicon) -> list[str]:
    kind = QaKind(instance.kind)
    if kind in (QaKind.ROOT_INTENT, QaKind.SINGLE_TURN):
        pool = [naturalize(l, lexicon) for l in (ontology.root_intents or ontology.intents)]
    elif kind is QaKind.SLOTS:
        pool = [naturalize(l, lexicon) for l in ontology.slots] + [NONE_ANSWER]
    elif kind is QaKind.NESTED_INTENT:
        pool = [naturalize(l, lexicon) for l in ontology.nested_for(instance.target_path[-1].label)]
        pool = pool + [NONE_ANSWER] if pool else [naturalize(l, lexicon) for l in ontology.intents] + [NONE_ANSWER]
    else:
        pool = [naturalize(l, lexicon) for l in ontology.labels()]
    return sorted({p for p in pool if p.lower() != correct.lower()})


def noisy_answer(instance: QaInstance, gold: ParseTree, lexicon: Lexicon | None, p: float,
                 seed: int, ontology: Ontology, kinds: Collection[QaKind] | None = None,
                 options: QaOptions = QaOptions()) -> str:
    """Oracle answer, replaced with probability ``p`` by a wrong ontology phrase.

    The coin is drawn from a generator seeded by ``(seed, instance.id)`` so a
    given question flips identically across runs and across values of ``p``
    (raising ``p`` only ever adds flips).
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"noise probability {p} outside [0, 1]")
    lexicon = lexicon or Lexicon()
    try:
        correct = oracle_answer(instance, gold, lexicon, options)
    except PathNotInGold:
        correct = NONE_ANSWER
    kind = QaKind(instance.kind)
    rng = random.Random(f"{seed}:{instance.id}")
    if rng.random() >= p or (kinds is not None and kind not in kinds):
        return correct
    if kind is QaKind.SINGLE_TURN:
        root_phrase = naturalize(gold.root.label, lexicon)
        wrong = _wrong_candidates(instance, root_phrase, ontology, lexicon)
        head = f"The user intended to {root_phrase}"
        if not wrong or not correct.startswith(head):
            return NONE_ANSWER
        return f"The user intended to {rng.choice(wrong)}" + correct[len(head):]
    wrong = _wrong_candidates(instance, correct, ontology, lexicon)
    return rng.choice(wrong) if wrong else correct + " x"


class NoisyAnswerer:
    single_flight = False

    def __init__(self, gold: ParseTree, ontology: Ontology, lexicon: Lexicon | None = None,
                 p: float = 0.0, seed: int = 0, kinds: Collection[QaKind] | None = None,
                 options: QaOptions = QaOptions()):
        self.gold = gold
        self.ontology = ontology
        self.lexicon = lexicon or Lexicon()
        self.p = p
        self.seed = seed
        self.kinds = kinds
        self.options = options

    def answer(self, instance: QaInstance) -> str:
        return noisy_answer(instance, self.gold, self.lexicon, self.p, self.seed,
                            self.ontology, self.kinds, self.options)


class SubprocessAnswerer:
    """Talks JSON lines to an external model process.

    Each request is ``{"id", "context", "question"}`` (plus ``masked_question``
    when present) and each reply must be ``{"id", "answer"}``.  ``question``
    carries only the interrogative sentence; ``context`` the text before it.
    Calls are serialized over the single pipe.
    """

    single_flight = True

    def __init__(self, command: str | Sequence[str]):
        args = shlex.split(command) if isinstance(command, str) else list(command)
        self._proc = subprocess.Popen(args, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                      text=True, encoding="utf-8", bufsize=1)
        self._lock = threading.Lock()

    def answer(self, instance: QaInstance) -> str:
        interrogative = instance.question[len(instance.context):].strip()
        request = {"id": instance.id, "context": instance.context, "question": interrogative}
        if instance.masked_declarative:
            request["masked_question"] = instance.masked_declarative
        with self._lock:
            self._proc.stdin.write(json.dumps(request, ensure_ascii=False) + "\n")
            self._proc.stdin.flush()
            line = self._proc.stdout.readline()
        if not line:
            return ""
        try:
            reply = json.loads(line)
        except json.JSONDecodeError:
            return ""
        if reply.get("id") != instance.id:
            return ""
        return str(reply.get("answer", ""))

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.stdin.close()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# -- driver -------------------------------------------------------------------------

def drive_multiturn(utterance: str, domain: str, ontology: Ontology, lexicon: Lexicon | None,
                    answerer: Answerer, options: QaOptions = QaOptions(), *,
                    record_id: str = "", budget: int = DEFAULT_BUDGET,
                    executor: Executor | None = None) -> Transcript:
    """Ask questions wave by wave until none are eligible.

    The first unusable answer (unknown label, malformed list) ends the
    dialogue after its wave; the error is kept on the transcript.  The
    returned turns are in dialogue order, identical to what static generation
    produces for the gold tree when the answers are the oracle's.
    """
    lexicon = lexicon or Lexicon()
    index = PhraseIndex(ontology, lexicon)

    def build(kind, path, key):
        return build_question(kind, path, utterance, ontology, lexicon, options,
                              record_id=record_id, domain=domain, key=key)

    transcript = Transcript()
    pending = [build(QaKind.ROOT_INTENT, (), (0,))]
    while pending:
        if len(transcript.turns) + len(pending) > budget:
            raise TurnBudgetExceeded(f"{record_id or utterance!r}: over {budget} turns")
        if executor is not None and not answerer.single_flight and len(pending) > 1:
            answers = list(executor.map(answerer.answer, pending))
        else:
            answers = [answerer.answer(inst) for inst in pending]
        transcript.waves.append([inst.id for inst in pending])
        following: list[QaInstance] = []
        for inst, answer in zip(pending, answers):
            inst = inst.with_answer(answer)
            transcript.turns.append((inst, answer))
            if transcript.error is not None:
                continue
            try:
                following.extend(_successors(inst, answer, index, options, build))
            except ReconstructionError as exc:
                transcript.error = exc
        pending = [] if transcript.error is not None else following

    transcript.turns.sort(key=lambda t: t[0].key)
    transcript.turns = [(replace(inst, turn=i), a) for i, (inst, a) in enumerate(transcript.turns)]
    if transcript.error is not None:
        failed = next((inst.turn for inst, _ in transcript.turns
                       if inst.id in transcript.waves[-1]), None)
        transcript.error.at_turn(failed)
    return transcript


def _successors(inst: QaInstance, answer: str, index: PhraseIndex, options: QaOptions,
                build) -> list[QaInstance]:
    ontology = index.ontology
    kind, path, key = inst.kind, inst.target_path, inst.key
    if kind is QaKind.ROOT_INTENT:
        label = read_intent(answer, index)
        if asks_slots(label, ontology):
            return [build(QaKind.SLOTS, (PathStep(NodeKind.INTENT.value, label),), key + (0,))]
        return []
    if kind is QaKind.SLOTS:
        base = key[:-1]
        return [build(QaKind.SLOT_VALUE, path + (PathStep(NodeKind.SLOT.value, label),),
                      base + (i + 1, 0))
                for i, label in enumerate(read_slots(answer, index))]
    if kind is QaKind.SLOT_VALUE:
        label = path[-1].label
        values = read_values(answer)
        if not asks_nested(label, ontology, options):
            return []
        return [build(QaKind.NESTED_INTENT,
                      path[:-1] + (PathStep(NodeKind.SLOT.value, label, value, j),),
                      key[:-1] + (j + 1,))
                for j, value in enumerate(values)]
    if kind is QaKind.NESTED_INTENT:
        label = read_nested(answer, index)
        if label is not None and asks_slots(label, ontology):
            return [build(QaKind.SLOTS, path + (PathStep(NodeKind.INTENT.value, label),), key + (0,))]
        return []
    raise ValueError(f"unexpected {kind} in a multi-turn dialogue")


def plan_waves(instances: Sequence[QaInstance]) -> list[list[QaInstance]]:
    """Group static MT instances into waves of mutually independent questions."""
    by_key = {inst.key: inst for inst in instances}
    wave_of: dict[tuple[int, ...], int] = {}

    def parent_key(inst: QaInstance) -> tuple[int, ...] | None:
        k = inst.key
        if inst.kind is QaKind.ROOT_INTENT:
            return None
        if inst.kind is QaKind.SLOTS:
            return k[:-1]
        return k[:-1] + (0,) if inst.kind is QaKind.NESTED_INTENT else k[:-2] + (0,)

    for inst in sorted(instances, key=lambda i: (len(i.key), i.key)):
        pk = parent_key(inst)
        if pk is not None and pk not in by_key:
            raise ValueError(f"{inst.id} has no parent question")
        wave_of[inst.key] = 0 if pk is None else wave_of[pk] + 1
    waves: list[list[QaInstance]] = [[] for _ in range(max(wave_of.values(), default=-1) + 1)]
    for inst in instances:
        waves[wave_of[inst.key]].append(inst)
    return waves
