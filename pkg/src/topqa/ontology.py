"""Per-domain label inventories and the label <-> English phrase lexicon."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

from .tree import INTENT_PREFIX, SLOT_PREFIX, NodeKind, ParseTree, normalize_text

LEXICON_ENV = "TOPQA_LEXICON"


class OntologyError(ValueError):
    pass


class MixedDomains(OntologyError):
    pass


class MalformedLabel(OntologyError):
    pass


class UnknownPhrase(OntologyError):
    pass


class AmbiguousPhrase(OntologyError):
    pass


class LexiconError(OntologyError):
    pass


@dataclass(frozen=True)
class Ontology:
    """Admissible labels for one domain.

    Sequences are kept in display order: lexicographic when extracted from a
    corpus, file order when loaded from a schema.
    """

    domain: str = ""
    intents: tuple[str, ...] = ()
    slots: tuple[str, ...] = ()
    root_intents: tuple[str, ...] = ()
    slots_of: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    nested_intents_of: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def has_intent(self, label: str) -> bool:
        return label in self._intent_set

    def has_slot(self, label: str) -> bool:
        return label in self._slot_set

    def slots_for(self, intent: str) -> tuple[str, ...]:
        return tuple(self.slots_of.get(intent, ()))

    def nested_for(self, slot: str) -> tuple[str, ...]:
        return tuple(self.nested_intents_of.get(slot, ()))

    @cached_property
    def _intent_set(self) -> frozenset[str]:
        return frozenset(self.intents)

    @cached_property
    def _slot_set(self) -> frozenset[str]:
        return frozenset(self.slots)

    def labels(self) -> tuple[str, ...]:
        return self.intents + self.slots

    def to_json(self) -> dict:
        return {
            "domain": self.domain,
            "intents": list(self.intents),
            "slots": list(self.slots),
            "root_intents": list(self.root_intents),
            "slots_of": {k: list(v) for k, v in self.slots_of.items()},
            "nested_intents_of": {k: list(v) for k, v in self.nested_intents_of.items()},
        }


def extract_ontology(corpus: Iterable[ParseTree], domain: str | None = None) -> Ontology:
    """Collect every intent/slot co-occurrence seen in ``corpus``."""
    intents: set[str] = set()
    slots: set[str] = set()
    roots: set[str] = set()
    slots_of: dict[str, set[str]] = {}
    nested: dict[str, set[str]] = {}
    domains: set[str] = set()

    for tree in corpus:
        domains.add(tree.domain)
        roots.add(tree.root.label)
        for node in tree.root.walk():
            if node.kind is NodeKind.INTENT:
                intents.add(node.label)
                bucket = slots_of.setdefault(node.label, set())
                for c in node.children:
                    if c.kind is NodeKind.SLOT:
                        bucket.add(c.label)
            elif node.kind is NodeKind.SLOT:
                slots.add(node.label)
                for c in node.children:
                    if c.kind is NodeKind.INTENT:
                        nested.setdefault(node.label, set()).add(c.label)

    if len(domains) > 1:
        raise MixedDomains(f"corpus spans domains {sorted(domains)}")
    if domain is None:
        domain = next(iter(domains), "")
    return Ontology(
        domain=domain,
        intents=tuple(sorted(intents)),
        slots=tuple(sorted(slots)),
        root_intents=tuple(sorted(roots)),
        slots_of={k: tuple(sorted(v)) for k, v in sorted(slots_of.items())},
        nested_intents_of={k: tuple(sorted(v)) for k, v in sorted(nested.items())},
    )


def load_schema(path: str | os.PathLike) -> Ontology:
    """Load a hand-written ontology (JSON); list order is display order."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return ontology_from_json(data)


def ontology_from_json(data: dict) -> Ontology:
    slots_of = {k: tuple(v) for k, v in data.get("slots_of", {}).items()}
    nested = {k: tuple(v) for k, v in data.get("nested_intents_of", {}).items()}
    intents = list(data.get("intents", []))
    slots = list(data.get("slots", []))
    # Labels mentioned only in the relation maps are still part of the inventory.
    for k, vs in slots_of.items():
        intents += [k] if k not in intents else []
        slots += [s for s in vs if s not in slots]
    for k, vs in nested.items():
        slots += [k] if k not in slots else []
        intents += [i for i in vs if i not in intents]
    roots = tuple(data.get("root_intents", intents))
    intents += [r for r in roots if r not in intents]
    for label in intents:
        if not label.startswith(INTENT_PREFIX):
            raise MalformedLabel(label)
    for label in slots:
        if not label.startswith(SLOT_PREFIX):
            raise MalformedLabel(label)
    return Ontology(
        domain=data.get("domain", ""),
        intents=tuple(intents),
        slots=tuple(slots),
        root_intents=roots,
        slots_of=slots_of,
        nested_intents_of=nested,
    )


@dataclass(frozen=True)
class Lexicon:
    phrase_of: Mapping[str, str] = field(default_factory=dict)
    plural_of: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        owner: dict[str, str] = {}
        for table in (self.phrase_of, self.plural_of):
            for label, phrase in table.items():
                key = normalize_text(phrase).lower()
                if owner.setdefault(key, label) != label:
                    raise LexiconError(
                        f"phrase {phrase!r} used for both {owner[key]} and {label}")

    def check_injective(self, ontology: Ontology) -> None:
        """Reject lexicons whose phrases collide over ``ontology`` labels."""
        seen: dict[str, str] = {}
        for label in ontology.labels():
            for plural in (False, True):
                key = naturalize(label, self, plural).lower()
                if seen.setdefault(key, label) != label:
                    raise LexiconError(
                        f"{seen[key]} and {label} both naturalize to {key!r}")


def load_lexicon(path: str | os.PathLike | None = None) -> Lexicon:
    """Read ``LABEL<TAB>singular[<TAB>plural]`` lines; ``#`` starts a comment.

    Falls back to ``$TOPQA_LEXICON`` and then to an empty lexicon.
    """
    if path is None:
        path = os.environ.get(LEXICON_ENV)
        if not path:
            return Lexicon()
    phrase_of: dict[str, str] = {}
    plural_of: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) not in (2, 3) or not cols[1].strip():
            raise LexiconError(f"{path}:{lineno}: expected LABEL<TAB>singular<TAB>plural")
        label = cols[0].strip()
        _strip_prefix(label)
        phrase_of[label] = cols[1].strip()
        if len(cols) == 3 and cols[2].strip():
            plural_of[label] = cols[2].strip()
    return Lexicon(phrase_of, plural_of)


def _strip_prefix(label: str) -> str:
    if label.startswith(INTENT_PREFIX) or label.startswith(SLOT_PREFIX):
        name = label[3:]
        if name:
            return name
    raise MalformedLabel(f"expected an IN:/SL: label, got {label!r}")


def default_phrase(label: str) -> str:
    return _strip_prefix(label).lower().replace("_", " ").strip()


def naturalize(label: str, lexicon: Lexicon | None = None, plural: bool = False) -> str:
    name = _strip_prefix(label)
    lexicon = lexicon or Lexicon()
    if plural:
        if label in lexicon.plural_of:
            return lexicon.plural_of[label]
        return naturalize(label, lexicon) + "s"
    if label in lexicon.phrase_of:
        return lexicon.phrase_of[label]
    return name.lower().replace("_", " ").strip()


def denaturalize(phrase: str, ontology: Ontology, lexicon: Lexicon | None = None,
                 kind: NodeKind | None = None) -> str:
    """Map a phrase back to the unique ontology label that produces it.

    Both singular and plural renderings are accepted.  ``kind`` restricts the
    search to intents or slots.
    """
    key = normalize_text(phrase).lower()
    if not key:
        raise UnknownPhrase("empty phrase")
    pool: Iterable[str]
    if kind is NodeKind.INTENT:
        pool = ontology.intents
    elif kind is NodeKind.SLOT:
        pool = ontology.slots
    else:
        pool = ontology.labels()
    hits = {label for label in pool
            if key in (naturalize(label, lexicon).lower(),
                       naturalize(label, lexicon, plural=True).lower())}
    if not hits:
        raise UnknownPhrase(phrase)
    if len(hits) > 1:
        raise AmbiguousPhrase(f"{phrase!r} matches {sorted(hits)}")
    return hits.pop()


class PhraseIndex:
    """Precomputed phrase -> label table for repeated lookups."""

    def __init__(self, ontology: Ontology, lexicon: Lexicon | None = None):
        self.ontology = ontology
        self.lexicon = lexicon or Lexicon()
        self._tables: dict[NodeKind, dict[str, set[str]]] = {
            NodeKind.INTENT: {}, NodeKind.SLOT: {}}
        for kind, pool in ((NodeKind.INTENT, ontology.intents), (NodeKind.SLOT, ontology.slots)):
            for label in pool:
                for plural in (False, True):
                    key = naturalize(label, self.lexicon, plural).lower()
                    self._tables[kind].setdefault(key, set()).add(label)

    def lookup(self, phrase: str, kind: NodeKind) -> str:
        key = normalize_text(phrase).lower()
        hits = self._tables[kind].get(key)
        if not hits:
            raise UnknownPhrase(phrase)
        if len(hits) > 1:
            raise AmbiguousPhrase(f"{phrase!r} matches {sorted(hits)}")
        return next(iter(hits))

    def phrases(self, kind: NodeKind) -> list[str]:
        return list(self._tables[kind])
