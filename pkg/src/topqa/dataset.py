"""Tree TSV files, QA JSONL files, few-shot sampling and corpus statistics.

All files are UTF-8 with LF line endings.  Tree files have three
tab-separated columns (domain, utterance, linearized tree) and an optional
header row.  QA files hold one JSON object per line; see ``QA_FIELDS``.
"""
from __future__ import annotations

import json
import os
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .generation import PathStep, QaInstance, QaKind, generate_multiturn
from .ontology import Lexicon, Ontology, extract_ontology
from .tree import ParseTree, TreeParseError, compute_stats, labels, parse_linearized

HEADER_NAMES = {"domain", "utterance", "tree", "semantic_parse", "linearized_tree"}

QA_FIELDS = ("id", "record_id", "domain", "turn", "kind", "utterance", "context", "question",
             "answer", "masked_question", "target_path", "metadata", "state", "declarative", "key")


class IoError(OSError):
    pass


class ColumnCountMismatch(ValueError):
    pass


class SchemaViolation(ValueError):
    pass


@dataclass(frozen=True)
class DatasetRecord:
    domain: str
    utterance: str
    linearized_tree: str
    line: int = 0

    def parse(self, strict: bool = True) -> ParseTree:
        return parse_linearized(self.linearized_tree, self.utterance, self.domain, strict=strict)

    @property
    def record_id(self) -> str:
        return f"{self.domain}-{self.line}"


@dataclass(frozen=True)
class Reject:
    line: int
    reason: str
    detail: str


@dataclass
class TsvResult:
    records: list[DatasetRecord] = field(default_factory=list)
    trees: list[ParseTree] = field(default_factory=list)
    rejects: list[Reject] = field(default_factory=list)

    def __iter__(self):
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)


def _read_text(path: str | os.PathLike) -> str:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            return fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def read_tsv(path: str | os.PathLike, *, strict: bool = True) -> TsvResult:
    """Read tree rows in file order.

    Rows with the wrong column count or an unparsable tree are collected in
    ``rejects`` with their 1-based line numbers.
    """
    result = TsvResult()
    lines = _read_text(path).split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\r")
        if not line.strip():
            continue
        cols = line.split("\t")
        if lineno == 1 and {c.strip().lower() for c in cols} <= HEADER_NAMES:
            continue
        if len(cols) != 3:
            result.rejects.append(Reject(lineno, ColumnCountMismatch.__name__,
                                         f"expected 3 columns, found {len(cols)}"))
            continue
        record = DatasetRecord(cols[0].strip(), cols[1].strip(), cols[2].strip(), lineno)
        try:
            tree = record.parse(strict)
        except TreeParseError as exc:
            result.rejects.append(Reject(lineno, type(exc).__name__, str(exc)))
            continue
        result.records.append(record)
        result.trees.append(tree)
    return result


def write_tsv(trees: Iterable[ParseTree], path: str | os.PathLike, header: bool = False) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if header:
            fh.write("domain\tutterance\tsemantic_parse\n")
        for t in trees:
            fh.write(f"{t.domain}\t{t.utterance}\t{t.serialize()}\n")


# -- QA JSONL -------------------------------------------------------------------------

def instance_to_json(inst: QaInstance) -> dict:
    return {
        "id": inst.id,
        "record_id": inst.record_id,
        "domain": inst.domain,
        "turn": inst.turn,
        "kind": inst.kind.value,
        "utterance": inst.utterance,
        "context": inst.context,
        "question": inst.question,
        "answer": inst.answer,
        "masked_question": inst.masked_declarative or None,
        "target_path": [list(step) for step in inst.target_path],
        "metadata": inst.metadata_context,
        "state": inst.state_context,
        "declarative": [inst.decl_prefix, inst.decl_suffix],
        "key": list(inst.key),
    }


def _expect(obj: Mapping, name: str, kind: type | tuple, lineno: int):
    value = obj.get(name)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is int:
        raise SchemaViolation(f"line {lineno}: field {name!r} must be {kind}, got {value!r}")
    return value


def instance_from_json(obj: Mapping, lineno: int = 0) -> QaInstance:
    if not isinstance(obj, Mapping):
        raise SchemaViolation(f"line {lineno}: expected a JSON object")
    extra = set(obj) - set(QA_FIELDS)
    if extra:
        raise SchemaViolation(f"line {lineno}: unknown fields {sorted(extra)}")
    try:
        kind = QaKind(_expect(obj, "kind", str, lineno))
    except ValueError:
        raise SchemaViolation(f"line {lineno}: unknown kind {obj.get('kind')!r}") from None
    path = []
    for step in _expect(obj, "target_path", list, lineno):
        if not isinstance(step, list) or len(step) != 4:
            raise SchemaViolation(f"line {lineno}: target_path steps are [kind, label, value, ordinal]")
        path.append(PathStep(*step))
    masked = obj.get("masked_question")
    if masked is not None and not isinstance(masked, str):
        raise SchemaViolation(f"line {lineno}: masked_question must be a string or null")
    decl = obj.get("declarative", ["", ""])
    if not (isinstance(decl, list) and len(decl) == 2 and all(isinstance(d, str) for d in decl)):
        raise SchemaViolation(f"line {lineno}: declarative must be [prefix, suffix]")
    key = obj.get("key", [])
    if not (isinstance(key, list) and all(isinstance(k, int) for k in key)):
        raise SchemaViolation(f"line {lineno}: key must be a list of integers")
    return QaInstance(
        id=_expect(obj, "id", str, lineno),
        turn=_expect(obj, "turn", int, lineno),
        kind=kind,
        utterance=obj.get("utterance", ""),
        question=_expect(obj, "question", str, lineno),
        answer=_expect(obj, "answer", str, lineno),
        context=_expect(obj, "context", str, lineno),
        metadata_context=obj.get("metadata", ""),
        state_context=obj.get("state", ""),
        masked_declarative=masked or "",
        decl_prefix=decl[0],
        decl_suffix=decl[1],
        target_path=tuple(path),
        record_id=obj.get("record_id", ""),
        domain=obj.get("domain", ""),
        key=tuple(key),
    )


def dumps_instance(inst: QaInstance) -> str:
    return json.dumps(instance_to_json(inst), ensure_ascii=False)


def write_qa_jsonl(instances: Iterable[QaInstance], path: str | os.PathLike) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for inst in instances:
                fh.write(dumps_instance(inst) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def loads_qa_jsonl(text: str) -> list[QaInstance]:
    out = []
    for lineno, line in enumerate(text.split("\n"), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"line {lineno}: {exc}") from None
        out.append(instance_from_json(obj, lineno))
    return out


def read_qa_jsonl(path: str | os.PathLike) -> list[QaInstance]:
    return loads_qa_jsonl(_read_text(path))


# -- few-shot sampling ------------------------------------------------------------------

def sample_spis(corpus: Sequence[ParseTree], k: int, seed: int = 0) -> list[ParseTree]:
    """Greedy per-label coverage sample.

    Utterances are visited in a seeded random order and kept whenever one of
    their labels has been seen fewer than ``k`` times among kept utterances.
    Every label therefore ends up in at least ``min(k, available)`` kept
    utterances.  The result preserves corpus order.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    order = list(range(len(corpus)))
    random.Random(seed).shuffle(order)
    counts: Counter = Counter()
    keep: set[int] = set()
    for i in order:
        present = set(labels(corpus[i].root))
        if any(counts[l] < k for l in present):
            keep.add(i)
            counts.update(present)
    return [corpus[i] for i in sorted(keep)]


def label_coverage(corpus: Iterable[ParseTree]) -> Counter:
    """Number of utterances containing each label."""
    counts: Counter = Counter()
    for tree in corpus:
        counts.update(set(labels(tree.root)))
    return counts


# -- statistics -----------------------------------------------------------------------------

@dataclass(frozen=True)
class DomainStats:
    domain: str
    n: int
    n_intents: int
    n_slots: int
    flat_pct: float
    mean_depth: float
    questions_per_instance: float

    def row(self) -> str:
        return (f"{self.domain}\t{self.n}\t{self.n_intents}\t{self.n_slots}\t"
                f"{self.flat_pct:.2f}\t{self.mean_depth:.2f}\t{self.questions_per_instance:.2f}")


STATS_HEADER = "domain\tinstances\tintents\tslots\tflat_pct\tmean_depth\tq_per_inst"


def corpus_stats(corpus: Iterable[ParseTree], ontologies: Mapping[str, Ontology] | None = None,
                 lexicon: Lexicon | None = None) -> list[DomainStats]:
    """Per-domain counts; questions per instance come from running MT
    generation against the given (or corpus-extracted) ontology."""
    by_domain: dict[str, list[ParseTree]] = {}
    for tree in corpus:
        by_domain.setdefault(tree.domain, []).append(tree)
    out = []
    for domain in sorted(by_domain):
        trees = by_domain[domain]
        ontology = (ontologies or {}).get(domain) or extract_ontology(trees, domain)
        intents, slots = set(), set()
        for t in trees:
            for label in labels(t.root):
                (intents if label.startswith("IN:") else slots).add(label)
        stats = [compute_stats(t) for t in trees]
        questions = sum(len(generate_multiturn(t, ontology, lexicon)) for t in trees)
        out.append(DomainStats(
            domain=domain,
            n=len(trees),
            n_intents=len(intents),
            n_slots=len(slots),
            flat_pct=100.0 * sum(s.is_flat for s in stats) / len(trees),
            mean_depth=sum(s.depth for s in stats) / len(trees),
            questions_per_instance=questions / len(trees),
        ))
    return out


def render_stats(rows: Sequence[DomainStats]) -> str:
    return "\n".join([STATS_HEADER] + [r.row() for r in rows]) + "\n"
