"""Unordered exact match and depth-bucketed evaluation reports."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

from .answers import ReconstructionError
from .tree import ParseTree, TreeNode, compute_stats, decouple_node, normalize_text

MISMATCH = "Mismatch"


def canonical_form(node: TreeNode, case_sensitive: bool = False) -> str:
    """A string equal for two nodes iff they match modulo sibling order.

    Runs of adjacent tokens count as one text child, so word order inside a
    span still matters.
    """
    parts: list[str] = []
    run: list[str] = []

    def flush():
        if run:
            text = normalize_text(" ".join(run))
            parts.append('"' + (text if case_sensitive else text.lower()) + '"')
            run.clear()

    for child in node.children:
        if child.is_token:
            run.append(child.label)
        else:
            flush()
            parts.append(canonical_form(child, case_sensitive))
    flush()
    return "[" + node.label + " " + " ".join(sorted(parts)) + "]"


def unordered_em(hypothesis: ParseTree | ReconstructionError | None, reference: ParseTree,
                 *, decouple: bool = True, case_sensitive: bool = False) -> int:
    if not isinstance(hypothesis, ParseTree):
        return 0
    h, r = hypothesis.root, reference.root
    if decouple:
        h, r = decouple_node(h), decouple_node(r)
    return int(canonical_form(h, case_sensitive) == canonical_form(r, case_sensitive))


@dataclass(frozen=True)
class DepthRow:
    depth: int
    n: int
    avg_length: float
    em: float


@dataclass
class EvalReport:
    n: int = 0
    correct: int = 0
    rows: list[DepthRow] = field(default_factory=list)
    failures: Counter = field(default_factory=Counter)

    @property
    def em(self) -> float:
        return self.correct / self.n if self.n else 0.0

    @property
    def per_depth(self) -> dict[int, tuple[int, float, float]]:
        return {r.depth: (r.n, r.em, r.avg_length) for r in self.rows}

    def tsv(self) -> str:
        lines = ["depth\tn\tL\tEM"]
        lines += [f"{r.depth}\t{r.n}\t{r.avg_length:.2f}\t{r.em:.4f}" for r in self.rows]
        return "\n".join(lines) + "\n"

    def render(self) -> str:
        out = [f"EM {self.em:.4f} over {self.n} utterances"]
        for r in self.rows:
            out.append(f"  depth {r.depth}: n={r.n} L={r.avg_length:.2f} EM={r.em:.4f}")
        for reason, count in sorted(self.failures.items()):
            out.append(f"  {reason}: {count}")
        return "\n".join(out) + "\n"


def evaluate_corpus(pairs: Iterable[tuple], **em_kwargs) -> EvalReport:
    """Score ``(hypothesis, reference[, utterance])`` triples, bucketed by
    reference depth.  Length is counted in words of the utterance, falling
    back to the reference's own."""
    report = EvalReport()
    buckets: dict[int, list[tuple[int, int]]] = {}
    for pair in pairs:
        hyp, ref = pair[0], pair[1]
        utterance = pair[2] if len(pair) > 2 and pair[2] is not None else ref.utterance
        score = unordered_em(hyp, ref, **em_kwargs)
        depth = compute_stats(ref).depth
        buckets.setdefault(depth, []).append((score, len(utterance.split())))
        report.n += 1
        report.correct += score
        if not score:
            reason = hyp.reason.value if isinstance(hyp, ReconstructionError) else MISMATCH
            report.failures[reason] += 1
    for depth in sorted(buckets):
        scores = buckets[depth]
        report.rows.append(DepthRow(
            depth=depth,
            n=len(scores),
            avg_length=sum(l for _, l in scores) / len(scores),
            em=sum(s for s, _ in scores) / len(scores),
        ))
    return report


def recompose_em(rows: Iterable[DepthRow]) -> float:
    rows = list(rows)
    total = sum(r.n for r in rows)
    return sum(r.em * r.n for r in rows) / total if total else 0.0
