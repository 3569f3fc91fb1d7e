"""Command-line entry point: ``topqa <command> ...``.

Every command exits 0 when no input row was rejected and no record failed
to process.  Wrong answers from a model are results, not failures, and do
not affect the exit code.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import ExitStack
from pathlib import Path
from typing import Iterable, Sequence

from . import __version__
from .answers import (ReconstructionError, ReconstructionReason, parse_multiturn_answers,
                      parse_singleturn_answer)
from .canonical import (GrammarError, drive_pizza, generate_pizza_qa, load_grammar,
                        parse_pizza_answers, parse_pizza_st_answer, pizza_oracle_answer)
from .dataset import (IoError, SchemaViolation, TsvResult, corpus_stats, dumps_instance,
                      read_qa_jsonl, read_tsv, render_stats, sample_spis, write_tsv)
from .dialogue import (NoisyAnswerer, SubprocessAnswerer, TurnBudgetExceeded,
                       drive_multiturn)
from .generation import (DEFAULT_MASK, GenerationError, QaInstance, QaKind, QaOptions,
                         generate_multiturn, generate_singleturn, to_msp)
from .metrics import EvalReport, evaluate_corpus
from .ontology import Lexicon, Ontology, OntologyError, extract_ontology, load_lexicon, load_schema
from .tree import ParseTree, TreeParseError, parse_linearized

ERROR_PREFIX = "ERROR "


class CommandError(Exception):
    pass


def _warn(msg: str) -> None:
    print(msg, file=sys.stderr)


def _load(path: str, strict: bool = True) -> TsvResult:
    result = read_tsv(path, strict=strict)
    for r in result.rejects:
        _warn(f"{path}:{r.line}: {r.reason}: {r.detail}")
    return result


def _lexicon(args) -> Lexicon:
    return load_lexicon(getattr(args, "lexicon", None))


def _ontologies(args, trees: Sequence[ParseTree], domains: Iterable[str] = ()) -> dict[str, Ontology]:
    """Schema file if given, else labels extracted per domain from the
    training file or the input itself."""
    if getattr(args, "ontology", None):
        schema = load_schema(args.ontology)
        domains = {t.domain for t in trees} | {schema.domain} | set(domains)
        return {d: schema for d in domains}
    source = list(trees)
    if getattr(args, "train", None):
        source = _load(args.train).trees
    by_domain: dict[str, list[ParseTree]] = {}
    for t in source:
        by_domain.setdefault(t.domain, []).append(t)
    return {d: extract_ontology(ts, d) for d, ts in by_domain.items()}


def _options(args) -> QaOptions:
    return QaOptions(metadata=args.metadata, state=args.state, force_nested=args.force_nested)


def _grammar(args):
    return load_grammar(args.grammar_file) if getattr(args, "grammar_file", None) else (
        load_grammar() if getattr(args, "pizza", False) else None)


def _open_out(path: str | None, stack: ExitStack):
    if not path or path == "-":
        return sys.stdout
    return stack.enter_context(open(path, "w", encoding="utf-8", newline="\n"))


# -- convert ----------------------------------------------------------------------

def cmd_convert(args) -> int:
    grammar = _grammar(args)
    data = _load(args.input, strict=grammar is None)
    lexicon = _lexicon(args)
    options = _options(args)
    ontologies = {} if grammar else _ontologies(args, data.trees)
    errors = 0
    with ExitStack() as stack:
        out = _open_out(args.output, stack)
        for record, tree in zip(data.records, data.trees):
            try:
                if grammar is not None:
                    instances = generate_pizza_qa(tree, grammar, args.mode, options, record.record_id)
                elif args.mode == "mt":
                    instances = generate_multiturn(tree, ontologies[tree.domain], lexicon, options,
                                                   record.record_id)
                else:
                    instances = [generate_singleturn(tree, ontologies[tree.domain], lexicon, options,
                                                     record.record_id)]
            except (GenerationError, GrammarError, KeyError) as exc:
                _warn(f"{args.input}:{record.line}: {type(exc).__name__}: {exc}")
                errors += 1
                continue
            for inst in instances:
                if args.msp:
                    inst = to_msp(inst, args.mask_token)
                out.write(dumps_instance(inst) + "\n")
    return 1 if errors or data.rejects else 0


# -- reconstruct ------------------------------------------------------------------------

def _read_predictions(path: str) -> dict[str, str]:
    answers = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            obj = json.loads(line)
            if not isinstance(obj, dict) or "id" not in obj or "answer" not in obj:
                raise SchemaViolation(f"{path}:{lineno}: expected {{id, answer}}")
            answers[str(obj["id"])] = str(obj["answer"])
    return answers


def _group(instances: Iterable[QaInstance]) -> list[list[QaInstance]]:
    groups: dict[str, list[QaInstance]] = {}
    for inst in instances:
        groups.setdefault(inst.record_id, []).append(inst)
    return list(groups.values())


def reconstruct_group(group: Sequence[QaInstance], answers: dict[str, str],
                      ontologies: dict[str, Ontology], lexicon: Lexicon, options: QaOptions,
                      grammar=None) -> ParseTree | ReconstructionError:
    turns = [(inst, answers.get(inst.id, inst.answer)) for inst in group]
    first = group[0]
    try:
        if grammar is not None:
            if first.kind is QaKind.SINGLE_TURN:
                return parse_pizza_st_answer(turns[0][1], first.utterance, grammar, first.domain)
            return parse_pizza_answers(turns, grammar)
        ontology = ontologies[first.domain]
        if first.kind is QaKind.SINGLE_TURN:
            tree = parse_singleturn_answer(turns[0][1], first.utterance, ontology, lexicon, options)
            return ParseTree(tree.root, first.utterance, first.domain)
        tree = parse_multiturn_answers(turns, ontology, lexicon)
        return ParseTree(tree.root, first.utterance, first.domain)
    except ReconstructionError as exc:
        return exc


def _hypothesis_cell(hyp: ParseTree | ReconstructionError) -> str:
    if isinstance(hyp, ReconstructionError):
        detail = " ".join(hyp.detail.split())
        return f"{ERROR_PREFIX}{hyp.reason.value}" + (f" {detail}" if detail else "")
    return hyp.serialize()


def cmd_reconstruct(args) -> int:
    grammar = _grammar(args)
    instances = read_qa_jsonl(args.input)
    answers = _read_predictions(args.answers) if args.answers else {}
    lexicon = _lexicon(args)
    if grammar is None and not (args.ontology or args.train):
        raise CommandError("reconstruct needs --ontology or --train (or --pizza/--grammar)")
    ontologies = {} if grammar else _ontologies(args, [], {i.domain for i in instances})
    options = QaOptions()
    errors = 0
    with ExitStack() as stack:
        out = _open_out(args.output, stack)
        for group in _group(instances):
            first = group[0]
            if grammar is None and first.domain not in ontologies:
                _warn(f"{first.record_id}: no ontology for domain {first.domain!r}")
                errors += 1
                continue
            hyp = reconstruct_group(group, answers, ontologies, lexicon, options, grammar)
            out.write(f"{first.domain}\t{first.utterance}\t{_hypothesis_cell(hyp)}\n")
    return 1 if errors else 0


# -- evaluate -----------------------------------------------------------------------------

def read_hypotheses(path: str, strict: bool = True) -> list[ParseTree | ReconstructionError]:
    """Rows of ``domain, utterance, tree-or-ERROR``; unparsable trees count as
    malformed answers."""
    out: list[ParseTree | ReconstructionError] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise SchemaViolation(f"{path}:{lineno}: expected 3 columns")
            cell = cols[2].strip()
            if cell.startswith(ERROR_PREFIX):
                name = cell[len(ERROR_PREFIX):].split(" ", 1)[0]
                try:
                    reason = ReconstructionReason(name)
                except ValueError:
                    reason = ReconstructionReason.MALFORMED_ANSWER
                out.append(ReconstructionError(reason, cell))
                continue
            try:
                out.append(parse_linearized(cell, cols[1], cols[0], strict=strict))
            except TreeParseError as exc:
                out.append(ReconstructionError(ReconstructionReason.MALFORMED_ANSWER, str(exc)))
    return out


def _emit_report(report: EvalReport, args, out=None) -> None:
    out = out or sys.stdout
    if getattr(args, "by_depth", False):
        out.write(report.tsv())
        avg = sum(r.avg_length * r.n for r in report.rows) / report.n if report.n else 0.0
        out.write(f"all\t{report.n}\t{avg:.2f}\t{report.em:.4f}\n")
    else:
        out.write(f"n\tEM\n{report.n}\t{report.em:.4f}\n")
    for reason, count in sorted(report.failures.items()):
        out.write(f"# {reason}\t{count}\n")
    if getattr(args, "out_dir", None):
        from .plotting import plot_em_by_depth

        os.makedirs(args.out_dir, exist_ok=True)
        Path(args.out_dir, "em_by_depth.tsv").write_text(report.tsv(), encoding="utf-8")
        plot_em_by_depth(report, Path(args.out_dir, "em_by_depth.png"))


def cmd_evaluate(args) -> int:
    strict = not args.pizza
    gold = _load(args.gold, strict=strict)
    hyps = read_hypotheses(args.pred, strict=strict)
    if len(hyps) != len(gold.trees):
        raise CommandError(f"{len(hyps)} predictions for {len(gold.trees)} gold trees")
    report = evaluate_corpus(zip(hyps, gold.trees), case_sensitive=args.case_sensitive)
    _emit_report(report, args)
    return 1 if gold.rejects else 0


# -- roundtrip ------------------------------------------------------------------------------

class _PizzaOracle:
    single_flight = False

    def __init__(self, gold, grammar):
        self.gold, self.grammar = gold, grammar

    def answer(self, instance):
        return pizza_oracle_answer(instance, self.gold, self.grammar)


def _parse_kinds(text: str | None):
    if not text:
        return None
    by_name = {k.value.lower(): k for k in QaKind}
    try:
        return {by_name[name.strip().lower()] for name in text.split(",") if name.strip()}
    except KeyError as exc:
        raise CommandError(f"unknown question kind {exc.args[0]!r}; "
                           f"choose from {', '.join(k.value for k in QaKind)}") from None


def cmd_roundtrip(args) -> int:
    grammar = _grammar(args)
    data = _load(args.input, strict=grammar is None)
    lexicon = _lexicon(args)
    options = _options(args)
    kinds = _parse_kinds(args.noise_kinds)
    if grammar is not None and (args.noise or args.answerer_cmd):
        raise CommandError("order-grammar round trips support only the oracle answerer")
    ontologies = {} if grammar else _ontologies(args, data.trees)
    pairs = []
    errors = 0
    with ExitStack() as stack:
        executor = (stack.enter_context(ThreadPoolExecutor(args.workers))
                    if args.workers > 1 else None)
        shared = (stack.enter_context(SubprocessAnswerer(args.answerer_cmd))
                  if args.answerer_cmd else None)
        transcripts = _open_out(args.transcripts, stack) if args.transcripts else None
        for record, gold in zip(data.records, data.trees):
            rid = record.record_id
            try:
                hyp, turns = _roundtrip_one(gold, rid, args, grammar, ontologies, lexicon, options,
                                            kinds, shared, executor)
            except (GenerationError, KeyError, OntologyError) as exc:
                _warn(f"{args.input}:{record.line}: {type(exc).__name__}: {exc}")
                errors += 1
                continue
            if transcripts is not None:
                for inst, answer in turns:
                    transcripts.write(dumps_instance(inst.with_answer(answer)) + "\n")
            pairs.append((hyp, gold))
    report = evaluate_corpus(pairs)
    _emit_report(report, args)
    return 1 if errors or data.rejects else 0


def _roundtrip_one(gold, rid, args, grammar, ontologies, lexicon, options, kinds, shared, executor):
    if grammar is not None:
        answerer = _PizzaOracle(gold, grammar)
        if args.mode == "st":
            inst = generate_pizza_qa(gold, grammar, "st", options, rid)[0]
            answer = answerer.answer(inst)
            try:
                return parse_pizza_st_answer(answer, gold.utterance, grammar), [(inst, answer)]
            except ReconstructionError as exc:
                return exc, [(inst, answer)]
        turns = drive_pizza(gold.utterance, grammar, answerer, options, record_id=rid,
                            domain=gold.domain)
        try:
            return parse_pizza_answers(turns, grammar), turns
        except ReconstructionError as exc:
            return exc, turns

    ontology = ontologies[gold.domain]
    answerer = shared or NoisyAnswerer(gold, ontology, lexicon, args.noise, args.seed, kinds, options)
    if args.mode == "st":
        inst = generate_singleturn(gold, ontology, lexicon, options, rid)
        answer = answerer.answer(inst)
        try:
            return parse_singleturn_answer(answer, gold.utterance, ontology, lexicon, options), [(inst, answer)]
        except ReconstructionError as exc:
            return exc, [(inst, answer)]
    try:
        transcript = drive_multiturn(gold.utterance, gold.domain, ontology, lexicon, answerer,
                                     options, record_id=rid, executor=executor)
    except TurnBudgetExceeded as exc:
        return ReconstructionError(ReconstructionReason.CONTRADICTORY_ANSWERS, str(exc)), []
    if transcript.error is not None:
        return transcript.error, transcript.turns
    try:
        return parse_multiturn_answers(transcript.turns, ontology, lexicon), transcript.turns
    except ReconstructionError as exc:
        return exc, transcript.turns


# -- stats / sample ---------------------------------------------------------------------------

def cmd_stats(args) -> int:
    trees: list[ParseTree] = []
    rejected = False
    for path in args.inputs:
        data = _load(path)
        trees.extend(data.trees)
        rejected |= bool(data.rejects)
    ontologies = None
    if args.ontology:
        schema = load_schema(args.ontology)
        ontologies = {schema.domain: schema}
    rows = corpus_stats(trees, ontologies, _lexicon(args))
    sys.stdout.write(render_stats(rows))
    if args.out_dir:
        from .plotting import plot_stats

        os.makedirs(args.out_dir, exist_ok=True)
        Path(args.out_dir, "stats.tsv").write_text(render_stats(rows), encoding="utf-8")
        if rows:
            plot_stats(rows, Path(args.out_dir, "stats.png"))
    return 1 if rejected else 0


def cmd_sample(args) -> int:
    data = _load(args.input)
    subset = sample_spis(data.trees, args.spis, args.seed)
    if args.output and args.output != "-":
        write_tsv(subset, args.output)
    else:
        for t in subset:
            sys.stdout.write(f"{t.domain}\t{t.utterance}\t{t.serialize()}\n")
    return 1 if data.rejects else 0


# -- argument parsing ----------------------------------------------------------------------------

def _add_qa_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lexicon", help="label phrase TSV (default: $TOPQA_LEXICON)")
    p.add_argument("--ontology", help="schema JSON; default is to extract labels from data")
    p.add_argument("--train", help="TSV to extract the ontology from instead of the input")
    p.add_argument("--metadata", action=argparse.BooleanOptionalAction, default=True,
                   help="prepend admissible-label sentences")
    p.add_argument("--state", action=argparse.BooleanOptionalAction, default=True,
                   help="prepend dialogue-state sentences")
    p.add_argument("--force-nested", action="store_true",
                   help="ask the nested-intent question for every slot value")
    p.add_argument("--pizza", action="store_true", help="use the bundled order grammar")
    p.add_argument("--grammar", dest="grammar_file", help="order grammar JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="topqa", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"topqa {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="trees TSV -> QA JSONL")
    p.add_argument("input")
    p.add_argument("-o", "--output")
    p.add_argument("--mode", choices=("st", "mt"), default="mt")
    p.add_argument("--msp", action="store_true", help="fill masked_question")
    p.add_argument("--mask-token", default=DEFAULT_MASK)
    _add_qa_flags(p)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("reconstruct", help="answered QA JSONL -> trees TSV")
    p.add_argument("input")
    p.add_argument("-o", "--output")
    p.add_argument("--answers", help="JSONL of {id, answer} overriding the file's answers")
    _add_qa_flags(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="unordered exact match of predictions against gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--by-depth", action="store_true")
    p.add_argument("--case-sensitive", action="store_true")
    p.add_argument("--pizza", action="store_true", help="trees use unprefixed labels")
    p.add_argument("--out-dir", help="also write em_by_depth.tsv and em_by_depth.png here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("roundtrip", help="drive QA with an oracle, noisy, or external answerer")
    p.add_argument("input")
    p.add_argument("--mode", choices=("st", "mt"), default="mt")
    p.add_argument("--noise", type=float, default=0.0, help="probability of a wrong answer")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-kinds", help="comma list of question kinds noise applies to")
    p.add_argument("--answerer-cmd", help="external answerer speaking JSON lines")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--transcripts", help="write answered turns as JSONL")
    p.add_argument("--by-depth", action="store_true")
    p.add_argument("--out-dir")
    _add_qa_flags(p)
    p.set_defaults(func=cmd_roundtrip)

    p = sub.add_parser("stats", help="per-domain corpus statistics")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--ontology")
    p.add_argument("--lexicon")
    p.add_argument("--out-dir", help="also write stats.tsv and stats.png here")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("sample", help="few-shot per-label coverage sample")
    p.add_argument("input")
    p.add_argument("--spis", type=int, required=True, metavar="K")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_sample)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "noise", 0.0) and not 0.0 <= args.noise <= 1.0:
        parser.error("--noise must lie in [0, 1]")
    if getattr(args, "spis", 1) < 1:
        parser.error("--spis must be at least 1")
    try:
        return args.func(args)
    except (CommandError, IoError, SchemaViolation, OntologyError, GrammarError,
            json.JSONDecodeError) as exc:
        _warn(f"topqa {args.command}: {exc}")
        return 1
    except BrokenPipeError:
        return 1
    except OSError as exc:
        _warn(f"topqa {args.command}: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
