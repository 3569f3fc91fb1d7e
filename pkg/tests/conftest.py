from __future__ import annotations

import json
import random
from pathlib import Path

import pytest
from hypothesis import strategies as st

from topqa.canonical import load_grammar
from topqa.ontology import load_lexicon, load_schema
from topqa.synthetic import TreeSpec, random_order_tree, random_tree
from topqa.tree import parse_linearized

FIXTURES = Path(__file__).parent / "fixtures"
DATA = Path(__file__).parents[1] / "src" / "topqa" / "data"

FIG1_UTTERANCE = "Look up directions to the nearest parking near S Beritania Street."
FIG1_TREE = ("[IN:GET_DIRECTIONS Look up directions to [SL:DESTINATION [IN:GET_LOCATION the "
             "[SL:LOCATION_MODIFIER nearest ] [SL:CATEGORY_LOCATION parking ] "
             "[SL:LOCATION_MODIFIER [IN:GET_LOCATION [SL:SEARCH_RADIUS near ] "
             "[SL:LOCATION S Beritania Street ] ] ] ] ] ]")

# Lines collected by acceptance tests and echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def fig1():
    return parse_linearized(FIG1_TREE, FIG1_UTTERANCE, "navigation")


@pytest.fixture(scope="session")
def nav_schema():
    return load_schema(DATA / "navigation.schema.json")


@pytest.fixture(scope="session")
def nav_lexicon():
    return load_lexicon(DATA / "navigation.lexicon.tsv")


@pytest.fixture(scope="session")
def grammar():
    return load_grammar()


@pytest.fixture(scope="session")
def fig2_golden():
    return json.loads((FIXTURES / "fig2_golden.json").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def fig3_golden():
    return json.loads((FIXTURES / "fig3_golden.json").read_text(encoding="utf-8"))


@pytest.fixture
def fig3(fig3_golden):
    return parse_linearized(fig3_golden["tree"], "[utterance]", "pizza", strict=False)


def trees(spec: TreeSpec = TreeSpec()):
    """Hypothesis strategy of random valid trees, shrinking on the seed."""
    return st.integers(min_value=0, max_value=2**32 - 1).map(
        lambda seed: random_tree(random.Random(seed), spec))


def order_trees():
    grammar = load_grammar()
    return st.integers(min_value=0, max_value=2**32 - 1).map(
        lambda seed: random_order_tree(random.Random(seed), grammar))


# -- independent oracles ---------------------------------------------------------------

def bracket_depth(linearized: str) -> int:
    """Deepest bracket nesting, read straight off the string."""
    depth = best = 0
    for ch in linearized:
        if ch == "[":
            depth += 1
            best = max(best, depth)
        elif ch == "]":
            depth -= 1
    return best


def brute_equal(a, b, norm=lambda s: " ".join(s.split()).lower()) -> bool:
    """Unordered tree equality by backtracking child matching.

    Token children are grouped into maximal runs, as text.
    """
    if a.label != b.label or a.kind != b.kind:
        return False

    def items(node):
        out, run = [], []
        for c in node.children:
            if c.is_token:
                run.append(c.label)
            else:
                if run:
                    out.append(norm(" ".join(run)))
                    run = []
                out.append(c)
        if run:
            out.append(norm(" ".join(run)))
        return out

    xs, ys = items(a), items(b)
    if len(xs) != len(ys):
        return False

    def match(i, used):
        if i == len(xs):
            return True
        for j, y in enumerate(ys):
            if j in used:
                continue
            x = xs[i]
            same = (x == y) if isinstance(x, str) or isinstance(y, str) else brute_equal(x, y, norm)
            if same and match(i + 1, used | {j}):
                return True
        return False

    return match(0, frozenset())


def expected_question_count(root, ontology, force_nested=False) -> int:
    """MT questions for a tree, counted from the question rules directly:
    one root question; per intent a slots question when the ontology gives
    it slots; per distinct slot label a value question; per slot value a
    nested question when the slot may hold an intent."""
    def intent_count(node):
        n = 0
        if ontology.slots_for(node.label):
            n += 1
        slot_children = [c for c in node.children if c.kind.value == "Slot"]
        n += len({c.label for c in slot_children})
        for c in slot_children:
            if ontology.nested_for(c.label) or force_nested:
                n += 1
            for g in c.children:
                if g.kind.value == "Intent":
                    n += intent_count(g)
        return n

    return 1 + intent_count(root)


def _strip_lead(text: str, inst) -> str:
    """Drop the metadata and said-clause sentences from a declarative."""
    if inst.metadata_context and text.startswith(inst.metadata_context + " "):
        text = text[len(inst.metadata_context) + 1:]
    q = inst.utterance
    for said in (f"A user said, ``{q}'' ", f"A user said ``{q}'' "):
        if text.startswith(said):
            return text[len(said):]
    raise AssertionError(f"no said-clause in {text!r}")


def msp_violations(instances, mask="[MASK]") -> list[str]:
    """Check every MT instance: one mask token, and its filled declarative
    (answer projected onto each dependent turn) equals that turn's state."""
    from topqa.dialogue import plan_waves
    from topqa.generation import QaKind, to_msp

    problems = []
    by_key = {i.key: i for i in instances}
    for inst in instances:
        masked = to_msp(inst, mask).masked_declarative
        if masked.count(mask) != 1:
            problems.append(f"{inst.id}: {masked.count(mask)} masks")
        if inst.fill(mask) != masked:
            problems.append(f"{inst.id}: fill mismatch")
    plan_waves(instances)  # parent links must exist
    for child in instances:
        k = child.key
        if child.kind is QaKind.ROOT_INTENT:
            continue
        if child.kind is QaKind.SLOTS:
            parent = by_key[k[:-1]]
            part = parent.answer
        elif child.kind is QaKind.SLOT_VALUE:
            parent = by_key[k[:-2] + (0,)]
            labels = parent.answer.split(", ")
            part = labels[k[-2] - 1]
        else:
            parent = by_key[k[:-1] + (0,)]
            part = parent.answer.split("; ")[k[-1] - 1]
        stated = _strip_lead(parent.fill(part), parent)
        if stated != child.state_context:
            problems.append(f"{parent.id}->{child.id}: {stated!r} != {child.state_context!r}")
    return problems
