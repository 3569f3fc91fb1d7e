"""Random valid trees and order trees for property tests and benchmarks."""
from __future__ import annotations

import random
from dataclasses import dataclass

from .canonical import CanonicalGrammar
from .tree import NodeKind, ParseTree, TreeNode, token

_SYLLABLES = ("ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo", "ze", "pa", "du", "fe", "go", "hi")


@dataclass
class TreeSpec:
    min_depth: int = 1
    max_depth: int = 8
    max_nodes: int = 40
    n_intents: int = 8
    n_slots: int = 12
    domain: str = "synthetic"
    max_slots_per_intent: int = 3
    p_nested: float = 0.35
    p_filler: float = 0.5


class _Words:
    """Hands out words never repeated within one tree."""

    def __init__(self, rng: random.Random):
        self.rng = rng
        self.used: set[str] = set()

    def take(self) -> str:
        while True:
            word = "".join(self.rng.choice(_SYLLABLES) for _ in range(self.rng.randint(2, 3)))
            if word not in self.used:
                self.used.add(word)
                return word


def random_tree(rng: random.Random, spec: TreeSpec = TreeSpec(), depth: int | None = None) -> ParseTree:
    """A valid full-form tree whose depth is exactly ``depth`` (drawn from
    spec's range when omitted) with at most ``max_nodes`` labeled nodes."""
    if depth is None:
        depth = rng.randint(spec.min_depth, min(spec.max_depth, spec.max_nodes))
    if depth > spec.max_nodes:
        raise ValueError("depth exceeds node budget")
    words = _Words(rng)
    intents = [f"IN:INTENT_{i}" for i in range(spec.n_intents)]
    slots = [f"SL:SLOT_{i}" for i in range(spec.n_slots)]
    # Labeled nodes still allowed beyond the ones the spine needs.
    spare = [spec.max_nodes - depth]

    def leaf_slot() -> TreeNode:
        n = rng.choice((1, 1, 2, 3))
        return TreeNode(NodeKind.SLOT, rng.choice(slots), tuple(token(words.take()) for _ in range(n)))

    def make_intent(level: int, spine: bool, is_root: bool) -> TreeNode:
        # ``level`` counts labeled nodes from the root (root = 1).
        target = depth if spine else min(depth, level + 2 * rng.randint(0, 2))
        children: list[TreeNode] = []
        if is_root or rng.random() < spec.p_filler:
            children.append(token(words.take()))
        n_slots = 0
        if level < target:
            extra = min(spare[0], rng.randint(0, spec.max_slots_per_intent - 1))
            spare[0] -= extra
            n_slots = 1 + extra
        spine_at = rng.randrange(n_slots) if n_slots else -1
        for i in range(n_slots):
            children.append(make_slot(level + 1, spine and i == spine_at, target))
            if rng.random() < spec.p_filler / 2:
                children.append(token(words.take()))
        if not any(c.is_token for c in children) and not n_slots:
            children.append(token(words.take()))
        return TreeNode(NodeKind.INTENT, rng.choice(intents), tuple(children))

    def make_slot(level: int, spine: bool, target: int) -> TreeNode:
        nest = (spine and level < depth) or (
            not spine and level < target and spare[0] > 0 and rng.random() < spec.p_nested)
        if not nest:
            return leaf_slot()
        if not spine:
            spare[0] -= 1
        child = make_intent(level + 1, spine, False)
        return TreeNode(NodeKind.SLOT, rng.choice(slots), (child,))

    root = make_intent(1, True, True)
    return ParseTree(root, " ".join(root.tokens()), spec.domain)


def random_corpus(n: int, seed: int = 0, spec: TreeSpec = TreeSpec()) -> list[ParseTree]:
    rng = random.Random(seed)
    return [random_tree(rng, spec) for _ in range(n)]


def count_labeled(node: TreeNode) -> int:
    return sum(1 for n in node.walk() if not n.is_token)


def random_order_tree(rng: random.Random, grammar: CanonicalGrammar, max_orders: int = 4,
                      domain: str = "pizza") -> ParseTree:
    """A tree the grammar can render: known slots, in-vocabulary values."""
    orders = []
    for _ in range(rng.randint(0, max_orders)):
        label = rng.choice(sorted(grammar.orders))
        orders.append(_random_group(rng, grammar, label))
    root = TreeNode(NodeKind.INTENT, grammar.root, tuple(orders))
    return ParseTree(root, "", domain)


def _random_group(rng: random.Random, grammar: CanonicalGrammar, label: str) -> TreeNode:
    children: list[TreeNode] = []
    for item in grammar.template(label):
        if item.slot is None:
            continue
        if not item.mandatory and rng.random() < 0.5:
            continue
        count = rng.randint(1, 2) if item.repeat else 1
        for _ in range(count):
            if item.slot in grammar.composites:
                children.append(_random_group(rng, grammar, item.slot))
            else:
                value = rng.choice(grammar.vocab[item.slot])
                children.append(TreeNode(NodeKind.SLOT, item.slot,
                                         tuple(token(w) for w in value.split())))
    rng.shuffle(children)
    return TreeNode(NodeKind.SLOT, label, tuple(children))
