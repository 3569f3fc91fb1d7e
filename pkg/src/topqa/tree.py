"""Intent/slot parse trees and the bracketed linearized format.

A tree is written as ``[LABEL child child ...]`` where children are either
nested bracketed nodes or plain tokens::

    [IN:GET_DIRECTIONS [SL:DESTINATION [IN:GET_LOCATION
        [SL:CATEGORY_LOCATION parking]]]]

Depth is counted in labeled (intent/slot) nodes along the deepest path; token
leaves do not contribute.  This definition is inferred from the per-domain
averages and depth buckets reported for TOPv2 rather than stated outright.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Iterator

INTENT_PREFIX = "IN:"
SLOT_PREFIX = "SL:"

_TOKEN_RE = re.compile(r"\[|\]|[^\s\[\]]+")


class NodeKind(str, enum.Enum):
    INTENT = "Intent"
    SLOT = "Slot"
    TOKEN = "Token"


class TreeParseError(ValueError):
    """Base class for malformed linearized trees."""


class UnbalancedBrackets(TreeParseError):
    pass


class RootNotIntent(TreeParseError):
    pass


class EmptyNode(TreeParseError):
    pass


class IllegalNesting(TreeParseError):
    pass


class InvalidLabel(TreeParseError):
    pass


class TrailingInput(TreeParseError):
    pass


@dataclass(frozen=True)
class TreeNode:
    kind: NodeKind
    label: str
    children: tuple[TreeNode, ...] = ()

    @property
    def is_token(self) -> bool:
        return self.kind is NodeKind.TOKEN

    def tokens(self) -> list[str]:
        """All token leaves below this node, left to right."""
        if self.is_token:
            return [self.label]
        out: list[str] = []
        for child in self.children:
            out.extend(child.tokens())
        return out

    def text(self) -> str:
        return " ".join(self.tokens())

    def labeled_children(self) -> list[TreeNode]:
        return [c for c in self.children if not c.is_token]

    def token_children(self) -> list[TreeNode]:
        return [c for c in self.children if c.is_token]

    def is_leaf_slot(self) -> bool:
        return self.kind is NodeKind.SLOT and not any(
            c.kind is NodeKind.INTENT for c in self.children)

    def walk(self) -> Iterator[TreeNode]:
        """Preorder traversal, including token leaves."""
        yield self
        for child in self.children:
            yield from child.walk()

    def serialize(self) -> str:
        if self.is_token:
            return self.label
        return "[" + self.label + " " + " ".join(c.serialize() for c in self.children) + "]"

    def __str__(self) -> str:
        return self.serialize()


def intent(label: str, *children: TreeNode | str) -> TreeNode:
    return TreeNode(NodeKind.INTENT, label, _coerce(children))


def slot(label: str, *children: TreeNode | str) -> TreeNode:
    return TreeNode(NodeKind.SLOT, label, _coerce(children))


def token(text: str) -> TreeNode:
    return TreeNode(NodeKind.TOKEN, text)


def _coerce(children) -> tuple[TreeNode, ...]:
    out = []
    for c in children:
        if isinstance(c, str):
            out.extend(token(t) for t in c.split())
        else:
            out.append(c)
    return tuple(out)


@dataclass(frozen=True)
class ParseTree:
    root: TreeNode
    utterance: str = ""
    domain: str = ""

    def serialize(self) -> str:
        return self.root.serialize()

    def replace_root(self, root: TreeNode) -> ParseTree:
        return ParseTree(root, self.utterance, self.domain)


@dataclass(frozen=True)
class TreeStats:
    depth: int
    is_flat: bool
    length: int


def kind_of_label(label: str) -> NodeKind | None:
    if label.startswith(INTENT_PREFIX):
        return NodeKind.INTENT
    if label.startswith(SLOT_PREFIX):
        return NodeKind.SLOT
    return None


def parse_linearized(text: str, utterance: str = "", domain: str = "",
                     *, strict: bool = True) -> ParseTree:
    """Parse a bracketed tree.

    With ``strict=False`` labels need no ``IN:``/``SL:`` prefix and kind
    alternation is not enforced; the root becomes an intent and every other
    bracketed node a slot.  This is the mode used for closed-world order
    trees such as Pizza.
    """
    tokens = _TOKEN_RE.findall(text)
    if not tokens:
        raise EmptyNode("empty input")
    if tokens[0] != "[":
        raise RootNotIntent(f"tree must start with '[', got {tokens[0]!r}")

    pos = 0

    def parse_node(depth: int) -> TreeNode:
        nonlocal pos
        pos += 1  # consume "["
        if pos >= len(tokens):
            raise UnbalancedBrackets("input ends after '['")
        label = tokens[pos]
        if label in ("[", "]"):
            raise EmptyNode(f"missing label at token {pos}")
        pos += 1
        kind = _label_kind(label, depth, strict)
        children: list[TreeNode] = []
        while True:
            if pos >= len(tokens):
                raise UnbalancedBrackets(f"unclosed node {label}")
            tok = tokens[pos]
            if tok == "]":
                pos += 1
                break
            if tok == "[":
                child = parse_node(depth + 1)
                if strict and child.kind is kind:
                    raise IllegalNesting(f"{child.label} directly under {label}")
                children.append(child)
            else:
                children.append(token(tok))
                pos += 1
        if kind is NodeKind.SLOT and not children:
            raise EmptyNode(f"slot {label} has no children")
        return TreeNode(kind, label, tuple(children))

    root = parse_node(0)
    if pos != len(tokens):
        if tokens[pos] == "]":
            raise UnbalancedBrackets(f"unmatched ']' at token {pos}")
        raise TrailingInput(f"unexpected {tokens[pos]!r} after the root node")
    return ParseTree(root, utterance, domain)


def _label_kind(label: str, depth: int, strict: bool) -> NodeKind:
    kind = kind_of_label(label)
    if not strict:
        return NodeKind.INTENT if depth == 0 else NodeKind.SLOT
    if depth == 0 and kind is not NodeKind.INTENT:
        raise RootNotIntent(f"root label {label!r} is not an intent")
    if kind is None:
        raise InvalidLabel(f"label {label!r} lacks an IN:/SL: prefix")
    if len(label) == 3:
        raise InvalidLabel(f"label {label!r} has an empty name")
    return kind


def serialize_linearized(tree: ParseTree | TreeNode) -> str:
    return tree.serialize()


def bracket_tokens(text: str) -> list[str]:
    """Token stream of a linearized string; equal streams mean the strings
    differ only in whitespace."""
    return _TOKEN_RE.findall(text)


def to_decoupled(tree: ParseTree) -> ParseTree:
    """Drop every token that is not a direct child of a leaf slot."""
    return tree.replace_root(decouple_node(tree.root))


def decouple_node(node: TreeNode) -> TreeNode:
    if node.is_token:
        return node
    keep_tokens = node.is_leaf_slot()
    children = tuple(
        decouple_node(c) for c in node.children if keep_tokens or not c.is_token)
    return TreeNode(node.kind, node.label, children)


def tree_depth(node: TreeNode) -> int:
    if node.is_token:
        return 0
    return 1 + max((tree_depth(c) for c in node.children), default=0)


def compute_stats(tree: ParseTree) -> TreeStats:
    depth = tree_depth(tree.root)
    return TreeStats(depth=depth, is_flat=depth <= 2, length=len(tree.utterance.split()))


def labels(node: TreeNode) -> Iterator[str]:
    for n in node.walk():
        if not n.is_token:
            yield n.label


def normalize_text(text: str) -> str:
    return " ".join(text.split())
