"""Reasoning trees and the two traversals that turn them into machine entries.

The top-to-bottom pass keeps every edge that lies on a root-to-success
path. The bottom-to-top pass labels a leaf non-conducive when it failed and
an inner node non-conducive when all of its children are; every edge into a
non-conducive node is kept as a non-conducive transition.

Tree files (``smot-tree 1``) are tab separated::

    smot-tree 1 [exhaustive]
    N   <id>  <state-key>  [success|failure]
    E   <parent-id>  <label>  <child-id>
"""

from __future__ import annotations

import io
import os
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Iterable, Iterator, Optional, Union

from .machine import (
    KnowledgeStateMachine,
    Polarity,
    SubSolution,
    escape_field,
    unescape_field,
)

TREE_FORMAT_NAME = "smot-tree"
TREE_FORMAT_VERSION = 1


class Outcome(Enum):
    SUCCESS = "success"
    FAILURE = "failure"


@dataclass(slots=True)
class TreeNode:
    state: str
    incoming_label: Optional[str] = None
    parent: Optional[int] = None
    children: list[int] = field(default_factory=list)
    outcome: Optional[Outcome] = None


class TreeError(ValueError):
    pass


@dataclass
class ReasoningTree:
    """An explored reasoning tree with labelled leaves.

    ``exhaustive`` means every node was expanded with its complete successor
    set, so unlabelled leaves can be read as failures.
    """

    nodes: dict[int, TreeNode] = field(default_factory=dict)
    root: Optional[int] = None
    exhaustive: bool = False

    @classmethod
    def single(cls, state: str, *, exhaustive: bool = False) -> "ReasoningTree":
        tree = cls(exhaustive=exhaustive)
        tree.add_root(state)
        return tree

    def add_root(self, state: str) -> int:
        if self.root is not None:
            raise TreeError("tree already has a root")
        nid = len(self.nodes)
        self.nodes[nid] = TreeNode(state)
        self.root = nid
        return nid

    def add_child(self, parent: int, label: str, state: str) -> int:
        node = self.nodes[parent]
        if node.outcome is not None:
            raise TreeError(f"node {parent} already has an outcome")
        nid = len(self.nodes)
        while nid in self.nodes:
            nid += 1
        self.nodes[nid] = TreeNode(state, label, parent)
        node.children.append(nid)
        return nid

    def set_outcome(self, nid: int, outcome: Optional[Outcome]) -> None:
        if outcome is not None and self.nodes[nid].children:
            raise TreeError(f"node {nid} has children; only leaves carry outcomes")
        self.nodes[nid].outcome = outcome

    def __len__(self) -> int:
        return len(self.nodes)

    def bfs_order(self) -> list[int]:
        if self.root is None:
            return []
        order = []
        queue = deque([self.root])
        while queue:
            nid = queue.popleft()
            order.append(nid)
            queue.extend(self.nodes[nid].children)
        return order

    def path_to(self, nid: int) -> list[int]:
        path = [nid]
        while self.nodes[path[-1]].parent is not None:
            path.append(self.nodes[path[-1]].parent)
        path.reverse()
        return path

    def trajectory_to(self, nid: int) -> list[SubSolution]:
        return [
            SubSolution(self.nodes[n].incoming_label, self.nodes[n].state)
            for n in self.path_to(nid)[1:]
        ]

    def edges(self) -> Iterator[tuple[int, int]]:
        for nid in self.bfs_order():
            for child in self.nodes[nid].children:
                yield nid, child

    def leaves(self) -> list[int]:
        return [n for n in self.bfs_order() if not self.nodes[n].children]

    def validate(self) -> None:
        if self.root is None:
            if self.nodes:
                raise TreeError("nodes present but no root")
            return
        roots = [n for n, node in self.nodes.items() if node.parent is None]
        if roots != [self.root]:
            raise TreeError(f"expected exactly one root, found {roots}")
        reached = self.bfs_order()
        if len(reached) != len(self.nodes) or len(set(reached)) != len(reached):
            raise TreeError("tree is disconnected or has shared children")
        for nid, node in self.nodes.items():
            if not node.state:
                raise TreeError(f"node {nid} has an empty state key")
            if node.children and node.outcome is not None:
                raise TreeError(f"inner node {nid} carries an outcome")
            if (node.parent is None) != (node.incoming_label is None):
                raise TreeError(f"node {nid}: incoming label iff non-root")
            for child in node.children:
                if self.nodes[child].parent != nid:
                    raise TreeError(f"child {child} does not point back to {nid}")


@dataclass
class ExtractedTransitions:
    conducive: list[tuple[str, SubSolution]] = field(default_factory=list)
    non_conducive: list[tuple[str, SubSolution]] = field(default_factory=list)
    conducive_states: list[str] = field(default_factory=list)
    non_conducive_states: list[str] = field(default_factory=list)


def _edge(tree: ReasoningTree, child: int) -> tuple[str, SubSolution]:
    node = tree.nodes[child]
    parent = tree.nodes[node.parent]
    return parent.state, SubSolution(node.incoming_label, node.state)


def success_nodes(tree: ReasoningTree, order: Optional[list[int]] = None) -> set[int]:
    """Nodes with a success leaf at or below them."""
    found: set[int] = set()
    for nid in reversed(order if order is not None else tree.bfs_order()):
        node = tree.nodes[nid]
        if node.outcome is Outcome.SUCCESS or any(c in found for c in node.children):
            found.add(nid)
    return found


def non_conducive_nodes(
    tree: ReasoningTree, order: Optional[list[int]] = None
) -> set[int]:
    # Reverse BFS order visits every child before its parent.
    bad: set[int] = set()
    for nid in reversed(order if order is not None else tree.bfs_order()):
        node = tree.nodes[nid]
        if node.children:
            if all(c in bad for c in node.children):
                bad.add(nid)
        elif node.outcome is Outcome.FAILURE or (
            node.outcome is None and tree.exhaustive
        ):
            bad.add(nid)
    return bad


def extract_conducive(
    tree: ReasoningTree, order: Optional[list[int]] = None
) -> ExtractedTransitions:
    if order is None:
        order = tree.bfs_order()
    good = success_nodes(tree, order)
    out = ExtractedTransitions()
    states: dict[str, None] = {}
    for nid in order:
        if nid not in good:
            continue
        states[tree.nodes[nid].state] = None
        if nid != tree.root:
            out.conducive.append(_edge(tree, nid))
    out.conducive = list(dict.fromkeys(out.conducive))
    out.conducive_states = list(states)
    return out


def extract_non_conducive(
    tree: ReasoningTree, order: Optional[list[int]] = None
) -> ExtractedTransitions:
    if order is None:
        order = tree.bfs_order()
    bad = non_conducive_nodes(tree, order)
    out = ExtractedTransitions()
    states: dict[str, None] = {}
    for nid in order:
        if nid not in bad:
            continue
        states[tree.nodes[nid].state] = None
        if nid != tree.root:
            out.non_conducive.append(_edge(tree, nid))
    out.non_conducive = list(dict.fromkeys(out.non_conducive))
    out.non_conducive_states = list(states)
    return out


def extract(tree: ReasoningTree) -> ExtractedTransitions:
    """Run both traversals.

    In non-exhaustive trees the same (state, label, target) triple can occur
    at two nodes with different verdicts; the conducive reading is kept.
    """
    order = tree.bfs_order()
    pos = extract_conducive(tree, order)
    neg = extract_non_conducive(tree, order)
    seen = set(pos.conducive)
    return ExtractedTransitions(
        conducive=pos.conducive,
        non_conducive=[e for e in neg.non_conducive if e not in seen],
        conducive_states=pos.conducive_states,
        non_conducive_states=neg.non_conducive_states,
    )


def record_extraction(sm: KnowledgeStateMachine, ext: ExtractedTransitions) -> None:
    for source, sol in ext.conducive:
        sm.record_transition(source, sol, Polarity.CONDUCIVE)
    for source, sol in ext.non_conducive:
        sm.record_transition(source, sol, Polarity.NON_CONDUCIVE)
    for key in ext.conducive_states:
        sm.mark_state(key, Polarity.CONDUCIVE)
    for key in ext.non_conducive_states:
        sm.mark_state(key, Polarity.NON_CONDUCIVE)


def build_state_machine(
    trees: Iterable[ReasoningTree],
    sm: Optional[KnowledgeStateMachine] = None,
) -> KnowledgeStateMachine:
    """Merge the extractions of ``trees`` into one machine (conducive wins)."""
    if sm is None:
        sm = KnowledgeStateMachine()
    for tree in trees:
        if tree.root is None:
            continue
        if sm.initial is None:
            sm.initial = tree.nodes[tree.root].state
        record_extraction(sm, extract(tree))
    return sm


# -- tree files --------------------------------------------------------------


def dump_tree(tree: ReasoningTree, fp: IO[str]) -> None:
    header = f"{TREE_FORMAT_NAME} {TREE_FORMAT_VERSION}"
    fp.write(header + (" exhaustive\n" if tree.exhaustive else "\n"))
    for nid, node in tree.nodes.items():
        fields = ["N", str(nid), escape_field(node.state)]
        if node.outcome is not None:
            fields.append(node.outcome.value)
        fp.write("\t".join(fields) + "\n")
    for parent, child in tree.edges():
        label = escape_field(tree.nodes[child].incoming_label)
        fp.write(f"E\t{parent}\t{label}\t{child}\n")


def dumps_tree(tree: ReasoningTree) -> str:
    buf = io.StringIO()
    dump_tree(tree, buf)
    return buf.getvalue()


def load_tree(source: Union[str, os.PathLike, IO[str]]) -> ReasoningTree:
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fp:
            return load_tree(fp)

    header = source.readline().rstrip("\n").split(" ")
    if len(header) not in (2, 3) or header[0] != TREE_FORMAT_NAME:
        raise TreeError(f"line 1: expected '{TREE_FORMAT_NAME} <version>' header")
    if header[1] != str(TREE_FORMAT_VERSION):
        raise TreeError(f"line 1: unsupported tree format version {header[1]!r}")
    if len(header) == 3 and header[2] != "exhaustive":
        raise TreeError(f"line 1: unknown header flag {header[2]!r}")

    tree = ReasoningTree(exhaustive=len(header) == 3)
    edges = []
    for lineno, raw in enumerate(source, start=2):
        line = raw.rstrip("\n")
        if not line:
            continue
        fields = line.split("\t")
        try:
            if fields[0] == "N" and len(fields) in (3, 4):
                nid = int(fields[1])
                if nid in tree.nodes:
                    raise TreeError(f"duplicate node id {nid}")
                outcome = Outcome(fields[3]) if len(fields) == 4 else None
                tree.nodes[nid] = TreeNode(unescape_field(fields[2]), outcome=outcome)
            elif fields[0] == "E" and len(fields) == 4:
                edges.append((int(fields[1]), unescape_field(fields[2]), int(fields[3])))
            else:
                raise TreeError(f"malformed record {line[:60]!r}")
        except (TreeError, ValueError) as exc:
            raise TreeError(f"line {lineno}: {exc}") from None

    for parent, label, child in edges:
        if parent not in tree.nodes or child not in tree.nodes:
            raise TreeError(f"edge {parent}->{child} references an unknown node")
        if tree.nodes[child].parent is not None:
            raise TreeError(f"node {child} has two parents")
        tree.nodes[child].parent = parent
        tree.nodes[child].incoming_label = label
        tree.nodes[parent].children.append(child)
    roots = [n for n, node in tree.nodes.items() if node.parent is None]
    if len(roots) != 1:
        raise TreeError(f"expected exactly one root, found {len(roots)}")
    tree.root = roots[0]
    tree.validate()
    return tree
