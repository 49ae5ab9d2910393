"""Exploration-evaluation search guided by a knowledge state machine.

The proposer asks the machine for conducive sub-solutions first and only
falls back to the backend when it has none. The evaluator answers from the
machine's solvability marks when it has them (the two *absolute* levels)
and otherwise asks the backend, which may only answer POSSIBLE or
IMPOSSIBLE. With an empty machine both searches reduce to plain
tree-of-thoughts BFS/DFS.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Optional, Protocol

from .extraction import Outcome, ReasoningTree
from .machine import KnowledgeStateMachine, Solvability, SubSolution

log = logging.getLogger(__name__)


class Score(IntEnum):
    ABSOLUTELY_UNSOLVABLE = 0
    IMPOSSIBLE = 1
    POSSIBLE = 2
    ABSOLUTELY_SOLVABLE = 3


class Status(Enum):
    SOLVED = "solved"
    EXHAUSTED = "exhausted"
    STEP_LIMIT = "step_limit"


class Proposer(Protocol):
    def propose(self, key: str, breadth: int) -> list[SubSolution]: ...


class Evaluator(Protocol):
    def evaluate(self, key: str) -> Score: ...


class Knowledge(Protocol):
    def query_conducive(self, key: str) -> list[SubSolution]: ...

    def query_solvability(self, key: str) -> Solvability: ...


class ProblemDomain(Protocol):
    name: str

    def canonical(self, key: str) -> str: ...

    def successors(self, key: str) -> list[SubSolution]: ...

    def is_success(self, key: str) -> bool: ...

    def solvable(self, key: str) -> bool: ...


@dataclass(frozen=True)
class SearchConfig:
    step_limit: int = 3
    breadth_limit: int = 20
    strategy: str = "bfs"

    def __post_init__(self):
        if self.step_limit < 1:
            raise ValueError(f"step limit must be >= 1, got {self.step_limit}")
        if self.breadth_limit < 1:
            raise ValueError(f"breadth limit must be >= 1, got {self.breadth_limit}")
        if self.strategy not in ("bfs", "dfs"):
            raise ValueError(f"unknown strategy {self.strategy!r}")


@dataclass
class BackendCalls:
    proposer: int = 0
    evaluator: int = 0

    @property
    def total(self) -> int:
        return self.proposer + self.evaluator


@dataclass
class SearchResult:
    status: Status
    trajectory: list[SubSolution]
    calls: BackendCalls
    tree: ReasoningTree

    @property
    def solved(self) -> bool:
        return self.status is Status.SOLVED

    @property
    def final_state(self) -> Optional[str]:
        return self.trajectory[-1].target if self.trajectory else None


class SearchAborted(RuntimeError):
    """A backend failed mid-search; the partial tree and counters are attached."""

    def __init__(self, cause: BaseException, tree: ReasoningTree, calls: BackendCalls):
        super().__init__(f"search aborted by backend failure: {cause!r}")
        self.cause = cause
        self.tree = tree
        self.calls = calls


EMPTY_MACHINE = KnowledgeStateMachine()


def propose(
    key: str,
    sm: Knowledge,
    backend: Proposer,
    breadth: int,
    calls: Optional[BackendCalls] = None,
) -> tuple[list[SubSolution], bool]:
    """Candidate sub-solutions for ``key`` and whether they came from ``sm``."""
    recorded = sm.query_conducive(key)
    if recorded:
        return recorded[:breadth], True
    if calls is not None:
        calls.proposer += 1
    return list(backend.propose(key, breadth))[:breadth], False


def evaluate(
    key: str,
    sm: Knowledge,
    backend: Evaluator,
    calls: Optional[BackendCalls] = None,
) -> Score:
    known = sm.query_solvability(key)
    if known is Solvability.KNOWN_SOLVABLE:
        return Score.ABSOLUTELY_SOLVABLE
    if known is Solvability.KNOWN_UNSOLVABLE:
        return Score.ABSOLUTELY_UNSOLVABLE
    if calls is not None:
        calls.evaluator += 1
    verdict = backend.evaluate(key)
    if verdict not in (Score.POSSIBLE, Score.IMPOSSIBLE):
        raise ValueError(f"backend evaluator returned {verdict!r} for {key!r}")
    return Score(verdict)


@dataclass
class _Candidate:
    node: int
    from_machine: bool
    order: int
    score: Optional[Score] = None

    def rank(self):
        # Best score first, then recorded experience, then proposal order.
        return (-self.score, not self.from_machine, self.order)


@dataclass
class _Run:
    s0: str
    sm: Knowledge
    proposer: Proposer
    evaluator: Evaluator
    cfg: SearchConfig
    domain: ProblemDomain
    tree: ReasoningTree = field(default_factory=ReasoningTree)
    calls: BackendCalls = field(default_factory=BackendCalls)
    seen: set = field(default_factory=set)
    counter: int = 0

    def __post_init__(self):
        self.tree.add_root(self.s0)
        self.seen.add(self.s0)

    def state(self, nid: int) -> str:
        return self.tree.nodes[nid].state

    def solved(self, nid: int) -> SearchResult:
        self.tree.set_outcome(nid, Outcome.SUCCESS)
        return SearchResult(
            Status.SOLVED, self.tree.trajectory_to(nid), self.calls, self.tree
        )

    def finish(self, status: Status) -> SearchResult:
        return SearchResult(status, [], self.calls, self.tree)

    def backend(self, fn, *args):
        try:
            return fn(*args)
        except Exception as exc:
            raise SearchAborted(exc, self.tree, self.calls) from exc

    def expand(self, nid: int) -> list[_Candidate]:
        """Propose from ``nid`` and attach unseen targets as children."""
        sols, from_machine = self.backend(
            propose,
            self.state(nid),
            self.sm,
            self.proposer,
            self.cfg.breadth_limit,
            self.calls,
        )
        if not sols:
            self.tree.set_outcome(nid, Outcome.FAILURE)
            return []
        out = []
        for sol in sols:
            if sol.target in self.seen:
                continue
            self.seen.add(sol.target)
            child = self.tree.add_child(nid, sol.label, sol.target)
            out.append(_Candidate(child, from_machine, self.counter))
            self.counter += 1
        return out

    def score(self, cands: list[_Candidate]) -> list[_Candidate]:
        """Evaluate, prune the absolutely unsolvable, return the rest ranked."""
        for c in cands:
            c.score = self.backend(
                evaluate, self.state(c.node), self.sm, self.evaluator, self.calls
            )
        viable = []
        for c in cands:
            if c.score is Score.ABSOLUTELY_UNSOLVABLE:
                self.tree.set_outcome(c.node, Outcome.FAILURE)
            else:
                viable.append(c)
        return sorted(viable, key=_Candidate.rank)

    def follow(self, nid: int) -> tuple[int, bool]:
        """Walk recorded conducive transitions greedily from ``nid``.

        Returns the last node reached and whether it is a success. Only
        targets that are successes or recorded solvable are taken.
        """
        on_path = {self.state(nid)}
        while True:
            key = self.state(nid)
            if self.domain.is_success(key):
                return nid, True
            step = None
            for sol in self.sm.query_conducive(key):
                if sol.target in on_path:
                    continue
                if self.domain.is_success(sol.target) or (
                    self.sm.query_solvability(sol.target) is Solvability.KNOWN_SOLVABLE
                ):
                    step = sol
                    break
            if step is None:
                return nid, False
            nid = self.tree.add_child(nid, step.label, step.target)
            on_path.add(step.target)
            self.seen.add(step.target)


def smot_bfs(
    s0: str,
    sm: Optional[Knowledge],
    proposer: Proposer,
    evaluator: Evaluator,
    cfg: SearchConfig,
    domain: ProblemDomain,
) -> SearchResult:
    """Breadth-first SMoT search.

    Each level expands the whole frontier, scores every new candidate, and
    keeps the ``breadth_limit`` best (absolutely unsolvable ones are pruned
    first). A machine-sourced candidate scored absolutely solvable is
    followed greedily through recorded conducive transitions; a chain that
    reaches success ends the search, a chain that dead-ends puts its last
    node at the front of the next frontier. Such chains may run past the
    step limit since they cost no backend calls.
    """
    run = _Run(s0, sm if sm is not None else EMPTY_MACHINE, proposer, evaluator, cfg, domain)
    root = run.tree.root
    if domain.is_success(s0):
        return run.solved(root)

    frontier = [root]
    for _ in range(cfg.step_limit):
        cands = []
        for nid in frontier:
            cands.extend(run.expand(nid))
        for c in cands:
            if domain.is_success(run.state(c.node)):
                return run.solved(c.node)

        ranked = run.score(cands)
        selected = ranked[: cfg.breadth_limit]

        dead_ends = []
        for c in selected:
            if c.from_machine and c.score is Score.ABSOLUTELY_SOLVABLE:
                end, ok = run.follow(c.node)
                if ok:
                    return run.solved(end)
                if end != c.node:
                    dead_ends.append(end)

        frontier = dead_ends + [c.node for c in selected]
        if not frontier:
            return run.finish(Status.EXHAUSTED)
    return run.finish(Status.STEP_LIMIT)


def smot_dfs(
    s0: str,
    sm: Optional[Knowledge],
    proposer: Proposer,
    evaluator: Evaluator,
    cfg: SearchConfig,
    domain: ProblemDomain,
) -> SearchResult:
    """Depth-first SMoT search.

    Children are tried best-first using the same ranking as BFS; only
    POSSIBLE and ABSOLUTELY_SOLVABLE children are descended into, so a node
    whose children all score lower is a backtrack point.
    """
    run = _Run(s0, sm if sm is not None else EMPTY_MACHINE, proposer, evaluator, cfg, domain)
    cut = False

    def descend(nid: int, depth: int) -> Optional[int]:
        nonlocal cut
        if depth >= cfg.step_limit:
            cut = True
            return None
        cands = run.expand(nid)
        for c in cands:
            if domain.is_success(run.state(c.node)):
                return c.node
        for c in run.score(cands):
            if c.score < Score.POSSIBLE:
                continue
            start = c.node
            if c.from_machine and c.score is Score.ABSOLUTELY_SOLVABLE:
                end, ok = run.follow(c.node)
                if ok:
                    return end
                start = end
            found = descend(start, depth + 1)
            if found is not None:
                return found
        return None

    root = run.tree.root
    if domain.is_success(s0):
        return run.solved(root)
    found = descend(root, 0)
    if found is not None:
        return run.solved(found)
    return run.finish(Status.STEP_LIMIT if cut else Status.EXHAUSTED)


def chain_search(
    s0: str, proposer: Proposer, domain: ProblemDomain, step_limit: int
) -> SearchResult:
    """Single greedy reasoning chain: one proposal per step, no evaluation."""
    tree = ReasoningTree()
    calls = BackendCalls()
    nid = tree.add_root(s0)
    for _ in range(step_limit):
        if domain.is_success(tree.nodes[nid].state):
            break
        calls.proposer += 1
        try:
            sols = list(proposer.propose(tree.nodes[nid].state, 1))
        except Exception as exc:
            raise SearchAborted(exc, tree, calls) from exc
        if not sols:
            tree.set_outcome(nid, Outcome.FAILURE)
            return SearchResult(Status.EXHAUSTED, [], calls, tree)
        nid = tree.add_child(nid, sols[0].label, sols[0].target)

    if domain.is_success(tree.nodes[nid].state):
        tree.set_outcome(nid, Outcome.SUCCESS)
        return SearchResult(Status.SOLVED, tree.trajectory_to(nid), calls, tree)
    # The last node is left unlabelled: running out of steps proves nothing.
    return SearchResult(Status.STEP_LIMIT, [], calls, tree)


def search(
    s0: str,
    sm: Optional[Knowledge],
    proposer: Proposer,
    evaluator: Evaluator,
    cfg: SearchConfig,
    domain: ProblemDomain,
) -> SearchResult:
    fn = smot_bfs if cfg.strategy == "bfs" else smot_dfs
    return fn(s0, sm, proposer, evaluator, cfg, domain)
