"""A from-scratch breadth-limited propose/evaluate BFS, used as a reference.

It knows nothing about knowledge machines: every proposal and every
evaluation goes to the backends. Trees, counters and statuses are built so
that a machine-free search can be compared with it field by field.
"""

from smot.extraction import Outcome, ReasoningTree
from smot.search import BackendCalls, SearchResult, Status


def plain_bfs(s0, proposer, evaluator, domain, step_limit, breadth):
    tree = ReasoningTree()
    root = tree.add_root(s0)
    calls = BackendCalls()

    def solved(nid):
        tree.set_outcome(nid, Outcome.SUCCESS)
        return SearchResult(Status.SOLVED, tree.trajectory_to(nid), calls, tree)

    if domain.is_success(s0):
        return solved(root)

    visited = {s0}
    layer = [root]
    depth = 0
    while depth < step_limit:
        depth += 1
        fresh = []
        for nid in layer:
            calls.proposer += 1
            proposals = list(proposer.propose(tree.nodes[nid].state, breadth))[:breadth]
            if len(proposals) == 0:
                tree.set_outcome(nid, Outcome.FAILURE)
            for sol in proposals:
                if sol.target not in visited:
                    visited.add(sol.target)
                    fresh.append(tree.add_child(nid, sol.label, sol.target))
        winners = [n for n in fresh if domain.is_success(tree.nodes[n].state)]
        if winners:
            return solved(winners[0])
        scores = {}
        for n in fresh:
            calls.evaluator += 1
            scores[n] = int(evaluator.evaluate(tree.nodes[n].state))
        best_first = sorted(fresh, key=lambda n: (-scores[n], fresh.index(n)))
        layer = best_first[:breadth]
        if not layer:
            return SearchResult(Status.EXHAUSTED, [], calls, tree)
    return SearchResult(Status.STEP_LIMIT, [], calls, tree)
