import random

import pytest

from plain_bfs import plain_bfs
from smot import game24
from smot.backends import ScriptedBackend, ScriptedError, oracle_backends, scripted_mock, wandering_mock
from smot.extraction import Outcome
from smot.machine import KnowledgeStateMachine, Polarity, Solvability, SubSolution
from smot.search import (
    EMPTY_MACHINE,
    BackendCalls,
    Score,
    SearchAborted,
    SearchConfig,
    Status,
    chain_search,
    evaluate,
    propose,
    smot_bfs,
    smot_dfs,
)
from smot.taxi import TaxiDomain, scenarios

G24 = game24.Game24Domain()
ORACLE = oracle_backends(G24)[0]


def refusing():
    return ScriptedBackend(default_proposal=ScriptedError, default_verdict=ScriptedError)


def check_solution(start, result, domain=G24):
    assert result.solved
    key = start
    for sol in result.trajectory:
        assert sol in domain.successors(key)
        key = sol.target
    assert domain.is_success(key)


def test_score_order():
    assert (Score.ABSOLUTELY_SOLVABLE > Score.POSSIBLE > Score.IMPOSSIBLE
            > Score.ABSOLUTELY_UNSOLVABLE)


@pytest.mark.parametrize("kw", [dict(step_limit=0), dict(breadth_limit=0), dict(strategy="astar")])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SearchConfig(**kw)


@pytest.mark.parametrize("fn", [smot_bfs, smot_dfs])
def test_terminal_start(fn):
    r = fn("24", None, refusing(), refusing(), SearchConfig(), G24)
    assert r.status is Status.SOLVED and r.trajectory == [] and r.calls.total == 0
    assert r.tree.nodes[r.tree.root].outcome is Outcome.SUCCESS


def test_propose_prefers_machine(fig1_machine):
    calls = BackendCalls()
    sols, from_machine = propose("2 2 6 6", fig1_machine, refusing(), 20, calls)
    assert from_machine and calls.total == 0
    assert SubSolution("6/2=3", "2 3 6") in sols


def test_propose_caps_backend_output():
    many = [SubSolution(f"m{i}", f"{i}") for i in range(25)]
    backend = ScriptedBackend(default_proposal=lambda k, b: many)
    # the scripted mock already caps; check the search-side cap independently
    backend.propose = lambda key, breadth: many
    calls = BackendCalls()
    sols, from_machine = propose("1 2", EMPTY_MACHINE, backend, 20, calls)
    assert sols == many[:20] and not from_machine and calls.proposer == 1


def test_empty_proposal_makes_failure_leaf():
    p, e = scripted_mock(default_proposal=[])
    r = smot_bfs("1 2", None, p, e, SearchConfig(), G24)
    assert r.status is Status.EXHAUSTED
    assert r.tree.nodes[r.tree.root].outcome is Outcome.FAILURE
    assert r.calls.proposer == 1


def test_evaluate_levels(fig1_machine):
    calls = BackendCalls()
    assert evaluate("3 8", fig1_machine, refusing(), calls) is Score.ABSOLUTELY_SOLVABLE
    assert evaluate("2 4 6", fig1_machine, refusing(), calls) is Score.ABSOLUTELY_UNSOLVABLE
    assert calls.total == 0
    assert evaluate("1 1 1 1", fig1_machine, ORACLE, calls) is Score.IMPOSSIBLE
    assert calls.evaluator == 1


def test_backend_may_not_claim_absolute_verdicts():
    p, e = scripted_mock(default_proposal=lambda k, b: G24.successors(k),
                         default_verdict=Score.ABSOLUTELY_SOLVABLE)
    with pytest.raises(SearchAborted) as info:
        smot_bfs("1 2 3 4", None, p, e, SearchConfig(), G24)
    assert isinstance(info.value.cause, ValueError)


def test_fig1_machine_needs_no_backend(fig1_machine):
    for fn in (smot_bfs, smot_dfs):
        r = fn("2 2 6 6", fig1_machine, refusing(), refusing(), SearchConfig(), G24)
        check_solution("2 2 6 6", r)
        assert r.calls.total == 0
        assert game24.evaluate_equation(game24.format_equation("2 2 6 6", r.trajectory)) == 24


@pytest.mark.parametrize("fn", [smot_bfs, smot_dfs])
def test_unsolvable_instance(fn):
    r = fn("1 1 1 1", None, ORACLE, ORACLE, SearchConfig(3, 20), G24)
    assert not r.solved and r.status in (Status.EXHAUSTED, Status.STEP_LIMIT)
    assert r.trajectory == []


def test_empty_machine_matches_plain_bfs():
    rng = random.Random(3)
    for _ in range(10):
        key = game24.canonical_key(rng.randint(1, 13) for _ in range(4))
        for breadth in (1, 3, 20):
            ours = smot_bfs(key, None, ORACLE, ORACLE, SearchConfig(3, breadth), G24)
            ref = plain_bfs(key, ORACLE, ORACLE, G24, 3, breadth)
            assert ours == ref


def test_empty_machine_matches_plain_bfs_on_taxi():
    domain = TaxiDomain()
    p, e = oracle_backends(domain)
    for s in scenarios():
        ours = smot_bfs(s.key, None, p, e, SearchConfig(30, 5), domain)
        assert ours == plain_bfs(s.key, p, e, domain, 30, 5)


def test_fast_path_dead_end_resumes_search():
    # s0 -> a -> b recorded conducive, but b has nothing recorded beyond it
    sm = KnowledgeStateMachine()
    sm.record_transition("1 2 3 4", SubSolution("1+2=3", "3 3 4"), Polarity.CONDUCIVE)
    sm.record_transition("3 3 4", SubSolution("3+3=6", "4 6"), Polarity.CONDUCIVE)
    backend = ScriptedBackend(
        proposals={"4 6": [SubSolution("4*6=24", "24")]},
        default_verdict=Score.POSSIBLE,
    )
    r = smot_bfs("1 2 3 4", sm, backend, backend, SearchConfig(3, 20), G24)
    check_solution("1 2 3 4", r)
    assert [s.label for s in r.trajectory] == ["1+2=3", "3+3=6", "4*6=24"]
    assert backend.transcript == [("propose", "4 6")]


def test_fast_path_may_exceed_step_limit(fig1_machine):
    r = smot_bfs("2 2 6 6", fig1_machine, refusing(), refusing(), SearchConfig(1, 20), G24)
    assert r.solved and len(r.trajectory) == 3


def test_pruning_keeps_known_unsolvable_out(full_machine, problems):
    pruned_total = 0
    for p in problems[900:920]:
        r = smot_bfs(p.key, full_machine, ORACLE, ORACLE, SearchConfig(), G24)
        check_solution(p.key, r)
        for sol in r.trajectory:
            assert full_machine.query_solvability(sol.target) is not Solvability.KNOWN_UNSOLVABLE
        pruned = [n for n in r.tree.nodes.values()
                  if full_machine.query_solvability(n.state) is Solvability.KNOWN_UNSOLVABLE]
        assert all(not n.children and n.outcome is Outcome.FAILURE for n in pruned)
        pruned_total += len(pruned)
    assert pruned_total > 0


def test_covered_instances_cost_nothing_and_strategies_agree(full_machine, problems):
    for p in problems[:50]:
        bfs = smot_bfs(p.key, full_machine, refusing(), refusing(), SearchConfig(), G24)
        dfs = smot_dfs(p.key, full_machine, refusing(), refusing(), SearchConfig(), G24)
        for r in (bfs, dfs):
            check_solution(p.key, r)
            assert r.calls.total == 0


def test_bfs_and_dfs_agree_with_oracle(problems):
    rng = random.Random(11)
    keys = [game24.canonical_key(rng.randint(1, 13) for _ in range(4)) for _ in range(30)]
    for key in keys:
        bfs = smot_bfs(key, None, ORACLE, ORACLE, SearchConfig(3, 20), G24)
        dfs = smot_dfs(key, None, ORACLE, ORACLE, SearchConfig(3, 20), G24)
        if bfs.solved:
            check_solution(key, bfs)
        if dfs.solved:
            check_solution(key, dfs)
        if not game24.brute_force_solvable(key):
            assert not bfs.solved and not dfs.solved


def test_truthful_machine_never_costs_more(full_machine, problems):
    for p in problems[900:940]:
        with_sm = smot_bfs(p.key, full_machine, ORACLE, ORACLE, SearchConfig(), G24)
        without = smot_bfs(p.key, None, ORACLE, ORACLE, SearchConfig(), G24)
        assert with_sm.calls.total <= without.calls.total


def test_determinism(fig1_machine):
    a = smot_bfs("2 4 6 12", fig1_machine, ORACLE, ORACLE, SearchConfig(), G24)
    b = smot_bfs("2 4 6 12", fig1_machine, ORACLE, ORACLE, SearchConfig(), G24)
    assert a == b


def test_scripted_failure_aborts_with_partial_tree():
    p, e = scripted_mock(
        proposals={"1 2 3 4": lambda k, b: G24.successors(k)},
        verdicts={"1 1 4": ScriptedError},
        default_proposal=ScriptedError,
    )
    with pytest.raises(SearchAborted) as info:
        smot_bfs("1 2 3 4", None, p, e, SearchConfig(), G24)
    exc = info.value
    assert len(exc.tree) > 1 and exc.tree.root == 0
    exc.tree.validate()
    assert len(p.transcript) == exc.calls.total


def test_transcript_matches_counters():
    p, e = scripted_mock(default_proposal=lambda k, b: G24.successors(k))
    r = smot_bfs("1 2 3 4", None, p, e, SearchConfig(3, 4), G24)
    assert len(p.transcript) == r.calls.total


def test_chain_search_on_taxi_hits_step_cap():
    domain = TaxiDomain()
    mock = wandering_mock(domain, 0)
    r = chain_search(scenarios()[0].key, mock, domain, 30)
    assert r.status is Status.STEP_LIMIT
    assert r.calls.proposer == 30 and r.calls.evaluator == 0
    assert len(r.tree) == 31


def test_chain_search_follows_first_proposal():
    r = chain_search("1 2", ORACLE, G24, 3)
    # the first proposal in label order is 1*2=2, a dead end
    assert [s.label for s in r.tree.trajectory_to(1)] == ["1*2=2"]
    assert r.status is Status.EXHAUSTED and r.calls.proposer == 2
    p, _ = scripted_mock(proposals={"4 6": [SubSolution("4*6=24", "24")]})
    r = chain_search("4 6", p, G24, 3)
    check_solution("4 6", r)
