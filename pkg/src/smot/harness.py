"""Experiment pipelines: build machines, run episodes, sweep, self-check.

Every run produces one tab-separated row per episode plus a fixed-width
summary table. Rows carry no timing information, so repeated runs with the
same configuration and deterministic backends are byte-identical.
"""

from __future__ import annotations

import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Iterable, Optional, Sequence

from . import game24, taxi
from .backends import (
    AdapterConfig,
    CompletionClient,
    oracle_backends,
    wandering_mock,
)
from .extraction import (
    Outcome,
    ReasoningTree,
    build_state_machine,
    extract,
    non_conducive_nodes,
)
from .machine import (
    KnowledgeStateMachine,
    Solvability,
    dumps,
    inject_noise,
    load,
    loads,
    subsample_states,
)
from .search import (
    EMPTY_MACHINE,
    SearchAborted,
    SearchConfig,
    SearchResult,
    chain_search,
    search,
)

DOMAINS = ("game24", "taxi")
MODES = ("smot", "tot", "cot")
BACKENDS = ("oracle", "mock", "completion")

DOMAIN_DEFAULTS = {
    "game24": {"step_limit": 3, "breadth_limit": 20, "repetitions": 1},
    "taxi": {"step_limit": taxi.MAX_ACTIONS, "breadth_limit": 5, "repetitions": 20},
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    domain: str = "game24"
    mode: str = "smot"
    backend: str = "oracle"
    search: SearchConfig = field(default_factory=SearchConfig)
    sm_path: Optional[str] = None
    instances: Optional[tuple[int, ...]] = None  # None = domain default set
    repetitions: int = 1
    seed: int = 0
    workers: int = 1
    problems_path: Optional[str] = None
    scenarios_path: Optional[str] = None
    map_path: Optional[str] = None
    adapter: Optional[AdapterConfig] = None

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ConfigError(f"unknown domain {self.domain!r}; choose from {DOMAINS}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; choose from {MODES}")
        if self.backend not in BACKENDS:
            raise ConfigError(f"unknown backend {self.backend!r}; choose from {BACKENDS}")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.backend == "completion" and self.adapter is None:
            raise ConfigError("the completion backend needs an endpoint and model")

    @classmethod
    def for_domain(cls, domain: str, **overrides) -> "ExperimentConfig":
        """Config with the domain's default step/breadth limits and repetitions."""
        if domain not in DOMAIN_DEFAULTS:
            raise ConfigError(f"unknown domain {domain!r}; choose from {DOMAINS}")
        d = DOMAIN_DEFAULTS[domain]
        overrides.setdefault(
            "search", SearchConfig(d["step_limit"], d["breadth_limit"])
        )
        overrides.setdefault("repetitions", d["repetitions"])
        return cls(domain=domain, **overrides)

    @property
    def effective_search(self) -> SearchConfig:
        if self.mode == "cot":
            return replace(self.search, breadth_limit=1)
        return self.search

    def echo(self) -> str:
        inst = "default" if self.instances is None else format_ranges(self.instances)
        s = self.effective_search
        return (
            f"domain={self.domain} mode={self.mode} backend={self.backend} "
            f"K={s.step_limit} B={s.breadth_limit} strategy={s.strategy} "
            f"instances={inst} reps={self.repetitions} seed={self.seed}"
        )


def parse_ranges(text: str) -> tuple[int, ...]:
    """``"901-1000"``, ``"1,3,5-7"``; an empty string or ``none`` is empty."""
    text = text.strip()
    if text.lower() in ("", "none"):
        return ()
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        lo, sep, hi = part.partition("-")
        try:
            if sep:
                a, b = int(lo), int(hi)
                if b < a:
                    raise ConfigError(f"empty range {part!r}")
                out.extend(range(a, b + 1))
            else:
                out.append(int(part))
        except ValueError:
            raise ConfigError(f"bad instance range {part!r}") from None
    return tuple(dict.fromkeys(out))


def format_ranges(ids: Sequence[int]) -> str:
    if not ids:
        return "none"
    parts = []
    start = prev = ids[0]
    for i in list(ids[1:]) + [None]:
        if i is not None and i == prev + 1:
            prev = i
            continue
        parts.append(str(start) if start == prev else f"{start}-{prev}")
        if i is not None:
            start = prev = i
    return ",".join(parts)


# -- domain plumbing -----------------------------------------------------------


@dataclass
class DomainContext:
    domain: object
    starts: dict[int, str]
    default_ids: tuple[int, ...]
    grid: Optional[taxi.GridMap] = None

    def select(self, ids: Optional[Iterable[int]]) -> list[int]:
        ids = self.default_ids if ids is None else tuple(ids)
        missing = [i for i in ids if i not in self.starts]
        if missing:
            raise ConfigError(
                f"instances {format_ranges(missing)} are outside 1-{len(self.starts)}"
            )
        return list(ids)


def domain_context(cfg: ExperimentConfig) -> DomainContext:
    if cfg.domain == "game24":
        problems = game24.load_problem_set(cfg.problems_path)
        starts = {i: p.key for i, p in enumerate(problems, start=1)}
        default = tuple(i for i in game24.EVAL_RANGE if i in starts)
        return DomainContext(game24.Game24Domain(), starts, default)
    grid = taxi.load_map(cfg.map_path) if cfg.map_path else taxi.default_map()
    scen = taxi.load_scenarios(cfg.scenarios_path, grid)
    starts = {i: s.key for i, s in enumerate(scen, start=1)}
    return DomainContext(taxi.TaxiDomain(grid), starts, tuple(starts), grid)


def build_sm(cfg: ExperimentConfig, instances: Optional[Iterable[int]] = None,
             progress: Optional[Callable[[int, int], None]] = None) -> KnowledgeStateMachine:
    """Game24: merge extractions of exhaustive trees over ``instances``
    (default 1-900). Taxi: the shortest-path navigation machine."""
    ctx = domain_context(cfg)
    if cfg.domain == "taxi":
        return taxi.build_navigation_sm(ctx.grid)
    if instances is None:
        instances = cfg.instances if cfg.instances is not None else game24.TRAIN_RANGE
    ids = ctx.select(instances)

    def trees():
        for n, i in enumerate(ids, start=1):
            yield game24.exhaustive_tree(ctx.starts[i])
            if progress:
                progress(n, len(ids))

    return build_state_machine(trees())


def knowledge_for(cfg: ExperimentConfig, ctx: DomainContext, sm: Optional[KnowledgeStateMachine]):
    if cfg.mode != "smot" or sm is None:
        return EMPTY_MACHINE
    if cfg.domain == "taxi":
        return taxi.TaxiKnowledge(sm, ctx.grid)
    return sm


def resolve_machine(cfg: ExperimentConfig, ctx: DomainContext,
                    sm: Optional[KnowledgeStateMachine]) -> Optional[KnowledgeStateMachine]:
    if cfg.mode != "smot":
        return None
    if sm is not None:
        return sm
    if cfg.sm_path:
        return load(cfg.sm_path)
    if cfg.domain == "taxi":
        return taxi.build_navigation_sm(ctx.grid)
    raise ConfigError("smot mode on game24 needs a machine file (--sm)")


# -- episodes and reports ------------------------------------------------------


ROW_FIELDS = (
    "instance", "rep", "start", "status", "proposer_calls",
    "evaluator_calls", "backend_calls", "steps", "answer", "error",
)


@dataclass(frozen=True)
class EpisodeReport:
    instance: int
    repetition: int
    start: str
    status: str
    proposer_calls: int
    evaluator_calls: int
    steps: int
    answer: str = ""
    error: str = ""

    @property
    def solved(self) -> bool:
        return self.status == "solved"

    @property
    def aborted(self) -> bool:
        return self.status == "aborted"

    @property
    def backend_calls(self) -> int:
        return self.proposer_calls + self.evaluator_calls

    def row(self) -> str:
        values = (
            self.instance, self.repetition, self.start, self.status,
            self.proposer_calls, self.evaluator_calls, self.backend_calls,
            self.steps, self.answer, self.error,
        )
        return "\t".join(str(v).replace("\t", " ").replace("\n", " ") for v in values)

    @classmethod
    def from_row(cls, line: str) -> "EpisodeReport":
        f = line.rstrip("\n").split("\t")
        if len(f) != len(ROW_FIELDS):
            raise ValueError(f"expected {len(ROW_FIELDS)} fields, got {len(f)}")
        return cls(int(f[0]), int(f[1]), f[2], f[3], int(f[4]), int(f[5]), int(f[7]), f[8], f[9])


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    episodes: list[EpisodeReport]
    elapsed: float = 0.0

    def __post_init__(self):
        self.episodes.sort(key=lambda e: (e.instance, e.repetition))

    @property
    def total(self) -> int:
        return len(self.episodes)

    @property
    def solved(self) -> int:
        return sum(e.solved for e in self.episodes)

    @property
    def aborted(self) -> int:
        return sum(e.aborted for e in self.episodes)

    @property
    def success_ratio(self) -> Fraction:
        return Fraction(self.solved, self.total) if self.total else Fraction(0)

    def _mean(self, attr: str) -> Fraction:
        if not self.episodes:
            return Fraction(0)
        return Fraction(sum(getattr(e, attr) for e in self.episodes), self.total)

    @property
    def avg_backend_calls(self) -> Fraction:
        return self._mean("backend_calls")

    @property
    def avg_proposer_calls(self) -> Fraction:
        return self._mean("proposer_calls")

    @property
    def avg_evaluator_calls(self) -> Fraction:
        return self._mean("evaluator_calls")

    def rows(self) -> list[str]:
        return ["\t".join(ROW_FIELDS)] + [e.row() for e in self.episodes]

    def tsv(self) -> str:
        return "\n".join(self.rows()) + "\n"

    def table(self) -> str:
        lines = [
            f"# {self.config.echo()}",
            f"{'instance':>8} {'rep':>4} {'status':<10} {'prop':>5} {'eval':>5} {'calls':>6}  answer",
        ]
        for e in self.episodes:
            answer = e.answer or e.error
            lines.append(
                f"{e.instance:>8} {e.repetition:>4} {e.status:<10} {e.proposer_calls:>5} "
                f"{e.evaluator_calls:>5} {e.backend_calls:>6}  {answer[:60]}"
            )
        lines.append(self.summary())
        return "\n".join(lines)

    def summary(self) -> str:
        return (
            f"success {self.solved}/{self.total} ({float(self.success_ratio):.1%})  "
            f"avg calls {float(self.avg_backend_calls):.2f} "
            f"(proposer {float(self.avg_proposer_calls):.2f}, "
            f"evaluator {float(self.avg_evaluator_calls):.2f})  "
            f"aborted {self.aborted}  [{self.elapsed:.1f}s]"
        )


def episode_seed(seed: int, instance: int, rep: int) -> int:
    return random.Random(f"{seed}:{instance}:{rep}").getrandbits(32)


def _answer(domain_id: str, start: str, result: SearchResult) -> str:
    if not result.solved:
        return ""
    if domain_id == "game24":
        return game24.format_equation(start, result.trajectory) if result.trajectory else "24"
    return " ".join(s.label for s in result.trajectory)


def run_episode(cfg: ExperimentConfig, ctx: DomainContext, knowledge, instance: int,
                rep: int, client: Optional[CompletionClient] = None) -> EpisodeReport:
    start = ctx.starts[instance]
    domain = ctx.domain
    if cfg.backend == "oracle":
        proposer, evaluator = oracle_backends(domain)
    elif cfg.backend == "mock":
        proposer = evaluator = wandering_mock(domain, episode_seed(cfg.seed, instance, rep))
    else:
        proposer = evaluator = client.session(domain)

    s = cfg.effective_search
    try:
        if cfg.mode == "cot":
            result = chain_search(start, proposer, domain, s.step_limit)
        else:
            result = search(start, knowledge, proposer, evaluator, s, domain)
    except SearchAborted as exc:
        return EpisodeReport(
            instance, rep, start, "aborted", exc.calls.proposer,
            exc.calls.evaluator, 0, error=f"{type(exc.cause).__name__}: {exc.cause}",
        )
    return EpisodeReport(
        instance, rep, start, result.status.value, result.calls.proposer,
        result.calls.evaluator, len(result.trajectory), _answer(cfg.domain, start, result),
    )


def run_experiment(cfg: ExperimentConfig, sm: Optional[KnowledgeStateMachine] = None,
                   client: Optional[CompletionClient] = None) -> ExperimentReport:
    """Run every selected instance ``repetitions`` times.

    In smot mode the machine is ``sm``, else loaded from ``cfg.sm_path``
    (taxi falls back to building the navigation machine). tot and cot modes
    ignore any machine.
    """
    t0 = time.perf_counter()
    ctx = domain_context(cfg)
    ids = ctx.select(cfg.instances)
    knowledge = knowledge_for(cfg, ctx, resolve_machine(cfg, ctx, sm))
    if cfg.backend == "completion" and client is None:
        client = CompletionClient(cfg.adapter)

    jobs = [(i, r) for i in ids for r in range(cfg.repetitions)]

    def one(job):
        return run_episode(cfg, ctx, knowledge, job[0], job[1], client)

    if cfg.workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            episodes = list(pool.map(one, jobs))
    else:
        episodes = [one(j) for j in jobs]
    return ExperimentReport(cfg, episodes, time.perf_counter() - t0)


# -- sweeps --------------------------------------------------------------------

SWEEP_FIELDS = (
    "kind", "fraction", "seed", "states", "solved", "total",
    "success_ratio", "avg_backend_calls", "avg_proposer_calls", "avg_evaluator_calls",
)


@dataclass(frozen=True)
class SweepRow:
    kind: str
    fraction: float
    seed: int
    states: int
    solved: int
    total: int
    avg_backend_calls: Fraction
    avg_proposer_calls: Fraction
    avg_evaluator_calls: Fraction

    @property
    def success_ratio(self) -> Fraction:
        return Fraction(self.solved, self.total) if self.total else Fraction(0)

    def row(self) -> str:
        return "\t".join(str(v) for v in (
            self.kind, self.fraction, self.seed, self.states, self.solved, self.total,
            f"{float(self.success_ratio):.4f}", f"{float(self.avg_backend_calls):.4f}",
            f"{float(self.avg_proposer_calls):.4f}", f"{float(self.avg_evaluator_calls):.4f}",
        ))


@dataclass
class SweepReport:
    kind: str
    config: ExperimentConfig
    rows: list[SweepRow]

    def tsv(self) -> str:
        return "\n".join(["\t".join(SWEEP_FIELDS)] + [r.row() for r in self.rows]) + "\n"

    def by_fraction(self) -> dict[float, list[SweepRow]]:
        out: dict[float, list[SweepRow]] = {}
        for r in self.rows:
            out.setdefault(r.fraction, []).append(r)
        return out

    def table(self) -> str:
        head = "states kept" if self.kind == "ablate" else "noise"
        lines = [
            f"# {self.config.echo()}",
            f"{head:>12} {'seeds':>5} {'states':>9} {'success':>8} {'avg calls':>10}",
        ]
        for frac, rows in self.by_fraction().items():
            n = len(rows)
            ratio = sum(r.success_ratio for r in rows) / n
            calls = sum(r.avg_backend_calls for r in rows) / n
            states = sum(r.states for r in rows) / n
            lines.append(
                f"{frac:>12.0%} {n:>5} {float(states):>9.0f} {float(ratio):>8.1%} {float(calls):>10.2f}"
            )
        return "\n".join(lines)


def _sweep(kind: str, transform, cfg: ExperimentConfig, base: KnowledgeStateMachine,
           fractions: Sequence[float], seeds: Sequence[int]) -> SweepReport:
    cfg = replace(cfg, mode="smot")
    rows = []
    for frac in fractions:
        for seed in seeds:
            sm = transform(base, frac, seed)
            rep = run_experiment(cfg, sm=sm)
            rows.append(SweepRow(
                kind, frac, seed, len(sm), rep.solved, rep.total, rep.avg_backend_calls,
                rep.avg_proposer_calls, rep.avg_evaluator_calls,
            ))
    return SweepReport(kind, cfg, rows)


def ablate(cfg: ExperimentConfig, base: KnowledgeStateMachine,
           fractions: Sequence[float], seeds: Sequence[int]) -> SweepReport:
    """Run with a random ``fraction`` of the machine's states kept."""
    return _sweep("ablate", subsample_states, cfg, base, fractions, seeds)


def noise_sweep(cfg: ExperimentConfig, base: KnowledgeStateMachine,
                fractions: Sequence[float], seeds: Sequence[int]) -> SweepReport:
    """Run with a ``fraction`` of the conducive entries flipped."""
    return _sweep("noise", inject_noise, cfg, base, fractions, seeds)


# -- self-check ----------------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str


def random_labeled_tree(rng: random.Random, max_nodes: int = 200,
                        exhaustive: bool = False) -> ReasoningTree:
    """Random tree over a small key alphabet (so states repeat) with
    random leaf outcomes, some leaves left unlabelled."""
    n = rng.randint(1, max_nodes)
    tree = ReasoningTree.single(f"s{rng.randrange(20)}", exhaustive=exhaustive)
    for _ in range(n - 1):
        parent = rng.choice(list(tree.nodes))
        tree.add_child(parent, f"a{rng.randrange(5)}", f"s{rng.randrange(40)}")
    for leaf in tree.leaves():
        tree.set_outcome(leaf, rng.choice([Outcome.SUCCESS, Outcome.FAILURE, None]))
    return tree


def _postorder_bad(tree: ReasoningTree, nid: int, bad: set) -> bool:
    node = tree.nodes[nid]
    if not node.children:
        verdict = node.outcome is Outcome.FAILURE or (
            node.outcome is None and tree.exhaustive
        )
    else:
        results = [_postorder_bad(tree, c, bad) for c in node.children]
        verdict = all(results)
    if verdict:
        bad.add(nid)
    return verdict


def _success_paths(tree: ReasoningTree) -> set:
    edges = set()
    for nid, node in tree.nodes.items():
        if node.outcome is Outcome.SUCCESS:
            path = tree.path_to(nid)
            for a, b in zip(path, path[1:]):
                edges.add((tree.nodes[a].state, tree.nodes[b].incoming_label, tree.nodes[b].state))
    return edges


def check_extraction(trees: int = 200, seed: int = 0, max_nodes: int = 1000) -> CheckResult:
    rng = random.Random(seed)
    bad_trees = 0
    for _ in range(trees):
        tree = random_labeled_tree(rng, max_nodes, exhaustive=rng.random() < 0.3)
        expected: set = set()
        _postorder_bad(tree, tree.root, expected)
        ext = extract(tree)
        got = {(s, sol.label, sol.target) for s, sol in ext.conducive}
        if non_conducive_nodes(tree) != expected or got != _success_paths(tree):
            bad_trees += 1
    return CheckResult("extraction vs post-order oracle", bad_trees == 0,
                       f"{trees} random trees, {bad_trees} mismatches")


def check_machine(sm: KnowledgeStateMachine, sample: int = 1000, seed: int = 0) -> CheckResult:
    keys = sm.keys()
    rng = random.Random(seed)
    picked = rng.sample(keys, min(sample, len(keys)))
    mismatches = 0
    for key in picked:
        expected = (
            Solvability.KNOWN_SOLVABLE
            if game24.brute_force_solvable(key)
            else Solvability.KNOWN_UNSOLVABLE
        )
        if sm.query_solvability(key) is not expected:
            mismatches += 1
    return CheckResult("machine vs brute force", mismatches == 0 and bool(picked),
                       f"{len(picked)} of {len(keys)} states sampled, {mismatches} mismatches")


def check_navigation(grid: Optional[taxi.GridMap] = None) -> CheckResult:
    grid = grid or taxi.default_map()
    nav = taxi.build_navigation_sm(grid)
    deviations = 0
    for color in taxi.COLORS:
        dist = taxi.grid_distances(grid, grid.stand(color))
        for cell in grid.cells():
            try:
                path = taxi.follow_navigation(nav, grid, cell, color)
            except taxi.TaxiError:
                deviations += 1
                continue
            if len(path) - 1 != dist[cell]:
                deviations += 1
    ok = deviations == 0 and len(nav) == 25 * 4 - 4
    return CheckResult("taxi navigation optimality", ok,
                       f"{len(nav)} states, {deviations} deviations over 100 (cell, stand) pairs")


def check_round_trip(sm: KnowledgeStateMachine) -> CheckResult:
    ok = loads(dumps(sm)) == sm
    return CheckResult("machine file round trip", ok, f"{len(sm)} states")


def selfcheck(sm_path: Optional[str] = None, train: Iterable[int] = range(1, 31),
              sample: int = 1000, seed: int = 0) -> list[CheckResult]:
    """Oracle-consistency suite. Machine-file load errors propagate."""
    if sm_path:
        sm = load(sm_path)
    else:
        sm = build_sm(ExperimentConfig(domain="game24"), instances=train)
    return [
        check_machine(sm, sample, seed),
        check_extraction(seed=seed),
        check_navigation(),
        check_round_trip(sm),
    ]
