"""Command-line entry point: ``smot build-sm | run | ablate | noise | selfcheck``."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from . import harness, machine
from .backends import API_KEY_ENV, AdapterConfig, BackendError
from .harness import ConfigError, ExperimentConfig, parse_ranges
from .search import SearchConfig
from .taxi import TaxiError

log = logging.getLogger("smot")


def _floats(text: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if any(not 0 <= v <= 1 for v in values):
        raise argparse.ArgumentTypeError("fractions must lie in [0, 1]")
    return values


def _ints(text: str) -> list[int]:
    try:
        return list(parse_ranges(text))
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _add_common(p: argparse.ArgumentParser, run: bool = True) -> None:
    p.add_argument("--domain", choices=harness.DOMAINS, default="game24")
    p.add_argument("--instances", help="instance ids, e.g. 901-1000 or 1,3,5-7")
    p.add_argument("--problems", help="24-game problem file (default: bundled set)")
    p.add_argument("--scenarios", help="taxi scenario file (default: bundled set)")
    p.add_argument("--map", help="taxi map override file")
    if not run:
        return
    p.add_argument("--mode", choices=harness.MODES, default="smot")
    p.add_argument("--backend", choices=harness.BACKENDS, default="oracle")
    p.add_argument("--sm", help="machine file (required for smot mode on game24)")
    p.add_argument("--breadth", type=int, help="breadth limit B (game24 20, taxi 5)")
    p.add_argument("--steps", type=int, help="step limit K (game24 3, taxi 30)")
    p.add_argument("--strategy", choices=("bfs", "dfs"), default="bfs")
    p.add_argument("--reps", type=int, help="repetitions per instance (game24 1, taxi 20)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--endpoint", help="chat-completion URL for --backend completion")
    p.add_argument("--model", help="model name for --backend completion")
    p.add_argument("--temperature", type=float, default=0.7)
    p.add_argument("--budget", type=int, default=200, help="max requests per episode")
    p.add_argument("--out", help="write tab-separated rows here")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smot", description="Knowledge-state-machine guided search experiments."
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-sm", help="build a machine file")
    _add_common(p, run=False)
    p.add_argument("--out", required=True, help="machine file to write")
    p.set_defaults(func=cmd_build_sm)

    p = sub.add_parser("run", help="run episodes and report")
    _add_common(p)
    p.set_defaults(func=cmd_run)

    for name, func, default in (
        ("ablate", None, "0,0.01,0.05,0.2,0.6,1.0"),
        ("noise", None, "0,0.2,0.5,0.8"),
    ):
        p = sub.add_parser(name, help=f"{name} sweep over a base machine")
        _add_common(p)
        p.add_argument("--fractions", type=_floats, default=_floats(default))
        p.add_argument("--seeds", type=_ints, default=[0, 1, 2], help="e.g. 0-2")
        p.set_defaults(func=cmd_ablate if name == "ablate" else cmd_noise)

    p = sub.add_parser("selfcheck", help="oracle-consistency checks")
    p.add_argument("--sm", help="check this game24 machine file instead of a fresh one")
    p.add_argument("--sample", type=int, default=1000)
    p.set_defaults(func=cmd_selfcheck)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    d = harness.DOMAIN_DEFAULTS[args.domain]
    overrides = dict(
        problems_path=args.problems,
        scenarios_path=args.scenarios,
        map_path=args.map,
        instances=parse_ranges(args.instances) if args.instances is not None else None,
    )
    if "mode" not in args:
        return ExperimentConfig(domain=args.domain, **overrides)
    adapter = None
    if args.backend == "completion":
        if not args.endpoint or not args.model:
            raise ConfigError("--backend completion needs --endpoint and --model")
        adapter = AdapterConfig(
            args.endpoint, args.model, temperature=args.temperature, budget=args.budget
        )
    search = SearchConfig(
        args.steps if args.steps is not None else d["step_limit"],
        args.breadth if args.breadth is not None else d["breadth_limit"],
        args.strategy,
    )
    return ExperimentConfig(
        domain=args.domain,
        mode=args.mode,
        backend=args.backend,
        search=search,
        sm_path=args.sm,
        repetitions=args.reps if args.reps is not None else d["repetitions"],
        seed=args.seed,
        workers=args.workers,
        adapter=adapter,
        **overrides,
    )


def _write(path: Optional[str], text: str) -> None:
    if path:
        with open(path, "w", encoding="utf-8") as fp:
            fp.write(text)


def cmd_build_sm(args) -> int:
    cfg = config_from_args(args)
    sm = harness.build_sm(
        cfg, progress=lambda n, total: n % 100 == 0 and log.info("%d/%d trees", n, total)
    )
    machine.save(sm, args.out)
    c = sm.counts()
    print(f"{c['states']} states ({c['conducive_states']} conducive, "
          f"{c['non_conducive_states']} non-conducive), "
          f"{c['transitions']} transitions -> {args.out}")
    return 0


def cmd_run(args) -> int:
    cfg = config_from_args(args)
    report = harness.run_experiment(cfg)
    print(report.table())
    _write(args.out, report.tsv())
    return 0 if report.aborted == 0 else 1


def _base_machine(cfg: ExperimentConfig):
    if cfg.sm_path:
        return machine.load(cfg.sm_path)
    if cfg.domain == "taxi":
        return harness.build_sm(cfg)
    raise ConfigError("sweeps on game24 need a base machine file (--sm)")


def _sweep(args, fn) -> int:
    cfg = config_from_args(args)
    report = fn(cfg, _base_machine(cfg), args.fractions, args.seeds)
    print(report.table())
    _write(args.out, report.tsv())
    return 0


def cmd_ablate(args) -> int:
    return _sweep(args, harness.ablate)


def cmd_noise(args) -> int:
    return _sweep(args, harness.noise_sweep)


def cmd_selfcheck(args) -> int:
    results = harness.selfcheck(args.sm, sample=args.sample)
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'}  {r.name}: {r.detail}")
    return 0 if all(r.ok for r in results) else 1


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, TaxiError, machine.MachineFormatError, OSError, ValueError) as exc:
        print(f"smot: error: {exc}", file=sys.stderr)
        return 2
    except BackendError as exc:
        print(f"smot: backend error: {exc} (credentials come from ${API_KEY_ENV})",
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
