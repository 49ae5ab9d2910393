"""Proposer/evaluator backends.

Three families:

* oracle backends that answer from the domain itself (exact successors and
  brute-force solvability), used as a deterministic stand-in for a model;
* a scripted mock that replays canned answers and keeps a transcript;
* a client for OpenAI-compatible chat-completion endpoints.

The completion client speaks a strict line protocol. Proposal replies
carry one ``<label> -> <state key>`` per line; evaluation replies must
contain the word ``possible`` or ``impossible``.
"""

from __future__ import annotations

import logging
import os
import random
import re
import string
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Union

from .machine import SubSolution
from .search import ProblemDomain, Score

log = logging.getLogger(__name__)

API_KEY_ENV = "SMOT_API_KEY"


class BackendError(RuntimeError):
    pass


class TransportError(BackendError):
    pass


class ParseEmptyError(BackendError):
    pass


class BudgetExceededError(BackendError):
    pass


class ScriptedError(BackendError):
    pass


# -- oracle --------------------------------------------------------------------


class OracleBackend:
    """Exact proposer and evaluator derived from a domain."""

    def __init__(self, domain: ProblemDomain):
        self.domain = domain

    def propose(self, key: str, breadth: int) -> list[SubSolution]:
        return self.domain.successors(key)[:breadth]

    def evaluate(self, key: str) -> Score:
        return Score.POSSIBLE if self.domain.solvable(key) else Score.IMPOSSIBLE


def oracle_backends(domain: ProblemDomain) -> tuple[OracleBackend, OracleBackend]:
    backend = OracleBackend(domain)
    return backend, backend


# -- scripted mock -------------------------------------------------------------

Proposal = Union[list[SubSolution], BaseException]
Verdict = Union[Score, BaseException]


class ScriptedBackend:
    """Replays canned responses keyed by state.

    Unscripted keys fall back to ``default_proposal`` / ``default_verdict``,
    which may be a fixed response, an exception to raise, or a callable
    taking the key (and the breadth, for proposals). Every call, including
    failing ones, is appended to ``transcript``.
    """

    def __init__(
        self,
        proposals: Optional[Mapping[str, Proposal]] = None,
        verdicts: Optional[Mapping[str, Verdict]] = None,
        default_proposal: Any = (),
        default_verdict: Any = Score.POSSIBLE,
    ):
        self.proposals = dict(proposals or {})
        self.verdicts = dict(verdicts or {})
        self.default_proposal = default_proposal
        self.default_verdict = default_verdict
        self.transcript: list[tuple[str, str]] = []

    @staticmethod
    def _resolve(response, *args):
        if isinstance(response, BaseException):
            raise response
        if isinstance(response, type) and issubclass(response, BaseException):
            raise response(f"scripted failure for {args[0]!r}")
        if callable(response):
            return response(*args)
        return response

    def propose(self, key: str, breadth: int) -> list[SubSolution]:
        self.transcript.append(("propose", key))
        if key in self.proposals:
            out = self._resolve(self.proposals[key], key, breadth)
        else:
            out = self._resolve(self.default_proposal, key, breadth)
        return list(out)[:breadth]

    def evaluate(self, key: str) -> Score:
        self.transcript.append(("evaluate", key))
        if key in self.verdicts:
            return self._resolve(self.verdicts[key], key)
        return self._resolve(self.default_verdict, key)


def scripted_mock(
    proposals=None, verdicts=None, default_proposal=(), default_verdict=Score.POSSIBLE
) -> tuple[ScriptedBackend, ScriptedBackend]:
    backend = ScriptedBackend(proposals, verdicts, default_proposal, default_verdict)
    return backend, backend


def wandering_mock(domain: ProblemDomain, seed: int) -> ScriptedBackend:
    """A mock that proposes legal moves in seeded random order.

    It never proposes taxi pick-ups or drop-offs, so on the taxi domain it
    moves around but cannot deliver anyone. Verdicts are always POSSIBLE.
    """
    rng = random.Random(seed)

    def shuffled(key, breadth):
        moves = [s for s in domain.successors(key) if s.label not in ("Pickup", "Dropoff")]
        rng.shuffle(moves)
        return moves[:breadth]

    return ScriptedBackend(default_proposal=shuffled, default_verdict=Score.POSSIBLE)


# -- prompt templates ----------------------------------------------------------


@dataclass(frozen=True)
class PromptTemplate:
    role: str
    domain: str
    text: str

    def __post_init__(self):
        if self.role not in ("propose", "evaluate"):
            raise ValueError(f"template role must be propose or evaluate, not {self.role!r}")
        if not self.text.strip():
            raise ValueError("template text is empty")

    @property
    def placeholders(self) -> set[str]:
        return {f for _, f, _, _ in string.Formatter().parse(self.text) if f}

    def render(self, **values) -> str:
        missing = self.placeholders - values.keys()
        if missing:
            raise ValueError(f"unbound template placeholders: {sorted(missing)}")
        out = self.text.format(**values)
        if not out.strip():
            raise ValueError("rendered prompt is empty")
        return out


def load_templates(
    domain: str, directory: Union[str, os.PathLike, None] = None
) -> dict[str, PromptTemplate]:
    """Load ``<domain>_propose.txt`` and ``<domain>_evaluate.txt``."""
    out = {}
    for role in ("propose", "evaluate"):
        name = f"{domain}_{role}.txt"
        if directory is None:
            text = resources.files("smot.templates").joinpath(name).read_text("utf-8")
        else:
            text = Path(directory, name).read_text("utf-8")
        out[role] = PromptTemplate(role, domain, text)
    return out


# -- completion client ---------------------------------------------------------


@dataclass(frozen=True)
class AdapterConfig:
    endpoint: str
    model: str
    temperature: float = 0.7
    max_retries: int = 2
    timeout: float = 60.0
    budget: int = 200
    api_key: Optional[str] = field(default=None, repr=False)

    def __post_init__(self):
        if self.budget < 0:
            raise ValueError("request budget must be >= 0")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


Transport = Callable[[str, dict, dict, float], dict]


def http_transport(url: str, payload: dict, headers: dict, timeout: float) -> dict:
    import requests

    try:
        resp = requests.post(url, json=payload, headers=headers, timeout=timeout)
    except requests.RequestException as exc:
        raise TransportError(f"request to {url} failed: {exc}") from exc
    if resp.status_code >= 400:
        raise TransportError(f"{url} answered HTTP {resp.status_code}: {resp.text[:200]}")
    try:
        return resp.json()
    except ValueError as exc:
        raise TransportError(f"{url} returned a non-JSON body") from exc


_VERDICT_RE = re.compile(r"\b(impossible|possible)\b", re.IGNORECASE)


def parse_proposals(text: str, canonical: Callable[[str], str]) -> list[SubSolution]:
    """Parse ``<label> -> <key>`` lines; bad lines are dropped with a warning."""
    out = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if "->" not in line:
            log.warning("dropping reply line without '->': %r", line)
            continue
        label, _, target = line.rpartition("->")
        label = label.strip()
        try:
            key = canonical(target.strip())
            out.append(SubSolution(label, key))
        except (ValueError, ArithmeticError) as exc:
            log.warning("dropping reply line %r: %s", line, exc)
    if not out:
        raise ParseEmptyError(f"no proposals could be parsed from reply {text[:200]!r}")
    return out


def parse_verdict(text: str) -> Score:
    m = _VERDICT_RE.search(text)
    if m is None:
        raise ParseEmptyError(f"no verdict in reply {text[:200]!r}")
    return Score.IMPOSSIBLE if m.group(1).lower() == "impossible" else Score.POSSIBLE


class CompletionSession:
    """One episode's worth of model access, with its own request budget."""

    def __init__(
        self,
        cfg: AdapterConfig,
        templates: Mapping[str, PromptTemplate],
        domain: ProblemDomain,
        transport: Optional[Transport] = None,
    ):
        self.cfg = cfg
        self.templates = templates
        self.domain = domain
        self.transport = transport or http_transport
        self.requests_sent = 0

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        api_key = self.cfg.api_key or os.environ.get(API_KEY_ENV)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        return headers

    def complete(self, prompt: str) -> str:
        payload = {
            "model": self.cfg.model,
            "temperature": self.cfg.temperature,
            "messages": [{"role": "user", "content": prompt}],
        }
        retries = 0
        while True:
            if self.requests_sent >= self.cfg.budget:
                raise BudgetExceededError(
                    f"request budget of {self.cfg.budget} exhausted"
                )
            self.requests_sent += 1
            try:
                reply = self.transport(
                    self.cfg.endpoint, payload, self._headers(), self.cfg.timeout
                )
            except TransportError:
                if retries >= self.cfg.max_retries:
                    raise
                retries += 1
                log.info("transport error, retry %d/%d", retries, self.cfg.max_retries)
                continue
            try:
                return reply["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError) as exc:
                raise TransportError(f"malformed completion response: {reply!r:.200}") from exc

    def propose(self, key: str, breadth: int) -> list[SubSolution]:
        prompt = self.templates["propose"].render(state=key, breadth=breadth)
        return parse_proposals(self.complete(prompt), self.domain.canonical)[:breadth]

    def evaluate(self, key: str) -> Score:
        prompt = self.templates["evaluate"].render(state=key)
        return parse_verdict(self.complete(prompt))


class CompletionClient:
    """Shared, immutable configuration; hands out one session per episode."""

    def __init__(
        self,
        cfg: AdapterConfig,
        templates: Optional[Mapping[str, Mapping[str, PromptTemplate]]] = None,
        transport: Optional[Transport] = None,
        template_dir: Union[str, os.PathLike, None] = None,
    ):
        self.cfg = cfg
        self.templates = dict(templates or {})
        self.transport = transport
        self.template_dir = template_dir

    def session(self, domain: ProblemDomain) -> CompletionSession:
        if domain.name not in self.templates:
            self.templates[domain.name] = load_templates(domain.name, self.template_dir)
        return CompletionSession(
            self.cfg, self.templates[domain.name], domain, self.transport
        )


def completion_client(
    cfg: AdapterConfig,
    templates: Mapping[str, PromptTemplate],
    domain: ProblemDomain,
    transport: Optional[Transport] = None,
) -> tuple[CompletionSession, CompletionSession]:
    session = CompletionSession(cfg, templates, domain, transport)
    return session, session
