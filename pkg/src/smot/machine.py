"""Knowledge state machine: polarity-tagged sub-problem transitions.

States are opaque text keys produced by a problem domain. Each state entry
carries an optional solvability mark and an insertion-ordered set of
outgoing transitions, each tagged conducive (+) or non-conducive (-).

A state whose entry has neither a mark nor transitions is a *bare key*: it
is only referenced as the target of some transition and does not count as
a recorded state.

On-disk format (``smot-sm 1``), one tab-separated record per line::

    smot-sm 1
    I   <initial-key>
    S   <key>   <+|-|?>
    T   <from-key>  <label>  <to-key>  <+|->
"""

from __future__ import annotations

import io
import math
import os
import random
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from fractions import Fraction
from typing import IO, Iterator, Optional, Union

FORMAT_NAME = "smot-sm"
FORMAT_VERSION = 1


class Polarity(IntEnum):
    # Ordered so that max() implements the conducive-wins conflict rule.
    NON_CONDUCIVE = 0
    CONDUCIVE = 1

    @property
    def symbol(self) -> str:
        return "+" if self is Polarity.CONDUCIVE else "-"


class Solvability(Enum):
    KNOWN_SOLVABLE = "known_solvable"
    KNOWN_UNSOLVABLE = "known_unsolvable"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class SubSolution:
    """One reasoning step: an action label and the key of the resulting state."""

    label: str
    target: str

    def __post_init__(self):
        if not self.label:
            raise ValueError("sub-solution label must be non-empty")
        if not self.target:
            raise ValueError("sub-solution target key must be non-empty")


@dataclass
class StateEntry:
    solvability: Optional[Polarity] = None
    transitions: dict[SubSolution, Polarity] = field(default_factory=dict)

    @property
    def bare(self) -> bool:
        return self.solvability is None and not self.transitions

    def copy(self) -> "StateEntry":
        return StateEntry(self.solvability, dict(self.transitions))


class MachineFormatError(ValueError):
    def __init__(self, message: str, lineno: Optional[int] = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class MachineVersionError(MachineFormatError):
    pass


class KnowledgeStateMachine:
    """Keyed store of sub-problem states and their recorded transitions.

    Built by a single writer (``record_transition`` / ``mark_state``); once
    construction is done the machine is only read, and the experiment
    mutations (:func:`subsample_states`, :func:`inject_noise`) return copies.
    """

    def __init__(self, initial: Optional[str] = None):
        self.initial = initial
        self._entries: dict[str, StateEntry] = {}

    # -- construction ------------------------------------------------------

    def _entry(self, key: str) -> StateEntry:
        if not key:
            raise ValueError("state key must be non-empty")
        entry = self._entries.get(key)
        if entry is None:
            entry = self._entries[key] = StateEntry()
        return entry

    def mark_state(self, key: str, polarity: Polarity) -> None:
        entry = self._entry(key)
        if entry.solvability is None or polarity > entry.solvability:
            entry.solvability = polarity

    def record_transition(
        self,
        source: str,
        sol: SubSolution,
        polarity: Polarity,
        *,
        mark_target: bool = True,
    ) -> "KnowledgeStateMachine":
        """Upsert ``source --sol--> sol.target`` with the given polarity.

        Conducive marks win over non-conducive ones, both on the edge and on
        the state marks. A conducive edge marks its source conducive; a
        non-conducive edge says nothing about its source, which is created
        unmarked if new. With ``mark_target=False`` the target is kept as a
        bare key (used for domain-terminal states that are not recorded).
        """
        entry = self._entry(source)
        previous = entry.transitions.get(sol)
        if previous is None or polarity > previous:
            entry.transitions[sol] = polarity
        if polarity is Polarity.CONDUCIVE:
            self.mark_state(source, Polarity.CONDUCIVE)
        if mark_target:
            self.mark_state(sol.target, polarity)
        else:
            self._entry(sol.target)
        return self

    # -- queries -----------------------------------------------------------

    def query_conducive(self, key: str) -> list[SubSolution]:
        entry = self._entries.get(key)
        if entry is None:
            return []
        return [s for s, p in entry.transitions.items() if p is Polarity.CONDUCIVE]

    def query_solvability(self, key: str) -> Solvability:
        entry = self._entries.get(key)
        if entry is None or entry.solvability is None:
            return Solvability.UNKNOWN
        if entry.solvability is Polarity.CONDUCIVE:
            return Solvability.KNOWN_SOLVABLE
        return Solvability.KNOWN_UNSOLVABLE

    def transitions(self, key: str) -> list[tuple[SubSolution, Polarity]]:
        entry = self._entries.get(key)
        return [] if entry is None else list(entry.transitions.items())

    def entry(self, key: str) -> Optional[StateEntry]:
        return self._entries.get(key)

    def keys(self) -> list[str]:
        """Recorded (non-bare) state keys in insertion order."""
        return [k for k, e in self._entries.items() if not e.bare]

    def all_keys(self) -> list[str]:
        return list(self._entries)

    def items(self) -> Iterator[tuple[str, StateEntry]]:
        return iter(self._entries.items())

    def transition_count(self) -> int:
        return sum(len(e.transitions) for e in self._entries.values())

    def __len__(self) -> int:
        return sum(1 for e in self._entries.values() if not e.bare)

    def __contains__(self, key: object) -> bool:
        entry = self._entries.get(key)  # type: ignore[arg-type]
        return entry is not None and not entry.bare

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KnowledgeStateMachine):
            return NotImplemented
        if self.initial != other.initial:
            return False
        if list(self._entries) != list(other._entries):
            return False
        for key, entry in self._entries.items():
            theirs = other._entries[key]
            if entry.solvability != theirs.solvability:
                return False
            if list(entry.transitions.items()) != list(theirs.transitions.items()):
                return False
        return True

    def __repr__(self) -> str:
        return (
            f"KnowledgeStateMachine(states={len(self)}, "
            f"transitions={self.transition_count()}, initial={self.initial!r})"
        )

    def copy(self) -> "KnowledgeStateMachine":
        new = KnowledgeStateMachine(self.initial)
        new._entries = {k: e.copy() for k, e in self._entries.items()}
        return new

    def counts(self) -> dict[str, int]:
        conducive = sum(
            1 for e in self._entries.values() if e.solvability is Polarity.CONDUCIVE
        )
        non_conducive = sum(
            1 for e in self._entries.values() if e.solvability is Polarity.NON_CONDUCIVE
        )
        return {
            "states": len(self),
            "conducive_states": conducive,
            "non_conducive_states": non_conducive,
            "transitions": self.transition_count(),
        }


def _as_fraction(fraction) -> Fraction:
    if isinstance(fraction, float):
        fraction = Fraction(repr(fraction))
    value = Fraction(fraction)
    if not 0 <= value <= 1:
        raise ValueError(f"fraction must lie in [0, 1], got {fraction}")
    return value


def subsample_states(
    sm: KnowledgeStateMachine, fraction, seed: int
) -> KnowledgeStateMachine:
    """Keep ceil(fraction * |states|) recorded states, chosen uniformly.

    Transitions leaving a dropped state go with it. Dropped states that a
    kept transition still points at survive as bare keys.
    """
    frac = _as_fraction(fraction)
    keys = sm.keys()
    n = math.ceil(frac * len(keys))
    chosen = set(random.Random(seed).sample(keys, n))

    targets = {sol.target for key in chosen for sol in sm._entries[key].transitions}
    out = KnowledgeStateMachine(sm.initial if sm.initial in chosen else None)
    for key, entry in sm._entries.items():
        if key in chosen:
            out._entries[key] = entry.copy()
        elif key in targets:
            out._entries[key] = StateEntry()
    return out


def inject_noise(
    sm: KnowledgeStateMachine, fraction, seed: int
) -> KnowledgeStateMachine:
    """Flip ceil(fraction * #conducive) conducive states to non-conducive.

    Every conducive outgoing transition of a flipped state is flipped too.
    """
    frac = _as_fraction(fraction)
    conducive = [
        k for k, e in sm._entries.items() if e.solvability is Polarity.CONDUCIVE
    ]
    n = math.ceil(frac * len(conducive))
    out = sm.copy()
    for key in random.Random(seed).sample(conducive, n):
        entry = out._entries[key]
        entry.solvability = Polarity.NON_CONDUCIVE
        for sol in entry.transitions:
            entry.transitions[sol] = Polarity.NON_CONDUCIVE
    return out


# -- persistence -----------------------------------------------------------

_ESCAPES = {"\\": "\\\\", "\t": "\\t", "\n": "\\n", "\r": "\\r"}
_UNESCAPES = {"\\": "\\", "t": "\t", "n": "\n", "r": "\r"}


def escape_field(text: str) -> str:
    return "".join(_ESCAPES.get(ch, ch) for ch in text)


def unescape_field(text: str, lineno: Optional[int] = None) -> str:
    if "\\" not in text:
        return text
    out = []
    it = iter(text)
    for ch in it:
        if ch != "\\":
            out.append(ch)
            continue
        nxt = next(it, None)
        if nxt not in _UNESCAPES:
            raise MachineFormatError(f"bad escape sequence '\\{nxt or ''}'", lineno)
        out.append(_UNESCAPES[nxt])
    return "".join(out)


_MARKS = {Polarity.CONDUCIVE: "+", Polarity.NON_CONDUCIVE: "-", None: "?"}
_MARKS_BACK = {v: k for k, v in _MARKS.items()}


def dumps(sm: KnowledgeStateMachine) -> str:
    buf = io.StringIO()
    dump(sm, buf)
    return buf.getvalue()


def dump(sm: KnowledgeStateMachine, fp: IO[str]) -> None:
    fp.write(f"{FORMAT_NAME} {FORMAT_VERSION}\n")
    if sm.initial is not None:
        fp.write(f"I\t{escape_field(sm.initial)}\n")
    for key, entry in sm.items():
        fp.write(f"S\t{escape_field(key)}\t{_MARKS[entry.solvability]}\n")
    for key, entry in sm.items():
        src = escape_field(key)
        for sol, pol in entry.transitions.items():
            fp.write(
                f"T\t{src}\t{escape_field(sol.label)}\t"
                f"{escape_field(sol.target)}\t{pol.symbol}\n"
            )


def loads(text: str) -> KnowledgeStateMachine:
    return load(io.StringIO(text))


def _read_header(line: str) -> None:
    parts = line.rstrip("\n").split(" ")
    if len(parts) != 2 or parts[0] != FORMAT_NAME:
        raise MachineFormatError(f"expected '{FORMAT_NAME} <version>' header", 1)
    if parts[1] != str(FORMAT_VERSION):
        raise MachineVersionError(
            f"unsupported {FORMAT_NAME} version {parts[1]!r} "
            f"(this reader handles {FORMAT_VERSION})",
            1,
        )


def load(source: Union[str, os.PathLike, IO[str]]) -> KnowledgeStateMachine:
    """Read a machine from a path or a text stream."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fp:
            return load(fp)

    sm = KnowledgeStateMachine()
    header = source.readline()
    if not header:
        raise MachineFormatError("empty input, missing header", 1)
    _read_header(header)

    for lineno, raw in enumerate(source, start=2):
        line = raw.rstrip("\n")
        if not line:
            continue
        fields = [unescape_field(f, lineno) for f in line.split("\t")]
        kind = fields[0]
        if kind == "I" and len(fields) == 2:
            sm.initial = fields[1]
        elif kind == "S" and len(fields) == 3:
            key, mark = fields[1], fields[2]
            if mark not in _MARKS_BACK:
                raise MachineFormatError(f"bad state mark {mark!r}", lineno)
            if not key:
                raise MachineFormatError("empty state key", lineno)
            if key in sm._entries:
                raise MachineFormatError(f"duplicate state {key!r}", lineno)
            sm._entries[key] = StateEntry(_MARKS_BACK[mark])
        elif kind == "T" and len(fields) == 5:
            src, label, dst, mark = fields[1:]
            if mark not in ("+", "-"):
                raise MachineFormatError(f"bad transition mark {mark!r}", lineno)
            for k in (src, dst):
                if k not in sm._entries:
                    raise MachineFormatError(f"undeclared state {k!r}", lineno)
            try:
                sol = SubSolution(label, dst)
            except ValueError as exc:
                raise MachineFormatError(str(exc), lineno) from None
            sm._entries[src].transitions[sol] = _MARKS_BACK[mark]
        else:
            raise MachineFormatError(f"malformed record {line[:60]!r}", lineno)
    return sm


def save(sm: KnowledgeStateMachine, sink: Union[str, os.PathLike, IO[str]]) -> None:
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w", encoding="utf-8", newline="\n") as fp:
            dump(sm, fp)
    else:
        dump(sm, sink)
