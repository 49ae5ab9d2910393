"""The 5x5 taxi grid world as a search domain.

Coordinates are ``(x, y)`` with x growing east and y growing north, so the
standard layout puts Red at (0, 4) and Yellow at (0, 0). A state key reads
``(x,y)|P|D``: taxi cell, passenger (a stand letter R/G/Y/B while waiting,
``T`` in the taxi, ``D`` delivered) and destination stand.

The navigation machine records, for every cell and every stand, the moves
that lie on a shortest path to that stand. Its keys read ``(x,y)>C``; the
stand cell itself is only kept as a bare arrival key, which gives
25 * 4 - 4 = 96 recorded states on the default map.
"""

from __future__ import annotations

import configparser
import re
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Iterable, Optional, Union

from .machine import KnowledgeStateMachine, Polarity, Solvability, SubSolution

DOMAIN_ID = "taxi"
COLORS = ("R", "G", "Y", "B")
COLOR_NAMES = {"R": "Red", "G": "Green", "Y": "Yellow", "B": "Blue"}
IN_TAXI = "T"
DELIVERED = "D"
MAX_ACTIONS = 30

Cell = tuple[int, int]


class TaxiError(ValueError):
    pass


class Action(Enum):
    NORTH = "North"
    SOUTH = "South"
    EAST = "East"
    WEST = "West"
    PICKUP = "Pickup"
    DROPOFF = "Dropoff"


MOVES = {
    Action.NORTH: (0, 1),
    Action.SOUTH: (0, -1),
    Action.EAST: (1, 0),
    Action.WEST: (-1, 0),
}


def color_code(name: str) -> str:
    name = name.strip()
    for code, full in COLOR_NAMES.items():
        if name.upper() == code or name.lower() == full.lower():
            return code
    raise TaxiError(f"unknown stand colour {name!r}")


def parse_cell(text: str) -> Cell:
    m = re.fullmatch(r"\s*\(?\s*(-?\d+)\s*,\s*(-?\d+)\s*\)?\s*", text)
    if not m:
        raise TaxiError(f"bad cell {text!r}, expected 'x,y'")
    return int(m.group(1)), int(m.group(2))


def fmt_cell(cell: Cell) -> str:
    return f"({cell[0]},{cell[1]})"


@dataclass(frozen=True)
class GridMap:
    walls: frozenset
    stands: tuple[tuple[str, Cell], ...]
    width: int = 5
    height: int = 5

    def __post_init__(self):
        for wall in self.walls:
            a, b = sorted(wall)
            if len(wall) != 2 or a[1] != b[1] or b[0] - a[0] != 1:
                raise TaxiError(f"walls must sit between horizontal neighbours: {sorted(wall)}")
            for cell in (a, b):
                if not self.inside(cell):
                    raise TaxiError(f"wall cell {cell} is off the grid")
        codes = [c for c, _ in self.stands]
        cells = [p for _, p in self.stands]
        if sorted(codes) != sorted(COLORS):
            raise TaxiError(f"map must place each of {COLORS} once, got {codes}")
        if len(set(cells)) != len(cells):
            raise TaxiError("stands must be on distinct cells")
        for cell in cells:
            if not self.inside(cell):
                raise TaxiError(f"stand cell {cell} is off the grid")

    def inside(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    def stand(self, color: str) -> Cell:
        return dict(self.stands)[color]

    def cells(self) -> list[Cell]:
        return [(x, y) for y in range(self.height) for x in range(self.width)]

    def blocked(self, a: Cell, b: Cell) -> bool:
        return frozenset((a, b)) in self.walls

    def move(self, cell: Cell, action: Action) -> Cell:
        dx, dy = MOVES[action]
        nxt = (cell[0] + dx, cell[1] + dy)
        if not self.inside(nxt) or self.blocked(cell, nxt):
            return cell
        return nxt

    def render(self, taxi: Optional[Cell] = None) -> str:
        """Text dump, north at the top."""
        lookup = {p: c for c, p in self.stands}
        rows = ["+" + "-" * (2 * self.width - 1) + "+"]
        for y in reversed(range(self.height)):
            row = "|"
            for x in range(self.width):
                ch = lookup.get((x, y), " ")
                if taxi == (x, y):
                    ch = ch.lower() if ch != " " else "T"
                row += ch
                if x < self.width - 1:
                    row += "|" if self.blocked((x, y), (x + 1, y)) else ":"
            rows.append(row + "|")
        rows.append(rows[0])
        return "\n".join(rows)


def make_map(walls: Iterable[tuple[Cell, Cell]], stands: dict[str, Cell]) -> GridMap:
    return GridMap(
        frozenset(frozenset(w) for w in walls),
        tuple((c, stands[c]) for c in COLORS if c in stands),
    )


def default_map() -> GridMap:
    return make_map(
        walls=[
            ((1, 3), (2, 3)),
            ((1, 4), (2, 4)),
            ((0, 0), (1, 0)),
            ((0, 1), (1, 1)),
            ((2, 0), (3, 0)),
            ((2, 1), (3, 1)),
        ],
        stands={"R": (0, 4), "G": (4, 4), "Y": (0, 0), "B": (3, 0)},
    )


@dataclass(frozen=True)
class TaxiState:
    taxi: Cell
    passenger: str
    destination: str
    origin: Optional[str] = field(default=None, compare=False)

    @property
    def key(self) -> str:
        return f"{fmt_cell(self.taxi)}|{self.passenger}|{self.destination}"

    @classmethod
    def from_key(cls, key: str) -> "TaxiState":
        m = re.fullmatch(
            r"\s*\(\s*(\d+)\s*,\s*(\d+)\s*\)\s*\|\s*([A-Za-z])\s*\|\s*([A-Za-z])\s*", key
        )
        if not m:
            raise TaxiError(f"bad taxi state key {key!r}")
        passenger = m.group(3).upper()
        origin = passenger if passenger in COLORS else None
        return cls((int(m.group(1)), int(m.group(2))), passenger, m.group(4).upper(), origin)

    def validate(self, grid: GridMap) -> "TaxiState":
        if not grid.inside(self.taxi):
            raise TaxiError(f"taxi cell {self.taxi} is off the grid")
        if self.destination not in COLORS:
            raise TaxiError(f"destination must be one of {COLORS}")
        if self.passenger not in COLORS + (IN_TAXI, DELIVERED):
            raise TaxiError(f"bad passenger location {self.passenger!r}")
        if self.origin is not None and self.origin == self.destination:
            raise TaxiError("passenger origin and destination must differ")
        if self.passenger == self.destination:
            raise TaxiError("a waiting passenger cannot already be at the destination")
        if self.passenger == DELIVERED and self.taxi != grid.stand(self.destination):
            raise TaxiError("a delivered passenger implies the taxi is at the destination")
        return self


def step(state: TaxiState, action: Action, grid: GridMap) -> tuple[TaxiState, bool]:
    """Apply ``action``; returns the new state and whether it had any effect.

    Blocked moves and pick-ups/drop-offs in the wrong place are no-ops.
    """
    if state.passenger == DELIVERED:
        return state, False
    if action in MOVES:
        cell = grid.move(state.taxi, action)
        if cell == state.taxi:
            return state, False
        return TaxiState(cell, state.passenger, state.destination, state.origin), True
    if action is Action.PICKUP:
        if state.passenger in COLORS and state.taxi == grid.stand(state.passenger):
            return TaxiState(state.taxi, IN_TAXI, state.destination, state.origin), True
        return state, False
    if action is Action.DROPOFF:
        if state.passenger == IN_TAXI and state.taxi == grid.stand(state.destination):
            return TaxiState(state.taxi, DELIVERED, state.destination, state.origin), True
        return state, False
    raise TaxiError(f"unknown action {action!r}")


def is_success(state: Union[TaxiState, str]) -> bool:
    if isinstance(state, str):
        state = TaxiState.from_key(state)
    return state.passenger == DELIVERED


def grid_distances(grid: GridMap, target: Cell) -> dict[Cell, int]:
    # Moves are reversible (walls are symmetric), so BFS from the target
    # gives the distance to it from every cell.
    dist = {target: 0}
    queue = deque([target])
    while queue:
        cell = queue.popleft()
        for action in MOVES:
            nxt = grid.move(cell, action)
            if nxt not in dist:
                dist[nxt] = dist[cell] + 1
                queue.append(nxt)
    return dist


def nav_key(cell: Cell, color: str) -> str:
    return f"{fmt_cell(cell)}>{color}"


def build_navigation_sm(grid: Optional[GridMap] = None) -> KnowledgeStateMachine:
    """Conducive shortest-path moves from every cell to every stand."""
    grid = grid or default_map()
    sm = KnowledgeStateMachine()
    for color in COLORS:
        target = grid.stand(color)
        dist = grid_distances(grid, target)
        unreachable = [c for c in grid.cells() if c not in dist]
        if unreachable:
            raise TaxiError(f"cells {unreachable} cannot reach stand {color}")
        for cell in grid.cells():
            if cell == target:
                continue
            for action in MOVES:
                nxt = grid.move(cell, action)
                if nxt != cell and dist[nxt] == dist[cell] - 1:
                    sm.record_transition(
                        nav_key(cell, color),
                        SubSolution(action.value, nav_key(nxt, color)),
                        Polarity.CONDUCIVE,
                        mark_target=nxt != target,
                    )
    return sm


def _goal(state: TaxiState) -> Optional[str]:
    if state.passenger in COLORS:
        return state.passenger
    if state.passenger == IN_TAXI:
        return state.destination
    return None


class TaxiKnowledge:
    """Answers machine queries for full taxi states from a navigation machine.

    The navigation target is the passenger's stand before pick-up and the
    destination afterwards. At the target cell the single conducive action is
    Pickup or Dropoff.
    """

    def __init__(self, nav: KnowledgeStateMachine, grid: Optional[GridMap] = None):
        self.nav = nav
        self.grid = grid or default_map()

    def query_conducive(self, key: str) -> list[SubSolution]:
        state = TaxiState.from_key(key)
        goal = _goal(state)
        if goal is None:
            return []
        if state.taxi == self.grid.stand(goal):
            action = Action.PICKUP if state.passenger in COLORS else Action.DROPOFF
            nxt, _ = step(state, action, self.grid)
            return [SubSolution(action.value, nxt.key)]
        out = []
        for sol in self.nav.query_conducive(nav_key(state.taxi, goal)):
            nxt, moved = step(state, Action(sol.label), self.grid)
            if moved:
                out.append(SubSolution(sol.label, nxt.key))
        return out

    def query_solvability(self, key: str) -> Solvability:
        state = TaxiState.from_key(key)
        goal = _goal(state)
        if goal is None or state.taxi == self.grid.stand(goal):
            return Solvability.KNOWN_SOLVABLE
        return self.nav.query_solvability(nav_key(state.taxi, goal))


class TaxiDomain:
    name = DOMAIN_ID

    def __init__(self, grid: Optional[GridMap] = None):
        self.grid = grid or default_map()

    def canonical(self, key: str) -> str:
        return TaxiState.from_key(key).validate(self.grid).key

    def successors(self, key: str) -> list[SubSolution]:
        state = TaxiState.from_key(key)
        out = []
        for action in Action:
            nxt, changed = step(state, action, self.grid)
            if changed:
                out.append(SubSolution(action.value, nxt.key))
        return out

    def is_success(self, key: str) -> bool:
        return is_success(key)

    def solvable(self, key: str) -> bool:
        return _deliverable(self.grid, TaxiState.from_key(key).key)

    def describe(self, key: str) -> str:
        return self.grid.render(TaxiState.from_key(key).taxi) + "\n" + key


@lru_cache(maxsize=4096)
def _deliverable(grid: GridMap, key: str) -> bool:
    domain = TaxiDomain(grid)
    seen = {key}
    queue = deque([key])
    while queue:
        cur = queue.popleft()
        if is_success(cur):
            return True
        for sol in domain.successors(cur):
            if sol.target not in seen:
                seen.add(sol.target)
                queue.append(sol.target)
    return False


def shortest_episode(state: TaxiState, grid: Optional[GridMap] = None) -> int:
    """Fewest actions needed to deliver the passenger (BFS over full states)."""
    domain = TaxiDomain(grid)
    dist = {state.key: 0}
    queue = deque([state.key])
    while queue:
        cur = queue.popleft()
        if is_success(cur):
            return dist[cur]
        for sol in domain.successors(cur):
            if sol.target not in dist:
                dist[sol.target] = dist[cur] + 1
                queue.append(sol.target)
    raise TaxiError(f"passenger cannot be delivered from {state.key}")


def follow_navigation(
    nav: KnowledgeStateMachine, grid: GridMap, cell: Cell, color: str, limit: int = 100
) -> list[Cell]:
    """Cells visited by always taking the first recorded conducive move."""
    path = [cell]
    target = grid.stand(color)
    while path[-1] != target:
        moves = nav.query_conducive(nav_key(path[-1], color))
        if not moves or len(path) > limit:
            raise TaxiError(f"navigation from {cell} to {color} stalls at {path[-1]}")
        path.append(grid.move(path[-1], Action(moves[0].label)))
    return path


def greedy_episode(
    state: TaxiState,
    knowledge: TaxiKnowledge,
    max_actions: int = MAX_ACTIONS,
) -> tuple[TaxiState, list[Action]]:
    """Drive the taxi with the first conducive action until delivery or the cap."""
    actions = []
    while not is_success(state) and len(actions) < max_actions:
        options = knowledge.query_conducive(state.key)
        if not options:
            break
        action = Action(options[0].label)
        state, _ = step(state, action, knowledge.grid)
        actions.append(action)
    return state, actions


# -- configuration files -------------------------------------------------------


def _read_ini(source) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    try:
        if source is None:
            parser.read_string(
                resources.files("smot.data").joinpath("taxi_scenarios.ini").read_text()
            )
        elif hasattr(source, "read"):
            parser.read_file(source)
        else:
            with open(source, encoding="utf-8") as fp:
                parser.read_file(fp)
    except configparser.Error as exc:
        raise TaxiError(f"unreadable config: {exc}") from exc
    return parser


def load_scenarios(source=None, grid: Optional[GridMap] = None) -> list[TaxiState]:
    """Read start configurations (``taxi_start``, ``passenger_origin``,
    ``destination`` per section); ``None`` loads the bundled five."""
    grid = grid or default_map()
    parser = _read_ini(source)
    out = []
    for name in parser.sections():
        sec = parser[name]
        try:
            taxi = parse_cell(sec["taxi_start"])
            origin = color_code(sec["passenger_origin"])
            dest = color_code(sec["destination"])
        except KeyError as exc:
            raise TaxiError(f"[{name}] is missing {exc.args[0]!r}") from None
        except TaxiError as exc:
            raise TaxiError(f"[{name}] {exc}") from None
        try:
            out.append(TaxiState(taxi, origin, dest, origin).validate(grid))
        except TaxiError as exc:
            raise TaxiError(f"[{name}] {exc}") from None
    if not out:
        raise TaxiError("no scenarios defined")
    return out


def scenarios() -> list[TaxiState]:
    return load_scenarios()


def load_map(source) -> GridMap:
    """Read a ``[map]`` section: ``walls = x,y|x,y; ...`` plus one line per stand."""
    parser = _read_ini(source)
    if "map" not in parser:
        raise TaxiError("map file needs a [map] section")
    sec = parser["map"]
    walls = []
    for item in sec.get("walls", "").split(";"):
        if not item.strip():
            continue
        try:
            a, b = item.split("|")
        except ValueError:
            raise TaxiError(f"bad wall {item!r}, expected 'x,y|x,y'") from None
        walls.append((parse_cell(a), parse_cell(b)))
    stands = {}
    for option, value in sec.items():
        if option == "walls":
            continue
        stands[color_code(option)] = parse_cell(value)
    return make_map(walls, stands)
