import io
from collections import deque

import pytest
from hypothesis import given, strategies as st

from smot.machine import Solvability
from smot.taxi import (
    COLORS,
    DELIVERED,
    IN_TAXI,
    Action,
    TaxiDomain,
    TaxiError,
    TaxiKnowledge,
    TaxiState,
    build_navigation_sm,
    default_map,
    follow_navigation,
    greedy_episode,
    is_success,
    load_map,
    load_scenarios,
    make_map,
    nav_key,
    scenarios,
    step,
)

GRID = default_map()
CELLS = [(x, y) for x in range(5) for y in range(5)]


def bfs_distances(target):
    """Distance map written against raw wall pairs, not GridMap.move."""
    walls = {frozenset(w) for w in GRID.walls}
    dist = {target: 0}
    q = deque([target])
    while q:
        x, y = q.popleft()
        for dx, dy in ((0, 1), (0, -1), (1, 0), (-1, 0)):
            n = (x + dx, y + dy)
            if not (0 <= n[0] < 5 and 0 <= n[1] < 5):
                continue
            if frozenset(((x, y), n)) in walls or n in dist:
                continue
            dist[n] = dist[(x, y)] + 1
            q.append(n)
    return dist


def test_default_map_layout():
    assert len(GRID.walls) == 6
    assert {c: GRID.stand(c) for c in COLORS} == {
        "R": (0, 4), "G": (4, 4), "Y": (0, 0), "B": (3, 0)
    }
    assert len(set(GRID.stand(c) for c in COLORS)) == 4
    assert len(bfs_distances((0, 0))) == 25


def test_step_examples():
    s = TaxiState((2, 2), "B", "Y", "B")
    west, ok = step(s, Action.WEST, GRID)
    assert west.taxi == (1, 2) and ok
    north, _ = step(west, Action.NORTH, GRID)
    assert north.taxi == (1, 3)
    edge, ok = step(TaxiState((0, 3), "B", "Y"), Action.WEST, GRID)
    assert edge.taxi == (0, 3) and not ok
    carried = TaxiState((0, 0), IN_TAXI, "Y", "B")
    done, ok = step(carried, Action.DROPOFF, GRID)
    assert done.passenger == DELIVERED and ok


def test_pickup_and_dropoff_rules():
    at_blue = TaxiState((3, 0), "B", "Y", "B")
    picked, ok = step(at_blue, Action.PICKUP, GRID)
    assert ok and picked.passenger == IN_TAXI
    same, ok = step(TaxiState((2, 0), "B", "Y"), Action.PICKUP, GRID)
    assert not ok and same.passenger == "B"
    same, ok = step(picked, Action.DROPOFF, GRID)  # not at the destination
    assert not ok and same == picked
    same, ok = step(TaxiState((0, 0), "B", "Y"), Action.DROPOFF, GRID)
    assert not ok


def test_walls_block_moves():
    s, ok = step(TaxiState((1, 3), "B", "Y"), Action.EAST, GRID)
    assert s.taxi == (1, 3) and not ok


def test_wall_symmetry():
    for (x, y) in CELLS:
        if x < 4:
            east_blocked = GRID.move((x, y), Action.EAST) == (x, y)
            west_blocked = GRID.move((x + 1, y), Action.WEST) == (x + 1, y)
            assert east_blocked == west_blocked


@given(
    st.sampled_from(CELLS),
    st.sampled_from(COLORS + (IN_TAXI,)),
    st.sampled_from(COLORS),
    st.sampled_from(list(Action)),
)
def test_step_is_total(cell, passenger, dest, action):
    if passenger == dest:
        return
    s = TaxiState(cell, passenger, dest).validate(GRID)
    nxt, _ = step(s, action, GRID)
    nxt.validate(GRID)
    assert TaxiState.from_key(nxt.key) == nxt


def test_is_success():
    assert is_success(TaxiState((0, 0), DELIVERED, "Y"))
    assert not is_success(TaxiState((0, 0), IN_TAXI, "Y"))
    assert not is_success(TaxiState((0, 0), "B", "Y"))
    assert is_success("(0,0)|D|Y")


def test_state_validation():
    with pytest.raises(TaxiError):
        TaxiState((5, 0), "B", "Y").validate(GRID)
    with pytest.raises(TaxiError):
        TaxiState((0, 0), "B", "B", "B").validate(GRID)
    with pytest.raises(TaxiError):
        TaxiState((1, 1), DELIVERED, "Y").validate(GRID)
    with pytest.raises(TaxiError):
        TaxiState.from_key("nonsense")
    assert TaxiState.from_key(" ( 2 , 2 ) | b | y ").key == "(2,2)|B|Y"


def test_navigation_machine_has_96_states():
    sm = build_navigation_sm(GRID)
    assert len(sm) == 96 == 25 * 4 - 4
    for color in COLORS:
        assert nav_key(GRID.stand(color), color) not in sm


def test_navigation_moves_are_exactly_shortest_path_moves():
    sm = build_navigation_sm(GRID)
    for color in COLORS:
        dist = bfs_distances(GRID.stand(color))
        for cell in CELLS:
            if cell == GRID.stand(color):
                continue
            got = {s.label for s in sm.query_conducive(nav_key(cell, color))}
            want = {
                a.value for a in (Action.NORTH, Action.SOUTH, Action.EAST, Action.WEST)
                if GRID.move(cell, a) != cell and dist[GRID.move(cell, a)] == dist[cell] - 1
            }
            assert got == want and got


def test_navigation_example_towards_red():
    sm = build_navigation_sm(GRID)
    labels = {s.label for s in sm.query_conducive("(2,2)>R")}
    assert labels <= {"West", "North"}
    adjacent = sm.query_conducive("(1,4)>R")
    assert [s.label for s in adjacent] == ["West"]


def test_navigation_following_is_optimal():
    sm = build_navigation_sm(GRID)
    for color in COLORS:
        dist = bfs_distances(GRID.stand(color))
        for cell in CELLS:
            path = follow_navigation(sm, GRID, cell, color)
            assert len(path) - 1 == dist[cell]
            assert [dist[c] for c in path] == list(range(dist[cell], -1, -1))


def test_disconnected_map_is_rejected():
    walls = [((1, y), (2, y)) for y in range(5)]
    grid = make_map(walls, {"R": (0, 4), "G": (4, 4), "Y": (0, 0), "B": (3, 0)})
    with pytest.raises(TaxiError):
        build_navigation_sm(grid)


def test_map_validation():
    with pytest.raises(TaxiError):
        make_map([((0, 0), (0, 1))], {"R": (0, 4), "G": (4, 4), "Y": (0, 0), "B": (3, 0)})
    with pytest.raises(TaxiError):
        make_map([], {"R": (0, 4), "G": (0, 4), "Y": (0, 0), "B": (3, 0)})
    with pytest.raises(TaxiError):
        make_map([], {"R": (0, 4), "G": (4, 4), "Y": (0, 0)})


def test_knowledge_view():
    know = TaxiKnowledge(build_navigation_sm(GRID), GRID)
    at_blue = "(3,0)|B|Y"
    assert [s.label for s in know.query_conducive(at_blue)] == ["Pickup"]
    assert know.query_solvability(at_blue) is Solvability.KNOWN_SOLVABLE
    assert [s.label for s in know.query_conducive("(0,0)|T|Y")] == ["Dropoff"]
    assert know.query_conducive("(0,0)|D|Y") == []
    moves = know.query_conducive("(2,2)|B|Y")
    assert moves and all(m.target.endswith("|B|Y") for m in moves)


def test_scenarios():
    scen = scenarios()
    assert len(scen) == 5
    know = TaxiKnowledge(build_navigation_sm(GRID), GRID)
    domain = TaxiDomain(GRID)
    for s in scen:
        s.validate(GRID)
        assert s.origin == s.passenger and s.origin != s.destination
        final, actions = greedy_episode(s, know)
        assert is_success(final) and len(actions) <= 30
        assert domain.solvable(s.key)
    from smot.taxi import shortest_episode

    assert all(shortest_episode(s) <= 30 for s in scen)


def test_scenario_file_override(tmp_path):
    text = "[one]\ntaxi_start = 1,1\npassenger_origin = Red\ndestination = G\n"
    (s,) = load_scenarios(io.StringIO(text))
    assert s.key == "(1,1)|R|G"
    with pytest.raises(TaxiError, match="missing"):
        load_scenarios(io.StringIO("[x]\ntaxi_start = 1,1\n"))
    with pytest.raises(TaxiError):
        load_scenarios(io.StringIO("[x]\ntaxi_start = 1,1\npassenger_origin = R\ndestination = R\n"))
    with pytest.raises(TaxiError):
        load_scenarios(io.StringIO("[x]\ntaxi_start = 9,9\npassenger_origin = R\ndestination = G\n"))
    with pytest.raises(TaxiError):
        load_scenarios(io.StringIO("[x]\ntaxi_start = 1,1\npassenger_origin = Pink\ndestination = G\n"))
    with pytest.raises(TaxiError):
        load_scenarios(io.StringIO("# nothing\n"))


def test_map_file(tmp_path):
    path = tmp_path / "m.ini"
    path.write_text(
        "[map]\nwalls = 1,3|2,3; 1,4|2,4; 0,0|1,0; 0,1|1,1; 2,0|3,0; 2,1|3,1\n"
        "red = 0,4\ngreen = 4,4\nyellow = 0,0\nblue = 3,0\n"
    )
    assert load_map(path) == GRID
    path.write_text("[map]\nwalls =\nR = 0,0\nG = 4,4\nY = 0,4\nB = 4,0\n")
    open_grid = load_map(path)
    assert len(build_navigation_sm(open_grid)) == 96
    path.write_text("[other]\n")
    with pytest.raises(TaxiError):
        load_map(path)


def test_domain_successors():
    domain = TaxiDomain(GRID)
    labels = [s.label for s in domain.successors("(2,2)|B|Y")]
    assert labels == ["North", "South", "East", "West"]
    assert "Pickup" in [s.label for s in domain.successors("(3,0)|B|Y")]
    assert domain.successors("(0,0)|D|Y") == []
    assert domain.canonical("(2, 2)|b|y") == "(2,2)|B|Y"
