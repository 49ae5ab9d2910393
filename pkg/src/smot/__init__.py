"""Knowledge-state-machine guided tree search.

Past reasoning trees are distilled into a machine of conducive and
non-conducive transitions, which then steers and prunes breadth- or
depth-first explore/evaluate search on new problems.
"""

from .extraction import (
    ExtractedTransitions,
    Outcome,
    ReasoningTree,
    build_state_machine,
    extract,
    extract_conducive,
    extract_non_conducive,
)
from .machine import (
    KnowledgeStateMachine,
    MachineFormatError,
    Polarity,
    Solvability,
    SubSolution,
    inject_noise,
    load,
    loads,
    dumps,
    save,
    subsample_states,
)
from .search import (
    BackendCalls,
    Score,
    SearchAborted,
    SearchConfig,
    SearchResult,
    Status,
    chain_search,
    search,
    smot_bfs,
    smot_dfs,
)

__version__ = "0.1.0"
