"""Resumable building blocks: bounded exploration, rendezvous, token-anchored BFS.

All four procedures are written as little step machines.  Each round the
owner feeds in what the agent can observe (degree, entry port, token
presence) and gets back the next action.  Nothing here touches node indices.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field


class SubroutineError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# exploration sequences


class UxsProvider:
    """Deterministic exit-port source for bounded exploration.

    ``port(N, j, degree, entry)`` must be a pure function; the walk it
    induces from any start node of any graph with at most N nodes has to
    visit every node within ``budget(N)`` steps.  That coverage contract is
    validated per test graph (see `validate_coverage`), not assumed.

    The default derivation hashes (seed, N, step) into an offset added to
    the entry port, treating the start of the walk as entry 0.
    """

    def __init__(self, c_explo: int = 2, beta: int = 2, seed: int = 0) -> None:
        if c_explo < 1 or beta < 2:
            raise SubroutineError("need c_explo >= 1 and beta >= 2")
        self.c_explo = c_explo
        self.beta = beta
        self.seed = seed
        self._key = f"uxs:{seed}".encode()

    def budget(self, n_bound: int) -> int:
        return self.c_explo * n_bound**self.beta

    def port(self, n_bound: int, step_index: int, degree: int, entry: int | None) -> int:
        h = hashlib.blake2b(
            n_bound.to_bytes(8, "big") + step_index.to_bytes(8, "big"),
            digest_size=8,
            key=self._key,
        )
        offset = int.from_bytes(h.digest(), "big")
        base = 0 if entry is None else entry
        return (base + offset) % degree


class ExploRun:
    """One execution of the bounded exploration procedure: exactly
    ``budget(N)`` moves, never a wait."""

    __slots__ = ("n_bound", "provider", "steps", "i")

    def __init__(self, n_bound: int, provider: UxsProvider) -> None:
        if n_bound < 2:
            raise SubroutineError("exploration bound must be >= 2")
        self.n_bound = n_bound
        self.provider = provider
        self.steps = provider.budget(n_bound)
        self.i = 0

    @property
    def done(self) -> bool:
        return self.i >= self.steps

    def next_port(self, degree: int, entry: int | None) -> int:
        if self.done:
            raise SubroutineError("exploration already complete")
        p = self.provider.port(self.n_bound, self.i, degree, entry)
        if not 0 <= p < degree:
            raise SubroutineError(f"provider returned port {p} for degree {degree}")
        self.i += 1
        return p


def explo_walk(graph, start: int, n_bound: int, provider: UxsProvider) -> list[int]:
    """Simulator-side replay of one exploration; returns the visited nodes."""
    run = ExploRun(n_bound, provider)
    node = start
    entry: int | None = None
    visited = [start]
    while not run.done:
        p = run.next_port(graph.degree(node), entry)
        entry = graph.reverse_port(node, p)
        node = graph.succ(node, p)
        visited.append(node)
    return visited


def validate_coverage(graph, provider: UxsProvider, n_bound: int) -> list[int]:
    """Start nodes from which the walk misses some node (empty means OK)."""
    bad = []
    for start in range(graph.n):
        if len(set(explo_walk(graph, start, n_bound, provider))) != graph.n:
            bad.append(start)
    return bad


def coverage_or_escalate(graphs, base: UxsProvider, attempts: int = 6):
    """Find provider constants satisfying the coverage contract on all graphs.

    Tries the given provider first, then doubles the budget constant and
    advances the seed.  Returns (provider, record of tried constants).
    """
    tried = []
    c, seed = base.c_explo, base.seed
    for _ in range(attempts):
        provider = UxsProvider(c, base.beta, seed)
        ok = all(
            not validate_coverage(g, provider, max(2, g.n)) for g in graphs
        )
        tried.append((c, seed, ok))
        if ok:
            return provider, tried
        c, seed = c * 2, seed + 1
    raise SubroutineError(f"no covering constants found, tried {tried}")


# ---------------------------------------------------------------------------
# rendezvous


def _self_delimiting_bits(label: int) -> tuple[int, ...]:
    """Each label bit doubled, then the 01 terminator: distinct labels are
    never prefix-compatible."""
    out: list[int] = []
    for ch in bin(label)[2:]:
        b = int(ch)
        out.extend((b, b))
    out.extend((0, 1))
    return tuple(out)


def _hash_bit(label: int, index: int) -> int:
    h = hashlib.blake2b(
        label.to_bytes(8, "big") + index.to_bytes(8, "big"), digest_size=1, key=b"tz-mod"
    )
    return h.digest()[0] & 1


def tz_modulation_bit(label: int, pair: int) -> int:
    """Base bit of slot pair `pair`.

    Even pairs carry label-hash bits (distinct labels usually disagree
    within the first few pairs, which is what makes meetings fast in
    practice); odd pairs cycle through the self-delimiting label transform,
    whose guaranteed early disagreement makes the meeting bound
    unconditional.
    """
    if pair % 2 == 0:
        return _hash_bit(label, pair // 2)
    bits = _self_delimiting_bits(label)
    return bits[(pair // 2) % len(bits)]


def first_differing_pair(label_a: int, label_b: int) -> int:
    if label_a == label_b:
        raise SubroutineError("labels are equal")
    ta, tb = _self_delimiting_bits(label_a), _self_delimiting_bits(label_b)
    limit = 2 * max(len(ta), len(tb)) + 2
    for u in range(limit):
        if tz_modulation_bit(label_a, u) != tz_modulation_bit(label_b, u):
            return u
    raise AssertionError("self-delimiting transforms of distinct labels must differ")


_PREAMBLE_PAIRS = 4


class TzRun:
    """Rendezvous procedure for one agent; never terminates on its own.

    The schedule is a sequence of slots, each four equal windows long; the
    slot's bit decides where its single exploration window sits (bit 1:
    third window, bit 0: first window; waits elsewhere).  Slots come in
    orientation pairs - the second slot of a pair flips the bit - so at the
    first pair where two labels disagree, each agent gets one slot where it
    waits throughout the other's exploration, whichever of them started
    later (as long as the start delay is at most one window).

    Slot layout per execution: a short preamble of four hash-bit pairs with
    window budget(2) (cheap symmetry breaking), then phases p = 1, 2, ...
    of 2**p slot pairs with window budget(2**p).  An exploration at phase
    >= log2(n) visits every node, so the meeting is guaranteed once the
    phase is large enough for the graph, the differing pair, and the delay.
    All slot lengths are label-independent: agents started together stay
    aligned forever.
    """

    __slots__ = (
        "label", "provider", "slot_iter", "bit", "window",
        "explore_at", "w", "pos", "_explo", "_bound",
    )

    def __init__(self, label: int, provider: UxsProvider) -> None:
        self.label = label
        self.provider = provider
        self.slot_iter = self._slots()
        self._next_slot()
        self.pos = 0
        self._explo: ExploRun | None = None

    def _slots(self):
        """Yields (window_length, exploration_bound, bit) per slot, forever."""
        w2 = self.provider.budget(2)
        for u in range(_PREAMBLE_PAIRS):
            base = _hash_bit(self.label, u)
            yield (w2, 2, base)
            yield (w2, 2, 1 - base)
        phase = 1
        while True:
            bound = 2**phase
            w = self.provider.budget(bound)
            for u in range(2 ** (phase - 1)):
                base = tz_modulation_bit(self.label, u)
                yield (w, bound, base)
                yield (w, bound, 1 - base)
            phase += 1

    def _next_slot(self) -> None:
        self.w, bound, self.bit = next(self.slot_iter)
        self._bound = bound
        self.explore_at = 2 if self.bit else 0
        self.window = 0

    def next_action(self, degree: int, entry: int | None) -> int | None:
        """Returns a port to move through, or None to wait this round."""
        if self.window == self.explore_at:
            if self._explo is None:
                self._explo = ExploRun(self._bound, self.provider)
            action: int | None = self._explo.next_port(degree, entry)
        else:
            action = None
        self.pos += 1
        if self.pos >= self.w:
            self.pos = 0
            self.window += 1
            self._explo = None
            if self.window == 4:
                self._next_slot()
        return action


def tz_meeting_budget(n: int, label_a: int, label_b: int, tau: int, provider: UxsProvider) -> int:
    """Documented rendezvous bound R(n, labels, tau): rounds from the later
    start by which two agents with distinct labels meet on any n-node graph,
    provided the coverage contract holds.  Polynomial in n, in the label
    bit-lengths and in the start delay tau."""
    u0 = first_differing_pair(label_a, label_b)
    phase = 1
    while True:
        w = provider.budget(2**phase)
        if 2**phase >= n and 2 ** (phase - 1) >= u0 + 1 and w >= tau:
            break
        phase += 1
    total = 8 * _PREAMBLE_PAIRS * provider.budget(2)
    for p in range(1, phase + 1):
        total += 2 ** (p - 1) * 2 * 4 * provider.budget(2**p)
    return total


# ---------------------------------------------------------------------------
# token-anchored exploration


@dataclass(slots=True)
class TreeNode:
    """Node of the port-labeled spanning tree under construction.

    ``path`` alternates (exit, entry) ports from the root; following it in
    the graph from the start node reaches the corresponding graph node.
    """

    path: tuple[int, ...]
    parent: int | None
    port_at_parent: int | None
    port_at_child: int | None
    processed: bool = False

    @property
    def depth(self) -> int:
        return len(self.path) // 2


@dataclass(frozen=True, slots=True)
class ExplorationResult:
    anchored_elsewhere: bool  # a strictly senior (or order-larger) token was met
    tree_order: int
    trace: tuple[int, ...]  # flattened (exit, entry, token-bit) per move

    def serialize(self) -> str:
        return " ".join([str(len(self.trace))] + [str(x) for x in self.trace])


# machine phases
_SELECT = "select"
_TRAVEL = "travel"
_GOTO_NEIGHBOR = "goto-neighbor"
_CHECKING = "checking"
_REPLAY = "replay"
_RETURN_TO_X = "return-to-x"
_BACK_TO_W = "back-to-w"
_GO_HOME = "go-home"
_DONE = "done"


class EstRun:
    """Exploration with a stationary token, as a resumable step machine.

    The caller reports, with every observation, whether the current node
    holds (what the agent considers) the token.  The machine builds the
    port-labeled tree, checking each neighbor of a processed node against
    every tree node by replaying the candidate's root path backwards and
    watching entry ports, port existence, and finally token presence.

    Unprocessed nodes are taken shortest-path-first (ties broken by the
    lexicographically smaller port sequence), which keeps every tree path a
    shortest path when the token is unique.
    """

    def __init__(self) -> None:
        self.tree: list[TreeNode] = [TreeNode((), None, None, None)]
        self.phase = _SELECT
        self.move_count = 0
        # phase-specific registers
        self.current: int = 0  # index of the tree node being processed
        self.queue: list[int] = []  # pending exit ports for travel phases
        self.check_port: int = 0  # port at w being checked
        self.entry_at_x: int | None = None  # entry port observed at the neighbor
        self.cand: int = 0  # candidate tree-node index
        self.replay: list[int] | None = None  # P = path from candidate up to root
        self.replay_i: int = 0  # ports taken in the current replay
        self.replay_entries: list[int] = []  # actual entry ports observed
        self.x_rejected = False  # set when a candidate corresponded to x
        self.started = False

    # -- public --------------------------------------------------------------

    @property
    def done(self) -> bool:
        return self.phase == _DONE

    def tree_paths(self) -> list[tuple[int, ...]]:
        return [t.path for t in self.tree]

    def order(self) -> int:
        return len(self.tree)

    def next_port(self, degree: int, entry: int | None, token_here: bool) -> int | None:
        """Feed one observation, get the next exit port (None when done)."""
        if self.phase == _DONE:
            raise SubroutineError("exploration already complete")
        if not self.started:
            self.started = True
            if not token_here:
                raise SubroutineError("token-anchored exploration must start on its token")
        port = self._advance(degree, entry, token_here)
        if port is not None:
            self.move_count += 1
        return port

    # -- internals -----------------------------------------------------------

    def _advance(self, degree: int, entry: int | None, token_here: bool) -> int | None:
        # Loop over zero-cost bookkeeping transitions until a move is due.
        while True:
            if self.phase == _SELECT:
                pending = [
                    i for i, t in enumerate(self.tree) if not t.processed
                ]
                if not pending:
                    self.phase = _DONE
                    return None
                target = min(pending, key=lambda i: (self.tree[i].depth, self.tree[i].path))
                self.current = target
                self.queue = list(self.tree[target].path[0::2])
                self.phase = _TRAVEL
                continue

            if self.phase == _TRAVEL:
                if self.queue:
                    return self.queue.pop(0)
                # arrived at the node to process; check its ports in order
                self.check_port = 0
                self.phase = _GOTO_NEIGHBOR
                continue

            if self.phase == _GOTO_NEIGHBOR:
                w = self.tree[self.current]
                if self.check_port >= degree:
                    w.processed = True
                    # walk back up to the root along the tree path
                    self.queue = list(w.path[1::2])[::-1]
                    self.phase = _GO_HOME
                    continue
                self.phase = _CHECKING
                return self.check_port

            if self.phase == _CHECKING:
                # just arrived at the neighbor x
                self.entry_at_x = entry
                self.cand = 0
                self.replay = None
                self.phase = _REPLAY
                continue

            if self.phase == _REPLAY:
                if self.cand >= len(self.tree):
                    # no tree node corresponds: admit x
                    w = self.tree[self.current]
                    assert self.entry_at_x is not None
                    self.tree.append(
                        TreeNode(
                            w.path + (self.check_port, self.entry_at_x),
                            self.current,
                            self.check_port,
                            self.entry_at_x,
                        )
                    )
                    self.phase = _BACK_TO_W
                    continue
                cand_path = self.tree[self.cand].path
                if self.replay is None:
                    # P: ports from the candidate up to the root
                    up: list[int] = []
                    for k in range(len(cand_path) - 2, -2, -2):
                        if k >= 0:
                            up.extend((cand_path[k + 1], cand_path[k]))
                    self.replay = up
                    self.replay_i = 0
                    self.replay_entries = []
                else:
                    # a move of the replay just landed: entry-port condition
                    assert entry is not None
                    self.replay_entries.append(entry)
                    if entry != self.replay[2 * self.replay_i - 1]:
                        self._fail_candidate()
                        continue
                p = self.replay
                i = self.replay_i
                half = len(p) // 2
                if i == half:
                    if token_here:
                        # candidate corresponds to x: x is already in the tree
                        self.phase = _RETURN_TO_X
                        self.queue = list(reversed(self.replay_entries))
                        self.replay = None
                        self.x_rejected = True
                        continue
                    self._fail_candidate()
                    continue
                next_exit = p[2 * i]
                if next_exit >= degree:
                    self._fail_candidate()
                    continue
                self.replay_i += 1
                return next_exit

            if self.phase == _RETURN_TO_X:
                if self.queue:
                    return self.queue.pop(0)
                if self.x_rejected:
                    self.x_rejected = False
                    self.phase = _BACK_TO_W
                else:
                    self.phase = _REPLAY
                continue

            if self.phase == _BACK_TO_W:
                assert self.entry_at_x is not None
                back = self.entry_at_x
                self.entry_at_x = None
                self.check_port += 1
                self.phase = _GOTO_NEIGHBOR
                return back

            if self.phase == _GO_HOME:
                if self.queue:
                    return self.queue.pop(0)
                self.phase = _SELECT
                continue

            raise AssertionError(f"unknown phase {self.phase}")

    def _fail_candidate(self) -> None:
        """Candidate ruled out after replay_i ports; head back to x.

        The way back takes the observed entry ports in reverse.  These equal
        the candidate path's expected entries everywhere the entry condition
        held, and the observed port is the only one guaranteed to lead back
        after a mismatch.
        """
        self.queue = list(reversed(self.replay_entries))
        self.replay = None
        self.cand += 1
        self.phase = _RETURN_TO_X


class EstPlusRun:
    """EST with trace recording; token identity is decided by the caller.

    The caller evaluates, every round, whether a colocated agent counts as
    the token (fixed-memory matching) and whether a strictly senior token
    was encountered.  The run records the followed path and the per-round
    token bits and assembles the returned triple.
    """

    __slots__ = ("est", "trace", "_pending_exit", "senior_seen")

    def __init__(self) -> None:
        self.est = EstRun()
        self.trace: list[int] = []
        self._pending_exit: int | None = None
        self.senior_seen = False

    @property
    def done(self) -> bool:
        return self.est.done

    def step(self, degree: int, entry: int | None, token_here: bool, senior: bool) -> int | None:
        if senior:
            self.senior_seen = True
        if self._pending_exit is not None:
            assert entry is not None
            self.trace.extend((self._pending_exit, entry, 1 if token_here else 0))
            self._pending_exit = None
        port = self.est.next_port(degree, entry, token_here)
        if port is not None:
            self._pending_exit = port
        return port

    def result(self) -> ExplorationResult:
        if not self.est.done:
            raise SubroutineError("exploration still in progress")
        return ExplorationResult(self.senior_seen, self.est.order(), tuple(self.trace))


def run_est(graph, start: int, token_nodes: set[int]) -> tuple[EstRun, int, list[int]]:
    """Drive a full token-anchored exploration directly on a graph.

    Returns the finished machine, the move count, and the visited node
    sequence.  Test harness for the spanning/duration properties; in the
    full protocol the agent programs drive the same machine.
    """
    est = EstRun()
    node = start
    entry: int | None = None
    visited = [start]
    while True:
        port = est.next_port(graph.degree(node), entry, node in token_nodes)
        if port is None:
            break
        entry = graph.reverse_port(node, port)
        node = graph.succ(node, port)
        visited.append(node)
    if node != start:
        raise SubroutineError("exploration did not finish at its start node")
    return est, est.move_count, visited


def est_duration_bound(n: int) -> int:
    return 8 * n**5
