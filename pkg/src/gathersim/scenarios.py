"""Teams, adversarial scenario constructions, wake-up schedules, monitors.

A scenario is an adversary's complete choice: graph, placement with labels
and wake rounds, program, advice policy, constants profile, seed, and the
expected outcome for data-driven test suites.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from math import gcd

from . import algorithms
from .engine import TraceSink, World
from .graph import (
    GraphError,
    PortGraph,
    build_k2,
    build_ring,
    format_graph_text,
    parse_graph_text,
    random_connected,
)


class ScenarioError(ValueError):
    pass


# ---------------------------------------------------------------------------
# team arithmetic


def multiplicities(labels) -> dict[int, int]:
    out: dict[int, int] = {}
    for x in labels:
        out[x] = out.get(x, 0) + 1
    return out


def symmetry_index(labels) -> int:
    """gcd of all label multiplicities."""
    labels = list(labels)
    if not labels:
        raise ScenarioError("team must be nonempty")
    out = 0
    for c in multiplicities(labels).values():
        out = gcd(out, c)
    return out


def team_indices(labels) -> tuple[int, int, int, int]:
    """(team size, smallest label, symmetry index, multiplicity index)."""
    labels = list(labels)
    if not labels:
        raise ScenarioError("team must be nonempty")
    return (
        len(labels),
        min(labels),
        symmetry_index(labels),
        max(multiplicities(labels).values()),
    )


def gatherable(labels) -> bool:
    """A team admits gathering from every placement iff its symmetry index is 1."""
    return symmetry_index(labels) == 1


# ---------------------------------------------------------------------------
# scenarios


GATHER = "gather"
NEVER = "never"


@dataclass(frozen=True, slots=True)
class Scenario:
    graph: PortGraph
    placement: tuple[tuple[int, int, int | None], ...]  # (node, label, wake or None)
    program: str = "hg"
    advice: str = "oracle"  # "oracle" | "none"
    profile: str = "desk"
    seed: int = 0
    expect: str | None = None
    ring_classes: int | None = None  # set on symmetric-ring constructions

    def team(self) -> tuple[int, ...]:
        return tuple(sorted(lbl for _, lbl, _ in self.placement))

    def validate(self) -> None:
        nodes = [n for n, _, _ in self.placement]
        if len(set(nodes)) != len(nodes):
            raise ScenarioError("placement nodes must be distinct")
        for n, lbl, wake in self.placement:
            self.graph._check_node(n)
            if lbl < 1:
                raise ScenarioError(f"label {lbl} is not a positive integer")
            if wake is not None and wake < 1:
                raise ScenarioError(f"wake round {wake} out of range")
        if len(self.placement) < 2:
            raise ScenarioError("a team needs at least 2 agents")
        if all(w is None for _, _, w in self.placement):
            raise ScenarioError("at least one agent must have an adversary wake round")
        if self.program == "hg" and self.advice != "oracle":
            raise ScenarioError("the advice-driven program needs the oracle advice policy")
        if self.program not in ("hg", "hg_plus", "dedicated"):
            raise ScenarioError(f"unknown program {self.program!r}")
        if self.expect not in (None, GATHER, NEVER):
            raise ScenarioError(f"unknown expectation {self.expect!r}")


def build_program(scenario: Scenario):
    profile = algorithms.get_profile(scenario.profile)
    team = scenario.team()
    if scenario.program == "dedicated":
        return algorithms.dedicated_gatherer(team, scenario.graph.n, profile), ""
    if scenario.program == "hg_plus":
        return algorithms.hg_plus(profile), ""
    advice = algorithms.oracle_advice(team)
    return algorithms.hg(advice, profile), advice


def instantiate(
    scenario: Scenario,
    trace: TraceSink | None = None,
    assertion_mode: str = "fail-fast",
    monitors=(),
) -> World:
    scenario.validate()
    program, advice = build_program(scenario)
    if trace is not None:
        trace.header(scenario_hash(scenario), scenario.profile, advice)
    return World(
        scenario.graph,
        scenario.placement,
        program,
        advice=advice,
        trace=trace,
        assertion_mode=assertion_mode,
        monitors=monitors,
    )


# ---------------------------------------------------------------------------
# the symmetric ring family (non-gatherable placements)


def symmetric_ring_scenario(
    labels,
    h_seed: int | None = None,
    program: str = "hg",
    profile: str = "desk",
) -> Scenario:
    """Placement on a ring that no deterministic algorithm can gather.

    For a team of k agents whose symmetry index s is at least 2, build the
    ring of k*s nodes and place s rotated copies of a window of k/s agents:
    position i*s + j*k carries label h(i).  The label-assignment map h is
    canonical (sorted) for h_seed None, otherwise seed-shuffled.  All agents
    wake in round 1; every rotation by k nodes maps the configuration onto
    itself, and that symmetry persists forever.
    """
    labels = list(labels)
    k = len(labels)
    sigma = symmetry_index(labels)
    if sigma < 2:
        raise ScenarioError(f"construction needs symmetry index >= 2, team has {sigma}")
    counts = multiplicities(labels)
    base: list[int] = []
    for lbl in sorted(counts):
        base.extend([lbl] * (counts[lbl] // sigma))
    if h_seed is not None:
        random.Random(h_seed).shuffle(base)
    ring = build_ring(k * sigma)
    placement = []
    for i, lbl in enumerate(base):
        for j in range(sigma):
            placement.append((i * sigma + j * k, lbl, 1))
    placement.sort()
    return Scenario(
        graph=ring,
        placement=tuple(placement),
        program=program,
        advice="oracle" if program == "hg" else "none",
        profile=profile,
        expect=NEVER,
        ring_classes=k,
    )


@dataclass(slots=True)
class SymmetryMonitor:
    """Checks every round that positions congruent modulo the window size
    carry identical multisets of agent memories.

    Attach via World(monitors=[monitor]); a recorded violation makes the
    whole run invalid (the construction guarantees the symmetry holds, so a
    violation indicates an engine or program defect).
    """

    classes: int
    violation: tuple[int, int] | None = None  # (round, class index)

    def __call__(self, world: World, round_no: int) -> None:
        if self.violation is not None:
            return
        n = world.graph.n
        per_node: dict[int, list[bytes]] = {i: [] for i in range(n)}
        for a in world.agents:  # dormant agents count with their initial record
            per_node[a.node].append(a.memory.digest)
        for cls in range(self.classes):
            reference = None
            for node in range(cls, n, self.classes):
                bag = sorted(per_node[node])
                if reference is None:
                    reference = bag
                elif bag != reference:
                    self.violation = (round_no, cls)
                    return

    @property
    def ok(self) -> bool:
        return self.violation is None


# ---------------------------------------------------------------------------
# word family (advice lower-bound constructions)


def word_family(b: int, d: int, count: int, length_cap: int = 10**6) -> list[tuple[int, ...]]:
    """Words over the label alphabet: start from (1,1,2); each next word is
    4*b*|w|**(d-1) copies of w followed by one fresh label."""
    if b < 1 or d < 1:
        raise ScenarioError("parameters must be >= 1")
    words = [(1, 1, 2)]
    while len(words) < count:
        w = words[-1]
        reps = 4 * b * len(w) ** (d - 1)
        nxt = w * reps + (len(words) + 2,)
        if len(nxt) > length_cap:
            break
        words.append(nxt)
    return words


def word_scenario(word: tuple[int, ...], program: str = "hg", profile: str = "desk") -> Scenario:
    """Ring of |word| nodes, the j-th letter labeling the agent on node j-1."""
    if len(word) < 3:
        raise ScenarioError("word must have at least 3 letters")
    ring = build_ring(len(word))
    placement = tuple((j, lbl, 1) for j, lbl in enumerate(word))
    return Scenario(
        graph=ring,
        placement=placement,
        program=program,
        advice="oracle" if program == "hg" else "none",
        profile=profile,
        expect=GATHER if gatherable(word) else NEVER,
    )


# ---------------------------------------------------------------------------
# wake-up schedules


def schedule(kind: str, k: int, **params) -> tuple[int | None, ...]:
    """Wake rounds for k agents in placement order.

    Kinds: ``all_at_1``; ``staggered`` (delta); ``subset_never`` (awake:
    indices woken at round 1, everyone else waits to be visited);
    ``random`` (seed, max_delay).
    """
    if k < 1:
        raise ScenarioError("k must be positive")
    if kind == "all_at_1":
        return tuple(1 for _ in range(k))
    if kind == "staggered":
        delta = params.get("delta", 1)
        if delta < 0:
            raise ScenarioError("delta must be nonnegative")
        return tuple(1 + i * delta for i in range(k))
    if kind == "subset_never":
        awake = set(params.get("awake", [0]))
        if not awake:
            raise ScenarioError("subset_never needs at least one woken agent")
        if not awake <= set(range(k)):
            raise ScenarioError(f"awake indices {sorted(awake)} out of range for k={k}")
        return tuple(1 if i in awake else None for i in range(k))
    if kind == "random":
        rng = random.Random(params.get("seed", 0))
        max_delay = params.get("max_delay", 8)
        return tuple(rng.randint(1, 1 + max_delay) for _ in range(k))
    raise ScenarioError(f"unknown schedule kind {kind!r}")


def spread_nodes(n: int, k: int) -> list[int]:
    """k distinct nodes spread evenly over 0..n-1 (deterministic placement)."""
    if k > n:
        raise ScenarioError(f"cannot place {k} agents on {n} nodes")
    return [(i * n) // k for i in range(k)]


def make_scenario(
    graph: PortGraph,
    labels,
    wakes,
    program: str,
    profile: str = "desk",
    seed: int = 0,
    expect: str | None = None,
) -> Scenario:
    labels = list(labels)
    nodes = spread_nodes(graph.n, len(labels))
    placement = tuple((n, l, w) for n, l, w in zip(nodes, labels, wakes))
    advice = "oracle" if program == "hg" else "none"
    return Scenario(graph, placement, program, advice, profile, seed, expect)


# ---------------------------------------------------------------------------
# text format


def format_scenario(s: Scenario) -> str:
    lines = ["graph inline"]
    lines.extend(format_graph_text(s.graph).rstrip("\n").splitlines())
    lines.append("end")
    for node, lbl, wake in sorted(s.placement):
        lines.append(f"place {node} {lbl} {'never' if wake is None else wake}")
    lines.append(f"program {s.program}")
    lines.append(f"advice {s.advice}")
    lines.append(f"profile {s.profile}")
    lines.append(f"seed {s.seed}")
    if s.expect is not None:
        lines.append(f"expect {s.expect}")
    if s.ring_classes is not None:
        lines.append(f"ringclasses {s.ring_classes}")
    return "\n".join(lines) + "\n"


def scenario_hash(s: Scenario) -> str:
    return hashlib.sha256(format_scenario(s).encode()).hexdigest()[:16]


def parse_scenario(text: str) -> Scenario:
    """Parse the scenario exchange format; errors cite 1-based line numbers."""
    lines = text.splitlines()
    graph: PortGraph | None = None
    placement: list[tuple[int, int, int | None]] = []
    fields: dict[str, str] = {}
    i = 0
    while i < len(lines):
        lineno = i + 1
        line = lines[i].strip()
        i += 1
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        key = parts[0]
        if key == "graph":
            if graph is not None:
                raise ScenarioError(f"line {lineno}: duplicate graph")
            if parts[1:] == ["inline"]:
                body = []
                while i < len(lines) and lines[i].strip() != "end":
                    body.append(lines[i])
                    i += 1
                if i >= len(lines):
                    raise ScenarioError(f"line {lineno}: inline graph missing 'end'")
                i += 1
                try:
                    graph = parse_graph_text("\n".join(body))
                except GraphError as e:
                    raise ScenarioError(f"line {lineno}: {e}") from None
            elif len(parts) == 3 and parts[1] == "ring":
                graph = build_ring(_int_at(parts[2], lineno))
            elif parts[1:] == ["k2"]:
                graph = build_k2()
            elif len(parts) == 5 and parts[1] == "random":
                n, m, sd = (_int_at(p, lineno) for p in parts[2:5])
                graph = random_connected(n, m, sd)
            else:
                raise ScenarioError(f"line {lineno}: bad graph spec {line!r}")
        elif key == "place":
            if len(parts) != 4:
                raise ScenarioError(f"line {lineno}: expected 'place node label wake'")
            wake = None if parts[3] == "never" else _int_at(parts[3], lineno)
            placement.append((_int_at(parts[1], lineno), _int_at(parts[2], lineno), wake))
        elif key in ("program", "advice", "profile", "seed", "expect", "ringclasses"):
            if len(parts) != 2:
                raise ScenarioError(f"line {lineno}: expected '{key} <value>'")
            if key in fields:
                raise ScenarioError(f"line {lineno}: duplicate {key}")
            fields[key] = parts[1]
        else:
            raise ScenarioError(f"line {lineno}: unknown directive {key!r}")
    if graph is None:
        raise ScenarioError("scenario has no graph")
    if not placement:
        raise ScenarioError("scenario has no placements")
    scenario = Scenario(
        graph=graph,
        placement=tuple(sorted(placement)),
        program=fields.get("program", "hg"),
        advice=fields.get("advice", "oracle"),
        profile=fields.get("profile", "desk"),
        seed=int(fields.get("seed", "0")),
        expect=fields.get("expect"),
        ring_classes=int(fields["ringclasses"]) if "ringclasses" in fields else None,
    )
    scenario.validate()
    return scenario


def _int_at(token: str, lineno: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise ScenarioError(f"line {lineno}: expected integer, got {token!r}") from None
