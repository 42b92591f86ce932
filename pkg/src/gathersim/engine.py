"""Synchronous round engine: wake-up, perception, decisions, movement, traces.

Round structure (round counter starts at 1):

1. Dormant agents wake if the adversary scheduled them for this round or an
   awake agent stands on their start node; woken agents act this round.
2. Every awake agent's memory is extended with this round's arrival info and
   the (arrival, previous-memory) pairs of colocated awake agents.
3. Programs choose TERMINATE, WAIT or MOVE(port).  Decisions resolve in
   tiers: a program may declare (via `tier`) that its choice depends on the
   already-made choices of colocated lower-tier agents; the engine feeds
   those in.  This is how same-round co-transitions and mirroring work
   without breaking determinism - the information used is all held by
   colocated agents.
4. MOVE takes effect at the start of the next round.  Two agents crossing
   the same edge in opposite directions never observe each other.

Node indices never reach programs: perception is degree, entry port and the
colocated agents' held information.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

from .memory import ArrivalInfo, Memory, compare, extend, leaf

WAIT = "wait"
MOVE = "move"
TERMINATE = "terminate"


@dataclass(frozen=True, slots=True)
class Action:
    kind: str
    port: int | None = None

    def __str__(self) -> str:
        if self.kind == MOVE:
            return f"M{self.port}"
        return "W" if self.kind == WAIT else "T"


def wait() -> Action:
    return Action(WAIT)


def move(port: int) -> Action:
    return Action(MOVE, port)


def terminate() -> Action:
    return Action(TERMINATE)


@dataclass(frozen=True, slots=True)
class Decision:
    """An action plus engine-visible annotations (state transitions etc.)."""

    action: Action
    meta: tuple = ()


@dataclass(frozen=True, slots=True)
class PublicInfo:
    """The protocol-level information an agent exposes to colocated agents."""

    tag: str
    seniority: int | None = None
    advanced: bool = False


@dataclass(frozen=True, slots=True)
class PeerView:
    arrival: ArrivalInfo
    memory: Memory
    info: PublicInfo
    terminated: bool = False


@dataclass(frozen=True, slots=True)
class StepContext:
    advice: str
    memory: Memory
    arrival: ArrivalInfo
    peers: tuple[PeerView, ...]
    resolved: tuple[Decision | None, ...]


class AgentProgram:
    """Deterministic per-round behavior shared by all agents.

    Subclasses override `start`, `step` and usually `info`.  `step` gets the
    updated memory for the round and must not keep references into the
    context beyond the call.
    """

    def start(self, label: int) -> Any:
        raise NotImplementedError

    def tier(self, state: Any) -> int:
        return 0

    def info(self, state: Any) -> PublicInfo:
        return PublicInfo(tag="agent")

    def step(self, ctx: StepContext, state: Any) -> Decision:
        raise NotImplementedError


DORMANT = "dormant"
RUNNING = "running"
TERMINATED_STATUS = "terminated"


class SimulationError(RuntimeError):
    pass


class ProgramError(SimulationError):
    """A program produced an impossible action; carries round context."""


class InvariantViolation(SimulationError):
    def __init__(self, round_no: int, name: str, detail: str) -> None:
        super().__init__(f"round {round_no}: invariant '{name}' violated: {detail}")
        self.round_no = round_no
        self.name = name
        self.detail = detail


@dataclass(slots=True)
class AgentRuntime:
    sim_id: int
    label: int
    node: int
    wake_round: int | None
    status: str = DORMANT
    memory: Memory = None  # type: ignore[assignment]
    state: Any = None
    moved_from: tuple[int, int] | None = None  # (previous node, exit port)
    woke_at: int | None = None
    terminated_at: int | None = None
    last_tag: str | None = None
    tags_left: set = field(default_factory=set)
    entered: dict = field(default_factory=dict)  # tag -> (round, node)


@dataclass(frozen=True, slots=True)
class RoundEvent:
    round_no: int
    sim_id: int
    node: int
    tag: str
    action: Action
    met: tuple[int, ...]


class TraceSink:
    """Collects the run header and per-round events; renders to text.

    verbosity 0: header + verdict only; 1: one line per awake agent per
    round; 2: additionally each agent's memory (abbreviated beyond rank 20).
    """

    def __init__(self, verbosity: int = 1) -> None:
        self.verbosity = verbosity
        self.header_lines: list[str] = []
        self.lines: list[str] = []

    def header(self, scenario_hash: str, profile: str, advice: str) -> None:
        self.header_lines = [
            "# gathersim-trace v1",
            f"# scenario {scenario_hash}",
            f"# profile {profile}",
            f"# advice {advice if advice else '-'}",
        ]

    def event(self, ev: RoundEvent, memory: Memory) -> None:
        if self.verbosity < 1:
            return
        met = ",".join(str(x) for x in ev.met) if ev.met else "-"
        line = f"{ev.round_no} {ev.sim_id} {ev.node} {ev.tag} {ev.action} {met}"
        if self.verbosity >= 2:
            from .memory import describe

            line += f" {describe(memory)}"
        self.lines.append(line)

    def verdict(self, text: str) -> None:
        self.lines.append(f"# verdict {text}")

    def render(self) -> str:
        return "\n".join(self.header_lines + self.lines) + "\n"


@dataclass(frozen=True, slots=True)
class Gathered:
    round_no: int
    node: int
    kind: str = "GATHERED"


@dataclass(frozen=True, slots=True)
class Diverged:
    round_no: int
    detail: str
    kind: str = "DIVERGED"


@dataclass(frozen=True, slots=True)
class Timeout:
    round_no: int
    positions: tuple[tuple[int, int], ...]  # (sim_id, node)
    kind: str = "TIMEOUT"


Outcome = Gathered | Diverged | Timeout

FAIL_FAST = "fail-fast"
COLLECT = "collect"


class World:
    def __init__(
        self,
        graph,
        placements: Iterable[tuple[int, int, int | None]],
        program: AgentProgram,
        advice: str = "",
        trace: TraceSink | None = None,
        assertion_mode: str = FAIL_FAST,
        monitors: Iterable[Callable[["World", int], None]] = (),
    ) -> None:
        """placements: (node, label, wake_round or None) per agent."""
        self.graph = graph
        self.program = program
        self.advice = advice
        self.trace = trace
        self.assertion_mode = assertion_mode
        self.monitors = list(monitors)
        self.round = 1
        self.r0: int | None = None
        self.violations: list[tuple[int, str, str]] = []
        self.guide_truth: dict[int, int] = {}
        self.pair_token_of: dict[int, int] = {}  # explorer sim_id -> its token sim_id
        self.pair_explorer_of: dict[int, int] = {}
        self.agents: list[AgentRuntime] = []
        seen_nodes = set()
        for sim_id, (node, label, wake) in enumerate(placements):
            graph._check_node(node)
            if node in seen_nodes:
                raise SimulationError(f"two agents placed on node {node}")
            seen_nodes.add(node)
            if wake is not None and wake < 1:
                raise SimulationError(f"wake round must be >= 1, got {wake}")
            self.agents.append(AgentRuntime(sim_id, label, node, wake, memory=leaf(label)))
        if len(self.agents) < 2:
            raise SimulationError("a team needs at least 2 agents")
        if all(a.wake_round is None for a in self.agents):
            raise SimulationError("no agent is ever woken by the adversary")

    # -- invariant reporting -------------------------------------------------

    def _violate(self, name: str, detail: str) -> None:
        if self.assertion_mode == FAIL_FAST:
            raise InvariantViolation(self.round, name, detail)
        self.violations.append((self.round, name, detail))

    # -- helpers -------------------------------------------------------------

    def _occupants(self) -> dict[int, list[AgentRuntime]]:
        by_node: dict[int, list[AgentRuntime]] = {}
        for a in self.agents:
            if a.status in (RUNNING, TERMINATED_STATUS):
                by_node.setdefault(a.node, []).append(a)
        return by_node

    def running(self) -> list[AgentRuntime]:
        return [a for a in self.agents if a.status == RUNNING]


def _arrival_of(world: World, a: AgentRuntime) -> ArrivalInfo:
    deg = world.graph.degree(a.node)
    if a.moved_from is None:
        return ArrivalInfo(deg)
    prev_node, exit_port = a.moved_from
    entry = world.graph.reverse_port(prev_node, exit_port)
    return ArrivalInfo(deg, exit_port, entry)


def step(world: World) -> None:
    """Execute one synchronous round."""
    r = world.round
    graph = world.graph

    # 1. wake-up
    awake_nodes = {a.node for a in world.agents if a.status == RUNNING}
    for a in world.agents:
        if a.status != DORMANT:
            continue
        if (a.wake_round is not None and a.wake_round == r) or a.node in awake_nodes:
            a.status = RUNNING
            a.woke_at = r
            a.state = world.program.start(a.label)
            if world.r0 is None:
                world.r0 = r
    # adversary wake rounds in the past that were preempted by a visit never
    # happen twice; agents woken right now still see wake_round as scheduled.

    running = world.running()
    if world.r0 is None:
        world.round += 1
        return

    # 2. memory update (two-phase: snapshot, then extend)
    by_node: dict[int, list[AgentRuntime]] = {}
    for a in running:
        by_node.setdefault(a.node, []).append(a)
    arrivals = {a.sim_id: _arrival_of(world, a) for a in running}
    prev_memory = {a.sim_id: a.memory for a in running}
    for a in running:
        peers_here = [b for b in by_node[a.node] if b is not a]
        first_round_awake = a.woke_at == r
        if first_round_awake and not peers_here:
            pass  # initial record stands: alone on the wake-up round
        else:
            met = [(arrivals[b.sim_id], prev_memory[b.sim_id]) for b in peers_here]
            a.memory = extend(prev_memory[a.sim_id], arrivals[a.sim_id], met)

    # colocated awake agents always hold pairwise distinct memories
    for node, occ in sorted(by_node.items()):
        for i in range(len(occ)):
            for j in range(i + 1, len(occ)):
                if occ[i].memory is occ[j].memory:
                    world._violate(
                        "colocated-distinct",
                        f"agents {occ[i].sim_id} and {occ[j].sim_id} share memory at node {node}",
                    )

    # 3. perception snapshot
    infos: dict[int, PublicInfo] = {}
    for a in running:
        infos[a.sim_id] = world.program.info(a.state)
    _track_transitions(world, running, infos)

    occupants = world._occupants()
    peer_lists: dict[int, list[AgentRuntime]] = {}
    peer_views: dict[int, tuple[PeerView, ...]] = {}
    for a in running:
        peers = [b for b in occupants[a.node] if b is not a]
        peers.sort(key=lambda b: (b.memory.digest, b.sim_id))
        peer_lists[a.sim_id] = peers
        views = []
        for b in peers:
            if b.status == TERMINATED_STATUS:
                views.append(
                    PeerView(
                        ArrivalInfo(graph.degree(b.node)),
                        b.memory,
                        PublicInfo(tag="terminated"),
                        terminated=True,
                    )
                )
            else:
                views.append(PeerView(arrivals[b.sim_id], b.memory, infos[b.sim_id]))
        peer_views[a.sim_id] = tuple(views)

    # 4. tiered decisions
    decisions: dict[int, Decision] = {}
    tiers = sorted({world.program.tier(a.state) for a in running})
    for level in tiers:
        for a in running:
            if world.program.tier(a.state) != level or a.sim_id in decisions:
                continue
            resolved = tuple(
                decisions.get(b.sim_id) if b.status == RUNNING else None
                for b in peer_lists[a.sim_id]
            )
            ctx = StepContext(
                advice=world.advice,
                memory=a.memory,
                arrival=arrivals[a.sim_id],
                peers=peer_views[a.sim_id],
                resolved=resolved,
            )
            try:
                decision = world.program.step(ctx, a.state)
            except SimulationError:
                raise
            except Exception as e:  # program bug: surface with context
                raise ProgramError(
                    f"round {r}, agent {a.sim_id} (label {a.label}, node {a.node}): {e}"
                ) from e
            act = decision.action
            if act.kind == MOVE and not 0 <= (act.port or 0) < graph.degree(a.node):
                raise ProgramError(
                    f"round {r}, agent {a.sim_id}: MOVE({act.port}) at node {a.node} "
                    f"with degree {graph.degree(a.node)}"
                )
            decisions[a.sim_id] = decision

    # 5. protocol-level monitors that need decisions
    _check_decision_invariants(world, running, infos, peer_lists, decisions)
    for monitor in world.monitors:
        monitor(world, r)

    # 6. trace + apply
    for a in sorted(running, key=lambda x: x.sim_id):
        d = decisions[a.sim_id]
        if world.trace is not None:
            met_ids = tuple(
                sorted(b.sim_id for b in peer_lists[a.sim_id] if b.status == RUNNING)
            )
            world.trace.event(
                RoundEvent(r, a.sim_id, a.node, infos[a.sim_id].tag, d.action, met_ids),
                a.memory,
            )
        if d.action.kind == TERMINATE:
            a.status = TERMINATED_STATUS
            a.terminated_at = r
            a.moved_from = None
    for a in running:
        if a.status != RUNNING:
            continue
        d = decisions[a.sim_id]
        if d.action.kind == MOVE:
            a.moved_from = (a.node, d.action.port)  # applied below
        else:
            a.moved_from = None
    for a in running:
        if a.status == RUNNING and a.moved_from is not None:
            prev_node, port = a.moved_from
            a.node = graph.succ(prev_node, port)

    _update_guides(world, running, peer_lists, decisions)
    world.round += 1


def _track_transitions(world: World, running: list[AgentRuntime], infos) -> None:
    """Record state entries/exits; enforce one-shot states and pairing."""
    entries_by_node: dict[int, dict[str, list[int]]] = {}
    for a in running:
        tag = infos[a.sim_id].tag
        if tag != a.last_tag:
            if a.last_tag is not None:
                a.tags_left.add(a.last_tag)
            if tag in a.tags_left:
                world._violate("one-shot-states", f"agent {a.sim_id} re-entered state {tag}")
            if tag not in a.entered:
                a.entered[tag] = (world.round, a.node)
            entries_by_node.setdefault(a.node, {}).setdefault(tag, []).append(a.sim_id)
            a.last_tag = tag
    for node, per_tag in sorted(entries_by_node.items()):
        toks = per_tag.get("token", [])
        exps = per_tag.get("explorer", [])
        if toks or exps:
            if len(toks) != 1 or len(exps) != 1:
                world._violate(
                    "token-explorer-pairing",
                    f"node {node}: {len(toks)} token / {len(exps)} explorer entries",
                )
            else:
                world.pair_token_of[exps[0]] = toks[0]
                world.pair_explorer_of[toks[0]] = exps[0]

    # at most one token on a node, every round
    by_node: dict[int, list[int]] = {}
    for a in running:
        if infos[a.sim_id].tag == "token":
            by_node.setdefault(a.node, []).append(a.sim_id)
    for node, toks in sorted(by_node.items()):
        if len(toks) > 1:
            world._violate("token-unique", f"node {node} hosts tokens {toks}")


def _check_decision_invariants(world, running, infos, peer_lists, decisions) -> None:
    sims = {a.sim_id: a for a in running}
    # paired co-transition out of explorer/token
    transits = {
        s: d for s, d in decisions.items() if ("transit", "searcher") in _meta_set(d)
    }
    for s, d in transits.items():
        tag = infos[s].tag
        if tag == "explorer":
            tok = world.pair_token_of.get(s)
            if tok is None or tok not in transits or infos.get(tok, PublicInfo("?")).tag != "token":
                world._violate(
                    "explorer-token-co-transit",
                    f"explorer {s} leaves without its token ({tok})",
                )
        elif tag == "token":
            exp = world.pair_explorer_of.get(s)
            if exp is None or exp not in transits:
                world._violate(
                    "explorer-token-co-transit",
                    f"token {s} leaves without its explorer ({exp})",
                )
    # explorer at its entry node at exploration boundaries
    for s, d in decisions.items():
        meta = _meta_set(d)
        if ("est_start",) in meta or ("est_done",) in meta:
            a = sims[s]
            home = a.entered.get("explorer")
            if home is None or home[1] != a.node:
                world._violate(
                    "explorer-home",
                    f"agent {s} at node {a.node}, exploration boundary away from home {home}",
                )
    # no explorer declares while another colocated explorer transits
    by_node: dict[int, list[int]] = {}
    for a in running:
        if infos[a.sim_id].tag == "explorer":
            by_node.setdefault(a.node, []).append(a.sim_id)
    for node, exps in sorted(by_node.items()):
        trans = [s for s in exps if ("transit", "searcher") in _meta_set(decisions[s])]
        decl = [s for s in exps if decisions[s].action.kind == TERMINATE]
        if trans and decl:
            world._violate(
                "lone-terminating-explorer",
                f"node {node}: explorers {decl} declare while {trans} transit",
            )
    # shadow guides: exactly one, colocated, searcher or token, and the
    # program's peer-view resolution must match the engine's ground truth
    for a in running:
        if infos[a.sim_id].tag != "shadow":
            continue
        d = decisions[a.sim_id]
        mirror = [m for m in d.meta if m and m[0] == "mirror"]
        if len(mirror) != 1:
            world._violate("shadow-guide", f"shadow {a.sim_id} did not mirror exactly once")
            continue
        idx = mirror[0][1]
        peers = peer_lists[a.sim_id]
        if not 0 <= idx < len(peers):
            world._violate("shadow-guide", f"shadow {a.sim_id} mirrored missing peer {idx}")
            continue
        target = peers[idx]
        truth = world.guide_truth.get(a.sim_id)
        if truth is not None and target.sim_id != truth:
            world._violate(
                "shadow-guide",
                f"shadow {a.sim_id} identified {target.sim_id} as guide, truth is {truth}",
            )
        t_tag = infos.get(target.sim_id, PublicInfo("terminated")).tag
        if t_tag not in ("searcher", "token"):
            world._violate(
                "shadow-guide", f"shadow {a.sim_id} mirrors a {t_tag!r} agent"
            )


def _meta_set(d: Decision) -> set:
    return set(d.meta)


def _update_guides(world, running, peer_lists, decisions) -> None:
    """Maintain ground-truth guide identities from decision annotations."""
    new_shadow_guide: dict[int, int] = {}
    for a in running:
        d = decisions.get(a.sim_id)
        if d is None:
            continue
        for m in d.meta:
            if m and m[0] == "become_shadow":
                idx = m[1]
                new_shadow_guide[a.sim_id] = peer_lists[a.sim_id][idx].sim_id
    # shadows whose guide itself becomes a shadow follow the guide's guide
    for sim, truth in list(world.guide_truth.items()):
        if truth in new_shadow_guide:
            world.guide_truth[sim] = new_shadow_guide[truth]
    world.guide_truth.update(new_shadow_guide)


def run(world: World, max_rounds: int) -> Outcome:
    """Step until simultaneous gathering, a divergent termination, or timeout."""
    if max_rounds < 1:
        raise SimulationError("max_rounds must be >= 1")
    while world.round <= max_rounds:
        step(world)
        done = [a for a in world.agents if a.status == TERMINATED_STATUS]
        if done:
            r = world.round - 1  # the round just executed
            if len(done) == len(world.agents):
                rounds = {a.terminated_at for a in done}
                nodes = {a.node for a in done}
                if len(rounds) == 1 and len(nodes) == 1:
                    out: Outcome = Gathered(r, done[0].node)
                else:
                    out = Diverged(r, f"terminations at rounds {sorted(rounds)} nodes {sorted(nodes)}")
            else:
                out = Diverged(
                    r,
                    f"{len(done)}/{len(world.agents)} agents terminated "
                    f"(ids {sorted(a.sim_id for a in done)})",
                )
            if world.trace is not None:
                world.trace.verdict(_verdict_text(world, out))
            return out
    positions = tuple(sorted((a.sim_id, a.node) for a in world.agents))
    out = Timeout(max_rounds, positions)
    if world.trace is not None:
        world.trace.verdict(_verdict_text(world, out))
    return out


def _verdict_text(world: World, out: Outcome) -> str:
    since = "-" if world.r0 is None else str(out.round_no - world.r0)
    if isinstance(out, Gathered):
        return f"GATHERED round={out.round_no} node={out.node} since_r0={since}"
    if isinstance(out, Diverged):
        return f"DIVERGED round={out.round_no} since_r0={since} {out.detail}"
    return f"TIMEOUT round={out.round_no} since_r0={since}"


def peer_view(world: World, sim_id: int) -> list[tuple[ArrivalInfo, Memory, str, int | None]]:
    """Information an awake agent can read off its colocated agents.

    Built from current state; exposed for tests and tooling.  Entries are
    (arrival info, memory, state tag, seniority).
    """
    me = world.agents[sim_id]
    if me.status != RUNNING:
        raise SimulationError(f"agent {sim_id} is not awake")
    out = []
    for b in world._occupants().get(me.node, []):
        if b is me:
            continue
        if b.status == TERMINATED_STATUS:
            out.append((ArrivalInfo(world.graph.degree(b.node)), b.memory, "terminated", None))
        else:
            info = world.program.info(b.state)
            out.append((_arrival_of(world, b), b.memory, info.tag, info.seniority))
    out.sort(key=lambda t: t[1].digest)
    return out
