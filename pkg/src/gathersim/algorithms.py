"""Agent programs: the per-team dedicated gatherer and the universal
five-state protocol (with and without oracle advice).

The universal protocol's repeat threshold and inter-exploration waits are
governed by a constants profile.  Scale values of 1 reproduce the exact
formulas (threshold U**(25*beta), wait sum_{i=1..11*ceil(beta*log2(eta*U*tau))} 2**i),
which are astronomically large by design; the "desk" profile shrinks both so
runs finish while every branching rule stays identical.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

from .engine import (
    AgentProgram,
    Decision,
    ProgramError,
    PublicInfo,
    StepContext,
    move,
    terminate,
    wait,
)
from .memory import LESS, Memory, compare, unwind
from .subroutines import EstPlusRun, ExploRun, TzRun, UxsProvider


def ceil_log2(x: int) -> int:
    if x < 1:
        raise ValueError("ceil_log2 needs a positive integer")
    return (x - 1).bit_length()


def iroot_ceil(x: int, r: int) -> int:
    """Smallest integer t with t**r >= x."""
    if x <= 1:
        return x
    t = round(x ** (1.0 / r))
    while t**r >= x:
        t -= 1
    while t**r < x:
        t += 1
    return t


@dataclass(frozen=True, slots=True)
class ConstantsProfile:
    """Exponent constants and feasibility scaling for the universal protocol."""

    name: str
    alpha: int = 2
    beta: int = 2
    c_explo: int = 2
    repeat_exponent_scale: Fraction = Fraction(1)
    wait_exponent_scale: Fraction = Fraction(1)
    uxs_seed: int = 0

    def __post_init__(self) -> None:
        if self.alpha < 2 or self.beta < 2:
            raise ValueError("alpha and beta are integers >= 2")
        if self.repeat_exponent_scale <= 0 or self.wait_exponent_scale <= 0:
            raise ValueError("scales must be positive")

    def provider(self) -> UxsProvider:
        return UxsProvider(self.c_explo, self.beta, self.uxs_seed)

    def repeat_threshold(self, big_u: int) -> int:
        """Consecutive identical exploration steps required before declaring."""
        exponent = self.repeat_exponent_scale * 25 * self.beta
        p, q = exponent.numerator, exponent.denominator
        return iroot_ceil(big_u**p, q)

    def wait_rounds(self, eta: int, big_u: int, tau: int) -> int:
        """Length of the pause inserted after a non-anchored exploration."""
        inner = ceil_log2((eta * big_u * tau) ** self.beta)
        terms_frac = self.wait_exponent_scale * 11 * inner
        terms = -(-terms_frac.numerator // terms_frac.denominator)  # ceil
        return 2 ** (terms + 1) - 2


PROFILES: dict[str, ConstantsProfile] = {
    "paper": ConstantsProfile(name="paper"),
    # Scaled so that (a) a lone explorer's declaration tail stays within a
    # few hundred thousand rounds on graphs up to ~12 nodes, while (b) the
    # symmetric never-gather placements cannot reach the repeat threshold
    # within the 10^4-round horizon the negative tests use:
    # thresholds 15 (U=2) / 207 (U=4), waits a few hundred rounds.
    "desk": ConstantsProfile(
        name="desk",
        repeat_exponent_scale=Fraction(1, 13),
        wait_exponent_scale=Fraction(1, 45),
    ),
}


def get_profile(name: str) -> ConstantsProfile:
    try:
        return PROFILES[name]
    except KeyError:
        raise ValueError(f"unknown constants profile {name!r}; have {sorted(PROFILES)}") from None


# ---------------------------------------------------------------------------
# oracle


def multiplicity_index(labels) -> int:
    labels = list(labels)
    return max(labels.count(x) for x in set(labels))


def _multiplicity_gcd(labels) -> int:
    from math import gcd

    labels = list(labels)
    out = 0
    for x in set(labels):
        out = gcd(out, labels.count(x))
    return out


def oracle_advice(labels) -> str:
    """Advice bits handed to every agent: the binary representation of
    ceil(log2(log2(mu + 1))) where mu is the largest label multiplicity."""
    mu = multiplicity_index(labels)
    x = ceil_log2(ceil_log2(mu + 1))
    return format(x, "b")


def advice_bound(bits: str) -> int:
    """U = 2**(2**x) for advice bits encoding x."""
    x = int(bits, 2)
    return 2 ** (2**x)


# ---------------------------------------------------------------------------
# dedicated gatherer


def multiset_rank_map(team: tuple[int, ...]) -> dict[tuple[int, ...], int]:
    """Injective rank of every multisubset of the team, ordered by
    (cardinality, sorted labels).  Ranks start at 1."""
    distinct = sorted(set(team))
    counts = [team.count(x) for x in distinct]
    subs = []
    for combo in itertools.product(*[range(c + 1) for c in counts]):
        labels = []
        for lbl, c in zip(distinct, combo):
            labels.extend([lbl] * c)
        subs.append(tuple(labels))
    subs.sort(key=lambda s: (len(s), s))
    return {s: i + 1 for i, s in enumerate(subs)}


@dataclass(slots=True)
class _DedicatedState:
    label: int
    explo: ExploRun
    advanced: bool = False
    current_set: tuple[int, ...] | None = None
    tz: TzRun | None = None


class DedicatedGatherer(AgentProgram):
    """Program dedicated to one team on a known graph order.

    Explore once to wake everyone, then chase the other groups with the
    rendezvous procedure keyed by the multiset of colocated finished agents,
    restarting it whenever that multiset changes; stop when the whole team
    stands together.  Only constructible for teams whose label multiplicities
    have gcd 1: any other team admits a placement this strategy (or any
    other) cannot gather.
    """

    def __init__(self, team, n: int, profile: ConstantsProfile | None = None) -> None:
        team = tuple(sorted(team))
        sigma = _multiplicity_gcd(team)
        if sigma != 1:
            raise ValueError(
                f"team {team} has symmetry index {sigma}; "
                "a dedicated gatherer exists only at symmetry index 1"
            )
        if n < 2:
            raise ValueError("graph order must be at least 2")
        self.team = team
        self.n = n
        self.profile = profile or get_profile("desk")
        self.provider = self.profile.provider()
        self.rank_of = multiset_rank_map(team)

    def start(self, label: int) -> _DedicatedState:
        if label not in self.team:
            raise ProgramError(f"label {label} is not in the team {self.team}")
        return _DedicatedState(label, ExploRun(max(2, self.n), self.provider))

    def info(self, state: _DedicatedState) -> PublicInfo:
        return PublicInfo(tag="dedicated", advanced=state.advanced)

    def step(self, ctx: StepContext, state: _DedicatedState) -> Decision:
        if not state.advanced:
            port = state.explo.next_port(ctx.arrival.degree, ctx.arrival.entry_port)
            if state.explo.done:
                state.advanced = True  # visible to peers from next round on
            return Decision(move(port))
        here = [state.label] + [
            p.memory.leaf_label for p in ctx.peers if p.info.advanced and not p.terminated
        ]
        observed = tuple(sorted(here))
        if observed != state.current_set:
            state.current_set = observed
            state.tz = TzRun(self.rank_of[observed], self.provider)
        if observed == self.team:
            return Decision(terminate())
        assert state.tz is not None
        port = state.tz.next_action(ctx.arrival.degree, ctx.arrival.entry_port)
        return Decision(wait() if port is None else move(port))


def dedicated_gatherer(team, n: int, profile: ConstantsProfile | None = None) -> DedicatedGatherer:
    return DedicatedGatherer(team, n, profile)


# ---------------------------------------------------------------------------
# universal protocol


CRUISER = "cruiser"
TOKEN = "token"
EXPLORER = "explorer"
SEARCHER = "searcher"
SHADOW = "shadow"


@dataclass(slots=True)
class _HgState:
    label: int
    tag: str = CRUISER
    pending: tuple | None = None  # (next_tag, payload) adopted next round
    # cruiser
    tau: int = 0
    phase: int = 1
    stage: str = "explo"  # explo | tz
    explo: ExploRun | None = None
    tz: TzRun | None = None
    tz_left: int = 0
    # token / explorer seniority
    seniority: int = 0
    # explorer
    counter: int = 1
    trace_old: tuple[int, ...] | None = None
    est: EstPlusRun | None = None
    est_memory: Memory | None = None
    est_elapsed: int = 0
    waiting: int = 0
    exploring: bool = False
    last_result: Any = None
    last_tree_paths: tuple[tuple[int, ...], ...] = ()
    completed_explorations: int = 0
    # searcher
    search_phase: int = 1
    # shadow
    guide_memory: Memory | None = None


class HgProgram(AgentProgram):
    """Universal gathering protocol driven by oracle advice.

    Five mutually exclusive behaviors per agent, switched on meetings:
    roaming until a first contact, anchoring as a stationary token, repeated
    token-anchored explorations with a step counter, re-searching after
    losing an anchor, and mirroring a guide.  Passing ``advice=None`` selects
    the no-advice variant for all-distinct-label teams (bound fixed at 2).
    """

    def __init__(self, advice: str | None, profile: ConstantsProfile | None = None) -> None:
        self.profile = profile or get_profile("desk")
        self.provider = self.profile.provider()
        if advice is None:
            self.big_u = 2
            self.advice = ""
        else:
            if advice == "" or any(c not in "01" for c in advice):
                raise ValueError(f"advice must be a nonempty bit string, got {advice!r}")
            self.big_u = advice_bound(advice)
            self.advice = advice
        self.threshold = self.profile.repeat_threshold(self.big_u)

    # -- engine protocol -------------------------------------------------

    def start(self, label: int) -> _HgState:
        st = _HgState(label)
        st.explo = ExploRun(2, self.provider)
        return st

    def tier(self, state: _HgState) -> int:
        if state.tag == TOKEN:
            return 1
        if state.tag == SHADOW:
            return 2
        return 0

    def info(self, state: _HgState) -> PublicInfo:
        seniority = state.seniority if state.tag in (TOKEN, EXPLORER) else None
        return PublicInfo(tag=state.tag, seniority=seniority)

    def step(self, ctx: StepContext, state: _HgState) -> Decision:
        handler = {
            CRUISER: self._cruiser,
            TOKEN: self._token,
            EXPLORER: self._explorer,
            SEARCHER: self._searcher,
            SHADOW: self._shadow,
        }[state.tag]
        decision = handler(ctx, state)
        if state.pending is not None:
            next_tag, payload = state.pending
            state.pending = None
            self._adopt(state, next_tag, payload)
        elif state.tag in (TOKEN, EXPLORER):
            state.seniority += 1
        return decision

    # -- transitions -------------------------------------------------------

    def _adopt(self, state: _HgState, tag: str, payload) -> None:
        state.tag = tag
        if tag in (TOKEN, EXPLORER):
            state.seniority = 0
        if tag == EXPLORER:
            state.counter = 1
            state.trace_old = None
            state.exploring = False
            state.waiting = 0
        if tag == SEARCHER:
            state.search_phase = 1
            state.explo = ExploRun(2, self.provider)
        if tag == SHADOW:
            state.guide_memory = payload

    # -- cruiser -----------------------------------------------------------

    def _cruiser(self, ctx: StepContext, state: _HgState) -> Decision:
        state.tau += 1
        contacts = [
            (i, p) for i, p in enumerate(ctx.peers)
            if not p.terminated and p.info.tag in (CRUISER, TOKEN)
        ]
        if contacts:
            tokens = [(i, p) for i, p in contacts if p.info.tag == TOKEN]
            if tokens:
                if len(tokens) > 1:
                    raise ProgramError("two colocated anchors while roaming")
                idx, tok = tokens[0]
                state.pending = (SHADOW, tok.memory)
                return Decision(wait(), (("become_shadow", idx), ("transit", SHADOW)))
            ordered = sorted(
                [(p.memory, i) for i, p in contacts] + [(ctx.memory, -1)],
                key=lambda e: _MemKey(e[0]),
            )
            largest, smallest = ordered[-1], ordered[0]
            if largest[1] == -1:
                state.pending = (TOKEN, None)
                return Decision(wait(), (("transit", TOKEN),))
            if smallest[1] == -1:
                state.pending = (EXPLORER, state.tau)
                return Decision(wait(), (("transit", EXPLORER),))
            guide_idx = largest[1]
            state.pending = (SHADOW, ctx.peers[guide_idx].memory)
            return Decision(wait(), (("become_shadow", guide_idx), ("transit", SHADOW)))
        return self._cruiser_phase_action(ctx, state)

    def _cruiser_phase_action(self, ctx: StepContext, state: _HgState) -> Decision:
        # Phase i: one bounded exploration at bound 2**i, then a fresh
        # rendezvous execution for as many rounds as the exploration took.
        # The budget-length rendezvous window (rather than 2**i rounds) is
        # what lets two roaming agents reach the rendezvous stage where one
        # of them waits under the other's full sweep within a single phase.
        if state.stage == "explo":
            assert state.explo is not None
            port = state.explo.next_port(ctx.arrival.degree, ctx.arrival.entry_port)
            if state.explo.done:
                state.stage = "tz"
                state.tz = TzRun(state.label, self.provider)
                state.tz_left = self.provider.budget(2**state.phase)
            return Decision(move(port))
        assert state.tz is not None
        port = state.tz.next_action(ctx.arrival.degree, ctx.arrival.entry_port)
        state.tz_left -= 1
        if state.tz_left == 0:
            state.phase += 1
            state.stage = "explo"
            state.explo = ExploRun(2**state.phase, self.provider)
            state.tz = None
        return Decision(wait() if port is None else move(port))

    # -- token ---------------------------------------------------------------

    def _token(self, ctx: StepContext, state: _HgState) -> Decision:
        transits = declares = 0
        for p, d in zip(ctx.peers, ctx.resolved):
            if p.terminated or p.info.tag != EXPLORER or d is None:
                continue
            if ("transit", SEARCHER) in d.meta:
                transits += 1
            if d.action.kind == "terminate":
                declares += 1
        if transits and declares:
            raise ProgramError("colocated explorers both transit and declare")
        if declares:
            return Decision(terminate(), (("declare",),))
        if transits:
            state.pending = (SEARCHER, None)
            return Decision(wait(), (("transit", SEARCHER),))
        return Decision(wait())

    # -- explorer ------------------------------------------------------------

    def _matching_tokens(self, ctx: StepContext, state: _HgState) -> tuple[bool, bool]:
        """(a matching token is here, a senior/larger token was seen)."""
        here = False
        senior = False
        for p in ctx.peers:
            if p.terminated or p.info.tag != TOKEN:
                continue
            past = unwind(p.memory, state.est_elapsed)
            if past is state.est_memory:
                here = True
            sen = p.info.seniority or 0
            if sen > state.seniority:
                senior = True
            elif sen == state.seniority and state.est_memory is not None:
                if compare(state.est_memory, past) == LESS:
                    senior = True
        return here, senior

    def _begin_exploration(self, ctx: StepContext, state: _HgState) -> Decision:
        anchors = [p for p in ctx.peers if not p.terminated and p.info.tag == TOKEN]
        if len(anchors) != 1:
            raise ProgramError(
                f"exploration must start beside exactly one anchor, found {len(anchors)}"
            )
        state.est_memory = anchors[0].memory
        state.est = EstPlusRun()
        state.est_elapsed = 0
        state.exploring = True
        port = state.est.step(ctx.arrival.degree, ctx.arrival.entry_port, True, False)
        assert port is not None
        return Decision(move(port), (("est_start",),))

    def _explorer(self, ctx: StepContext, state: _HgState) -> Decision:
        if state.exploring:
            assert state.est is not None
            state.est_elapsed += 1
            token_here, senior = self._matching_tokens(ctx, state)
            port = state.est.step(ctx.arrival.degree, ctx.arrival.entry_port, token_here, senior)
            if port is not None:
                return Decision(move(port))
            # exploration finished this round, agent is back where it started
            state.exploring = False
            result = state.est.result()
            state.last_result = result
            state.last_tree_paths = tuple(state.est.est.tree_paths())
            state.completed_explorations += 1
            state.est = None
            if result.anchored_elsewhere:
                state.pending = (SEARCHER, None)
                return Decision(wait(), (("est_done",), ("transit", SEARCHER)))
            state.counter = (
                state.counter + 1 if result.trace == state.trace_old else 1
            )
            state.trace_old = result.trace
            state.waiting = self.profile.wait_rounds(
                result.tree_order, self.big_u, max(1, state.tau)
            ) - 1
            return Decision(wait(), (("est_done",),))
        if state.waiting > 0:
            state.waiting -= 1
            return Decision(wait())
        if state.counter >= self.threshold:
            return Decision(terminate(), (("declare",),))
        return self._begin_exploration(ctx, state)

    # -- searcher -------------------------------------------------------------

    def _searcher(self, ctx: StepContext, state: _HgState) -> Decision:
        anchors = [(i, p) for i, p in enumerate(ctx.peers) if not p.terminated and p.info.tag == TOKEN]
        if anchors:
            if len(anchors) > 1:
                raise ProgramError("two colocated anchors while searching")
            idx, tok = anchors[0]
            state.pending = (SHADOW, tok.memory)
            return Decision(wait(), (("become_shadow", idx), ("transit", SHADOW)))
        assert state.explo is not None
        port = state.explo.next_port(ctx.arrival.degree, ctx.arrival.entry_port)
        if state.explo.done:
            state.search_phase += 1
            state.explo = ExploRun(2**state.search_phase, self.provider)
        return Decision(move(port))

    # -- shadow -----------------------------------------------------------------

    def _shadow(self, ctx: StepContext, state: _HgState) -> Decision:
        # The guide is the unique colocated agent whose memory extends the one
        # tracked from last round AND who made the same move we mirrored
        # (equal arrival info); an unrelated agent can carry an equal previous
        # memory but then necessarily entered through a different port.
        assert state.guide_memory is not None
        hits = [
            i for i, p in enumerate(ctx.peers)
            if p.memory.rank > 0
            and p.memory.prev is state.guide_memory
            and p.arrival == ctx.arrival
        ]
        if len(hits) != 1:
            raise ProgramError(f"guide resolution found {len(hits)} candidates")
        idx = hits[0]
        if ctx.peers[idx].info.tag == SHADOW:
            # the guide became a shadow itself: follow its anchor instead
            anchors = [
                i for i, p in enumerate(ctx.peers) if not p.terminated and p.info.tag == TOKEN
            ]
            if len(anchors) != 1:
                raise ProgramError(
                    f"guide handoff expects exactly one colocated anchor, found {len(anchors)}"
                )
            idx = anchors[0]
        guide = ctx.peers[idx]
        if guide.info.tag not in (SEARCHER, TOKEN):
            raise ProgramError(f"guide is in unexpected state {guide.info.tag!r}")
        state.guide_memory = guide.memory
        resolved = ctx.resolved[idx]
        if resolved is None:
            raise ProgramError("guide decision not resolved before the mirror")
        return Decision(resolved.action, (("mirror", idx),))


class _MemKey:
    __slots__ = ("m",)

    def __init__(self, m: Memory) -> None:
        self.m = m

    def __lt__(self, other: "_MemKey") -> bool:
        return compare(self.m, other.m) == LESS

    def __eq__(self, other: object) -> bool:
        return isinstance(other, _MemKey) and self.m is other.m


def hg(advice: str, profile: ConstantsProfile | None = None) -> HgProgram:
    return HgProgram(advice, profile)


def hg_plus(profile: ConstantsProfile | None = None) -> HgProgram:
    return HgProgram(None, profile)
