"""Anonymous port-labeled graphs: builders, validation, paths, text format.

Nodes carry no agent-visible identity; navigation happens exclusively through
local port numbers 0..deg(v)-1.  Node indices in this module are simulator
bookkeeping and never cross the agent API.
"""

from __future__ import annotations

import random
from dataclasses import dataclass


class GraphError(ValueError):
    pass


class PathError(GraphError):
    """A port sequence stopped being a valid path; reports where and why."""

    def __init__(self, position: int, reason: str) -> None:
        super().__init__(f"invalid path at position {position}: {reason}")
        self.position = position
        self.reason = reason


@dataclass(frozen=True, slots=True)
class PortGraph:
    """Simple connected undirected graph with a local port numbering.

    ``adjacency[v][p] == (u, q)`` means port ``p`` at ``v`` leads to ``u``
    and the same edge has port ``q`` at ``u``.
    """

    adjacency: tuple[tuple[tuple[int, int], ...], ...]

    @property
    def n(self) -> int:
        return len(self.adjacency)

    def degree(self, v: int) -> int:
        self._check_node(v)
        return len(self.adjacency[v])

    def succ(self, v: int, p: int) -> int:
        self._check_node(v)
        if not 0 <= p < len(self.adjacency[v]):
            raise GraphError(f"node {v} has no port {p} (degree {len(self.adjacency[v])})")
        return self.adjacency[v][p][0]

    def port(self, u: int, v: int) -> int:
        """The port at ``u`` leading to ``v``; errors if not adjacent."""
        self._check_node(u)
        self._check_node(v)
        for p, (w, _) in enumerate(self.adjacency[u]):
            if w == v:
                return p
        raise GraphError(f"nodes {u} and {v} are not adjacent")

    def reverse_port(self, v: int, p: int) -> int:
        """Port of the edge (v, succ(v,p)) at the far endpoint."""
        self._check_node(v)
        if not 0 <= p < len(self.adjacency[v]):
            raise GraphError(f"node {v} has no port {p}")
        return self.adjacency[v][p][1]

    def edges(self) -> list[tuple[int, int, int, int]]:
        """Each edge once, as (u, port_u, v, port_v) with u < v."""
        out = []
        for v, ports in enumerate(self.adjacency):
            for p, (u, q) in enumerate(ports):
                if v < u:
                    out.append((v, p, u, q))
        return out

    def _check_node(self, v: int) -> None:
        if not 0 <= v < len(self.adjacency):
            raise GraphError(f"node index {v} out of range (n={len(self.adjacency)})")


def _validate(adjacency: list[list[tuple[int, int]]]) -> None:
    n = len(adjacency)
    if n < 1:
        raise GraphError("graph needs at least one node")
    seen_pairs = set()
    for v, ports in enumerate(adjacency):
        for p, (u, q) in enumerate(ports):
            if not 0 <= u < n:
                raise GraphError(f"port {p} at node {v} points to missing node {u}")
            if u == v:
                raise GraphError(f"self-loop at node {v}")
            if (v, u) in seen_pairs:
                raise GraphError(f"multi-edge between {v} and {u}")
            seen_pairs.add((v, u))
            if not 0 <= q < len(adjacency[u]):
                raise GraphError(f"reverse port {q} missing at node {u}")
            if adjacency[u][q] != (v, p):
                raise GraphError(
                    f"port mismatch on edge {v}-{u}: {v}:{p} expects {u}:{q} to lead back"
                )
    # connectivity
    if n > 1:
        seen = {0}
        frontier = [0]
        while frontier:
            v = frontier.pop()
            for u, _ in adjacency[v]:
                if u not in seen:
                    seen.add(u)
                    frontier.append(u)
        if len(seen) != n:
            raise GraphError(f"graph is disconnected ({len(seen)} of {n} nodes reachable)")


def build_from_edge_list(n: int, edges: list[tuple[int, int, int, int]]) -> PortGraph:
    """Build from explicit (u, port_u, v, port_v) entries.

    Port numbers are given, not assigned, because the numbering is part of
    the instance under test.  Ports at each node must be exactly 0..deg-1.
    """
    slots: list[dict[int, tuple[int, int]]] = [dict() for _ in range(n)]
    for u, pu, v, pv in edges:
        for w in (u, v):
            if not 0 <= w < n:
                raise GraphError(f"edge endpoint {w} out of range")
        if u == v:
            raise GraphError(f"self-loop at node {u}")
        if pu in slots[u]:
            raise GraphError(f"duplicate port {pu} at node {u}")
        if pv in slots[v]:
            raise GraphError(f"duplicate port {pv} at node {v}")
        slots[u][pu] = (v, pv)
        slots[v][pv] = (u, pu)
    adjacency: list[list[tuple[int, int]]] = []
    for v, d in enumerate(slots):
        if not d:
            raise GraphError(f"node {v} has no incident edge")
        deg = len(d)
        if sorted(d) != list(range(deg)):
            raise GraphError(f"ports at node {v} are not contiguous 0..{deg - 1}: {sorted(d)}")
        adjacency.append([d[p] for p in range(deg)])
    _validate(adjacency)
    return PortGraph(tuple(tuple(row) for row in adjacency))


def build_ring(size: int, clockwise_port_zero: bool = True) -> PortGraph:
    """Ring where port 0 goes clockwise (to v+1) and port 1 counter-clockwise."""
    if size < 3:
        raise GraphError(f"ring size must be at least 3, got {size}")
    adjacency = []
    for i in range(size):
        nxt = ((i + 1) % size, 1)
        prv = ((i - 1) % size, 0)
        adjacency.append((nxt, prv) if clockwise_port_zero else (prv, nxt))
    g = PortGraph(tuple(adjacency))
    _validate([list(row) for row in adjacency])
    return g


def build_k2() -> PortGraph:
    return build_from_edge_list(2, [(0, 0, 1, 0)])


def random_connected(n: int, m: int, seed: int) -> PortGraph:
    """Seeded random simple connected graph: spanning tree plus extra edges.

    Construction: random attachment tree over a shuffled node order, then
    extra edges drawn from the remaining non-edges, then each node's port
    order shuffled.  Everything is driven by one ``random.Random(seed)`` so
    a (n, m, seed) triple always yields the same graph.
    """
    max_m = n * (n - 1) // 2
    if not n - 1 <= m <= max_m:
        raise GraphError(f"need n-1 <= m <= n(n-1)/2, got n={n}, m={m}")
    rng = random.Random(seed)
    order = list(range(n))
    rng.shuffle(order)
    edge_set: set[tuple[int, int]] = set()
    for i in range(1, n):
        j = rng.randrange(i)
        a, b = order[i], order[j]
        edge_set.add((min(a, b), max(a, b)))
    candidates = [
        (u, v) for u in range(n) for v in range(u + 1, n) if (u, v) not in edge_set
    ]
    rng.shuffle(candidates)
    for extra in candidates[: m - len(edge_set)]:
        edge_set.add(extra)
    incident: list[list[int]] = [[] for _ in range(n)]
    for u, v in sorted(edge_set):
        incident[u].append(v)
        incident[v].append(u)
    for v in range(n):
        rng.shuffle(incident[v])
    port_of = {}
    for v in range(n):
        for p, u in enumerate(incident[v]):
            port_of[(v, u)] = p
    adjacency = tuple(
        tuple((u, port_of[(u, v)]) for u in incident[v]) for v in range(n)
    )
    _validate([list(row) for row in adjacency])
    return PortGraph(adjacency)


def follow_path(g: PortGraph, u: int, ports: tuple[int, ...] | list[int]) -> int:
    """Walk an alternating (exit, entry) port sequence from ``u``.

    Checks validity as it goes: the exit port must exist at the current node
    and the declared entry port must match the actual port of arrival.
    Returns the terminal node.
    """
    g._check_node(u)
    seq = tuple(ports)
    if len(seq) % 2 != 0:
        raise PathError(len(seq), "odd number of ports (must alternate exit/entry)")
    cur = u
    for i in range(0, len(seq), 2):
        exit_p, entry_p = seq[i], seq[i + 1]
        if not 0 <= exit_p < g.degree(cur):
            raise PathError(i + 1, f"no port {exit_p} at current node (degree {g.degree(cur)})")
        nxt = g.succ(cur, exit_p)
        actual_entry = g.reverse_port(cur, exit_p)
        if actual_entry != entry_p:
            raise PathError(i + 2, f"entry port is {actual_entry}, sequence says {entry_p}")
        cur = nxt
    return cur


def is_valid_path(g: PortGraph, u: int, ports) -> bool:
    try:
        follow_path(g, u, ports)
        return True
    except PathError:
        return False


def bfs_distances(g: PortGraph, source: int) -> list[int]:
    """Hop distances from source; reference for spanning-tree checks."""
    dist = [-1] * g.n
    dist[source] = 0
    queue = [source]
    head = 0
    while head < len(queue):
        v = queue[head]
        head += 1
        for u, _ in g.adjacency[v]:
            if dist[u] < 0:
                dist[u] = dist[v] + 1
                queue.append(u)
    return dist


def format_graph_text(g: PortGraph) -> str:
    """Serialize to the exchange format: ``n m`` then ``u p_u v p_v`` lines."""
    edges = g.edges()
    lines = [f"{g.n} {len(edges)}"]
    for u, pu, v, pv in edges:
        lines.append(f"{u} {pu} {v} {pv}")
    return "\n".join(lines) + "\n"


def parse_graph_text(text: str) -> PortGraph:
    """Parse the exchange format; errors cite 1-based line numbers."""
    lines = text.splitlines()
    idx = 0
    while idx < len(lines) and not lines[idx].strip():
        idx += 1
    if idx >= len(lines):
        raise GraphError("line 1: empty graph text")
    header = lines[idx].split()
    if len(header) != 2:
        raise GraphError(f"line {idx + 1}: expected 'n m', got {lines[idx]!r}")
    try:
        n, m = int(header[0]), int(header[1])
    except ValueError:
        raise GraphError(f"line {idx + 1}: n and m must be integers") from None
    edges = []
    lineno = idx + 1
    for _ in range(m):
        lineno += 1
        while lineno - 1 < len(lines) and not lines[lineno - 1].strip():
            lineno += 1
        if lineno - 1 >= len(lines):
            raise GraphError(f"line {lineno}: expected {m} edge lines, got {len(edges)}")
        parts = lines[lineno - 1].split()
        if len(parts) != 4:
            raise GraphError(f"line {lineno}: expected 'u p_u v p_v', got {lines[lineno - 1]!r}")
        try:
            u, pu, v, pv = (int(x) for x in parts)
        except ValueError:
            raise GraphError(f"line {lineno}: edge fields must be integers") from None
        edges.append((u, pu, v, pv))
    for off, extra in enumerate(lines[lineno:], start=lineno + 1):
        if extra.strip():
            raise GraphError(f"line {off}: trailing content {extra!r}")
    try:
        return build_from_edge_list(n, edges)
    except GraphError as e:
        raise GraphError(f"graph body invalid: {e}") from None
