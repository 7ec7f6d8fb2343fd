"""Cones with respect to the root, cone types, and the graph of types.

A cone at radius n is a connected component of the graph minus the ball
B(o, n). Its boundary is the set of cone vertices with a neighbour in the
ball; for root-based cones this is exactly the slice of the cone at distance
n+1 from the root, and it is also the piece the cone contributes to the
tesselation of the graph (the cone minus its successor cones).

Cone equality is decided on truncations: two cones get the same type when
their depth-limited regions, rooted at the boundary, have equal labelled
canonical forms. The truncation depth is increased on a schedule until the
type count and all successor-type multisets stabilize; downstream, the
grammar-vs-ball-matrix exactness oracle certifies that the merged types were
genuinely isomorphic.

Everything here is local: a cone's region is explored from its boundary slice
avoiding only the parent slice, so no large global balls are ever built, and
representatives found deep in the cone tree stay cheap.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field

from .graphs import GraphOracle, ball

MAX_BOUNDARY_PERMUTATIONS = 8


class ConeError(ValueError):
    """Invalid cone-analysis input or a structurally impossible cone."""


class CertificationError(ConeError):
    """Finite type could not be certified within the probe schedule."""

    def __init__(self, message: str, growth_trace):
        super().__init__(message)
        self.growth_trace = list(growth_trace)


# ---------------------------------------------------------------------------
# Local cone regions
# ---------------------------------------------------------------------------

@dataclass
class _Region:
    """Depth-limited BFS closure of a cone, rooted at its boundary slice."""
    depth_of: dict           # vertex -> distance from the boundary slice
    adj: dict                # vertex -> {label: target} within the region
    finite: bool             # True when the whole component set was exhausted
    max_depth: int


def _cone_region(oracle: GraphOracle, slice_vertices, parent_slice, depth: int) -> _Region:
    """Explore a cone (or union of cones sharing a parent slice) from its slice.

    One-step neighbours of cone vertices either stay in the cone or land in
    the parent slice, so avoiding ``parent_slice`` is enough to stay inside.
    """
    depth_of = {v: 0 for v in slice_vertices}
    adj = {v: {} for v in slice_vertices}
    queue = deque(slice_vertices)
    reached_cap = False
    while queue:
        v = queue.popleft()
        d = depth_of[v]
        if d == depth:
            reached_cap = True
            continue
        for a, w in oracle.neighbors(v):
            if w in parent_slice:
                continue
            if w not in depth_of:
                depth_of[w] = d + 1
                adj[w] = {}
                queue.append(w)
            adj[v][a] = w
    # edges incident to cap-depth vertices, within the stored region
    if reached_cap:
        for v, d in depth_of.items():
            if d == depth:
                for a, w in oracle.neighbors(v):
                    if w in depth_of:
                        adj[v][a] = w
    return _Region(depth_of=depth_of, adj=adj, finite=not reached_cap, max_depth=depth)


def _truncate(region: _Region, depth: int):
    """Adjacency of the sub-region at distance <= depth from the slice."""
    keep = {v for v, d in region.depth_of.items() if d <= depth}
    return {v: {a: w for a, w in region.adj[v].items() if w in keep} for v in keep}


def _canonical_form(oracle: GraphOracle, boundary_sorted, adj):
    """Canonical encoding of a truncated cone, minimized over boundary orderings.

    For a fixed ordering of the boundary the indexing BFS is fully
    deterministic (the graph is fully deterministic and symbols are ordered),
    so the encoding is well defined; minimizing over the m! orderings makes it
    an isomorphism invariant of the labelled region with marked boundary.
    Returns (encoding, boundary in the minimizing order).
    """
    m = len(boundary_sorted)
    if m > MAX_BOUNDARY_PERMUTATIONS:
        raise ConeError(
            f"cone boundary has {m} vertices; canonicalization is capped at "
            f"{MAX_BOUNDARY_PERMUTATIONS}")
    symbols = oracle.alphabet.symbols
    best = None
    best_perm = None
    for perm in itertools.permutations(boundary_sorted):
        index = {v: i for i, v in enumerate(perm)}
        order = list(perm)
        cursor = 0
        while cursor < len(order):
            v = order[cursor]
            cursor += 1
            row = adj[v]
            for a in symbols:
                w = row.get(a)
                if w is not None and w not in index:
                    index[w] = len(order)
                    order.append(w)
        enc = (m, tuple(
            tuple(index.get(adj[v].get(a), -1) for a in symbols) for v in order))
        if best is None or enc < best:
            best = enc
            best_perm = perm
    return best, best_perm


def canonical_indexing(oracle: GraphOracle, boundary_in_canonical_order, adj):
    """Vertex -> canonical index map for a region in canonical boundary order."""
    symbols = oracle.alphabet.symbols
    index = {v: i for i, v in enumerate(boundary_in_canonical_order)}
    order = list(boundary_in_canonical_order)
    cursor = 0
    while cursor < len(order):
        v = order[cursor]
        cursor += 1
        for a in symbols:
            w = adj[v].get(a)
            if w is not None and w not in index:
                index[w] = len(order)
                order.append(w)
    return index


def _component_map(region: _Region):
    parent = {v: v for v in region.depth_of}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for v in region.depth_of:
        for w in region.adj[v].values():
            rv, rw = find(v), find(w)
            if rv != rw:
                parent[rw] = rv
    return {v: find(v) for v in region.depth_of}


def _successor_slices(oracle: GraphOracle, region: _Region, boundary):
    """Group the depth-1 layer of a cone region into successor-cone slices.

    Successor cones are the components of the cone minus its boundary slice;
    connectivity is decided within the explored region (components that would
    merge only beyond the probe depth are seen as distinct, which the
    downstream exactness oracle would catch).
    """
    boundary_set = set(boundary)
    parent = {v: v for v in region.depth_of if v not in boundary_set}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for v in parent:
        for w in region.adj[v].values():
            if w in boundary_set:
                continue
            rv, rw = find(v), find(w)
            if rv != rw:
                parent[rw] = rv
    groups: dict = {}
    for v, d in region.depth_of.items():
        if d == 1:
            groups.setdefault(find(v), []).append(v)
    slices = [sorted(g, key=oracle.sort_key) for g in groups.values()]
    slices.sort(key=lambda g: oracle.sort_key(g[0]))
    return slices


# ---------------------------------------------------------------------------
# Public cone objects
# ---------------------------------------------------------------------------

@dataclass
class Cone:
    """One connected component of X minus B(o, radius), truncated for storage."""
    radius: int
    boundary: tuple          # sorted vertex keys; each has a neighbour in the ball
    vertices: dict           # vertex -> distance from the boundary within the cone
    edges: list              # directed labelled edges within the stored truncation
    entry_edges: list        # (ball vertex at distance n, label, boundary vertex)
    finite: bool = False


def cones_at(oracle: GraphOracle, o, n: int, depth: int = 8) -> list[Cone]:
    """Connected components of X minus B(o, n), discovered from the frontier."""
    if n < 0:
        raise ConeError("radius must be >= 0")
    b = ball(oracle, o, n + 1)
    frontier = sorted((v for v, d in b.distance.items() if d == n + 1),
                      key=oracle.sort_key)
    parent_slice = {v for v, d in b.distance.items() if d == n}
    if not frontier:
        return []
    region = _cone_region(oracle, frontier, parent_slice, depth)
    comp = _component_map(region)
    groups: dict = {}
    for v in region.depth_of:
        groups.setdefault(comp[v], []).append(v)
    cones = []
    for members in groups.values():
        mset = set(members)
        boundary = tuple(v for v in frontier if v in mset)
        vertices = {v: region.depth_of[v] for v in members}
        edges = [(v, a, w) for v in sorted(mset, key=oracle.sort_key)
                 for a, w in sorted(region.adj[v].items()) if w in mset]
        entry = [(u, a, w) for (u, a, w) in b.edges
                 if b.distance[u] == n and w in mset]
        finite = all(region.depth_of[v] < depth for v in members)
        cones.append(Cone(radius=n, boundary=boundary, vertices=vertices,
                          edges=edges, entry_edges=entry, finite=finite))
    cones.sort(key=lambda c: oracle.sort_key(c.boundary[0]))
    return cones


# ---------------------------------------------------------------------------
# Cone type table
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SuccessorLink:
    """A successor cone of a piece: its type and the bridge edges into it.

    ``entries`` lists (piece boundary index, label, successor boundary index)
    for every edge from the piece's boundary slice into the successor's
    boundary slice; both sides use canonical boundary order, so the successor
    indices are simultaneously positions in the representative's boundary
    (the fixed isomorphism transports canonical order to canonical order).
    """
    cone_type: int
    entries: tuple


@dataclass
class PieceData:
    """A tesselation piece: the root piece (index 0) or a cone type's slice."""
    index: int
    radius: int              # deleted-ball radius of the representative (-1 for root)
    boundary: tuple
    boundary_diameter: int
    slice_edges: tuple       # (i, label, j) directed edges within the slice
    successors: tuple = ()
    parent_slice: tuple = () # rootward slice of the representative (for re-exploration)

    @property
    def successor_multiset(self):
        return tuple(sorted(s.cone_type for s in self.successors))


@dataclass
class ConeTypeTable:
    """Certified cone types: representatives, tesselation pieces, successors."""
    root: object
    pieces: list
    probe_depth: int
    stabilized_at: tuple
    growth_trace: list
    oracle: GraphOracle = field(repr=False, default=None)

    @property
    def root_piece(self):
        return self.pieces[0]

    @property
    def types(self):
        return self.pieces[1:]

    @property
    def type_count(self):
        return len(self.pieces) - 1

    @property
    def max_boundary_diameter(self):
        return max((p.boundary_diameter for p in self.types), default=0)

    def a_matrix(self):
        r = self.type_count
        a = [[0] * r for _ in range(r)]
        for p in self.types:
            for s in p.successors:
                a[p.index - 1][s.cone_type - 1] += 1
        return a


def _boundary_diameter(region: _Region, boundary):
    """Diameter of the boundary, measured inside the explored cone region."""
    if len(boundary) == 1:
        return 0
    worst = 0
    bset = set(boundary)
    for src in boundary:
        dist = {src: 0}
        queue = deque([src])
        remaining = len(bset) - 1
        while queue and remaining:
            v = queue.popleft()
            for w in region.adj[v].values():
                if w not in dist:
                    dist[w] = dist[v] + 1
                    if w in bset:
                        remaining -= 1
                    queue.append(w)
        for t in bset:
            if t not in dist:
                raise ConeError("cone boundary not connected within the probe "
                                "region; increase the probe depth")
            worst = max(worst, dist[t])
    return worst


class _Explorer:
    """One exploration of the cone tree at a fixed probe depth.

    Processes every radius-0 cone, every type representative (the first cone
    found with a new canonical form) and, as a verification ring, every
    successor of a representative. A processed cone whose type already has a
    representative must reproduce the representative's successor-type multiset
    and slice edges; any mismatch marks the depth as unstable.
    """

    def __init__(self, oracle: GraphOracle, o, depth: int, max_radius: int,
                 max_types: int):
        self.oracle = oracle
        self.o = o
        self.depth = depth
        self.max_radius = max_radius
        self.max_types = max_types
        self.canon_to_type: dict = {}
        self.pieces: list = [None]
        self.stable = True

    def run(self):
        oracle, o = self.oracle, self.o
        loops = tuple((0, a, 0) for a, w in oracle.neighbors(o) if w == o)
        root_slice = sorted({w for _a, w in oracle.neighbors(o) if w != o},
                            key=oracle.sort_key)
        if not root_slice:
            raise ConeError("the root vertex has only loops; the graph is finite")
        # (radius, parent_slice, boundary in canonical order, type id)
        queue: deque = deque()
        region = _cone_region(oracle, root_slice, {o}, self.depth + 1)
        comp = _component_map(region)
        groups: dict = {}
        for v in root_slice:
            groups.setdefault(comp[v], []).append(v)
        root_slices = sorted(groups.values(), key=lambda g: oracle.sort_key(g[0]))
        root_links = self._link_successors((o,), root_slices, {o}, 0, queue,
                                           enqueue_ring=True)
        self.pieces[0] = PieceData(index=0, radius=-1, boundary=(o,),
                                   boundary_diameter=0, slice_edges=loops,
                                   successors=tuple(root_links))
        while queue:
            self._process(queue.popleft(), queue)
        if any(p is None for p in self.pieces):
            raise ConeError("internal error: unprocessed cone type")
        return self.pieces, self.stable

    def _classify(self, slice_sorted, parent_slice):
        """Type id, canonical boundary order, and whether the type is new."""
        region = _cone_region(self.oracle, slice_sorted, parent_slice, self.depth)
        if region.finite:
            raise ConeError(
                f"finite cone with boundary {slice_sorted!r}: every cone must be "
                f"infinite for the tree-set construction")
        adj = _truncate(region, self.depth)
        enc, perm = _canonical_form(self.oracle, slice_sorted, adj)
        type_id = self.canon_to_type.get(enc)
        created = type_id is None
        if created:
            type_id = len(self.pieces)
            if type_id > self.max_types:
                raise CertificationError(
                    f"more than {self.max_types} cone types at probe depth "
                    f"{self.depth}", [(self.depth, len(self.pieces) - 1)])
            self.canon_to_type[enc] = type_id
            self.pieces.append(None)
        return type_id, tuple(perm), created

    def _link_successors(self, boundary, slices, parent_slice, succ_radius,
                         queue, enqueue_ring):
        links = []
        bindex = {v: i for i, v in enumerate(boundary)}
        avoid = set(boundary)
        for sl in slices:
            type_id, succ_boundary, created = self._classify(sl, avoid)
            sindex = {v: i for i, v in enumerate(succ_boundary)}
            entries = []
            for v in boundary:
                for a, w in self.oracle.neighbors(v):
                    if w in sindex:
                        entries.append((bindex[v], a, sindex[w]))
            entries.sort()
            links.append(SuccessorLink(cone_type=type_id, entries=tuple(entries)))
            if created or enqueue_ring:
                if succ_radius > self.max_radius:
                    raise CertificationError(
                        f"cone tree exploration exceeded max radius "
                        f"{self.max_radius} at probe depth {self.depth}",
                        [(self.depth, len(self.pieces) - 1)])
                queue.append((succ_radius, frozenset(boundary), succ_boundary,
                              type_id))
        return links

    def _process(self, raw, queue):
        radius, parent_slice, boundary, type_id = raw
        is_rep = self.pieces[type_id] is None
        region = _cone_region(self.oracle, list(boundary), parent_slice,
                              self.depth + 1)
        if region.finite:
            raise ConeError(f"finite cone with boundary {boundary!r}")
        slices = _successor_slices(self.oracle, region, boundary)
        links = self._link_successors(boundary, slices, parent_slice,
                                      radius + 1, queue, enqueue_ring=is_rep)
        bindex = {v: i for i, v in enumerate(boundary)}
        slice_edges = tuple(sorted(
            (bindex[v], a, bindex[w])
            for v in boundary for a, w in region.adj[v].items() if w in bindex))
        if is_rep:
            self.pieces[type_id] = PieceData(
                index=type_id, radius=radius, boundary=tuple(boundary),
                boundary_diameter=_boundary_diameter(region, boundary),
                slice_edges=slice_edges, successors=tuple(links),
                parent_slice=tuple(sorted(parent_slice, key=self.oracle.sort_key)))
        else:
            rep = self.pieces[type_id]
            multiset = tuple(sorted(l.cone_type for l in links))
            if rep.successor_multiset != multiset or rep.slice_edges != slice_edges:
                self.stable = False


def assign_types(oracle: GraphOracle, o=None, probe_start: int = 4,
                 probe_step: int = 2, max_radius: int = 24,
                 max_types: int = 500) -> ConeTypeTable:
    """Assign cone types by truncated canonical forms with depth stabilization.

    The probe depth runs through probe_start, probe_start+probe_step, ... up
    to max_radius; the table is certified once the type count agrees on two
    consecutive depths, the per-type successor multisets agree between those
    depths, and every explored cone's successor structure matches its
    representative's at both depths. Raises CertificationError carrying the
    growth trace when the schedule is exhausted first.
    """
    if o is None:
        o = oracle.root
    if probe_start < 1 or probe_step < 1:
        raise ConeError("probe depths must be >= 1")
    trace = []
    prev = None  # (depth, pieces, stable)
    depth = probe_start
    while depth <= max_radius:
        explorer = _Explorer(oracle, o, depth, max_radius, max_types)
        pieces, stable = explorer.run()
        trace.append((depth, len(pieces) - 1, stable))
        if prev is not None and stable and prev[2]:
            pieces_prev = prev[1]
            if len(pieces_prev) == len(pieces) and all(
                    a.successor_multiset == b.successor_multiset
                    and len(a.boundary) == len(b.boundary)
                    for a, b in zip(pieces_prev, pieces)):
                return ConeTypeTable(root=o, pieces=pieces, probe_depth=depth,
                                     stabilized_at=(prev[0], depth),
                                     growth_trace=trace, oracle=oracle)
        prev = (depth, pieces, stable)
        depth += probe_step
    raise CertificationError(
        "finite type not certified: type count or successor structure still "
        f"changing at max radius {max_radius}", trace)


# ---------------------------------------------------------------------------
# Graph of types
# ---------------------------------------------------------------------------

@dataclass
class TypeGraph:
    """The finite oriented graph of types with multiplicity matrix a(i, j)."""
    a: list
    strongly_connected: bool
    period: int              # gcd of all cycle lengths (0 when acyclic)
    blocks: list             # level partition when strongly connected, else None
    reachability: list


def _strong_components(n, edges):
    adj = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
    index = [None] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list = []
    comp = [None] * n
    counter = 0
    ncomp = 0
    for start in range(n):
        if index[start] is not None:
            continue
        work = [(start, 0)]
        while work:
            v, pi = work[-1]
            if pi == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            advanced = False
            for i in range(pi, len(adj[v])):
                w = adj[v][i]
                if index[w] is None:
                    work[-1] = (v, i + 1)
                    work.append((w, 0))
                    advanced = True
                    break
                if on_stack[w]:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            if low[v] == index[v]:
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp[w] = ncomp
                    if w == v:
                        break
                ncomp += 1
            work.pop()
            if work:
                u = work[-1][0]
                low[u] = min(low[u], low[v])
    return comp, ncomp


def _digraph_period(n, edges):
    """gcd of all cycle lengths over all strong components (0 if acyclic)."""
    comp, ncomp = _strong_components(n, edges)
    adj = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
    g = 0
    for c in range(ncomp):
        members = [v for v in range(n) if comp[v] == c]
        if not any(comp[w] == c for v in members for w in adj[v]):
            continue
        level = {members[0]: 0}
        queue = deque([members[0]])
        while queue:
            v = queue.popleft()
            for w in adj[v]:
                if comp[w] != c:
                    continue
                if w not in level:
                    level[w] = level[v] + 1
                    queue.append(w)
                else:
                    g = math.gcd(g, abs(level[v] + 1 - level[w]))
    return g


def type_graph(table: ConeTypeTable) -> TypeGraph:
    """Multiplicity matrix a(i, j), strong connectivity, period, blocks."""
    a = table.a_matrix()
    r = len(a)
    edges = [(i, j) for i in range(r) for j in range(r) if a[i][j] > 0]
    comp, ncomp = _strong_components(r, edges)
    strongly_connected = (ncomp == 1)
    period = _digraph_period(r, edges)
    blocks = None
    if strongly_connected and period > 0:
        adj = [[] for _ in range(r)]
        for u, v in edges:
            adj[u].append(v)
        level = {0: 0}
        queue = deque([0])
        while queue:
            v = queue.popleft()
            for w in adj[v]:
                if w not in level:
                    level[w] = level[v] + 1
                    queue.append(w)
        blocks = [sorted(v for v in range(r) if level[v] % period == k)
                  for k in range(period)]
    reach = [[i == j or a[i][j] > 0 for j in range(r)] for i in range(r)]
    for k in range(r):
        for i in range(r):
            if reach[i][k]:
                rk = reach[k]
                ri = reach[i]
                for j in range(r):
                    if rk[j]:
                        ri[j] = True
    return TypeGraph(a=a, strongly_connected=strongly_connected, period=period,
                     blocks=blocks, reachability=reach)


def check_irreducible(tg: TypeGraph):
    """True iff the graph of types is strongly connected (every type reaches
    every type); the report carries the reachability matrix."""
    report = {
        "strongly_connected": tg.strongly_connected,
        "reachability": [[bool(x) for x in row] for row in tg.reachability],
    }
    return tg.strongly_connected, report
