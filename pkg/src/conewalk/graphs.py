"""Lazily evaluated infinite labelled graphs with canonical vertex keys.

All oracles expose the same minimal interface: an alphabet with involution, a
root vertex, and a pure ``neighbor(x, a)`` function that is total (fully
deterministic) and symmetric ((x,a,y) is an edge iff (y,a^{-1},x) is). There
is deliberately no global vertex enumeration; everything downstream works on
balls and on locally explored regions.

Families provided:

* free groups F_k (Cayley graph on standard symmetric generators),
* free products of finite groups (given by multiplication tables),
* Schreier graphs of finitely generated subgroups of F_k (folded core plus
  hanging trees, built by iterated edge folding),
* explicit piece descriptions (a finite root piece plus finitely many piece
  types with attachment maps, unrolled lazily).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .alphabet import AlphabetError, LabelAlphabet, free_group_alphabet, involutive_alphabet


class GraphError(ValueError):
    """Invalid graph construction input."""


class GraphKeyError(KeyError):
    """Malformed or non-canonical vertex key."""


class GraphOracle:
    """Base interface; subclasses implement ``neighbor``."""

    alphabet: LabelAlphabet
    root: object

    def neighbor(self, x, a: str):
        raise NotImplementedError

    def neighbors(self, x) -> list[tuple[str, object]]:
        """One entry per alphabet symbol, in alphabet order."""
        return [(a, self.neighbor(x, a)) for a in self.alphabet.symbols]

    def sort_key(self, x):
        """Deterministic total order on vertex keys (for reproducible output)."""
        return repr(x)


def follow_word(oracle: GraphOracle, start, word) -> object:
    """Walk from ``start`` along a label sequence (string or iterable of symbols)."""
    v = start
    for a in word:
        v = oracle.neighbor(v, a)
    return v


# ---------------------------------------------------------------------------
# Balls
# ---------------------------------------------------------------------------

@dataclass
class BallView:
    """Finite BFS closure of radius ``radius`` around ``center``.

    ``distance`` maps every ball vertex to its graph distance from the center;
    ``edges`` lists every directed labelled edge with both endpoints in the
    ball; ``frontier`` is the set of vertices at exact distance ``radius``.
    """

    center: object
    radius: int
    distance: dict
    edges: list
    neighbor_cache: dict = field(default_factory=dict, repr=False)

    @property
    def vertices(self):
        return self.distance.keys()

    @property
    def frontier(self):
        return {v for v, d in self.distance.items() if d == self.radius}

    def __len__(self):
        return len(self.distance)


def ball(oracle: GraphOracle, center, radius: int, vertex_cap: int | None = None) -> BallView:
    """Breadth-first ball; raises GraphError when ``vertex_cap`` is exceeded."""
    if radius < 0:
        raise GraphError("radius must be >= 0")
    dist = {center: 0}
    nbrs = {}
    queue = deque([center])
    while queue:
        v = queue.popleft()
        d = dist[v]
        if d == radius:
            continue
        nv = oracle.neighbors(v)
        nbrs[v] = nv
        for _a, w in nv:
            if w not in dist:
                dist[w] = d + 1
                if vertex_cap is not None and len(dist) > vertex_cap:
                    raise GraphError(
                        f"ball({center!r}, {radius}) exceeds vertex cap {vertex_cap}")
                queue.append(w)
    edges = []
    for v in dist:
        nv = nbrs.get(v)
        if nv is None:
            nv = oracle.neighbors(v)
            nbrs[v] = nv
        for a, w in nv:
            if w in dist:
                edges.append((v, a, w))
    return BallView(center=center, radius=radius, distance=dist, edges=edges,
                    neighbor_cache=nbrs)


def balls_isomorphic(oracle1: GraphOracle, c1, oracle2: GraphOracle, c2, radius: int) -> bool:
    """Labelled-graph isomorphism of two balls, matching centers.

    For fully deterministic labelled graphs the centered isomorphism is unique
    if it exists, so a single BFS propagation decides the question exactly.
    """
    b1 = ball(oracle1, c1, radius)
    b2 = ball(oracle2, c2, radius)
    if len(b1) != len(b2):
        return False
    mapping = {c1: c2}
    queue = deque([c1])
    while queue:
        v = queue.popleft()
        v2 = mapping[v]
        if b1.distance[v] != b2.distance[v2]:
            return False
        if b1.distance[v] == radius:
            continue
        for a, w in oracle1.neighbors(v):
            w2 = oracle2.neighbor(v2, a)
            if (w in b1.distance) != (w2 in b2.distance):
                return False
            if w not in b1.distance:
                continue
            if w in mapping:
                if mapping[w] != w2:
                    return False
            else:
                mapping[w] = w2
                queue.append(w)
    if len(set(mapping.values())) != len(mapping):
        return False
    return True


# ---------------------------------------------------------------------------
# Schreier graphs of subgroups of free groups (and free groups themselves)
# ---------------------------------------------------------------------------

class SchreierGraph(GraphOracle):
    """Coset graph of K = <generators> in F_k, folded core plus hanging trees.

    Vertices are keyed by canonical words: the shortlex-first word reaching the
    vertex from the root. Core vertices carry their shortlex representative;
    a vertex hanging off the core at exit vertex c is keyed rep(c) + w with w
    the reduced hanging word. For the trivial subgroup the core is the root
    alone and keys are exactly the reduced words of F_k.
    """

    def __init__(self, rank: int, generators: list[str]):
        if rank < 1:
            raise GraphError("free group rank must be >= 1")
        self.rank = rank
        self.alphabet = free_group_alphabet(rank)
        self.generator_words = tuple(generators)
        for w in generators:
            for ch in w:
                if ch not in self.alphabet:
                    raise GraphError(f"generator word {w!r} uses unknown symbol {ch!r}")
        self._core = _fold_core(self.alphabet, generators)
        self._rep, self._rep_to_vertex = _shortlex_reps(self.alphabet, self._core)
        self.root = self._rep[0]

    def sort_key(self, x):
        return (len(x), x)

    def _parse(self, key: str):
        """Split a canonical key into (core exit vertex, hanging word); validates."""
        if not isinstance(key, str):
            raise GraphKeyError(f"expected string key, got {type(key).__name__}")
        inv = self.alphabet.invert
        u = 0
        i = 0
        while i < len(key):
            ch = key[i]
            if ch not in self.alphabet:
                raise GraphKeyError(f"unknown symbol {ch!r} in key {key!r}")
            nxt = self._core[u].get(ch)
            if nxt is None:
                break
            u = nxt
            i += 1
        hanging = key[i:]
        for ch in hanging:
            if ch not in self.alphabet:
                raise GraphKeyError(f"unknown symbol {ch!r} in key {key!r}")
        for j in range(len(hanging) - 1):
            if hanging[j + 1] == inv(hanging[j]):
                raise GraphKeyError(f"key {key!r} is not a reduced word off the core")
        if self._rep[u] + hanging != key:
            raise GraphKeyError(f"key {key!r} is not canonical for this graph")
        return u, hanging

    def neighbor(self, x, a: str):
        if a not in self.alphabet:
            raise AlphabetError(f"unknown symbol {a!r}")
        u, hanging = self._parse(x)
        inv = self.alphabet.invert
        if not hanging:
            tgt = self._core[u].get(a)
            if tgt is not None:
                return self._rep[tgt]
            return x + a
        if a == inv(hanging[-1]):
            return x[:-1]
        return x + a


def _fold_core(alphabet: LabelAlphabet, generators: list[str]):
    """Stallings folding: wedge of generator loops at the root, folded to a
    deterministic partial graph. Returns adjacency dicts, root at index 0."""
    inv = alphabet.invert
    edges = []  # (u, a, v), symmetric closure kept implicitly

    n = 1
    for w in generators:
        prev = 0
        for i, ch in enumerate(w):
            if i == len(w) - 1:
                tgt = 0
            else:
                tgt = n
                n += 1
            edges.append((prev, ch, tgt))
            prev = tgt

    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    # repeatedly merge targets of equally labelled edges from one vertex
    while True:
        adj: dict[int, dict[str, int]] = {}
        merge = None
        for (u, a, v) in edges:
            for (s, lbl, t) in ((find(u), a, find(v)), (find(v), inv(a), find(u))):
                row = adj.setdefault(s, {})
                if lbl in row and row[lbl] != t:
                    merge = (row[lbl], t)
                    break
                row[lbl] = t
            if merge:
                break
        if merge is None:
            break
        x, y = (find(merge[0]), find(merge[1]))
        if x != y:
            # keep the root's class rooted at 0
            if y == find(0):
                x, y = y, x
            parent[y] = x

    # compact to consecutive ids with the root first
    live = sorted({find(i) for i in range(n)}, key=lambda i: (i != find(0), i))
    renum = {v: i for i, v in enumerate(live)}
    core: list[dict[str, int]] = [dict() for _ in live]
    for (u, a, v) in edges:
        s, t = renum[find(u)], renum[find(v)]
        core[s][a] = t
        core[t][inv(a)] = s
    return core


def _shortlex_reps(alphabet: LabelAlphabet, core):
    """Shortlex-minimal representative word for each core vertex (BFS in
    alphabet order). The representative set is prefix-closed."""
    rep = {0: ""}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for a in alphabet.symbols:
            v = core[u].get(a)
            if v is not None and v not in rep:
                rep[v] = rep[u] + a
                queue.append(v)
    if len(rep) != len(core):
        raise GraphError("folded core is not connected")  # cannot happen for wedges
    return rep, {w: v for v, w in rep.items()}


def make_free_group(rank: int) -> SchreierGraph:
    """Cayley graph of F_k on a/A, b/B, ...; vertices are reduced words."""
    return SchreierGraph(rank, [])


def make_subgroup_schreier(rank: int, generators: list[str]) -> SchreierGraph:
    """Schreier graph of the right cosets of <generators> in F_k."""
    return SchreierGraph(rank, generators)


# ---------------------------------------------------------------------------
# Free products of finite groups
# ---------------------------------------------------------------------------

def _check_group_table(table) -> int:
    n = len(table)
    if n < 2:
        raise GraphError("factor groups must have order >= 2")
    for row in table:
        if len(row) != n:
            raise GraphError("multiplication table must be square")
    for i in range(n):
        if table[0][i] != i or table[i][0] != i:
            raise GraphError("element 0 must be the identity")
        if sorted(table[i]) != list(range(n)) or sorted(table[j][i] for j in range(n)) != list(range(n)):
            raise GraphError("multiplication table rows/columns must be permutations")
    for i in range(n):
        if not any(table[i][j] == 0 for j in range(n)):
            raise GraphError(f"element {i} has no inverse")
    for i in range(n):
        for j in range(n):
            for k in range(n):
                if table[table[i][j]][k] != table[i][table[j][k]]:
                    raise GraphError("multiplication table is not associative")
    return n


def _inverse_in_table(table, g: int) -> int:
    for h in range(len(table)):
        if table[g][h] == 0:
            return h
    raise GraphError("no inverse")  # unreachable after validation


def _default_product_symbols(factors) -> list[list[str]]:
    if all(len(t) == 2 for t in factors) and len(factors) <= 9:
        letters = "rstuvwxyz"
        return [[letters[i]] for i in range(len(factors))]
    letters = "abcdefghijklmnopqrstuvwxyz"
    out = []
    for fi, table in enumerate(factors):
        n = len(table)
        base = letters[fi]
        names: list[str | None] = [None] * n
        pair_count = sum(1 for g in range(1, n) if _inverse_in_table(table, g) != g)
        # digit suffixes only when one letter cannot cover the factor
        plain = (n == 2) or (n == 3 and pair_count == 2)
        for g in range(1, n):
            if names[g] is not None:
                continue
            h = _inverse_in_table(table, g)
            if h == g:
                names[g] = base if plain else f"{base}{g}"
            else:
                names[g] = base if plain else f"{base}{g}"
                names[h] = names[g].upper()
        out.append([names[g] for g in range(1, n)])
    return out


class FreeProductGraph(GraphOracle):
    """Cayley graph of a free product of finite groups.

    The alphabet consists of all non-identity elements of all factors; a
    vertex is the alternating normal form, stored as a tuple of
    (factor index, element index) syllables.
    """

    def __init__(self, factors, symbols: list[list[str]] | None = None):
        if len(factors) < 2:
            raise GraphError("a free product needs at least 2 factors")
        self.factors = [ [list(row) for row in t] for t in factors ]
        for t in self.factors:
            _check_group_table(t)
        if symbols is None:
            symbols = _default_product_symbols(self.factors)
        if len(symbols) != len(self.factors) or any(
                len(s) != len(t) - 1 for s, t in zip(symbols, self.factors)):
            raise GraphError("symbols must name every non-identity factor element")
        pairs = []
        self._symbol_elem: dict[str, tuple[int, int]] = {}
        for fi, (t, names) in enumerate(zip(self.factors, symbols)):
            for g in range(1, len(t)):
                name = names[g - 1]
                inv_name = symbols[fi][_inverse_in_table(t, g) - 1]
                pairs.append((name, inv_name))
                if name in self._symbol_elem:
                    raise GraphError(f"duplicate symbol {name!r}")
                self._symbol_elem[name] = (fi, g)
        self.alphabet = involutive_alphabet(pairs)
        self.root = ()

    def sort_key(self, x):
        return (len(x), x)

    def neighbor(self, x, a: str):
        if a not in self._symbol_elem:
            raise AlphabetError(f"unknown symbol {a!r}")
        if not isinstance(x, tuple):
            raise GraphKeyError(f"expected tuple key, got {type(x).__name__}")
        for syl in x:
            if (not isinstance(syl, tuple) or len(syl) != 2
                    or not (0 <= syl[0] < len(self.factors))
                    or not (1 <= syl[1] < len(self.factors[syl[0]]))):
                raise GraphKeyError(f"malformed normal form {x!r}")
        for s, t in zip(x, x[1:]):
            if s[0] == t[0]:
                raise GraphKeyError(f"{x!r} is not an alternating normal form")
        fi, g = self._symbol_elem[a]
        if x and x[-1][0] == fi:
            combined = self.factors[fi][x[-1][1]][g]
            if combined == 0:
                return x[:-1]
            return x[:-1] + ((fi, combined),)
        return x + ((fi, g),)


def make_free_product(factors, symbols=None) -> FreeProductGraph:
    return FreeProductGraph(factors, symbols)


# ---------------------------------------------------------------------------
# Explicit piece descriptions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AttachmentSpec:
    """One child piece instance: edges (local vertex, label, child port vertex)."""
    piece: str
    edges: tuple


@dataclass(frozen=True)
class PieceSpec:
    """A finite labelled piece.

    ``ports`` lists (vertex, incoming label) pairs: the vertex receives an edge
    with that label from the parent piece, and its implicit upward edge is the
    inverse label. The root piece has no ports.
    """
    name: str
    vertices: tuple
    edges: tuple
    ports: tuple = ()
    attachments: tuple[AttachmentSpec, ...] = ()


class ConeDescriptionGraph(GraphOracle):
    """Infinite unrolling of a root piece and finitely many piece types.

    Vertex keys are (address, local vertex name) where the address is the
    tuple of attachment indices leading from the root piece to the instance.
    """

    def __init__(self, alphabet: LabelAlphabet, root_piece: PieceSpec,
                 pieces: list[PieceSpec]):
        self.alphabet = alphabet
        self.pieces: dict[str, PieceSpec] = {}
        for p in (root_piece, *pieces):
            if p.name in self.pieces:
                raise GraphError(f"duplicate piece name {p.name!r}")
            self.pieces[p.name] = p
        self.root_piece = root_piece
        if root_piece.ports:
            raise GraphError("the root piece cannot have ports")
        self._routes: dict[str, dict] = {}
        self._port_sources: dict[tuple[str, int], dict] = {}
        for p in self.pieces.values():
            self._validate_piece(p)
        self._check_infinite()
        self.root = ((), root_piece.vertices[0])

    # -- validation ---------------------------------------------------------

    def _validate_piece(self, p: PieceSpec):
        inv = self.alphabet.invert
        vset = set(p.vertices)
        if len(vset) != len(p.vertices):
            raise GraphError(f"piece {p.name!r}: duplicate vertices")
        route: dict = {v: {} for v in p.vertices}

        def claim(v, a, target):
            if a not in self.alphabet:
                raise GraphError(f"piece {p.name!r}: unknown label {a!r}")
            if a in route[v]:
                raise GraphError(
                    f"piece {p.name!r}: vertex {v!r} has two edges labelled {a!r}")
            route[v][a] = target

        directed = set()
        for (x, a, y) in p.edges:
            if x not in vset or y not in vset:
                raise GraphError(f"piece {p.name!r}: edge {x, a, y} uses unknown vertex")
            directed.add((x, a, y))
            directed.add((y, inv(a), x))
        for (x, a, y) in sorted(directed):
            claim(x, a, ("internal", y))

        for (v, lbl) in p.ports:
            if v not in vset:
                raise GraphError(f"piece {p.name!r}: port vertex {v!r} unknown")
            claim(v, inv(lbl), ("up",))

        for k, att in enumerate(p.attachments):
            child = self.pieces.get(att.piece)
            if child is None:
                raise GraphError(f"piece {p.name!r}: attachment to unknown piece {att.piece!r}")
            ports_needed = dict(child.ports)
            if not ports_needed:
                raise GraphError(f"piece {att.piece!r} has no ports but is attached")
            seen_ports = {}
            src_map = {}
            for (u, a, w) in att.edges:
                if u not in vset:
                    raise GraphError(f"piece {p.name!r}: attachment edge from unknown vertex {u!r}")
                if w not in ports_needed:
                    raise GraphError(
                        f"attachment {p.name!r}->{att.piece!r}: {w!r} is not a port of the child")
                if ports_needed[w] != a:
                    raise GraphError(
                        f"attachment {p.name!r}->{att.piece!r}: port {w!r} expects incoming "
                        f"label {ports_needed[w]!r}, got {a!r}")
                if w in seen_ports:
                    raise GraphError(
                        f"attachment {p.name!r}->{att.piece!r}: port {w!r} attached twice")
                seen_ports[w] = True
                src_map[w] = u
                claim(u, a, ("down", k, w))
            missing = set(ports_needed) - set(seen_ports)
            if missing:
                raise GraphError(
                    f"attachment {p.name!r}->{att.piece!r}: ports {sorted(missing)} not attached")
            self._port_sources[(p.name, k)] = src_map

        for v in p.vertices:
            missing = [a for a in self.alphabet.symbols if a not in route[v]]
            if missing:
                raise GraphError(
                    f"piece {p.name!r}: vertex {v!r} is missing edges for labels {missing}")
        self._routes[p.name] = route

    def _check_infinite(self):
        # infinite iff a cycle in the piece digraph is reachable from the root
        reach = set()
        stack = [self.root_piece.name]
        succ = {name: [a.piece for a in p.attachments] for name, p in self.pieces.items()}
        while stack:
            n = stack.pop()
            if n in reach:
                continue
            reach.add(n)
            stack.extend(succ[n])
        state: dict[str, int] = {}

        def has_cycle(n):
            state[n] = 1
            for m in succ[n]:
                s = state.get(m, 0)
                if s == 1 or (s == 0 and has_cycle(m)):
                    return True
            state[n] = 2
            return False

        if not any(has_cycle(n) for n in reach if state.get(n, 0) == 0):
            raise GraphError("graph must be infinite: no piece cycle is reachable "
                             "from the root piece")

    # -- oracle -------------------------------------------------------------

    def _piece_at(self, addr) -> PieceSpec:
        p = self.root_piece
        for k in addr:
            if not (0 <= k < len(p.attachments)):
                raise GraphKeyError(f"invalid address {addr!r}")
            p = self.pieces[p.attachments[k].piece]
        return p

    def neighbor(self, x, a: str):
        if a not in self.alphabet:
            raise AlphabetError(f"unknown symbol {a!r}")
        try:
            addr, v = x
        except (TypeError, ValueError):
            raise GraphKeyError(f"malformed key {x!r}") from None
        p = self._piece_at(addr)
        route = self._routes[p.name].get(v)
        if route is None:
            raise GraphKeyError(f"unknown vertex {v!r} in piece {p.name!r}")
        hop = route[a]
        if hop[0] == "internal":
            return (addr, hop[1])
        if hop[0] == "down":
            return (addr + (hop[1],), hop[2])
        parent_addr = addr[:-1]
        k = addr[-1]
        q = self._piece_at(parent_addr)
        return (parent_addr, self._port_sources[(q.name, k)][v])

    def sort_key(self, x):
        addr, v = x
        return (len(addr), addr, v)


def make_cone_description(alphabet: LabelAlphabet, root_piece: PieceSpec,
                          pieces: list[PieceSpec]) -> ConeDescriptionGraph:
    return ConeDescriptionGraph(alphabet, root_piece, pieces)
