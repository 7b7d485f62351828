"""Combinatorial and spectral graph machinery.

Plain undirected graphs over integer vertices (optionally labelled), with
the quantities the community checkers and simulations are built on:

* cuts, volumes and exact conductance

      Phi(G) = min over nonempty proper A of  e(A, A^c) / min(vol A, vol A^c)

  computed by exhaustive subset enumeration (exact rationals, so argmin
  ties are resolved deterministically) for small graphs;

* the random-walk spectrum: lambda(G) is the largest modulus among the
  non-principal eigenvalues of D^-1 A, and the signed second-largest
  eigenvalue feeds the Cheeger sandwich

      (1 - lambda_2) / 2  <=  Phi(G)  <=  sqrt(2 (1 - lambda_2));

* exact maximum independent sets (branch and bound) with a greedy
  fallback for large graphs;

* a uniform-model random d-regular graph generator (pairing model with
  rejection) that reports the measured lambda of each sample.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .rng import GRAPH_GEN, stream


class OverlappingSets(ValueError):
    """Cut queried for non-disjoint vertex sets."""


class TooLarge(ValueError):
    def __init__(self, n: int, limit: int):
        super().__init__(
            f"exact conductance enumerates 2^(n-1) splits; n={n} exceeds limit {limit} "
            "(use conductance_bounds instead)"
        )
        self.n = n
        self.limit = limit


class ZeroDegreeVertex(ValueError):
    def __init__(self, v: int):
        super().__init__(f"vertex {v} has degree 0; restrict to the relevant induced subgraph")
        self.v = v


class InfeasibleDegree(ValueError):
    """No d-regular simple graph exists for the requested (n, d)."""


class Graph:
    """Simple undirected graph: no self-loops, no parallel edges."""

    __slots__ = ("n", "adj", "labels", "_degrees")

    def __init__(
        self,
        n: int,
        adj: Sequence[Sequence[int]],
        labels: Sequence[str] | None = None,
    ):
        self.n = n
        self.adj: tuple[tuple[int, ...], ...] = tuple(tuple(sorted(a)) for a in adj)
        self.labels: tuple[str, ...] | None = tuple(labels) if labels is not None else None
        self._degrees: np.ndarray | None = None
        if len(self.adj) != n:
            raise ValueError("adjacency length does not match vertex count")
        if self.labels is not None and len(self.labels) != n:
            raise ValueError("label count does not match vertex count")

    @classmethod
    def from_edges(
        cls,
        n: int,
        edges: Iterable[tuple[int, int]],
        labels: Sequence[str] | None = None,
    ) -> "Graph":
        adj: list[set[int]] = [set() for _ in range(n)]
        for u, v in edges:
            if u == v:
                raise ValueError(f"self-loop at vertex {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge ({u},{v}) out of range for n={n}")
            adj[u].add(v)
            adj[v].add(u)
        return cls(n, adj, labels)

    @classmethod
    def from_edgelist_lines(cls, lines: Iterable[str]) -> "Graph":
        """Parse ``label label`` pairs; vertices are sorted label order."""
        pairs: list[tuple[str, str]] = []
        seen: set[str] = set()
        for raw in lines:
            text = raw.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if len(parts) != 2:
                raise ValueError(f"expected two labels per line, got {text!r}")
            pairs.append((parts[0], parts[1]))
            seen.update(parts)
        labels = sorted(seen)
        index = {lab: i for i, lab in enumerate(labels)}
        edges = [(index[a], index[b]) for a, b in pairs]
        return cls.from_edges(len(labels), edges, labels)

    @property
    def degrees(self) -> np.ndarray:
        if self._degrees is None:
            self._degrees = np.array([len(a) for a in self.adj], dtype=np.int64)
        return self._degrees

    def degree(self, v: int) -> int:
        return len(self.adj[v])

    @property
    def edge_count(self) -> int:
        return int(self.degrees.sum()) // 2

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u in range(self.n) for v in self.adj[u] if u < v]

    def adjacency_matrix(self) -> np.ndarray:
        m = np.zeros((self.n, self.n))
        for u in range(self.n):
            m[u, list(self.adj[u])] = 1.0
        return m

    def bitmasks(self) -> list[int]:
        return [sum(1 << v for v in nbrs) for nbrs in self.adj]

    def induced(self, subset: Iterable[int]) -> tuple["Graph", list[int]]:
        """Induced subgraph plus the list mapping new indices to old ones."""
        keep = sorted(set(subset))
        index = {old: new for new, old in enumerate(keep)}
        adj = [[index[w] for w in self.adj[old] if w in index] for old in keep]
        labels = [self.labels[old] for old in keep] if self.labels is not None else None
        return Graph(len(keep), adj, labels), keep

    def components(self) -> list[list[int]]:
        seen = [False] * self.n
        out: list[list[int]] = []
        for start in range(self.n):
            if seen[start]:
                continue
            comp, queue = [], [start]
            seen[start] = True
            while queue:
                u = queue.pop()
                comp.append(u)
                for w in self.adj[u]:
                    if not seen[w]:
                        seen[w] = True
                        queue.append(w)
            out.append(sorted(comp))
        return out

    def is_connected(self) -> bool:
        return self.n <= 1 or len(self.components()) == 1

    def is_bipartite(self) -> bool:
        color = [-1] * self.n
        for start in range(self.n):
            if color[start] != -1:
                continue
            color[start] = 0
            queue = [start]
            while queue:
                u = queue.pop()
                for w in self.adj[u]:
                    if color[w] == -1:
                        color[w] = color[u] ^ 1
                        queue.append(w)
                    elif color[w] == color[u]:
                        return False
        return True


# ---------------------------------------------------------------------------
# Cuts and exact conductance
# ---------------------------------------------------------------------------

def cut_size(graph: Graph, a: Iterable[int], b: Iterable[int]) -> int:
    """Number of edges with one endpoint in ``a`` and the other in ``b``."""
    sa, sb = set(a), set(b)
    if sa & sb:
        raise OverlappingSets(f"sets share vertices {sorted(sa & sb)}")
    return sum(1 for u in sa for w in graph.adj[u] if w in sb)


def volume(graph: Graph, a: Iterable[int]) -> int:
    return int(sum(graph.degree(v) for v in set(a)))


@dataclass(frozen=True)
class ConductanceResult:
    value: Fraction
    argmin: frozenset[int]


_POP16: np.ndarray | None = None


def _popcount16() -> np.ndarray:
    global _POP16
    if _POP16 is None:
        counts = np.zeros(1 << 16, dtype=np.uint8)
        for i in range(16):
            counts[(np.arange(1 << 16) >> i) & 1 == 1] += 1
        _POP16 = counts
    return _POP16


EXACT_CONDUCTANCE_LIMIT = 20


def conductance_exact(
    graph: Graph, exact_threshold: int = EXACT_CONDUCTANCE_LIMIT
) -> ConductanceResult:
    """Exact conductance by enumerating every nontrivial split.

    Disconnected graphs are reported as exactly 0 with a witnessing
    component rather than raising.  Raises TooLarge beyond the threshold;
    callers should fall back to the spectral bounds there.
    """
    n = graph.n
    if n < 2:
        raise ValueError("conductance needs at least two vertices")
    if exact_threshold > 30:
        raise ValueError("exact enumeration is capped at 30 vertices")
    comps = graph.components()
    if len(comps) > 1:
        witness = min(comps)  # lexicographically smallest component
        return ConductanceResult(Fraction(0), frozenset(witness))
    if n > exact_threshold:
        raise TooLarge(n, exact_threshold)

    deg = graph.degrees
    total = int(deg.sum())
    adj_masks = np.array(graph.bitmasks(), dtype=np.uint32)
    # vertex 0 is pinned inside A, so each split is enumerated once
    masks = np.arange(1, 1 << n, 2, dtype=np.uint32)
    masks = masks[masks != np.uint32((1 << n) - 1)]
    pop = _popcount16()
    cut = np.zeros(len(masks), dtype=np.int64)
    vol = np.zeros(len(masks), dtype=np.int64)
    inv = np.invert(masks)
    for v in range(n):
        member = ((masks >> np.uint32(v)) & np.uint32(1)).astype(np.int64)
        outside = adj_masks[v] & inv
        boundary = pop[outside & np.uint32(0xFFFF)].astype(np.int64)
        boundary += pop[(outside >> np.uint32(16))].astype(np.int64)
        cut += member * boundary
        vol += member * int(deg[v])
    den = np.minimum(vol, total - vol)
    ratio = cut / den
    best_float = float(ratio.min())
    candidates = np.nonzero(ratio <= best_float + 1e-9)[0]

    best: Fraction | None = None
    best_set: tuple[int, ...] | None = None
    for i in candidates:
        value = Fraction(int(cut[i]), int(den[i]))
        if best is not None and value > best:
            continue
        members = tuple(v for v in range(n) if int(masks[i]) >> v & 1)
        if best is None or value < best or members < best_set:
            best, best_set = value, members
    assert best is not None and best_set is not None
    return ConductanceResult(best, frozenset(best_set))


# ---------------------------------------------------------------------------
# Random-walk spectrum and Cheeger bounds
# ---------------------------------------------------------------------------

_DENSE_EIG_LIMIT = 2000


def _rw_spectrum_extremes(graph: Graph) -> tuple[float, float]:
    """(smallest eigenvalue, second-largest eigenvalue) of D^-1 A.

    Computed from the degree-symmetrized similar matrix D^-1/2 A D^-1/2,
    dense for moderate sizes and via sparse Lanczos beyond that.
    """
    deg = graph.degrees
    zeros = np.nonzero(deg == 0)[0]
    if zeros.size:
        raise ZeroDegreeVertex(int(zeros[0]))
    if graph.n == 1:
        return 1.0, 1.0
    scale = 1.0 / np.sqrt(deg.astype(float))
    if graph.n <= _DENSE_EIG_LIMIT:
        sym = graph.adjacency_matrix() * scale[:, None] * scale[None, :]
        w = np.linalg.eigvalsh(sym)
        return float(w[0]), float(w[-2])
    import scipy.sparse as sp
    import scipy.sparse.linalg as spl

    rows = [u for u in range(graph.n) for _ in graph.adj[u]]
    cols = [w for u in range(graph.n) for w in graph.adj[u]]
    data = scale[rows] * scale[cols]
    sym = sp.csr_matrix((data, (rows, cols)), shape=(graph.n, graph.n))
    top = spl.eigsh(sym, k=2, which="LA", return_eigenvectors=False)
    bottom = spl.eigsh(sym, k=1, which="SA", return_eigenvectors=False)
    return float(bottom[0]), float(np.sort(top)[0])


def second_eigenvalue(graph: Graph) -> float:
    """lambda(G): the largest modulus among non-principal random-walk eigenvalues.

    Always in [0, 1]; equals 1 exactly when the graph is disconnected or
    bipartite.
    """
    low, second = _rw_spectrum_extremes(graph)
    lam = max(abs(low), abs(second))
    if lam > 1.0:
        if lam > 1.0 + 1e-9:
            raise ArithmeticError(f"eigenvalue {lam} outside the stochastic range")
        lam = 1.0
    return lam


def second_eigenvalue_signed(graph: Graph) -> float:
    """The signed second-largest random-walk eigenvalue (feeds Cheeger)."""
    _, second = _rw_spectrum_extremes(graph)
    return min(second, 1.0)


def conductance_bounds(graph: Graph) -> tuple[float, float]:
    """Cheeger sandwich: (1-lambda_2)/2 <= Phi(G) <= sqrt(2(1-lambda_2))."""
    lam2 = second_eigenvalue_signed(graph)
    gap = 1.0 - lam2
    return gap / 2.0, float(np.sqrt(max(2.0 * gap, 0.0)))


# ---------------------------------------------------------------------------
# Independent sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IndependentSetResult:
    vertices: frozenset[int]
    exact: bool


def greedy_independent_set(graph: Graph) -> frozenset[int]:
    """Min-degree greedy; deterministic (ties break toward smaller index)."""
    alive = set(range(graph.n))
    degree = {v: graph.degree(v) for v in alive}
    chosen: set[int] = set()
    while alive:
        v = min(alive, key=lambda u: (degree[u], u))
        chosen.add(v)
        removed = {v} | (set(graph.adj[v]) & alive)
        alive -= removed
        for u in removed:
            for w in graph.adj[u]:
                if w in alive:
                    degree[w] -= 1
    return frozenset(chosen)


MIS_EXACT_LIMIT = 40


def max_independent_set(graph: Graph, exact_limit: int = MIS_EXACT_LIMIT) -> IndependentSetResult:
    """Maximum independent set, exact via branch and bound up to the limit.

    Beyond the limit a greedy set is returned and flagged approximate.
    """
    if graph.n == 0:
        return IndependentSetResult(frozenset(), True)
    if graph.n > exact_limit:
        return IndependentSetResult(greedy_independent_set(graph), False)

    adj_masks = graph.bitmasks()
    static_order = sorted(range(graph.n), key=lambda v: (-graph.degree(v), v))

    best_mask = 0
    best_size = -1

    def seed_with(mask: int, size: int) -> None:
        nonlocal best_mask, best_size
        if size > best_size:
            best_mask, best_size = mask, size

    greedy = greedy_independent_set(graph)
    seed_with(sum(1 << v for v in greedy), len(greedy))

    import sys

    limit = sys.getrecursionlimit()
    if limit < graph.n * 4 + 100:
        sys.setrecursionlimit(graph.n * 4 + 100)

    def expand(cand: int, size: int, cur: int) -> None:
        nonlocal best_mask, best_size
        if size + cand.bit_count() <= best_size:
            return
        if cand == 0:
            seed_with(cur, size)
            return
        # isolated-in-candidates vertices always join the set
        v = -1
        for u in static_order:
            bit = 1 << u
            if cand & bit:
                if adj_masks[u] & cand == 0:
                    expand(cand & ~bit, size + 1, cur | bit)
                    return
                if v == -1:
                    v = u
        bit = 1 << v
        expand(cand & ~(adj_masks[v] | bit), size + 1, cur | bit)
        expand(cand & ~bit, size, cur)

    # independent components solve independently; their optima add up
    total_mask = 0
    total_size = 0
    for comp in graph.components():
        comp_mask = sum(1 << v for v in comp)
        best_mask, best_size = 0, -1
        sub_greedy = [v for v in greedy if v in set(comp)]
        seed_with(sum(1 << v for v in sub_greedy), len(sub_greedy))
        expand(comp_mask, 0, 0)
        total_mask |= best_mask
        total_size += best_size
    vertices = frozenset(v for v in range(graph.n) if total_mask >> v & 1)
    return IndependentSetResult(vertices, True)


# ---------------------------------------------------------------------------
# Random regular graphs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegularGraphSample:
    graph: Graph
    lam: float


def _pairing_attempt(rng: np.random.Generator, n: int, d: int) -> set[tuple[int, int]] | None:
    """One pass of the pairing model with conflict re-resolution."""
    edges: set[tuple[int, int]] = set()
    stubs = list(range(n)) * d
    while stubs:
        conflicts: dict[int, int] = {}
        order = rng.permutation(len(stubs))
        shuffled = [stubs[i] for i in order]
        it = iter(shuffled)
        for s1, s2 in zip(it, it):
            if s1 > s2:
                s1, s2 = s2, s1
            if s1 != s2 and (s1, s2) not in edges:
                edges.add((s1, s2))
            else:
                conflicts[s1] = conflicts.get(s1, 0) + 1
                conflicts[s2] = conflicts.get(s2, 0) + 1
        if conflicts:
            # if no remaining stub pair could form a new simple edge, give up
            suitable = False
            nodes = list(conflicts)
            for i, s1 in enumerate(nodes):
                for s2 in nodes[i:]:
                    if s1 == s2:
                        continue
                    a, b = (s1, s2) if s1 < s2 else (s2, s1)
                    if (a, b) not in edges:
                        suitable = True
                        break
                if suitable:
                    break
            if not suitable:
                return None
        stubs = [node for node, count in conflicts.items() for _ in range(count)]
    return edges


def generate_regular_expander(n: int, d: int, seed: int = 0) -> RegularGraphSample:
    """Random d-regular simple graph with its measured lambda(G).

    Deterministic per seed.  Raises InfeasibleDegree when n*d is odd or
    d is outside 1 <= d < n.
    """
    if not 1 <= d < n:
        raise InfeasibleDegree(f"need 1 <= d < n, got d={d}, n={n}")
    if (n * d) % 2 != 0:
        raise InfeasibleDegree(f"n*d must be even, got n={n}, d={d}")
    rng = stream(seed, GRAPH_GEN)
    edges = _pairing_attempt(rng, n, d)
    while edges is None:
        edges = _pairing_attempt(rng, n, d)
    graph = Graph.from_edges(n, sorted(edges))
    return RegularGraphSample(graph, second_eigenvalue(graph))
