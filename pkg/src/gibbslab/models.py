"""The five configuration families and their combinatorics.

Each family lives on a complete or complete-bipartite host graph with a
fixed edge indexing, knows its constants (edge count, configuration size m,
single-edge probability p = m/|E|, limiting gamma), counts and enumerates
its configurations exactly at small sizes, and evaluates containment
probabilities P(gamma_set subset of pi) under the uniform measure in closed
form where one exists.

Edge indexing:
  * complete graph on N vertices: pairs (i, j), i < j, in lexicographic
    order, so index = i*(2N - i - 1)/2 + (j - i - 1);
  * complete bipartite graph with sides of size n: left vertex i in [0, n),
    right vertex j in [0, n) (global id n + j), index = i*n + j.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .errors import CapExceededError, GibbsLabError

__all__ = [
    "ProblemModel",
    "MatchingBipartite",
    "MatchingComplete",
    "TravelingSalesman",
    "SpanningTree",
    "KFactor",
    "Configuration",
    "ModelConstants",
    "model_constants",
    "count_configs",
    "containment_prob",
    "cayley_extension_count",
    "enumerate_configs",
    "is_valid_config",
    "config_weight",
    "model_from_descriptor",
    "ENUMERATION_CAP",
    "KFACTOR_EXACT_VERTEX_CAP",
]

ENUMERATION_CAP = 10**7
KFACTOR_EXACT_VERTEX_CAP = 12  # exact k-factor combinatorics only for 2n <= 12
_MASK_EDGE_LIMIT = 128  # keep a bit-mask mirror only for small edge sets


class ModelConstants(NamedTuple):
    edge_count: int
    m: int
    p: float
    gamma: float


class ProblemModel:
    """Base class; concrete families are frozen dataclasses below."""

    n: int

    # -- constants ---------------------------------------------------------
    @property
    def vertex_count(self) -> int:
        raise NotImplementedError

    @property
    def edge_count(self) -> int:
        raise NotImplementedError

    @property
    def config_size(self) -> int:
        """Number of edges m in every configuration."""
        raise NotImplementedError

    @property
    def edge_prob(self) -> Fraction:
        """Exact single-edge containment probability p = m/|E|."""
        return Fraction(self.config_size, self.edge_count)

    @property
    def gamma(self) -> Fraction:
        """Limit of m^2 / (2|E|) for the growing family."""
        raise NotImplementedError

    # -- edge indexing -----------------------------------------------------
    def edge_index(self, u: int, v: int) -> int:
        raise NotImplementedError

    def edge_endpoints(self, idx: int) -> tuple[int, int]:
        raise NotImplementedError

    def edge_endpoint_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(us, vs) arrays such that edge e joins us[e] and vs[e]."""
        raise NotImplementedError

    # -- combinatorics -----------------------------------------------------
    def count(self) -> int:
        raise NotImplementedError

    def enumerate_edge_sets(self) -> Iterator[tuple[int, ...]]:
        raise NotImplementedError

    def is_valid(self, edges: Sequence[int]) -> bool:
        raise NotImplementedError

    def containment_prob(self, edges: Sequence[int]) -> Fraction:
        raise NotImplementedError

    def descriptor(self) -> str:
        raise NotImplementedError

    def _check_edges(self, edges: Sequence[int]) -> tuple[int, ...]:
        out = tuple(sorted(int(e) for e in edges))
        if out and (out[0] < 0 or out[-1] >= self.edge_count):
            raise ValueError(f"edge index out of range for {self.descriptor()}")
        if len(set(out)) != len(out):
            raise ValueError("duplicate edge indices")
        return out


def _complete_edge_index(N: int, u: int, v: int) -> int:
    if u > v:
        u, v = v, u
    if u < 0 or v >= N or u == v:
        raise ValueError(f"invalid edge ({u}, {v}) for K_{N}")
    return u * (2 * N - u - 1) // 2 + (v - u - 1)


@lru_cache(maxsize=32)
def _complete_endpoint_arrays(N: int) -> tuple[np.ndarray, np.ndarray]:
    us, vs = np.triu_indices(N, k=1)
    return us.astype(np.int32), vs.astype(np.int32)


class _CompleteGraphModel(ProblemModel):
    """Shared indexing for families living on a complete graph."""

    @property
    def edge_count(self) -> int:
        N = self.vertex_count
        return N * (N - 1) // 2

    def edge_index(self, u: int, v: int) -> int:
        return _complete_edge_index(self.vertex_count, u, v)

    def edge_endpoints(self, idx: int) -> tuple[int, int]:
        us, vs = self.edge_endpoint_arrays()
        return int(us[idx]), int(vs[idx])

    def edge_endpoint_arrays(self):
        return _complete_endpoint_arrays(self.vertex_count)


def _union_find_components(n_vertices: int, pairs: Iterable[tuple[int, int]]):
    """Returns (number of components, cycle_created flag)."""
    parent = list(range(n_vertices))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    comps = n_vertices
    cycle = False
    for u, v in pairs:
        ru, rv = find(u), find(v)
        if ru == rv:
            cycle = True
        else:
            parent[ru] = rv
            comps -= 1
    return comps, cycle


@dataclass(frozen=True)
class MatchingBipartite(ProblemModel):
    """Perfect matchings of the complete bipartite graph with sides n."""

    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"need n >= 2, got n={self.n}")

    @property
    def vertex_count(self) -> int:
        return 2 * self.n

    @property
    def edge_count(self) -> int:
        return self.n * self.n

    @property
    def config_size(self) -> int:
        return self.n

    @property
    def gamma(self) -> Fraction:
        return Fraction(1, 2)

    def edge_index(self, u: int, v: int) -> int:
        # u is the left vertex, v the global id of the right vertex (n + j).
        if v < self.n <= u:
            u, v = v, u
        j = v - self.n
        if not (0 <= u < self.n and 0 <= j < self.n):
            raise ValueError(f"invalid bipartite edge ({u}, {v})")
        return u * self.n + j

    def edge_endpoints(self, idx: int) -> tuple[int, int]:
        i, j = divmod(int(idx), self.n)
        return i, self.n + j

    def edge_endpoint_arrays(self):
        idx = np.arange(self.edge_count)
        return (idx // self.n).astype(np.int32), (self.n + idx % self.n).astype(np.int32)

    def count(self) -> int:
        return math.factorial(self.n)

    def enumerate_edge_sets(self):
        n = self.n
        for perm in itertools.permutations(range(n)):
            yield tuple(i * n + perm[i] for i in range(n))

    def is_valid(self, edges) -> bool:
        if len(edges) != self.n:
            return False
        lefts = [e // self.n for e in edges]
        rights = [e % self.n for e in edges]
        return len(set(lefts)) == self.n and len(set(rights)) == self.n

    def containment_prob(self, edges) -> Fraction:
        edges = self._check_edges(edges)
        k = len(edges)
        if k > self.n:
            return Fraction(0)
        lefts = [e // self.n for e in edges]
        rights = [e % self.n for e in edges]
        if len(set(lefts)) != k or len(set(rights)) != k:
            return Fraction(0)  # not a partial matching: never extendable
        return Fraction(math.factorial(self.n - k), math.factorial(self.n))

    def descriptor(self) -> str:
        return f"matching-bipartite:n={self.n}"


@dataclass(frozen=True)
class MatchingComplete(ProblemModel):
    """Perfect matchings of the complete graph on 2n vertices."""

    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"need n >= 2, got n={self.n}")

    @property
    def vertex_count(self) -> int:
        return 2 * self.n

    @property
    def edge_count(self) -> int:
        N = 2 * self.n
        return N * (N - 1) // 2

    @property
    def config_size(self) -> int:
        return self.n

    @property
    def gamma(self) -> Fraction:
        return Fraction(1, 4)

    edge_index = _CompleteGraphModel.edge_index
    edge_endpoints = _CompleteGraphModel.edge_endpoints
    edge_endpoint_arrays = _CompleteGraphModel.edge_endpoint_arrays

    def count(self) -> int:
        N = 2 * self.n
        return math.factorial(N) // (2**self.n * math.factorial(self.n))

    def enumerate_edge_sets(self):
        N = 2 * self.n

        def rec(remaining: tuple[int, ...], acc: list[int]):
            if not remaining:
                yield tuple(sorted(acc))
                return
            v0 = remaining[0]
            rest = remaining[1:]
            for pos, u in enumerate(rest):
                acc.append(_complete_edge_index(N, v0, u))
                yield from rec(rest[:pos] + rest[pos + 1:], acc)
                acc.pop()

        yield from rec(tuple(range(N)), [])

    def is_valid(self, edges) -> bool:
        if len(edges) != self.n:
            return False
        seen = set()
        for e in edges:
            u, v = self.edge_endpoints(e)
            if u in seen or v in seen:
                return False
            seen.update((u, v))
        return len(seen) == 2 * self.n

    def containment_prob(self, edges) -> Fraction:
        edges = self._check_edges(edges)
        k = len(edges)
        if k > self.n:
            return Fraction(0)
        seen = set()
        for e in edges:
            u, v = self.edge_endpoints(e)
            if u in seen or v in seen:
                return Fraction(0)
            seen.update((u, v))
        prob = Fraction(1)
        for i in range(k):
            prob /= 2 * self.n - 2 * i - 1
        return prob

    def descriptor(self) -> str:
        return f"matching-complete:n={self.n}"


@dataclass(frozen=True)
class TravelingSalesman(_CompleteGraphModel):
    """Hamiltonian cycles of the complete graph on n vertices."""

    n: int

    def __post_init__(self):
        if self.n < 3:
            raise ValueError(f"a Hamiltonian cycle needs n >= 3, got n={self.n}")

    @property
    def vertex_count(self) -> int:
        return self.n

    @property
    def config_size(self) -> int:
        return self.n

    @property
    def gamma(self) -> Fraction:
        return Fraction(1)

    def count(self) -> int:
        return math.factorial(self.n - 1) // 2

    def enumerate_edge_sets(self):
        n = self.n
        # Anchor the cycle at vertex 0 and orient it by requiring the first
        # neighbour to be smaller than the last: each cycle appears once.
        for perm in itertools.permutations(range(1, n)):
            if perm[0] > perm[-1]:
                continue
            cyc = (0,) + perm
            yield tuple(sorted(
                _complete_edge_index(n, cyc[i], cyc[(i + 1) % n]) for i in range(n)
            ))

    def is_valid(self, edges) -> bool:
        if len(edges) != self.n:
            return False
        deg = [0] * self.n
        pairs = [self.edge_endpoints(e) for e in edges]
        for u, v in pairs:
            deg[u] += 1
            deg[v] += 1
        if any(d != 2 for d in deg):
            return False
        comps, _ = _union_find_components(self.n, pairs[:-1])
        return comps == 1  # n-1 edges of the cycle already connect everything

    def containment_prob(self, edges) -> Fraction:
        edges = self._check_edges(edges)
        k = len(edges)
        n = self.n
        if k == 0:
            return Fraction(1)
        if k > n:
            return Fraction(0)
        pairs = [self.edge_endpoints(e) for e in edges]
        deg: dict[int, int] = {}
        for u, v in pairs:
            deg[u] = deg.get(u, 0) + 1
            deg[v] = deg.get(v, 0) + 1
            if deg[u] > 2 or deg[v] > 2:
                return Fraction(0)
        comps, cycle = _union_find_components(n, pairs)
        if cycle:
            # A proper subcycle can never be completed; the only admissible
            # cycle is a full Hamiltonian one (the configuration itself).
            if k == n and self.is_valid(list(edges)):
                return Fraction(1, self.count())
            return Fraction(0)
        s = comps - (n - len(deg))  # components that carry edges
        return Fraction(2**s * math.factorial(n - k - 1), math.factorial(n - 1))

    def descriptor(self) -> str:
        return f"tsp:n={self.n}"


@dataclass(frozen=True)
class SpanningTree(_CompleteGraphModel):
    """Spanning trees of the complete graph on n vertices."""

    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"need n >= 2, got n={self.n}")

    @property
    def vertex_count(self) -> int:
        return self.n

    @property
    def config_size(self) -> int:
        return self.n - 1

    @property
    def gamma(self) -> Fraction:
        return Fraction(1)

    def count(self) -> int:
        return self.n ** (self.n - 2)

    def enumerate_edge_sets(self):
        n = self.n
        if n == 2:
            yield (0,)
            return
        for seq in itertools.product(range(n), repeat=n - 2):
            yield tuple(sorted(
                _complete_edge_index(n, u, v) for u, v in _pruefer_edges(seq, n)
            ))

    def is_valid(self, edges) -> bool:
        if len(edges) != self.n - 1:
            return False
        pairs = [self.edge_endpoints(e) for e in edges]
        comps, cycle = _union_find_components(self.n, pairs)
        return comps == 1 and not cycle

    def containment_prob(self, edges) -> Fraction:
        edges = self._check_edges(edges)
        k = len(edges)
        n = self.n
        if k > n - 1:
            return Fraction(0)
        pairs = [self.edge_endpoints(e) for e in edges]
        parent = list(range(n))
        size = [1] * n

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for u, v in pairs:
            ru, rv = find(u), find(v)
            if ru == rv:
                return Fraction(0)  # cycles never extend to a tree
            parent[ru] = rv
            size[rv] += size[ru]
        prod = 1
        for v in range(n):
            if find(v) == v:
                prod *= size[v]
        # N(F)/n^(n-2) with N(F) = n^(t-2) * prod(sizes) and t = n - k.
        return Fraction(prod, n**k)

    def descriptor(self) -> str:
        return f"spanning-tree:n={self.n}"


def _pruefer_edges(seq: Sequence[int], n: int) -> list[tuple[int, int]]:
    """Decode a Pruefer sequence over [0, n) into the n-1 tree edges."""
    degree = [1] * n
    for x in seq:
        degree[x] += 1
    edges = []
    # Classic linear decode: `ptr` scans for the smallest leaf, `leaf` may
    # jump below it when removing a sequence entry frees a smaller vertex.
    ptr = 0
    while degree[ptr] != 1:
        ptr += 1
    leaf = ptr
    for x in seq:
        edges.append((leaf, x))
        degree[x] -= 1
        if degree[x] == 1 and x < ptr:
            leaf = x
        else:
            ptr += 1
            while degree[ptr] != 1:
                ptr += 1
            leaf = ptr
    edges.append((leaf, n - 1))
    return edges


@dataclass(frozen=True)
class KFactor(ProblemModel):
    """k-regular (not necessarily connected) spanning subgraphs of K_{2n}."""

    n: int
    k: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"need n >= 2, got n={self.n}")
        if not 1 <= self.k <= 2 * self.n - 1:
            raise ValueError(f"need 1 <= k <= 2n-1, got k={self.k}, n={self.n}")

    @property
    def vertex_count(self) -> int:
        return 2 * self.n

    @property
    def edge_count(self) -> int:
        N = 2 * self.n
        return N * (N - 1) // 2

    @property
    def config_size(self) -> int:
        return self.n * self.k

    @property
    def gamma(self) -> Fraction:
        return Fraction(self.k * self.k, 4)

    edge_index = _CompleteGraphModel.edge_index
    edge_endpoints = _CompleteGraphModel.edge_endpoints
    edge_endpoint_arrays = _CompleteGraphModel.edge_endpoint_arrays

    def _require_exact(self):
        if self.vertex_count > KFACTOR_EXACT_VERTEX_CAP:
            raise CapExceededError(
                f"exact k-factor combinatorics capped at {KFACTOR_EXACT_VERTEX_CAP} "
                f"vertices, got 2n={self.vertex_count}"
            )

    def count(self) -> int:
        self._require_exact()
        return len(_kfactor_edge_sets_cached(self.n, self.k))

    def count_asymptotic(self) -> float:
        """Pairing-count asymptotic; inexact (the k^2/n correction is dropped)."""
        n, k = self.n, self.k
        log_count = (
            math.lgamma(2 * n * k + 1)
            - n * k * math.log(2.0)
            - math.lgamma(n * k + 1)
            - 2 * n * math.lgamma(k + 1)
            - (k * k - 1) / 4.0
        )
        return math.exp(log_count)

    def enumerate_edge_sets(self):
        self._require_exact()
        yield from _kfactor_edge_sets_cached(self.n, self.k)

    def is_valid(self, edges) -> bool:
        if len(edges) != self.config_size:
            return False
        deg = [0] * self.vertex_count
        for e in edges:
            u, v = self.edge_endpoints(e)
            deg[u] += 1
            deg[v] += 1
        return all(d == self.k for d in deg)

    def containment_prob(self, edges) -> Fraction:
        edges = self._check_edges(edges)
        self._require_exact()
        configs = _kfactor_edge_sets_cached(self.n, self.k)
        target = set(edges)
        hits = sum(1 for cfg in configs if target.issubset(cfg))
        return Fraction(hits, len(configs))

    def descriptor(self) -> str:
        return f"k-factor:n={self.n}:k={self.k}"


@lru_cache(maxsize=8)
def _kfactor_edge_sets_cached(n: int, k: int) -> tuple[tuple[int, ...], ...]:
    N = 2 * n
    deficits = [k] * N
    out: list[tuple[int, ...]] = []
    edges: list[int] = []

    def rec(v: int):
        while v < N and deficits[v] == 0:
            v += 1
        if v == N:
            out.append(tuple(sorted(edges)))
            return
        d = deficits[v]
        candidates = [u for u in range(v + 1, N) if deficits[u] > 0]
        if len(candidates) < d:
            return
        deficits[v] = 0
        for combo in itertools.combinations(candidates, d):
            for u in combo:
                deficits[u] -= 1
                edges.append(_complete_edge_index(N, v, u))
            rec(v + 1)
            for u in combo:
                deficits[u] += 1
            del edges[-d:]
        deficits[v] = d

    rec(0)
    return tuple(out)


# ---------------------------------------------------------------------------
# Configurations


class Configuration:
    """An edge subset of a model; full members of the family have m edges."""

    __slots__ = ("model", "edges", "_mask")

    def __init__(self, model: ProblemModel, edges: Iterable[int]):
        self.model = model
        self.edges = tuple(sorted(int(e) for e in edges))
        if self.edges and (self.edges[0] < 0 or self.edges[-1] >= model.edge_count):
            raise ValueError("edge index out of range")
        self._mask = None

    @property
    def mask(self) -> int | None:
        """Bit-mask mirror for O(1) overlap counting on small edge sets."""
        if self.model.edge_count > _MASK_EDGE_LIMIT:
            return None
        if self._mask is None:
            m = 0
            for e in self.edges:
                m |= 1 << e
            self._mask = m
        return self._mask

    def __len__(self) -> int:
        return len(self.edges)

    def __eq__(self, other) -> bool:
        return (isinstance(other, Configuration)
                and self.model == other.model and self.edges == other.edges)

    def __hash__(self) -> int:
        return hash((self.model, self.edges))

    def __repr__(self) -> str:
        return f"Configuration({self.model.descriptor()}, {self.edges})"


# ---------------------------------------------------------------------------
# Module-level operations


def model_constants(model: ProblemModel) -> ModelConstants:
    """(|E|, m, p, gamma) with p = m/|E| exact and gamma the limiting value."""
    return ModelConstants(
        edge_count=model.edge_count,
        m=model.config_size,
        p=float(model.edge_prob),
        gamma=float(model.gamma),
    )


def count_configs(model: ProblemModel, require_exact: bool = False):
    """|S|, exact (int) where feasible.

    For k-factors beyond the exact cap the pairing-model asymptotic is
    returned as an inexact float unless require_exact is set.
    """
    if isinstance(model, KFactor) and model.vertex_count > KFACTOR_EXACT_VERTEX_CAP:
        if require_exact:
            model._require_exact()
        return model.count_asymptotic()
    return model.count()


def containment_prob(model: ProblemModel, gamma_set) -> Fraction:
    """P(gamma_set subset of pi) under the uniform measure on the family."""
    edges = gamma_set.edges if isinstance(gamma_set, Configuration) else gamma_set
    return model.containment_prob(edges)


def cayley_extension_count(n: int, component_sizes: Sequence[int]) -> int:
    """Spanning trees of K_n containing a fixed forest with these component sizes.

    Equals n^(t-2) * prod(sizes) for t components; t = n recovers Cayley.
    """
    sizes = [int(s) for s in component_sizes]
    t = len(sizes)
    if t < 1:
        raise ValueError("need at least one component")
    if any(s < 1 for s in sizes):
        raise ValueError("component sizes must be positive")
    if sum(sizes) != n:
        raise ValueError(f"component sizes must sum to n={n}, got {sum(sizes)}")
    if t == 1:
        return 1
    prod = 1
    for s in sizes:
        prod *= s
    return n ** (t - 2) * prod


def enumerate_configs(model: ProblemModel) -> Iterator[Configuration]:
    """Every member of the family exactly once; capped at 10^7 configurations."""
    total = count_configs(model, require_exact=True)
    if total > ENUMERATION_CAP:
        raise CapExceededError(
            f"{model.descriptor()} has {total} configurations, cap is {ENUMERATION_CAP}"
        )
    for edges in model.enumerate_edge_sets():
        yield Configuration(model, edges)


def is_valid_config(model: ProblemModel, edges) -> bool:
    if isinstance(edges, Configuration):
        edges = edges.edges
    return model.is_valid(tuple(edges))


def config_weight(config: Configuration, weights) -> float:
    """Total weight of the configuration; +inf if any member edge is +inf."""
    values = weights.values if hasattr(weights, "values") else np.asarray(weights)
    if len(values) != config.model.edge_count:
        raise GibbsLabError("weight vector length does not match the model")
    return float(np.sum(values[list(config.edges)]))


_FAMILIES = {
    "matching-bipartite": MatchingBipartite,
    "matching-complete": MatchingComplete,
    "tsp": TravelingSalesman,
    "traveling-salesman": TravelingSalesman,
    "spanning-tree": SpanningTree,
    "k-factor": KFactor,
}


def model_from_descriptor(family: str, n: int, k: int | None = None) -> ProblemModel:
    try:
        cls = _FAMILIES[family]
    except KeyError:
        raise ValueError(
            f"unknown family {family!r}; valid: {sorted(set(_FAMILIES))}"
        ) from None
    if cls is KFactor:
        if k is None:
            raise ValueError("k-factor requires k")
        return KFactor(n=n, k=k)
    return cls(n=n)


def model_from_string(descriptor: str) -> ProblemModel:
    """Inverse of ProblemModel.descriptor(), e.g. 'k-factor:n=5:k=2'."""
    family, _, rest = descriptor.partition(":")
    params = {}
    for part in rest.split(":"):
        key, _, value = part.partition("=")
        params[key] = int(value)
    return model_from_descriptor(family, params.get("n", 0), params.get("k"))
