"""Exact and Metropolis sampling from the Gibbs measure on configurations.

Exact samplers:
  * spanning trees: Wilson's loop-erased random walk driven by edge
    conductances exp(-beta * omega_e) (uniform Pruefer-sequence trees when
    beta = 0 and all weights are finite);
  * bipartite matchings: sequential row sampling with permanent-of-minor
    probabilities (n <= 12);
  * Hamiltonian cycles: backward sampling through the subset-DP table
    (n <= 18);
  * complete-graph matchings and k-factors: categorical sampling over the
    enumerated family.

Metropolis chains use family moves that are irreducible and symmetric:
pair transpositions for matchings, 2-opt reversals for cycles, the
add-edge/drop-cycle-edge exchange for trees, and alternating-4-cycle swaps
for k-factors. Default schedule: burn in until 50*m accepted moves, keep
one sample every m proposals.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import (
    AllInfiniteError,
    CapExceededError,
    GibbsLabError,
    ModelMismatchError,
)
from .models import (
    Configuration,
    KFactor,
    MatchingBipartite,
    MatchingComplete,
    ProblemModel,
    SpanningTree,
    TravelingSalesman,
    config_weight,
)
from .oracles import (
    _bipartite_matrices,
    _config_matrix,
    _tree_connected,
    _tsp_matrices,
    permanent_log_deriv,
)
from .weights import WeightDistribution, psi_prime

__all__ = [
    "GibbsSample",
    "ExactGibbsSampler",
    "sample_exact",
    "MetropolisChain",
    "mcmc_run",
    "mcmc_samples",
    "overlap",
    "typical_weight_observable",
    "default_burn_in_accepted",
    "default_thinning",
    "BIPARTITE_EXACT_CAP",
    "TSP_EXACT_CAP",
    "TREE_EXACT_CAP",
]

BIPARTITE_EXACT_CAP = 12
TSP_EXACT_CAP = 18
TREE_EXACT_CAP = 5000


@dataclass(frozen=True)
class GibbsSample:
    """One configuration drawn from the Gibbs measure."""

    config: Configuration
    weight: float
    method: str
    chain_meta: dict | None = field(default=None, compare=False)


def overlap(a: Configuration, b: Configuration) -> int:
    """Number of common edges |a intersect b|."""
    if a.model != b.model:
        raise ModelMismatchError(f"{a.model!r} vs {b.model!r}")
    ma, mb = a.mask, b.mask
    if ma is not None and mb is not None:
        return (ma & mb).bit_count()
    return len(set(a.edges) & set(b.edges))


def typical_weight_observable(sample: GibbsSample, model: ProblemModel,
                              dist: WeightDistribution, beta: float) -> float:
    """(W(pi) + m * psi'(beta)) / sqrt(m), the typical-weight CLT statistic."""
    if not math.isfinite(sample.weight):
        raise GibbsLabError("typical-weight observable needs a finite-weight sample")
    m = model.config_size
    return (sample.weight + m * psi_prime(dist, beta)) / math.sqrt(m)


def _as_rng(rng_stream) -> np.random.Generator:
    if isinstance(rng_stream, np.random.Generator):
        return rng_stream
    return np.random.default_rng(rng_stream)


def _weight_values(weights) -> np.ndarray:
    return np.asarray(weights.values if hasattr(weights, "values") else weights,
                      dtype=float)


def _omega_matrix(model, values) -> np.ndarray:
    """Symmetric weight-lookup matrix (diagonal +inf) for chain kernels."""
    if isinstance(model, MatchingBipartite):
        return values.reshape(model.n, model.n)
    N = model.vertex_count
    us, vs = model.edge_endpoint_arrays()
    omega = np.full((N, N), np.inf)
    omega[us, vs] = values
    omega[vs, us] = values
    return omega


class ExactGibbsSampler:
    """Draws i.i.d. samples whose law is exactly the Gibbs measure.

    Precomputes whatever the family needs (conductance tables, DP tables,
    enumerated probabilities) once, so repeated sampling is cheap.
    """

    def __init__(self, model: ProblemModel, weights, beta: float, rng_stream=0):
        self.model = model
        self.beta = float(beta)
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {beta}")
        self.values = _weight_values(weights)
        if len(self.values) != model.edge_count:
            raise GibbsLabError("weight vector length does not match the model")
        self.rng = _as_rng(rng_stream)

        if isinstance(model, SpanningTree):
            self._init_tree()
        elif isinstance(model, MatchingBipartite):
            self._init_bipartite()
        elif isinstance(model, TravelingSalesman):
            self._init_tsp()
        elif isinstance(model, (MatchingComplete, KFactor)):
            self._init_enumeration()
        else:
            raise TypeError(f"unsupported model {model!r}")

    # -- spanning trees -----------------------------------------------------
    def _init_tree(self):
        model = self.model
        if model.n > TREE_EXACT_CAP:
            raise CapExceededError(f"tree sampler capped at n={TREE_EXACT_CAP}")
        n = model.n
        us, vs = model.edge_endpoint_arrays()
        finite = np.isfinite(self.values)
        if not _tree_connected(n, us, vs, finite):
            raise AllInfiniteError("finite-weight graph is disconnected")
        self.method = "wilson"
        self._uniform = self.beta == 0.0 and bool(finite.all())
        if self._uniform:
            return
        shift = float(self.values[finite].min())
        with np.errstate(invalid="ignore"):
            cond = np.where(finite, np.exp(-self.beta * (self.values - shift)), 0.0)
        C = np.zeros((n, n))
        C[us, vs] = cond
        C[vs, us] = cond
        self._cum = np.cumsum(C, axis=1)

    def _tree_edges(self) -> np.ndarray:
        n = self.model.n
        if self._uniform:
            if n == 2:
                pairs = np.array([[0, 1]], dtype=np.int64)
            else:
                seq = self.rng.integers(0, n, size=n - 2).astype(np.int32)
                pairs = _kernels.pruefer_decode(seq, n).astype(np.int64)
        else:
            parent = _kernels.wilson_parent(self._cum, self.rng)
            child = np.arange(1, n, dtype=np.int64)
            pairs = np.column_stack((child, parent[1:].astype(np.int64)))
        u = np.minimum(pairs[:, 0], pairs[:, 1])
        v = np.maximum(pairs[:, 0], pairs[:, 1])
        return np.sort(u * (2 * n - u - 1) // 2 + (v - u - 1))

    # -- bipartite matchings --------------------------------------------------
    def _init_bipartite(self):
        model = self.model
        if model.n > BIPARTITE_EXACT_CAP:
            raise CapExceededError(
                f"sequential matching sampler capped at n={BIPARTITE_EXACT_CAP}")
        mats = _bipartite_matrices(model, self.values, self.beta)
        if mats is None:
            raise AllInfiniteError("no finite-weight perfect matching")
        self._A = mats[0]
        log_perm, _ = permanent_log_deriv(self._A)
        if log_perm == -math.inf:
            raise AllInfiniteError("no finite-weight perfect matching")
        self.method = "sequential_exact"

    def _bipartite_edges(self) -> np.ndarray:
        n = self.model.n
        cols = list(range(n))
        edges = np.empty(n, dtype=np.int64)
        for i in range(n):
            sub = self._A[np.ix_(range(i + 1, n), cols)]
            logw = np.full(len(cols), -math.inf)
            for t in range(len(cols)):
                a = self._A[i, cols[t]]
                if a == 0.0:
                    continue
                if sub.shape[0] == 0:
                    lm = 0.0
                else:
                    minor = np.delete(sub, t, axis=1)
                    lm, _ = permanent_log_deriv(minor)
                    if lm == -math.inf:
                        continue
                logw[t] = math.log(a) + lm
            peak = logw.max()
            probs = np.exp(logw - peak)
            probs /= probs.sum()
            t = int(self.rng.choice(len(cols), p=probs))
            edges[i] = i * n + cols[t]
            cols.pop(t)
        return np.sort(edges)

    # -- Hamiltonian cycles ----------------------------------------------------
    def _init_tsp(self):
        model = self.model
        n = model.n
        if n > TSP_EXACT_CAP:
            raise CapExceededError(f"DP backward sampler capped at n={TSP_EXACT_CAP}")
        A, _, _ = _tsp_matrices(model, self.values, self.beta)
        size = 1 << n
        g = np.zeros((size, n))
        g[1, 0] = 1.0
        all_j = np.arange(n)
        for prev in range(1, size, 2):
            gp = g[prev]
            if not gp.any():
                continue
            contrib = gp @ A
            js = all_j[(prev >> all_j) & 1 == 0]
            g[prev | (1 << js), js] = contrib[js]
        closing = g[size - 1] * A[:, 0]
        if closing.sum() <= 0.0:
            raise AllInfiniteError("no finite-weight Hamiltonian cycle")
        self._A = A
        self._g = g
        self._closing = closing
        self.method = "dp_backward"

    def _tsp_edges(self) -> np.ndarray:
        model = self.model
        n = model.n
        rng = self.rng
        probs = self._closing / self._closing.sum()
        j = int(rng.choice(n, p=probs))
        mask = (1 << n) - 1
        pairs = [(j, 0)]
        while mask != 1:
            prev = mask & ~(1 << j)
            w = self._g[prev] * self._A[:, j]
            total = w.sum()
            i = int(rng.choice(n, p=w / total))
            pairs.append((i, j))
            mask, j = prev, i
        return np.sort(np.array(
            [model.edge_index(u, v) for u, v in pairs], dtype=np.int64))

    # -- enumerated families ----------------------------------------------------
    def _init_enumeration(self):
        configs = _config_matrix(self.model)
        W = self.values[configs].sum(axis=1)
        finite = np.isfinite(W)
        if not finite.any():
            raise AllInfiniteError("all configurations are infinite")
        idx = np.nonzero(finite)[0]
        expo = -self.beta * W[finite]
        probs = np.exp(expo - expo.max())
        self._probs = probs / probs.sum()
        self._indices = idx
        self._configs = configs
        self.method = "sequential_exact"

    # -- public API -----------------------------------------------------------
    def _draw_edges(self) -> np.ndarray:
        model = self.model
        if isinstance(model, SpanningTree):
            return self._tree_edges()
        if isinstance(model, MatchingBipartite):
            return self._bipartite_edges()
        if isinstance(model, TravelingSalesman):
            return self._tsp_edges()
        row = self._indices[self.rng.choice(len(self._indices), p=self._probs)]
        return self._configs[row]

    def sample(self) -> GibbsSample:
        config = Configuration(self.model, self._draw_edges())
        return GibbsSample(config=config, weight=config_weight(config, self.values),
                           method=self.method)

    def sample_many(self, count: int) -> list[GibbsSample]:
        if isinstance(self.model, (MatchingComplete, KFactor)):
            rows = self._indices[self.rng.choice(
                len(self._indices), size=count, p=self._probs)]
            out = []
            for r in rows:
                config = Configuration(self.model, self._configs[r])
                out.append(GibbsSample(config, config_weight(config, self.values),
                                       self.method))
            return out
        return [self.sample() for _ in range(count)]


def sample_exact(model: ProblemModel, weights, beta: float, rng_stream=0) -> GibbsSample:
    """One exact Gibbs sample. Build an ExactGibbsSampler directly for loops."""
    return ExactGibbsSampler(model, weights, beta, rng_stream).sample()


def _fallback_config(model: ProblemModel) -> Configuration:
    """A fixed valid configuration, for chain starts beyond the exact caps."""
    if isinstance(model, MatchingBipartite):
        return Configuration(model, [i * model.n + i for i in range(model.n)])
    if isinstance(model, MatchingComplete):
        return Configuration(model, [model.edge_index(2 * i, 2 * i + 1)
                                     for i in range(model.n)])
    if isinstance(model, TravelingSalesman):
        n = model.n
        return Configuration(model, [model.edge_index(i, (i + 1) % n)
                                     for i in range(n)])
    if isinstance(model, SpanningTree):
        return Configuration(model, [model.edge_index(i, i + 1)
                                     for i in range(model.n - 1)])
    if isinstance(model, KFactor):
        # circulant k-regular graph: v ~ v +- j for j <= k//2, plus the
        # antipodal matching when k is odd
        N = model.vertex_count
        edges = {model.edge_index(v, (v + j) % N)
                 for j in range(1, model.k // 2 + 1) for v in range(N)}
        if model.k % 2 == 1:
            edges.update(model.edge_index(v, v + model.n) for v in range(model.n))
        return Configuration(model, edges)
    raise TypeError(f"unsupported model {model!r}")


# ---------------------------------------------------------------------------
# Metropolis chains


def default_burn_in_accepted(model: ProblemModel) -> int:
    """Default burn-in: 50*m accepted moves (moves change O(1) edges)."""
    return 50 * model.config_size


def default_thinning(model: ProblemModel) -> int:
    """Default proposals between retained samples: m."""
    return model.config_size


class MetropolisChain:
    """Metropolis chain targeting the Gibbs measure, with family moves.

    A chain instance owns a private random stream and must not be shared
    across threads; distinct instances are independent.
    """

    def __init__(self, model: ProblemModel, weights, beta: float, seed=0,
                 init: Configuration | None = None):
        self.model = model
        self.beta = float(beta)
        self.values = _weight_values(weights)
        if len(self.values) != model.edge_count:
            raise GibbsLabError("weight vector length does not match the model")
        self.rng = _as_rng(seed)
        self.proposals = 0
        self.accepted = 0
        self._omega = _omega_matrix(model, self.values)
        if init is None:
            try:
                init = ExactGibbsSampler(model, weights, beta,
                                         self.rng).sample().config
            except CapExceededError:
                init = _fallback_config(model)
                if not math.isfinite(config_weight(init, self.values)):
                    raise GibbsLabError(
                        "default start has infinite weight; pass a finite-weight "
                        "initial configuration") from None
        elif init.model != model:
            raise ModelMismatchError("initial configuration belongs to another model")
        self._load_state(init)

    # -- state handling ------------------------------------------------------
    def _load_state(self, config: Configuration):
        model = self.model
        if isinstance(model, MatchingBipartite):
            sigma = np.empty(model.n, dtype=np.int64)
            for e in config.edges:
                i, j = divmod(e, model.n)
                sigma[i] = j
            self._sigma = sigma
        elif isinstance(model, TravelingSalesman):
            adj = {v: [] for v in range(model.n)}
            for e in config.edges:
                u, v = model.edge_endpoints(e)
                adj[u].append(v)
                adj[v].append(u)
            tour = [0, adj[0][0]]
            while len(tour) < model.n:
                a, b = adj[tour[-1]]
                tour.append(b if a == tour[-2] else a)
            self._tour = np.array(tour, dtype=np.int64)
        elif isinstance(model, SpanningTree):
            self._edges = set(config.edges)
            self._adj = {v: set() for v in range(model.n)}
            for e in config.edges:
                u, v = model.edge_endpoints(e)
                self._adj[u].add(v)
                self._adj[v].add(u)
        elif isinstance(model, (MatchingComplete, KFactor)):
            self._edge_list = list(config.edges)
            self._edge_set = set(config.edges)
        else:
            raise TypeError(f"unsupported model {model!r}")

    def current_config(self) -> Configuration:
        model = self.model
        if isinstance(model, MatchingBipartite):
            return Configuration(model, [i * model.n + int(j)
                                         for i, j in enumerate(self._sigma)])
        if isinstance(model, TravelingSalesman):
            t = self._tour
            n = model.n
            return Configuration(model, [model.edge_index(int(t[i]), int(t[(i + 1) % n]))
                                         for i in range(n)])
        if isinstance(model, SpanningTree):
            return Configuration(model, self._edges)
        return Configuration(model, self._edge_list)

    def current_weight(self) -> float:
        return config_weight(self.current_config(), self.values)

    # -- single Metropolis proposal -------------------------------------------
    def _accept(self, delta: float) -> bool:
        if delta <= 0.0:
            return True
        return self.rng.random() < math.exp(-self.beta * delta)

    def step(self) -> bool:
        model = self.model
        self.proposals += 1
        if isinstance(model, MatchingBipartite):
            ok = self._step_bipartite()
        elif isinstance(model, TravelingSalesman):
            ok = self._step_tsp()
        elif isinstance(model, SpanningTree):
            ok = self._step_tree()
        else:
            ok = self._step_pair_swap()
        self.accepted += ok
        return ok

    def _step_bipartite(self) -> bool:
        n = self.model.n
        i, j = self.rng.choice(n, size=2, replace=False)
        om, s = self._omega, self._sigma
        delta = om[i, s[j]] + om[j, s[i]] - om[i, s[i]] - om[j, s[j]]
        if self._accept(delta):
            s[i], s[j] = s[j], s[i]
            return True
        return False

    def _step_tsp(self) -> bool:
        n = self.model.n
        rng = self.rng
        a = int(rng.integers(1, n))
        b = int(rng.integers(1, n))
        while a == b:
            b = int(rng.integers(1, n))
        if a > b:
            a, b = b, a
        t, om = self._tour, self._omega
        delta = (om[t[a - 1], t[b]] + om[t[a], t[(b + 1) % n]]
                 - om[t[a - 1], t[a]] - om[t[b], t[(b + 1) % n]])
        if self._accept(delta):
            t[a:b + 1] = t[a:b + 1][::-1]
            return True
        return False

    def _tree_path_edges(self, u: int, v: int) -> list[tuple[int, int]]:
        prev = {u: None}
        queue = deque([u])
        while queue:
            x = queue.popleft()
            if x == v:
                break
            for y in self._adj[x]:
                if y not in prev:
                    prev[y] = x
                    queue.append(y)
        path = []
        x = v
        while prev[x] is not None:
            path.append((prev[x], x))
            x = prev[x]
        return path

    def _step_tree(self) -> bool:
        model = self.model
        rng = self.rng
        if model.edge_count == len(self._edges):
            return False  # n = 2: the single edge is the tree, no moves exist
        while True:  # uniform over non-tree edges by rejection
            e = int(rng.integers(0, model.edge_count))
            if e not in self._edges:
                break
        u, v = model.edge_endpoints(e)
        cycle = self._tree_path_edges(u, v)
        fu, fv = cycle[int(rng.integers(0, len(cycle)))]
        f = model.edge_index(fu, fv)
        delta = self.values[e] - self.values[f]
        if self._accept(delta):
            self._edges.remove(f)
            self._edges.add(e)
            self._adj[fu].discard(fv)
            self._adj[fv].discard(fu)
            self._adj[u].add(v)
            self._adj[v].add(u)
            return True
        return False

    def _step_pair_swap(self) -> bool:
        # Alternating 4-cycle swap for k-factors and complete matchings:
        # replace {(a,b), (c,d)} by {(a,c), (b,d)} or {(a,d), (b,c)}.
        model = self.model
        rng = self.rng
        edges = self._edge_list
        p1, p2 = rng.choice(len(edges), size=2, replace=False)
        a, b = model.edge_endpoints(edges[p1])
        c, d = model.edge_endpoints(edges[p2])
        if len({a, b, c, d}) < 4:
            return False
        if rng.random() < 0.5:
            pair1, pair2 = (a, c), (b, d)
        else:
            pair1, pair2 = (a, d), (b, c)
        e1 = model.edge_index(*pair1)
        e2 = model.edge_index(*pair2)
        if e1 in self._edge_set or e2 in self._edge_set:
            return False
        old1, old2 = edges[p1], edges[p2]
        delta = (self.values[e1] + self.values[e2]
                 - self.values[old1] - self.values[old2])
        if self._accept(delta):
            self._edge_set.difference_update((old1, old2))
            self._edge_set.update((e1, e2))
            edges[p1], edges[p2] = e1, e2
            return True
        return False

    # -- batched runs ----------------------------------------------------------
    def advance(self, nsteps: int) -> int:
        """Run nsteps proposals without keeping states; returns accepted count."""
        return self._run(nsteps, 0, 1, collect=False)

    def collect(self, count: int, thin: int) -> list[GibbsSample]:
        """Keep `count` samples, one every `thin` proposals."""
        return self._run(0, count, thin, collect=True)

    def _meta(self) -> dict:
        return {
            "steps": self.proposals,
            "accepted": self.accepted,
            "acceptance_rate": self.accepted / max(1, self.proposals),
        }

    def _run(self, burn: int, keep: int, thin: int, collect: bool):
        model = self.model
        fast = isinstance(model, (MatchingBipartite, TravelingSalesman))
        if fast:
            if isinstance(model, MatchingBipartite):
                state = self._sigma
                kernel = _kernels.bipartite_swap_chain
            else:
                state = self._tour
                kernel = _kernels.tsp_two_opt_chain
            out = np.empty((keep, len(state)), dtype=np.int64)
            acc = int(kernel(self._omega, self.beta, state, burn, keep, thin,
                             out, self.rng))
            self.proposals += burn + keep * thin
            self.accepted += acc
            if not collect:
                return acc
            samples = []
            n = model.n
            for row in out:
                if isinstance(model, MatchingBipartite):
                    edges = [i * n + int(j) for i, j in enumerate(row)]
                else:
                    edges = [model.edge_index(int(row[i]), int(row[(i + 1) % n]))
                             for i in range(n)]
                cfg = Configuration(model, edges)
                samples.append(GibbsSample(cfg, config_weight(cfg, self.values),
                                           "mcmc", self._meta()))
            return samples

        before = self.accepted
        for _ in range(burn):
            self.step()
        if not collect:
            return self.accepted - before
        samples = []
        for _ in range(keep):
            for _ in range(thin):
                self.step()
            cfg = self.current_config()
            samples.append(GibbsSample(cfg, config_weight(cfg, self.values),
                                       "mcmc", self._meta()))
        return samples


def mcmc_run(model: ProblemModel, weights, beta: float, steps: int, burn_in: int,
             seed=0, thin: int | None = None):
    """Stream of Gibbs samples from a Metropolis chain.

    Runs `steps` proposals total, discards the first `burn_in`, then yields
    one sample every `thin` proposals (default m).
    """
    if not steps > burn_in >= 0:
        raise ValueError(f"need steps > burn_in >= 0, got {steps}, {burn_in}")
    thin = default_thinning(model) if thin is None else int(thin)
    keep = (steps - burn_in) // thin
    if keep == 0:
        raise ValueError("schedule keeps zero samples; increase steps")
    chain = MetropolisChain(model, weights, beta, seed)
    chain.advance(burn_in)
    yield from chain.collect(keep, thin)


def mcmc_samples(model: ProblemModel, weights, beta: float, count: int, seed=0,
                 thin: int | None = None) -> list[GibbsSample]:
    """`count` MCMC samples after the default adaptive burn-in.

    Burns in until 50*m moves have been accepted (bounded by 200 attempts of
    50*m proposals each), then keeps one sample every m proposals.
    """
    chain = MetropolisChain(model, weights, beta, seed)
    target = default_burn_in_accepted(model)
    attempts = 0
    while chain.accepted < target and attempts < 200:
        chain.advance(target)
        attempts += 1
    thin = default_thinning(model) if thin is None else int(thin)
    return chain.collect(count, thin)
