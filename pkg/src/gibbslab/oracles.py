"""Exact partition-function oracles.

Each family gets a specialized exact method for

    Z(beta) = (1/|S|) * sum over configurations of exp(-beta * W(pi))

together with the exact beta-derivative of log Z (equal to minus the Gibbs
average of W), plus exact single-edge Gibbs marginals:

  * bipartite matchings: Ryser permanent with row scaling (n <= 18);
  * Hamiltonian cycles: subset dynamic programming (n <= 20);
  * spanning trees: weighted matrix-tree determinant (n <= 5000);
  * complete-graph matchings: pairing recursion over vertex bit-masks;
  * k-factors and everything else at tiny size: exhaustive enumeration.

Derivatives propagate (value, derivative) pairs through every recursion, so
no finite differencing is involved. Values are scale-tracked: weights are
shifted so the working entries are O(1), and the shift is restored in log
domain at the end.

Instances where every configuration contains a +inf edge have Z = 0; this
is reported as a first-class outcome (log_z = -inf, all_infinite = True),
never silently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import cho_factor, cho_solve, get_lapack_funcs
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, maximum_bipartite_matching

from .errors import CapExceededError, GibbsLabError, NumericalLossError
from .models import (
    KFactor,
    MatchingBipartite,
    MatchingComplete,
    ProblemModel,
    SpanningTree,
    TravelingSalesman,
)

__all__ = [
    "PartitionResult",
    "log_partition",
    "brute_force_log_partition",
    "permanent_log_deriv",
    "tsp_partition_dp",
    "tree_partition_matrix",
    "edge_marginal",
    "edge_marginals",
    "PERMANENT_CAP",
    "TSP_DP_CAP",
    "TREE_CAP",
]

PERMANENT_CAP = 18
TSP_DP_CAP = 20
TREE_CAP = 5000
PAIRING_VERTEX_CAP = 22  # bit-mask pairing recursion for complete matchings
_RELERR_LIMIT = 1e-6
_RCOND_LIMIT = 1e-12  # condition estimate above 1e12 is signalled

_EPS = float(np.finfo(float).eps)


@dataclass(frozen=True)
class PartitionResult:
    """log Z and d(log Z)/d(beta) for one weighted instance."""

    log_z: float
    dlogz_dbeta: float
    method: str
    beta: float
    all_infinite: bool = False
    instance_seed: int | None = None

    @property
    def gibbs_average_weight(self) -> float:
        """<W(pi)> under the Gibbs measure (= -dlogz_dbeta)."""
        return -self.dlogz_dbeta


def _weight_values(weights) -> np.ndarray:
    return np.asarray(weights.values if hasattr(weights, "values") else weights,
                      dtype=float)


def _weights_seed(weights):
    return getattr(weights, "source_seed", None)


def _all_infinite_result(method: str, beta: float, seed) -> PartitionResult:
    return PartitionResult(log_z=-math.inf, dlogz_dbeta=math.nan, method=method,
                           beta=beta, all_infinite=True, instance_seed=seed)


# ---------------------------------------------------------------------------
# Ryser permanent


@lru_cache(maxsize=8)
def _subset_bits(n: int, lo: int, hi: int) -> np.ndarray:
    masks = np.arange(lo, hi, dtype=np.uint32)
    return ((masks[:, None] >> np.arange(n, dtype=np.uint32)) & 1).astype(float)


def permanent_log_deriv(matrix, dmatrix=None) -> tuple[float, float]:
    """(log perm(A), d log perm) by Ryser inclusion-exclusion with row scaling.

    `dmatrix` holds the per-entry derivatives dA/d(parameter); the returned
    second value is (sum_ij dperm/dA_ij * dA_ij) / perm. Raises
    NumericalLossError when the alternating sum loses more than six digits;
    returns (-inf, nan) when the permanent is exactly zero.
    """
    A = np.asarray(matrix, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("matrix must be square")
    if n > PERMANENT_CAP:
        raise CapExceededError(f"Ryser permanent capped at n={PERMANENT_CAP}, got {n}")
    if np.any(A < 0) or not np.all(np.isfinite(A)):
        raise ValueError("permanent oracle expects finite nonnegative entries")
    dA = np.zeros_like(A) if dmatrix is None else np.asarray(dmatrix, dtype=float)

    row_scale = A.max(axis=1)
    if np.any(row_scale == 0):
        return -math.inf, math.nan  # a zero row kills every permutation
    S = A / row_scale[:, None]
    dS = dA / row_scale[:, None]

    total = 0.0
    dtotal = 0.0
    abs_total = 0.0
    n_subsets = (1 << n) - 1
    chunk = 1 << 14
    for lo in range(1, n_subsets + 1, chunk):
        hi = min(lo + chunk, n_subsets + 1)
        bits = _subset_bits(n, lo, hi)
        R = bits @ S.T           # (subsets, n): row sums restricted to subset
        dR = bits @ dS.T
        card = bits.sum(axis=1)
        sign = np.where((n - card) % 2 == 0, 1.0, -1.0)

        zero = R == 0.0
        zcount = zero.sum(axis=1)
        P = np.prod(np.where(zero, 1.0, R), axis=1)  # product of nonzero entries
        full = zcount == 0
        dP = np.zeros(R.shape[0])
        if np.any(full):
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(zero, 0.0, dR / np.where(zero, 1.0, R))
            dP[full] = P[full] * ratios[full].sum(axis=1)
        one = zcount == 1
        if np.any(one):
            hole = np.argmax(zero[one], axis=1)
            dP[one] = P[one] * dR[one, hole]
        P = np.where(full, P, 0.0)

        total += float(np.dot(sign, P))
        dtotal += float(np.dot(sign, dP))
        abs_total += float(np.abs(P).sum())

    rel_err = (_EPS * (n + math.log2(n_subsets + 1)) * abs_total / total
               if total > 0.0 else math.inf)
    if rel_err > _RELERR_LIMIT:
        # Non-negative permanents: a vanishing or error-dominated Ryser sum
        # is either a structurally zero permanent (no perfect matching on the
        # nonzero support, exact cancellation up to rounding) or a genuine
        # precision loss.
        if not _has_perfect_bipartite_matching(A):
            return -math.inf, math.nan
        raise NumericalLossError(
            f"Ryser relative error bound {rel_err:.2e} exceeds {_RELERR_LIMIT}"
        )
    log_perm = math.log(total) + float(np.log(row_scale).sum())
    return log_perm, dtotal / total


def _has_perfect_bipartite_matching(A: np.ndarray) -> bool:
    graph = csr_matrix(A > 0)
    match = maximum_bipartite_matching(graph, perm_type="column")
    return bool(np.all(match >= 0))


def _bipartite_matrices(model: MatchingBipartite, values: np.ndarray, beta: float):
    n = model.n
    omega = values.reshape(n, n)
    finite = np.isfinite(omega)
    if not finite.any(axis=1).all() or not finite.any(axis=0).all():
        return None  # an isolated vertex: no finite perfect matching
    shift = np.where(finite, omega, np.inf).min(axis=1)
    with np.errstate(invalid="ignore"):
        A = np.where(finite, np.exp(-beta * (omega - shift[:, None])), 0.0)
        dA = np.where(finite, -(omega - shift[:, None]) * A, 0.0)
    return A, dA, shift


def _bipartite_log_partition(model, values, beta, seed) -> PartitionResult:
    mats = _bipartite_matrices(model, values, beta)
    if mats is None:
        return _all_infinite_result("permanent", beta, seed)
    A, dA, shift = mats
    log_perm, dlog = permanent_log_deriv(A, dA)
    if log_perm == -math.inf:
        return _all_infinite_result("permanent", beta, seed)
    log_z = log_perm - beta * shift.sum() - math.lgamma(model.n + 1)
    dlog_z = dlog - shift.sum()
    return PartitionResult(log_z, dlog_z, "permanent", beta, instance_seed=seed)


# ---------------------------------------------------------------------------
# Hamiltonian-cycle subset DP


def _tsp_matrices(model: TravelingSalesman, values: np.ndarray, beta: float):
    n = model.n
    us, vs = model.edge_endpoint_arrays()
    omega = np.full((n, n), np.inf)
    omega[us, vs] = values
    omega[vs, us] = values
    finite = np.isfinite(omega)
    shift = float(values[np.isfinite(values)].mean()) if np.isfinite(values).any() else 0.0
    with np.errstate(invalid="ignore"):
        A = np.where(finite, np.exp(-beta * (omega - shift)), 0.0)
        dA = np.where(finite, -(omega - shift) * A, 0.0)
    np.fill_diagonal(A, 0.0)
    np.fill_diagonal(dA, 0.0)
    return A, dA, shift


def _tsp_cycle_sum(A: np.ndarray, dA: np.ndarray) -> tuple[float, float]:
    """(log S, dlog S) for S = sum over undirected Hamiltonian cycles of the
    product of matrix entries along the cycle."""
    n = A.shape[0]
    size = 1 << n
    g = np.zeros((size, n))
    dg = np.zeros((size, n))
    g[1, 0] = 1.0  # the path that sits at vertex 0
    all_j = np.arange(n)
    for prev in range(1, size, 2):  # masks containing vertex 0
        gp = g[prev]
        if not gp.any():
            continue
        contrib = gp @ A
        dcontrib = dg[prev] @ A + gp @ dA
        out = (prev >> all_j) & 1 == 0
        js = all_j[out]
        targets = prev | (1 << js)
        g[targets, js] = contrib[js]
        dg[targets, js] = dcontrib[js]
    full = size - 1
    closing = A[:, 0]
    directed = float(g[full] @ closing)
    ddirected = float(dg[full] @ closing + g[full] @ dA[:, 0])
    if directed <= 0.0:
        return -math.inf, math.nan
    # each undirected cycle is traversed in both orientations
    return math.log(directed) - math.log(2.0), ddirected / directed


def tsp_partition_dp(weights, beta: float, n: int) -> tuple[float, float]:
    """Normalized (log Z, dlog Z) for Hamiltonian cycles on K_n."""
    model = TravelingSalesman(n)
    if n > TSP_DP_CAP:
        raise CapExceededError(f"TSP subset DP capped at n={TSP_DP_CAP}, got {n}")
    values = _weight_values(weights)
    A, dA, shift = _tsp_matrices(model, values, beta)
    log_sum, dlog = _tsp_cycle_sum(A, dA)
    if log_sum == -math.inf:
        return -math.inf, math.nan
    log_count = math.lgamma(n) - math.log(2.0)
    return log_sum - beta * shift * n - log_count, dlog - shift * n


def _tsp_log_partition(model, values, beta, seed) -> PartitionResult:
    log_z, dlog = tsp_partition_dp(values, beta, model.n)
    if log_z == -math.inf:
        return _all_infinite_result("subset_dp", beta, seed)
    return PartitionResult(log_z, dlog, "subset_dp", beta, instance_seed=seed)


# ---------------------------------------------------------------------------
# Weighted matrix-tree


def _tree_conductances(model: SpanningTree, values: np.ndarray, beta: float):
    n = model.n
    us, vs = model.edge_endpoint_arrays()
    finite = np.isfinite(values)
    shift = float(values[finite].mean()) if finite.any() else 0.0
    with np.errstate(invalid="ignore"):
        cond = np.where(finite, np.exp(-beta * (values - shift)), 0.0)
        dcond = np.where(finite, -(values - shift) * cond, 0.0)
    C = np.zeros((n, n))
    C[us, vs] = cond
    C[vs, us] = cond
    return C, cond, dcond, shift, finite


def _tree_connected(n: int, us, vs, finite) -> bool:
    graph = csr_matrix(
        (np.ones(int(finite.sum())), (us[finite], vs[finite])), shape=(n, n)
    )
    ncomp, _ = connected_components(graph, directed=False)
    return ncomp == 1


class _TreeFactorization:
    """Cholesky factorization of the reduced Laplacian plus edge quantities."""

    def __init__(self, model: SpanningTree, weights, beta: float):
        if model.n > TREE_CAP:
            raise CapExceededError(f"matrix-tree capped at n={TREE_CAP}, got {model.n}")
        self.model = model
        self.beta = float(beta)
        values = _weight_values(weights)
        if len(values) != model.edge_count:
            raise GibbsLabError("weight vector length does not match the model")
        n = model.n
        us, vs = model.edge_endpoint_arrays()
        C, cond, dcond, shift, finite = _tree_conductances(model, values, beta)
        self.all_infinite = not _tree_connected(n, us, vs, finite)
        if self.all_infinite:
            return
        L = np.diag(C.sum(axis=1)) - C
        Lr = L[1:, 1:]
        try:
            cf = cho_factor(Lr, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise NumericalLossError(f"reduced Laplacian not factorizable: {exc}") from exc
        pocon, = get_lapack_funcs(("pocon",), (Lr,))
        rcond, info = pocon(cf[0], np.linalg.norm(Lr, 1))
        if info != 0 or rcond < _RCOND_LIMIT:
            raise NumericalLossError(
                f"reduced Laplacian condition estimate {1.0 / max(rcond, 1e-300):.2e} "
                "exceeds 1e12"
            )
        logdet = 2.0 * float(np.log(np.diag(cf[0])).sum())
        K = np.zeros((n, n))
        K[1:, 1:] = cho_solve(cf, np.eye(n - 1), check_finite=False)
        diag = np.diag(K)
        reff = diag[us] + diag[vs] - 2.0 * K[us, vs]
        self.marginals = cond * reff  # P(e in T) per the matrix-tree theorem
        self.log_z = logdet - beta * shift * (n - 1) - (n - 2) * math.log(n)
        self.dlogz = float(np.dot(dcond, reff)) - shift * (n - 1)

    def result(self, seed=None) -> PartitionResult:
        if self.all_infinite:
            return _all_infinite_result("matrix_tree", self.beta, seed)
        return PartitionResult(self.log_z, self.dlogz, "matrix_tree", self.beta,
                               instance_seed=seed)


def tree_partition_matrix(weights, beta: float, n: int) -> tuple[float, float]:
    """Normalized (log Z, dlog Z) for spanning trees of K_n."""
    fact = _TreeFactorization(SpanningTree(n), weights, beta)
    if fact.all_infinite:
        return -math.inf, math.nan
    return fact.log_z, fact.dlogz


def _tree_log_partition(model, values, beta, seed) -> PartitionResult:
    return _TreeFactorization(model, values, beta).result(seed)


# ---------------------------------------------------------------------------
# Complete-graph matchings: pairing recursion over vertex masks


def _hafnian_log_deriv(A: np.ndarray, dA: np.ndarray) -> tuple[float, float]:
    """Sum over perfect matchings of the product of entries, with derivative.

    Recursion on the lowest unmatched vertex; memoized on the vertex mask.
    """
    N = A.shape[0]
    memo: dict[int, tuple[float, float]] = {}

    def rec(mask: int) -> tuple[float, float]:
        if mask == 0:
            return 1.0, 0.0
        got = memo.get(mask)
        if got is not None:
            return got
        v0 = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << v0)
        total = dtotal = 0.0
        mm = rest
        while mm:
            u = (mm & -mm).bit_length() - 1
            mm &= mm - 1
            a = A[v0, u]
            da = dA[v0, u]
            if a == 0.0 and da == 0.0:
                continue
            sub, dsub = rec(rest & ~(1 << u))
            total += a * sub
            dtotal += da * sub + a * dsub
        memo[mask] = (total, dtotal)
        return total, dtotal

    total, dtotal = rec((1 << N) - 1)
    if total <= 0.0:
        return -math.inf, math.nan
    return math.log(total), dtotal / total


def _complete_matching_matrices(model: MatchingComplete, values, beta):
    N = model.vertex_count
    us, vs = model.edge_endpoint_arrays()
    omega = np.full((N, N), np.inf)
    omega[us, vs] = values
    omega[vs, us] = values
    finite = np.isfinite(omega)
    vals_f = values[np.isfinite(values)]
    shift = float(vals_f.mean()) if vals_f.size else 0.0
    with np.errstate(invalid="ignore"):
        A = np.where(finite, np.exp(-beta * (omega - shift)), 0.0)
        dA = np.where(finite, -(omega - shift) * A, 0.0)
    np.fill_diagonal(A, 0.0)
    np.fill_diagonal(dA, 0.0)
    return A, dA, shift


def _complete_matching_log_partition(model, values, beta, seed) -> PartitionResult:
    if model.vertex_count > PAIRING_VERTEX_CAP:
        raise CapExceededError(
            f"pairing recursion capped at {PAIRING_VERTEX_CAP} vertices, "
            f"got 2n={model.vertex_count}")
    A, dA, shift = _complete_matching_matrices(model, values, beta)
    log_sum, dlog = _hafnian_log_deriv(A, dA)
    if log_sum == -math.inf:
        return _all_infinite_result("hafnian_bruteforce", beta, seed)
    n = model.n
    log_count = math.log(model.count())
    log_z = log_sum - beta * shift * n - log_count
    return PartitionResult(log_z, dlog - shift * n, "hafnian_bruteforce", beta,
                           instance_seed=seed)


# ---------------------------------------------------------------------------
# Exhaustive enumeration


@lru_cache(maxsize=6)
def _config_matrix(model: ProblemModel) -> np.ndarray:
    """All configurations as an (|S|, m) array of edge indices."""
    from .models import ENUMERATION_CAP, count_configs

    total = count_configs(model, require_exact=True)
    if total > ENUMERATION_CAP:
        raise CapExceededError(
            f"{model.descriptor()} has {total} configurations, "
            f"cap is {ENUMERATION_CAP}")
    return np.array(list(model.enumerate_edge_sets()), dtype=np.int64)


def _enumeration_log_partition(model, values, beta, seed,
                               method: str = "brute_force") -> PartitionResult:
    configs = _config_matrix(model)
    W = values[configs].sum(axis=1)
    finite = np.isfinite(W)
    if not finite.any():
        return _all_infinite_result(method, beta, seed)
    Wf = W[finite]
    expo = -beta * Wf
    peak = expo.max()
    terms = np.exp(expo - peak)
    total = float(terms.sum())
    log_z = peak + math.log(total) - math.log(len(configs))
    mean_w = float(np.dot(terms, Wf) / total)
    return PartitionResult(log_z, -mean_w, method, beta, instance_seed=seed)


def brute_force_log_partition(model: ProblemModel, weights, beta: float) -> PartitionResult:
    """Enumeration oracle: independent ground truth for every family at tiny n."""
    values = _weight_values(weights)
    _validate(model, values, beta)
    return _enumeration_log_partition(model, values, float(beta),
                                      _weights_seed(weights))


# ---------------------------------------------------------------------------
# Dispatch


def _validate(model, values, beta):
    if len(values) != model.edge_count:
        raise GibbsLabError(
            f"weight vector has {len(values)} entries, model needs {model.edge_count}"
        )
    if not beta >= 0:
        raise ValueError(f"beta must be >= 0, got {beta}")


def log_partition(model: ProblemModel, weights, beta: float) -> PartitionResult:
    """Exact log Z and its beta-derivative via the family's specialized method."""
    values = _weight_values(weights)
    beta = float(beta)
    _validate(model, values, beta)
    seed = _weights_seed(weights)
    if isinstance(model, MatchingBipartite):
        if model.n > PERMANENT_CAP:
            raise CapExceededError(
                f"permanent oracle capped at n={PERMANENT_CAP}, got {model.n}")
        return _bipartite_log_partition(model, values, beta, seed)
    if isinstance(model, TravelingSalesman):
        return _tsp_log_partition(model, values, beta, seed)
    if isinstance(model, SpanningTree):
        return _tree_log_partition(model, values, beta, seed)
    if isinstance(model, MatchingComplete):
        return _complete_matching_log_partition(model, values, beta, seed)
    if isinstance(model, KFactor):
        return _enumeration_log_partition(model, values, beta, seed)
    raise TypeError(f"unsupported model {model!r}")


# ---------------------------------------------------------------------------
# Edge marginals


def edge_marginals(model: ProblemModel, weights, beta: float) -> np.ndarray:
    """P(e in pi) under the Gibbs measure, for every edge at once."""
    values = _weight_values(weights)
    beta = float(beta)
    _validate(model, values, beta)
    if isinstance(model, SpanningTree):
        fact = _TreeFactorization(model, values, beta)
        if fact.all_infinite:
            raise GibbsLabError("all configurations are infinite")
        return fact.marginals
    if isinstance(model, (KFactor,)):
        return _enumeration_marginals(model, values, beta)
    return np.array([edge_marginal(model, values, beta, e)
                     for e in range(model.edge_count)])


def _enumeration_marginals(model, values, beta) -> np.ndarray:
    configs = _config_matrix(model)
    W = values[configs].sum(axis=1)
    finite = np.isfinite(W)
    if not finite.any():
        raise GibbsLabError("all configurations are infinite")
    expo = -beta * W[finite]
    probs = np.exp(expo - expo.max())
    probs /= probs.sum()
    out = np.zeros(model.edge_count)
    np.add.at(out, configs[finite].ravel(), np.repeat(probs, configs.shape[1]))
    return out


def edge_marginal(model: ProblemModel, weights, beta: float, edge: int) -> float:
    """Exact P(edge in pi) under the Gibbs measure."""
    values = _weight_values(weights)
    beta = float(beta)
    _validate(model, values, beta)
    edge = int(edge)
    if not 0 <= edge < model.edge_count:
        raise ValueError(f"edge index {edge} out of range")

    if isinstance(model, SpanningTree):
        fact = _TreeFactorization(model, values, beta)
        if fact.all_infinite:
            raise GibbsLabError("all configurations are infinite")
        return float(fact.marginals[edge])

    if isinstance(model, MatchingBipartite):
        mats = _bipartite_matrices(model, values, beta)
        if mats is None:
            raise GibbsLabError("all configurations are infinite")
        A, _, _ = mats
        i, j = divmod(edge, model.n)
        if A[i, j] == 0.0:
            return 0.0
        log_full, _ = permanent_log_deriv(A)
        if log_full == -math.inf:
            raise GibbsLabError("all configurations are infinite")
        minor = np.delete(np.delete(A, i, axis=0), j, axis=1)
        if minor.size == 0:
            return 1.0
        log_minor, _ = permanent_log_deriv(minor)
        if log_minor == -math.inf:
            return 0.0
        return float(np.exp(math.log(A[i, j]) + log_minor - log_full))

    if isinstance(model, TravelingSalesman):
        A, _, _ = _tsp_matrices(model, values, beta)
        u, v = model.edge_endpoints(edge)
        seed = np.zeros_like(A)
        seed[u, v] = A[u, v]
        seed[v, u] = A[v, u]
        log_sum, dlog = _tsp_cycle_sum(A, seed)
        if log_sum == -math.inf:
            raise GibbsLabError("all configurations are infinite")
        return float(dlog)

    if isinstance(model, MatchingComplete):
        A, _, _ = _complete_matching_matrices(model, values, beta)
        u, v = model.edge_endpoints(edge)
        seed = np.zeros_like(A)
        seed[u, v] = A[u, v]
        seed[v, u] = A[v, u]
        log_sum, dlog = _hafnian_log_deriv(A, seed)
        if log_sum == -math.inf:
            raise GibbsLabError("all configurations are infinite")
        return float(dlog)

    if isinstance(model, KFactor):
        return float(_enumeration_marginals(model, values, beta)[edge])

    raise TypeError(f"unsupported model {model!r}")
