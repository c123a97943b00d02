"""Numba kernels for the sampling hot loops.

Everything here takes a numpy Generator so streams stay deterministic and
per-caller. Kernels are compiled lazily on first use and cached on disk.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def wilson_parent(cum, gen):
    """Loop-erased random-walk spanning tree rooted at vertex 0.

    cum holds row-wise cumulative conductances of the n x n conductance
    matrix (zero diagonal). Returns the parent array: parent[v] is the tree
    neighbour of v towards the root, parent[0] = -1. The walk transition
    from u picks v with probability proportional to conductance(u, v), so
    the output tree has probability proportional to the product of its edge
    conductances.
    """
    n = cum.shape[0]
    in_tree = np.zeros(n, dtype=np.bool_)
    nxt = np.full(n, -1, dtype=np.int32)
    in_tree[0] = True
    for start in range(1, n):
        u = start
        while not in_tree[u]:
            total = cum[u, n - 1]
            v = n
            while v >= n:  # guard the measure-zero r == total tie
                r = gen.random() * total
                v = np.searchsorted(cum[u], r, side="right")
            nxt[u] = v
            u = v
        u = start
        while not in_tree[u]:
            in_tree[u] = True
            u = nxt[u]
    return nxt


@njit(cache=True)
def pruefer_decode(seq, n):
    """Edges (as an (n-1, 2) array) of the tree with this Pruefer sequence."""
    degree = np.ones(n, dtype=np.int32)
    for i in range(seq.shape[0]):
        degree[seq[i]] += 1
    edges = np.empty((n - 1, 2), dtype=np.int32)
    ptr = 0
    while degree[ptr] != 1:
        ptr += 1
    leaf = ptr
    for i in range(seq.shape[0]):
        x = seq[i]
        edges[i, 0] = leaf
        edges[i, 1] = x
        degree[x] -= 1
        if degree[x] == 1 and x < ptr:
            leaf = x
        else:
            ptr += 1
            while degree[ptr] != 1:
                ptr += 1
            leaf = ptr
    edges[n - 2, 0] = leaf
    edges[n - 2, 1] = n - 1
    return edges


@njit(cache=True)
def tsp_two_opt_chain(omega, beta, tour, burn, keep, thin, out, gen):
    """Metropolis 2-opt chain on Hamiltonian cycles; returns accepted count.

    Proposals pick a uniform unordered pair of tour positions 1 <= a < b <=
    n-1 and reverse tour[a..b]; the segment-reversal move set is symmetric.
    After `burn` proposals, every `thin`-th state is written into `out`.
    """
    n = tour.shape[0]
    accepted = 0
    kidx = 0
    total = burn + keep * thin
    for step in range(total):
        a = gen.integers(1, n)
        b = gen.integers(1, n)
        while a == b:
            b = gen.integers(1, n)
        if a > b:
            a, b = b, a
        ta_prev = tour[a - 1]
        ta = tour[a]
        tb = tour[b]
        tb_next = tour[(b + 1) % n]
        delta = (omega[ta_prev, tb] + omega[ta, tb_next]
                 - omega[ta_prev, ta] - omega[tb, tb_next])
        if delta <= 0.0 or gen.random() < math.exp(-beta * delta):
            accepted += 1
            lo, hi = a, b
            while lo < hi:
                tour[lo], tour[hi] = tour[hi], tour[lo]
                lo += 1
                hi -= 1
        if step >= burn and (step - burn + 1) % thin == 0:
            for i in range(n):
                out[kidx, i] = tour[i]
            kidx += 1
    return accepted


@njit(cache=True)
def bipartite_swap_chain(omega, beta, sigma, burn, keep, thin, out, gen):
    """Metropolis transposition chain on bipartite perfect matchings.

    sigma maps left vertex i to right vertex sigma[i]; proposals swap the
    partners of a uniform pair of left vertices (symmetric move set).
    """
    n = sigma.shape[0]
    accepted = 0
    kidx = 0
    total = burn + keep * thin
    for step in range(total):
        i = gen.integers(0, n)
        j = gen.integers(0, n)
        while i == j:
            j = gen.integers(0, n)
        si = sigma[i]
        sj = sigma[j]
        delta = omega[i, sj] + omega[j, si] - omega[i, si] - omega[j, sj]
        if delta <= 0.0 or gen.random() < math.exp(-beta * delta):
            accepted += 1
            sigma[i] = sj
            sigma[j] = si
        if step >= burn and (step - burn + 1) % thin == 0:
            for t in range(n):
                out[kidx, t] = sigma[t]
            kidx += 1
    return accepted
