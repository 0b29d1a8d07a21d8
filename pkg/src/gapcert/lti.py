"""Generating terms, the truncated quadratic operator, and the gauge freedom.

A frustration-free chain has a gap of at least delta when H^2 - delta*H is
positive semidefinite.  Dropping products of far-separated terms leaves an
n-local truncation Q_n(delta) that is generated by translating a single
n-site operator g_n(delta); two generating terms produce the same global sum
exactly when they differ by 1 (x) Y - Y (x) 1 for some (n-1)-site Y.  This
module builds the canonical g_n, assembles Q_n on finite rings, applies gauge
shifts, and inverts them: ``freedom_decompose`` reconstructs Y from any
operator whose translation sum vanishes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .models import LocalHamiltonian
from .opalg import (DenseHermitian, SiteSpace, anticomm, embed_at,
                    embed_at_sparse, expand_in_strings, site_herm_basis,
                    translate_sparse)

SPARSE_DIM = 4096  # dense assembly above this dimension is wasteful


class TelescopeError(ValueError):
    """Input operator does not telescope: its translation sum is nonzero."""

    def __init__(self, norm):
        self.norm = norm
        super().__init__(f"translation sum has norm {norm:.3e}; no gauge decomposition exists")


@dataclass
class GeneratingTerm:
    """An n-site operator generating a translation-invariant global sum."""

    n: int
    delta: float
    op: DenseHermitian
    kind: str  # g_canonical | q_shifted | witness
    semantic: bool = True  # n >= 2k+1, i.e. the value is a genuine gap bound


@dataclass
class GaugeOperator:
    """An (n-1)-site Hermitian gauge operator Y."""

    m: int
    op: DenseHermitian


def semantic_threshold(k: int) -> int:
    """Smallest window size at which the LMI optimum is a gap bound.

    The truncation discards anticommutators of terms at distance >= n-k+1;
    those are tensor products of positives (hence positive) exactly when the
    supports are disjoint, i.e. when n-k+1 >= k.
    """
    return 2 * k - 1


def generating_term(h: LocalHamiltonian, n: int, delta: float) -> GeneratingTerm:
    """Canonical generating term h1^2 + sum_j {h1, h_j} - delta*h1 on n sites.

    The sum runs over every translate of h whose support fits inside the
    n-site window (j = 2 .. n-k+1), which reproduces the assembled truncation
    exactly on any ring of >= 2n sites.
    """
    if n < h.k + 1:
        raise ValueError(f"need n >= k+1 = {h.k + 1}, got n = {n}")
    space = SiteSpace(h.d, n)
    h1 = embed_at(h.term, 1, space)
    acc = h1.mat @ h1.mat - delta * h1.mat
    for j in range(2, n - h.k + 2):
        hj = embed_at(h.term, j, space)
        acc = acc + anticomm(h1, hj).mat
    return GeneratingTerm(n=n, delta=delta, op=DenseHermitian(acc, check=False),
                          kind="g_canonical", semantic=(n >= semantic_threshold(h.k)))


def dual_objective_op(h: LocalHamiltonian, n: int) -> DenseHermitian:
    """h1^2 + sum_j {h1, h_j} on n sites (the delta-independent part of g_n)."""
    return generating_term(h, n, 0.0).op


def assemble_Q(h: LocalHamiltonian, n: int, N: int, delta: float,
               sparse: bool = False):
    """The truncated operator Q_n(delta) on an N-site periodic ring.

    Keeps h_i^2 plus every anticommutator {h_i, h_j} of terms at cyclic
    distance at most n-k (each unordered pair once), minus delta*H.  With
    n = N this is exactly H^2 - delta*H.  For N >= 2n it coincides with the
    translation sum of the canonical generating term.
    """
    if N < n:
        raise ValueError(f"ring of {N} sites cannot host an {n}-site window")
    space = SiteSpace(h.d, N)
    dim = space.total_dim
    if not sparse and dim > SPARSE_DIM:
        raise ValueError(f"dense assembly at dim {dim}; pass sparse=True")
    terms = [embed_at_sparse(h.term, i + 1, space) for i in range(N)]
    acc = sp.csr_matrix((dim, dim), dtype=terms[0].dtype)
    reach = n - h.k
    for i in range(N):
        acc = acc + terms[i] @ terms[i] - delta * terms[i]
    seen = set()
    for i in range(N):
        for x in range(1, reach + 1):
            j = (i + x) % N
            pair = (min(i, j), max(i, j))
            if pair in seen or i == j:
                continue
            seen.add(pair)
            acc = acc + terms[i] @ terms[j] + terms[j] @ terms[i]
    if sparse:
        return acc
    return DenseHermitian(np.asarray(acc.todense()))


def gauge_shift_op(Y: DenseHermitian, d: int) -> DenseHermitian:
    """1 (x) Y - Y (x) 1 with the identity on a single d-dimensional site."""
    eye = np.eye(d)
    return DenseHermitian(np.kron(eye, Y.mat) - np.kron(Y.mat, eye), check=False)


def lti_shift(g: GeneratingTerm, Y: GaugeOperator, d: int | None = None) -> GeneratingTerm:
    """Shift a generating term by the telescoping gauge 1 (x) Y - Y (x) 1."""
    if d is None:
        # infer the site dimension from the size ratio
        if g.op.dim % Y.op.dim != 0:
            raise ValueError("gauge operator does not divide the term's dimension")
        d = g.op.dim // Y.op.dim
    if Y.op.dim * d != g.op.dim:
        raise ValueError(f"gauge support mismatch: {Y.op.dim} * {d} != {g.op.dim}")
    shifted = g.op.mat + gauge_shift_op(Y.op, d).mat
    return GeneratingTerm(n=g.n, delta=g.delta, op=DenseHermitian(shifted, check=False),
                          kind="q_shifted", semantic=g.semantic)


def translation_sum(X: DenseHermitian, space_small: SiteSpace, N: int):
    """sum_i tau_i(X embedded at site 1) on an N-site ring, as a sparse matrix."""
    big = SiteSpace(space_small.d, N)
    base = embed_at_sparse(X, 1, big)
    acc = base.copy()
    cur = base
    for _ in range(1, N):
        cur = translate_sparse(cur, 1, big)
        acc = acc + cur
    return acc


def telescope_residual(X: DenseHermitian, space: SiteSpace, N: int | None = None) -> float:
    """Max-abs entry of the translation sum of X on a ring of N (default 2n) sites."""
    if N is None:
        N = 2 * space.n_sites
    acc = translation_sum(X, space, N)
    return float(np.abs(acc.todense()).max()) if acc.nnz else 0.0


def freedom_decompose(X: DenseHermitian, space: SiteSpace) -> GaugeOperator:
    """Invert the telescoping map: find A with X = A (x) 1 - 1 (x) A.

    Requires the translation sum of X to vanish (checked on a 2n-site ring at
    1e-8); otherwise raises :class:`TelescopeError` carrying the residual
    norm.  The construction expands X in the tensor-string basis, drops the
    coefficients whose first and last factors are both non-identity (they
    vanish for telescoping X), and accumulates the gauge operator from
    partial sums of the zero-padded string placements, sweeping the padding
    length from 1 to n-1.
    """
    d, n = space.d, space.n_sites
    if X.dim != space.total_dim:
        raise ValueError("operator does not live on the given space")
    if n < 2:
        raise ValueError("need at least two sites to decompose")
    res = telescope_residual(X, space)
    if res > 1e-8 * max(1.0, float(np.abs(X.mat).max())):
        raise TelescopeError(res)
    basis = site_herm_basis(d)
    nb = d * d
    coeff = expand_in_strings(X, d, n)
    A = np.zeros((d ** (n - 1), d ** (n - 1)), dtype=complex)

    def string_op(idx):
        m = basis[idx[0]]
        for j in idx[1:]:
            m = np.kron(m, basis[j])
        return m

    for k in range(2, n + 1):
        pad = k - 1
        core = n - k + 1
        tprime = np.zeros((k - 1, d**core, d**core), dtype=complex)
        for V in np.ndindex(*((nb,) * core)):
            if V[0] == 0 or V[-1] == 0:
                continue
            cs = [coeff[(0,) * (j - 1) + V + (0,) * (k - j)] for j in range(1, k)]
            if not any(cs):
                continue
            sv = string_op(V) * d ** (-pad / 2)
            run = np.zeros_like(sv)
            for j, c in enumerate(cs):
                run = run + c * sv
                tprime[j] += run
        ak = np.zeros_like(A)
        for l in range(1, k):
            ak += np.kron(np.kron(np.eye(d ** (l - 1)), tprime[l - 1]), np.eye(d ** (k - 1 - l)))
        A += ak
    if np.abs(A.imag).max(initial=0.0) < 1e-14:
        A = A.real
    return GaugeOperator(m=n - 1, op=DenseHermitian(A))
