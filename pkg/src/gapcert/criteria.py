"""Classical finite-size gap criteria and their constructive witnesses.

Three routes from finite-chain data to a thermodynamic-limit gap bound for
nearest-neighbour projector chains:

* Knabe:            Delta >= (n-1)/(n-2) * (eps_n - 1/(n-1))
* Gosset--Mozgunov: Delta >= (5/6)(n^2+n)/(n^2-4) * (eps_n - 6/(n^2+n))
* martingale:       Delta >= (eps_2l / 2) * (1 - 2 eta_l),  n = 3l

where eps_n is the open-chain gap and eta_l the ground-projector overlap
norm.  Each bound also comes with an explicit n-local positive operator
(``witness_*``) whose translation sum reproduces the truncated operator
Q_n(bound), which is what places these bounds inside the feasible set of the
LTI gap SDP.

The Gosset--Mozgunov prefactor is the one consistent with the weighted-chain
cancellation identities (see ``gm_cancellation_residuals``); the popular
alternative rendering (5n^2+n)/(6n^2-4) fails them for every n > 2 and is
rejected by a unit test rather than by fiat.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .certify import ground_projector
from .lti import GeneratingTerm, semantic_threshold
from .models import LocalHamiltonian, block, projectorize
from .opalg import KERNEL_RTOL, DenseHermitian, SiteSpace, embed_at, embed_at_sparse
from .sdp import SolveOpts, lti_gap

DENSE_ED_CAP = 1500


@dataclass
class FiniteSizeBound:
    method: str                # knabe | gm | martingale
    n: int                     # support in original sites
    epsilon_n: float           # open-chain gap input (eps_2l for martingale)
    value: float
    eta: float | None = None   # martingale overlap norm

    @property
    def detected(self) -> bool:
        return self.value > 0


def open_chain(h: LocalHamiltonian, n: int) -> sp.csr_matrix:
    """Open-boundary chain on n sites: the sum of all fully supported terms."""
    if n < h.k:
        raise ValueError(f"chain of {n} sites cannot host a {h.k}-site term")
    space = SiteSpace(h.d, n)
    acc = embed_at_sparse(h.term, 1, space)
    for j in range(2, n - h.k + 2):
        acc = acc + embed_at_sparse(h.term, j, space)
    return acc


def obc_gap(h: LocalHamiltonian, n: int) -> float:
    """Smallest nonzero eigenvalue of the n-site open-boundary chain.

    Eigenvalues below KERNEL_RTOL * ||H|| count as the (frustration-free)
    kernel.  The criteria call this on the projectorised term.
    """
    ham = open_chain(h, n)
    dim = ham.shape[0]
    if dim <= DENSE_ED_CAP:
        w = np.linalg.eigvalsh(np.asarray(ham.todense()))
        scale = max(abs(float(w[-1])), 1.0)
    else:
        k_eigs = min(max(8, 2 * h.term.dim), dim - 2)
        w = spla.eigsh(ham.tocsc(), k=k_eigs, which="SA", tol=1e-11,
                       maxiter=100000, return_eigenvectors=False)
        w = np.sort(w)
        scale = max(spla.norm(ham, np.inf), 1.0)
    cut = KERNEL_RTOL * scale
    nonzero = w[w > cut]
    if len(nonzero) == 0:
        raise RuntimeError(f"no eigenvalue above the kernel cutoff among the lowest "
                           f"{len(w)} on {n} sites; cannot resolve the gap")
    return float(nonzero[0])


def _as_projector(h: LocalHamiltonian) -> LocalHamiltonian:
    return h if h.is_projector(tol=1e-10) else projectorize(h)


def knabe(h: LocalHamiltonian, n: int) -> FiniteSizeBound:
    """Knabe bound from the n-site open-chain gap of the projectorised term."""
    if n <= 2:
        raise ValueError("the Knabe bound needs n > 2")
    pi = _as_projector(h)
    eps = obc_gap(pi, n)
    value = (n - 1) / (n - 2) * (eps - 1 / (n - 1))
    return FiniteSizeBound(method="knabe", n=n, epsilon_n=eps, value=value)


def gm_coefficients(n: int) -> np.ndarray:
    """Weights c_j = (j+1)(n-1-j), j = 0..n-2, of the weighted-chain bound."""
    j = np.arange(n - 1)
    return (j + 1.0) * (n - 1.0 - j)


def gm_prefactors(n: int):
    """(a, b): the weighted-chain constants with b consistent with the
    cancellation identities."""
    a = (n**2 + 1) / (n**2 - 4)
    b = (5.0 / 6.0) * (n**2 + n) / (n**2 - 4)
    return a, b


def gm_sum_identities(n: int):
    """Closed forms of sum c_j, sum c_j^2, sum c_j c_{j+1} (exact integers)."""
    return ((n**3 - n) // 6, (n**5 - n) // 30, (n**5 - 5 * n**3 + 4 * n) // 30)


def gm_cancellation_residuals(n: int):
    """The two coefficient combinations that must vanish for the bound to
    telescope into a positive witness; both are identically zero for the
    prefactor used here."""
    c = gm_coefficients(n)
    a, b = gm_prefactors(n)
    s0, s1, s_adj = c.sum(), (c**2).sum(), (c[:-1] * c[1:]).sum()
    r1 = 1 / s_adj - b * (n - 1) / s0**2
    r2 = a / s1 - b * (n - 1) / s0**2
    return r1, r2


def gm(h: LocalHamiltonian, n: int) -> FiniteSizeBound:
    """Gosset--Mozgunov bound (valid for rings of more than 2n sites)."""
    if n <= 2:
        raise ValueError("the Gosset-Mozgunov bound needs n > 2")
    pi = _as_projector(h)
    eps = obc_gap(pi, n)
    _, b = gm_prefactors(n)
    value = b * (eps - 6 / (n**2 + n))
    return FiniteSizeBound(method="gm", n=n, epsilon_n=eps, value=value)


def martingale_chain(h: LocalHamiltonian, l: int) -> LocalHamiltonian:
    """The blocked projector chain used by the martingale route."""
    return projectorize(block(h, l))


def martingale_eta(h: LocalHamiltonian, l: int) -> float:
    """Overlap norm || (1-G_2l)(1-G_mid) - (1-G_3l) || on 3l sites.

    G_2l projects onto the ground space of the first 2l sites, G_mid onto
    that of sites l+1..3l, and G_3l onto the full 3l-site ground space; all
    are kernels of open chains of the original term.
    """
    d = h.d
    g2 = ground_projector(h, 2 * l).proj.mat
    g3 = ground_projector(h, 3 * l).proj.mat
    eye_l = np.eye(d**l)
    dim = d ** (3 * l)
    p_left = np.eye(dim) - np.kron(g2, eye_l)
    p_right = np.eye(dim) - np.kron(eye_l, g2)
    return float(np.linalg.norm(p_left @ p_right - (np.eye(dim) - g3), 2))


def martingale(h: LocalHamiltonian, l: int) -> FiniteSizeBound:
    """Martingale bound at block size l (support n = 3l original sites).

    eps_2l is the gap of the blocked (non-projector) pair term, i.e. the
    open-chain gap on 2l original sites; the blocked-chain bound 1 - 2 eta
    is rescaled by eps_2l / 2.
    """
    if l < 1 or 2 * l < h.k:
        raise ValueError(f"block size {l} cannot host a {h.k}-site term")
    eps_2l = obc_gap(h, 2 * l)
    eta = martingale_eta(h, l)
    value = 0.5 * eps_2l * (1 - 2 * eta)
    return FiniteSizeBound(method="martingale", n=3 * l, epsilon_n=eps_2l,
                           value=value, eta=eta)


# ---------------------------------------------------------------------------
# constructive witnesses: explicit positive generating terms realising the
# bounds inside the LTI feasible set


def witness_knabe(h: LocalHamiltonian, n: int) -> GeneratingTerm:
    """The n-local positive operator realising the Knabe bound.

    q = (1-eps)/(n-2) * H_open + sum_x 1/(n-x-1) sum_j {P_j, P_{j+x}},
    which is PSD and resums to Q_n(Delta_Knabe(n)).
    """
    pi = _as_projector(h)
    if pi.k != 2:
        raise ValueError("the finite-size witnesses assume nearest-neighbour terms")
    bound = knabe(h, n)
    space = SiteSpace(pi.d, n)
    terms = [embed_at(pi.term, j + 1, space).mat for j in range(n - 1)]
    q = (1 - bound.epsilon_n) / (n - 2) * sum(terms)
    for x in range(1, n - 1):
        coeff = 1.0 / (n - x - 1)
        for j in range(0, n - 1 - x):
            q = q + coeff * (terms[j] @ terms[j + x] + terms[j + x] @ terms[j])
    return GeneratingTerm(n=n, delta=bound.value, op=DenseHermitian(q, check=False),
                          kind="witness", semantic=(n >= semantic_threshold(2)))


def witness_gm(h: LocalHamiltonian, n: int) -> GeneratingTerm:
    """The n-local positive operator realising the Gosset--Mozgunov bound.

    Uses the weighted chain B = sum_j c_j P_j and redistributes the single
    projector and anticommutator terms along the window with the c_j weights.
    """
    pi = _as_projector(h)
    if pi.k != 2:
        raise ValueError("the finite-size witnesses assume nearest-neighbour terms")
    bound = gm(h, n)
    eps = bound.epsilon_n
    c = gm_coefficients(n)
    a, b = gm_prefactors(n)
    s0, s1, s_adj = c.sum(), (c**2).sum(), (c[:-1] * c[1:]).sum()
    s_far = s0**2 - s1 - 2 * s_adj
    space = SiteSpace(pi.d, n)
    terms = [embed_at(pi.term, j + 1, space).mat for j in range(n - 1)]
    bop = sum(c[j] * terms[j] for j in range(n - 1))
    q = (a / s1) * sum(c[j]**2 * terms[j] for j in range(n - 1))
    q = q - (b * eps / s0) * bop
    q = q + sum(c[j] * c[j + 1] * (terms[j] @ terms[j + 1] + terms[j + 1] @ terms[j])
                for j in range(n - 2)) / s_adj
    far = np.zeros_like(q)
    for j in range(n - 1):
        for k2 in range(j + 2, n - 1):
            far = far + c[j] * c[k2] * (terms[j] @ terms[k2] + terms[k2] @ terms[j])
    if s_far > 0:
        q = q + far / s_far
    return GeneratingTerm(n=n, delta=bound.value, op=DenseHermitian(q, check=False),
                          kind="witness", semantic=(n >= semantic_threshold(2)))


def witness_martingale(h: LocalHamiltonian, l: int) -> GeneratingTerm:
    """The blocked-level positive operator realising the martingale bound.

    On three blocked sites, q = eta (P_1 + P_2) + {P_1, P_2} with P the
    blocked projector pair term; its translation sum is Q_3(1 - 2 eta) for
    the blocked projector chain.  The delta recorded here is the
    blocked-level bound 1 - 2 eta; the original-chain bound carries the
    extra factor eps_2l / 2.
    """
    kp = martingale_chain(h, l)
    eta = martingale_eta(h, l)
    space = SiteSpace(kp.d, 3)
    p1 = embed_at(kp.term, 1, space).mat
    p2 = embed_at(kp.term, 2, space).mat
    q = eta * (p1 + p2) + p1 @ p2 + p2 @ p1
    return GeneratingTerm(n=3, delta=1 - 2 * eta, op=DenseHermitian(q, check=False),
                          kind="witness", semantic=True)


# ---------------------------------------------------------------------------
# inclusion report


@dataclass
class InclusionReport:
    n: int
    lti: float
    lti_status: str
    bounds: dict
    tol: float

    @property
    def best_criterion(self) -> float:
        vals = [b.value for b in self.bounds.values() if b is not None]
        return max(vals) if vals else float("-inf")

    @property
    def passed(self) -> bool:
        return self.lti >= self.best_criterion - self.tol


def inclusion_check(h: LocalHamiltonian, n: int,
                    opts: SolveOpts | None = None) -> InclusionReport:
    """Verify the LTI value dominates every applicable finite-size bound at n.

    Criteria whose preconditions fail at this n (Knabe/GM need n > 2, the
    martingale route needs n = 3l with a window large enough for the term)
    are recorded as not applicable rather than guessed.
    """
    opts = opts or SolveOpts()
    sol = lti_gap(h, n, opts)
    bounds: dict = {}
    try:
        bounds["knabe"] = knabe(h, n) if n > 2 else None
    except ValueError:
        bounds["knabe"] = None
    try:
        bounds["gm"] = gm(h, n) if n > 2 else None
    except ValueError:
        bounds["gm"] = None
    if n % 3 == 0 and 2 * (n // 3) >= h.k:
        bounds["martingale"] = martingale(h, n // 3)
    else:
        bounds["martingale"] = None
    return InclusionReport(n=n, lti=sol.delta, lti_status=sol.status, bounds=bounds,
                           tol=2 * opts.gap_tol)
