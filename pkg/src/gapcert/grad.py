"""Differentiating the certified gap over parent-Hamiltonian deformations.

Deformations h(x) = h0 + (1 - p0) X(x) (1 - p0), with p0 the ground
projector of the base term, keep the global ground space of a
frustration-free chain intact, so the level-n LTI optimum becomes a function
of the deformation coordinates.  At an optimum with dual marginal rho*, its
gradient is the partial derivative of the Lagrangian: component alpha equals
Tr[rho* d g_n / d x_alpha], with the derivative expanded through the square
and every anticommutator of the generating term (only the explicit
dependence contributes).  ``ascend_parent`` runs projected gradient ascent
on that value inside the unit Hilbert-Schmidt ball, keeping the deformed
term positive semidefinite by backtracking.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .models import LocalHamiltonian
from .opalg import DenseHermitian, SiteSpace, embed_at
from .sdp import SdpSolution, SolveOpts, build_lmi, solve_lti


@dataclass
class ParamFamily:
    """A family of parent Hamiltonians sharing the ground space of ``base``."""

    base: LocalHamiltonian
    p0: np.ndarray                      # ground projector of the base term
    directions: list                    # conjugated Hermitian direction operators
    coords: np.ndarray

    @classmethod
    def random(cls, base: LocalHamiltonian, n_directions: int, seed: int = 0,
               real: bool | None = None) -> "ParamFamily":
        """Random deformation directions, conjugated into the excited block."""
        rng = np.random.default_rng(seed)
        dim = base.term.dim
        if real is None:
            real = base.term.is_real
        w, v = np.linalg.eigh(base.term.mat)
        from .opalg import KERNEL_RTOL

        cut = KERNEL_RTOL * max(abs(float(w[-1])), 1.0)
        vk = v[:, w <= cut]
        p0 = vk @ vk.conj().T
        comp = np.eye(dim) - p0
        dirs = []
        for _ in range(n_directions):
            x = rng.normal(size=(dim, dim))
            if not real:
                x = x + 1j * rng.normal(size=(dim, dim))
            x = (x + x.conj().T) / 2
            d = comp @ x @ comp
            d = d / max(np.linalg.norm(d), 1e-30)
            dirs.append(DenseHermitian(d, check=False))
        return cls(base=base, p0=p0, directions=dirs,
                   coords=np.zeros(n_directions))

    def deformation(self, coords=None) -> np.ndarray:
        coords = self.coords if coords is None else np.asarray(coords, dtype=float)
        acc = np.zeros_like(self.base.term.mat, dtype=self.directions[0].mat.dtype)
        for c, d in zip(coords, self.directions):
            acc = acc + c * d.mat
        return acc

    def term(self, coords=None) -> LocalHamiltonian:
        """The deformed interaction; deformations break declared symmetries."""
        mat = self.base.term.mat + self.deformation(coords)
        return LocalHamiltonian(self.base.d, self.base.k, DenseHermitian(mat),
                                label=self.base.label + "+deformed")

    def term_min_eig(self, coords=None) -> float:
        mat = self.base.term.mat + self.deformation(coords)
        return float(np.linalg.eigvalsh((mat + mat.conj().T) / 2)[0])

    def hs_norm(self, coords=None) -> float:
        return float(np.linalg.norm(self.deformation(coords)))


def solve_family(family: ParamFamily, n: int, opts: SolveOpts | None = None,
                 coords=None) -> SdpSolution:
    """Solve the level-n LTI SDP for the deformed term at given coordinates."""
    prob = build_lmi(family.term(coords), n)
    return solve_lti(prob, opts or SolveOpts())


def gap_gradient(sol: SdpSolution, family: ParamFamily, n: int) -> np.ndarray:
    """Gradient of the level-n LTI optimum over the family coordinates.

    Component alpha is Tr[rho* dg_n/dx_alpha] with the derivative expanded
    through h1^2 and each anticommutator {h1, hj}; delta* enters only the
    -delta* h1 term.  Rejects solutions computed at different coordinates.
    """
    h = family.term()
    prob = build_lmi(h, n)
    if sol.problem_key != prob.key():
        raise ValueError("stale solution: the family coordinates changed since the solve")
    if sol.rho is None:
        raise ValueError("solution carries no dual point")
    rho = sol.rho.mat
    space = SiteSpace(h.d, n)
    h_embedded = [embed_at(h.term, j + 1, space).mat for j in range(n - h.k + 1)]
    grad = np.zeros(len(family.directions))
    for alpha, dop in enumerate(family.directions):
        d_embedded = [embed_at(dop, j + 1, space).mat for j in range(n - h.k + 1)]
        dg = (d_embedded[0] @ h_embedded[0] + h_embedded[0] @ d_embedded[0]
              - sol.delta * d_embedded[0])
        for j in range(1, n - h.k + 1):
            dg = dg + (d_embedded[0] @ h_embedded[j] + h_embedded[j] @ d_embedded[0]
                       + h_embedded[0] @ d_embedded[j] + d_embedded[j] @ h_embedded[0])
        grad[alpha] = float(np.real(np.trace(rho @ dg)))
    return grad


def central_difference(family: ParamFamily, n: int, direction: np.ndarray,
                       step: float = 1e-4, opts: SolveOpts | None = None) -> float:
    """Two-solve central difference of the LTI optimum along a direction."""
    direction = np.asarray(direction, dtype=float)
    up = solve_family(family, n, opts, coords=family.coords + step * direction)
    dn = solve_family(family, n, opts, coords=family.coords - step * direction)
    return (up.delta - dn.delta) / (2 * step)


@dataclass
class AscentResult:
    coords: np.ndarray
    history: list                       # (coords, delta) per accepted step
    stopped: str


def ascend_parent(family: ParamFamily, n: int, iters: int = 10, step: float = 0.2,
                  opts: SolveOpts | None = None, backtracks: int = 8) -> AscentResult:
    """Projected gradient ascent of the LTI gap over the parent family.

    Iterates stay inside the unit Hilbert-Schmidt ball (the scaling escape
    X ~ identity-on-complement is capped) and keep the deformed term
    positive semidefinite; steps violating positivity or decreasing the
    objective beyond solver noise are backtracked.
    """
    opts = opts or SolveOpts()
    coords = family.coords.copy()
    sol = solve_family(family, n, opts, coords)
    history = [(coords.copy(), sol.delta)]
    stopped = "iterations exhausted"
    for _ in range(iters):
        family.coords = coords
        grad = gap_gradient(sol, family, n)
        gnorm = np.linalg.norm(grad)
        if gnorm < 1e-9:
            stopped = "vanishing gradient"
            break
        accepted = False
        trial_step = step
        for _ in range(backtracks):
            trial = coords + trial_step * grad / gnorm
            nrm = family.hs_norm(trial)
            if nrm > 1.0:
                trial = trial * (1.0 / nrm)  # radial projection onto the HS ball
            if family.term_min_eig(trial) < -1e-10:
                trial_step /= 2
                continue
            cand = solve_family(family, n, opts, trial)
            if np.isfinite(cand.delta) and cand.delta >= sol.delta - 2 * opts.gap_tol:
                coords, sol = trial, cand
                history.append((coords.copy(), sol.delta))
                accepted = True
                break
            trial_step /= 2
        if not accepted:
            stopped = "no feasible ascent step"
            break
    family.coords = coords
    return AscentResult(coords=coords, history=history, stopped=stopped)


def hellmann_feynman_ed(family: ParamFamily, N: int, direction: np.ndarray):
    """Exact-diagonalisation slope of the finite-ring gap along a direction.

    Returns (forward slope, backward slope) from degenerate perturbation
    theory on the first excited level: the projected perturbation's extreme
    eigenvalues.  For a nondegenerate first excited state both equal the
    expectation value in that state.
    """
    from .oracle import chain_hamiltonian, spectrum
    from .opalg import KERNEL_RTOL

    direction = np.asarray(direction, dtype=float)
    h = family.term()
    ham = np.asarray(chain_hamiltonian(h, N, "periodic").todense())
    w, v = np.linalg.eigh(ham)
    scale = max(abs(float(w[-1])), 1.0)
    cut = KERNEL_RTOL * scale
    idx_exc = np.where(w > cut)[0]
    e1 = w[idx_exc[0]]
    sel = idx_exc[np.abs(w[idx_exc] - e1) <= 1e-7 * max(e1, 1.0)]
    v1 = v[:, sel]
    dmat = sum(float(c) * dop.mat for c, dop in zip(direction, family.directions))
    space = SiteSpace(h.d, N)
    dh = sum(embed_at(DenseHermitian(dmat, check=False), i + 1, space).mat
             for i in range(N))
    wmat = v1.conj().T @ dh @ v1
    slopes = np.linalg.eigvalsh((wmat + wmat.conj().T) / 2)
    return float(slopes[0]), float(slopes[-1])


def ed_gap(family: ParamFamily, N: int, coords=None) -> float:
    from .oracle import spectrum

    return spectrum(family.term(coords), N, "periodic").gap
