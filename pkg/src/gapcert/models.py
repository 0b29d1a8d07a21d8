"""Benchmark interaction terms and the projectorisation / blocking transforms.

Shipped models:

* ``aklt_term``       -- the spin-1 two-site projector onto total spin 2,
  h = (1/2) S.S + (1/6) (S.S)^2 + (1/3) I, with spectrum {0 x4, 1 x5}.
* ``potts_clock_term`` -- the two-parameter deformation of the 3-state clock
  model, shifted so the smallest eigenvalue is exactly zero.
* ``glauber_term``    -- the three-site spin-1/2 kinetic-Ising parent term,
  with eigenvalues {0 x4, 2(1-delta) x2, 2(1+delta) x2} for all gamma.

All constructors return a :class:`LocalHamiltonian`, which validates the
frustration-free normalisation (positive semidefinite with a nonempty
kernel) on construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import symmetry
from .opalg import KERNEL_RTOL, DenseHermitian, SiteSpace, embed_at_sparse
from .symmetry import SiteSymmetry

OMEGA = np.exp(2j * np.pi / 3)

# spin-1 matrices, basis ordered m = +1, 0, -1
SPIN1_SP = np.sqrt(2.0) * np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]], dtype=float)
SPIN1_SZ = np.diag([1.0, 0.0, -1.0])

# Z3 clock algebra: sigma tau = omega tau sigma
CLOCK_SIGMA = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]], dtype=complex)
CLOCK_TAU = np.diag([1.0, OMEGA, OMEGA**2])

PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]])
PAULI_Z = np.diag([1.0, -1.0])

BLOCK_DIM_CAP = 4096  # largest blocked two-site window we build densely


@dataclass
class LocalHamiltonian:
    """A translation-invariant interaction term h on k sites of dimension d."""

    d: int
    k: int
    term: DenseHermitian
    label: str = ""
    symmetry: SiteSymmetry | None = None
    _gamma2: float | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.term.dim != self.d**self.k:
            raise ValueError(f"term dim {self.term.dim} != d^k = {self.d**self.k}")
        w = np.linalg.eigvalsh(self.term.mat)
        scale = max(abs(w[-1]), 1.0)
        if w[0] < -1e-10 * scale:
            raise ValueError(f"term is not positive semidefinite (min eig {w[0]:.3e})")
        cut = KERNEL_RTOL * scale
        if w[0] > cut:
            raise ValueError("term has an empty kernel; shift the ground energy to zero")
        nonzero = w[w > cut]
        if len(nonzero) == 0:
            raise ValueError("term is (numerically) zero")
        self._eigs = w

    @property
    def gamma2(self) -> float:
        """Smallest nonzero eigenvalue of the term."""
        if self._gamma2 is None:
            w = self._eigs
            cut = KERNEL_RTOL * max(abs(w[-1]), 1.0)
            self._gamma2 = float(w[w > cut][0])
        return self._gamma2

    @property
    def kernel_dim(self) -> int:
        w = self._eigs
        return int((w <= KERNEL_RTOL * max(abs(w[-1]), 1.0)).sum())

    def is_projector(self, tol=1e-12) -> bool:
        m = self.term.mat
        return bool(np.abs(m @ m - m).max() <= tol * max(1.0, np.abs(m).max()))

    def space(self, n_sites: int) -> SiteSpace:
        return SiteSpace(self.d, n_sites)


@dataclass(frozen=True)
class ModelParams:
    """CLI-facing model selector."""

    variant: str
    r: float = 1.0
    s: float = 1.0
    gamma: float = 0.0
    delta: float = 0.0
    file: str | None = None

    def make(self) -> LocalHamiltonian:
        if self.variant == "aklt":
            return aklt_term()
        if self.variant == "potts":
            return potts_clock_term(self.r, self.s)
        if self.variant == "glauber":
            return glauber_term(self.gamma, self.delta)
        if self.variant == "custom":
            if not self.file:
                raise ValueError("custom model needs a file")
            return load_custom_term(self.file)
        raise ValueError(f"unknown model variant {self.variant!r}")

    def as_dict(self) -> dict:
        out = {"variant": self.variant}
        if self.variant == "potts":
            out.update(r=self.r, s=self.s)
        elif self.variant == "glauber":
            out.update(gamma=self.gamma, delta=self.delta)
        elif self.variant == "custom":
            out.update(file=self.file)
        return out


def aklt_term() -> LocalHamiltonian:
    """Spin-1 two-site projector onto the total-spin-2 subspace."""
    sp, sz = SPIN1_SP, SPIN1_SZ
    ss = 0.5 * (np.kron(sp, sp.T) + np.kron(sp.T, sp)) + np.kron(sz, sz)
    h = 0.5 * ss + (1.0 / 6.0) * (ss @ ss) + (1.0 / 3.0) * np.eye(9)
    return LocalHamiltonian(3, 2, DenseHermitian(h), label="aklt",
                            symmetry=symmetry.su2(sp, sz))


def potts_clock_coeffs(r: float, s: float):
    """Deformation coefficients (f, g1, g2) of the 3-state clock family."""
    w, wb = OMEGA, np.conj(OMEGA)
    f = -(2.0 / 9.0) * (2 * (r * s + w * r / s**2 + wb * s / r**2)
                        - (1 / (r * s) + wb * r**2 / s + w * s**2 / r))
    g1 = -(2.0 / 9.0) * (w * (r**2 / s + s / r**2) + wb * (s**2 / r + r / s**2)
                         + r * s + 1 / (r * s))
    g2 = (1.0 / 9.0) * (3 + (1 / (r * s) + s**2 / r + r**2 / s)
                        - 2 * (r * s + s / r**2 + r / s**2))
    return f, g1, g2


def potts_clock_term(r: float, s: float) -> LocalHamiltonian:
    """Deformed 3-state clock interaction, shifted to have ground energy 0.

    The shift is the minimal admissible one (minus the smallest eigenvalue of
    the unshifted term), which keeps reported gap values reproducible.
    """
    if not (0 < r <= 1) or not (0 < s <= 1):
        raise ValueError(f"(r, s) must lie in (0, 1], got ({r}, {s})")
    f, g1, g2 = potts_clock_coeffs(r, s)
    sig, tau = CLOCK_SIGMA, CLOCK_TAU
    eye3 = np.eye(3)
    t = (np.kron(sig, sig.conj().T)
         + f / 2 * (np.kron(tau, eye3) + np.kron(eye3, tau))
         + g1 * np.kron(tau, tau) + g2 * np.kron(tau, tau.conj().T))
    raw = -(t + t.conj().T)
    shift = -np.linalg.eigvalsh(raw)[0]
    h = DenseHermitian(raw + shift * np.eye(9))
    return LocalHamiltonian(3, 2, h, label=f"potts(r={r:g},s={s:g})",
                            symmetry=symmetry.cyclic(tau, 3))


def glauber_term(gamma: float, delta: float) -> LocalHamiltonian:
    """Three-site parent term of the 1D kinetic-Ising (Glauber) family."""
    if not (0 <= gamma < 1) or not (0 <= delta < 1):
        raise ValueError(f"(gamma, delta) must lie in [0, 1), got ({gamma}, {delta})")
    a = (1 - delta) / 2 + (1 + delta) * np.sqrt(1 - gamma**2) / 2
    b = 1 - delta - a
    x, z, eye2 = PAULI_X, PAULI_Z, np.eye(2)

    def t3(p, q, r_):
        return np.kron(np.kron(p, q), r_)

    h = (np.eye(8) - a * t3(eye2, x, eye2) + b * t3(z, x, z)
         + delta * t3(z, eye2, z)
         - gamma * (1 + delta) / 2 * (t3(z, z, eye2) + t3(eye2, z, z)))
    # no symmetry declared: the d=2 cones are small enough without reduction
    return LocalHamiltonian(2, 3, DenseHermitian(h),
                            label=f"glauber(g={gamma:g},d={delta:g})")


def glauber_coeffs(gamma: float, delta: float):
    a = (1 - delta) / 2 + (1 + delta) * np.sqrt(1 - gamma**2) / 2
    return a, 1 - delta - a


def projectorize(h: LocalHamiltonian) -> LocalHamiltonian:
    """Orthogonal projector onto the complement of ker(h).

    Eigenvalues below KERNEL_RTOL * ||h|| count as kernel.  The result
    satisfies h >= gamma2(h) * Pi, so gap bounds for the projector model
    transfer to the original after multiplying by gamma2.
    """
    w, v = np.linalg.eigh(h.term.mat)
    cut = KERNEL_RTOL * max(abs(w[-1]), 1.0)
    if w[0] > cut:
        raise ValueError("no eigenvalue below the kernel tolerance; cannot projectorise")
    keep = w > cut
    vk = v[:, keep]
    pi = vk @ vk.conj().T
    return LocalHamiltonian(h.d, h.k, DenseHermitian(pi), label=h.label + "+proj",
                            symmetry=h.symmetry)


def block(h: LocalHamiltonian, l: int) -> LocalHamiltonian:
    """Group l sites into a super-site and sum the covered interaction terms.

    The blocked term acts on two adjacent blocks (2l original sites) and
    collects every original term fully supported inside that window, so for
    a three-site term with l = 2 it is h_{123} + h_{234} on a d^2-dimensional
    pair of super-sites.  Globally H >= H_blocked / 2 because every original
    term is counted at most twice.
    """
    if l < 1:
        raise ValueError("block size must be >= 1")
    if l == 1 and h.k == 2:
        return h
    win = 2 * l
    if h.k > win:
        raise ValueError(f"two blocks of {l} sites cannot hold a {h.k}-site term")
    if h.d**win > BLOCK_DIM_CAP:
        raise ValueError(f"blocked window dimension {h.d**win} exceeds cap {BLOCK_DIM_CAP}")
    space = SiteSpace(h.d, win)
    acc = sum(embed_at_sparse(h.term, j + 1, space) for j in range(win - h.k + 1))
    term = DenseHermitian(np.asarray(acc.todense()))
    sym = h.symmetry.blocked(l) if h.symmetry is not None else None
    return LocalHamiltonian(h.d**l, 2, term, label=h.label + f"+block{l}", symmetry=sym)


def tfim_pair():
    """Two generating terms of the transverse-field Ising Hamiltonian.

    h = ZZ + XI and h' = ZZ + (XI + IX)/2 sum to the same global operator;
    they differ by a telescoping gauge term.  Neither is positive, so they
    are returned as bare operators rather than LocalHamiltonians.
    """
    zz = np.kron(PAULI_Z, PAULI_Z)
    xi = np.kron(PAULI_X, np.eye(2))
    ix = np.kron(np.eye(2), PAULI_X)
    return DenseHermitian(zz + xi), DenseHermitian(zz + 0.5 * xi + 0.5 * ix)


def save_custom_term(path, h: LocalHamiltonian):
    """Write a term as the self-describing container {d, k, real_part, imag_part}."""
    m = h.term.mat
    payload = {
        "d": h.d,
        "k": h.k,
        "real_part": np.real(m).reshape(-1).tolist(),
        "imag_part": np.imag(m).reshape(-1).tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_custom_term(path) -> LocalHamiltonian:
    """Load a term from the {d, k, real_part, imag_part} row-major container."""
    with open(path) as fh:
        payload = json.load(fh)
    d, k = int(payload["d"]), int(payload["k"])
    dim = d**k
    re = np.asarray(payload["real_part"], dtype=float).reshape(dim, dim)
    im = np.asarray(payload["imag_part"], dtype=float).reshape(dim, dim)
    mat = re + 1j * im if np.abs(im).max(initial=0.0) > 0 else re
    return LocalHamiltonian(d, k, DenseHermitian(mat), label="custom")


def make_model(params: ModelParams) -> LocalHamiltonian:
    return params.make()
