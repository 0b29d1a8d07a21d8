"""Dense Hermitian operator algebra on tensor-product spin spaces.

Everything here is plain numpy: operators are complex (or real) double
precision arrays wrapped in a thin ``DenseHermitian`` container that
enforces Hermiticity at construction time.  Site indices are 1-based and
periodic; wraparound placements are realised by conjugating with the
cyclic-shift permutation so that there is a single code path for all
offsets.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

HERM_TOL = 1e-12
# relative cutoff below which eigenvalues count as kernel; shared with the
# projectorisation, ground-projector and ED modules
KERNEL_RTOL = 1e-8


class EigensolverError(RuntimeError):
    """Raised when an eigensolver fails to converge or misses its residual."""


@dataclass(frozen=True)
class SiteSpace:
    """A chain of ``n_sites`` spins with local dimension ``d``."""

    d: int
    n_sites: int

    def __post_init__(self):
        if self.d < 2:
            raise ValueError(f"local dimension must be >= 2, got {self.d}")
        if self.n_sites < 1:
            raise ValueError(f"need at least one site, got {self.n_sites}")

    @property
    def total_dim(self) -> int:
        return self.d**self.n_sites


class DenseHermitian:
    """Hermitian matrix container.

    The constructor symmetrises its input (average with the conjugate
    transpose) to suppress floating-point asymmetry from operator
    compositions, and rejects inputs that are not Hermitian to begin with.
    """

    __slots__ = ("mat",)

    def __init__(self, mat, check: bool = True):
        a = np.asarray(mat)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        if a.dtype not in (np.float64, np.complex128):
            a = a.astype(np.complex128 if np.iscomplexobj(a) else np.float64)
        if check:
            scale = max(1.0, np.abs(a).max()) if a.size else 1.0
            dev = np.abs(a - a.conj().T).max() if a.size else 0.0
            if dev > 1e-9 * scale:
                raise ValueError(f"input is not Hermitian (deviation {dev:.3e})")
        a = (a + a.conj().T) / 2
        if np.iscomplexobj(a) and np.abs(a.imag).max(initial=0.0) == 0.0:
            a = a.real.copy()
        a.setflags(write=False)
        object.__setattr__(self, "mat", a)

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.mat)

    def norm(self) -> float:
        """Spectral norm."""
        return float(np.linalg.norm(self.mat, 2))

    def fro(self) -> float:
        return float(np.linalg.norm(self.mat))

    def __add__(self, other):
        return DenseHermitian(self.mat + other.mat, check=False)

    def __sub__(self, other):
        return DenseHermitian(self.mat - other.mat, check=False)

    def __mul__(self, scalar):
        if abs(np.imag(scalar)) > 0:
            raise ValueError("scaling a Hermitian operator needs a real scalar")
        return DenseHermitian(self.mat * np.real(scalar), check=False)

    __rmul__ = __mul__

    def __repr__(self):
        return f"DenseHermitian(dim={self.dim}, real={self.is_real})"


def _sites_of(op_dim: int, d: int) -> int:
    k = round(np.log(op_dim) / np.log(d))
    if d**k != op_dim:
        raise ValueError(f"operator dimension {op_dim} is not a power of d={d}")
    return k


@lru_cache(maxsize=128)
def _shift_perm(d: int, n: int, shift: int) -> np.ndarray:
    """Index permutation of the cyclic site shift: site j -> j + shift."""
    dim = d**n
    idx = np.arange(dim)
    digits = np.empty((n, dim), dtype=np.int64)
    rem = idx
    for j in range(n):
        p = d ** (n - 1 - j)
        digits[j] = rem // p
        rem = rem % p
    new = np.zeros(dim, dtype=np.int64)
    for j in range(n):
        new += digits[(j - shift) % n] * d ** (n - 1 - j)
    return new


def translate(op: DenseHermitian, shift: int, space: SiteSpace) -> DenseHermitian:
    """Conjugate ``op`` by the cyclic shift moving site j to site j+shift.

    With S the unitary sending |a_1 .. a_N> to |a_N a_1 .. a_{N-1}>, the
    result S op S^dag indexes the input by the inverse shift permutation.
    """
    if op.dim != space.total_dim:
        raise ValueError(f"operator dim {op.dim} != space dim {space.total_dim}")
    s = shift % space.n_sites
    if s == 0:
        return op
    inv = _shift_perm(space.d, space.n_sites, space.n_sites - s)
    return DenseHermitian(op.mat[np.ix_(inv, inv)], check=False)


def translate_sparse(op: sp.spmatrix, shift: int, space: SiteSpace) -> sp.csr_matrix:
    s = shift % space.n_sites
    m = sp.csr_matrix(op)
    if s == 0:
        return m
    inv = _shift_perm(space.d, space.n_sites, space.n_sites - s)
    return m[inv][:, inv].tocsr()


def embed_at(op: DenseHermitian, start: int, space: SiteSpace) -> DenseHermitian:
    """Place a k-site operator so its support begins at 1-based site ``start``.

    Wraparound placements (start + k - 1 > n_sites) are permitted and equal
    the cyclic-shift conjugate of the offset-1 embedding.
    """
    d, n = space.d, space.n_sites
    k = _sites_of(op.dim, d)
    if k > n:
        raise ValueError(f"operator spans {k} sites but the space has {n}")
    if start < 1:
        raise ValueError("site indices are 1-based")
    base = np.kron(op.mat, np.eye(d ** (n - k)))
    return translate(DenseHermitian(base, check=False), start - 1, space)


def embed_at_sparse(op, start: int, space: SiteSpace) -> sp.csr_matrix:
    """Sparse version of :func:`embed_at`; accepts an array or sparse matrix."""
    d, n = space.d, space.n_sites
    a = op.mat if isinstance(op, DenseHermitian) else op
    k = _sites_of(a.shape[0], d)
    if k > n:
        raise ValueError(f"operator spans {k} sites but the space has {n}")
    base = sp.kron(sp.csr_matrix(a), sp.identity(d ** (n - k), format="csr"), format="csr")
    return translate_sparse(base, start - 1, space)


def anticomm(a: DenseHermitian, b: DenseHermitian) -> DenseHermitian:
    """{a, b} = ab + ba."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return DenseHermitian(a.mat @ b.mat + b.mat @ a.mat, check=False)


def min_eig(op: DenseHermitian, with_vector: bool = True):
    """Smallest eigenvalue (and eigenvector) of a Hermitian operator.

    The eigenvector residual ||(op - lam) v|| is checked against
    1e-10 * ||op||; a failure raises instead of returning silently.
    """
    try:
        if with_vector:
            w, v = np.linalg.eigh(op.mat)
        else:
            w = np.linalg.eigvalsh(op.mat)
    except np.linalg.LinAlgError as exc:
        raise EigensolverError(f"eigh did not converge: {exc}") from exc
    lam = float(w[0])
    if not with_vector:
        return lam
    vec = v[:, 0]
    scale = max(np.abs(w).max(), 1.0)
    res = np.linalg.norm(op.mat @ vec - lam * vec)
    if res > 1e-10 * scale:
        raise EigensolverError(f"eigenvector residual {res:.3e} exceeds 1e-10*||op||")
    return lam, vec


def site_herm_basis(d: int) -> list[np.ndarray]:
    """Orthonormal (Hilbert-Schmidt) Hermitian basis of d x d matrices.

    Element 0 is identity / sqrt(d); elements 1..d-1 are the traceless
    diagonal combinations; the rest are the off-diagonal sym / antisym pairs.
    """
    mats = [np.eye(d, dtype=complex) / np.sqrt(d)]
    for k in range(1, d):
        v = np.zeros(d)
        v[:k] = 1.0
        v[k] = -float(k)
        v /= np.linalg.norm(v)
        mats.append(np.diag(v).astype(complex))
    for p in range(d):
        for q in range(p + 1, d):
            e = np.zeros((d, d), dtype=complex)
            e[p, q] = e[q, p] = 1 / np.sqrt(2)
            mats.append(e)
            e = np.zeros((d, d), dtype=complex)
            e[p, q] = -1j / np.sqrt(2)
            e[q, p] = 1j / np.sqrt(2)
            mats.append(e)
    return mats


@dataclass(frozen=True)
class BasisString:
    """One element of the tensor-string Hermitian basis.

    ``indices`` holds the per-site index into the single-site basis; index 0
    is the identity-proportional factor, so membership questions like "is the
    first/last factor the identity" are direct index tests.
    """

    indices: tuple
    op: DenseHermitian

    @property
    def first_is_identity(self) -> bool:
        return self.indices[0] == 0

    @property
    def last_is_identity(self) -> bool:
        return self.indices[-1] == 0


def herm_basis(site_dim: int, n_sites: int = 1) -> list[BasisString]:
    """Orthonormal Hermitian tensor-string basis of (site_dim^n_sites)^2 ops.

    The all-identity string comes first (lexicographic order on indices).
    """
    if site_dim**(2 * n_sites) > 1 << 22:
        raise ValueError("herm_basis would materialise too many elements")
    single = site_herm_basis(site_dim)
    out = []
    for idx in np.ndindex(*((len(single),) * n_sites)):
        m = single[idx[0]]
        for j in idx[1:]:
            m = np.kron(m, single[j])
        out.append(BasisString(indices=tuple(int(i) for i in idx), op=DenseHermitian(m, check=False)))
    return out


def expand_in_strings(op: DenseHermitian, d: int, n: int) -> np.ndarray:
    """Coefficient tensor of ``op`` in the tensor-string basis.

    Returns a real array of shape (d^2,) * n with c[j1..jn] = <S_j, op>_HS,
    computed by a per-site transform rather than materialising the strings.
    """
    if op.dim != d**n:
        raise ValueError("dimension mismatch")
    single = site_herm_basis(d)
    t = op.mat.astype(complex).reshape((d,) * (2 * n))
    perm = [ax for i in range(n) for ax in (i, n + i)]
    t = np.transpose(t, perm).reshape((d * d,) * n)
    u = np.array([b.conj().reshape(-1) for b in single])
    # contracting the last axis each pass leaves the new axes in site order
    for _ in range(n):
        t = np.tensordot(u, t, axes=([1], [n - 1]))
    coeff = t
    if np.abs(coeff.imag).max(initial=0.0) > 1e-10 * max(1.0, np.abs(coeff).max()):
        raise ValueError("non-real string coefficients; input was not Hermitian")
    return coeff.real.copy()
