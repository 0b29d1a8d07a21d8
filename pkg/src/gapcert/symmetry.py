"""Sector decompositions for on-site symmetries of interaction terms.

If every interaction term commutes with a global on-site symmetry (a cyclic
unitary u^(x)N or an SU(2) action generated by spin matrices), the gauge
operator in the LTI semidefinite program can be restricted to the commutant
without changing the optimum: conjugating a feasible point by a group element
gives another feasible point with the same objective, so the group average is
feasible too.  The constraint matrix then block-diagonalises over isotypic
sectors, which shrinks the cone dimensions by orders of magnitude.

The decomposition is always *verified* against the concrete term before use
(see :func:`commutes_with_term`); terms that break the declared symmetry are
simply solved without reduction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np



@dataclass(frozen=True)
class SiteSymmetry:
    """On-site symmetry descriptor.

    kind 'cyclic': ops = (u,) with u**order proportional to the identity.
    kind 'su2':    ops = (Sp, Sz), the raising and z spin matrices.
    """

    kind: str
    ops: tuple
    order: int = 0

    def __post_init__(self):
        if self.kind not in ("cyclic", "su2"):
            raise ValueError(f"unknown symmetry kind {self.kind!r}")

    def _key(self):
        return (self.kind, self.order) + tuple(op.tobytes() for op in self.ops)

    def blocked(self, l: int) -> "SiteSymmetry":
        """The induced symmetry on a super-site of l original sites."""
        if self.kind == "cyclic":
            u = self.ops[0]
            ub = u
            for _ in range(l - 1):
                ub = np.kron(ub, u)
            return SiteSymmetry("cyclic", (ub,), self.order)
        sp_, sz = self.ops
        d = sp_.shape[0]
        spb = np.zeros((d**l, d**l), dtype=complex)
        szb = np.zeros((d**l, d**l), dtype=complex)
        for j in range(l):
            left = np.eye(d**j)
            right = np.eye(d ** (l - 1 - j))
            spb += np.kron(np.kron(left, sp_), right)
            szb += np.kron(np.kron(left, sz), right)
        return SiteSymmetry("su2", (spb, szb))


def cyclic(u: np.ndarray, order: int) -> SiteSymmetry:
    u = np.asarray(u, dtype=complex)
    acc = np.eye(u.shape[0], dtype=complex)
    for _ in range(order):
        acc = acc @ u
    if not np.allclose(acc, np.eye(u.shape[0]), atol=1e-10):
        raise ValueError(f"u**{order} is not the identity")
    return SiteSymmetry("cyclic", (u,), order)


def su2(sp_: np.ndarray, sz: np.ndarray) -> SiteSymmetry:
    return SiteSymmetry("su2", (np.asarray(sp_, dtype=complex), np.asarray(sz, dtype=complex)))


def commutes_with_term(sym: SiteSymmetry, term: np.ndarray, k: int, d: int, tol=1e-10) -> bool:
    """Check the k-site interaction commutes with the global symmetry action."""
    scale = max(1.0, np.abs(term).max())
    if sym.kind == "cyclic":
        u = sym.ops[0]
        big = u
        for _ in range(k - 1):
            big = np.kron(big, u)
        return np.abs(big @ term - term @ big).max() <= tol * scale
    sp_, sz = sym.ops
    for gen in (sp_, sz):
        big = np.zeros_like(term, dtype=complex)
        for j in range(k):
            big += np.kron(np.kron(np.eye(d**j), gen), np.eye(d ** (k - 1 - j)))
        if np.abs(big @ term - term @ big).max() > tol * scale:
            return False
    return True


@dataclass
class Sector:
    """One isotypic sector of the symmetry action on n sites.

    ``hw`` holds one orthonormal column per irrep copy (for SU(2), the
    highest-weight vectors; for cyclic groups the eigenbasis itself), so
    invariant operators are fully described by their ``mult x mult`` block
    ``hw^dag X hw``.  ``basis`` holds the complete sector basis with columns
    ordered (copy, internal state) and is what the gauge-side coordinates are
    built from.
    """

    label: object
    mult: int
    irrep_dim: int
    hw: np.ndarray
    basis: np.ndarray

    def copy_columns(self, i: int) -> np.ndarray:
        """All internal-state columns of irrep copy i."""
        r = self.irrep_dim
        return self.basis[:, i * r:(i + 1) * r]


_SECTOR_CACHE: dict = {}


def sectors(sym: SiteSymmetry, d: int, n: int) -> list[Sector]:
    key = (sym._key(), d, n)
    if key not in _SECTOR_CACHE:
        if sym.kind == "cyclic":
            out = _cyclic_sectors(sym, d, n)
        else:
            out = _su2_sectors(sym, d, n)
        total = sum(s.mult * s.irrep_dim for s in out)
        if total != d**n:
            raise RuntimeError(f"sector dimensions sum to {total}, expected {d**n}")
        _SECTOR_CACHE[key] = out
    return _SECTOR_CACHE[key]


def _phase_exponents(u: np.ndarray, order: int):
    """Eigenbasis of u with eigenvalue exponents along the order-th roots."""
    d = u.shape[0]
    if np.abs(u - np.diag(np.diag(u))).max() < 1e-14:
        vecs = np.eye(d, dtype=complex)
        lams = np.diag(u)
    elif np.abs(u - u.conj().T).max() < 1e-12:
        _, vecs = np.linalg.eigh(u)
        lams = np.einsum("ij,jk,ki->i", vecs.conj().T, u, vecs)
    else:
        lams, vecs = np.linalg.eig(u)
        # re-orthonormalise within eigenvalue clusters (u is normal)
        for val in np.unique(np.round(lams, 8)):
            idx = np.where(np.abs(lams - val) < 1e-8)[0]
            q, _ = np.linalg.qr(vecs[:, idx])
            vecs[:, idx] = q
    roots = np.exp(2j * np.pi * np.arange(order) / order)
    expo = np.array([int(np.argmin(np.abs(roots - lam))) for lam in lams])
    if np.abs(roots[expo] - lams).max() > 1e-8:
        raise ValueError("eigenvalues of u are not order-th roots of unity")
    return vecs, expo


def _cyclic_sectors(sym: SiteSymmetry, d: int, n: int) -> list[Sector]:
    u = sym.ops[0]
    order = sym.order
    vecs, expo = _phase_exponents(u, order)
    dim = d**n
    # per product basis column: total exponent mod order
    tot = np.zeros(dim, dtype=np.int64)
    for j in range(n):
        reps = d ** (n - 1 - j)
        tot += np.tile(np.repeat(expo, reps), d**j)
    tot %= order
    big = vecs
    for _ in range(n - 1):
        big = np.kron(big, vecs)
    out = []
    for r in range(order):
        cols = np.where(tot == r)[0]
        if len(cols) == 0:
            continue
        w = np.ascontiguousarray(big[:, cols])
        out.append(Sector(label=r, mult=len(cols), irrep_dim=1, hw=w, basis=w))
    return out


def _su2_sectors(sym: SiteSymmetry, d: int, n: int) -> list[Sector]:
    sp_, sz = sym.ops
    dim = d**n
    zdiag1 = np.diag(sz).real
    if np.abs(sz - np.diag(np.diag(sz))).max() > 1e-12:
        raise ValueError("Sz must be diagonal in the site basis")
    zdiag = np.zeros(dim)
    for j in range(n):
        reps = d ** (n - 1 - j)
        zdiag += np.tile(np.repeat(zdiag1, reps), d**j)
    sp_tot = np.zeros((dim, dim), dtype=complex)
    for j in range(n):
        sp_tot += np.kron(np.kron(np.eye(d**j), sp_), np.eye(d ** (n - 1 - j)))
    if np.abs(sp_tot.imag).max() == 0.0:
        sp_tot = sp_tot.real
    sm_tot = sp_tot.conj().T
    s2 = np.diag(zdiag**2) + (sp_tot @ sm_tot + sm_tot @ sp_tot) / 2
    two_smax = int(round(2 * n * zdiag1.max()))
    out = []
    for twoS in range(two_smax, -1, -1):
        s = twoS / 2
        sel_m = np.where(np.abs(zdiag - s) < 1e-9)[0]
        if len(sel_m) == 0:
            continue
        block = s2[np.ix_(sel_m, sel_m)]
        w, v = np.linalg.eigh(block)
        hw_sel = np.abs(w - s * (s + 1)) < 1e-8
        mult = int(hw_sel.sum())
        if mult == 0:
            continue
        hw = np.zeros((dim, mult), dtype=v.dtype)
        hw[sel_m, :] = v[:, hw_sel]
        r = int(round(2 * s)) + 1
        cols = [hw]
        cur = hw
        mval = s
        while mval > -s + 1e-12:
            nrm = np.sqrt(s * (s + 1) - mval * (mval - 1))
            cur = (sm_tot @ cur) / nrm
            cols.append(cur)
            mval -= 1
        basis = np.zeros((dim, mult * r), dtype=v.dtype)
        for i in range(mult):
            for j in range(r):
                basis[:, i * r + j] = cols[j][:, i]
        out.append(Sector(label=s, mult=mult, irrep_dim=r, hw=hw, basis=basis))
    return out
