"""The LTI gap semidefinite program and its dual.

Primal form (level n): maximise delta subject to

    M(delta, Y) = g_n(0) + delta * (-h_1) + 1 (x) Y - Y (x) 1  >=  0,

an affine linear matrix inequality over the scalar delta and an (n-1)-site
Hermitian gauge operator Y.  The dual minimises Tr[rho (h1^2 + sum {h1,hj})]
over n-site states with matching left/right marginals, normalised by
Tr(rho h1) = 1.

Solver strategy.  The LMI is handed to an interior-point engine (Clarabel)
when the cone is small enough for its dense PSD handling, and to the
first-order operator-splitting engine (SCS) otherwise.  When the interaction
term commutes with a declared on-site symmetry, the gauge is restricted to
the commutant (a group average makes this lossless) and the constraint
block-diagonalises over isotypic sectors, which shrinks the headline solves
from a d^n cone with ~d^(2n-2) variables to a handful of multiplicity-space
blocks.  Every reported solution is post-checked in the full space: the
feasibility residual is an explicit eigenvalue of M(delta, Y) and the duality
gap is evaluated from the explicitly reconstructed dual point; ``optimal``
status is only assigned when those checks pass.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import symmetry as sym_mod
from .lti import GaugeOperator, GeneratingTerm, gauge_shift_op, generating_term, lti_shift
from .models import LocalHamiltonian
from .opalg import DenseHermitian, SiteSpace, embed_at, herm_basis

SQ2 = np.sqrt(2.0)
CLARABEL_SVEC_CAP = 4200       # largest per-block svec length for the IPM engine
SECTOR_DIM_CAP = 2500          # largest full dimension we sector-decompose


class SdpFailure(RuntimeError):
    pass


@dataclass
class SolveOpts:
    feas_tol: float = 1e-9
    gap_tol: float = 1e-7
    max_iters: int | None = None
    engine: str = "auto"       # auto | clarabel | scs
    use_symmetry: bool = True
    scs_eps: float | None = None
    time_limit: float = 1800.0
    verbose: bool = False


@dataclass
class LmiProblem:
    """Assembled level-n LMI data for one interaction term."""

    h: LocalHamiltonian
    n: int
    M0: DenseHermitian
    C: DenseHermitian
    restriction: np.ndarray | None = None
    sectors_lmi: list | None = None
    sectors_gauge: list | None = None
    semantic: bool = True

    @property
    def gauge_site_dim(self) -> int:
        return self.h.d ** (self.n - 1)

    @property
    def gauge_dim(self) -> int:
        """Number of independent Hermitian gauge coordinates (identity excluded)."""
        if self.restriction is not None:
            r = _restriction_isometry(self.restriction).shape[1]
            return r * r
        return self.gauge_site_dim**2 - 1

    @property
    def reduced(self) -> bool:
        return self.sectors_lmi is not None

    def basis(self, cap: int = 40000) -> list[DenseHermitian]:
        """Materialised gauge basis B_k = 1 (x) E_k - E_k (x) 1 (tests only)."""
        m = self.gauge_site_dim
        if m**2 * self.M0.dim**2 > cap**2:
            raise ValueError("basis too large to materialise densely")
        return [gauge_shift_op(el.op, self.h.d) for el in herm_basis(m)[1:]]

    def constraint_matrix(self, delta: float, Y: GaugeOperator) -> DenseHermitian:
        m = self.M0.mat + delta * self.C.mat + gauge_shift_op(Y.op, self.h.d).mat
        return DenseHermitian(m, check=False)

    def key(self) -> str:
        hsh = hashlib.sha256()
        hsh.update(np.ascontiguousarray(self.M0.mat).tobytes())
        hsh.update(np.ascontiguousarray(self.C.mat).tobytes())
        hsh.update(str(self.n).encode())
        return hsh.hexdigest()[:16]


@dataclass
class SdpSolution:
    delta: float
    Y: GaugeOperator | None
    rho: DenseHermitian | None
    primal_feas: float
    duality_gap: float
    status: str                # optimal | max_iters | infeasible_direction | numerical_failure
    iterations: int
    dual_value: float = np.nan
    lti_residual: float = np.nan
    rho_min_eig: float = np.nan
    normalization: float = np.nan
    engine: str = ""
    semantic: bool = True
    problem_key: str = ""

    @property
    def detected(self) -> bool:
        """A positive gap is detected at this level.

        Requires a (numerically) feasible primal point whose delta clears the
        residual infeasibility by a factor, at a semantically valid level;
        primal feasibility is what makes delta a bound, so optimality of the
        iterate is not required here.  Strict positivity claims go through
        the certification pipeline instead.
        """
        return bool(self.status in ("optimal", "max_iters")
                    and np.isfinite(self.delta) and self.semantic
                    and self.primal_feas <= 1e-6
                    and self.delta > 100 * max(self.primal_feas, 1e-12))


def build_lmi(h: LocalHamiltonian, n: int, restriction: np.ndarray | None = None,
              use_symmetry: bool = True) -> LmiProblem:
    """Assemble the level-n LMI for interaction term h.

    Below the semantic threshold n >= 2k+1 the problem is still well posed
    but its value is only an LMI optimum, not a gap bound; a warning is
    emitted and the flag recorded.  A declared on-site symmetry is used for
    sector reduction only after verifying that the term actually commutes
    with it, and never together with a gauge restriction.
    """
    g0 = generating_term(h, n, 0.0)
    if not g0.semantic:
        warnings.warn(f"n = {n} is below the semantic threshold 2k-1 = {2 * h.k - 1}; "
                      "the optimum is an LMI value, not a gap bound", stacklevel=2)
    space = SiteSpace(h.d, n)
    C = DenseHermitian(-embed_at(h.term, 1, space).mat, check=False)
    prob = LmiProblem(h=h, n=n, M0=g0.op, C=C, restriction=restriction,
                      semantic=g0.semantic)
    if (use_symmetry and restriction is None and h.symmetry is not None
            and h.d**n <= SECTOR_DIM_CAP
            and sym_mod.commutes_with_term(h.symmetry, h.term.mat, h.k, h.d)):
        prob.sectors_lmi = sym_mod.sectors(h.symmetry, h.d, n)
        prob.sectors_gauge = sym_mod.sectors(h.symmetry, h.d, n - 1)
    return prob


# ---------------------------------------------------------------------------
# svec packing (scaled triangular vectorisation; scs packs the lower
# triangle column-major, clarabel the upper triangle column-major)


def _pack_dense(M: np.ndarray, upper: bool) -> np.ndarray:
    d = M.shape[0]
    out = np.empty(d * (d + 1) // 2)
    pos = 0
    if upper:
        for c in range(d):
            seg = M[:c + 1, c].copy()
            seg[:-1] *= SQ2
            out[pos:pos + c + 1] = seg
            pos += c + 1
    else:
        for c in range(d):
            seg = M[c:, c].copy()
            seg[1:] *= SQ2
            out[pos:pos + d - c] = seg
            pos += d - c
    return out


def _unpack_dense(v: np.ndarray, d: int, upper: bool) -> np.ndarray:
    M = np.zeros((d, d))
    pos = 0
    if upper:
        for c in range(d):
            seg = v[pos:pos + c + 1].copy()
            pos += c + 1
            seg[:-1] /= SQ2
            M[:c + 1, c] = seg
            M[c, :c] = seg[:-1]
    else:
        for c in range(d):
            seg = v[pos:pos + d - c].copy()
            pos += d - c
            seg[1:] /= SQ2
            M[c:, c] = seg
            M[c, c + 1:] = seg[1:]
    return M


def _realify(M: np.ndarray) -> np.ndarray:
    re, im = np.real(M), np.imag(M)
    return np.block([[re, -im], [im, re]])


def _derealify(S: np.ndarray) -> np.ndarray:
    d = S.shape[0] // 2
    return (S[:d, :d] + S[d:, d:]) / 2 + 1j * (S[d:, :d] - S[:d, d:]) / 2


def _entry_svec_index(r: int, c: int, D: int, upper: bool) -> int:
    # (r, c) with r >= c for lower packing, r <= c for upper
    if upper:
        return c * (c + 1) // 2 + r
    return c * D - c * (c - 1) // 2 + (r - c)


# ---------------------------------------------------------------------------
# gauge coordinates


def _restriction_isometry(P: np.ndarray) -> np.ndarray:
    """Orthonormal basis of range(P) for a (near-)projector P."""
    w, v = np.linalg.eigh((P + P.conj().T) / 2)
    keep = w > 0.5
    return v[:, keep]


def _full_coords(m: int, complex_: bool):
    """Structural coordinates of the identity-excluded Hermitian gauge basis."""
    out = []
    for p in range(m):
        for q in range(p + 1, m):
            out.append(("sym", p, q))
            if complex_:
                out.append(("imag", p, q))
    for p in range(m - 1):
        out.append(("diag", p, p + 1))
    return out


def _restricted_coords(r: int, complex_: bool):
    out = [("sym", p, p) for p in range(r)]
    for p in range(r):
        for q in range(p + 1, r):
            out.append(("sym", p, q))
            if complex_:
                out.append(("imag", p, q))
    return out


def _coord_entries(kind: str, p: int, q: int, m: int, d: int):
    """Unordered-pair entries (a, b, val) of B = 1 (x) E - E (x) 1, a <= b.

    Row/column indices follow kron conventions: 1 (x) E couples (i*m+p,
    i*m+q), E (x) 1 couples (p*d+i, q*d+i), i ranging over the single site.
    """
    out = []
    for i in range(d):
        if kind == "sym":
            out.append((i * m + p, i * m + q, +1.0 + 0j))
            out.append((p * d + i, q * d + i, -1.0 + 0j))
        elif kind == "imag":
            # E = -i e_pq + i e_qp, so E[p, q] = -i
            out.append((i * m + p, i * m + q, 0.0 - 1j))
            out.append((p * d + i, q * d + i, 0.0 + 1j))
        else:  # diagonal difference e_pp - e_qq with q = p+1
            out.append((i * m + p, i * m + p, +1.0 + 0j))
            out.append((i * m + q, i * m + q, -1.0 + 0j))
            out.append((p * d + i, p * d + i, -1.0 + 0j))
            out.append((q * d + i, q * d + i, +1.0 + 0j))
    return out


def _entries_to_svec(entries, D: int, complex_: bool, upper: bool):
    """Map unordered-pair entries of a Hermitian matrix to svec (idx, val).

    For complex input the entries address the realified symmetric matrix of
    size 2D: Re at (a, b) and (a+D, b+D), Im at (a+D, b) / (b+D, a).
    """
    dim = 2 * D if complex_ else D
    idxs, vals = [], []

    def push(a, b, v):
        if v == 0.0:
            return
        r, c = (a, b) if a >= b else (b, a)
        if upper:
            r, c = c, r
        idxs.append(_entry_svec_index(r, c, dim, upper))
        vals.append(v if a == b else v * SQ2)

    for (a, b, v) in entries:
        if not complex_:
            push(a, b, v.real)
            continue
        re, im = v.real, v.imag
        push(a, b, re)
        push(a + D, b + D, re)
        if a != b and im != 0.0:
            push(a + D, b, +im)
            push(b + D, a, -im)
    return idxs, vals


# ---------------------------------------------------------------------------
# conic assembly


class _ConicLmi:
    """Engine-agnostic conic data: max delta s.t. blocks of M(delta, y) PSD."""

    def __init__(self, problem: LmiProblem):
        self.problem = problem
        self.d = problem.h.d
        self.m = problem.gauge_site_dim

        def iscomplex(a):
            return bool(np.iscomplexobj(a) and np.abs(np.imag(a)).max(initial=0.0) > 0)

        self.complex_problem = iscomplex(problem.M0.mat) or iscomplex(problem.C.mat)
        self.mode = "full"
        self.V = None
        if problem.restriction is not None:
            v = _restriction_isometry(problem.restriction)
            if v.shape[1] < self.m:
                self.mode = "restricted"
                self.V = v
                self.complex_problem = self.complex_problem or iscomplex(v)
        elif problem.reduced:
            self.mode = "reduced"
            for sec in problem.sectors_lmi + problem.sectors_gauge:
                self.complex_problem = self.complex_problem or iscomplex(sec.basis)
        self.coords = self._gauge_coord_list()
        self.block_sizes_raw = ([sec.mult for sec in problem.sectors_lmi]
                                if self.mode == "reduced" else [problem.M0.dim])
        mult = 2 if self.complex_problem else 1
        self.block_dims = [s * mult for s in self.block_sizes_raw]

    # -- coordinates -------------------------------------------------------
    def _gauge_coord_list(self):
        if self.mode == "reduced":
            coords = []
            n_diag = sum(sec.mult for sec in self.problem.sectors_gauge)
            diag_seen = 0
            for si, sec in enumerate(self.problem.sectors_gauge):
                for p in range(sec.mult):
                    for q in range(p, sec.mult):
                        if p == q:
                            diag_seen += 1
                            if diag_seen == n_diag:
                                continue  # global identity direction acts as zero
                            coords.append((si, "sym", p, q))
                        else:
                            coords.append((si, "sym", p, q))
                            if self.complex_problem:
                                coords.append((si, "imag", p, q))
            return coords
        if self.mode == "restricted":
            return [("restr",) + c for c in
                    _restricted_coords(self.V.shape[1], self.complex_problem)]
        return _full_coords(self.m, self.complex_problem)

    def coord_Y(self, coord) -> np.ndarray:
        """Full-space gauge matrix generated by one coordinate."""
        if self.mode == "reduced":
            si, kind, p, q = coord
            sec = self.problem.sectors_gauge[si]
            y = sec.copy_columns(p) @ sec.copy_columns(q).conj().T
            if kind == "imag":
                y = -1j * y
            if p != q or kind == "imag":
                y = y + y.conj().T
            return y
        if self.mode == "restricted":
            _, kind, p, q = coord
            y = np.outer(self.V[:, p], self.V[:, q].conj())
            if kind == "imag":
                y = -1j * y
            if p != q or kind == "imag":
                y = y + y.conj().T
            return y
        kind, p, q = coord
        y = np.zeros((self.m, self.m), dtype=complex)
        if kind == "sym":
            y[p, q] = y[q, p] = 1.0
        elif kind == "imag":
            y[p, q] = -1j
            y[q, p] = 1j
        else:
            y[p, p] = 1.0
            y[q, q] = -1.0
        return y

    # -- assembly ----------------------------------------------------------
    def _lmi_blocks_of(self, M: np.ndarray) -> list[np.ndarray]:
        if self.mode != "reduced":
            return [M]
        return [sec.hw.conj().T @ M @ sec.hw for sec in self.problem.sectors_lmi]

    def _pack_blocks(self, M: np.ndarray, upper: bool) -> np.ndarray:
        segs = []
        for b in self._lmi_blocks_of(M):
            segs.append(_pack_dense(_realify(b) if self.complex_problem else np.real(b),
                                    upper))
        return np.concatenate(segs)

    def pack(self, upper: bool):
        """Build (A, b, c) with variable order [gauge coords..., delta]."""
        prob = self.problem
        b_vec = self._pack_blocks(prob.M0.mat, upper)
        rows, cols, vals = [], [], []
        if self.mode == "full":
            D = prob.M0.dim
            for ci, (kind, p, q) in enumerate(self.coords):
                entries = _coord_entries(kind, p, q, self.m, self.d)
                idxs, vv = _entries_to_svec(entries, D, self.complex_problem, upper)
                rows.extend(idxs)
                cols.extend([ci] * len(idxs))
                vals.extend([-v for v in vv])
        else:
            eye = np.eye(self.d)
            for ci, coord in enumerate(self.coords):
                y = self.coord_Y(coord)
                bmat = np.kron(eye, y) - np.kron(y, eye)
                col = self._pack_blocks(bmat, upper)
                nz = np.nonzero(col)[0]
                rows.extend(nz.tolist())
                cols.extend([ci] * len(nz))
                vals.extend((-col[nz]).tolist())
        ndelta = len(self.coords)
        col_c = self._pack_blocks(prob.C.mat, upper)
        nz = np.nonzero(col_c)[0]
        rows.extend(nz.tolist())
        cols.extend([ndelta] * len(nz))
        vals.extend((-col_c[nz]).tolist())
        nvar = ndelta + 1
        total = int(sum(D * (D + 1) // 2 for D in self.block_dims))
        A = sp.csc_matrix((vals, (rows, cols)), shape=(total, nvar))
        A.sum_duplicates()
        c_vec = np.zeros(nvar)
        c_vec[-1] = -1.0
        return A, b_vec, c_vec

    # -- reconstruction ----------------------------------------------------
    def gauge_from_x(self, x: np.ndarray) -> GaugeOperator:
        if self.mode == "full":
            y = np.zeros((self.m, self.m), dtype=complex)
            for ci, (kind, p, q) in enumerate(self.coords):
                v = x[ci]
                if v == 0.0:
                    continue
                if kind == "sym":
                    y[p, q] += v
                    y[q, p] += v
                elif kind == "imag":
                    y[p, q] += -1j * v
                    y[q, p] += 1j * v
                else:
                    y[p, p] += v
                    y[q, q] -= v
        else:
            y = np.zeros((self.m, self.m), dtype=complex)
            for ci, coord in enumerate(self.coords):
                if x[ci] != 0.0:
                    y = y + x[ci] * self.coord_Y(coord)
        if np.abs(y.imag).max(initial=0.0) == 0.0:
            y = y.real
        return GaugeOperator(m=self.problem.n - 1, op=DenseHermitian(y, check=False))

    def rho_from_dual(self, yvec: np.ndarray, upper: bool) -> DenseHermitian:
        svec_lens = [D * (D + 1) // 2 for D in self.block_dims]
        offsets = np.concatenate([[0], np.cumsum(svec_lens)]).astype(int)
        mats = []
        for bi, D in enumerate(self.block_dims):
            s = _unpack_dense(yvec[offsets[bi]:offsets[bi + 1]], D, upper)
            mats.append(_derealify(s) if self.complex_problem else s)
        if self.mode != "reduced":
            rho = mats[0]
        else:
            dim = self.problem.M0.dim
            rho = np.zeros((dim, dim), dtype=complex)
            for sec, smat in zip(self.problem.sectors_lmi, mats):
                r = sec.irrep_dim
                w = sec.basis.reshape(dim, sec.mult, r)
                rho += np.einsum("amr,mn,bnr->ab", w, smat / r, w.conj())
        rho = (rho + rho.conj().T) / 2
        if np.iscomplexobj(rho) and np.abs(rho.imag).max(initial=0.0) == 0.0:
            rho = rho.real
        return DenseHermitian(rho, check=False)


# ---------------------------------------------------------------------------
# engines


def _run_clarabel(A, b, c, dims, opts: SolveOpts):
    import clarabel

    settings = clarabel.DefaultSettings()
    settings.verbose = opts.verbose
    settings.tol_gap_abs = 1e-9
    settings.tol_gap_rel = 1e-9
    settings.tol_feas = 1e-9
    if opts.max_iters:
        settings.max_iter = opts.max_iters
    if hasattr(settings, "time_limit"):
        settings.time_limit = opts.time_limit
    cones = [clarabel.PSDTriangleConeT(D) for D in dims]
    solver = clarabel.DefaultSolver(sp.csc_matrix((A.shape[1], A.shape[1])), c, A, b,
                                    cones, settings)
    sol = solver.solve()
    status = str(sol.status)
    mapping = {
        "Solved": "candidate", "AlmostSolved": "candidate",
        "PrimalInfeasible": "infeasible", "AlmostPrimalInfeasible": "infeasible",
        "DualInfeasible": "failure", "AlmostDualInfeasible": "failure",
        "MaxIterations": "max_iters", "MaxTime": "max_iters",
    }
    flag = mapping.get(status, "failure")
    x = np.asarray(sol.x) if sol.x is not None else np.zeros(A.shape[1])
    z = np.asarray(sol.z) if sol.z is not None else np.zeros(A.shape[0])
    return x, z, flag, int(sol.iterations)


def _run_scs(A, b, c, dims, opts: SolveOpts):
    import scs

    eps = opts.scs_eps or min(opts.gap_tol, 1e-7)
    solver = scs.SCS(dict(A=A, b=b, c=c), dict(s=list(dims)),
                     eps_abs=eps, eps_rel=eps, eps_infeas=1e-9,
                     max_iters=opts.max_iters or 200000, verbose=opts.verbose,
                     time_limit_secs=opts.time_limit)
    sol = solver.solve()
    status = sol["info"]["status"]
    if status == "solved":
        flag = "candidate"
    elif status.startswith("solved"):
        flag = "max_iters"
    elif "infeasible" in status:
        flag = "infeasible"
    else:
        flag = "failure"
    return sol["x"], sol["y"], flag, int(sol["info"]["iter"])


def _choose_engine(dims, opts: SolveOpts) -> str:
    if opts.engine != "auto":
        return opts.engine
    if max(D * (D + 1) // 2 for D in dims) <= CLARABEL_SVEC_CAP:
        return "clarabel"
    return "scs"


# ---------------------------------------------------------------------------
# public solvers


def _unreduced_copy(problem: LmiProblem) -> LmiProblem:
    return LmiProblem(h=problem.h, n=problem.n, M0=problem.M0, C=problem.C,
                      restriction=problem.restriction, semantic=problem.semantic)


def _unreduced_svec(problem: LmiProblem) -> int:
    d = problem.M0.dim
    if np.iscomplexobj(problem.M0.mat) or np.iscomplexobj(problem.C.mat):
        d *= 2
    return d * (d + 1) // 2


def solve_lti(problem: LmiProblem, opts: SolveOpts | None = None) -> SdpSolution:
    """Solve the level-n LTI gap SDP.

    Returns the optimal delta together with the gauge operator, the dual
    marginal, and explicitly computed residuals.  ``status == 'optimal'``
    guarantees primal_feas <= feas_tol and duality_gap <= gap_tol, both
    measured on the reconstructed full-space solution rather than trusted
    from the engine.

    Sector reduction is engaged only when the unreduced cone is too large
    for the interior-point engine; if a reduced solve breaks down, the
    unreduced formulation is retried before reporting failure.
    """
    opts = opts or SolveOpts()
    unreduced_small = _unreduced_svec(problem) <= CLARABEL_SVEC_CAP
    best = None

    def better(a, b):
        if a is None:
            return b
        if b is None:
            return a
        order = {"optimal": 0, "max_iters": 1, "infeasible_direction": 2,
                 "numerical_failure": 3}
        ka = (order[a.status], max(a.primal_feas, 0) if np.isfinite(a.primal_feas) else 1e9)
        kb = (order[b.status], max(b.primal_feas, 0) if np.isfinite(b.primal_feas) else 1e9)
        return a if ka <= kb else b

    if problem.reduced:
        sol = _solve_lti_once(problem, opts)
        if sol.status in ("optimal", "infeasible_direction"):
            return sol
        best = sol
        # retry without reduction when that stays on the cheap engine, or
        # when the reduced solve broke down outright
        if unreduced_small or sol.status == "numerical_failure":
            best = better(best, _solve_lti_once(_unreduced_copy(problem), opts))
        return best
    return _solve_lti_once(problem, opts)


def _solve_lti_once(problem: LmiProblem, opts: SolveOpts) -> SdpSolution:
    conic = _ConicLmi(problem)
    engine = _choose_engine(conic.block_dims, opts)
    upper = engine == "clarabel"
    A, b, c = conic.pack(upper=upper)
    runner = _run_clarabel if engine == "clarabel" else _run_scs
    x, z, flag, iters = runner(A, b, c, conic.block_dims, opts)

    key = problem.key()
    if flag == "infeasible":
        return SdpSolution(delta=float("-inf"), Y=None, rho=None, primal_feas=np.nan,
                           duality_gap=np.nan, status="infeasible_direction",
                           iterations=iters, engine=engine, semantic=problem.semantic,
                           problem_key=key)
    if flag == "failure":
        return SdpSolution(delta=np.nan, Y=None, rho=None, primal_feas=np.nan,
                           duality_gap=np.nan, status="numerical_failure",
                           iterations=iters, engine=engine, semantic=problem.semantic,
                           problem_key=key)

    delta = float(x[-1])
    Y = conic.gauge_from_x(x)
    rho = conic.rho_from_dual(z, upper=upper)

    # full-space residuals, independent of the engine's own reporting
    delta, lam_min = _polish_delta(problem, delta, Y, opts.feas_tol)
    primal_feas = max(0.0, -lam_min)

    h1 = -problem.C.mat
    nu = float(np.real(np.trace(rho.mat @ h1)))
    if nu > 1e-300:
        rho = DenseHermitian(rho.mat / nu, check=False)
    dual_value = float(np.real(np.trace(rho.mat @ problem.M0.mat)))
    lti_res = _lti_residual(rho.mat, problem.h.d, conic.V)
    rho_min = float(np.linalg.eigvalsh(rho.mat)[0])
    gap = abs(dual_value - delta)

    # 'optimal' is only claimed when the explicitly measured residuals meet
    # the tolerances; otherwise the best iterate is returned as 'max_iters'.
    if (flag == "candidate" and primal_feas <= opts.feas_tol and gap <= opts.gap_tol
            and rho_min >= -1e-8 and lti_res <= 1e-6):
        status = "optimal"
    else:
        status = "max_iters"
    return SdpSolution(delta=delta, Y=Y, rho=rho, primal_feas=primal_feas,
                       duality_gap=gap, status=status, iterations=iters,
                       dual_value=dual_value, lti_residual=lti_res,
                       rho_min_eig=rho_min, normalization=nu, engine=engine,
                       semantic=problem.semantic, problem_key=key)


def _polish_delta(problem: LmiProblem, delta: float, Y: GaugeOperator,
                  feas_tol: float, max_steps: int = 15):
    """Back delta off until M(delta, Y) is feasible at the solver's gauge.

    Decreasing delta adds a positive multiple of the embedded h_1, so a few
    Newton steps on the most negative eigenpair restore feasibility at a cost
    of O(primal infeasibility) in the objective.  Directions inside the
    kernel of h_1 cannot be repaired this way and are left to the residual.
    """
    h1 = -problem.C.mat
    target = 0.5 * feas_tol
    slope_min = 1e-2 * problem.h.gamma2  # below this the direction is kernel-locked
    orig = None
    cur = delta
    for _ in range(max_steps):
        m = problem.constraint_matrix(cur, Y).mat
        w, v = np.linalg.eigh(m)
        lam = float(w[0])
        if orig is None:
            orig = (cur, lam)
        if lam >= -target:
            return cur, lam
        vec = v[:, 0]
        slope = float(np.real(vec.conj() @ (h1 @ vec)))
        if slope <= slope_min:
            break
        step = 1.02 * (-lam) / slope
        if step > max(1e4 * (-orig[1]), 1e-6):
            break  # runaway step: the residual is not delta-repairable
        cur = cur - step
    # polishing failed to reach the target; keep the solver's own point
    return orig


def _lti_residual(rho: np.ndarray, d: int, V: np.ndarray | None = None) -> float:
    """|| Tr_1 rho - Tr_n rho ||_F, projected to range(V) for restricted solves."""
    dim = rho.shape[0]
    m = dim // d
    tr1 = np.einsum("abad->bd", rho.reshape(d, m, d, m))
    trn = np.einsum("abcb->ac", rho.reshape(m, d, m, d))
    dev = tr1 - trn
    if V is not None:
        dev = V.conj().T @ dev @ V
    return float(np.linalg.norm(dev))


def lti_gap(h: LocalHamiltonian, n: int, opts: SolveOpts | None = None,
            restriction: np.ndarray | None = None) -> SdpSolution:
    """Convenience wrapper: build the level-n problem for h and solve it."""
    opts = opts or SolveOpts()
    prob = build_lmi(h, n, restriction=restriction, use_symmetry=opts.use_symmetry)
    return solve_lti(prob, opts)


def solution_term(problem: LmiProblem, sol: SdpSolution) -> GeneratingTerm:
    """The generating term q_n realised by a solution (its constraint matrix)."""
    g = generating_term(problem.h, problem.n, sol.delta)
    return lti_shift(g, sol.Y, d=problem.h.d)


def solve_dual_lti(h: LocalHamiltonian, n: int, opts: SolveOpts | None = None):
    """Solve the dual (marginal) form through an independent modelling route.

    Minimises Tr[rho (h1^2 + sum_j {h1, hj})] over rho >= 0 with matching
    left/right (n-1)-site marginals and Tr(rho h1) = 1.  Built with cvxpy so
    that primal/dual agreement crosses two independent formulations.
    """
    import cvxpy as cp

    opts = opts or SolveOpts()
    D = h.d**n
    if D > 1500:
        raise ValueError(f"dual solve capped at dimension 1500, got {D}")
    space = SiteSpace(h.d, n)
    kop = generating_term(h, n, 0.0).op.mat
    h1 = embed_at(h.term, 1, space).mat
    m = h.d ** (n - 1)
    complex_ = np.iscomplexobj(kop) or np.iscomplexobj(h1)
    if complex_:
        rho = cp.Variable((D, D), hermitian=True)
        norm_expr = cp.real(cp.trace(rho @ h1))
        obj_expr = cp.real(cp.trace(rho @ kop))
    else:
        rho = cp.Variable((D, D), symmetric=True)
        norm_expr = cp.trace(rho @ h1)
        obj_expr = cp.trace(rho @ kop)
    cons = [rho >> 0,
            cp.partial_trace(rho, [h.d, m], 0) == cp.partial_trace(rho, [m, h.d], 1),
            norm_expr == 1]
    prob = cp.Problem(cp.Minimize(obj_expr), cons)
    try:
        prob.solve(solver=cp.CLARABEL, verbose=opts.verbose)
    except cp.SolverError:
        prob.solve(solver=cp.SCS, eps=opts.scs_eps or 1e-9, verbose=opts.verbose)
    if prob.value is None or rho.value is None:
        raise SdpFailure(f"dual solve failed with status {prob.status}")
    return float(prob.value), DenseHermitian(rho.value, check=False)


def check_slackness(sol: SdpSolution, q: GeneratingTerm) -> float:
    """Frobenius norm of rho * q_n; vanishes at a complementary optimum."""
    if sol.rho is None:
        raise ValueError("solution carries no dual point")
    return float(np.linalg.norm(sol.rho.mat @ q.op.mat))
