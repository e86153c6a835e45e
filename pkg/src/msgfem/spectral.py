"""Per-subdomain generalized eigenproblems.

Two formulations are provided:

* the mixed saddle-point formulation that enforces local A-harmonicity
  through a Lagrange multiplier block, posed on the oversampled subdomain
  with the partition-of-unity Gram matrix on the right-hand side, and
* the classic formulation posed directly in the local FE space of the
  overlapping subdomain, with no constraint and no oversampling.

With (B1, B2, B3) the interior/Neumann, artificial-boundary and Dirichlet
DoF classes of the oversampled subdomain, the saddle operator is

    K = [[A11, A12, A11],        M = [[B11, 0, 0],
         [A21, A22, A21],             [0,   0, 0],
         [A11, A12, 0  ]]             [0,   0, 0]]

over the unknowns (phi_1, phi_2, multiplier), where B11 is the
PoU-weighted Gram matrix D_mu A D_mu sliced to B1.  B3 rows and columns
are excluded entirely: local functions vanish on the external Dirichlet
boundary and eigenvectors are padded with zeros there.

Up to a configurable size the pencil is solved densely by QZ, filtering
the infinite eigenvalues of the rank-deficient right-hand side by |beta|;
larger systems use shift-invert Lanczos iteration with a small negative
shift (the shifted operator is nonsingular because every kernel vector of
K carries partition-of-unity mass).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DENSE_CUTOFF_DEFAULT = 3000
BETA_TOL = 1e-10  # |beta| threshold marking infinite QZ eigenvalues
ZERO_RATIO = 1e-10  # lambda is "zero" iff <= ZERO_RATIO * first positive
AHARMONIC_TOL = 1e-8


class EigensolverError(RuntimeError):
    pass


@dataclass
class GevpBlocks:
    """Block data of the A-harmonic saddle eigenproblem on one subdomain."""

    subdomain: int
    a11: sp.csr_matrix
    a12: sp.csr_matrix
    a22: sp.csr_matrix
    b11: sp.csr_matrix
    b1: np.ndarray  # local DoF indices (into the subdomain's DoF list)
    b2: np.ndarray
    b3: np.ndarray
    n_local: int
    a_norm: float
    a_local: sp.csr_matrix = field(repr=False, default=None)
    mu: np.ndarray = field(repr=False, default=None)

    @property
    def n1(self) -> int:
        return self.b1.size

    @property
    def n2(self) -> int:
        return self.b2.size

    @property
    def saddle_size(self) -> int:
        return 2 * self.n1 + self.n2

    def saddle_operators(self):
        k = sp.bmat(
            [
                [self.a11, self.a12, self.a11],
                [self.a12.T, self.a22, self.a12.T],
                [self.a11, self.a12, None],
            ],
            format="csc",
        )
        z1 = sp.csr_matrix((self.n1, self.n1))
        z2 = sp.csr_matrix((self.n2, self.n2))
        m = sp.block_diag([self.b11, z2, z1], format="csc")
        return k, m


@dataclass
class ClassicGevp:
    """Unconstrained pencil (A, D_mu A D_mu) on the overlapping subdomain."""

    subdomain: int
    k: sp.csr_matrix
    m: sp.csr_matrix
    kept: np.ndarray  # local indices of non-Dirichlet DoFs
    n_local: int
    a_norm: float


@dataclass
class LocalSpectralBasis:
    """Eigenpairs of one subdomain, ascending, padded with zeros on B3.

    ``selected`` is the number of retained modes m_j and
    ``next_eigenvalue`` the first eigenvalue left out.
    """

    subdomain: int
    eigenvalues: np.ndarray
    vectors: np.ndarray  # (n_local, n_computed)
    aharmonic_residuals: np.ndarray
    gevp_residuals: np.ndarray
    selected: int
    next_eigenvalue: float
    n_zero: int

    @property
    def selected_vectors(self) -> np.ndarray:
        return self.vectors[:, : self.selected]


def count_zero_eigenvalues(lams: np.ndarray) -> int:
    """Number of leading eigenvalues that are zero at the scale-free
    tolerance: lambda <= ZERO_RATIO times the first positive eigenvalue."""
    lams = np.maximum(np.asarray(lams, dtype=float), 0.0)
    for s in range(lams.size - 1, 0, -1):
        if lams[s] > 0 and lams[s - 1] <= ZERO_RATIO * lams[s]:
            return s
    return 0


def select_modes(eigenvalues: np.ndarray, threshold: float):
    """Smallest m such that 1/lambda^(m+1) <= threshold.

    Zero eigenvalues (scale-free tolerance) are always selected.  Raises
    when every computed mode is above the threshold.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    lams = np.asarray(eigenvalues, dtype=float)
    n_zero = count_zero_eigenvalues(lams)
    inv = np.full(lams.size, np.inf)
    pos = np.arange(lams.size) >= n_zero
    inv[pos] = 1.0 / np.maximum(lams[pos], np.finfo(float).tiny)
    below = np.flatnonzero(inv <= threshold)
    if below.size == 0:
        raise EigensolverError(
            f"all {lams.size} computed modes lie above threshold {threshold:g}; "
            "request more modes"
        )
    m = int(below[0])
    return m, float(lams[m])


def assemble_aharmonic_gevp(
    subdomain_index: int,
    a_local: sp.csr_matrix,
    b1: np.ndarray,
    b2: np.ndarray,
    b3: np.ndarray,
    mu: np.ndarray,
) -> GevpBlocks:
    """Slice the restricted operator into the saddle blocks.

    ``a_local`` is the raw restriction of the bilinear form to the
    oversampled subdomain; ``mu`` the partition-of-unity weights on its
    DoFs.  B11 is realized as D_mu A D_mu sliced to B1, so rows where the
    weights vanish (the oversampling buffer) are zero.
    """
    if b1.size == 0:
        raise ValueError("B1 is empty: subdomain has no interior DoFs")
    a = a_local.tocsr()
    dmu = sp.diags(mu)
    weighted = (dmu @ a @ dmu).tocsr()
    blocks = GevpBlocks(
        subdomain=subdomain_index,
        a11=a[np.ix_(b1, b1)].tocsr(),
        a12=a[np.ix_(b1, b2)].tocsr(),
        a22=a[np.ix_(b2, b2)].tocsr(),
        b11=weighted[np.ix_(b1, b1)].tocsr(),
        b1=b1,
        b2=b2,
        b3=b3,
        n_local=a.shape[0],
        a_norm=float(abs(a).sum(axis=1).max()),
        a_local=a,
        mu=mu,
    )
    return blocks


def assemble_classic_gevp(
    subdomain_index: int,
    a_local: sp.csr_matrix,
    mu: np.ndarray,
    dirichlet_local: np.ndarray,
) -> ClassicGevp:
    """Pencil of the unconstrained local eigenproblem on the o-overlap
    subdomain; global Dirichlet DoFs are removed (eigenvectors are padded
    with zeros there)."""
    a = a_local.tocsr()
    n = a.shape[0]
    kept = np.setdiff1d(np.arange(n), dirichlet_local)
    dmu = sp.diags(mu)
    m_full = (dmu @ a @ dmu).tocsr()
    return ClassicGevp(
        subdomain=subdomain_index,
        k=a[np.ix_(kept, kept)].tocsr(),
        m=m_full[np.ix_(kept, kept)].tocsr(),
        kept=kept,
        n_local=n,
        a_norm=float(abs(a).sum(axis=1).max()),
    )


def _dense_pencil_eigs(k: np.ndarray, m: np.ndarray, n_want: int):
    """Finite eigenpairs of the (K, M) pencil by QZ, ascending."""
    alpha, beta, vr = sla.eig(k, m, homogeneous_eigvals=True, right=True)
    scale = np.hypot(np.abs(alpha), np.abs(beta))
    scale[scale == 0] = 1.0
    finite = np.abs(beta) / scale > BETA_TOL
    lam = np.full(alpha.shape, np.inf, dtype=complex)
    lam[finite] = alpha[finite] / beta[finite]
    real = finite & (np.abs(lam.imag) <= 1e-8 * np.maximum(np.abs(lam.real), 1.0))
    idx = np.flatnonzero(real)
    if idx.size == 0:
        raise EigensolverError("dense QZ found no finite eigenvalues")
    idx = idx[np.argsort(lam[idx].real)][:n_want]
    return lam[idx].real.copy(), vr[:, idx].real.copy()


def _sparse_pencil_eigs(k, m, n_want: int, sigma: float):
    n = k.shape[0]
    n_want = min(n_want, n - 2)
    if n_want < 1:
        raise EigensolverError("system too small for shift-invert iteration")
    v0 = np.full(n, 1.0 / np.sqrt(n))
    try:
        lam, vec = spla.eigsh(
            k.tocsc(), k=n_want, M=m.tocsc(), sigma=sigma, which="LM", v0=v0
        )
    except Exception as exc:  # ARPACK / factorization breakdown
        raise EigensolverError(f"shift-invert eigensolver failed: {exc}") from exc
    order = np.argsort(lam)
    return lam[order], vec[:, order]


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    for j in range(vectors.shape[1]):
        col = vectors[:, j]
        i = int(np.argmax(np.abs(col)))
        if col[i] < 0:
            vectors[:, j] = -col
    return vectors


def _b_orthonormalize(vectors: np.ndarray, b_apply) -> np.ndarray:
    """Modified Gram-Schmidt in the B inner product, in eigenvalue order."""
    q = vectors.copy()
    bq = np.empty_like(q)
    for i in range(q.shape[1]):
        v = q[:, i]
        for j in range(i):
            v = v - (bq[:, j] @ v) * q[:, j]
        bv = b_apply(v)
        nrm = np.sqrt(max(v @ bv, 0.0))
        if nrm > 0:
            v = v / nrm
            bv = bv / nrm
        q[:, i] = v
        bq[:, i] = bv
    return q


def solve_aharmonic_gevp(
    blocks: GevpBlocks,
    n_modes: int | None = None,
    threshold: float | None = None,
    dense_cutoff: int = DENSE_CUTOFF_DEFAULT,
) -> LocalSpectralBasis:
    """Solve the mixed saddle eigenproblem and select modes.

    Exactly one of ``n_modes`` (retain that many lowest modes) and
    ``threshold`` (retain modes until 1/lambda falls below it) must be
    given.  Returned eigenvectors are the primal parts, padded with zeros
    on B3, B-orthonormalized, with the multiplier discarded; the
    A-harmonic constraint residual of every stored vector is verified and,
    if an eigensolver left it above tolerance, repaired by re-extending
    the interior part harmonically.
    """
    if (n_modes is None) == (threshold is None):
        raise ValueError("give exactly one of n_modes / threshold")
    if blocks.n2 == 0:
        raise EigensolverError(
            f"subdomain {blocks.subdomain}: no artificial boundary DoFs "
            "(oversampling saturates the domain), the A-harmonic space is trivial"
        )
    k_sp, m_sp = blocks.saddle_operators()
    sigma = -1e-8 * blocks.a11.diagonal().sum() / blocks.n1
    n_avail = blocks.n2  # dimension of the discrete A-harmonic space

    want = (n_modes + 1) if n_modes is not None else min(max(30, 8), n_avail)
    want = min(max(want, 1), n_avail)
    dense = blocks.saddle_size <= dense_cutoff

    while True:
        if dense:
            lam, xs = _dense_pencil_eigs(
                k_sp.toarray(), m_sp.toarray(), n_want=n_avail
            )
        else:
            lam, xs = _sparse_pencil_eigs(k_sp, m_sp, want, sigma)
        if n_modes is not None and lam.size < n_modes + 1:
            if not dense and want < n_avail:
                want = min(n_avail, max(want * 2, n_modes + 1))
                continue
            raise EigensolverError(
                f"subdomain {blocks.subdomain}: only {lam.size} finite modes "
                f"available, {n_modes}+1 requested"
            )
        if threshold is not None and lam.size:
            inv_last = np.inf if lam[-1] <= 0 else 1.0 / lam[-1]
            if inv_last > threshold and not dense and want < n_avail:
                want = min(n_avail, want * 2)
                continue
        break

    phi = np.zeros((blocks.n_local, lam.size))
    phi[blocks.b1] = xs[: blocks.n1]
    phi[blocks.b2] = xs[blocks.n1 : blocks.n1 + blocks.n2]
    phi = _fix_signs(phi)

    # constraint residual, with harmonic re-extension as a fallback
    lu11 = None
    res = np.empty(lam.size)
    for i in range(lam.size):
        res[i] = _aharmonic_residual(blocks, phi[:, i])
        if res[i] > AHARMONIC_TOL:
            if lu11 is None:
                lu11 = spla.splu(blocks.a11.tocsc())
            phi[blocks.b1, i] = -lu11.solve(blocks.a12 @ phi[blocks.b2, i])
            res[i] = _aharmonic_residual(blocks, phi[:, i])

    gevp_res = _pencil_residuals(k_sp, m_sp, lam, xs)

    dmu = blocks.mu
    a = blocks.a_local

    def b_apply(v):
        return dmu * (a @ (dmu * v))

    phi = _b_orthonormalize(phi, b_apply)
    for i in range(lam.size):  # re-check: orthonormalization mixes clusters
        res[i] = max(res[i], _aharmonic_residual(blocks, phi[:, i]))

    if n_modes is not None:
        m_sel, lam_next = n_modes, float(lam[n_modes])
    else:
        m_sel, lam_next = select_modes(lam, threshold)
    return LocalSpectralBasis(
        subdomain=blocks.subdomain,
        eigenvalues=lam,
        vectors=phi,
        aharmonic_residuals=res,
        gevp_residuals=gevp_res,
        selected=m_sel,
        next_eigenvalue=lam_next,
        n_zero=count_zero_eigenvalues(lam),
    )


def _aharmonic_residual(blocks: GevpBlocks, phi_full: np.ndarray) -> float:
    r = blocks.a11 @ phi_full[blocks.b1] + blocks.a12 @ phi_full[blocks.b2]
    nrm = np.linalg.norm(phi_full)
    if nrm == 0:
        return 0.0
    return float(np.linalg.norm(r) / (blocks.a_norm * nrm))


def _pencil_residuals(k, m, lam, xs) -> np.ndarray:
    k_norm = float(abs(k).sum(axis=1).max())
    m_norm = float(abs(m).sum(axis=1).max()) or 1.0
    out = np.empty(lam.size)
    for i in range(lam.size):
        x = xs[:, i]
        r = k @ x - lam[i] * (m @ x)
        out[i] = np.linalg.norm(r) / (
            (k_norm + abs(lam[i]) * m_norm) * np.linalg.norm(x)
        )
    return out


def solve_classic_gevp(
    gevp: ClassicGevp,
    n_modes: int | None = None,
    threshold: float | None = None,
    dense_cutoff: int = DENSE_CUTOFF_DEFAULT,
) -> LocalSpectralBasis:
    """Solve the unconstrained pencil on the overlapping subdomain."""
    if (n_modes is None) == (threshold is None):
        raise ValueError("give exactly one of n_modes / threshold")
    n = gevp.kept.size
    sigma = -1e-8 * gevp.k.diagonal().sum() / n
    n_avail = n - 1
    want = (n_modes + 1) if n_modes is not None else min(30, n_avail)
    want = min(max(want, 1), n_avail)
    dense = n <= dense_cutoff

    while True:
        if dense:
            lam, xs = _dense_pencil_eigs(gevp.k.toarray(), gevp.m.toarray(), n_avail)
        else:
            lam, xs = _sparse_pencil_eigs(gevp.k, gevp.m, want, sigma)
        if n_modes is not None and lam.size < n_modes + 1:
            if not dense and want < n_avail:
                want = min(n_avail, max(want * 2, n_modes + 1))
                continue
            raise EigensolverError(
                f"subdomain {gevp.subdomain}: only {lam.size} finite modes "
                f"available, {n_modes}+1 requested"
            )
        if threshold is not None and lam.size:
            inv_last = np.inf if lam[-1] <= 0 else 1.0 / lam[-1]
            if inv_last > threshold and not dense and want < n_avail:
                want = min(n_avail, want * 2)
                continue
        break

    phi = np.zeros((gevp.n_local, lam.size))
    phi[gevp.kept] = xs
    phi = _fix_signs(phi)
    gevp_res = _pencil_residuals(gevp.k, gevp.m, lam, xs)

    m_mat = gevp.m

    def b_apply(v):
        out = np.zeros_like(v)
        out[gevp.kept] = m_mat @ v[gevp.kept]
        return out

    phi = _b_orthonormalize(phi, b_apply)

    if n_modes is not None:
        m_sel, lam_next = n_modes, float(lam[n_modes])
    else:
        m_sel, lam_next = select_modes(lam, threshold)
    return LocalSpectralBasis(
        subdomain=gevp.subdomain,
        eigenvalues=lam,
        vectors=phi,
        aharmonic_residuals=np.full(lam.size, np.nan),
        gevp_residuals=gevp_res,
        selected=m_sel,
        next_eigenvalue=lam_next,
        n_zero=count_zero_eigenvalues(lam),
    )
