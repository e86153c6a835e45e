"""Fine-scale solvers: sparse direct and two-level Schwarz PCG.

The preconditioner combines a dense coarse solve through the spectral
prolongation with independent zero-Dirichlet local solves on the
overlapping subdomains.  The PCG loop accumulates the Lanczos tridiagonal
from its step and orthogonality coefficients, whose extremal Ritz values
estimate the preconditioned condition number.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import AssembledSystem
from .decomp import Decomposition


class SolverError(RuntimeError):
    pass


def direct_solve(a: sp.spmatrix, b: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Sparse LU solve with one refinement step; checks the residual."""
    try:
        lu = spla.splu(a.tocsc())
    except RuntimeError as exc:
        raise SolverError(f"factorization breakdown: {exc}") from exc
    u = lu.solve(b)
    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        return np.zeros_like(b)
    r = b - a @ u
    if np.linalg.norm(r) > rtol * b_norm:
        u = u + lu.solve(r)
        r = b - a @ u
    if np.linalg.norm(r) > rtol * b_norm:
        raise SolverError(
            f"direct solve residual {np.linalg.norm(r) / b_norm:.3e} exceeds {rtol:g}"
        )
    return u


def solve_fine(system: AssembledSystem) -> np.ndarray:
    """Direct reference solution of the Dirichlet-eliminated system."""
    return direct_solve(system.matrix_bc, system.rhs_bc)


class TwoLevelSchwarz:
    """Additive two-level preconditioner on the free DoFs.

    Local solves are posed on the DoFs strictly interior to each
    overlapping subdomain (zero Dirichlet on the subdomain boundary); the
    coarse correction uses the spectral columns of a coarse space.
    """

    def __init__(
        self,
        system: AssembledSystem,
        decomp: Decomposition,
        coarse_phi: sp.spmatrix,
    ):
        dofmap = system.dofmap
        self.free = dofmap.free
        pos = np.full(system.n_dofs, -1, dtype=int)
        pos[self.free] = np.arange(self.free.size)
        self.a_ff = system.matrix[np.ix_(self.free, self.free)].tocsr()

        self.local_idx = []
        self.local_lu = []
        dim = system.mesh.dim
        for sub in decomp.subdomains:
            dofs = (
                sub.interior_overlap_nodes[:, None] * dim + np.arange(dim)[None, :]
            ).ravel()
            idx = pos[dofs]
            idx = idx[idx >= 0]
            if idx.size == 0:
                continue
            a_loc = self.a_ff[np.ix_(idx, idx)].tocsc()
            self.local_idx.append(idx)
            self.local_lu.append(spla.splu(a_loc))

        phi_f = coarse_phi.tocsr()[self.free, :]
        self.phi_f = phi_f
        a_h = (phi_f.T @ (self.a_ff @ phi_f)).toarray()
        try:
            self.coarse_factor = sla.cho_factor(a_h)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"coarse operator not SPD: {exc}") from exc

    def apply(self, r: np.ndarray) -> np.ndarray:
        z = self.phi_f @ sla.cho_solve(self.coarse_factor, self.phi_f.T @ r)
        for idx, lu in zip(self.local_idx, self.local_lu):
            z[idx] += lu.solve(r[idx])
        return z


@dataclass
class PcgResult:
    u: np.ndarray
    iterations: int
    condition_estimate: float
    residual_norms: list = field(default_factory=list)
    converged: bool = True


def pcg_two_level_schwarz(
    system: AssembledSystem,
    decomp: Decomposition,
    coarse_phi: sp.spmatrix,
    tol: float = 1e-9,
    max_iterations: int = 500,
) -> PcgResult:
    """Preconditioned CG on the free DoFs, with condition estimate.

    Converges to a true-residual relative tolerance; raises on stagnation
    past the iteration cap.  The returned field contains the Dirichlet
    values on constrained DoFs.
    """
    prec = TwoLevelSchwarz(system, decomp, coarse_phi)
    a = prec.a_ff
    b = system.rhs_bc[prec.free]
    b_norm = np.linalg.norm(b)
    u_full = system.dofmap.lift()
    if b_norm == 0.0:
        return PcgResult(u=u_full, iterations=0, condition_estimate=1.0)

    x = np.zeros_like(b)
    r = b.copy()
    z = prec.apply(r)
    p = z.copy()
    rz = r @ z
    alphas, betas = [], []
    residuals = [1.0]
    converged = False
    for _ in range(max_iterations):
        q = a @ p
        pq = p @ q
        if pq <= 0.0:
            raise SolverError("loss of positive definiteness in PCG")
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        alphas.append(alpha)
        res = np.linalg.norm(r) / b_norm
        residuals.append(float(res))
        if res <= tol:
            converged = True
            break
        z = prec.apply(r)
        rz_new = r @ z
        beta = rz_new / rz
        betas.append(beta)
        p = z + beta * p
        rz = rz_new
    if not converged:
        raise SolverError(
            f"PCG did not reach tol {tol:g} within {max_iterations} iterations "
            f"(last residual {residuals[-1]:.3e})"
        )

    cond = _lanczos_condition(alphas, betas)
    u_full[prec.free] = x
    return PcgResult(
        u=u_full,
        iterations=len(alphas),
        condition_estimate=cond,
        residual_norms=residuals,
        converged=True,
    )


def _lanczos_condition(alphas, betas) -> float:
    """Extremal Ritz values of the CG Lanczos tridiagonal."""
    k = len(alphas)
    if k == 0:
        return 1.0
    diag = np.empty(k)
    off = np.empty(max(k - 1, 0))
    diag[0] = 1.0 / alphas[0]
    for i in range(1, k):
        diag[i] = 1.0 / alphas[i] + betas[i - 1] / alphas[i - 1]
        off[i - 1] = np.sqrt(max(betas[i - 1], 0.0)) / alphas[i - 1]
    if k == 1:
        return 1.0
    ritz = sla.eigvalsh_tridiagonal(diag, off)
    lo = ritz[ritz > 0]
    if lo.size == 0:
        return np.inf
    return float(ritz.max() / lo.min())
