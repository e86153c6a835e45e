"""Global coarse space: stitched spectral columns plus particular solutions.

Each subdomain contributes its PoU-weighted eigenvectors, orthonormalized
per subdomain by modified Gram-Schmidt (one re-orthogonalization pass).
Where body forces, tractions or inhomogeneous Dirichlet data act, a local
particular solution is weighted, orthogonalized against the subdomain's
spectral columns, normalized and appended; its pre-normalization norm is
kept because the coarse solve pins the column's coefficient through a
Dirichlet row, which is how boundary data enters the coarse level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import AssembledSystem, restrict_load
from .decomp import Decomposition, Subdomain

DROP_TOL = 1e-10


class CoarseSpaceError(RuntimeError):
    pass


@dataclass
class ParticularSolution:
    """Local particular function psi = psi_r + psi_d on one oversampled
    subdomain, along with whether it must be representable (the subdomain
    carries inhomogeneous Dirichlet data)."""

    subdomain: int
    psi: np.ndarray
    has_dirichlet_data: bool


def local_particular_solution(
    system: AssembledSystem, sub: Subdomain, a_local: sp.csr_matrix
) -> ParticularSolution:
    """Solve the two local problems feeding the particular function.

    psi_r solves the zero-boundary problem on B1 with the loads restricted
    to the subdomain; psi_d harmonically lifts the Dirichlet values h from
    B3 into B1 and B2 (identically zero when the subdomain does not touch
    the Dirichlet boundary or h vanishes there).
    """
    n = sub.n_dofs
    psi = np.zeros(n)
    a = a_local.tocsr()

    b_loc = restrict_load(system, sub.elements, sub.dofs)
    if np.any(b_loc[sub.b1]):
        a11 = a[np.ix_(sub.b1, sub.b1)].tocsc()
        psi[sub.b1] = spla.splu(a11).solve(b_loc[sub.b1])

    has_dirichlet = False
    if sub.b3.size:
        h = system.dofmap.dirichlet_values[sub.dofs[sub.b3]]
        if np.any(h):
            has_dirichlet = True
            b12 = np.concatenate([sub.b1, sub.b2])
            a12_12 = a[np.ix_(b12, b12)].tocsc()
            rhs = -(a[np.ix_(b12, sub.b3)] @ h)
            try:
                lift = spla.splu(a12_12).solve(rhs)
            except RuntimeError as exc:
                raise CoarseSpaceError(
                    f"subdomain {sub.index}: singular Dirichlet-lift system"
                ) from exc
            psi_d = np.zeros(n)
            psi_d[b12] = lift
            psi_d[sub.b3] = h
            psi = psi + psi_d
    return ParticularSolution(sub.index, psi, has_dirichlet)


@dataclass
class CoarseSpace:
    """Prolongation operator and bookkeeping of the particular columns."""

    phi: sp.csr_matrix  # n_dofs x n_basis
    column_ranges: list  # per subdomain (start, stop), spectral columns
    particular_columns: dict  # subdomain -> column index
    pinned_columns: dict  # subset carrying Dirichlet data; rows overwritten
    psi_hat_norms: dict  # subdomain -> pre-normalization norm
    modes_kept: list  # per subdomain, after near-dependence drops
    u_particular: np.ndarray  # stitched global particular function

    @property
    def n_basis(self) -> int:
        return self.phi.shape[1]

    def spectral_only(self) -> sp.csr_matrix:
        """Columns without the particular ones (preconditioner use)."""
        keep = np.setdiff1d(
            np.arange(self.n_basis), np.array(sorted(self.particular_columns.values()), dtype=int)
        )
        return self.phi[:, keep].tocsr()


def _mgs_columns(cols: np.ndarray):
    """Modified Gram-Schmidt with one re-orthogonalization pass.

    Returns the orthonormal columns and the indices of the inputs kept.
    """
    kept, out = [], []
    for i in range(cols.shape[1]):
        v = cols[:, i].copy()
        pre = np.linalg.norm(v)
        if pre == 0.0:
            continue
        for _ in range(2):
            for q in out:
                v -= (q @ v) * q
        post = np.linalg.norm(v)
        if post < DROP_TOL * pre:
            continue
        out.append(v / post)
        kept.append(i)
    return out, kept


def build_coarse_space(
    decomp: Decomposition,
    pou,
    bases: list,
    particulars: list | None = None,
) -> CoarseSpace:
    """Assemble the prolongation from spectral bases and particular
    solutions.

    Raises when a particular column carrying Dirichlet data is dropped as
    linearly dependent: the boundary condition would be unrepresentable.
    """
    n_dofs = decomp.mesh.n_dofs
    entries_rows, entries_cols, entries_vals = [], [], []
    ranges, modes_kept = [], []
    particular_columns, pinned_columns, psi_hat_norms = {}, {}, {}
    u_particular = np.zeros(n_dofs)
    col = 0

    for sub, basis in zip(decomp.subdomains, bases):
        mu = pou.dof_values[sub.index]
        weighted = mu[:, None] * basis.selected_vectors
        qs, kept = _mgs_columns(weighted)
        start = col
        for q in qs:
            nz = np.flatnonzero(q)
            entries_rows.append(sub.dofs[nz])
            entries_cols.append(np.full(nz.size, col))
            entries_vals.append(q[nz])
            col += 1
        ranges.append((start, col))
        modes_kept.append(len(qs))

        if particulars is not None:
            part = particulars[sub.index]
            p = mu * part.psi
            u_particular[sub.dofs] += p
            pre = np.linalg.norm(p)
            if pre == 0.0:
                continue
            for _ in range(2):
                for q in qs:
                    p -= (q @ p) * q
            post = np.linalg.norm(p)
            if post < DROP_TOL * pre:
                if part.has_dirichlet_data:
                    raise CoarseSpaceError(
                        f"subdomain {sub.index}: particular column with Dirichlet "
                        "data dropped as dependent; constraint unrepresentable"
                    )
                continue
            nz = np.flatnonzero(p)
            entries_rows.append(sub.dofs[nz])
            entries_cols.append(np.full(nz.size, col))
            entries_vals.append(p[nz] / post)
            particular_columns[sub.index] = col
            if part.has_dirichlet_data:
                pinned_columns[sub.index] = col
            psi_hat_norms[sub.index] = float(post)
            col += 1

    if col == 0:
        raise CoarseSpaceError("coarse space is empty")
    phi = sp.coo_matrix(
        (
            np.concatenate(entries_vals),
            (np.concatenate(entries_rows), np.concatenate(entries_cols)),
        ),
        shape=(n_dofs, col),
    ).tocsr()
    return CoarseSpace(
        phi=phi,
        column_ranges=ranges,
        particular_columns=particular_columns,
        pinned_columns=pinned_columns,
        psi_hat_norms=psi_hat_norms,
        modes_kept=modes_kept,
        u_particular=u_particular,
    )


@dataclass
class CoarseSolution:
    coefficients: np.ndarray
    u: np.ndarray
    coarse_matrix: np.ndarray = field(repr=False, default=None)
    coarse_rhs: np.ndarray = field(repr=False, default=None)


def solve_coarse(
    a_raw: sp.csr_matrix, b_raw: np.ndarray, space: CoarseSpace
) -> CoarseSolution:
    """Assemble and solve the dense coarse system.

    A_H = Phi^T A Phi against the raw (pre-Dirichlet) operator and the raw
    load functional; for every particular column carrying Dirichlet data
    the row is overwritten (one on the diagonal, the recorded norm on the
    right-hand side), which pins the stitched particular function and
    keeps the lift from being double counted.
    """
    phi = space.phi
    a_h = (phi.T @ (a_raw @ phi)).toarray()
    b_h = phi.T @ b_raw
    for j, ell in space.pinned_columns.items():
        a_h[ell, :] = 0.0
        a_h[ell, ell] = 1.0
        b_h[ell] = space.psi_hat_norms[j]
    try:
        c = sla.solve(a_h, b_h)
    except np.linalg.LinAlgError as exc:
        raise CoarseSpaceError(f"singular coarse matrix: {exc}") from exc
    if not np.all(np.isfinite(c)):
        raise CoarseSpaceError("coarse solve produced non-finite coefficients")
    return CoarseSolution(coefficients=c, u=phi @ c, coarse_matrix=a_h, coarse_rhs=b_h)
