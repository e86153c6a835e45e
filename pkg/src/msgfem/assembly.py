"""Linear elasticity assembly on quad4/hex8 grids.

Element matrices use full Gauss integration (2 points per axis) and are
kept after assembly: every subdomain operator is rebuilt exactly as a
scatter-sum of element contributions, which is what makes overlapping and
oversampled restrictions exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .materials import OrthotropicMaterial, plane_strain_stiffness, rotated_stiffness
from .mesh import TAG_DIRICHLET, TAG_NEUMANN, BoundaryData, Mesh

# reference nodes (VTK ordering) and 2-point Gauss abscissa
_HEX_XI = np.array(
    [
        [-1, -1, -1],
        [1, -1, -1],
        [1, 1, -1],
        [-1, 1, -1],
        [-1, -1, 1],
        [1, -1, 1],
        [1, 1, 1],
        [-1, 1, 1],
    ],
    dtype=float,
)
_QUAD_XI = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=float)
_GP = 1.0 / np.sqrt(3.0)


def gauss_points(dim: int) -> np.ndarray:
    """Full-integration Gauss points on the reference element (weights 1)."""
    pts_1d = np.array([-_GP, _GP])
    grids = np.meshgrid(*([pts_1d] * dim), indexing="ij")
    return np.column_stack([g.ravel() for g in grids])


def shape_functions(xi: np.ndarray, dim: int) -> np.ndarray:
    ref = _HEX_XI if dim == 3 else _QUAD_XI
    return np.prod(1.0 + ref * xi, axis=1) / 2.0**dim


def shape_gradients(xi: np.ndarray, dim: int) -> np.ndarray:
    """Reference-frame gradients dN/dxi, shape (n_nodes, dim)."""
    ref = _HEX_XI if dim == 3 else _QUAD_XI
    grads = np.empty((ref.shape[0], dim))
    for d in range(dim):
        terms = 1.0 + ref * xi
        terms[:, d] = ref[:, d]
        grads[:, d] = np.prod(terms, axis=1) / 2.0**dim
    return grads


def _strain_matrix(g: np.ndarray, dim: int) -> np.ndarray:
    """B matrix mapping nodal displacements to Voigt strain.

    3D Voigt order (11, 22, 33, 23, 13, 12) with engineering shear;
    2D plane strain order (11, 22, 12).
    """
    n = g.shape[0]
    if dim == 3:
        b = np.zeros((6, 3 * n))
        b[0, 0::3] = g[:, 0]
        b[1, 1::3] = g[:, 1]
        b[2, 2::3] = g[:, 2]
        b[3, 1::3] = g[:, 2]
        b[3, 2::3] = g[:, 1]
        b[4, 0::3] = g[:, 2]
        b[4, 2::3] = g[:, 0]
        b[5, 0::3] = g[:, 1]
        b[5, 1::3] = g[:, 0]
        return b
    b = np.zeros((3, 2 * n))
    b[0, 0::2] = g[:, 0]
    b[1, 1::2] = g[:, 1]
    b[2, 0::2] = g[:, 1]
    b[2, 1::2] = g[:, 0]
    return b


def element_stiffness(coords: np.ndarray, stiffness: np.ndarray) -> np.ndarray:
    """Dense element stiffness for one quad4/hex8 element.

    Parameters
    ----------
    coords : (n_nodes, dim) element node coordinates.
    stiffness : Voigt stiffness, 6x6 in 3D or 3x3 (plane strain) in 2D.
    """
    dim = coords.shape[1]
    n_dof = coords.shape[0] * dim
    k = np.zeros((n_dof, n_dof))
    for xi in gauss_points(dim):
        dn = shape_gradients(xi, dim)
        jac = coords.T @ dn
        det = np.linalg.det(jac)
        if det <= 0.0:
            raise ValueError(f"degenerate element: det(J) = {det:.3e}")
        g = dn @ np.linalg.inv(jac)
        b = _strain_matrix(g, dim)
        k += b.T @ stiffness @ b * det
    return 0.5 * (k + k.T)


def rigid_body_modes(coords: np.ndarray) -> np.ndarray:
    """Columns spanning the rigid-body motions of the given nodes
    (6 in 3D: three translations plus three rotations; 3 in 2D)."""
    n, dim = coords.shape
    center = coords.mean(axis=0)
    x = coords - center
    if dim == 3:
        modes = np.zeros((3 * n, 6))
        for c in range(3):
            modes[c::3, c] = 1.0
        modes[1::3, 3], modes[2::3, 3] = -x[:, 2], x[:, 1]
        modes[0::3, 4], modes[2::3, 4] = x[:, 2], -x[:, 0]
        modes[0::3, 5], modes[1::3, 5] = -x[:, 1], x[:, 0]
    else:
        modes = np.zeros((2 * n, 3))
        modes[0::2, 0] = 1.0
        modes[1::2, 1] = 1.0
        modes[0::2, 2], modes[1::2, 2] = -x[:, 1], x[:, 0]
    return modes


def mesh_volume(mesh: Mesh) -> float:
    """Sum of element Jacobian integrals (area in 2D)."""
    total = 0.0
    coords_e = mesh.coords[mesh.conn]
    for xi in gauss_points(mesh.dim):
        dn = shape_gradients(xi, mesh.dim)
        jac = np.einsum("eai,aj->eij", coords_e, dn)
        total += np.linalg.det(jac).sum()
    return float(total)


@dataclass
class DofMap:
    """Node-blocked DoF map with Dirichlet classification.

    DoF ``node * dim + component``; every DoF is either free or carries a
    prescribed Dirichlet value.
    """

    dim: int
    n_dofs: int
    dirichlet_mask: np.ndarray
    dirichlet_values: np.ndarray

    @property
    def free(self) -> np.ndarray:
        return np.flatnonzero(~self.dirichlet_mask)

    @property
    def constrained(self) -> np.ndarray:
        return np.flatnonzero(self.dirichlet_mask)

    def lift(self) -> np.ndarray:
        """Full-length vector holding Dirichlet values, zero elsewhere."""
        u = np.zeros(self.n_dofs)
        u[self.dirichlet_mask] = self.dirichlet_values[self.dirichlet_mask]
        return u


@dataclass
class AssembledSystem:
    """Global system plus the per-element data needed for exact subdomain
    restrictions.

    ``matrix`` is the raw (pre-Dirichlet) operator; ``matrix_bc`` has
    Dirichlet rows/columns eliminated symmetrically with ones on the
    diagonal, and ``rhs_bc`` carries the Dirichlet-lifted right-hand side
    (prescribed values on constrained rows).
    """

    mesh: Mesh
    dofmap: DofMap
    stiffness_table: dict
    element_matrices: np.ndarray
    element_dofs: np.ndarray
    element_loads: np.ndarray
    matrix: sp.csr_matrix
    rhs: np.ndarray
    matrix_bc: sp.csr_matrix
    rhs_bc: np.ndarray

    @property
    def n_dofs(self) -> int:
        return self.dofmap.n_dofs


def _element_dof_table(mesh: Mesh) -> np.ndarray:
    dim = mesh.dim
    dofs = (mesh.conn[:, :, None] * dim + np.arange(dim)[None, None, :]).reshape(
        mesh.n_elements, -1
    )
    return dofs.astype(int)


def _voigt_table(mesh: Mesh, materials) -> dict:
    """Per-material-index Voigt stiffness in the global frame."""
    table = {}
    for idx in np.unique(mesh.material_index):
        mat = materials[idx]
        if isinstance(mat, OrthotropicMaterial):
            c = rotated_stiffness(mat)
        else:
            c = np.asarray(mat, dtype=float)
        if mesh.dim == 2 and c.shape == (6, 6):
            c = plane_strain_stiffness(c)
        table[int(idx)] = c
    return table


def _all_element_matrices(mesh: Mesh, table: dict) -> np.ndarray:
    dim = mesh.dim
    n_en = mesh.conn.shape[1]
    n_dof_e = n_en * dim
    coords_e = mesh.coords[mesh.conn]
    n_voigt = 6 if dim == 3 else 3
    ke = np.zeros((mesh.n_elements, n_dof_e, n_dof_e))
    for xi in gauss_points(dim):
        dn = shape_gradients(xi, dim)
        jac = np.einsum("eai,aj->eij", coords_e, dn)
        det = np.linalg.det(jac)
        if np.any(det <= 0.0):
            bad = int(np.argmin(det))
            raise ValueError(f"degenerate element {bad}: det(J) = {det[bad]:.3e}")
        ginv = np.linalg.inv(jac)
        g = np.einsum("aj,eji->eai", dn, ginv)
        b = np.zeros((mesh.n_elements, n_voigt, n_dof_e))
        if dim == 3:
            b[:, 0, 0::3], b[:, 1, 1::3], b[:, 2, 2::3] = g[:, :, 0], g[:, :, 1], g[:, :, 2]
            b[:, 3, 1::3], b[:, 3, 2::3] = g[:, :, 2], g[:, :, 1]
            b[:, 4, 0::3], b[:, 4, 2::3] = g[:, :, 2], g[:, :, 0]
            b[:, 5, 0::3], b[:, 5, 1::3] = g[:, :, 1], g[:, :, 0]
        else:
            b[:, 0, 0::2], b[:, 1, 1::2] = g[:, :, 0], g[:, :, 1]
            b[:, 2, 0::2], b[:, 2, 1::2] = g[:, :, 1], g[:, :, 0]
        for m_idx, c in table.items():
            sel = mesh.material_index == m_idx
            ke[sel] += np.einsum(
                "evi,vw,ewj->eij", b[sel], c, b[sel] * det[sel, None, None]
            )
    return 0.5 * (ke + np.transpose(ke, (0, 2, 1)))


def _body_loads(mesh: Mesh, body_force) -> np.ndarray:
    dim = mesh.dim
    n_dof_e = mesh.conn.shape[1] * dim
    fe = np.zeros((mesh.n_elements, n_dof_e))
    if body_force is None:
        return fe
    coords_e = mesh.coords[mesh.conn]
    for xi in gauss_points(dim):
        n = shape_functions(xi, dim)
        dn = shape_gradients(xi, dim)
        jac = np.einsum("eai,aj->eij", coords_e, dn)
        det = np.linalg.det(jac)
        xq = np.einsum("a,eai->ei", n, coords_e)
        fq = np.asarray(body_force(xq))
        if not np.any(fq):
            continue
        contrib = np.einsum("a,ec,e->eac", n, fq, det)
        fe += contrib.reshape(mesh.n_elements, -1)
    return fe


def _facet_quadrature(dim: int):
    """Reference quadrature on a facet: points, shape values, gradients."""
    if dim == 3:
        pts = gauss_points(2)
        vals = np.array([shape_functions(p, 2) for p in pts])
        grads = np.array([shape_gradients(p, 2) for p in pts])
    else:
        pts = np.array([[-_GP], [_GP]])
        vals = 0.5 * np.column_stack([1.0 - pts[:, 0], 1.0 + pts[:, 0]])
        grads = np.tile(np.array([[-0.5], [0.5]]), (2, 1, 1))
    return vals, grads


def _traction_loads(mesh: Mesh, traction) -> np.ndarray:
    dim = mesh.dim
    n_dof_e = mesh.conn.shape[1] * dim
    fe = np.zeros((mesh.n_elements, n_dof_e))
    if traction is None:
        return fe
    vals, grads = _facet_quadrature(dim)
    for elem, face in mesh.tagged_facets(TAG_NEUMANN):
        local = list(mesh.faces[face])
        xc = mesh.coords[mesh.conn[elem][local]]
        for n, dn in zip(vals, grads):
            tangents = xc.T @ dn
            if dim == 3:
                ds = np.linalg.norm(np.cross(tangents[:, 0], tangents[:, 1]))
            else:
                ds = np.linalg.norm(tangents[:, 0])
            xq = n @ xc
            gq = np.asarray(traction(xq))
            for a, ln in enumerate(local):
                fe[elem, ln * dim : ln * dim + dim] += n[a] * gq * ds
    return fe


def assemble_global(
    mesh: Mesh,
    materials,
    boundary: BoundaryData | None = None,
    allow_pure_neumann: bool = False,
) -> AssembledSystem:
    """Assemble the global stiffness matrix, load vector and DoF map.

    Inhomogeneous Dirichlet data is lifted (rhs_bc = b - A u_lift on free
    rows) and rows/columns of constrained DoFs are eliminated symmetrically,
    leaving ones on the diagonal and the prescribed values on the right-hand
    side.  Raises unless the mesh has Dirichlet facets (or
    ``allow_pure_neumann`` is set, for restriction tests on floating meshes).
    """
    boundary = boundary or BoundaryData.constants(mesh.dim)
    table = _voigt_table(mesh, materials)
    ke = _all_element_matrices(mesh, table)
    fe = _body_loads(mesh, boundary.body_force) + _traction_loads(
        mesh, boundary.traction
    )
    edofs = _element_dof_table(mesh)

    n = mesh.n_dofs
    rows = np.repeat(edofs, edofs.shape[1], axis=1).ravel()
    cols = np.tile(edofs, (1, edofs.shape[1])).ravel()
    a_raw = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    b_raw = np.bincount(edofs.ravel(), weights=fe.ravel(), minlength=n)

    dir_mask = np.zeros(n, dtype=bool)
    dir_vals = np.zeros(n)
    dir_nodes = mesh.tagged_nodes(TAG_DIRICHLET)
    if dir_nodes.size:
        h = boundary.dirichlet(mesh.coords[dir_nodes]) if boundary.dirichlet else None
        for c in range(mesh.dim):
            dofs = dir_nodes * mesh.dim + c
            dir_mask[dofs] = True
            if h is not None:
                dir_vals[dofs] = h[:, c]
    elif not allow_pure_neumann:
        raise ValueError("no Dirichlet DoFs anywhere: the system is singular")

    dofmap = DofMap(mesh.dim, n, dir_mask, dir_vals)
    lift = dofmap.lift()
    free = (~dir_mask).astype(float)
    keep = sp.diags(free)
    a_bc = (keep @ a_raw @ keep + sp.diags(dir_mask.astype(float))).tocsr()
    b_bc = np.where(dir_mask, dir_vals, b_raw - a_raw @ lift)

    return AssembledSystem(
        mesh=mesh,
        dofmap=dofmap,
        stiffness_table=table,
        element_matrices=ke,
        element_dofs=edofs,
        element_loads=fe,
        matrix=a_raw,
        rhs=b_raw,
        matrix_bc=a_bc,
        rhs_bc=b_bc,
    )


def restrict_matrix(system: AssembledSystem, elements: np.ndarray):
    """Scatter-sum of element matrices over an element set.

    Returns ``(A_local, dofs)`` where ``dofs`` maps local indices to global
    DoFs (sorted).  The operator is the restriction of the bilinear form to
    the subdomain: Neumann-like on the artificial boundary, with no
    Dirichlet modification.
    """
    elements = np.asarray(elements, dtype=int)
    if elements.size == 0:
        raise ValueError("empty element set")
    edofs = system.element_dofs[elements]
    dofs = np.unique(edofs)
    local = {int(d): i for i, d in enumerate(dofs)}
    loc = np.vectorize(local.__getitem__, otypes=[int])(edofs)
    m = edofs.shape[1]
    rows = np.repeat(loc, m, axis=1).ravel()
    cols = np.tile(loc, (1, m)).ravel()
    vals = system.element_matrices[elements].ravel()
    a = sp.coo_matrix((vals, (rows, cols)), shape=(dofs.size, dofs.size)).tocsr()
    return a, dofs


def restrict_load(system: AssembledSystem, elements: np.ndarray, dofs: np.ndarray):
    """Load functional restricted to an element set, on the given local DoFs."""
    elements = np.asarray(elements, dtype=int)
    local = {int(d): i for i, d in enumerate(dofs)}
    b = np.zeros(dofs.size)
    edofs = system.element_dofs[elements].ravel()
    loads = system.element_loads[elements].ravel()
    loc = np.vectorize(local.__getitem__, otypes=[int])(edofs)
    np.add.at(b, loc, loads)
    return b


def export_matrix_market(path, matrix: sp.spmatrix) -> None:
    from scipy.io import mmwrite

    mmwrite(str(path), matrix.tocoo())
