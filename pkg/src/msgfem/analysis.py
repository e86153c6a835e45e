"""Post-processing: strain/stress fields, errors and the failure criterion.

Strains are sampled once per element at the centroid, matching the
one-value-per-element error plots; stresses follow from the rotated ply
stiffness, and ply-local fields are obtained by rotating the tensors back
through the ply angle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import shape_gradients, _strain_matrix
from .materials import OrthotropicMaterial, rotation_matrix_z
from .mesh import Mesh

VOIGT_3D = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))
VOIGT_2D = ((0, 0), (1, 1), (0, 1))


def voigt_to_tensor(v: np.ndarray, dim: int, engineering: bool) -> np.ndarray:
    pairs = VOIGT_3D if dim == 3 else VOIGT_2D
    t = np.zeros((dim, dim))
    for idx, (i, j) in enumerate(pairs):
        val = v[idx]
        if engineering and i != j:
            val = 0.5 * val
        t[i, j] = t[j, i] = val
    return t


def tensor_to_voigt(t: np.ndarray, dim: int, engineering: bool) -> np.ndarray:
    pairs = VOIGT_3D if dim == 3 else VOIGT_2D
    v = np.empty(len(pairs))
    for idx, (i, j) in enumerate(pairs):
        v[idx] = t[i, j] * (2.0 if engineering and i != j else 1.0)
    return v


@dataclass
class FieldSample:
    """Element-centroid strain and stress in global and ply-local frames,
    Voigt components (engineering shear for strains)."""

    strain: np.ndarray
    stress: np.ndarray
    strain_local: np.ndarray
    stress_local: np.ndarray


def compute_strain_stress(
    mesh: Mesh, materials, displacement: np.ndarray, stiffness_table: dict
) -> FieldSample:
    """Centroid strain from shape-function gradients, stress from the
    rotated stiffness, and both fields rotated into the ply frame."""
    dim = mesh.dim
    n_voigt = 6 if dim == 3 else 3
    center = np.zeros(dim)
    dn = shape_gradients(center, dim)
    coords_e = mesh.coords[mesh.conn]
    jac = np.einsum("eai,aj->eij", coords_e, dn)
    g = np.einsum("aj,eji->eai", dn, np.linalg.inv(jac))

    n_el = mesh.n_elements
    strain = np.empty((n_el, n_voigt))
    stress = np.empty((n_el, n_voigt))
    ue = displacement[
        (mesh.conn[:, :, None] * dim + np.arange(dim)[None, None, :]).reshape(n_el, -1)
    ]
    for e in range(n_el):
        b = _strain_matrix(g[e], dim)
        strain[e] = b @ ue[e]
        stress[e] = stiffness_table[int(mesh.material_index[e])] @ strain[e]

    strain_local = np.empty_like(strain)
    stress_local = np.empty_like(stress)
    angle_cache = {}
    for e in range(n_el):
        m_idx = int(mesh.material_index[e])
        if m_idx not in angle_cache:
            mat = materials[m_idx]
            theta = mat.theta_deg if isinstance(mat, OrthotropicMaterial) else 0.0
            r = rotation_matrix_z(theta)[:dim, :dim]
            angle_cache[m_idx] = r
        r = angle_cache[m_idx]
        et = voigt_to_tensor(strain[e], dim, engineering=True)
        st = voigt_to_tensor(stress[e], dim, engineering=False)
        strain_local[e] = tensor_to_voigt(r.T @ et @ r, dim, engineering=True)
        stress_local[e] = tensor_to_voigt(r.T @ st @ r, dim, engineering=False)
    return FieldSample(strain, stress, strain_local, stress_local)


@dataclass
class RelativeErrors:
    displacement: float  # e_d
    strain: float  # e_eps
    energy: float


def relative_errors(
    u_fine: np.ndarray,
    u_coarse: np.ndarray,
    strain_fine: np.ndarray,
    strain_coarse: np.ndarray,
    a_raw,
) -> RelativeErrors:
    """Relative L2 errors on displacement and stacked strain components,
    plus the relative energy-norm error."""
    ref = np.linalg.norm(u_fine)
    if ref == 0.0:
        raise ValueError("zero-norm reference displacement")
    e_d = np.linalg.norm(u_fine - u_coarse) / ref
    ref_s = np.linalg.norm(strain_fine)
    if ref_s == 0.0:
        raise ValueError("zero-norm reference strain")
    e_eps = np.linalg.norm(strain_fine - strain_coarse) / ref_s
    d = u_fine - u_coarse
    energy = np.sqrt(max(d @ (a_raw @ d), 0.0) / (u_fine @ (a_raw @ u_fine)))
    return RelativeErrors(float(e_d), float(e_eps), float(energy))


def failure_criterion(
    stress_local: np.ndarray, shear_strength: float, friction_coeff: float
) -> np.ndarray:
    """Longitudinal compressive (fibre-kinking onset) indicator per element.

    phi = <|s12| + eta * s22> / S_L with <.> the positive part, evaluated
    on ply-local stress components.
    """
    if shear_strength <= 0.0:
        raise ValueError("shear strength must be positive")
    dim_voigt = stress_local.shape[1]
    s12 = stress_local[:, 5] if dim_voigt == 6 else stress_local[:, 2]
    s22 = stress_local[:, 1]
    return np.maximum(np.abs(s12) + friction_coeff * s22, 0.0) / shear_strength


def error_localization(strain_fine: np.ndarray, strain_coarse: np.ndarray) -> np.ndarray:
    """Per-element |delta eps_xx| between fine and coarse fields."""
    return np.abs(strain_fine[:, 0] - strain_coarse[:, 0])


def interface_distance(mesh: Mesh, owner: np.ndarray, adjacency: list) -> np.ndarray:
    """Per-element hop distance to the nearest subdomain interface.

    Elements with a differently-owned neighbor are at distance zero.
    """
    dist = np.full(mesh.n_elements, -1, dtype=int)
    front = []
    for e in range(mesh.n_elements):
        if any(owner[nb] != owner[e] for nb in adjacency[e]):
            dist[e] = 0
            front.append(e)
    d = 0
    while front:
        nxt = []
        for e in front:
            for nb in adjacency[e]:
                if dist[nb] < 0:
                    dist[nb] = d + 1
                    nxt.append(int(nb))
        front = nxt
        d += 1
    dist[dist < 0] = 0  # single-subdomain decompositions have no interface
    return dist
