"""Structured laminated meshes (quad4 in 2D, hex8 in 3D).

Nodes are numbered lexicographically with x fastest; elements likewise.
The through-thickness (lamination) axis is the last coordinate axis.
Boundary facets carry exactly one tag: free, dirichlet or neumann.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

TAG_FREE = 0
TAG_DIRICHLET = 1
TAG_NEUMANN = 2

TAG_NAMES = {TAG_FREE: "free", TAG_DIRICHLET: "dirichlet", TAG_NEUMANN: "neumann"}
TAG_BY_NAME = {v: k for k, v in TAG_NAMES.items()}

FACE_NAMES_3D = ("xmin", "xmax", "ymin", "ymax", "zmin", "zmax")
FACE_NAMES_2D = ("xmin", "xmax", "ymin", "ymax")

# Local node ids of each axis-aligned face, hex8 in VTK ordering.
HEX_FACES = (
    (0, 3, 7, 4),  # xmin
    (1, 2, 6, 5),  # xmax
    (0, 1, 5, 4),  # ymin
    (3, 2, 6, 7),  # ymax
    (0, 1, 2, 3),  # zmin
    (4, 5, 6, 7),  # zmax
)
QUAD_EDGES = (
    (3, 0),  # xmin
    (1, 2),  # xmax
    (0, 1),  # ymin
    (2, 3),  # ymax
)


@dataclass
class Mesh:
    """Structured grid with per-element material index and tagged boundary
    facets.

    Attributes
    ----------
    dim : int
        2 or 3.
    coords : (n_nodes, dim) float array
        Node coordinates in mm.
    conn : (n_elements, 4 or 8) int array
        Element connectivity (quad4 / hex8, VTK node ordering).
    material_index : (n_elements,) int array
        Index into the material table of the owning ply.
    boundary_elements, boundary_faces, boundary_tags : int arrays
        One entry per boundary facet: owning element, local face id and tag.
    counts : tuple of int
        Elements per axis.
    extents : tuple of float
        Domain lengths per axis (mm).
    """

    dim: int
    coords: np.ndarray
    conn: np.ndarray
    material_index: np.ndarray
    boundary_elements: np.ndarray
    boundary_faces: np.ndarray
    boundary_tags: np.ndarray
    counts: tuple = ()
    extents: tuple = ()
    _facet_tag_cache: dict = field(default=None, repr=False, compare=False)

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def n_elements(self) -> int:
        return self.conn.shape[0]

    @property
    def dofs_per_node(self) -> int:
        return self.dim

    @property
    def n_dofs(self) -> int:
        return self.n_nodes * self.dim

    @property
    def faces(self):
        return HEX_FACES if self.dim == 3 else QUAD_EDGES

    def facet_nodes(self, element: int, face: int) -> np.ndarray:
        """Global node ids of one local face of one element."""
        return self.conn[element][list(self.faces[face])]

    def element_centroids(self) -> np.ndarray:
        return self.coords[self.conn].mean(axis=1)

    def boundary_facet_tags(self) -> dict:
        """Map from sorted boundary-facet node tuple to its tag."""
        if self._facet_tag_cache is None:
            cache = {}
            for e, f, t in zip(
                self.boundary_elements, self.boundary_faces, self.boundary_tags
            ):
                key = tuple(sorted(self.facet_nodes(e, f)))
                cache[key] = int(t)
            self._facet_tag_cache = cache
        return self._facet_tag_cache

    def tagged_nodes(self, tag: int) -> np.ndarray:
        """Sorted unique node ids lying on facets with the given tag."""
        nodes = set()
        for e, f, t in zip(
            self.boundary_elements, self.boundary_faces, self.boundary_tags
        ):
            if t == tag:
                nodes.update(self.facet_nodes(e, f).tolist())
        return np.array(sorted(nodes), dtype=int)

    def tagged_facets(self, tag: int):
        """(element, face) pairs of facets carrying the given tag."""
        mask = self.boundary_tags == tag
        return list(zip(self.boundary_elements[mask], self.boundary_faces[mask]))


@dataclass
class BoundaryData:
    """Problem data: Dirichlet displacement h (mm), Neumann traction g (MPa)
    and body force f (N/mm^3), each evaluable at any point."""

    dirichlet: Callable[[np.ndarray], np.ndarray] = None
    traction: Callable[[np.ndarray], np.ndarray] = None
    body_force: Callable[[np.ndarray], np.ndarray] = None

    @staticmethod
    def _const(vec, dim):
        v = np.asarray(vec, dtype=float)[:dim]
        return lambda x: np.broadcast_to(v, x.shape[:-1] + (dim,))

    @classmethod
    def constants(cls, dim: int, dirichlet=None, traction=None, body_force=None):
        """Boundary data from constant vectors (None means zero)."""
        zero = np.zeros(dim)
        return cls(
            dirichlet=cls._const(dirichlet if dirichlet is not None else zero, dim),
            traction=cls._const(traction if traction is not None else zero, dim),
            body_force=cls._const(body_force if body_force is not None else zero, dim),
        )


def build_structured_mesh(
    extents: Sequence[float],
    counts: Sequence[int],
    plies: Sequence[tuple],
    boundary_rule: dict | None = None,
) -> Mesh:
    """Build a structured laminated grid.

    Parameters
    ----------
    extents : lengths per axis (mm).
    counts : elements per axis.
    plies : sequence of (thickness_fraction, material_index)
        Stacking through the last axis, bottom to top.  Fractions must sum
        to one and each ply must contain a whole number of element layers.
    boundary_rule : dict mapping face names ("xmin", ...) to tag names
        ("dirichlet" | "neumann" | "free").  Unlisted faces are free.

    Returns
    -------
    Mesh
    """
    extents = tuple(float(e) for e in extents)
    counts = tuple(int(n) for n in counts)
    dim = len(counts)
    if dim not in (2, 3) or len(extents) != dim:
        raise ValueError("extents and counts must both have length 2 or 3")
    if any(e <= 0 for e in extents):
        raise ValueError(f"extents must be positive, got {extents}")
    if any(n < 1 for n in counts):
        raise ValueError(f"counts must be >= 1, got {counts}")

    fractions = np.array([p[0] for p in plies], dtype=float)
    if abs(fractions.sum() - 1.0) > 1e-12:
        raise ValueError(f"ply fractions sum to {fractions.sum()!r}, expected 1")
    n_thick = counts[-1]
    layers = fractions * n_thick
    if np.any(np.abs(layers - np.round(layers)) > 1e-9):
        raise ValueError(
            "each ply must contain a whole number of element layers: "
            f"counts[-1]={n_thick} with fractions {fractions.tolist()}"
        )

    # nodes, x fastest
    axes = [np.linspace(0.0, extents[a], counts[a] + 1) for a in range(dim)]
    if dim == 3:
        zz, yy, xx = np.meshgrid(axes[2], axes[1], axes[0], indexing="ij")
        coords = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])
    else:
        yy, xx = np.meshgrid(axes[1], axes[0], indexing="ij")
        coords = np.column_stack([xx.ravel(), yy.ravel()])

    conn = _structured_connectivity(counts)

    # ply ownership from the centroid position along the last axis
    ply_of_layer = np.repeat(
        np.arange(len(plies)), np.round(layers).astype(int)
    )
    centroid_layer = _element_layer_index(counts)
    material_index = np.array(
        [plies[ply_of_layer[k]][1] for k in centroid_layer], dtype=int
    )

    b_elems, b_faces, b_tags = _tag_boundary(counts, boundary_rule or {}, dim)

    return Mesh(
        dim=dim,
        coords=coords,
        conn=conn,
        material_index=material_index,
        boundary_elements=b_elems,
        boundary_faces=b_faces,
        boundary_tags=b_tags,
        counts=counts,
        extents=extents,
    )


def _structured_connectivity(counts) -> np.ndarray:
    dim = len(counts)
    if dim == 3:
        nx, ny, nz = counts
        npx, npy = nx + 1, ny + 1

        def nid(i, j, k):
            return i + npx * (j + npy * k)

        conn = np.empty((nx * ny * nz, 8), dtype=int)
        e = 0
        for k in range(nz):
            for j in range(ny):
                for i in range(nx):
                    conn[e] = (
                        nid(i, j, k),
                        nid(i + 1, j, k),
                        nid(i + 1, j + 1, k),
                        nid(i, j + 1, k),
                        nid(i, j, k + 1),
                        nid(i + 1, j, k + 1),
                        nid(i + 1, j + 1, k + 1),
                        nid(i, j + 1, k + 1),
                    )
                    e += 1
        return conn
    nx, ny = counts
    npx = nx + 1

    def nid2(i, j):
        return i + npx * j

    conn = np.empty((nx * ny, 4), dtype=int)
    e = 0
    for j in range(ny):
        for i in range(nx):
            conn[e] = (nid2(i, j), nid2(i + 1, j), nid2(i + 1, j + 1), nid2(i, j + 1))
            e += 1
    return conn


def _element_layer_index(counts) -> np.ndarray:
    """Through-thickness layer index of each element."""
    if len(counts) == 3:
        nx, ny, nz = counts
        return np.repeat(np.arange(nz), nx * ny)
    nx, ny = counts
    return np.repeat(np.arange(ny), nx)


def _element_grid_index(e: int, counts):
    if len(counts) == 3:
        nx, ny, _ = counts
        k, r = divmod(e, nx * ny)
        j, i = divmod(r, nx)
        return i, j, k
    nx, _ = counts
    j, i = divmod(e, nx)
    return i, j


def _tag_boundary(counts, boundary_rule: dict, dim: int):
    face_names = FACE_NAMES_3D if dim == 3 else FACE_NAMES_2D
    for name in boundary_rule:
        if name not in face_names:
            raise ValueError(f"unknown face selector {name!r}; use one of {face_names}")
        if boundary_rule[name] not in TAG_BY_NAME:
            raise ValueError(f"unknown tag {boundary_rule[name]!r} for face {name}")
    tag_of_face = [
        TAG_BY_NAME.get(boundary_rule.get(name, "free")) for name in face_names
    ]

    elems, faces, tags = [], [], []
    n_el = int(np.prod(counts))
    for e in range(n_el):
        idx = _element_grid_index(e, counts)
        for axis in range(dim):
            if idx[axis] == 0:
                face = 2 * axis
                elems.append(e), faces.append(face), tags.append(tag_of_face[face])
            if idx[axis] == counts[axis] - 1:
                face = 2 * axis + 1
                elems.append(e), faces.append(face), tags.append(tag_of_face[face])
    return (
        np.array(elems, dtype=int),
        np.array(faces, dtype=int),
        np.array(tags, dtype=int),
    )
