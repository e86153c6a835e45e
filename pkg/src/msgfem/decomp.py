"""Overlapping/oversampled domain decomposition with DoF classification.

Subdomains start from a non-overlapping element partition, then grow by
node-sharing element layers: ``o`` layers give the overlapping subdomains
carrying the partition of unity, ``o* >= o`` layers give the oversampled
subdomains on which the local eigenproblems live.

Each oversampled subdomain's DoFs split into three disjoint classes:

* B1 - interior DoFs plus those on the global Neumann/free boundary,
* B2 - the artificial interior boundary,
* B3 - the external Dirichlet boundary (Dirichlet wins over artificial
  where the two meet).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import TAG_DIRICHLET, Mesh


def element_adjacency(mesh: Mesh) -> list:
    """Node-sharing element adjacency, sorted per element."""
    node_elems = [[] for _ in range(mesh.n_nodes)]
    for e, nodes in enumerate(mesh.conn):
        for n in nodes:
            node_elems[n].append(e)
    adj = []
    for e, nodes in enumerate(mesh.conn):
        nbrs = set()
        for n in nodes:
            nbrs.update(node_elems[n])
        nbrs.discard(e)
        adj.append(np.array(sorted(nbrs), dtype=int))
    return adj


def partition_nonoverlapping(
    mesh: Mesh, n_subdomains: int, strategy: str = "structured", grid=None
) -> np.ndarray:
    """Element -> subdomain owner map.

    ``structured`` splits the index box into a grid of blocks (the grid is
    chosen to balance block sizes unless given); ``greedy`` grows BFS fronts
    from evenly spaced seeds, which keeps subdomains connected on any mesh.
    """
    if n_subdomains > mesh.n_elements:
        raise ValueError(
            f"cannot build {n_subdomains} subdomains from {mesh.n_elements} elements"
        )
    if n_subdomains < 1:
        raise ValueError("need at least one subdomain")
    if strategy == "structured":
        return _partition_blocks(mesh, n_subdomains, grid)
    if strategy == "greedy":
        return _partition_greedy(mesh, n_subdomains)
    raise ValueError(f"unknown partition strategy {strategy!r}")


def _block_grids(n: int, dim: int):
    grids = []
    for px in range(1, n + 1):
        if n % px:
            continue
        rem = n // px
        if dim == 2:
            grids.append((px, rem))
        else:
            for py in range(1, rem + 1):
                if rem % py:
                    continue
                grids.append((px, py, rem // py))
    return grids


def _partition_blocks(mesh: Mesh, n: int, grid=None) -> np.ndarray:
    counts = mesh.counts
    if not counts:
        raise ValueError("structured partitioning needs a structured mesh")
    dim = len(counts)
    if grid is None:
        # pick the factorization with the most balanced block sizes
        best, best_cost = None, None
        for g in _block_grids(n, dim):
            if any(g[a] > counts[a] for a in range(dim)):
                continue
            sizes = [int(np.ceil(counts[a] / g[a])) for a in range(dim)]
            cost = (int(np.prod(sizes)), max(sizes))
            if best_cost is None or cost < best_cost:
                best, best_cost = g, cost
        if best is None:
            raise ValueError(f"no structured {n}-block grid fits counts {counts}")
        grid = best
    else:
        grid = tuple(int(g) for g in grid)
        if int(np.prod(grid)) != n:
            raise ValueError(f"grid {grid} does not yield {n} subdomains")

    splits = [np.linspace(0, counts[a], grid[a] + 1).astype(int) for a in range(dim)]
    owner = np.empty(mesh.n_elements, dtype=int)
    strides = np.cumprod((1,) + counts[:-1])
    for e in range(mesh.n_elements):
        rest = e
        block = []
        for a in range(dim):
            idx = (rest // strides[a]) % counts[a]
            block.append(np.searchsorted(splits[a], idx, side="right") - 1)
        owner[e] = block[0] + grid[0] * (
            block[1] + (grid[1] * block[2] if dim == 3 else 0)
        )
    return owner


def _partition_greedy(mesh: Mesh, n: int) -> np.ndarray:
    adj = element_adjacency(mesh)
    seeds = np.unique(
        np.round(np.linspace(0, mesh.n_elements - 1, n)).astype(int)
    )
    # degenerate duplicate seeds can only occur for n close to n_elements
    while seeds.size < n:
        extra = np.setdiff1d(np.arange(mesh.n_elements), seeds)[: n - seeds.size]
        seeds = np.sort(np.concatenate([seeds, extra]))
    owner = np.full(mesh.n_elements, -1, dtype=int)
    fronts = []
    for j, s in enumerate(seeds):
        owner[s] = j
        fronts.append([int(s)])
    remaining = mesh.n_elements - n
    while remaining > 0:
        progressed = False
        for j in range(n):
            new_front = []
            for e in fronts[j]:
                for nb in adj[e]:
                    if owner[nb] < 0:
                        owner[nb] = j
                        new_front.append(int(nb))
                        remaining -= 1
            if new_front:
                progressed = True
            fronts[j] = new_front if new_front else fronts[j]
        if not progressed:  # disconnected leftovers: claim them directly
            for e in np.flatnonzero(owner < 0):
                owner[e] = owner[adj[e][0]] if adj[e].size else 0
            remaining = 0
    return owner


def grow_overlap(owner: np.ndarray, adjacency: list, layers: int) -> list:
    """Per-subdomain element sets grown by BFS layers over the adjacency."""
    if layers < 0:
        raise ValueError("layers must be >= 0")
    n_sub = int(owner.max()) + 1
    result = []
    for j in range(n_sub):
        current = set(np.flatnonzero(owner == j).tolist())
        front = set(current)
        for _ in range(layers):
            nxt = set()
            for e in front:
                nxt.update(adjacency[e].tolist())
            nxt -= current
            if not nxt:
                break
            current |= nxt
            front = nxt
        result.append(np.array(sorted(current), dtype=int))
    return result


@dataclass
class Subdomain:
    """Index data of one subdomain, all in global numbering except the
    class arrays, which index into ``dofs``."""

    index: int
    owned_elements: np.ndarray
    overlap_elements: np.ndarray  # o layers
    elements: np.ndarray  # o* layers (oversampled)
    nodes: np.ndarray  # all nodes of the oversampled elements
    dofs: np.ndarray  # all DoFs of those nodes (sorted)
    b1: np.ndarray  # local indices into dofs
    b2: np.ndarray
    b3: np.ndarray
    interior_overlap_nodes: np.ndarray  # nodes strictly interior to the o-overlap

    @property
    def n_dofs(self) -> int:
        return self.dofs.size

    def global_to_local(self) -> dict:
        return {int(d): i for i, d in enumerate(self.dofs)}


@dataclass
class Decomposition:
    """Partition, overlap/oversampling sets and DoF classes for all
    subdomains, plus the coloring constant ``k0`` (the maximum number of
    oversampled subdomains sharing any DoF)."""

    mesh: Mesh
    owner: np.ndarray
    overlap: int
    oversampling: int
    subdomains: list = field(default_factory=list)
    k0: int = 0

    @property
    def n_subdomains(self) -> int:
        return int(self.owner.max()) + 1


def _facet_counts(mesh: Mesh, elements: np.ndarray) -> dict:
    counts = {}
    for e in elements:
        for f in range(len(mesh.faces)):
            key = tuple(sorted(mesh.facet_nodes(e, f)))
            counts[key] = counts.get(key, 0) + 1
    return counts


def classify_dofs(mesh: Mesh, elements: np.ndarray):
    """Split the DoFs of an element set into (B1, B2, B3) local index arrays.

    The subdomain boundary consists of facets not shared by two subdomain
    elements.  Nodes on its Dirichlet part go to B3 (Dirichlet wins at
    corners), remaining nodes on its artificial (interior-to-the-domain)
    part go to B2, and everything else - interior nodes and nodes only on
    the global Neumann/free boundary - goes to B1.  All components of a
    node share its class.

    Returns ``(b1, b2, b3, nodes, dofs)``.
    """
    elements = np.asarray(elements, dtype=int)
    global_tags = mesh.boundary_facet_tags()
    boundary_facets = [k for k, c in _facet_counts(mesh, elements).items() if c == 1]

    dim = mesh.dim
    nodes = np.unique(mesh.conn[elements])
    rank = {int(n): i for i, n in enumerate(nodes)}
    # 0 = interior/Neumann, 1 = artificial, 2 = dirichlet; the dirichlet
    # pass runs last so it wins where facet types meet at a node
    cls = np.zeros(nodes.size, dtype=int)
    for key in boundary_facets:
        if global_tags.get(key) is None:  # artificial, interior to the domain
            for n in key:
                cls[rank[n]] = 1
    for key in boundary_facets:
        if global_tags.get(key) == TAG_DIRICHLET:
            for n in key:
                cls[rank[n]] = 2

    b1_nodes = np.flatnonzero(cls == 0)
    b2_nodes = np.flatnonzero(cls == 1)
    b3_nodes = np.flatnonzero(cls == 2)

    def expand(node_idx):
        return (node_idx[:, None] * dim + np.arange(dim)[None, :]).ravel()

    b1 = expand(b1_nodes)
    b2 = expand(b2_nodes)
    b3 = expand(b3_nodes)
    all_dofs = (nodes[:, None] * dim + np.arange(dim)[None, :]).ravel()
    return np.sort(b1), np.sort(b2), np.sort(b3), nodes, all_dofs


def interior_nodes(mesh: Mesh, elements: np.ndarray, node_elems=None) -> np.ndarray:
    """Nodes all of whose incident elements belong to the element set."""
    elements = np.asarray(elements, dtype=int)
    inset = np.zeros(mesh.n_elements, dtype=bool)
    inset[elements] = True
    if node_elems is None:
        node_elems = [[] for _ in range(mesh.n_nodes)]
        for e, nn in enumerate(mesh.conn):
            for n in nn:
                node_elems[n].append(e)
    out = []
    for n in np.unique(mesh.conn[elements]):
        if all(inset[e] for e in node_elems[n]):
            out.append(int(n))
    return np.array(out, dtype=int)


def build_decomposition(
    mesh: Mesh,
    n_subdomains: int,
    overlap: int = 1,
    oversampling: int | None = None,
    strategy: str = "structured",
    grid=None,
) -> Decomposition:
    """Partition, grow overlaps, classify DoFs and compute k0."""
    if overlap < 1:
        raise ValueError("overlap must be >= 1")
    oversampling = overlap if oversampling is None else oversampling
    if oversampling < overlap:
        raise ValueError("oversampling must be >= overlap")

    owner = partition_nonoverlapping(mesh, n_subdomains, strategy, grid)
    adj = element_adjacency(mesh)
    overlap_sets = grow_overlap(owner, adj, overlap)
    if oversampling == overlap:
        oversampled_sets = [np.array(s, copy=True) for s in overlap_sets]
    else:
        oversampled_sets = grow_overlap(owner, adj, oversampling)

    node_elems = [[] for _ in range(mesh.n_nodes)]
    for e, nn in enumerate(mesh.conn):
        for n in nn:
            node_elems[n].append(e)

    subs = []
    multiplicity = np.zeros(mesh.n_nodes, dtype=int)
    for j in range(n_subdomains):
        b1, b2, b3, nodes, dofs = classify_dofs(mesh, oversampled_sets[j])
        interior = interior_nodes(mesh, overlap_sets[j], node_elems)
        subs.append(
            Subdomain(
                index=j,
                owned_elements=np.flatnonzero(owner == j),
                overlap_elements=overlap_sets[j],
                elements=oversampled_sets[j],
                nodes=nodes,
                dofs=dofs,
                b1=b1,
                b2=b2,
                b3=b3,
                interior_overlap_nodes=interior,
            )
        )
        multiplicity[nodes] += 1

    return Decomposition(
        mesh=mesh,
        owner=owner,
        overlap=overlap,
        oversampling=oversampling,
        subdomains=subs,
        k0=int(multiplicity.max()),
    )
