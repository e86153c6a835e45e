"""Partition-of-unity weights on overlapping subdomains.

Weights live on DoFs (all components of a node share one value, the
construction is purely geometric).  On each subdomain the weight field
starts at ``2*o`` strictly inside the o-overlap subdomain and at zero on
its artificial boundary and everywhere in the oversampling buffer; ``2o-1``
Jacobi min-sweeps over the node connectivity graph then carve the linear
ramp, and a global normalization makes the fields sum to one at every DoF.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decomp import Decomposition


@dataclass
class PartitionOfUnity:
    """Per-subdomain weight vectors aligned with each subdomain's DoF list."""

    overlap: int
    oversampling: int
    node_values: list  # per subdomain, aligned with subdomain.nodes
    dof_values: list  # per subdomain, aligned with subdomain.dofs

    def mu(self, j: int) -> np.ndarray:
        return self.dof_values[j]


def _local_node_adjacency(conn_sub: np.ndarray, nodes: np.ndarray) -> list:
    rank = {int(n): i for i, n in enumerate(nodes)}
    adj = [set() for _ in range(nodes.size)]
    for elem_nodes in conn_sub:
        local = [rank[int(n)] for n in elem_nodes]
        for a in local:
            adj[a].update(local)
    return [np.array(sorted(s - {i}), dtype=int) for i, s in enumerate(adj)]


def build_pou(decomp: Decomposition, variant: str = "smooth") -> PartitionOfUnity:
    """Construct the partition of unity for a decomposition.

    ``smooth`` is the ramped min-sweep construction; ``counting`` is the
    flat one-over-multiplicity alternative (test mode only).

    Raises if any node carrying a free DoF ends up with zero total weight,
    which signals an overlap too small for the decomposition.
    """
    if variant not in ("smooth", "counting"):
        raise ValueError(f"unknown partition-of-unity variant {variant!r}")
    mesh = decomp.mesh
    o = decomp.overlap
    cap = 2 * o

    raw = []
    total = np.zeros(mesh.n_nodes)
    for sub in decomp.subdomains:
        w = np.zeros(sub.nodes.size)
        rank = {int(n): i for i, n in enumerate(sub.nodes)}
        inner = np.array([rank[int(n)] for n in sub.interior_overlap_nodes], dtype=int)
        if variant == "counting":
            w[inner] = 1.0
        else:
            w[inner] = float(cap)
            adj = _local_node_adjacency(mesh.conn[sub.elements], sub.nodes)
            for _ in range(cap - 1):
                prev = w.copy()
                for p in range(w.size):
                    nb = adj[p]
                    if nb.size:
                        w[p] = min(min(prev[p], prev[nb].min() + 1.0), float(cap))
        raw.append(w)
        total[sub.nodes] += w

    bad = np.flatnonzero(total == 0.0)
    if bad.size:
        raise ValueError(
            f"{bad.size} node(s) have zero partition-of-unity weight "
            "(overlap too small or decomposition disconnected), "
            f"first node id {int(bad[0])}"
        )

    node_values, dof_values = [], []
    for sub, w in zip(decomp.subdomains, raw):
        denom = total[sub.nodes]
        mu = np.divide(w, denom, out=np.zeros_like(w), where=denom > 0)
        node_values.append(mu)
        dof_values.append(np.repeat(mu, mesh.dim))
    return PartitionOfUnity(
        overlap=o,
        oversampling=decomp.oversampling,
        node_values=node_values,
        dof_values=dof_values,
    )


def reconstruct(decomp: Decomposition, pou: PartitionOfUnity, v: np.ndarray):
    """Sum of scattered mu_j * v|_j; equals v on free DoFs by construction."""
    out = np.zeros_like(v)
    for sub, mu in zip(decomp.subdomains, pou.dof_values):
        out[sub.dofs] += mu * v[sub.dofs]
    return out
