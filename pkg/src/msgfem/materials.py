"""Orthotropic ply materials and stiffness-tensor rotations.

Voigt ordering is (11, 22, 33, 23, 13, 12) with engineering shear strain,
i.e. the 6x6 stiffness maps (e11, e22, e33, 2*e23, 2*e13, 2*e12) to
(s11, s22, s33, s23, s13, s12).  All moduli are in MPa, angles in degrees.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# (i, j) tensor index pairs for each Voigt slot
VOIGT_PAIRS = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))


@dataclass(frozen=True)
class OrthotropicMaterial:
    """Orthotropic ply described by nine engineering constants plus a
    fibre orientation angle about the through-thickness axis.

    Parameters
    ----------
    e1, e2, e3 : float
        Young's moduli along the material axes (MPa).
    g12, g13, g23 : float
        Shear moduli (MPa).
    nu12, nu13, nu23 : float
        Major Poisson ratios.
    theta_deg : float
        In-plane rotation of the fibre direction, in (-180, 180].
    """

    e1: float
    e2: float
    e3: float
    g12: float
    g13: float
    g23: float
    nu12: float
    nu13: float
    nu23: float
    theta_deg: float = 0.0

    def __post_init__(self):
        if not (-180.0 < self.theta_deg <= 180.0):
            raise ValueError(f"theta_deg must lie in (-180, 180], got {self.theta_deg}")
        for name in ("e1", "e2", "e3", "g12", "g13", "g23"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")

    def compliance(self) -> np.ndarray:
        """6x6 compliance matrix in the unrotated ply frame."""
        s = np.zeros((6, 6))
        s[0, 0] = 1.0 / self.e1
        s[1, 1] = 1.0 / self.e2
        s[2, 2] = 1.0 / self.e3
        s[0, 1] = s[1, 0] = -self.nu12 / self.e1
        s[0, 2] = s[2, 0] = -self.nu13 / self.e1
        s[1, 2] = s[2, 1] = -self.nu23 / self.e2
        s[3, 3] = 1.0 / self.g23
        s[4, 4] = 1.0 / self.g13
        s[5, 5] = 1.0 / self.g12
        return s

    def stiffness(self) -> np.ndarray:
        """6x6 stiffness in the ply frame; raises if not SPD."""
        c = np.linalg.inv(self.compliance())
        c = 0.5 * (c + c.T)
        _require_spd(c)
        return c


def _require_spd(c: np.ndarray) -> None:
    eigvals = np.linalg.eigvalsh(c)
    if eigvals[0] <= 0.0:
        raise ValueError(
            "stiffness matrix is not positive definite "
            f"(min eigenvalue {eigvals[0]:.3e}); check engineering constants"
        )


def stress_rotation_matrix(theta_rad: float) -> np.ndarray:
    """Bond matrix transforming Voigt stress under a rotation by
    ``theta_rad`` about the third (through-thickness) axis."""
    c, s = np.cos(theta_rad), np.sin(theta_rad)
    return np.array(
        [
            [c * c, s * s, 0.0, 0.0, 0.0, -2.0 * c * s],
            [s * s, c * c, 0.0, 0.0, 0.0, 2.0 * c * s],
            [0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, c, s, 0.0],
            [0.0, 0.0, 0.0, -s, c, 0.0],
            [c * s, -c * s, 0.0, 0.0, 0.0, c * c - s * s],
        ]
    )


def rotate_stiffness(c_voigt: np.ndarray, theta_deg: float) -> np.ndarray:
    """Rotate a 6x6 Voigt stiffness by ``theta_deg`` about the z axis.

    Uses the Bond transformation C' = M C M^T, where M is the stress
    rotation matrix; equivalent to rotating the underlying fourth-order
    tensor.  The result is symmetrized to kill round-off skew.
    """
    m = stress_rotation_matrix(np.deg2rad(theta_deg))
    c = m @ c_voigt @ m.T
    return 0.5 * (c + c.T)


def rotated_stiffness(material: OrthotropicMaterial) -> np.ndarray:
    """Ply stiffness rotated into the global frame by the ply angle."""
    c = rotate_stiffness(material.stiffness(), material.theta_deg)
    _require_spd(c)
    return c


def plane_strain_stiffness(c_voigt: np.ndarray) -> np.ndarray:
    """3x3 plane-strain stiffness (rows/cols 11, 22, 12 of the 6x6).

    Valid for plies rotated about the out-of-plane axis, for which the
    (11, 22, 12) block decouples from the out-of-plane shears.
    """
    idx = np.array([0, 1, 5])
    return c_voigt[np.ix_(idx, idx)]


def mandel_form(c_voigt: np.ndarray) -> np.ndarray:
    """Orthonormal (Mandel) form of a Voigt stiffness.

    Rotations act on this form as orthogonal similarity transforms, so its
    eigenvalues (the Kelvin moduli) are rotation invariants.
    """
    p = np.diag([1.0, 1.0, 1.0, np.sqrt(2.0), np.sqrt(2.0), np.sqrt(2.0)])
    return p @ c_voigt @ p


def rotation_matrix_z(theta_deg: float) -> np.ndarray:
    """3x3 rotation about the z axis (material -> global)."""
    c, s = np.cos(np.deg2rad(theta_deg)), np.sin(np.deg2rad(theta_deg))
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


# Synthetic orthotropic ply with a 10:1 stiffness contrast.  Used as the
# default in tests and shipped configs so that nothing depends on vendor
# datasheets.
SYNTHETIC_PLY = OrthotropicMaterial(
    e1=1.0e5,
    e2=1.0e4,
    e3=1.0e4,
    g12=5.0e3,
    g13=5.0e3,
    g23=3.0e3,
    nu12=0.30,
    nu13=0.30,
    nu23=0.40,
)
