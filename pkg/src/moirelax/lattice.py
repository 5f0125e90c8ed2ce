"""Bravais-lattice and moire geometry.

Fundamental matrices for the two layers under the four pure strain
families (twist, dilation, pure shear, simple shear), construction of the
moire cell -- including the rank-deficient simple-shear case, which needs
a Moore-Penrose pseudo-inverse -- and the disregistry maps that measure
the local shift of one layer's lattice against the other.

Conventions: lengths in Angstrom, angles in radians.  A 2x2 fundamental
matrix has the generating lattice vectors as its columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GRAPHENE_BOND_ANGSTROM = 1.42

# Relative singular-value threshold below which the layer-difference map is
# treated as rank 1 (one-dimensional moire).
RANK_DEFICIENCY_TOL = 1e-10

TWIST = "twist"
DILATION = "dilation"
PURE_SHEAR = "pure_shear"
SIMPLE_SHEAR = "simple_shear"
FAMILY_KINDS = (TWIST, DILATION, PURE_SHEAR, SIMPLE_SHEAR)


class DegenerateConfigurationError(ValueError):
    """Strain parameters that produce no moire pattern (e.g. zero twist)."""


class NoMoireError(ValueError):
    """The two layers are identical; the difference map vanishes."""


def rotation(angle: float) -> np.ndarray:
    """Counter-clockwise rotation matrix."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def quarter_turn_cw() -> np.ndarray:
    """Rotation by -pi/2, the orientation of a twist moire relative to its layers."""
    return np.array([[0.0, 1.0], [-1.0, 0.0]])


def graphene_basis(bond_length: float = GRAPHENE_BOND_ANGSTROM) -> np.ndarray:
    """Triangular-lattice fundamental matrix with 60-degree columns.

    Both columns have length sqrt(3) * bond_length (the lattice constant).
    This is the basis the built-in stacking-energy coefficients assume.
    """
    s = np.sqrt(3.0) * bond_length
    return s * np.array([[np.sqrt(3.0) / 2, np.sqrt(3.0) / 2], [-0.5, 0.5]])


def oblique_basis(lattice_constant: float) -> np.ndarray:
    """Alternate triangular basis with a vertical second column.

    Generates the same lattice as :func:`graphene_basis` when
    ``lattice_constant = sqrt(3) * bond_length`` (the bases differ by a
    unimodular column operation).  Geometry only: the built-in GSFE
    coefficient set is calibrated for the :func:`graphene_basis` column
    convention.
    """
    return lattice_constant * np.array([[np.sqrt(3.0) / 2, 0.0], [-0.5, 1.0]])


def lattice_constant(basis: np.ndarray) -> float:
    """Column length of the fundamental matrix."""
    return float(np.linalg.norm(basis[:, 0]))


def unit_cell_area(basis: np.ndarray) -> float:
    return float(abs(np.linalg.det(basis)))


@dataclass(frozen=True)
class StrainFamily:
    """One of the four pure strain families applied symmetrically to a bilayer.

    ``parameter`` is the twist angle in radians for ``twist`` and the
    dimensionless strain for the three strain variants.
    """

    kind: str
    parameter: float
    basis: np.ndarray

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ValueError(f"unknown strain family {self.kind!r}")
        basis = np.asarray(self.basis, dtype=float)
        if basis.shape != (2, 2) or not np.all(np.isfinite(basis)):
            raise ValueError("basis must be a finite 2x2 matrix")
        if abs(np.linalg.det(basis)) <= 1e-12 * np.linalg.norm(basis) ** 2:
            raise ValueError("basis matrix is singular")
        object.__setattr__(self, "basis", basis)
        p = float(self.parameter)
        if self.kind == TWIST:
            if abs(np.sin(p)) < 1e-14:
                raise DegenerateConfigurationError(
                    "twist angle must not be an integer multiple of pi")
        else:
            if p == 0.0:
                raise DegenerateConfigurationError(
                    f"{self.kind} strain must be nonzero")
            if abs(p) >= 2.0:
                raise ValueError("strain magnitude must be below 2 so 1 +/- eps/2 > 0")

    @classmethod
    def twist(cls, theta: float, basis: np.ndarray) -> "StrainFamily":
        return cls(TWIST, theta, basis)

    @classmethod
    def dilation(cls, eps: float, basis: np.ndarray) -> "StrainFamily":
        return cls(DILATION, eps, basis)

    @classmethod
    def pure_shear(cls, eps: float, basis: np.ndarray) -> "StrainFamily":
        return cls(PURE_SHEAR, eps, basis)

    @classmethod
    def simple_shear(cls, eps: float, basis: np.ndarray) -> "StrainFamily":
        return cls(SIMPLE_SHEAR, eps, basis)


def layer_pair(family: StrainFamily) -> tuple[np.ndarray, np.ndarray]:
    """Fundamental matrices of the two layers, the strain split evenly between them."""
    A = family.basis
    p = family.parameter
    if family.kind == TWIST:
        return rotation(-p / 2) @ A, rotation(p / 2) @ A
    if family.kind == DILATION:
        return (1 - p / 2) * A, (1 + p / 2) * A
    if family.kind == PURE_SHEAR:
        return (np.diag([1 - p / 2, 1 + p / 2]) @ A,
                np.diag([1 + p / 2, 1 - p / 2]) @ A)
    # simple shear: horizontal, uniaxial
    lower = np.array([[1.0, -p / 2], [0.0, 1.0]])
    upper = np.array([[1.0, p / 2], [0.0, 1.0]])
    return lower @ A, upper @ A


def _canonical_rank1_columns(a_m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unimodular column reduction of a rank-1 cell basis.

    Returns ``(generator, unimodular)`` with
    ``a_m @ unimodular = [generator | 0]``: the integer column span is
    preserved while one column is zeroed.
    """
    c0, c1 = a_m[:, 0], a_m[:, 1]
    n0, n1 = np.linalg.norm(c0), np.linalg.norm(c1)
    if n1 < 1e-12 * max(n0, 1.0):
        return c0.copy(), np.eye(2)
    if n0 < 1e-12 * max(n1, 1.0):
        return c1.copy(), np.array([[0.0, 1.0], [1.0, 0.0]])
    # columns are parallel; run the Euclidean algorithm on their ratio
    u = np.eye(2)
    c = a_m.copy()
    for _ in range(64):
        n0, n1 = np.linalg.norm(c[:, 0]), np.linalg.norm(c[:, 1])
        if n1 < 1e-9 * n0:
            return c[:, 0].copy(), u
        if n0 < 1e-9 * n1:
            perm = np.array([[0.0, 1.0], [1.0, 0.0]])
            return c[:, 1].copy(), u @ perm
        r = float(np.dot(c[:, 0], c[:, 1]) / np.dot(c[:, 1], c[:, 1]))
        q = round(r)
        if q == 0:
            c = c[:, ::-1].copy()
            u = u @ np.array([[0.0, 1.0], [1.0, 0.0]])
            continue
        step = np.array([[1.0, 0.0], [-float(q), 1.0]])
        c = c @ step
        u = u @ step
    raise NoMoireError("rank-1 cell columns are incommensurate")


def _minimal_period(m_diff: np.ndarray, generator: np.ndarray,
                    max_multiple: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Smallest integer multiple of the generator whose phase winding is integral.

    The misfit-energy landscape of a one-dimensional moire is periodic with
    real-space translation L only when (A1^-1 - A2^-1) L has integer entries;
    the pseudo-inverse generator alone may span a fraction of that period.
    """
    for m in range(1, max_multiple + 1):
        w = m_diff @ (m * generator)
        if np.max(np.abs(w - np.round(w))) < 1e-8:
            return m * generator, np.round(w).astype(int)
    raise NoMoireError("no commensurate 1D moire period within 64 generator multiples")


@dataclass(frozen=True)
class MoireCell:
    """Moire fundamental matrix and grid metadata.

    ``a_m`` is the inverse of the layer-difference map when that map is
    invertible, otherwise its Moore-Penrose pseudo-inverse (``rank == 1``).
    For rank-1 cells ``period_vector`` spans one full period of the misfit
    landscape and ``winding`` is the corresponding integral phase advance.
    """

    a_m: np.ndarray
    rank: int
    grid_n: int
    m_diff: np.ndarray
    generator: np.ndarray | None = None
    period_vector: np.ndarray | None = None
    winding: np.ndarray | None = None

    @property
    def grid_shape(self) -> tuple[int, int]:
        return (self.grid_n, self.grid_n) if self.rank == 2 else (self.grid_n, 1)

    @property
    def cell_measure(self) -> float:
        """Area of the moire cell (rank 2) or period length x 1 Angstrom (rank 1)."""
        if self.rank == 2:
            return float(abs(np.linalg.det(self.a_m)))
        return float(np.linalg.norm(self.period_vector))

    def canonical_columns(self) -> np.ndarray:
        """Cell basis after canonical column reduction; rank-1 cells have one zero column."""
        if self.rank == 2:
            return self.a_m.copy()
        return np.column_stack([self.generator, np.zeros(2)])

    def node_positions(self) -> np.ndarray:
        """Real-space sample positions, shape ``grid_shape + (2,)``."""
        n1, n2 = self.grid_shape
        t1 = np.arange(n1) / n1
        if self.rank == 2:
            t2 = np.arange(n2) / n2
            xi = np.stack(np.meshgrid(t1, t2, indexing="ij"), axis=-1)
            return xi @ self.a_m.T
        return np.multiply.outer(t1, self.period_vector)[:, None, :]

    def node_phases(self) -> np.ndarray:
        """Fractional stacking phases at the nodes, shape ``grid_shape + (2,)``.

        Rank 2: the uniform unit-square grid.  Rank 1: the winding vector
        times the grid coordinate, so one grid period advances the phase by
        an integer vector.
        """
        n1, n2 = self.grid_shape
        t1 = np.arange(n1) / n1
        if self.rank == 2:
            t2 = np.arange(n2) / n2
            return np.stack(np.meshgrid(t1, t2, indexing="ij"), axis=-1)
        return np.multiply.outer(t1, self.winding.astype(float))[:, None, :]


def moire_cell(a1: np.ndarray, a2: np.ndarray, grid_n: int) -> MoireCell:
    """Moire cell of two layer fundamental matrices.

    Raises ``NoMoireError`` when the layers coincide.  Rank deficiency is
    detected from the singular values of the difference map at relative
    threshold ``RANK_DEFICIENCY_TOL``.
    """
    a1 = np.asarray(a1, dtype=float)
    a2 = np.asarray(a2, dtype=float)
    if grid_n < 2:
        raise ValueError("grid_n must be at least 2")
    m = np.linalg.inv(a1) - np.linalg.inv(a2)
    sv = np.linalg.svd(m, compute_uv=False)
    if sv[0] < 1e-14 / max(np.linalg.norm(a1), 1.0):
        raise NoMoireError("layer matrices coincide; no moire pattern")
    if sv[1] / sv[0] < RANK_DEFICIENCY_TOL:
        a_m = np.linalg.pinv(m, rcond=RANK_DEFICIENCY_TOL)
        gen, _ = _canonical_rank1_columns(a_m)
        period, winding = _minimal_period(m, gen)
        return MoireCell(a_m=a_m, rank=1, grid_n=grid_n, m_diff=m,
                         generator=gen, period_vector=period, winding=winding)
    return MoireCell(a_m=np.linalg.inv(m), rank=2, grid_n=grid_n, m_diff=m)


# -- disregistry -------------------------------------------------------------

def disregistry_matrix_12(a1: np.ndarray, a2: np.ndarray) -> np.ndarray:
    """Linear map x -> b_{1->2}(x) before modular reduction."""
    return np.eye(2) - a2 @ np.linalg.inv(a1)


def disregistry_matrix_21(a1: np.ndarray, a2: np.ndarray) -> np.ndarray:
    return np.eye(2) - a1 @ np.linalg.inv(a2)


def wrap_to_cell(b, basis: np.ndarray):
    """Reduce vectors modulo the unit cell: fractional coordinates wrapped to [0, 1)."""
    b = np.asarray(b, dtype=float)
    frac = b @ np.linalg.inv(basis).T % 1.0
    return frac @ basis.T


def disregistry_12(x, a1: np.ndarray, a2: np.ndarray):
    """Shift of layer 1 sites relative to layer 2, reduced into layer 2's cell."""
    x = np.asarray(x, dtype=float)
    return wrap_to_cell(x @ disregistry_matrix_12(a1, a2).T, a2)


def disregistry_21(x, a1: np.ndarray, a2: np.ndarray):
    x = np.asarray(x, dtype=float)
    return wrap_to_cell(x @ disregistry_matrix_21(a1, a2).T, a1)


def curl_of_linear_map(b: np.ndarray) -> float:
    """Curl of the vector field x -> B x."""
    return float(b[1, 0] - b[0, 1])


# -- interlayer translation geometry across a stacking wall ------------------

_TRIPLET_DIRECTIONS = (
    (np.array([0.0, 1.0]), np.array([1.0, 0.0]), 0.0),
    (np.array([np.sqrt(3.0) / 2, 0.5]), np.array([-0.5, np.sqrt(3.0) / 2]),
     2.0 * np.pi / 3.0),
    (np.array([np.sqrt(3.0) / 2, -0.5]), np.array([-0.5, -np.sqrt(3.0) / 2]),
     4.0 * np.pi / 3.0),
)


def burgers_triplet(i: int, a0: float) -> tuple[np.ndarray, np.ndarray, float]:
    """Saddle point, half-Burgers vector and translation angle of wall family ``i``.

    Parameters
    ----------
    i : int
        Wall family, 1..3 (the three inequivalent orientations a triangular
        bilayer admits).
    a0 : float
        Lattice constant in Angstrom (column length of the fundamental
        matrix, i.e. ``sqrt(3) * bond_length`` for the graphene basis).

    Returns
    -------
    (b_sp, delta_b, theta0)
        Saddle-point shift, half-Burgers vector (``|delta_b| = sqrt(3) a0 / 6``)
        and the polar angle of the translation direction.  The optimal
        stackings sit at ``b_sp + delta_b`` and ``b_sp - delta_b``.
    """
    if i not in (1, 2, 3):
        raise ValueError(f"wall family index must be 1, 2 or 3, got {i}")
    sp_dir, db_dir, theta0 = _TRIPLET_DIRECTIONS[i - 1]
    b_sp = 0.5 * a0 * sp_dir
    delta_b = (np.sqrt(3.0) / 6.0) * a0 * db_dir
    return b_sp, delta_b, theta0
