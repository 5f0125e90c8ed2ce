"""Post-processing of relaxed fields.

Misfit-energy maps over the moire cell, order-parameter profiles across
stacking walls extracted along line cuts, full width at half maximum of
those profiles, and the sweep pipeline that tabulates wall widths against
the one-dimensional theory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .domainwall import WallSpec, characteristic_width, width_endpoints
from .gsfe import GsfeModel, stacking_energy
from .lattice import burgers_triplet, lattice_constant
from .relax import DisplacementField, LayerPair


class AmbiguousCutError(ValueError):
    """The cut crosses more than one wall; the profile is not a single kink."""


class UnresolvedWallError(ValueError):
    """The profile never reaches the half-maximum levels inside the cut."""


@dataclass(frozen=True)
class LineCut:
    """Straight sampling segment in lab coordinates (Angstrom)."""

    p0: np.ndarray
    p1: np.ndarray
    n_samples: int = 1001

    def __post_init__(self):
        if np.allclose(self.p0, self.p1):
            raise ValueError("cut endpoints must differ")
        if self.n_samples < 16:
            raise ValueError("need at least 16 samples along a cut")

    def points(self) -> np.ndarray:
        s = np.linspace(0.0, 1.0, self.n_samples)[:, None]
        return (1.0 - s) * self.p0[None, :] + s * self.p1[None, :]


@dataclass(frozen=True)
class OrderParameterProfile:
    """Normalized interlayer order parameter along a cut.

    ``y`` is the signed distance along the cut with 0 at the wall centre
    (the zero crossing); ``u`` runs from the -1 stacking plateau to the +1
    plateau for a single resolved wall.  ``angle`` is the angle between
    the interlayer translation direction and the cut direction (the wall
    normal when the cut was built for the wall).
    """

    y: np.ndarray
    u: np.ndarray
    triplet: int
    angle: float


@dataclass(frozen=True)
class FwhmResult:
    width: float
    y_plus: float
    y_minus: float
    interpolation_order: int


def difference_interpolator(field: DisplacementField, oversample: int = 4):
    """Callable evaluating u1 - u2 at fractional cell coordinates.

    The nodal difference field is upsampled by spectral zero padding and
    evaluated with periodic cubic interpolation; for relaxation-grade
    grids this is accurate to well below the nodal values themselves.
    """
    v = field.u1 - field.u2
    n1, n2 = field.cell.grid_shape
    m1 = oversample * n1
    m2 = oversample * n2 if n2 > 1 else 1
    spec = np.fft.fft2(v, axes=(0, 1)) / (n1 * n2)
    dense_spec = np.zeros((m1, m2, 2), dtype=complex)
    h1 = n1 // 2
    idx1_new = np.r_[0:h1, m1 - (n1 - h1):m1]
    idx1_old = np.r_[0:h1, h1:n1]
    if n2 == 1:
        dense_spec[idx1_new, 0] = spec[idx1_old, 0]
    else:
        h2 = n2 // 2
        idx2_new = np.r_[0:h2, m2 - (n2 - h2):m2]
        idx2_old = np.r_[0:h2, h2:n2]
        dense_spec[np.ix_(idx1_new, idx2_new)] = spec[np.ix_(idx1_old, idx2_old)]
    dense = np.fft.ifft2(dense_spec * (m1 * m2), axes=(0, 1)).real

    def evaluate(frac: np.ndarray) -> np.ndarray:
        frac = np.asarray(frac, dtype=float)
        coords1 = frac[..., 0] * m1
        out = np.empty(frac.shape[:-1] + (2,))
        if n2 == 1:
            for c in range(2):
                out[..., c] = ndimage.map_coordinates(
                    dense[:, 0, c], [coords1.ravel()], order=5,
                    mode="grid-wrap").reshape(coords1.shape)
            return out
        coords2 = frac[..., 1] * m2
        stacked = np.stack([coords1.ravel(), coords2.ravel()])
        for c in range(2):
            out[..., c] = ndimage.map_coordinates(
                dense[..., c], stacked, order=5,
                mode="grid-wrap").reshape(coords1.shape)
        return out

    return evaluate


def _cut_fractional_coords(field: DisplacementField, points: np.ndarray) -> np.ndarray:
    cell = field.cell
    if cell.rank == 2:
        return points @ np.linalg.inv(cell.a_m).T
    length2 = float(np.dot(cell.period_vector, cell.period_vector))
    t = points @ cell.period_vector / length2
    return np.stack([t, np.zeros_like(t)], axis=-1)


def wall_geometry(pair: LayerPair, triplet: int,
                  phase_sign: int = 1) -> dict:
    """Wall normal, translation angle and order-parameter slope for one family.

    The wall normal is the direction of steepest change of the projected
    stacking phase; the angle between the interlayer translation and that
    normal selects the width formula (0 tensile, pi/2 shear).
    """
    b_sp, delta_b, theta0 = burgers_triplet(triplet, lattice_constant(pair.basis))
    m = np.linalg.inv(pair.a1) - np.linalg.inv(pair.a2)
    grad_u = phase_sign * (pair.a2 @ m).T @ delta_b / float(delta_b @ delta_b)
    slope = float(np.linalg.norm(grad_u))
    normal = grad_u / slope
    cosang = abs(float(normal @ delta_b) / np.linalg.norm(delta_b))
    angle = float(np.arccos(np.clip(cosang, 0.0, 1.0)))
    # scale of the normalized parameter: fractional offset to the plateau
    delta_frac = np.linalg.inv(pair.basis) @ delta_b
    u_plateau = float((pair.a2 @ delta_frac) @ delta_b / (delta_b @ delta_b))
    return {"b_sp": b_sp, "delta_b": delta_b, "theta0": theta0,
            "normal": normal, "angle": angle,
            "u_slope": slope / u_plateau, "u_plateau": u_plateau,
            "delta_frac": delta_frac}


def _sp_fraction(pair: LayerPair, triplet: int) -> np.ndarray:
    b_sp, _, _ = burgers_triplet(triplet, lattice_constant(pair.basis))
    return np.linalg.inv(pair.basis) @ b_sp


def cut_for_wall(field: DisplacementField, pair: LayerPair, triplet: int,
                 length_factor: float = 1.2, n_samples: int = 1001,
                 phase_sign: int = 1) -> LineCut:
    """Cut through a wall midpoint along the wall normal.

    The half-length is ``length_factor`` times the distance at which the
    unrelaxed order parameter reaches the plateaus, so the cut spans one
    wall flanked by the two domain interiors and stays clear of the
    stacking nodes.
    """
    cell = field.cell
    geo = wall_geometry(pair, triplet, phase_sign)
    f_sp = _sp_fraction(pair, triplet) % 1.0
    if cell.rank == 2:
        center = phase_sign * (cell.a_m @ f_sp)
        direction = geo["normal"]
    else:
        q = cell.winding.astype(float)
        # location along the period where the phase passes the saddle line
        denom = float(q @ q)
        t_sp = float(q @ f_sp) / denom
        resid = q * t_sp - f_sp
        if np.max(np.abs(resid - np.round(resid))) > 1e-9:
            raise AmbiguousCutError(
                f"wall family {triplet} does not occur in this one-dimensional moire")
        center = phase_sign * t_sp * cell.period_vector
        direction = cell.period_vector / np.linalg.norm(cell.period_vector)
    y1 = 1.0 / (geo["u_slope"] * abs(float(direction @ geo["normal"])) + 1e-300)
    half = length_factor * y1
    return LineCut(p0=center - half * direction, p1=center + half * direction,
                   n_samples=n_samples)


def order_parameter(field: DisplacementField, pair: LayerPair, wall: WallSpec,
                    cut: LineCut, phase_sign: int = 1,
                    projection: str = "fixed") -> OrderParameterProfile:
    """Order parameter along a cut, -1 in one stacking domain, +1 in the other.

    The modulated stacking shift (continuous linear phase plus interpolated
    displacement difference, no modular wrap) is projected on the wall's
    interlayer translation direction and scaled so the two optimal
    stackings map exactly to -/+1.  ``projection="local"`` replaces the
    fixed translation direction by the principal direction of the measured
    shift variation, which differs at the percent level for oblique walls.
    """
    if projection not in ("fixed", "local"):
        raise ValueError("projection must be 'fixed' or 'local'")
    pts = cut.points()
    m = np.linalg.inv(pair.a1) - np.linalg.inv(pair.a2)
    zeta = phase_sign * (pts @ m.T)
    frac = _cut_fractional_coords(field, pts)
    v = difference_interpolator(field)(frac)
    shift_cart = zeta @ pair.a2.T + v

    geo = wall_geometry(pair, triplet=wall.triplet, phase_sign=phase_sign)
    delta_b = geo["delta_b"]
    # subtract the saddle representative nearest the cut centre
    center_phase = zeta[cut.n_samples // 2]
    offset = np.round(center_phase - _sp_fraction(pair, wall.triplet))
    sp_unwrapped = _sp_fraction(pair, wall.triplet) + offset
    rel = shift_cart - sp_unwrapped @ pair.a2.T

    if projection == "local":
        core = slice(cut.n_samples // 4, 3 * cut.n_samples // 4)
        d_rel = np.diff(rel[core], axis=0)
        cov = d_rel.T @ d_rel
        _, vecs = np.linalg.eigh(cov)
        direction = vecs[:, -1]
        if float(direction @ delta_b) < 0:
            direction = -direction
        direction = direction * np.linalg.norm(delta_b)
    else:
        direction = delta_b

    u_raw = rel @ direction / float(delta_b @ delta_b)
    u = u_raw / geo["u_plateau"]

    step = np.linalg.norm(pts[1] - pts[0])
    y = (np.arange(cut.n_samples) - (cut.n_samples - 1) / 2.0) * step
    y = y - _zero_crossing(y, u)
    return OrderParameterProfile(y=y, u=u, triplet=wall.triplet,
                                 angle=geo["angle"])


def _zero_crossing(y: np.ndarray, u: np.ndarray) -> float:
    core = slice(len(u) // 8, len(u) - len(u) // 8)
    uc, yc = u[core], y[core]
    signs = np.where(uc >= 0.0, 1.0, -1.0)   # an exact zero is one crossing
    flips = np.nonzero(np.diff(signs) != 0)[0]
    if flips.size == 0:
        raise UnresolvedWallError("order parameter does not cross zero inside the cut")
    if flips.size > 1:
        raise AmbiguousCutError(
            f"order parameter crosses zero {flips.size} times: cut spans several walls")
    i = flips[0]
    return float(yc[i] - uc[i] * (yc[i + 1] - yc[i]) / (uc[i + 1] - uc[i]))


def _level_crossing(y: np.ndarray, u: np.ndarray, level: float) -> tuple[float, int]:
    """Crossing position by a local cubic through the bracketing samples."""
    s = u - level
    flips = np.nonzero((s[:-1] * s[1:]) <= 0)[0]
    if flips.size == 0:
        raise UnresolvedWallError(f"profile never reaches level {level}")
    # crossing closest to the wall centre
    mid = np.argmin(np.abs(y))
    i = flips[np.argmin(np.abs(flips - mid))]
    lo = max(i - 1, 0)
    hi = min(i + 3, len(y))
    ys, us = y[lo:hi], u[lo:hi]
    order = len(ys) - 1
    if order >= 3:
        coef = np.polyfit(ys, us - level, 3)
        roots = np.roots(coef)
        real = roots[np.abs(roots.imag) < 1e-9].real
        inside = real[(real >= y[i] - 1e-12) & (real <= y[i + 1] + 1e-12)]
        if inside.size:
            return float(inside[np.argmin(np.abs(inside - y[i]))]), 3
    # linear fallback
    t = s[i] / (s[i] - s[i + 1])
    return float(y[i] + t * (y[i + 1] - y[i])), 1


def fwhm(profile: OrderParameterProfile) -> FwhmResult:
    """Full width at half maximum: distance between the u = -1/2 and u = +1/2 points."""
    u = profile.u
    if not (u.min() < -0.5 and u.max() > 0.5):
        raise UnresolvedWallError("profile does not reach the +/-1/2 levels")
    sgn = 1.0 if u[-1] > u[0] else -1.0
    y_plus, o1 = _level_crossing(profile.y, sgn * u, 0.5)
    y_minus, o2 = _level_crossing(profile.y, sgn * u, -0.5)
    return FwhmResult(width=abs(y_plus - y_minus), y_plus=y_plus, y_minus=y_minus,
                      interpolation_order=min(o1, o2))


# -- misfit-energy maps --------------------------------------------------------


@dataclass(frozen=True)
class GsfeMap:
    """Pointwise misfit energy density over the moire cell, meV per unit-cell area."""

    values: np.ndarray
    cell_basis: np.ndarray
    phase_sign: int

    @property
    def resolution(self) -> int:
        return self.values.shape[0]


def gsfe_map(field: DisplacementField, pair: LayerPair, model: GsfeModel,
             resolution: int = 256, phase_sign: int = 1) -> GsfeMap:
    """Misfit energy density on a raster over the moire cell.

    The displacement difference is spectrally interpolated onto the raster
    (zero padding), then the two per-layer stacking energies are averaged
    at the modulated shift: the quantity whose quadrature is the misfit
    energy.
    """
    cell = field.cell
    n1, n2 = cell.grid_shape
    r = max(resolution, n1)
    v = field.u1 - field.u2
    spec = np.fft.fft2(v, axes=(0, 1)) / (n1 * n2)
    if cell.rank == 2:
        dense_spec = np.zeros((r, r, 2), dtype=complex)
        h1, h2 = n1 // 2, n2 // 2
        i1n = np.r_[0:h1, r - (n1 - h1):r]
        i1o = np.r_[0:h1, h1:n1]
        i2n = np.r_[0:h2, r - (n2 - h2):r]
        i2o = np.r_[0:h2, h2:n2]
        dense_spec[np.ix_(i1n, i2n)] = spec[np.ix_(i1o, i2o)]
        v_dense = np.fft.ifft2(dense_spec * r * r, axes=(0, 1)).real
        t = np.arange(r) / r
        zeta = np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1) * phase_sign
    else:
        dense_spec = np.zeros((r, 1, 2), dtype=complex)
        h1 = n1 // 2
        i1n = np.r_[0:h1, r - (n1 - h1):r]
        i1o = np.r_[0:h1, h1:n1]
        dense_spec[i1n, 0] = spec[i1o, 0]
        v_dense = np.fft.ifft2(dense_spec * r, axes=(0, 1)).real
        t = np.arange(r) / r
        zeta = (np.multiply.outer(t, cell.winding.astype(float))
                [:, None, :]) * phase_sign
    dens = np.zeros(v_dense.shape[:2])
    for inv in (np.linalg.inv(pair.a2), np.linalg.inv(pair.a1)):
        args = 2.0 * np.pi * (zeta + v_dense @ inv.T)
        dens += 0.5 * stacking_energy(args[..., 0], args[..., 1], model)
    if cell.rank == 1:
        dens = np.repeat(dens, dens.shape[0], axis=1)
    basis = cell.a_m if cell.rank == 2 else np.column_stack(
        [cell.period_vector, cell.period_vector])
    return GsfeMap(values=dens, cell_basis=basis, phase_sign=phase_sign)


def count_peak_regions(values: np.ndarray, level: float = 0.5) -> int:
    """Connected regions above ``level`` of the value range, with torus wrap."""
    lo, hi = float(values.min()), float(values.max())
    mask = values > lo + level * (hi - lo)
    labels, n = ndimage.label(mask)
    if n == 0:
        return 0
    parent = list(range(n + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra

    for a, b in zip(labels[0, :], labels[-1, :]):
        if a and b:
            union(a, b)
    for a, b in zip(labels[:, 0], labels[:, -1]):
        if a and b:
            union(a, b)
    return len({find(i) for i in range(1, n + 1)})


# -- sweep pipeline -------------------------------------------------------------


@dataclass(frozen=True)
class WidthRow:
    """One wall measurement of the sweep report."""

    family: str
    parameter: float
    wall: str
    angle: float
    fwhm: float
    ratio: float
    theory_ratio: float


def classify_wall(angle: float) -> str:
    if angle > np.deg2rad(75.0):
        return "shear"
    if angle < np.deg2rad(15.0):
        return "tensile"
    return "mixed"


def theory_width_ratio(angle: float, moduli) -> float:
    """Predicted width over the shear-wall width at translation-to-normal angle."""
    return float(np.sqrt(1.0 + (moduli.lam + moduli.mu) / moduli.mu
                         * np.cos(angle) ** 2))


def measure_wall(field: DisplacementField, pair: LayerPair, wall: WallSpec,
                 n_samples: int = 1001, length_factor: float = 1.2,
                 phase_sign: int = 1, projection: str = "fixed"):
    """Order-parameter profile and FWHM for one wall family of a relaxed field."""
    cut = cut_for_wall(field, pair, wall.triplet, length_factor=length_factor,
                       n_samples=n_samples, phase_sign=phase_sign)
    profile = order_parameter(field, pair, wall, cut, phase_sign=phase_sign,
                              projection=projection)
    return profile, fwhm(profile)


def width_report(entries, walls: dict, reference_key=None,
                 n_samples: int = 1001, projection: str = "fixed") -> list[WidthRow]:
    """Wall-width table for a sweep of relaxed fields.

    Parameters
    ----------
    entries : list of (family, parameter, pair, field, triplets)
        One relaxed configuration per entry with the wall families to
        measure on it.
    walls : dict
        ``triplet -> WallSpec`` with the shared potential and moduli.
    reference_key : (family, parameter) or None
        Entry whose first shear-type wall provides the reference width for
        the ratio column; defaults to the smallest-parameter twist entry.

    Ratios use the measured reference width; ``theory_ratio`` is the
    width-formula prediction at each wall's measured translation angle.
    """
    measured = []
    for family, parameter, pair, fld, triplets in entries:
        for triplet in triplets:
            profile, res = measure_wall(fld, pair, walls[triplet],
                                        n_samples=n_samples,
                                        projection=projection)
            measured.append((family, parameter, triplet, profile.angle, res.width))

    if reference_key is None:
        twists = [m for m in measured if m[0] == "twist"
                  and classify_wall(m[3]) == "shear"]
        if twists:
            smallest = min(t[1] for t in twists)
            ref_width = next(t[4] for t in twists if t[1] == smallest)
        else:
            ref_width = np.nan
    else:
        ref_width = next(m[4] for m in measured
                         if (m[0], m[1]) == reference_key)

    moduli = next(iter(walls.values())).moduli
    rows = []
    for family, parameter, triplet, angle, width in measured:
        rows.append(WidthRow(
            family=family, parameter=parameter,
            wall=f"{classify_wall(angle)}-{triplet}", angle=angle,
            fwhm=width, ratio=width / ref_width if np.isfinite(ref_width) else np.nan,
            theory_ratio=theory_width_ratio(angle, moduli)))
    return rows
