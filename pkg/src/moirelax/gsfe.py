"""Generalized stacking fault energy (GSFE).

The interlayer energy cost of a uniform relative shift between two
triangular layers, modeled as a three-shell trigonometric sum over the
fractional shift, plus the effective one-dimensional double-well potential
felt across a stacking domain wall.

Energies are in meV per unit-cell area throughout (the native unit of the
built-in bilayer-graphene coefficient set); lengths are in Angstrom.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .lattice import burgers_triplet, lattice_constant, rotation


class ModelInconsistencyError(ValueError):
    """The sampled wall potential is not a double well."""


@dataclass(frozen=True)
class GsfeModel:
    """Coefficients of the trigonometric stacking-energy surface, meV per unit-cell area."""

    c0: float
    c1: float
    c2: float
    c3: float

    def __post_init__(self):
        for name in ("c0", "c1", "c2", "c3"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @classmethod
    def graphene(cls) -> "GsfeModel":
        """Built-in bilayer-graphene fit (c0 adjusted so the minimum sits at 0)."""
        return cls(7.076, 4.064, -0.374, -0.095)


@dataclass(frozen=True)
class ElasticModuli:
    """Isotropic Lame parameters, meV per unit-cell area."""

    lam: float
    mu: float

    def __post_init__(self):
        if not (np.isfinite(self.lam) and np.isfinite(self.mu)):
            raise ValueError("moduli must be finite")
        if self.mu <= 0:
            raise ValueError("shear modulus mu must be positive")
        if self.lam + self.mu <= 0:
            raise ValueError("bulk combination lam + mu must be positive")

    @classmethod
    def graphene(cls) -> "ElasticModuli":
        return cls(37950.0, 47352.0)


def _angle_tables(v, w):
    """Sines/cosines of the nine harmonic arguments via angle addition.

    Only two transcendental pairs are evaluated; the remaining shells are
    products, which matters on relaxation-sized grids.
    """
    cv, sv = np.cos(v), np.sin(v)
    cw, sw = np.cos(w), np.sin(w)
    cvw, svw = cv * cw - sv * sw, sv * cw + cv * sw
    c2v, s2v = cv * cv - sv * sv, 2.0 * sv * cv
    c2w, s2w = cw * cw - sw * sw, 2.0 * sw * cw
    cv2w, sv2w = cv * c2w - sv * s2w, sv * c2w + cv * s2w
    cvmw, svmw = cv * cw + sv * sw, sv * cw - cv * sw
    c2vw, s2vw = c2v * cw - s2v * sw, s2v * cw + c2v * sw
    c2v2w, s2v2w = c2v * c2w - s2v * s2w, s2v * c2w + c2v * s2w
    return ((cv, cw, cvw), (cv2w, cvmw, c2vw), (c2v, c2w, c2v2w),
            (sv, sw, svw), (sv2w, svmw, s2vw), (s2v, s2w, s2v2w))


def stacking_energy(v, w, model: GsfeModel):
    """Stacking energy at fractional shift phases ``(v, w)`` (radians, 2-pi periodic)."""
    (cA, cB, cC) = _angle_tables(v, w)[:3]
    return (model.c0 + model.c1 * (cA[0] + cA[1] + cA[2])
            + model.c2 * (cB[0] + cB[1] + cB[2])
            + model.c3 * (cC[0] + cC[1] + cC[2]))


def stacking_energy_grad(v, w, model: GsfeModel):
    """Partial derivatives of :func:`stacking_energy` with respect to ``v`` and ``w``."""
    _, _, _, sA, sB, sC = _angle_tables(v, w)
    sv, sw, svw = sA
    sv2w, svmw, s2vw = sB
    s2v, s2w, s2v2w = sC
    dv = -(model.c1 * (sv + svw) + model.c2 * (sv2w + svmw + 2.0 * s2vw)
           + model.c3 * (2.0 * s2v + 2.0 * s2v2w))
    dw = -(model.c1 * (sw + svw) + model.c2 * (2.0 * sv2w - svmw + s2vw)
           + model.c3 * (2.0 * s2w + 2.0 * s2v2w))
    return dv, dw


def stacking_energy_and_grad(v, w, model: GsfeModel):
    """Energy and both partials in one pass (shared trigonometric tables)."""
    cA, cB, cC, sA, sB, sC = _angle_tables(v, w)
    f = (model.c0 + model.c1 * (cA[0] + cA[1] + cA[2])
         + model.c2 * (cB[0] + cB[1] + cB[2])
         + model.c3 * (cC[0] + cC[1] + cC[2]))
    dv = -(model.c1 * (sA[0] + sA[2]) + model.c2 * (sB[0] + sB[1] + 2.0 * sB[2])
           + model.c3 * (2.0 * sC[0] + 2.0 * sC[2]))
    dw = -(model.c1 * (sA[1] + sA[2]) + model.c2 * (2.0 * sB[0] - sB[1] + sB[2])
           + model.c3 * (2.0 * sC[1] + 2.0 * sC[2]))
    return f, dv, dw


def _opposite_inverse(which: int, a1: np.ndarray, a2: np.ndarray) -> np.ndarray:
    if which not in (1, 2):
        raise ValueError("layer selector must be 1 or 2")
    target = a2 if which == 1 else a1
    det = np.linalg.det(target)
    if abs(det) <= 1e-12 * np.linalg.norm(target) ** 2:
        raise ValueError("layer fundamental matrix is singular")
    return np.linalg.inv(target)


def gsfe_layer(gamma, which: int, a1: np.ndarray, a2: np.ndarray,
               model: GsfeModel):
    """GSFE of layer ``which`` at shift ``gamma`` (Angstrom, Cartesian).

    Layer 1 is measured against layer 2's cell and vice versa:
    ``Phi_1(g) = phi(2 pi A2^-1 g)``, ``Phi_2(g) = phi(2 pi A1^-1 g)``.
    """
    inv = _opposite_inverse(which, a1, a2)
    gamma = np.asarray(gamma, dtype=float)
    args = 2.0 * np.pi * (gamma @ inv.T)
    return stacking_energy(args[..., 0], args[..., 1], model)


def gsfe_layer_grad(gamma, which: int, a1: np.ndarray, a2: np.ndarray,
                    model: GsfeModel):
    """Cartesian gradient of :func:`gsfe_layer`, meV per (unit-cell area * Angstrom)."""
    inv = _opposite_inverse(which, a1, a2)
    gamma = np.asarray(gamma, dtype=float)
    args = 2.0 * np.pi * (gamma @ inv.T)
    dv, dw = stacking_energy_grad(args[..., 0], args[..., 1], model)
    return 2.0 * np.pi * (np.stack([dv, dw], axis=-1) @ inv)


@dataclass(frozen=True)
class WallPotential:
    """Normalized double-well potential along a wall's translation path.

    ``u`` maps the dimensionless order parameter to the potential with
    wells pinned at ``U(+/-1) = 0`` and curvature ``U''(+/-1) = 1``;
    ``du`` is its derivative.  ``k_min`` is the unnormalized well curvature
    in meV per unit-cell area and ``phi_min`` the well depth that was
    subtracted.  ``c`` bounds the double-well segment ``[-c, c]``.
    """

    u: Callable[[np.ndarray], np.ndarray]
    du: Callable[[np.ndarray], np.ndarray]
    k_min: float
    phi_min: float
    c: float


def _second_derivative_richardson(f: Callable[[float], float], x: float,
                                  h0: float = 0.2, levels: int = 6,
                                  rel_tol: float = 1e-8) -> float:
    """Central second difference with Richardson extrapolation to ``rel_tol``."""
    f0 = f(x)
    table = []
    h = h0
    best = None
    for i in range(levels):
        d = (f(x + h) - 2.0 * f0 + f(x - h)) / (h * h)
        row = [d]
        for k, prev in enumerate(table[-1] if table else []):
            row.append(row[k] + (row[k] - prev) / (4.0 ** (k + 1) - 1.0))
        table.append(row)
        if best is not None and abs(row[-1] - best) <= rel_tol * abs(row[-1]):
            return row[-1]
        best = row[-1]
        h /= 2.0
    return best


def wall_potential(i: int, phi_rot: float, basis: np.ndarray, model: GsfeModel,
                   samples: int = 2001) -> WallPotential:
    """Effective 1D potential across wall family ``i`` of a bilayer rotated by ``phi_rot``.

    The potential is the layer-1 GSFE along the straight translation path
    through the saddle point, shifted to zero at the wells and normalized
    to unit well curvature.  It is independent of the global rotation,
    which cancels between the rotated path and the rotated layer cell.

    Raises ``ModelInconsistencyError`` if the sampled profile is not
    positive between the wells.
    """
    b_sp, delta_b, _ = burgers_triplet(i, lattice_constant(basis))
    rot = rotation(phi_rot)
    layer = rot @ basis
    inv = np.linalg.inv(layer)

    def raw(u):
        u = np.asarray(u, dtype=float)
        gamma = (rot @ (b_sp[:, None] + np.multiply.outer(delta_b, u).reshape(2, -1)))
        args = 2.0 * np.pi * (inv @ gamma)
        out = stacking_energy(args[0], args[1], model)
        return out.reshape(u.shape) if u.shape else float(out[0])

    phi_min = float(raw(1.0))
    k_min = _second_derivative_richardson(raw, 1.0)
    if not np.isfinite(k_min) or k_min <= 0:
        raise ModelInconsistencyError("well curvature is not positive")

    grid = np.linspace(-1.0, 1.0, samples)
    vals = (raw(grid) - phi_min) / k_min
    interior = (grid > -1.0 + 1e-9) & (grid < 1.0 - 1e-9)
    if np.any(vals[interior] <= 0.0):
        raise ModelInconsistencyError(
            "sampled wall profile is not a double well (U <= 0 between the wells)")

    def u_fn(psi):
        return (raw(psi) - phi_min) / k_min

    def du_fn(psi):
        psi = np.asarray(psi, dtype=float)
        gamma = (rot @ (b_sp[:, None] + np.multiply.outer(delta_b, psi).reshape(2, -1)))
        args = 2.0 * np.pi * (inv @ gamma)
        dv, dw = stacking_energy_grad(args[0], args[1], model)
        direction = 2.0 * np.pi * (inv @ (rot @ delta_b))
        out = (direction[0] * dv + direction[1] * dw) / k_min
        return out.reshape(psi.shape) if psi.shape else float(out[0])

    # first local maximum of U beyond the well bounds the double-well segment
    probe = np.linspace(1.0, 4.0, 1201)
    slope = u_fn(probe[1:]) - u_fn(probe[:-1])
    turning = np.nonzero((slope[:-1] > 0) & (slope[1:] <= 0))[0]
    c = float(probe[turning[0] + 1]) if turning.size else float(probe[-1])

    return WallPotential(u=u_fn, du=du_fn, k_min=float(k_min),
                         phi_min=phi_min, c=c)


def quartic_potential() -> WallPotential:
    """Normalized quartic double well ``U = (1 - psi^2)^2 / 8``; kink is tanh(t/2)."""
    return WallPotential(
        u=lambda p: (1.0 - np.asarray(p, float) ** 2) ** 2 / 8.0,
        du=lambda p: -np.asarray(p, float) * (1.0 - np.asarray(p, float) ** 2) / 2.0,
        k_min=1.0, phi_min=0.0, c=np.inf)


def sine_gordon_potential() -> WallPotential:
    """Normalized cosine well ``U = (1 + cos(pi psi)) / pi^2``."""
    return WallPotential(
        u=lambda p: (1.0 + np.cos(np.pi * np.asarray(p, float))) / np.pi ** 2,
        du=lambda p: -np.sin(np.pi * np.asarray(p, float)) / np.pi,
        k_min=1.0, phi_min=0.0, c=2.0)
