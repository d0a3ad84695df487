"""Nuclear potentials, the monopole projectile term and collision kinematics.

Atomic units throughout; lengths given in fm are converted at the boundary
with fm_to_au.
"""
import logging

import numpy as np

from hermite_dirac.models import FM_PER_AU, URANIUM_R_RMS_FM
from hermite_dirac.utils.errors import ConfigError, SingularPotentialError

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 137.035999
AMU_MEV = 931.494

PHYSICAL_CONSTANTS = {
    "c_au": SPEED_OF_LIGHT,
    "fm_per_au": FM_PER_AU,
    "amu_mev": AMU_MEV,
    "uranium_r_rms_fm": URANIUM_R_RMS_FM,
}


def fm_to_au(length_fm):
    return np.asarray(length_fm, dtype=float) / FM_PER_AU if np.ndim(length_fm) else float(length_fm) / FM_PER_AU


def au_to_fm(length_au):
    return np.asarray(length_au, dtype=float) * FM_PER_AU if np.ndim(length_au) else float(length_au) * FM_PER_AU


def energy_to_mc2_plus_1(energy):
    """Rest-subtracted energy in hartree expressed as E/mc^2 + 1."""
    return energy / SPEED_OF_LIGHT ** 2 + 1.0


def dirac_point_energy(Z, n=1, kappa=-1, c=SPEED_OF_LIGHT):
    """Bound-state energy of a point nucleus, rest energy subtracted."""
    if kappa == 0 or n < abs(kappa):
        raise ConfigError(f"system.kappa: no bound state with n={n}, kappa={kappa}")
    za = Z / c
    if za >= abs(kappa):
        raise SingularPotentialError(f"Z = {Z} has no point-nucleus bound state for kappa = {kappa}")
    gamma = np.sqrt(kappa ** 2 - za ** 2)
    return c ** 2 * ((1.0 + (za / (n - abs(kappa) + gamma)) ** 2) ** -0.5 - 1.0)


def nuclear_potential(model, Z, r):
    """Potential energy of the electron at distance r from a nucleus of charge Z."""
    r = np.asarray(r, dtype=float)
    if Z == 0:
        return np.zeros_like(r) if r.ndim else 0.0
    if model.kind == "point":
        if np.any(r <= 0.0):
            raise SingularPotentialError("point-nucleus potential evaluated at its center")
        out = -Z / r
    else:
        Rn = model.radius_au
        with np.errstate(divide="ignore"):
            out = np.where(r >= Rn, -Z / np.maximum(r, Rn), -(Z / (2.0 * Rn)) * (3.0 - (r / Rn) ** 2))
    return out if out.ndim else float(out)


def monopole_potential(Z, R, r):
    """Spherical average of a point charge Z at distance R from the origin."""
    if not R > 0.0:
        raise SingularPotentialError(f"monopole potential needs R > 0, got {R}")
    out = -Z / np.maximum(np.asarray(r, dtype=float), R)
    return out if out.ndim else float(out)


def projectile_velocity(energy_per_nucleon):
    """Velocity in a.u. of a nucleus with the given kinetic energy in MeV/u."""
    if energy_per_nucleon < 0.0:
        raise ConfigError(f"system.energy_per_nucleon: must be positive, got {energy_per_nucleon}")
    gamma = 1.0 + energy_per_nucleon / AMU_MEV
    return SPEED_OF_LIGHT * np.sqrt(1.0 - gamma ** -2)


def internuclear_distance(traj, t):
    """R(t) = sqrt(b^2 + v^2 t^2); a float for scalar t."""
    d = traj.distance(t)
    return d if np.ndim(d) else float(d)


def projectile_position(traj, t, target=(0.0, 0.0, 0.0), azimuth=0.0):
    """Projectile at (b cos(phi), b sin(phi), v t) relative to the target."""
    x0, y0, z0 = target
    return (x0 + traj.b * np.cos(azimuth), y0 + traj.b * np.sin(azimuth), z0 + traj.v * t)


def axial_projectile_z(traj, t, z_target=0.0):
    """On-axis projectile position carrying the true internuclear distance R(t).

    Before closest approach the projectile sits below the target, from t = 0 on
    above it, so for b > 0 the position jumps by 2b at t = 0.
    """
    side = -1.0 if t < 0.0 else 1.0
    return z_target + side * internuclear_distance(traj, t)


def two_center_potential(system, traj, t, position, target=(0.0, 0.0, 0.0), azimuth=0.0):
    """V_A + V_B at the given position.

    Args:
        position: coordinate arrays (rho, z) for the axial reduction or
            (x, y, z) in three dimensions; they are broadcast together
        target: target center; for (rho, z) positions only its z is used
        azimuth: direction of the impact parameter in the x-y plane
    """
    coords = [np.asarray(c, dtype=float) for c in position]
    if len(coords) == 2:
        rho, z = coords
        z_a = target[-1]
        r_a = np.hypot(rho, z - z_a)
        r_b = np.hypot(rho, z - axial_projectile_z(traj, t, z_a))
    elif len(coords) == 3:
        x, y, z = coords
        r_a = np.sqrt((x - target[0]) ** 2 + (y - target[1]) ** 2 + (z - target[2]) ** 2)
        px, py, pz = projectile_position(traj, t, target, azimuth)
        r_b = np.sqrt((x - px) ** 2 + (y - py) ** 2 + (z - pz) ** 2)
    else:
        raise ConfigError(f"position needs 2 or 3 coordinates, got {len(coords)}")
    return nuclear_potential(system.model_a, system.z_a, r_a) + nuclear_potential(system.model_b, system.z_b, r_b)
