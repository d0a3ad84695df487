"""Axially symmetric collisions (head-on reduction).

The four cylindrical components U^k(rho, z) of the m sector carry the factor
sqrt(rho), so every inner product is a plain integral over (rho, z). The
Hamiltonian, with K = c(d/drho + m/rho), is

    [ V        0       c d/dz   K      ]
    [ 0        V       -K^+     -c d/dz]
    [ -c d/dz  -K      V - 2c^2  0     ]
    [ K^+      c d/dz  0       V - 2c^2]

Coefficients are ordered component-major, then rho, then z (fastest).
"""
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from hermite_dirac.fields import (SPEED_OF_LIGHT, axial_projectile_z, dirac_point_energy, fm_to_au,
                                  nuclear_potential)
from hermite_dirac.grid_basis import (DEFAULT_ORDER, TensorAssembler, assemble_first_derivative,
                                      assemble_overlap, assemble_weighted, collocation_matrix,
                                      element_quadrature, make_uniform_grid, snap_to_element_midpoint)
from hermite_dirac.linalg import CrankNicolsonStepper, lowest_bound_state, propagate, symmetric_times
from hermite_dirac.models import SpinorField2D
from hermite_dirac.utils.decorators import timed
from hermite_dirac.utils.errors import ConfigError

logger = logging.getLogger(__name__)

C2 = SPEED_OF_LIGHT ** 2


@dataclass(frozen=True, eq=False)
class CylGrid:
    """Uniform (rho, z) grids of one m sector."""
    rho_grid: object
    z_grid: object
    m: float = 0.5

    def __post_init__(self):
        if self.rho_grid.a != 0.0:
            raise ConfigError(f"axial.rho: grid must start on the axis, got {self.rho_grid.a}")
        if abs(self.m) % 1.0 != 0.5:
            raise ConfigError(f"axial.m: must be half-integer, got {self.m}")

    @property
    def shape(self):
        return (self.rho_grid.n_basis, self.z_grid.n_basis)

    @property
    def size(self):
        return 4 * self.shape[0] * self.shape[1]

    def descriptor(self):
        return {"rho": self.rho_grid.descriptor(), "z": self.z_grid.descriptor(), "m": self.m}


def make_cyl_grid(rho_max_fm, z_length_fm, rho_nodes, z_nodes, m=0.5):
    """Box [0, rho_max] x [-L/2, L/2] with the given interior node counts.

    The rho grid keeps the slope spline on the axis: every U^k vanishes at
    rho = 0 but may rise linearly from it.
    """
    rho = make_uniform_grid(0.0, fm_to_au(rho_max_fm), rho_nodes + 1, left_slope=True)
    half = 0.5 * fm_to_au(z_length_fm)
    z = make_uniform_grid(-half, half, z_nodes + 1)
    return CylGrid(rho, z, m)


class AxialOperators:
    """Potential-independent matrices of a CylGrid, built once."""

    def __init__(self, grid, order=DEFAULT_ORDER):
        self.grid = grid
        self.order = order
        rho, z = grid.rho_grid, grid.z_grid
        S_rho, S_z = assemble_overlap(rho, order).to_sparse(), assemble_overlap(z, order).to_sparse()
        D_rho, D_z = assemble_first_derivative(rho, order).to_sparse(), assemble_first_derivative(z, order).to_sparse()
        W_rho = assemble_weighted(rho, lambda r: 1.0 / r, order).to_sparse()
        self.S_rho, self.S_z = S_rho, S_z
        self.scalar_overlap = sp.kron(S_rho, S_z, format="csr")
        self.cDz = SPEED_OF_LIGHT * sp.kron(S_rho, D_z, format="csr")
        self.K = SPEED_OF_LIGHT * sp.kron(D_rho + grid.m * W_rho, S_z, format="csr")
        self.assembler = TensorAssembler([rho, z])

    @cached_property
    def overlap(self):
        return sp.block_diag([self.scalar_overlap] * 4, format="csr")

    @cached_property
    def kinetic(self):
        S, cDz, K = self.scalar_overlap, self.cDz, self.K
        return sp.bmat([
            [None, None, cDz, K],
            [None, None, -K.T, -cDz],
            [-cDz, -K, -2.0 * C2 * S, None],
            [K.T, cDz, None, -2.0 * C2 * S],
        ], format="csr")

    def potential_matrix(self, potential, z_breakpoints=()):
        """Scalar matrix of V(rho, z) in the tensor basis (one component)."""
        quads = [element_quadrature(self.grid.rho_grid, self.order),
                 element_quadrature(self.grid.z_grid, self.order, z_breakpoints)]
        values = potential(quads[0].points[:, None], quads[1].points[None, :])
        return self.assembler.assemble(values, quads)


def place_target(grid, shift_fm):
    """Target z coordinate moved to the midpoint of its z element."""
    z_a, snap = snap_to_element_midpoint(grid.z_grid, fm_to_au(shift_fm))
    logger.info(f"Target placed at z = {z_a:.6e} a.u. (snapped by {snap:.3e} a.u.)")
    return z_a


def assemble_hc(ops, potential, z_breakpoints=()):
    """Full four-component Hamiltonian for the potential V(rho, z)."""
    V = ops.potential_matrix(potential, z_breakpoints)
    return (ops.kinetic + sp.block_diag([V] * 4, format="csr")).tocsr()


def initial_state_2d(ops, system, z_target, sigma=None):
    """Lowest target state above -2c^2 in the m sector, by shift-invert.

    Returns:
        tuple: (SpinorField2D, energy)
    """
    def potential(rho, z):
        return nuclear_potential(system.model_a, system.z_a, np.hypot(rho, z - z_target))

    H = assemble_hc(ops, potential, (z_target,))
    if sigma is None:
        sigma = dirac_point_energy(system.z_a)
    energy, vector = lowest_bound_state(H, ops.overlap, sigma, lower=-2.0 * C2)
    return SpinorField2D(vector, ops.grid.shape), energy


def axial_hamiltonian(ops, system, traj, z_target):
    """Callable t -> H(t); the target part is assembled once."""
    def target(rho, z):
        return nuclear_potential(system.model_a, system.z_a, np.hypot(rho, z - z_target))

    static = assemble_hc(ops, target, (z_target,))
    if system.z_b == 0:
        return lambda t: static

    def hamiltonian_at(t):
        z_b = axial_projectile_z(traj, t, z_target)

        def projectile(rho, z):
            return nuclear_potential(system.model_b, system.z_b, np.hypot(rho, z - z_b))

        V_B = ops.potential_matrix(projectile, (z_target, z_b))
        return static + sp.block_diag([V_B] * 4, format="csr")

    return hamiltonian_at


def half_space_probabilities(ops, field, z_divide, order=DEFAULT_ORDER):
    """Density integrated over z < z_divide and z > z_divide.

    The z quadrature is split at the dividing plane, so both integrals are
    exact for the piecewise polynomial density.
    """
    q_rho = element_quadrature(ops.grid.rho_grid, order)
    q_z = element_quadrature(ops.grid.z_grid, order, (z_divide,))
    B_rho = collocation_matrix(ops.grid.rho_grid, q_rho.points)
    B_z = collocation_matrix(ops.grid.z_grid, q_z.points)
    density = np.zeros((q_rho.points.size, q_z.points.size))
    for k in range(4):
        U = B_rho @ (B_z @ field.component(k).T).T
        density += np.abs(U) ** 2
    weighted = q_rho.weights @ density * q_z.weights
    above = q_z.points > z_divide
    return float(np.sum(weighted[~above])), float(np.sum(weighted[above]))


def charge_transfer_2d(ops, field, z_divide):
    """Probability on the projectile side (z > z_divide)."""
    return half_space_probabilities(ops, field, z_divide)[1]


def final_dividing_plane(traj, t_end, z_target):
    """Midpoint of the internuclear segment at the end of the run."""
    return 0.5 * (z_target + axial_projectile_z(traj, t_end, z_target))


@timed("axial collision")
def propagate_2d(ops, system, traj, steps, initial, z_target, times=None, norm_tolerance=1e-6,
                 log_every=500, on_step=None, start_step=0, history=None):
    """Crank-Nicolson run with sparse LU inner solves.

    <H(t)> is recorded every log_every steps and at closest approach.
    """
    if times is None:
        times = symmetric_times(traj.t_start, traj.t_end, steps)
    hamiltonian_at = axial_hamiltonian(ops, system, traj, z_target)
    stepper = CrankNicolsonStepper(ops.overlap, solver="direct")
    C0 = np.array(initial.vector)
    result = propagate(hamiltonian_at, stepper, C0, times,
                       energy_steps={start_step, int(np.argmin(np.abs(times)))},
                       norm_tolerance=norm_tolerance, log_every=log_every,
                       on_step=on_step, start_step=start_step, history=history)
    return result


def collide_2d(ops, system, traj, steps, z_target, initial=None, reference=None, **kwargs):
    """Full axial collision with survival and charge-transfer probabilities.

    Args:
        initial: state at the first time; defaults to the target eigenstate
        reference: state the survival amplitude is projected on; defaults to initial
    """
    if initial is None:
        initial, energy = initial_state_2d(ops, system, z_target)
        logger.info(f"Axial initial state energy: {energy:.4f} a.u.")
    if reference is None:
        reference = initial
    result = propagate_2d(ops, system, traj, steps, initial, z_target, **kwargs)
    final = SpinorField2D(result.final, ops.grid.shape)
    amplitude = np.vdot(reference.vector, ops.overlap @ final.vector)
    z_divide = final_dividing_plane(traj, traj.t_end, z_target)
    above = charge_transfer_2d(ops, final, z_divide)
    below = float(np.real(np.vdot(final.vector, ops.overlap @ final.vector))) - above
    result.observables.update({"P_1s": float(abs(amplitude) ** 2), "P_ct": above,
                               "P_target_side": below, "z_divide": z_divide})
    logger.info(f"b = {traj.b:.6e} a.u.: P_1s = {result.observables['P_1s']:.6f}, P_ct = {above:.6f}")
    return result, final
