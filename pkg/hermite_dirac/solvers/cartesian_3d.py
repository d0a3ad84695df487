"""Full three-dimensional collisions on a Cartesian tensor grid.

Each of the four Dirac components (standard representation) is expanded in
s_a(x) s_b(y) s_c(z). The overlap is S_x (x) S_y (x) S_z per component and is
never formed during propagation: S, S^-1 and the kinetic couplings are all
applied axis by axis. Only the potential is held as an explicit sparse matrix.
"""
import logging
from functools import cached_property
from math import comb

import numpy as np
import scipy.sparse as sp

from hermite_dirac.fields import SPEED_OF_LIGHT, fm_to_au, nuclear_potential, projectile_position
from hermite_dirac.grid_basis import (DEFAULT_ORDER, TensorAssembler, assemble_first_derivative,
                                      assemble_overlap, collocation_matrix, element_quadrature,
                                      make_uniform_grid, snap_to_element_midpoint)
from hermite_dirac.linalg import (CrankNicolsonStepper, KroneckerOverlap, apply_along_axis, kron_apply,
                                  propagate, symmetric_times)
from hermite_dirac.models import SpinorField3D
from hermite_dirac.utils.decorators import timed
from hermite_dirac.utils.errors import ConfigError

logger = logging.getLogger(__name__)

C2 = SPEED_OF_LIGHT ** 2


class CartGrid3D:
    """Three uniform grids; basis size 4 * n_x * n_y * n_z."""

    def __init__(self, x_grid, y_grid, z_grid):
        for name, g in (("x", x_grid), ("y", y_grid), ("z", z_grid)):
            if g.kind != "uniform":
                raise ConfigError(f"cartesian.{name}: grid must be uniform")
        self.grids = (x_grid, y_grid, z_grid)

    @property
    def shape(self):
        return tuple(g.n_basis for g in self.grids)

    @property
    def size(self):
        return 4 * int(np.prod(self.shape))

    def descriptor(self):
        return {axis: g.descriptor() for axis, g in zip("xyz", self.grids)}


def make_cart_grid(box_fm=(6900.0, 6900.0, 13800.0), nodes=(8, 8, 16)):
    """Box centered on the origin with the given interior node counts per axis.

    An even node count gives an odd number of elements, so the axis origin is
    an element midpoint.
    """
    grids = []
    for length, n in zip(box_fm, nodes):
        half = 0.5 * fm_to_au(length)
        grids.append(make_uniform_grid(-half, half, n + 1))
    return CartGrid3D(*grids)


def place_target(grid, shift_fm):
    """Target at (0, 0, shift), each coordinate moved to its element midpoint."""
    position, snaps = [], []
    for g, x in zip(grid.grids, (0.0, 0.0, fm_to_au(shift_fm))):
        snapped, snap = snap_to_element_midpoint(g, x)
        position.append(snapped)
        snaps.append(snap)
    logger.info(f"Target placed at {tuple(round(p, 9) for p in position)} a.u. "
                f"(snapped by {max(snaps):.3e} a.u.)")
    return tuple(position)


def assemble_overlap_3d(grid):
    """Per-component overlap S_x (x) S_y (x) S_z, kept in factored form."""
    return KroneckerOverlap(tuple(assemble_overlap(g) for g in grid.grids), components=4)


def _tensor_apply(field, matrices):
    """(M_0 (x) M_1 (x) M_2) applied to a field of shape (n_x, n_y, n_z)."""
    for axis, M in enumerate(matrices):
        field = apply_along_axis(lambda block: M @ block, field, axis)
    return field


class CartesianOperators:
    """Axis factors, the Kronecker overlap and the potential assembler of a grid."""

    def __init__(self, grid, order=DEFAULT_ORDER):
        self.grid = grid
        self.order = order
        self.overlap = assemble_overlap_3d(grid)
        self.S = tuple(f.to_sparse() for f in self.overlap.factors)
        self.D = tuple(assemble_first_derivative(g).to_sparse() for g in grid.grids)
        self.assembler = TensorAssembler(grid.grids)

    @property
    def shape(self):
        return self.grid.shape

    @property
    def n(self):
        return int(np.prod(self.shape))

    def derivative(self, field, axis):
        """(d/dx_axis tensor S in the other directions) applied to a scalar field."""
        mats = list(self.S)
        mats[axis] = self.D[axis]
        return _tensor_apply(field, mats)

    def scalar_overlap(self, field):
        return _tensor_apply(field, self.S)

    def sigma_p(self, g1, g2):
        """sigma . p with p = -i grad acting on a two-component field."""
        dx1, dy1, dz1 = (self.derivative(g1, a) for a in range(3))
        dx2, dy2, dz2 = (self.derivative(g2, a) for a in range(3))
        return -1j * dz1 - 1j * dx2 - dy2, -1j * dx1 + dy1 + 1j * dz2

    def quadratures(self, breakpoints=((), (), ())):
        return [element_quadrature(g, self.order, bp) for g, bp in zip(self.grid.grids, breakpoints)]

    def potential_matrix(self, potential, breakpoints=((), (), ())):
        """Scalar matrix of V(x, y, z) sampled on the tensor Gauss points."""
        quads = self.quadratures(breakpoints)
        x, y, z = (q.points for q in quads)
        values = potential(x[:, None, None], y[None, :, None], z[None, None, :])
        return self.assembler.assemble(values, quads, chunk=8)

    @cached_property
    def kinetic_sparse(self):
        """Explicit sparse kinetic part, for small grids and checks."""
        Sx, Sy, Sz = self.S
        Dx, Dy, Dz = self.D
        Px = -1j * sp.kron(Dx, sp.kron(Sy, Sz))
        Py = -1j * sp.kron(Sx, sp.kron(Dy, Sz))
        Pz = -1j * sp.kron(Sx, sp.kron(Sy, Dz))
        S = sp.kron(Sx, sp.kron(Sy, Sz))
        B = SPEED_OF_LIGHT * sp.bmat([[Pz, Px - 1j * Py], [Px + 1j * Py, -Pz]])
        rest = sp.block_diag([sp.csr_matrix(S.shape), sp.csr_matrix(S.shape), -2.0 * C2 * S, -2.0 * C2 * S])
        return (sp.bmat([[None, B], [B, None]]) + rest).tocsr()


class DiracOperator3D:
    """H = c alpha.p + (beta - 1) c^2 + V applied through the axis factors.

    Args:
        ops: CartesianOperators
        V: sparse scalar potential matrix (one component)
    """

    def __init__(self, ops, V):
        self.ops = ops
        self.V = V
        self.shape = (ops.grid.size, ops.grid.size)
        self.dtype = np.dtype(complex)

    def matvec(self, x):
        ops = self.ops
        F = np.asarray(x, dtype=complex).reshape((4,) + ops.shape)
        out = (self.V @ F.reshape(4, -1).T).T.reshape(F.shape)
        u1, u2 = ops.sigma_p(F[2], F[3])
        l1, l2 = ops.sigma_p(F[0], F[1])
        out[0] += SPEED_OF_LIGHT * u1
        out[1] += SPEED_OF_LIGHT * u2
        out[2] += SPEED_OF_LIGHT * l1 - 2.0 * C2 * ops.scalar_overlap(F[2])
        out[3] += SPEED_OF_LIGHT * l2 - 2.0 * C2 * ops.scalar_overlap(F[3])
        return out.reshape(-1)

    def __matmul__(self, x):
        x = np.asarray(x)
        if x.ndim == 1:
            return self.matvec(x)
        return np.stack([self.matvec(x[:, j]) for j in range(x.shape[1])], axis=1)

    def to_sparse(self):
        return assemble_dirac_3d(self.ops, self.V)


def assemble_dirac_3d(ops, V):
    """Explicit sparse Hamiltonian for the scalar potential matrix V."""
    return (ops.kinetic_sparse + sp.block_diag([V] * 4)).tocsr()


def target_potential_matrix(ops, system, target):
    def potential(x, y, z):
        r = np.sqrt((x - target[0]) ** 2 + (y - target[1]) ** 2 + (z - target[2]) ** 2)
        return nuclear_potential(system.model_a, system.z_a, r)

    return ops.potential_matrix(potential, tuple((c,) for c in target))


def cartesian_hamiltonian(ops, system, traj, target, azimuth=0.0, static=None):
    """Callable t -> DiracOperator3D(t); the target potential is assembled once.

    Args:
        static: target potential matrix when the caller already has it
    """
    if static is None:
        static = target_potential_matrix(ops, system, target)
    if system.z_b == 0:
        fixed = DiracOperator3D(ops, static)
        return lambda t: fixed

    def hamiltonian_at(t):
        p = projectile_position(traj, t, target, azimuth)

        def projectile(x, y, z):
            r = np.sqrt((x - p[0]) ** 2 + (y - p[1]) ** 2 + (z - p[2]) ** 2)
            return nuclear_potential(system.model_b, system.z_b, r)

        breakpoints = tuple((c, d) for c, d in zip(target, p))
        return DiracOperator3D(ops, static + ops.potential_matrix(projectile, breakpoints))

    return hamiltonian_at


# === Initial state ===

def _inverse_power_derivatives(F, r, n):
    """Derivatives 0..3 of F(r) r^-n from the derivatives of F (Leibniz rule)."""
    powers = []
    for m in range(4):
        coeff = (-1) ** m * np.prod([n + j for j in range(m)]) if m else 1.0
        powers.append(coeff * r ** (-n - m))
    return [sum(comb(k, j) * F[j] * powers[k - j] for j in range(k + 1)) for k in range(4)]


def _cartesian_partials(G, r):
    """D_k with d^a G(r) = x^a_x y^a_y z^a_z D_|a| for multi-indices with entries 0 or 1."""
    G0, G1, G2, G3 = G
    return [G0,
            G1 / r,
            (G2 - G1 / r) / r ** 2,
            (G3 - 3.0 * G2 / r + 3.0 * G1 / r ** 2) / r ** 3]


def _partial(D, X, Y, Z, alpha):
    ax, ay, az = alpha
    out = D[ax + ay + az]
    if ax:
        out = out * X
    if ay:
        out = out * Y
    if az:
        out = out * Z
    return out


def _partial_times_coordinate(D, X, Y, Z, alpha, j):
    """d^alpha (x_j h(r)) = x_j d^alpha h + alpha_j d^(alpha - e_j) h."""
    coords = (X, Y, Z)
    out = coords[j] * _partial(D, X, Y, Z, alpha)
    if alpha[j]:
        lowered = list(alpha)
        lowered[j] = 0
        out = out + _partial(D, X, Y, Z, tuple(lowered))
    return out


def initial_state_3d(ops, channel, radial_vector, target):
    """Hermite interpolant of the kappa = -1, m = +1/2 central-field state.

    With g = P/r and h = Q/r^2 the spinor is
    (4 pi)^-1/2 (g, 0, -i z h, -i (x + i y) h), coordinates relative to the
    target. Each coefficient is the mixed partial d_x^mu d_y^nu d_z^lambda of a
    component at an interior node; the state is renormalized afterwards.
    """
    if channel.kappa != -1:
        raise ConfigError(f"cartesian.kappa: interpolated initial state needs kappa = -1, got {channel.kappa}")
    nodes = [g.interior - c for g, c in zip(ops.grid.grids, target)]
    X, Y, Z = np.meshgrid(*nodes, indexing="ij")
    r = np.sqrt(X ** 2 + Y ** 2 + Z ** 2)
    if np.any(r == 0.0):
        raise ConfigError("cartesian.target: target center coincides with a grid node")

    flat = r.ravel()
    P, Q = zip(*(channel.radial_functions(radial_vector, flat, deriv=k) for k in range(4)))
    P = [np.asarray(p).reshape(r.shape) for p in P]
    Q = [np.asarray(q).reshape(r.shape) for q in Q]
    Dg = _cartesian_partials(_inverse_power_derivatives(P, r, 1), r)
    Dh = _cartesian_partials(_inverse_power_derivatives(Q, r, 2), r)

    norm = (4.0 * np.pi) ** -0.5
    shape = r.shape
    coeffs = np.zeros((4, shape[0], 2, shape[1], 2, shape[2], 2), dtype=complex)
    for mu in (0, 1):
        for nu in (0, 1):
            for lam in (0, 1):
                alpha = (mu, nu, lam)
                coeffs[0, :, mu, :, nu, :, lam] = norm * _partial(Dg, X, Y, Z, alpha)
                coeffs[2, :, mu, :, nu, :, lam] = -1j * norm * _partial_times_coordinate(Dh, X, Y, Z, alpha, 2)
                coeffs[3, :, mu, :, nu, :, lam] = -1j * norm * (
                    _partial_times_coordinate(Dh, X, Y, Z, alpha, 0)
                    + 1j * _partial_times_coordinate(Dh, X, Y, Z, alpha, 1))

    vector = coeffs.reshape(-1)
    if not np.all(np.isfinite(vector)):
        raise ConfigError("cartesian.target: interpolated state is not finite at a node")
    norm2 = np.real(np.vdot(vector, kron_apply(ops.overlap, vector)))
    logger.info(f"Interpolated initial state norm before renormalization: {norm2:.8f}")
    return SpinorField3D(vector / np.sqrt(norm2), ops.shape)


def energy_expectation_3d(ops, field, V):
    """<H> / <S> of a field for the scalar potential matrix V."""
    H = DiracOperator3D(ops, V)
    x = field.vector
    return float(np.real(np.vdot(x, H @ x)) / np.real(np.vdot(x, kron_apply(ops.overlap, x))))


# === Charge transfer ===

def half_space_probabilities_3d(ops, field, plane_point, plane_normal, order=DEFAULT_ORDER):
    """Density integrated on both sides of a plane.

    The z quadrature is split at the plane's z and every Gauss point is
    assigned to the side it lies on. A plane normal to z (azimuth-free head-on
    geometry) is therefore integrated exactly. For a tilted plane the elements
    it cuts are not split along it, so the result carries a quadrature error
    that shrinks with the element size and the quadrature order.

    Returns:
        tuple: (behind, in front) with the normal pointing to the front side
    """
    breakpoints = ((), (), (plane_point[2],))
    quads = [element_quadrature(g, order, bp) for g, bp in zip(ops.grid.grids, breakpoints)]
    B = [collocation_matrix(g, q.points) for g, q in zip(ops.grid.grids, quads)]
    density = np.zeros(tuple(q.points.size for q in quads))
    for k in range(4):
        density += np.abs(_tensor_apply(field.component(k), B)) ** 2
    x, y, z = (q.points for q in quads)
    n = np.asarray(plane_normal, dtype=float)
    n = n / np.linalg.norm(n)
    side = ((x[:, None, None] - plane_point[0]) * n[0] + (y[None, :, None] - plane_point[1]) * n[1]
            + (z[None, None, :] - plane_point[2]) * n[2]) > 0.0
    w = quads[0].weights[:, None, None] * quads[1].weights[None, :, None] * quads[2].weights[None, None, :]
    weighted = w * density
    return float(np.sum(weighted[~side])), float(np.sum(weighted[side]))


def final_dividing_plane_3d(traj, target, azimuth=0.0):
    """Midpoint and direction of the internuclear segment at the end of the run."""
    p = np.array(projectile_position(traj, traj.t_end, target, azimuth))
    t = np.asarray(target, dtype=float)
    return 0.5 * (t + p), p - t


def charge_transfer_3d(ops, field, plane_point, plane_normal):
    """Probability in front of the dividing plane, on the projectile side."""
    return half_space_probabilities_3d(ops, field, plane_point, plane_normal, ops.order)[1]


# === Propagation ===

@timed("cartesian collision")
def propagate_3d(ops, system, traj, steps, initial, target, azimuth=0.0, tol=1e-10, max_iter=500,
                 times=None, norm_tolerance=1e-6, log_every=16, on_step=None, start_step=0, history=None,
                 static=None):
    """Crank-Nicolson run with BiCGSTAB inner solves preconditioned by S^-1.

    <H(t)> is recorded every log_every steps and at closest approach.
    """
    if times is None:
        times = symmetric_times(traj.t_start, traj.t_end, steps)
    hamiltonian_at = cartesian_hamiltonian(ops, system, traj, target, azimuth, static)
    stepper = CrankNicolsonStepper(ops.overlap, solver="bicgstab", tol=tol, max_iter=max_iter)
    result = propagate(hamiltonian_at, stepper, np.array(initial.vector), times,
                       energy_steps={start_step, int(np.argmin(np.abs(times)))},
                       norm_tolerance=norm_tolerance, log_every=log_every, on_step=on_step,
                       start_step=start_step, history=history)
    logger.info(f"BiCGSTAB used {result.solver_iterations} iterations over {len(times) - 1 - start_step} steps")
    return result


def collide_3d(ops, system, traj, steps, target, initial, azimuth=0.0, reference=None, **kwargs):
    """Full 3D collision with survival and charge-transfer probabilities.

    The observables also hold E_target, the energy of the reference state in
    the target field alone.
    """
    if reference is None:
        reference = initial
    static = target_potential_matrix(ops, system, target)
    e_target = energy_expectation_3d(ops, reference, static)
    logger.info(f"Reference state energy in the target field: {e_target:.4f} a.u.")
    result = propagate_3d(ops, system, traj, steps, initial, target, azimuth, static=static, **kwargs)
    final = SpinorField3D(result.final, ops.shape)
    amplitude = np.vdot(reference.vector, kron_apply(ops.overlap, final.vector))
    point, normal = final_dividing_plane_3d(traj, target, azimuth)
    front = charge_transfer_3d(ops, final, point, normal)
    behind = float(np.real(np.vdot(final.vector, kron_apply(ops.overlap, final.vector)))) - front
    result.observables.update({"P_1s": float(abs(amplitude) ** 2), "P_ct": front, "P_target_side": behind,
                               "E_target": e_target})
    logger.info(f"b = {traj.b:.6e} a.u.: P_1s = {result.observables['P_1s']:.6f}, P_ct = {front:.6f}")
    return result, final
