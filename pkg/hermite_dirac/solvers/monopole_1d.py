"""Monopole approximation: the kappa channel of the target in the spherically
averaged field of the projectile.

The radial functions P (large) and Q (small) are expanded in the same Hermite
basis. With the rest energy subtracted the Hamiltonian reads

    [ V                  c(-d/dr + kappa/r) ]
    [ c(d/dr + kappa/r)  V - 2c^2           ]

and the overlap is block-diagonal with two copies of the scalar overlap.
"""
import logging
import warnings
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from hermite_dirac.fields import (SPEED_OF_LIGHT, energy_to_mc2_plus_1, internuclear_distance,
                                  monopole_potential, nuclear_potential)
from hermite_dirac.grid_basis import (DEFAULT_ORDER, assemble_first_derivative, assemble_overlap,
                                      assemble_weighted, evaluate, make_semilog_grid)
from hermite_dirac.linalg import CrankNicolsonStepper, propagate, solve_generalized_eig, symmetric_times
from hermite_dirac.models import SpectralBasis
from hermite_dirac.utils.decorators import timed
from hermite_dirac.utils.errors import ConfigError, EigensolverError, SpuriousStateError

logger = logging.getLogger(__name__)

C2 = SPEED_OF_LIGHT ** 2
BOX_FACTOR = 19.0
# share of the point-nucleus 1s norm allowed inside r_min
CORE_FRACTION = 1e-6
# occupied negative-energy states reach this far below -2c^2, in mc^2
DETERMINANT_WINDOW = 20.0


class RadialChannel:
    """Hermite basis for one Dirac channel kappa on a radial grid.

    Args:
        grid (Grid1D): radial grid with r_0 > 0
        kappa (int): Dirac angular quantum number, nonzero
        order (int): Gauss points per element
    """

    def __init__(self, grid, kappa=-1, order=DEFAULT_ORDER):
        if kappa == 0 or int(kappa) != kappa:
            raise ConfigError(f"monopole.kappa: must be a nonzero integer, got {kappa}")
        if grid.a <= 0.0:
            raise ConfigError("monopole.r_min: radial grid must start at r > 0")
        self.grid = grid
        self.kappa = int(kappa)
        self.order = order
        self.S = assemble_overlap(grid, order)
        self.D = assemble_first_derivative(grid, order)
        self.W_inv_r = assemble_weighted(grid, lambda r: 1.0 / r, order)

    @property
    def size(self):
        return 2 * self.grid.n_basis

    @cached_property
    def overlap(self):
        S = self.S.to_sparse()
        return sp.block_diag((S, S), format="csr")

    @cached_property
    def kinetic(self):
        """Potential-free part: couplings and the -2c^2 shift of the small component."""
        S, D, W = self.S.to_sparse(), self.D.to_sparse(), self.W_inv_r.to_sparse()
        c = SPEED_OF_LIGHT
        return sp.bmat([[None, c * (-D + self.kappa * W)],
                        [c * (D + self.kappa * W), -2.0 * C2 * S]], format="csr")

    def potential_matrix(self, potential, breakpoints=()):
        W = assemble_weighted(self.grid, potential, self.order, breakpoints).to_sparse()
        return sp.block_diag((W, W), format="csr")

    def split(self, vector):
        n = self.grid.n_basis
        return vector[:n], vector[n:]

    def radial_functions(self, vector, r, deriv=0):
        """P and Q (or their deriv-th derivatives) of a coefficient vector at r."""
        p, q = self.split(vector)
        return evaluate(self.grid, p, r, deriv), evaluate(self.grid, q, r, deriv)


def point_core_radius(Z, fraction=CORE_FRACTION):
    """Radius holding about `fraction` of the point-nucleus 1s density.

    Near the origin P^2 + Q^2 ~ (2Zr)^(2 gamma) with gamma = sqrt(1 - (Z/c)^2).
    Returns None when Z >= c, where that state does not exist.
    """
    if not 0 < Z < SPEED_OF_LIGHT:
        return None
    gamma = np.sqrt(1.0 - (Z / SPEED_OF_LIGHT) ** 2)
    return float(fraction ** (0.5 / gamma) / (2.0 * Z))


def make_radial_grid(Z, nodes=96, eta=50.0, xi=1.0, r_min=1e-7, r_max=None):
    """Semi-logarithmic radial grid with `nodes` interior nodes on [r_min, 19/Z].

    r_min is an upper bound: for large Z it is lowered to point_core_radius(Z)
    so the steep 1s density near the origin stays inside the grid.
    """
    if r_max is None:
        if Z <= 0:
            raise ConfigError("monopole.r_max: needs Z_A > 0 to derive the box radius")
        r_max = BOX_FACTOR / Z
    core = point_core_radius(Z)
    if core is not None and core < r_min:
        logger.info(f"Radial grid for Z = {Z} starts at {core:.3e} a.u. instead of {r_min:.3e} a.u.")
        r_min = core
    return make_semilog_grid(r_min, r_max, nodes + 1, eta, xi)


def target_potential(system):
    """Target potential V_A(r) and the radii where it has a kink."""
    breakpoints = (system.model_a.radius_au,) if system.model_a.kind == "sphere" else ()
    return (lambda r: nuclear_potential(system.model_a, system.z_a, r)), breakpoints


def assemble_radial_hamiltonian(ch, V, breakpoints=()):
    """Radial Dirac matrix for the potential V(r), rest energy subtracted."""
    return (ch.kinetic + ch.potential_matrix(V, breakpoints)).tocsr()


def _component_norms(ch, vectors):
    S = ch.S.to_sparse()
    P, Q = ch.split(vectors)
    return np.sum(P.conj() * (S @ P), axis=0).real, np.sum(Q.conj() * (S @ Q), axis=0).real


def screen_spurious(ch, energies, vectors):
    """Indices of states whose large/small balance contradicts their energy branch.

    Gap and low positive-energy states must be dominated by P; states just
    below -2c^2 must be dominated by Q. Higher states are basis-edge states
    and are not judged.
    """
    p_norm, q_norm = _component_norms(ch, vectors)
    upper = (energies > -2.0 * C2) & (energies < C2) & (q_norm >= p_norm)
    lower = (energies <= -2.0 * C2) & (energies > -3.0 * C2) & (p_norm >= q_norm)
    return tuple(np.flatnonzero(upper | lower).tolist())


@timed("stationary spectrum")
def stationary_states(ch, V, breakpoints=(), screening="raise"):
    """Full finite-basis spectrum of the target channel.

    Args:
        screening: 'raise', 'warn' or 'off' for states failing the spurious check

    Returns:
        SpectralBasis: energies ascending, S-orthonormal eigenvectors
    """
    H = assemble_radial_hamiltonian(ch, V, breakpoints)
    energies, vectors = solve_generalized_eig(H, ch.overlap)
    negative_count = int(np.searchsorted(energies, -2.0 * C2, side="right"))
    if negative_count >= energies.size:
        raise EigensolverError("no state above -2c^2 in the spectrum")

    flagged = screen_spurious(ch, energies, vectors) if screening != "off" else ()
    if flagged:
        listing = ", ".join(f"{energies[i]:.6f}" for i in flagged[:5])
        message = f"{len(flagged)} spurious state(s) in the spectrum at energies {listing}"
        if screening == "raise":
            logger.error(message)
            raise SpuriousStateError(message)
        warnings.warn(message)
        logger.warning(message)

    basis = SpectralBasis(energies, vectors, negative_count, flagged)
    logger.info(f"Lowest state above -2c^2: {basis.bound_energy:.7f} a.u. "
                f"({negative_count} states at or below -2c^2)")
    return basis


def expectation_energy(state, H, S):
    """<C|H|C> / <C|S|C> in a.u. and as E/mc^2 + 1."""
    energy = np.real(np.vdot(state, H @ state)) / np.real(np.vdot(state, S @ state))
    return energy, energy_to_mc2_plus_1(energy)


def transition_probabilities(final, basis, S):
    """|v_j^dagger S C|^2 for every stationary state j."""
    amplitudes = basis.vectors.conj().T @ (S @ final)
    return np.abs(amplitudes) ** 2


def negative_continuum_probability(final, basis, S):
    return float(np.sum(transition_probabilities(final, basis, S)[:basis.negative_count]))


def monopole_hamiltonian(ch, system, traj):
    """Callable t -> H(t) with the target part cached."""
    V_A, breakpoints = target_potential(system)
    static = assemble_radial_hamiltonian(ch, V_A, breakpoints)
    if system.z_b == 0:
        return lambda t: static

    def hamiltonian_at(t):
        R = internuclear_distance(traj, t)
        W = ch.potential_matrix(lambda r: monopole_potential(system.z_b, R, r), (R,))
        return static + W

    return hamiltonian_at


def propagate_monopole(ch, system, traj, steps, initial, times=None, norm_tolerance=1e-6,
                       log_every=1000, on_step=None, start_step=0, history=None):
    """Crank-Nicolson propagation of one or several radial states.

    The energy <H(t)> of the first column is recorded every log_every steps
    and always at the start, at closest approach and at the end.
    """
    if times is None:
        times = symmetric_times(traj.t_start, traj.t_end, steps)
    closest = int(np.argmin(np.abs(times)))
    hamiltonian_at = monopole_hamiltonian(ch, system, traj)
    stepper = CrankNicolsonStepper(ch.overlap, solver="direct")
    result = propagate(hamiltonian_at, stepper, initial, times,
                       energy_steps={start_step, closest, len(times) - 1},
                       norm_tolerance=norm_tolerance, log_every=log_every,
                       on_step=on_step, start_step=start_step, history=history)
    at_closest = np.flatnonzero(result.energy_times == times[closest])
    if at_closest.size:
        result.observables["E_min"] = float(result.energies[at_closest[0]])
        result.observables["E_min_over_mc2_plus_1"] = energy_to_mc2_plus_1(result.observables["E_min"])
    return result


def occupied_negative_states(basis, window=DETERMINANT_WINDOW):
    """Indices of the negative-energy states treated as occupied.

    States deeper than `window` mc^2 below -2c^2 are left out; window 0 keeps
    every state at or below -2c^2.
    """
    indices = np.arange(basis.negative_count)
    if window:
        indices = indices[basis.energies[:basis.negative_count] >= -(2.0 + window) * C2]
    return indices.tolist()


def corrected_p1s(ch, basis, final_block, occupied=None):
    """Survival of the bound state with the negative continuum kept occupied.

    Args:
        final_block: propagated states, column 0 started as the bound state and
            column 1 + j as occupied state occupied[j]
        occupied: negative-energy state indices, all of them by default

    Returns:
        float: |det M|^2 with M_kl = v_k^dagger S C^(l), k over the same set
    """
    if occupied is None:
        occupied = list(range(basis.negative_count))
    selected = [basis.bound_index] + list(occupied)
    if final_block.ndim != 2 or final_block.shape[1] != len(selected):
        raise ConfigError(f"monopole.determinant: {len(selected)} propagated states needed, "
                          f"got shape {final_block.shape}")
    V = basis.vectors[:, selected]
    M = V.conj().T @ (ch.overlap @ final_block)
    sign, logabs = np.linalg.slogdet(M)
    if sign == 0:
        return 0.0
    return float(np.exp(2.0 * logabs))


@timed("monopole collision")
def collide(ch, system, traj, steps, basis=None, with_determinant=False, initial=None,
            determinant_window=DETERMINANT_WINDOW, **kwargs):
    """Full monopole collision: E_min, P_1s, P_minus and optionally P_bar_1s.

    Args:
        initial: coefficients at times[start_step] when resuming; defaults to
            the bound state, with the occupied negative-energy states as extra
            columns when with_determinant is set
        determinant_window: depth of the occupied negative continuum in mc^2, 0 for all of it
        kwargs: passed to propagate_monopole (norm_tolerance, log_every, on_step, start_step, history)
    """
    if basis is None:
        V_A, breakpoints = target_potential(system)
        basis = stationary_states(ch, V_A, breakpoints)
    occupied = occupied_negative_states(basis, determinant_window) if with_determinant else []

    if initial is not None:
        initial = np.asarray(initial, dtype=complex)
    elif with_determinant:
        initial = basis.vectors[:, [basis.bound_index] + occupied].astype(complex)
        logger.info(f"Propagating the bound state with {len(occupied)} of {basis.negative_count} "
                    f"negative-energy states")
    else:
        initial = basis.bound_vector.astype(complex)

    result = propagate_monopole(ch, system, traj, steps, initial, **kwargs)
    final = result.final if result.final.ndim == 1 else result.final[:, 0]
    probabilities = transition_probabilities(final, basis, ch.overlap)
    result.observables["P_1s"] = float(probabilities[basis.bound_index])
    result.observables["P_minus"] = float(np.sum(probabilities[:basis.negative_count]))
    if with_determinant:
        result.observables["P_bar_1s"] = corrected_p1s(ch, basis, result.final, occupied)
    logger.info(f"b = {traj.b:.6e} a.u.: " + ", ".join(f"{k} = {v:.6g}" for k, v in result.observables.items()))
    return result
