"""Linear algebra for the finite-basis Dirac problem.

Generalized eigenproblems H v = e S v, Crank-Nicolson steps
(S + i dt/2 H) C' = (S - i dt/2 H) C, a complex BiCGSTAB with right
preconditioning, and the Kronecker-factored overlap S_x (x) S_y (x) S_z used by
the three-dimensional solver.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from hermite_dirac.models import PropagationResult
from hermite_dirac.utils.errors import (BreakdownError, ConvergenceError, EigensolverError,
                                        NormDriftError, SolverError)

logger = logging.getLogger(__name__)

SHADOW_SEED = 20240917


@dataclass
class CNStepReport:
    """Diagnostics of one inner solve."""
    iterations: int = 0
    residual: float = 0.0
    norm_drift: float = 0.0
    restarts: int = 0
    history: list = field(default_factory=list)


# === Kronecker overlap ===

@dataclass(frozen=True, eq=False)
class KroneckerOverlap:
    """S = S_x (x) S_y (x) S_z, repeated for every spinor component.

    Args:
        factors: banded SPD factors, one per axis (grid_basis.BandedRealMatrix)
        components: number of spinor components sharing the overlap
    """
    factors: tuple
    components: int = 4

    def __post_init__(self):
        try:
            cholesky = tuple(f.cholesky() for f in self.factors)
        except np.linalg.LinAlgError as e:
            raise SolverError(f"overlap factor is not positive definite: {e}")
        object.__setattr__(self, "_cholesky", cholesky)

    @property
    def axis_sizes(self):
        return tuple(f.n for f in self.factors)

    @property
    def size(self):
        return self.components * int(np.prod(self.axis_sizes))

    def to_sparse(self):
        out = sp.identity(self.components, format="csr")
        for f in self.factors:
            out = sp.kron(out, f.to_sparse(), format="csr")
        return out


def apply_along_axis(op, array, axis):
    """Apply a linear map acting on vectors of length array.shape[axis] to every pencil."""
    moved = np.moveaxis(array, axis, 0)
    flat = moved.reshape(moved.shape[0], -1)
    out = op(flat)
    return np.moveaxis(out.reshape((out.shape[0],) + moved.shape[1:]), 0, axis)


def _check_length(K, y):
    y = np.asarray(y)
    if y.shape[0] != K.size:
        raise SolverError(f"vector of length {y.shape[0]} does not match overlap of size {K.size}")
    return y


def kron_apply(K, y):
    """S y through the factors, without forming S."""
    y = _check_length(K, y)
    field_ = y.reshape((K.components,) + K.axis_sizes + y.shape[1:])
    for axis, f in enumerate(K.factors):
        matrix = f.to_sparse()
        field_ = apply_along_axis(lambda block: matrix @ block, field_, axis + 1)
    return field_.reshape(y.shape)


def kron_apply_inverse(K, y):
    """S^-1 y by banded Cholesky solves along each axis."""
    y = _check_length(K, y)
    if np.iscomplexobj(y):
        return kron_apply_inverse(K, y.real) + 1j * kron_apply_inverse(K, y.imag)
    field_ = y.reshape((K.components,) + K.axis_sizes + y.shape[1:])
    for axis, (f, factor) in enumerate(zip(K.factors, K._cholesky)):
        field_ = apply_along_axis(lambda block: f.cho_solve(factor, block), field_, axis + 1)
    return field_.reshape(y.shape)


# === Eigenproblems ===

def _dense(matrix):
    return matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix)


def solve_generalized_eig(H, S):
    """All eigenpairs of H v = e S v, ascending, with v_i^dagger S v_j = delta_ij."""
    H, S = _dense(H), _dense(S)
    if H.shape != S.shape or H.shape[0] != H.shape[1]:
        raise EigensolverError(f"matrix shapes {H.shape} and {S.shape} do not match")
    try:
        energies, vectors = la.eigh(H, S)
    except la.LinAlgError as e:
        raise EigensolverError(f"generalized eigenproblem failed (overlap not positive definite?): {e}")
    return energies, vectors


def lowest_bound_state(H, S, sigma, k=6, lower=None, tol=0.0):
    """Eigenpair of H v = e S v closest to sigma by shift-invert Lanczos.

    Args:
        sigma: shift, usually a reference energy of the wanted state
        k: number of eigenpairs computed around the shift
        lower: eigenvalues at or below this bound are ignored

    Returns:
        tuple: (energy, S-normalized eigenvector)
    """
    try:
        energies, vectors = spla.eigsh(sp.csc_matrix(H), k=k, M=sp.csc_matrix(S), sigma=sigma,
                                       which="LM", tol=tol)
    except (spla.ArpackNoConvergence, spla.ArpackError, RuntimeError) as e:
        raise EigensolverError(f"shift-invert eigensolver failed near {sigma}: {e}")
    candidates = np.arange(energies.size)
    if lower is not None:
        candidates = candidates[energies > lower]
    if not candidates.size:
        raise EigensolverError(f"no eigenvalue above {lower} found near {sigma}")
    best = candidates[np.argmin(np.abs(energies[candidates] - sigma))]
    vector = vectors[:, best]
    vector = vector / np.sqrt(np.real(np.vdot(vector, S @ vector)))
    logger.info(f"Shift-invert eigenpair at {energies[best]:.6f} (shift {sigma:.6f})")
    return float(energies[best]), vector


# === Krylov solver ===

def bicgstab_solve(A, rhs, tol=1e-10, max_iter=500, precond=None, x0=None):
    """Solve A x = rhs with right-preconditioned complex BiCGSTAB.

    Inner products are conjugated (np.vdot). On breakdown the iteration is
    restarted once from the current iterate with a perturbed shadow vector.

    Args:
        A: matrix or scipy LinearOperator
        precond: callable y -> M y with M approximating A^-1, or None

    Returns:
        tuple: (x, CNStepReport)
    """
    rhs = np.asarray(rhs, dtype=complex)
    if not np.all(np.isfinite(rhs)):
        raise SolverError("right-hand side is not finite")
    M = precond or (lambda v: v)
    report = CNStepReport()
    b_norm = np.linalg.norm(rhs)
    if b_norm == 0.0:
        return np.zeros_like(rhs), report
    target = tol * b_norm

    x = np.zeros_like(rhs) if x0 is None else np.array(x0, dtype=complex)
    r = rhs - A @ x
    r_norm = np.linalg.norm(r)
    report.history.append(r_norm / b_norm)
    if r_norm <= target:
        report.residual = r_norm / b_norm
        return x, report

    rng = np.random.default_rng(SHADOW_SEED)
    r_hat = r.copy()
    rho_old = alpha = omega = 1.0 + 0.0j
    v = np.zeros_like(rhs)
    p = np.zeros_like(rhs)
    breakdown_eps = np.finfo(float).eps ** 2

    while report.iterations < max_iter:
        rho = np.vdot(r_hat, r)
        if abs(rho) <= breakdown_eps * np.linalg.norm(r_hat) * r_norm or omega == 0.0:
            if report.restarts:
                raise BreakdownError(f"BiCGSTAB broke down twice after {report.iterations} iterations")
            report.restarts += 1
            logger.warning(f"BiCGSTAB breakdown at iteration {report.iterations}, restarting")
            noise = rng.standard_normal(r.shape) + 1j * rng.standard_normal(r.shape)
            r_hat = r + 1e-3 * r_norm * noise / np.linalg.norm(noise)
            rho_old = alpha = omega = 1.0 + 0.0j
            v[:] = 0.0
            p[:] = 0.0
            continue

        beta = (rho / rho_old) * (alpha / omega)
        p = r + beta * (p - omega * v)
        p_hat = M(p)
        v = A @ p_hat
        alpha = rho / np.vdot(r_hat, v)
        s = r - alpha * v
        report.iterations += 1

        s_norm = np.linalg.norm(s)
        if s_norm <= target:
            x = x + alpha * p_hat
            r_norm = s_norm
            report.history.append(r_norm / b_norm)
            break

        s_hat = M(s)
        t = A @ s_hat
        tt = np.vdot(t, t).real
        omega = np.vdot(t, s) / tt if tt > 0.0 else 0.0
        x = x + alpha * p_hat + omega * s_hat
        r = s - omega * t
        r_norm = np.linalg.norm(r)
        rho_old = rho
        report.history.append(r_norm / b_norm)
        if r_norm <= target:
            break
    else:
        raise ConvergenceError(f"BiCGSTAB reached {max_iter} iterations with relative residual "
                               f"{r_norm / b_norm:.3e} (tolerance {tol:.1e})")

    report.residual = r_norm / b_norm
    return x, report


# === Crank-Nicolson ===

class CrankNicolsonStepper:
    """Crank-Nicolson steps in a non-orthogonal basis.

    The overlap is fixed for the whole propagation; the Hamiltonian is passed
    per step. Signed dt is allowed so a run can be retraced backwards.

    Args:
        S: overlap as a sparse/dense matrix or a KroneckerOverlap
        solver: 'direct' (LU factorization) or 'bicgstab'
        tol, max_iter: BiCGSTAB settings
    """

    def __init__(self, S, solver="direct", tol=1e-10, max_iter=500):
        if solver not in ("direct", "bicgstab"):
            raise SolverError(f"unknown inner solver '{solver}'")
        self.S = S
        self.solver = solver
        self.tol = tol
        self.max_iter = max_iter
        self.kron = S if isinstance(S, KroneckerOverlap) else None
        if self.kron is not None and solver == "direct":
            self._S_matrix = self.kron.to_sparse()
        else:
            self._S_matrix = None if self.kron is not None else S
        self.iterations = 0

    def apply_overlap(self, C):
        if self.kron is not None:
            return kron_apply(self.kron, C)
        return self.S @ C

    def step(self, H, C, dt):
        """Advance C by dt under H (the Hamiltonian at the step midpoint)."""
        if not np.all(np.isfinite(C)):
            raise SolverError("state is not finite")
        half = 0.5j * dt
        rhs = self.apply_overlap(C) - half * (H @ C)
        if self.solver == "direct":
            return self._direct(H, rhs, half), CNStepReport(iterations=1)
        return self._iterative(H, rhs, half, C)

    def _direct(self, H, rhs, half):
        S = self._S_matrix
        if sp.issparse(S) or sp.issparse(H):
            A = (sp.csc_matrix(S) + half * sp.csc_matrix(H)).tocsc()
            try:
                return spla.splu(A).solve(rhs)
            except RuntimeError as e:
                raise SolverError(f"sparse LU of the Crank-Nicolson matrix failed: {e}")
        A = np.asarray(S) + half * np.asarray(H)
        try:
            return la.lu_solve(la.lu_factor(A), rhs)
        except (la.LinAlgError, ValueError) as e:
            raise SolverError(f"LU of the Crank-Nicolson matrix failed: {e}")

    def _iterative(self, H, rhs, half, C):
        n = rhs.shape[0]
        A = spla.LinearOperator((n, n), matvec=lambda x: self.apply_overlap(x) + half * (H @ x), dtype=complex)
        precond = (lambda y: kron_apply_inverse(self.kron, y)) if self.kron is not None else None
        if rhs.ndim == 1:
            x, report = bicgstab_solve(A, rhs, self.tol, self.max_iter, precond, x0=C)
            self.iterations += report.iterations
            return x, report
        columns, total = [], CNStepReport()
        for j in range(rhs.shape[1]):
            x, report = bicgstab_solve(A, rhs[:, j], self.tol, self.max_iter, precond, x0=C[:, j])
            columns.append(x)
            total.iterations += report.iterations
            total.restarts += report.restarts
            total.residual = max(total.residual, report.residual)
        self.iterations += total.iterations
        return np.stack(columns, axis=1), total


def cn_step(H_mid, S, C, dt, solver="direct", tol=1e-10, max_iter=500):
    """One Crank-Nicolson step; returns C(t + dt)."""
    C_next, _ = CrankNicolsonStepper(S, solver, tol, max_iter).step(H_mid, C, dt)
    return C_next


def symmetric_times(t_start, t_end, steps):
    """steps+1 equally spaced times; for a symmetric span with even steps the middle is exactly 0."""
    if steps < 1:
        raise SolverError(f"number of time steps must be positive, got {steps}")
    times = np.linspace(t_start, t_end, int(steps) + 1)
    if steps % 2 == 0 and np.isclose(t_start, -t_end):
        times[steps // 2] = 0.0
    return times


def _norms(stepper, C):
    SC = stepper.apply_overlap(C)
    if C.ndim == 1:
        return np.array([np.real(np.vdot(C, SC))])
    return np.real(np.einsum("ij,ij->j", C.conj(), SC))


SERIES_KEYS = ("norm0", "norms", "energy_times", "energies")


def propagate(hamiltonian_at, stepper, C0, times, energy_steps=(), norm_tolerance=1e-6,
              log_every=500, on_step=None, start_step=0, history=None):
    """Crank-Nicolson propagation over a time grid.

    <H(t)> of the first column is recorded at the steps in energy_steps and at
    every log_every-th step (every step when log_every is 0).

    Args:
        hamiltonian_at: callable t -> H(t)
        stepper: CrankNicolsonStepper
        C0: state at times[start_step]; a matrix propagates every column
        energy_steps: extra step indices at which <H(t)> is recorded
        norm_tolerance: abort when any column's norm drifts further than this
        on_step: callable (step, t, C, series) after every step, e.g. for checkpoints;
            series holds the recorded norms and energies so far
        history: series of an earlier run up to start_step, continued instead of restarted

    Returns:
        PropagationResult
    """
    C = np.array(C0, dtype=complex)
    cadence = int(log_every) if log_every else 1
    energy_steps = set(int(k) for k in energy_steps)

    def wants_energy(k):
        return k in energy_steps or k % cadence == 0

    def record_energy(t, state):
        first = state if state.ndim == 1 else state[:, 0]
        H = hamiltonian_at(t)
        value = np.real(np.vdot(first, H @ first)) / np.real(np.vdot(first, stepper.apply_overlap(first)))
        series["energy_times"].append(float(t))
        series["energies"].append(float(value))

    if history is None:
        series = {"norm0": _norms(stepper, C).tolist(), "norms": [], "energy_times": [], "energies": []}
        series["norms"].append(series["norm0"][0])
        if wants_energy(start_step):
            record_energy(times[start_step], C)
        first_step = start_step
    else:
        missing = [key for key in SERIES_KEYS if key not in history]
        if missing:
            raise SolverError(f"resumed history lacks {', '.join(missing)}")
        series = {key: list(history[key]) for key in SERIES_KEYS}
        if len(series["norms"]) != start_step + 1:
            raise SolverError(f"resumed history covers {len(series['norms'])} times, step {start_step} needs "
                              f"{start_step + 1}")
        first_step = 0
    norm0 = np.asarray(series["norm0"])

    iterations = 0
    for k in range(start_step, len(times) - 1):
        t0, t1 = times[k], times[k + 1]
        C, report = stepper.step(hamiltonian_at(0.5 * (t0 + t1)), C, t1 - t0)
        iterations += report.iterations
        current = _norms(stepper, C)
        drift = float(np.max(np.abs(current - norm0)))
        report.norm_drift = drift
        series["norms"].append(float(current[0]))
        if drift > norm_tolerance:
            logger.error(f"Norm drift {drift:.3e} at step {k + 1} (t = {t1:.6e}) exceeds {norm_tolerance:.1e}")
            raise NormDriftError(f"norm drifted by {drift:.3e} at step {k + 1}, tolerance {norm_tolerance:.1e}")
        if wants_energy(k + 1):
            record_energy(t1, C)
        if log_every and (k + 1) % log_every == 0:
            logger.info(f"Step {k + 1}/{len(times) - 1}: t = {t1:.6e}, norm = {current[0]:.12f}")
        if on_step is not None:
            on_step(k + 1, t1, C, series)

    return PropagationResult(
        times=np.asarray(times[first_step:], dtype=float),
        norms=np.asarray(series["norms"]),
        energy_times=np.asarray(series["energy_times"], dtype=float),
        energies=np.asarray(series["energies"]),
        final=C,
        solver_iterations=iterations,
    )
