import os
import sys
import unittest

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import expm

# Add project root to Python path
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, project_root)

from hermite_dirac.grid_basis import assemble_first_derivative, assemble_overlap, make_uniform_grid
from hermite_dirac.linalg import (CrankNicolsonStepper, KroneckerOverlap, bicgstab_solve, cn_step,
                                  kron_apply, kron_apply_inverse, lowest_bound_state, propagate,
                                  solve_generalized_eig, symmetric_times)
from hermite_dirac.utils.errors import ConvergenceError, NormDriftError, SolverError


def _random_hermitian_problem(n, seed=3):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    H = 0.5 * (A + A.conj().T)
    B = rng.standard_normal((n, n))
    S = B @ B.T + n * np.eye(n)
    return H, S


class EigenproblemTestCase(unittest.TestCase):

    def test_generalized_eigenvectors_are_s_orthonormal(self):
        H, S = _random_hermitian_problem(12)
        energies, vectors = solve_generalized_eig(H, S)
        self.assertTrue(np.all(np.diff(energies) >= 0.0))
        np.testing.assert_allclose(vectors.conj().T @ S @ vectors, np.eye(12), atol=1e-10)
        np.testing.assert_allclose(H @ vectors, S @ vectors * energies, atol=1e-9)

    def test_shift_invert_finds_nearest_state(self):
        H, S = _random_hermitian_problem(30, seed=5)
        H = H.real + H.real.T
        energies, _ = solve_generalized_eig(H, S)
        target = energies[12]
        energy, vector = lowest_bound_state(sp.csr_matrix(H), sp.csr_matrix(S), sigma=target + 1e-3, k=4)
        self.assertAlmostEqual(energy, target, places=8)
        self.assertAlmostEqual(float(np.real(np.vdot(vector, S @ vector))), 1.0, places=10)


class KroneckerTestCase(unittest.TestCase):
    """Overlap applied and inverted through its one-dimensional factors."""

    def setUp(self):
        self.factors = tuple(assemble_overlap(make_uniform_grid(0.0, 2.0 * (4 + k), 4 + k)) for k in range(3))
        self.K = KroneckerOverlap(self.factors, components=2)
        rng = np.random.default_rng(11)
        self.y = rng.standard_normal(self.K.size) + 1j * rng.standard_normal(self.K.size)

    def test_apply_matches_explicit_kron(self):
        np.testing.assert_allclose(kron_apply(self.K, self.y), self.K.to_sparse() @ self.y, atol=1e-13)

    def test_inverse_is_identity(self):
        np.testing.assert_allclose(kron_apply_inverse(self.K, kron_apply(self.K, self.y)), self.y, atol=1e-10)

    def test_multiple_columns(self):
        Y = np.stack([self.y, 2.0 * self.y], axis=1)
        np.testing.assert_allclose(kron_apply(self.K, Y)[:, 1], 2.0 * kron_apply(self.K, self.y), atol=1e-13)

    def test_length_checked(self):
        with self.assertRaises(SolverError):
            kron_apply(self.K, self.y[:-1])


class BiCGSTABTestCase(unittest.TestCase):

    def setUp(self):
        grid = make_uniform_grid(-1.0, 1.0, 20)
        self.S = assemble_overlap(grid).to_sparse()
        self.D = assemble_first_derivative(grid).to_sparse()
        self.A = (self.S + 0.005 * self.D).astype(complex).tocsr()
        lu = spla.splu(self.S.tocsc())
        self.precond = lambda v: lu.solve(v.real) + 1j * lu.solve(v.imag)
        rng = np.random.default_rng(2)
        self.b = rng.standard_normal(self.S.shape[0]) + 1j * rng.standard_normal(self.S.shape[0])

    def test_solves_complex_system(self):
        x, report = bicgstab_solve(self.A, self.b, tol=1e-12, max_iter=400, precond=self.precond)
        self.assertLessEqual(report.residual, 1e-12)
        np.testing.assert_allclose(self.A @ x, self.b, atol=1e-10 * np.linalg.norm(self.b))

    def test_restarts_are_counted(self):
        _, report = bicgstab_solve(self.A, self.b, tol=1e-10, max_iter=400, precond=self.precond)
        self.assertEqual(report.restarts, 0)
        self.assertEqual(len(report.history), report.iterations + 1)

    def test_zero_rhs(self):
        x, report = bicgstab_solve(self.A, np.zeros(self.S.shape[0]))
        self.assertEqual(report.iterations, 0)
        self.assertFalse(np.any(x))

    def test_iteration_cap(self):
        with self.assertRaises(ConvergenceError):
            bicgstab_solve(self.A, self.b, tol=1e-14, max_iter=1)


class CrankNicolsonTestCase(unittest.TestCase):
    """Unitarity and reversibility of the propagator."""

    def setUp(self):
        H, S = _random_hermitian_problem(10, seed=9)
        self.H, self.S = H, S
        rng = np.random.default_rng(4)
        C = rng.standard_normal(10) + 1j * rng.standard_normal(10)
        self.C = C / np.sqrt(np.real(np.vdot(C, S @ C)))

    def test_step_conserves_s_norm(self):
        C = self.C
        for _ in range(20):
            C = cn_step(self.H, self.S, C, 0.3)
        self.assertAlmostEqual(float(np.real(np.vdot(C, self.S @ C))), 1.0, places=12)

    def test_backward_step_inverts_forward_step(self):
        forward = cn_step(self.H, self.S, self.C, 0.5)
        back = cn_step(self.H, self.S, forward, -0.5)
        np.testing.assert_allclose(back, self.C, atol=1e-12)

    def test_eigenstate_only_acquires_phase(self):
        energies, vectors = solve_generalized_eig(self.H, self.S)
        v = vectors[:, 0].astype(complex)
        dt = 0.1
        out = cn_step(self.H, self.S, v, dt)
        phase = (1 - 0.5j * dt * energies[0]) / (1 + 0.5j * dt * energies[0])
        np.testing.assert_allclose(out, phase * v, atol=1e-12)

    def test_iterative_and_direct_agree(self):
        direct = cn_step(sp.csr_matrix(self.H), sp.csr_matrix(self.S), self.C, 0.2)
        iterative = cn_step(sp.csr_matrix(self.H), sp.csr_matrix(self.S), self.C, 0.2, solver="bicgstab",
                            tol=1e-13, max_iter=200)
        np.testing.assert_allclose(iterative, direct, atol=1e-10)

    def test_propagator_preserves_the_overlap(self):
        """U^dagger S U = S for U = (S + i dt/2 H)^-1 (S - i dt/2 H)."""
        H, S = _random_hermitian_problem(20, seed=17)
        U = cn_step(H, S, np.eye(20, dtype=complex), 0.7)
        np.testing.assert_allclose(U.conj().T @ S @ U, S, rtol=0, atol=1e-12 * np.abs(S).max())

    def test_local_error_against_matrix_exponential(self):
        """With S = 1 one step differs from exp(-i H dt) by O(dt^3)."""
        H, _ = _random_hermitian_problem(4, seed=23)
        H = H / np.linalg.norm(H, 2)
        rng = np.random.default_rng(5)
        C = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        C = C / np.linalg.norm(C)
        errors = [np.linalg.norm(cn_step(H, np.eye(4), C, dt) - expm(-1j * H * dt) @ C) for dt in (0.05, 0.025)]
        self.assertLess(errors[0], 1e-4)
        self.assertAlmostEqual(errors[0] / errors[1], 8.0, delta=1.0)

    def test_unknown_solver(self):
        with self.assertRaises(SolverError):
            CrankNicolsonStepper(self.S, solver="jacobi")


class PropagateTestCase(unittest.TestCase):

    def setUp(self):
        H, S = _random_hermitian_problem(8, seed=13)
        self.H, self.S = H, S
        self.stepper = CrankNicolsonStepper(S)
        _, vectors = solve_generalized_eig(H, S)
        self.C0 = vectors[:, :2].astype(complex)

    def test_symmetric_times_hit_zero(self):
        times = symmetric_times(-2.0, 2.0, 10)
        self.assertEqual(times[5], 0.0)
        self.assertEqual(times.size, 11)
        with self.assertRaises(SolverError):
            symmetric_times(-1.0, 1.0, 0)

    def test_records_energy_and_norms(self):
        times = symmetric_times(-1.0, 1.0, 8)
        steps_seen = []
        result = propagate(lambda t: self.H, self.stepper, self.C0, times, energy_steps={0, 4, 8},
                           on_step=lambda k, t, C, series: steps_seen.append(k))
        self.assertEqual(steps_seen, list(range(1, 9)))
        self.assertEqual(result.final.shape, self.C0.shape)
        np.testing.assert_allclose(result.energy_times, [-1.0, 0.0, 1.0])
        np.testing.assert_allclose(result.energies, result.energies[0], rtol=1e-10)
        self.assertLess(result.norm_drift, 1e-12)
        self.assertEqual(len(result.time_series()), 9)

    def test_resume_from_intermediate_step_matches(self):
        times = symmetric_times(-1.0, 1.0, 8)
        H_of_t = lambda t: self.H * (1.0 + 0.3 * t)
        full = propagate(H_of_t, self.stepper, self.C0, times)
        saved = {}
        propagate(H_of_t, self.stepper, self.C0, times,
                  on_step=lambda k, t, C, series: saved.setdefault(k, C.copy()))
        resumed = propagate(H_of_t, self.stepper, saved[3], times, start_step=3)
        np.testing.assert_array_equal(resumed.final, full.final)
        self.assertEqual(resumed.times[0], times[3])

    def test_energy_follows_the_log_cadence(self):
        times = symmetric_times(-1.0, 1.0, 8)
        every_step = propagate(lambda t: self.H, self.stepper, self.C0, times, log_every=0)
        np.testing.assert_array_equal(every_step.energy_times, times)
        sparse = propagate(lambda t: self.H, self.stepper, self.C0, times, energy_steps={4}, log_every=3)
        np.testing.assert_array_equal(sparse.energy_times, times[[0, 3, 4, 6]])

    def test_resume_with_history_continues_the_series(self):
        times = symmetric_times(-1.0, 1.0, 8)
        H_of_t = lambda t: self.H * (1.0 + 0.3 * t)
        saved = {}

        def keep(k, t, C, series):
            saved[k] = (C.copy(), {key: list(value) for key, value in series.items()})

        full = propagate(H_of_t, self.stepper, self.C0, times, energy_steps={4}, log_every=3, on_step=keep)
        C5, series5 = saved[5]
        resumed = propagate(H_of_t, self.stepper, C5, times, energy_steps={4}, log_every=3, start_step=5,
                            history=series5)
        np.testing.assert_array_equal(resumed.times, full.times)
        np.testing.assert_array_equal(resumed.norms, full.norms)
        np.testing.assert_array_equal(resumed.energy_times, full.energy_times)
        np.testing.assert_array_equal(resumed.energies, full.energies)
        np.testing.assert_array_equal(resumed.final, full.final)

    def test_history_must_match_start_step(self):
        times = symmetric_times(-1.0, 1.0, 8)
        history = {"norm0": [1.0, 1.0], "norms": [1.0, 1.0], "energy_times": [], "energies": []}
        with self.assertRaises(SolverError):
            propagate(lambda t: self.H, self.stepper, self.C0, times, start_step=4, history=history)
        with self.assertRaises(SolverError):
            propagate(lambda t: self.H, self.stepper, self.C0, times, start_step=1, history={"norms": [1.0, 1.0]})

    def test_halving_the_step_converges_at_second_order(self):
        """Differences of successive halvings shrink fourfold for a smooth H(t)."""
        H0, S = _random_hermitian_problem(6, seed=31)
        H1, _ = _random_hermitian_problem(6, seed=37)
        H0, H1 = H0 / np.linalg.norm(H0, 2), H1 / np.linalg.norm(H1, 2)
        H_of_t = lambda t: H0 + np.exp(-t ** 2) * H1
        stepper = CrankNicolsonStepper(S)
        _, vectors = solve_generalized_eig(H0, S)
        C0 = vectors[:, 0].astype(complex)
        finals = [propagate(H_of_t, stepper, C0, symmetric_times(-2.0, 2.0, n)).final for n in (40, 80, 160)]
        order = np.log2(np.linalg.norm(finals[0] - finals[1]) / np.linalg.norm(finals[1] - finals[2]))
        self.assertAlmostEqual(order, 2.0, delta=0.3)

    def test_norm_drift_aborts(self):
        leaky = lambda t: self.H - 0.5j * np.eye(8)
        with self.assertRaises(NormDriftError):
            propagate(leaky, self.stepper, self.C0, symmetric_times(-1.0, 1.0, 4), norm_tolerance=1e-6)


if __name__ == '__main__':
    unittest.main()
