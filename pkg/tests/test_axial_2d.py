import os
import sys
import unittest

import numpy as np

# Add project root to Python path
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, project_root)

from hermite_dirac.fields import SPEED_OF_LIGHT, fm_to_au, nuclear_potential, projectile_velocity
from hermite_dirac.grid_basis import make_uniform_grid
from hermite_dirac.models import CollisionSystem, SpinorField2D, Trajectory
from hermite_dirac.solvers.axial_2d import (AxialOperators, CylGrid, assemble_hc, axial_hamiltonian, collide_2d,
                                            final_dividing_plane, half_space_probabilities, initial_state_2d,
                                            make_cyl_grid, place_target)
from hermite_dirac.utils.errors import ConfigError

HEAVY = os.getenv("HERMITE_DIRAC_HEAVY") == "1"
C2 = SPEED_OF_LIGHT ** 2
FM = 1.0 / 52917.7


class AxialTestCase(unittest.TestCase):
    """Head-on geometry on a reduced cylindrical box."""

    @classmethod
    def setUpClass(cls):
        cls.grid = make_cyl_grid(5000.0, 20000.0, rho_nodes=8, z_nodes=24)
        cls.ops = AxialOperators(cls.grid)
        cls.z_target = place_target(cls.grid, -5000.0)
        cls.system = CollisionSystem(z_a=92, z_b=92)
        cls.initial, cls.energy = initial_state_2d(cls.ops, cls.system, cls.z_target)
        cls.v = projectile_velocity(6.0)

    def _trajectory(self, b_fm):
        return Trajectory.from_start_distance(self.v, b_fm * FM, 10000.0 * FM)

    # === Operators ===

    def test_grid_shape(self):
        self.assertEqual(self.grid.shape, (17, 48))
        self.assertEqual(self.grid.size, 4 * 17 * 48)
        self.assertEqual(self.ops.overlap.shape, (self.grid.size, self.grid.size))

    def test_grid_validation(self):
        with self.assertRaises(ConfigError):
            make_cyl_grid(5000.0, 20000.0, 8, 24, m=1.0)

    def test_hamiltonian_is_symmetric(self):
        def potential(rho, z):
            return nuclear_potential(self.system.model_a, 92, np.hypot(rho, z - self.z_target))

        H = assemble_hc(self.ops, potential, (self.z_target,))
        self.assertLess(abs(H - H.T).max(), 1e-12 * abs(H).max())

    def test_target_on_element_midpoint(self):
        nodes = self.grid.z_grid.nodes
        e = np.searchsorted(nodes, self.z_target) - 1
        self.assertAlmostEqual(self.z_target, 0.5 * (nodes[e] + nodes[e + 1]), places=14)

    # === Initial state ===

    def test_initial_state_is_bound_and_normalized(self):
        self.assertGreater(self.energy, -2.0 * C2)
        self.assertLess(self.energy, 0.0)
        x = self.initial.vector
        self.assertAlmostEqual(float(np.real(np.vdot(x, self.ops.overlap @ x))), 1.0, places=10)

    def test_axis_slope_spline_lowers_the_energy(self):
        rho = make_uniform_grid(0.0, fm_to_au(5000.0), 9)
        flat = AxialOperators(CylGrid(rho, self.grid.z_grid, self.grid.m))
        self.assertEqual(flat.grid.shape, (16, 48))
        _, energy = initial_state_2d(flat, self.system, self.z_target)
        self.assertLess(self.energy, energy)

    def test_half_spaces_add_up_to_the_norm(self):
        below, above = half_space_probabilities(self.ops, self.initial, 0.3 * self.z_target)
        self.assertAlmostEqual(below + above, 1.0, places=10)
        self.assertGreater(below, above)

    def test_field_shape_checked(self):
        with self.assertRaises(ConfigError):
            SpinorField2D(np.zeros(10), self.grid.shape)

    # === Propagation ===

    def test_dividing_plane_is_final_midpoint(self):
        traj = self._trajectory(20.0)
        plane = final_dividing_plane(traj, traj.t_end, self.z_target)
        self.assertAlmostEqual(plane, self.z_target + 0.5 * 10000.0 * FM, places=12)

    def test_projectile_free_run_stays_on_target(self):
        system = self.system.without_projectile()
        result, final = collide_2d(self.ops, system, self._trajectory(20.0), 4, self.z_target,
                                   initial=self.initial, log_every=0)
        self.assertGreater(result.observables["P_1s"], 1.0 - 1e-8)
        self.assertLess(result.observables["P_ct"], 1e-3)
        self.assertIsInstance(final, SpinorField2D)

    def test_hamiltonian_follows_projectile(self):
        hamiltonian_at = axial_hamiltonian(self.ops, self.system, self._trajectory(20.0), self.z_target)
        self.assertGreater(abs(hamiltonian_at(-1e-3) - hamiltonian_at(1e-3)).max(), 0.0)

    def test_short_collision_is_unitary(self):
        result, _ = collide_2d(self.ops, self.system, self._trajectory(20.0), 40, self.z_target,
                               initial=self.initial, log_every=0)
        obs = result.observables
        self.assertLess(result.norm_drift, 1e-6)
        self.assertTrue(0.0 <= obs["P_ct"] <= 1.0)
        self.assertTrue(0.0 <= obs["P_1s"] <= 1.0 + 1e-9)
        self.assertAlmostEqual(obs["P_ct"] + obs["P_target_side"], result.norms[-1], places=8)

    @unittest.skipUnless(HEAVY, "set HERMITE_DIRAC_HEAVY=1 for production grids")
    def test_production_grid_initial_energy(self):
        grid = make_cyl_grid(5000.0, 20000.0, rho_nodes=26, z_nodes=100)
        ops = AxialOperators(grid)
        _, energy = initial_state_2d(ops, self.system, place_target(grid, -5000.0))
        self.assertAlmostEqual(energy, -4849.0, delta=3.0)


if __name__ == '__main__':
    unittest.main()
