import math
import os
import sys
import unittest

import numpy as np

# Add project root to Python path
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, project_root)

from hermite_dirac.fields import (SPEED_OF_LIGHT, au_to_fm, axial_projectile_z, dirac_point_energy,
                                  energy_to_mc2_plus_1, fm_to_au, internuclear_distance, monopole_potential,
                                  nuclear_potential,
                                  projectile_position, projectile_velocity, two_center_potential)
from hermite_dirac.models import CollisionSystem, NuclearModel, ResultTable, Trajectory
from hermite_dirac.utils.errors import ConfigError, SingularPotentialError, SolverError


class ConstantsTestCase(unittest.TestCase):
    """Unit conversions and closed-form reference values."""

    def test_length_conversion(self):
        self.assertAlmostEqual(fm_to_au(52917.7), 1.0, places=14)
        self.assertAlmostEqual(au_to_fm(fm_to_au(20.0)), 20.0, places=12)
        np.testing.assert_allclose(fm_to_au(np.array([0.0, 52917.7])), [0.0, 1.0])

    def test_point_nucleus_energy_formula(self):
        Z = 92
        expected = SPEED_OF_LIGHT ** 2 * (math.sqrt(1.0 - (Z / SPEED_OF_LIGHT) ** 2) - 1.0)
        self.assertAlmostEqual(dirac_point_energy(Z), expected, places=8)
        self.assertAlmostEqual(dirac_point_energy(Z), -4861.2, delta=0.1)

    def test_hydrogen_limit(self):
        self.assertAlmostEqual(dirac_point_energy(1), -0.5, delta=1e-5)

    def test_energy_scale(self):
        self.assertAlmostEqual(energy_to_mc2_plus_1(0.0), 1.0)
        self.assertAlmostEqual(energy_to_mc2_plus_1(-SPEED_OF_LIGHT ** 2), 0.0, places=12)

    def test_supercritical_point_charge_rejected(self):
        with self.assertRaises(SingularPotentialError):
            dirac_point_energy(140)
        with self.assertRaises(ConfigError):
            dirac_point_energy(92, n=1, kappa=-2)

    def test_projectile_velocity_at_6_mev(self):
        self.assertAlmostEqual(projectile_velocity(6.0), 15.478, delta=0.01)


class PotentialTestCase(unittest.TestCase):

    def setUp(self):
        self.point = NuclearModel("point")
        self.sphere = NuclearModel("sphere")

    def test_point_potential(self):
        np.testing.assert_allclose(nuclear_potential(self.point, 92, [1.0, 2.0]), [-92.0, -46.0])

    def test_point_potential_singular_at_center(self):
        with self.assertRaises(SingularPotentialError):
            nuclear_potential(self.point, 92, [0.0, 1.0])

    def test_sphere_potential_continuous_and_finite(self):
        R = self.sphere.radius_au
        inside = nuclear_potential(self.sphere, 92, 0.0)
        self.assertAlmostEqual(inside, -1.5 * 92 / R, delta=1e-9 * 92 / R)
        below = nuclear_potential(self.sphere, 92, R * (1 - 1e-12))
        above = nuclear_potential(self.sphere, 92, R * (1 + 1e-12))
        self.assertAlmostEqual(below / above, 1.0, places=9)
        self.assertAlmostEqual(nuclear_potential(self.sphere, 92, 2 * R), -46.0 / R, delta=1e-9 / R)

    def test_sphere_radius_from_rms(self):
        self.assertAlmostEqual(self.sphere.radius_fm, math.sqrt(5.0 / 3.0) * 5.8569, places=12)

    def test_zero_charge_is_silent(self):
        np.testing.assert_array_equal(nuclear_potential(self.point, 0, np.array([0.0, 1.0])), [0.0, 0.0])

    def test_monopole_potential(self):
        np.testing.assert_allclose(monopole_potential(92, 0.5, [0.1, 0.5, 1.0]), [-184.0, -184.0, -92.0])
        with self.assertRaises(SingularPotentialError):
            monopole_potential(92, 0.0, 1.0)

    def test_unknown_model(self):
        with self.assertRaises(ConfigError):
            NuclearModel("shell")


class KinematicsTestCase(unittest.TestCase):
    """Straight-line trajectories and projectile placement."""

    def setUp(self):
        self.traj = Trajectory.from_start_distance(v=10.0, b=0.3, r_start=5.0)

    def test_trajectory_is_symmetric(self):
        self.assertAlmostEqual(self.traj.t_start, -self.traj.t_end)
        self.assertAlmostEqual(self.traj.distance(self.traj.t_start), 5.0, places=12)
        self.assertAlmostEqual(self.traj.distance(0.0), 0.3)

    def test_start_distance_must_exceed_b(self):
        with self.assertRaises(ConfigError):
            Trajectory.from_start_distance(v=10.0, b=5.0, r_start=5.0)

    def test_projectile_position(self):
        x, y, z = projectile_position(self.traj, 0.1, target=(0.0, 0.0, -1.0), azimuth=0.5 * np.pi)
        self.assertAlmostEqual(x, 0.0, places=14)
        self.assertAlmostEqual(y, 0.3)
        self.assertAlmostEqual(z, 0.0)

    def test_axial_projectile_switches_side_at_closest_approach(self):
        head_on = Trajectory.from_start_distance(v=10.0, b=0.0, r_start=5.0)
        self.assertAlmostEqual(axial_projectile_z(head_on, -0.2, 1.0), -1.0)
        self.assertAlmostEqual(axial_projectile_z(head_on, 0.2, 1.0), 3.0)
        self.assertAlmostEqual(axial_projectile_z(self.traj, 0.0, 0.0), 0.3)
        self.assertAlmostEqual(axial_projectile_z(self.traj, -1e-12, 0.0), -0.3)

    def test_internuclear_distance(self):
        R = internuclear_distance(self.traj, 0.04)
        self.assertIsInstance(R, float)
        self.assertAlmostEqual(R, 0.5, places=14)
        np.testing.assert_allclose(internuclear_distance(self.traj, np.array([-0.04, 0.0])), [0.5, 0.3])

    def test_two_center_potential_in_both_geometries(self):
        system = CollisionSystem(z_a=92, z_b=92)
        t = 0.1
        cartesian = two_center_potential(system, self.traj, t, (0.0, 0.0, 0.5))
        px, py, pz = projectile_position(self.traj, t)
        expected = -92.0 / 0.5 - 92.0 / math.sqrt(px ** 2 + py ** 2 + (pz - 0.5) ** 2)
        self.assertAlmostEqual(float(cartesian), expected, places=10)

        axial = two_center_potential(system, self.traj, t, (0.0, 0.5))
        R = self.traj.distance(t)
        self.assertAlmostEqual(float(axial), -92.0 / 0.5 - 92.0 / abs(R - 0.5), places=10)

        with self.assertRaises(ConfigError):
            two_center_potential(system, self.traj, t, (0.0,))


class ResultTableTestCase(unittest.TestCase):

    def test_rows_fill_missing_columns(self):
        table = ResultTable(mode="collide2d")
        table.add_row(b_fm=0.0, model="point", P_ct=0.1)
        self.assertIsNone(table.rows[0]["P_minus"])
        self.assertTrue(table.has_values("P_ct"))
        self.assertFalse(table.has_values("P_bar_1s"))

    def test_probabilities_must_be_in_unit_interval(self):
        table = ResultTable(mode="collide1d")
        with self.assertRaises(SolverError):
            table.add_row(b_fm=20.0, P_1s=1.2)

    def test_unknown_column(self):
        with self.assertRaises(ConfigError):
            ResultTable(mode="sweep").add_row(b_fm=1.0, colour="red")


if __name__ == '__main__':
    unittest.main()
