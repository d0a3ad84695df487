import csv
import os
import shutil
import sys
import tempfile
import unittest

import numpy as np

# Add project root to Python path
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, project_root)

from hermite_dirac.app import CheckpointPlan, collide_monopole
from hermite_dirac.config import load_run_config
from hermite_dirac.models import STATIONARY_COLUMNS, ResultTable
from hermite_dirac.utils.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from hermite_dirac.utils.errors import CheckpointError, ConfigError
from hermite_dirac.utils.output import (config_hash, emit_plot_data, provenance, read_plot_data,
                                        read_table_json, write_table_csv, write_table_json)


class CheckpointTestCase(unittest.TestCase):
    """Binary checkpoints and resumed propagation."""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()
        self.path = os.path.join(self.test_dir, "run.ckpt")
        self.descriptor = {"method": "monopole", "basis": {"kind": "semilog", "nodes": 49}, "b_fm": 20.0}
        rng = np.random.default_rng(7)
        self.C = rng.standard_normal((12, 3)) + 1j * rng.standard_normal((12, 3))

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_round_trip_is_exact(self):
        save_checkpoint(self.path, self.descriptor, -0.0123, 42, self.C)
        t, step, C, descriptor, series = load_checkpoint(self.path, self.descriptor)
        self.assertEqual(t, -0.0123)
        self.assertEqual(step, 42)
        np.testing.assert_array_equal(C, self.C)
        self.assertEqual(descriptor, self.descriptor)
        self.assertIsNone(series)
        self.assertFalse(os.path.exists(self.path + ".tmp"))

    def test_recorded_series_is_stored(self):
        series = {"norm0": [1.0, 1.0, 1.0], "norms": [1.0, 0.9999999999999998],
                  "energy_times": [-0.5], "energies": [-4861.197896]}
        save_checkpoint(self.path, self.descriptor, 0.25, 1, self.C, series)
        saved = load_checkpoint(self.path, self.descriptor)
        self.assertEqual(saved.series, series)
        self.assertEqual(saved.step, 1)

    def test_version_one_files_are_still_read(self):
        save_checkpoint(self.path, self.descriptor, 0.0, 3, self.C)
        with open(self.path, "rb") as f:
            raw = bytearray(f.read())
        raw[4:6] = (1).to_bytes(2, "little")
        with open(self.path, "wb") as f:
            f.write(bytes(raw))
        self.assertEqual(load_checkpoint(self.path).step, 3)
        raw[4:6] = (9).to_bytes(2, "little")
        with open(self.path, "wb") as f:
            f.write(bytes(raw))
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.path)

    def test_different_basis_refused(self):
        save_checkpoint(self.path, self.descriptor, 0.0, 1, self.C)
        other = dict(self.descriptor, basis={"kind": "semilog", "nodes": 97})
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.path, other)

    def test_wrong_magic(self):
        with open(self.path, "wb") as f:
            f.write(b"NOPE" + bytes(64))
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.path)

    def test_truncated_payload(self):
        save_checkpoint(self.path, self.descriptor, 0.0, 1, self.C)
        with open(self.path, "rb") as f:
            raw = f.read()
        self.assertTrue(raw.startswith(MAGIC))
        with open(self.path, "wb") as f:
            f.write(raw[:-8])
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.path)

    def test_missing_file(self):
        with self.assertRaises(CheckpointError):
            load_checkpoint(os.path.join(self.test_dir, "absent.ckpt"))

    def test_resumed_collision_matches_uninterrupted_run(self):
        cfg = load_run_config(tier="testing", overrides={"run": {"mode": "collide1d"}})
        plan = CheckpointPlan(path=self.path, every=150)
        row, full = collide_monopole(cfg, 20.0, "point", plan)
        saved = load_checkpoint(self.path)
        self.assertEqual(saved.step, 150)
        self.assertEqual(len(saved.series["norms"]), 151)

        resumed_row, resumed = collide_monopole(cfg, 20.0, "point", CheckpointPlan(resume=self.path))
        np.testing.assert_array_equal(resumed.times, full.times)
        np.testing.assert_array_equal(resumed.energy_times, full.energy_times)
        self.assertIsNotNone(resumed_row["E_min_over_mc2_plus_1"])
        self.assertEqual(resumed_row["E_min_over_mc2_plus_1"], row["E_min_over_mc2_plus_1"])
        np.testing.assert_allclose(resumed.final, full.final, rtol=0, atol=1e-12)
        self.assertAlmostEqual(resumed_row["P_1s"], row["P_1s"], places=12)
        self.assertAlmostEqual(resumed_row["P_bar_1s"], row["P_bar_1s"], places=10)

    def test_resume_with_other_impact_parameter_refused(self):
        cfg = load_run_config(tier="testing", overrides={"run": {"mode": "collide1d"}})
        collide_monopole(cfg, 20.0, "point", CheckpointPlan(path=self.path, every=100))
        with self.assertRaises(CheckpointError):
            collide_monopole(cfg, 30.0, "point", CheckpointPlan(resume=self.path))


class OutputTestCase(unittest.TestCase):
    """Result tables and plot data on disk."""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()
        self.prov = provenance({"system": {"z_a": 92}}, "testing")
        self.table = ResultTable(mode="collide2d", provenance=self.prov)
        self.table.add_row(b_fm=0.0, model="point", P_1s=0.5, P_ct=0.0125)
        self.table.add_row(b_fm=500.0, model="point", P_1s=0.9, P_ct=0.003)

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_config_hash_is_order_independent(self):
        self.assertEqual(config_hash({"a": 1, "b": [1, 2]}), config_hash({"b": [1, 2], "a": 1}))
        self.assertNotEqual(config_hash({"a": 1}), config_hash({"a": 2}))
        self.assertEqual(len(self.prov["config_hash"]), 16)

    def test_csv_has_provenance_header(self):
        path = os.path.join(self.test_dir, "collide2d.csv")
        write_table_csv(self.table, path)
        with open(path, newline="") as f:
            lines = f.read().splitlines()
        header = [line for line in lines if line.startswith("#")]
        self.assertIn(f"# config_hash: {self.prov['config_hash']}", header)
        self.assertIn("# tier: testing", header)
        rows = list(csv.DictReader(line for line in lines if not line.startswith("#")))
        self.assertEqual(len(rows), 2)
        self.assertEqual(float(rows[0]["P_ct"]), 0.0125)
        self.assertEqual(rows[0]["P_minus"], "")

    def test_json_mirror(self):
        path = os.path.join(self.test_dir, "collide2d.json")
        write_table_json(self.table, path)
        table = read_table_json(path)
        self.assertEqual(table.mode, "collide2d")
        self.assertEqual(table.column("P_ct"), [0.0125, 0.003])
        self.assertEqual(table.provenance["config_hash"], self.prov["config_hash"])

    def test_plot_data(self):
        path = os.path.join(self.test_dir, "pct.dat")
        emit_plot_data(self.table, path)
        np.testing.assert_array_equal(read_plot_data(path), [[0.0, 0.0125], [500.0, 0.003]])

    def test_empty_table_writes_empty_plot_file(self):
        path = os.path.join(self.test_dir, "pct.dat")
        with self.assertWarns(UserWarning):
            emit_plot_data(ResultTable(mode="sweep"), path)
        self.assertEqual(os.path.getsize(path), 0)
        self.assertEqual(read_plot_data(path).shape, (0, 2))

    def test_plot_needs_charge_transfer(self):
        table = ResultTable(mode="stationary", columns=STATIONARY_COLUMNS)
        table.add_row(Z=92, model="point", E_1s_au=-4861.2)
        with self.assertRaises(ConfigError):
            emit_plot_data(table, os.path.join(self.test_dir, "pct.dat"))


if __name__ == '__main__':
    unittest.main()
