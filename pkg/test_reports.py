"""
Test script for report and trajectory writers
"""

import unittest
import sys
import os
import json
import tempfile

import numpy as np
import pandas as pd

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from utils.reports import drift_path, render_report, to_jsonable, write_report, write_trajectory


class TestReports(unittest.TestCase):
    """Test suite for JSON reports"""

    def test_to_jsonable(self):
        """Test conversion of numpy values"""
        value = to_jsonable({'a': np.arange(3), 'b': np.float64(0.5), 'c': (np.int64(2), np.bool_(True))})
        self.assertEqual(value, {'a': [0, 1, 2], 'b': 0.5, 'c': [2, True]})
        self.assertIsInstance(value['b'], float)

    def test_render_is_deterministic(self):
        """Test sorted keys and the final newline"""
        text = render_report({'z': 1, 'a': 2})
        self.assertTrue(text.endswith('\n'))
        self.assertLess(text.index('"a"'), text.index('"z"'))
        self.assertEqual(text, render_report({'a': 2, 'z': 1}))

    def test_write_report(self):
        """Test writing into a new directory"""
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'nested', 'report.json')
            write_report({'verdict': 'integrable', 'value': np.float64(1.5)}, path)
            with open(path, 'r', encoding='utf-8') as handle:
                self.assertEqual(json.load(handle), {'verdict': 'integrable', 'value': 1.5})


class TestTrajectoryFiles(unittest.TestCase):
    """Test suite for trajectory tables"""

    def setUp(self):
        """Set up a small trajectory table"""
        self.frame = pd.DataFrame({'t': [0.0, 0.1], 'q0': [1.0, 1.1], 'p0': [0.0, 0.1 / 3.0], 'v0': [1.0, 1.0]})

    def test_csv_round_trip(self):
        """Test full-precision CSV output"""
        with tempfile.TemporaryDirectory() as tmp:
            path = write_trajectory(self.frame, os.path.join(tmp, 'traj.csv'))
            loaded = pd.read_csv(path, float_precision='round_trip')
            pd.testing.assert_frame_equal(loaded, self.frame, check_exact=True)

    def test_parquet_output(self):
        """Test Parquet output for a .parquet path"""
        with tempfile.TemporaryDirectory() as tmp:
            path = write_trajectory(self.frame, os.path.join(tmp, 'traj.parquet'))
            loaded = pd.read_parquet(path, engine='pyarrow')
            pd.testing.assert_frame_equal(loaded, self.frame)

    def test_drift_path(self):
        """Test the companion drift summary path"""
        self.assertEqual(drift_path('out/traj.csv'), 'out/traj.csv.drift.json')


if __name__ == '__main__':
    unittest.main()
