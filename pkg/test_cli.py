"""
Test script for the command-line interface
"""

import unittest
import sys
import os
import io
import json
import tempfile
from contextlib import redirect_stderr, redirect_stdout
from unittest.mock import patch

import pandas as pd

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, EXIT_VERIFY, main, parse_params
from mechanics.constraint_algo import VERDICT_INTEGRABLE
from utils.policy import ConfigError


def run_cli(argv):
    """Run main() with captured output and a clean environment"""
    out, err = io.StringIO(), io.StringIO()
    with patch.dict(os.environ, {}, clear=True), redirect_stdout(out), redirect_stderr(err):
        code = main(argv)
    return code, out.getvalue(), err.getvalue()


class TestParseParams(unittest.TestCase):
    """Test suite for KEY=VALUE overrides"""

    def test_pairs(self):
        """Test parsing of overrides and the potential shorthand"""
        self.assertEqual(parse_params(['B=2', ' m = 1.5'], V='constant'), {'B': '2', 'm': '1.5', 'V': 'constant'})
        self.assertEqual(parse_params(None), {})

    def test_malformed_pair(self):
        """Test that a pair without '=' is rejected"""
        with self.assertRaises(ConfigError):
            parse_params(['B2'])


class TestCommands(unittest.TestCase):
    """Test suite for the commands and their exit codes"""

    def setUp(self):
        """Set up a scratch directory"""
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def path(self, name):
        return os.path.join(self.tmp.name, name)

    def test_analyze_writes_report(self):
        """Test the analyze report of the relativistic particle"""
        out = self.path('analyze.json')
        code, _, _ = run_cli(['analyze', '--system', 'relativistic', '--samples', '4', '--out', out])
        self.assertEqual(code, EXIT_OK)
        with open(out, 'r', encoding='utf-8') as handle:
            report = json.load(handle)
        self.assertEqual(report['analysis']['verdict'], VERDICT_INTEGRABLE)
        self.assertEqual(report['policy']['samples'], 4)

    def test_analyze_two_particle(self):
        """Test that the interacting pair finds one secondary constraint"""
        out = self.path('pair.json')
        code, _, _ = run_cli(['analyze', '--system', 'two-particle', '--samples', '8', '--out', out])
        self.assertEqual(code, EXIT_OK)
        with open(out, 'r', encoding='utf-8') as handle:
            analysis = json.load(handle)['analysis']
        self.assertEqual(analysis['verdict'], VERDICT_INTEGRABLE)
        self.assertEqual(analysis['secondary_constraints'], 1)

    def test_analyze_to_stdout(self):
        """Test that reports go to standard output without --out"""
        code, stdout, _ = run_cli(['analyze', '--system', 'em-3d', '--samples', '2'])
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(json.loads(stdout)['system'], 'em-3d')

    def test_integrate_writes_trajectory_and_drift(self):
        """Test the trajectory table and its drift summary"""
        out = self.path('traj.csv')
        code, _, _ = run_cli(['integrate', '--system', 'em-3d', '--dt', '0.01', '--steps', '10', '--out', out])
        self.assertEqual(code, EXIT_OK)
        frame = pd.read_csv(out)
        self.assertEqual(len(frame), 11)
        with open(out + '.drift.json', 'r', encoding='utf-8') as handle:
            drift = json.load(handle)
        self.assertEqual(drift['integration']['steps'], 10)
        self.assertLess(drift['energy_drift'], 1e-8)

    def test_statics(self):
        """Test the tied-point statics report"""
        out = self.path('statics.json')
        code, _, _ = run_cli(['statics', '--system', 'elastic-circle', '--samples', '5', '--out', out])
        self.assertEqual(code, EXIT_OK)
        with open(out, 'r', encoding='utf-8') as handle:
            report = json.load(handle)
        self.assertEqual(len(report['points']), 5)
        self.assertLess(report['closed_form_max_gap'], 1e-8)

    def test_legendre(self):
        """Test the Legendre report of the relativistic particle"""
        out = self.path('legendre.json')
        code, _, _ = run_cli(['legendre', '--system', 'relativistic', '--samples', '4', '--out', out])
        self.assertEqual(code, EXIT_OK)
        with open(out, 'r', encoding='utf-8') as handle:
            report = json.load(handle)
        self.assertFalse(report['hyperregularity']['regular'])
        self.assertEqual(report['energy_family']['rank_failures'], 0)
        self.assertEqual(report['reduction']['outcome'], 'refused')

    def test_config_errors(self):
        """Test exit code 2 for configuration errors"""
        self.assertEqual(run_cli(['analyze', '--system', 'pendulum'])[0], EXIT_CONFIG)
        self.assertEqual(run_cli(['analyze'])[0], EXIT_CONFIG)
        self.assertEqual(run_cli(['integrate', '--system', 'em-3d'])[0], EXIT_CONFIG)
        self.assertEqual(run_cli(['analyze', '--system', 'em-3d', '--param', 'B=strong'])[0], EXIT_CONFIG)
        self.assertEqual(run_cli(['statics', '--system', 'em-3d'])[0], EXIT_CONFIG)
        self.assertEqual(run_cli(['analyze', '--system', 'em-3d', '--samples', '0'])[0], EXIT_CONFIG)

    def test_config_file(self):
        """Test that a config document supplies the run"""
        config = self.path('run.json')
        with open(config, 'w', encoding='utf-8') as handle:
            json.dump({'command': 'statics', 'system': 'elastic-point', 'samples': 3}, handle)
        code, stdout, _ = run_cli(['--config', config])
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(len(json.loads(stdout)['points']), 3)

    def test_numerical_failure(self):
        """Test exit code 3 when integration cannot start on the constraint set"""
        out = self.path('bad.csv')
        code, _, err = run_cli(['integrate', '--system', 'relativistic', '--param', 'm=-1', '--out', out])
        self.assertEqual(code, EXIT_NUMERIC)
        self.assertIn('Numerical failure', err)

    def test_verify_sign_flip_fails(self):
        """Test exit code 4 when the sign of dL/dq is flipped"""
        code, _, err = run_cli(['verify', '--samples', '8', '--inject-sign-flip',
                                '--out', self.path('verify.json')])
        self.assertEqual(code, EXIT_VERIFY)
        self.assertIn('Verification failed', err)


if __name__ == '__main__':
    unittest.main()
