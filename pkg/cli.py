"""
Batch front end for the mechanics engine

Builds a catalog system, runs one command and writes a JSON report (and for
integrate a trajectory table with its drift summary).

Usage:
    # Constraint algorithm on the two-particle system
    python cli.py analyze --system two-particle --V quadratic

    # Slow Legendre transformation report
    python cli.py legendre --system kaluza-5d --out reports/kaluza.json

    # Integrate the free relativistic particle
    python cli.py integrate --system relativistic --dt 1e-3 --steps 10000 --out traj.csv

    # Statics constitutive sets
    python cli.py statics --system elastic-circle --samples 8

    # Full invariant suite
    python cli.py verify --system all
"""

import argparse
import logging
import os
import sys

import numpy as np

from mechanics.constraint_algo import dirac_iterate, project_to_constraints
from mechanics.genfun import ReductionRefused, morse_rank_ok
from mechanics.integrator import Gauge, conserved_drift, drift_report, integrate
from mechanics.legendre import (
    classical_hamiltonian,
    dirac_from_linear_family,
    hyperregular_probe,
    legendre_map,
    reduce_energy_family,
    slow_legendre,
)
from mechanics.suite import run_suites
from mechanics.systems import (
    SYSTEM_IDS,
    build_system,
    elastic_circle_branches,
    hyperboloid_branch,
    point_on,
    singularity_scan,
    statics_constitutive,
)
from utils.numerics import NumericalFailure
from utils.policy import COMMANDS, ConfigError, build_run_config, load_config_file
from utils.reports import drift_path, render_report, write_report, write_trajectory

logger = logging.getLogger('mechanics.cli')

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_VERIFY = 4


def configure_logging():
    """Configure root logging from MECHANICS_LOG_LEVEL (default WARNING)"""
    name = os.environ.get('MECHANICS_LOG_LEVEL', 'WARNING').upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format='%(asctime)s %(name)s %(levelname)s %(message)s')
    logging.getLogger().setLevel(level)
    for name in ('mechanics', 'utils'):
        logging.getLogger(name).setLevel(level)


def parse_params(pairs, V=None):
    """
    Parse KEY=VALUE system parameter overrides

    Args:
        pairs (list): Strings of the form KEY=VALUE
        V (str, optional): Two-particle potential shorthand

    Returns:
        dict: Parameter overrides (values kept as strings; the catalog converts them)

    Raises:
        ConfigError: Malformed pair
    """
    params = {}
    for pair in pairs or []:
        if '=' not in pair:
            raise ConfigError(f"Parameter override must look like KEY=VALUE, got '{pair}'")
        key, value = pair.split('=', 1)
        params[key.strip()] = value.strip()
    if V is not None:
        params['V'] = V
    return params


def base_report(config, command):
    return {
        'command': command,
        'system': config.system,
        'params': dict(sorted(config.params.items())),
        'policy': config.policy.report_block(),
    }


def _require_kind(system, kind, command):
    if system.kind != kind:
        raise ConfigError(f"Command '{command}' needs a {kind} system, '{system.id}' is a {system.kind} system")


def cmd_analyze(config):
    """
    Run the constraint algorithm on a catalog system

    Args:
        config (RunConfig): Run configuration

    Returns:
        tuple: (report dict, exit code)
    """
    system = build_system(config.system, config.params)
    _require_kind(system, 'dynamics', 'analyze')
    policy = config.policy
    report = dirac_iterate(system.family, system.constraints, system.sampler, tol=policy.tol,
                           samples=policy.samples, seed=policy.seed, excluded=system.excluded,
                           rank_rtol=policy.rank_rtol)
    result = base_report(config, 'analyze')
    result['analysis'] = report.to_dict()
    result['family'] = {
        'generators': system.family.names,
        'domains': [d.describe() for d in system.family.domains],
    }
    return result, EXIT_OK


def _energy_reduction_rows(system, fam, rng, policy):
    plan = system.energy_reduction
    anchor = system.sampler(rng)
    remaining = [i for i in range(system.m) if i not in set(plan['eliminate'])]
    kept_fiber = np.asarray(plan.get('lift_reference', []), dtype=float)
    velocities = plan['seed_rule'](np.concatenate([anchor, kept_fiber]))
    anchor_fiber = np.zeros(fam.fiber_dim)
    fiber_kept_indices = fam.family_indices + [fam.velocity_indices[i] for i in remaining]
    anchor_fiber[fiber_kept_indices] = kept_fiber
    anchor_fiber[[fam.velocity_indices[i] for i in plan['eliminate']]] = velocities
    reduced = reduce_energy_family(fam, plan['eliminate'], anchor, anchor_fiber, seed_rule=plan['seed_rule'],
                                   tol=policy.newton_tol)
    rows = {'eliminated_velocities': plan['eliminate'], 'remaining_fiber': reduced.fiber_dim,
            'outcome': 'reduced'}

    samples = [system.sampler(rng) for _ in range(min(policy.samples, 16))]
    if reduced.fiber_dim == 0 and system.hamiltonian is not None:
        gaps = []
        for x in samples:
            seed = plan['seed_rule'](x)
            value, _ = classical_hamiltonian(system.lagrangian, point_on(system, x), seed,
                                             tol=policy.newton_tol, max_iter=policy.newton_max_iter)
            gaps.append(abs(reduced.U.evaluate(x) - value))
        rows['fast_slow_max_gap'] = float(max(gaps))
        rows['catalog_hamiltonian_max_gap'] = float(max(abs(reduced.U.evaluate(x) - system.hamiltonian.H.evaluate(x))
                                                        for x in samples))
    if 'lift_reference' in plan:
        reference = plan['lift_reference']
        lifted = dirac_from_linear_family(reduced, samples=[(x, np.asarray(reference) + 1.5) for x in samples],
                                          domains=plan['lift_domains'], reference=reference)
        constraint_gap = max(abs(a.evaluate(x) - b.evaluate(x)) for x in samples
                             for a, b in zip(lifted.constraints, system.dirac.constraints))
        base_gap = max(abs(lifted.base_H.evaluate(x) - system.dirac.base_H.evaluate(x)) for x in samples)
        rows['linear_lift'] = {
            'constraints': len(lifted.constraints),
            'domains': [d.describe() for d in lifted.domains],
            'linearity_samples': len(samples),
            'constraint_max_gap': float(constraint_gap),
            'base_hamiltonian_max_gap': float(base_gap),
        }
    return rows


def _hyperboloid_rows(system, rng, policy):
    em, metric = system.em, system.metric
    m = em.m
    anchor = np.concatenate([np.zeros(4), [m + 1.0, 0.5, 0.0, 0.0]])
    plus = hyperboloid_branch(metric, em, 1.0, anchor)
    lifted = dirac_from_linear_family(plus, reference=[1.0], domains=system.dirac.domains)
    samples = [system.sampler(rng) for _ in range(min(policy.samples, 16))]
    gap = max(abs(lifted.constraints[0].evaluate(x) - system.dirac.constraints[0].evaluate(x)) for x in samples)
    rows = {'plus': {'outcome': 'reduced', 'constraint_max_gap': float(gap)}}
    try:
        minus = hyperboloid_branch(metric, em, -1.0, anchor)
        slopes = [abs(minus.fiber_gradient(x, [1.0])[0]) for x in samples]
        rows['minus'] = {'outcome': 'reduced', 'critical_points': 0, 'min_abs_ds': float(min(slopes))}
    except ReductionRefused as e:
        rows['minus'] = {'outcome': 'refused', 'diagnostic': e.diagnostic}
    return rows


def cmd_legendre(config):
    """
    Hyperregularity probe, energy family, reductions and fast/slow agreement

    Args:
        config (RunConfig): Run configuration

    Returns:
        tuple: (report dict, exit code)
    """
    system = build_system(config.system, config.params)
    _require_kind(system, 'dynamics', 'legendre')
    policy = config.policy
    rng = np.random.default_rng(policy.seed)
    sys_L = system.lagrangian
    result = base_report(config, 'legendre')

    tangents = [system.tangent_sampler(rng) for _ in range(policy.samples)]
    if not sys_L.is_family:
        probe = hyperregular_probe(sys_L, [x for x, _ in tangents])
        probe.pop('dets')
        result['hyperregularity'] = probe

    fam = slow_legendre(sys_L)
    failures = 0
    for x, witness in tangents:
        covector = legendre_map(sys_L, x, witness)
        fiber = np.concatenate([np.zeros(0) if witness is None else witness, x.v])
        failures += 0 if morse_rank_ok(fam, covector.as_array(), fiber, policy.rank_rtol)[0] else 1
    result['energy_family'] = {
        'name': fam.name,
        'base_dim': fam.base_dim,
        'fiber_dim': fam.fiber_dim,
        'rank_samples': len(tangents),
        'rank_failures': failures,
    }

    if system.energy_reduction is not None:
        result['reduction'] = _energy_reduction_rows(system, fam, rng, policy)
    else:
        anchor_tangent, witness = tangents[0]
        anchor = legendre_map(sys_L, anchor_tangent, witness).as_array()
        fiber = np.concatenate([np.zeros(0) if witness is None else witness, anchor_tangent.v])
        try:
            reduce_energy_family(fam, list(range(system.m)), anchor, fiber, tol=policy.newton_tol)
            result['reduction'] = {'outcome': 'reduced', 'eliminated_velocities': list(range(system.m))}
        except ReductionRefused as e:
            result['reduction'] = {'outcome': 'refused', 'diagnostic': e.diagnostic}
    if system.id == 'relativistic':
        result['hyperboloid'] = _hyperboloid_rows(system, rng, policy)
    return result, EXIT_OK


def _initial_state(system, policy, constraints):
    if system.initial_state is not None:
        return system.initial_state
    rng = np.random.default_rng(policy.seed)
    return project_to_constraints(system.sampler(rng), constraints).as_array()


def _gauge_for(system, policy, constraints):
    name = system.default_gauge if policy.gauge == 'auto' else policy.gauge
    if name == 'unit':
        return Gauge.unit()
    if name == 'proper-time':
        if system.proper_time_block is None:
            raise ConfigError(f"Proper-time gauge is not defined for '{system.id}'")
        return Gauge.proper_time(system.metric.g, system.proper_time_block)
    if len(system.family) != system.dirac.n_multipliers:
        raise ConfigError(f"Multiplier-cone gauge needs a family made of the constraints of '{system.id}'")
    return Gauge.from_multiplier_conditions(system.family, constraints)


def cmd_integrate(config):
    """
    Integrate a catalog system and write the trajectory with its drift summary

    Args:
        config (RunConfig): Run configuration (out is required)

    Returns:
        tuple: (drift report dict, exit code)
    """
    if not config.out:
        raise ConfigError("Command 'integrate' needs an output path (--out)")
    system = build_system(config.system, config.params)
    _require_kind(system, 'dynamics', 'integrate')
    policy = config.policy

    constraints = system.constraints
    name = system.default_gauge if policy.gauge == 'auto' else policy.gauge
    if name == 'multiplier-cone':
        analysis = dirac_iterate(system.family, system.constraints, system.sampler, tol=policy.tol,
                                 samples=policy.samples, seed=policy.seed, excluded=system.excluded,
                                 rank_rtol=policy.rank_rtol)
        constraints = analysis.constraints
    gauge = _gauge_for(system, policy, constraints)
    x0 = _initial_state(system, policy, constraints)
    traj = integrate(system.dirac, gauge, x0, policy.dt, policy.steps, project_every=policy.project_every,
                     constraints=constraints, tol=policy.tol)
    write_trajectory(traj.to_frame(), config.out)

    drift = drift_report(traj, constraints)
    drift.pop('per_step')
    result = base_report(config, 'integrate')
    result['integration'] = {
        'dt': policy.dt,
        'steps': policy.steps,
        'gauge': gauge.name,
        'project_every': policy.project_every,
        'constraints': constraints.describe(),
        'trajectory': os.path.basename(config.out),
    }
    result['drift'] = drift
    if system.hamiltonian is not None:
        result['energy_drift'] = conserved_drift(traj, system.hamiltonian.H)
    write_report(result, drift_path(config.out))
    return result, EXIT_OK


def cmd_statics(config):
    """
    Constitutive sets of a statics example at sampled inputs

    Args:
        config (RunConfig): Run configuration

    Returns:
        tuple: (report dict, exit code)
    """
    system = build_system(config.system, config.params)
    _require_kind(system, 'statics', 'statics')
    policy = config.policy
    rng = np.random.default_rng(policy.seed)
    example = system.extras['example']
    rows = []
    worst = 0.0
    oracle = 0.0
    for _ in range(policy.samples):
        point = system.sampler(rng)
        outcome = statics_constitutive(example, point, system.params)
        worst = max(worst, outcome['residual'])
        rows.append({
            'input': point,
            'covectors': [{'q': c.q, 'p': c.p, 'witness': c.witness} for c in outcome['covectors']],
            'residual': outcome['residual'],
        })
        if example == 3:
            expected = elastic_circle_branches(point[0], point[1], system.params['k'], system.params['a'])
            for covector, closed in zip(outcome['covectors'], expected):
                oracle = max(oracle, float(np.max(np.abs(covector.p - np.array(closed)))))
    result = base_report(config, 'statics')
    result['example'] = example
    result['points'] = rows
    result['max_residual'] = worst
    if example == 3:
        result['closed_form_max_gap'] = oracle
        result['singularity_scan'] = singularity_scan([0.0, 1e-12, 1e-6, 0.5, 1.0], rtol=policy.rank_rtol)
    return result, EXIT_OK


def cmd_verify(config):
    """
    Run the invariant suites

    Args:
        config (RunConfig): Run configuration (system 'all' or a catalog id)

    Returns:
        tuple: (report dict, exit code 0 or 4)
    """
    if config.system != 'all' and config.system not in SYSTEM_IDS:
        raise ConfigError(f"Unknown system '{config.system}'. Expected 'all' or one of: {', '.join(SYSTEM_IDS)}")
    outcome = run_suites(config.policy, inject_sign_flip=config.inject_sign_flip)
    result = base_report(config, 'verify')
    result['inject_sign_flip'] = config.inject_sign_flip
    result.update(outcome)
    return result, EXIT_OK if outcome['passed'] else EXIT_VERIFY


COMMAND_HANDLERS = {
    'analyze': cmd_analyze,
    'legendre': cmd_legendre,
    'integrate': cmd_integrate,
    'statics': cmd_statics,
    'verify': cmd_verify,
}


def build_parser():
    parser = argparse.ArgumentParser(
        description='Implicit mechanics engine: constraint analysis, Legendre transformations and integration',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Constraint algorithm with the quadratic two-particle potential
  python cli.py analyze --system two-particle --V quadratic

  # Legendre report for the massless particle
  python cli.py legendre --system massless

  # Larmor orbit, trajectory as Parquet
  python cli.py integrate --system em-3d --dt 0.00314159 --steps 2000 --out larmor.parquet

  # Everything from a JSON document
  python cli.py verify --config run.json

Systems: """ + ', '.join(SYSTEM_IDS),
    )
    parser.add_argument('command', nargs='?', choices=COMMANDS, help='Command to run')
    parser.add_argument('--system', type=str, help="Catalog system id ('all' for verify)")
    parser.add_argument('--config', type=str, help='JSON configuration document (overrides flags)')
    parser.add_argument('--seed', type=int, help='RNG seed (default: 0)')
    parser.add_argument('--tol', type=float, help='Bracket and membership tolerance (default: 1e-8)')
    parser.add_argument('--samples', type=int, help='Samples per generation or check (default: 64)')
    parser.add_argument('--dt', type=float, help='Integration step (default: 1e-3)')
    parser.add_argument('--steps', type=int, help='Integration steps (default: 1000)')
    parser.add_argument('--gauge', type=str, help='auto, unit, proper-time or multiplier-cone (default: auto)')
    parser.add_argument('--out', type=str, help='Report path (trajectory path for integrate)')
    parser.add_argument('--param', action='append', metavar='KEY=VALUE', help='System parameter override')
    parser.add_argument('--V', type=str, help='Two-particle potential: quadratic or constant')
    parser.add_argument('--inject-sign-flip', action='store_true', default=None,
                        help='Test mode: flip dL/dq in the Lagrangian isotropy checks')
    return parser


def main(argv=None):
    """Main entry point; returns the exit code"""
    configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        flags = {
            'command': args.command,
            'system': args.system or ('all' if args.command == 'verify' else None),
            'seed': args.seed,
            'tol': args.tol,
            'samples': args.samples,
            'dt': args.dt,
            'steps': args.steps,
            'gauge': args.gauge,
            'out': args.out,
            'inject_sign_flip': args.inject_sign_flip,
        }
        params = parse_params(args.param, args.V)
        if params:
            flags['params'] = params
        file_values = load_config_file(args.config) if args.config else None
        config = build_run_config(flags, file_values)
        handler = COMMAND_HANDLERS[config.command]
        report, code = handler(config)
    except ConfigError as e:
        print(f"Configuration error: {str(e)}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, ValueError) as e:
        print(f"Numerical failure: {str(e)}", file=sys.stderr)
        return EXIT_NUMERIC

    if config.command == 'integrate':
        print(f"Trajectory written to {config.out} ({config.policy.steps + 1} rows)")
        print(f"Drift summary written to {drift_path(config.out)}")
    elif config.out:
        write_report(report, config.out)
        print(f"Report written to {config.out}")
    else:
        sys.stdout.write(render_report(report))

    if code == EXIT_VERIFY:
        print("Verification failed", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
