"""
Cross-module invariant suites run by the verify command

Each suite returns a list of Check records with the measured maximum and the
threshold it is held to. Suites draw from their own seeded generator so that
adding a suite never changes the samples of another.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from mechanics import jetcalc as jc
from mechanics.bundles import (
    IteratedTangent,
    PhaseVelocity,
    SecondTangent,
    TangentPoint,
    alpha,
    alpha_pushforward,
    beta,
    beta_pushforward,
    dT_theta,
    iT_omega,
    kappa,
    poisson_bracket,
    poisson_bracket_from_gradients,
    theta_TQ,
    theta_TstarQ,
)
from mechanics.constraint_algo import (
    VERDICT_INTEGRABLE,
    ConstraintSet,
    dirac_iterate,
    multiplier_conditions,
    prolongation_defect,
    sample_constraint_points,
)
from mechanics.dynamics import (
    MultiplierDomainError,
    dirac_dynamics,
    dirac_residual,
    euler_lagrange_residual,
    family_residual,
    hamilton_field,
    lagrange_dynamics,
    lagrangian_check,
)
from mechanics.genfun import generated_isotropy, morse_rank_ok, solve_critical_fiber
from mechanics.integrator import Gauge, conserved_drift, drift_report, integrate, reparametrize_check
from mechanics.legendre import (
    classical_hamiltonian,
    dirac_hamiltonian_on_graph,
    hyperregular_probe,
    legendre_map,
    reduce_energy_family,
    slow_dynamics_gap,
    slow_legendre,
)
from mechanics.systems import (
    EMFieldSpec,
    MetricSpec,
    PolynomialGauge,
    STATICS_IDS,
    build_em_lagrangian,
    build_system,
    point_on,
    singularity_scan,
    two_particle_prolongation_functions,
    two_particle_prolongation_point,
)

# Get or create logger for this module
logger = logging.getLogger(__name__)
# Only set level if not already configured
if not logger.handlers:
    logger.setLevel(logging.INFO)


DYNAMICS_IDS = ('em-3d', 'kaluza-5d', 'relativistic', 'relativistic-5d', 'massless', 'two-particle')
AUTODIFF_MIN_JETS = 1000
ZERO_LOCUS_POINTS = 50
PSI_OFF_LOCUS = 0.05
LONG_RUN_STEPS = 10000


@dataclass
class Check:
    """One measured quantity and the bound it must satisfy"""

    name: str
    measured: float
    threshold: float
    passed: bool = None
    mode: str = 'max'

    def __post_init__(self):
        self.measured = float(self.measured)
        if self.passed is None:
            if self.mode == 'min':
                self.passed = self.measured > self.threshold
            else:
                self.passed = self.measured <= self.threshold

    def to_dict(self):
        return {
            'name': self.name,
            'measured': self.measured,
            'threshold': self.threshold,
            'bound': 'lower' if self.mode == 'min' else 'upper',
            'passed': bool(self.passed),
        }


def _lagrange_point(system, x, witness=None):
    """Phase velocity (q, dL/dqdot, qdot, dL/dq) of a catalog Lagrangian"""
    sys_L = system.lagrangian
    m = sys_L.m
    grad = sys_L.L.jet(sys_L.point(x.q, x.v, witness), order=1).gradient
    return PhaseVelocity(x.q, grad[m:2 * m], x.v, grad[:m])


def canonical_maps(policy, rng, context):
    """Involution and pullback identities at random points"""
    m = 3
    involution = pull_alpha = pull_beta = 0.0
    for _ in range(policy.samples):
        w = IteratedTangent(*rng.normal(size=(4, m)))
        twice = kappa(kappa(w))
        involution = max(involution, float(np.max(np.abs(twice.as_array() - w.as_array()))))
        z = PhaseVelocity(*rng.normal(size=(4, m)))
        dz = rng.normal(size=4 * m)
        pull_alpha = max(pull_alpha, abs(theta_TQ(alpha(z), alpha_pushforward(dz)) - dT_theta(z, dz)))
        pull_beta = max(pull_beta, abs(theta_TstarQ(beta(z), beta_pushforward(dz)) - iT_omega(z, dz)))
    return [
        Check('kappa-involution', involution, 0.0),
        Check('alpha-pullback', pull_alpha, 1e-12),
        Check('beta-pullback', pull_beta, 1e-12),
    ]


def _bracket_fields(context):
    kaluza = context.system('kaluza-5d')
    relativistic = context.system('relativistic', {'B': 0.5})
    massless = context.system('massless')
    return [kaluza.dirac.base_H, relativistic.dirac.constraints[0], massless.dirac.constraints[0]], relativistic


def poisson_algebra(policy, rng, context):
    """Antisymmetry, Jacobi, Leibniz and the finite-difference oracle"""
    (F, G, K), relativistic = _bracket_fields(context)
    antisymmetry = jacobi = leibniz = oracle = 0.0
    FG, GK, KF = jc.BracketField(F, G, 4), jc.BracketField(G, K, 4), jc.BracketField(K, F, 4)
    product = G * K
    for _ in range(policy.samples):
        x = relativistic.sampler(rng)
        fg = poisson_bracket(F, G, x)
        antisymmetry = max(antisymmetry, abs(fg + poisson_bracket(G, F, x)))
        cyclic = poisson_bracket(F, GK, x) + poisson_bracket(G, KF, x) + poisson_bracket(K, FG, x)
        jacobi = max(jacobi, abs(cyclic))
        expected = fg * K.evaluate(x) + G.evaluate(x) * poisson_bracket(F, K, x)
        leibniz = max(leibniz, abs(poisson_bracket(F, product, x) - expected))
        fd = poisson_bracket_from_gradients(jc.fd_jet(F, x).gradient, jc.fd_jet(G, x).gradient, 4)
        oracle = max(oracle, abs(fd - fg))
    return [
        Check('bracket-antisymmetry', antisymmetry, 0.0),
        Check('bracket-jacobi', jacobi, 1e-8),
        Check('bracket-leibniz', leibniz, 1e-10),
        Check('bracket-fd-oracle', oracle, 1e-6),
    ]


def _relative_gap(a, b):
    return float(np.max(np.abs(a - b))) / max(1.0, float(np.max(np.abs(a))))


def autodiff(policy, rng, context):
    """Jets against central differences over the catalog fields"""
    fields = []
    for system_id in DYNAMICS_IDS:
        system = context.system(system_id)
        fields.append((system, system.lagrangian.L, 'tangent'))
        fields += [(system, f, 'cotangent') for f in system.dirac.constraints]
        if system.hamiltonian is not None:
            fields.append((system, system.hamiltonian.H, 'cotangent'))
    count = max(4, policy.samples // 4, math.ceil(AUTODIFF_MIN_JETS / len(fields)))
    gradient_gap = hessian_gap = 0.0
    evaluations = 0
    for system, f, where in fields:
        for _ in range(count):
            if where == 'tangent':
                tangent, witness = system.tangent_sampler(rng)
                x = system.lagrangian.point(tangent.q, tangent.v, witness)
            else:
                x = system.sampler(rng)
            exact, approx = f.jet(x), jc.fd_jet(f, x)
            gradient_gap = max(gradient_gap, _relative_gap(exact.gradient, approx.gradient))
            hessian_gap = max(hessian_gap, _relative_gap(exact.hessian, approx.hessian))
            evaluations += 1
    logger.info(f"Autodiff suite compared {evaluations} jets")
    return [
        Check('jet-gradient', gradient_gap, 1e-6),
        Check('jet-hessian', hessian_gap, 1e-4),
        Check('jet-evaluations', evaluations, AUTODIFF_MIN_JETS, passed=evaluations >= AUTODIFF_MIN_JETS),
    ]


def generator_isotropy(policy, rng, context):
    """omega_Q on statics generated sets and d_T omega on every dynamics set"""
    count = min(policy.samples, 20)
    checks = []
    for system_id in STATICS_IDS:
        system = context.system(system_id)
        fam = system.generator
        worst = 0.0
        for _ in range(count):
            point = system.sampler(rng)
            if system_id == 'bead-circle':
                a = system.params['a']
                q, y = a * np.array([math.cos(point[0]), math.sin(point[0])]), point[1:]
            elif fam.fiber_dim:
                q = point
                y = solve_critical_fiber(fam, q, [math.atan2(q[1], q[0])])[0]
            else:
                q, y = point, np.zeros(0)
            worst = max(worst, generated_isotropy(fam, q, y))
        checks.append(Check(f"isotropy[{system_id}]", worst, 1e-6))

    sign = -1.0 if context.inject_sign_flip else 1.0
    for system_id in DYNAMICS_IDS:
        system = context.system(system_id)
        residual_fn = lagrange_dynamics(system.lagrangian, pdot_sign=sign)
        worst = 0.0
        for _ in range(count):
            tangent, witness = system.tangent_sampler(rng)
            z = _lagrange_point(system, tangent, witness)
            if sign < 0:
                z = PhaseVelocity(z.q, z.p, z.qdot, -z.pdot)
            worst = max(worst, lagrangian_check(residual_fn, z, witness))
        label = 'lagrange-isotropy-sign-flipped' if sign < 0 else 'lagrange-isotropy'
        checks.append(Check(f"{label}[{system_id}]", worst, 1e-6))

    for system_id in ('relativistic', 'massless'):
        system = context.system(system_id)
        residual_fn = dirac_dynamics(system.dirac)
        points = sample_constraint_points(ConstraintSet(system.dirac.constraints), system.sampler, count, rng)
        worst = 0.0
        for x in points:
            v = np.array([rng.uniform(0.5, 2.0)])
            qdot, pdot = system.dirac.vector_field(x.as_array(), v)
            worst = max(worst, lagrangian_check(residual_fn, PhaseVelocity(x.q, x.p, qdot, pdot), v))
        checks.append(Check(f"dirac-isotropy[{system_id}]", worst, 1e-6))
    return checks


def _em_anchor(system, x):
    seed_rule = system.energy_reduction['seed_rule']
    return seed_rule(np.asarray(x, dtype=float))


def legendre_agreement(policy, rng, context):
    """Fast and slow Legendre transformations on the hyperregular charged particle"""
    system = context.system('em-3d')
    fam = slow_legendre(system.lagrangian)
    anchor = system.sampler(rng)
    reduced = reduce_energy_family(fam, system.energy_reduction['eliminate'], anchor,
                                   _em_anchor(system, anchor), seed_rule=system.energy_reduction['seed_rule'])
    values = dynamics = 0.0
    count = min(policy.samples, 50)
    for _ in range(count):
        x = system.sampler(rng)
        H_classical, _ = classical_hamiltonian(system.lagrangian, point_on(system, x), _em_anchor(system, x))
        values = max(values, abs(reduced.U.evaluate(x) - H_classical))
        z = hamilton_field(system.hamiltonian, point_on(system, x))
        dynamics = max(dynamics, family_residual(reduced, z, np.zeros(0)).norm)
    return [
        Check('fast-slow-values', values, 1e-9),
        Check('fast-slow-dynamics', dynamics, 1e-8),
    ]


def slow_rank(policy, rng, context):
    """Rank condition of every energy family and the relativistic regularity probe"""
    count = min(policy.samples, 20)
    failures = 0
    for system_id in DYNAMICS_IDS:
        system = context.system(system_id)
        fam = slow_legendre(system.lagrangian)
        for _ in range(count):
            tangent, witness = system.tangent_sampler(rng)
            covector = legendre_map(system.lagrangian, tangent, witness)
            fiber = np.concatenate([np.zeros(0) if witness is None else witness, tangent.v])
            ok, _ = morse_rank_ok(fam, covector.as_array(), fiber)
            failures += 0 if ok else 1
    relativistic = context.system('relativistic')
    probe_points = [relativistic.tangent_sampler(rng)[0] for _ in range(min(policy.samples, 50))]
    probe = hyperregular_probe(relativistic.lagrangian, probe_points)
    return [
        Check('energy-family-rank-failures', failures, 0),
        Check('relativistic-max-abs-det', probe['max_abs_det'], 1e-10),
    ]


def fast_transform_failure(policy, rng, context):
    """Sign-reversed relativistic Lagrangians share a zero Dirac Hamiltonian but not their dynamics"""
    system = context.system('relativistic')
    plus, minus = system.lagrangian, system.extras['lagrangian_minus']
    points = [system.tangent_sampler(rng)[0] for _ in range(min(policy.samples, 20))]
    energy = 0.0
    for x in points:
        for sys_L in (plus, minus):
            p = legendre_map(sys_L, x).p
            energy = max(energy, abs(dirac_hamiltonian_on_graph(sys_L, x.q, p, x.v)))
    gaps = slow_dynamics_gap(plus, minus, points)
    rejected = 0.0
    for v in (0.0, -1.0):
        try:
            system.dirac.check_multipliers([v])
        except MultiplierDomainError:
            rejected += 1.0
    return [
        Check('graph-energy', energy, 1e-9),
        Check('dynamics-gap', float(np.min(gaps)), 0.1, mode='min'),
        Check('zero-and-negative-branches-rejected', rejected, 1.5, mode='min'),
    ]


def _algorithm_invariants(name, report, tol):
    """Constraint counts never shrink across generations and the final restricted brackets vanish"""
    counts = [len(record.constraints) for record in report.generations]
    shrinks = sum(1 for before, after in zip(counts, counts[1:]) if after < before)
    restricted = report.restricted_bracket_max if report.restricted_bracket_max is not None else math.inf
    return [
        Check(f"constraint-count-monotone[{name}]", shrinks, 0),
        Check(f"restricted-brackets-sound[{name}]", restricted, tol),
    ]


def _two_particle_secondary(policy, rng, system, report, seed):
    """
    Zero locus, fixed point and prolongation of the discovered two-particle constraint

    The discovered field has to share its zero locus with Psi on the primary
    set. The prolonged first-order equations accept the conditioned
    multipliers and refuse a pair with twice their ratio.
    """
    C = report.constraints
    found = [f for f, tag in zip(C.functions, C.tags) if tag != 'primary']
    if len(found) != 1:
        return [Check('two-particle-secondary-located', 1.0, 0.0)]
    candidate, psi = found[0], system.extras['psi']
    checks = []

    on_psi = sample_constraint_points(system.constraints.extended([psi], 'secondary'), system.sampler,
                                      ZERO_LOCUS_POINTS, rng, excluded=system.excluded)
    on_gap = max((abs(candidate.evaluate(x.as_array())) for x in on_psi), default=math.inf)
    checks.append(Check('psi-locus-samples', len(on_psi), ZERO_LOCUS_POINTS,
                        passed=len(on_psi) == ZERO_LOCUS_POINTS))
    checks.append(Check('secondary-vanishes-with-psi', on_gap, 1e-8))

    primary = sample_constraint_points(system.constraints, system.sampler, 2 * ZERO_LOCUS_POINTS, rng,
                                       excluded=system.excluded)
    off_psi = [x for x in primary if abs(psi.evaluate(x.as_array())) > PSI_OFF_LOCUS][:ZERO_LOCUS_POINTS]
    off_min = min((abs(candidate.evaluate(x.as_array())) for x in off_psi), default=0.0)
    logger.info(f"Secondary constraint compared at {len(on_psi)} points with Psi = 0 and {len(off_psi)} without")
    checks.append(Check('secondary-nonzero-off-psi', off_min, 1e-3, mode='min'))

    rerun = dirac_iterate(system.family, C, system.sampler, tol=policy.tol, samples=policy.samples,
                          seed=seed + 1, excluded=system.excluded)
    stable = (rerun.verdict == VERDICT_INTEGRABLE and rerun.generation == 0
              and rerun.secondary_count == report.secondary_count)
    checks.append(Check('secondary-fixed-point', 0.0 if stable else 1.0, 0.0))

    functions = two_particle_prolongation_functions(system.dirac, psi)
    consistent, refused = 0.0, math.inf
    for x in on_psi[:min(policy.samples, 10)]:
        conditions = multiplier_conditions(system.family, C, x, tol=policy.tol)
        if not conditions.feasible or conditions.ratio is None:
            consistent = math.inf
            continue
        good = two_particle_prolongation_point(system.dirac, x.as_array(), [1.0, conditions.ratio])
        wrong = two_particle_prolongation_point(system.dirac, x.as_array(), [1.0, 2.0 * conditions.ratio])
        consistent = max(consistent, prolongation_defect(functions, good, tol=policy.tol))
        refused = min(refused, prolongation_defect(functions, wrong, tol=policy.tol))
    checks.append(Check('prolongation-consistent-multipliers', consistent, 1e-6))
    checks.append(Check('prolongation-refuses-wrong-ratio', 0.0 if math.isinf(refused) else refused, 1e-3,
                        mode='min'))
    return checks


def constraint_algorithm(policy, rng, context):
    """Integrable verdicts of the catalog families and the two-particle secondary constraint"""
    checks = []
    seed = int(rng.integers(2 ** 31))
    for system_id in ('em-3d', 'kaluza-5d', 'relativistic', 'relativistic-5d', 'massless'):
        system = context.system(system_id)
        report = dirac_iterate(system.family, system.constraints, system.sampler, tol=policy.tol,
                               samples=policy.samples, seed=seed, excluded=system.excluded)
        ok = report.verdict == VERDICT_INTEGRABLE and report.generation == 0
        checks.append(Check(f"integrable[{system_id}]", 0.0 if ok else 1.0, 0.0))
        checks.append(Check(f"restricted-brackets[{system_id}]", report.restricted_bracket_max or 0.0, 1e-9))
        checks.extend(_algorithm_invariants(system_id, report, policy.tol))

    system = context.system('two-particle')
    report = dirac_iterate(system.family, system.constraints, system.sampler, tol=policy.tol,
                           samples=policy.samples, seed=seed, excluded=system.excluded)
    checks.append(Check('two-particle-secondary-count', abs(report.secondary_count - 1), 0))
    checks.append(Check('two-particle-verdict', 0.0 if report.verdict == VERDICT_INTEGRABLE else 1.0, 0.0))
    checks.extend(_algorithm_invariants('two-particle', report, policy.tol))
    checks.extend(_two_particle_secondary(policy, rng, system, report, seed))
    points = sample_constraint_points(report.constraints, system.sampler, min(policy.samples, 10), rng,
                                      excluded=system.excluded)
    ratio_gap = 0.0
    for x in points:
        conditions = multiplier_conditions(system.family, report.constraints, x, tol=policy.tol)
        expected = system.spec.ratio_closed_form(x.as_array())
        ratio_gap = max(ratio_gap, abs(conditions.ratio - expected) / max(1.0, abs(expected)))
    checks.append(Check('two-particle-ratio', ratio_gap, 1e-8))

    constant = context.system('two-particle', {'V': 'constant', 'c': 0.5})
    report = dirac_iterate(constant.family, constant.constraints, constant.sampler, tol=policy.tol,
                           samples=policy.samples, seed=seed, excluded=constant.excluded)
    checks.append(Check('two-particle-constant-secondary-count', report.secondary_count, 0))
    return checks


def integration(policy, rng, context):
    """Straight line, Larmor orbit, convergence order, null constraint and reparametrization"""
    checks = []
    relativistic = context.system('relativistic')
    traj = integrate(relativistic.dirac, Gauge.unit(), relativistic.initial_state, 1e-3, LONG_RUN_STEPS)
    checks.append(Check('free-particle-drift', drift_report(traj, relativistic.constraints)['max'], 1e-9))
    line = np.abs(traj.q - np.outer(traj.times, [1.0, 0.0, 0.0, 0.0]))
    checks.append(Check('free-particle-line', float(line.max()), 1e-9))

    em = context.system('em-3d')
    period = 2.0 * math.pi * em.params['m'] / (em.params['e'] * em.params['B'])
    center = np.array([0.0, -1.0, 0.0])
    orbit = integrate(em.dirac, Gauge.unit(), em.initial_state, period / 2000, 2000)
    radius = abs(np.linalg.norm(orbit.q[-1] - center) - 1.0)
    checks.append(Check('larmor-radius', radius, 1e-6))
    checks.append(Check('larmor-energy', conserved_drift(orbit, em.hamiltonian.H), 1e-8))
    long_run = integrate(em.dirac, Gauge.unit(), em.initial_state, 1e-3, LONG_RUN_STEPS)
    checks.append(Check('energy-conservation-long-run', conserved_drift(long_run, em.hamiltonian.H), 1e-8))

    errors = []
    for steps in (100, 200):
        run = integrate(em.dirac, Gauge.unit(), em.initial_state, period / steps, steps)
        errors.append(float(np.linalg.norm(run.q[-1] - em.initial_state[:3])))
    factor = errors[0] / errors[1]
    checks.append(Check('rk4-order-low', factor, 12.0, mode='min'))
    checks.append(Check('rk4-order-high', factor, 20.0))

    massless = context.system('massless')
    null = integrate(massless.dirac, Gauge.unit(), massless.initial_state, 1e-3, LONG_RUN_STEPS)
    checks.append(Check('null-constraint-drift', drift_report(null, massless.constraints)['max'], 1e-10))

    charged = context.system('relativistic', {'B': 1.0})
    m = charged.params['m']
    x0 = np.array([0.0, 0.0, 0.0, 0.0, math.sqrt(m * m + 1.0), 1.0, 0.0, 0.0])
    circle = integrate(charged.dirac, Gauge.unit(), x0, 5e-3, 400)
    checks.append(Check('reparametrization', reparametrize_check(charged.dirac, circle, lambda s: 2.0 * s,
                                                                 lambda s: 2.0 + 0.0 * s), 1e-8))
    return checks


def gauge_invariance(policy, rng, context):
    """Euler-Lagrange residual and momentum shift under A -> A + grad chi"""
    metric = MetricSpec.euclidean(3)
    em = EMFieldSpec.constant_magnetic(1.0)
    base = build_em_lagrangian(metric, em)
    residual_gap = momentum_gap = 0.0
    for _ in range(10):
        chi = PolynomialGauge.random(rng, 3)
        shifted = build_em_lagrangian(metric, em.with_gauge(chi))
        for _ in range(5):
            a = SecondTangent(*rng.normal(size=(3, 3)))
            gap = euler_lagrange_residual(shifted, a) - euler_lagrange_residual(base, a)
            residual_gap = max(residual_gap, float(np.max(np.abs(gap))))
            x = TangentPoint(a.q, a.qdot)
            shift = legendre_map(shifted, x).p - legendre_map(base, x).p
            momentum_gap = max(momentum_gap, float(np.max(np.abs(shift - em.e * chi.gradient(a.q)))))
    return [
        Check('gauge-euler-lagrange', residual_gap, 1e-9),
        Check('gauge-momentum-shift', momentum_gap, 1e-10),
    ]


def statics_singularity(policy, rng, context):
    """Rank profile of the tied-point constitutive set"""
    profile = singularity_scan([-2.0, -1e-6, 1e-6, 1e-3, 0.5, 1.0, 2.0])
    regular = sum(1 for row in profile if row['rank'] != 2)
    at_origin = singularity_scan([0.0])[0]['rank']
    return [
        Check('rank-two-away-from-origin', regular, 0),
        Check('rank-at-origin', abs(at_origin - 1), 0),
    ]


def cross_formulation(policy, rng, context):
    """Lagrangian, Dirac and energy-family descriptions share their zero sets"""
    count = min(policy.samples, 50)
    checks = []

    kaluza = context.system('kaluza-5d')
    fam = slow_legendre(kaluza.lagrangian)
    plan = kaluza.energy_reduction
    anchor = kaluza.sampler(rng)
    anchor_fiber = np.concatenate([[0.0], plan['seed_rule'](np.concatenate([anchor, [0.0]]))])
    reduced = reduce_energy_family(fam, plan['eliminate'], anchor, anchor_fiber, seed_rule=plan['seed_rule'])
    dirac_gap = family_gap = 0.0
    for _ in range(count):
        tangent, _ = kaluza.tangent_sampler(rng)
        z = _lagrange_point(kaluza, tangent)
        dirac_gap = max(dirac_gap, dirac_residual(kaluza.dirac, z, [tangent.v[0]]).norm)
        family_gap = max(family_gap, family_residual(reduced, z, [tangent.v[0]]).norm)
    checks.append(Check('kaluza-lagrange-dirac', dirac_gap, 1e-8))
    checks.append(Check('kaluza-lagrange-energy-family', family_gap, 1e-8))

    relativistic = context.system('relativistic', {'B': 0.5})
    gap = 0.0
    for _ in range(count):
        tangent, _ = relativistic.tangent_sampler(rng)
        z = _lagrange_point(relativistic, tangent)
        speed = math.sqrt(float(tangent.v @ relativistic.metric.g(tangent.q) @ tangent.v))
        gap = max(gap, dirac_residual(relativistic.dirac, z, [speed]).norm)
    checks.append(Check('relativistic-lagrange-dirac', gap, 1e-8))

    massless = context.system('massless')
    gap = 0.0
    for _ in range(count):
        tangent, witness = massless.tangent_sampler(rng)
        z = _lagrange_point(massless, tangent, witness)
        gap = max(gap, dirac_residual(massless.dirac, z, witness).norm)
    checks.append(Check('massless-lagrange-dirac', gap, 1e-8))
    return checks


SUITES = (
    ('canonical-maps', canonical_maps),
    ('poisson-algebra', poisson_algebra),
    ('autodiff', autodiff),
    ('generator-isotropy', generator_isotropy),
    ('legendre-agreement', legendre_agreement),
    ('slow-rank', slow_rank),
    ('fast-transform-failure', fast_transform_failure),
    ('constraint-algorithm', constraint_algorithm),
    ('integration', integration),
    ('gauge-invariance', gauge_invariance),
    ('statics-singularity', statics_singularity),
    ('cross-formulation', cross_formulation),
)


class SuiteContext:
    """Caches catalog systems across suites"""

    def __init__(self, inject_sign_flip=False):
        self.inject_sign_flip = inject_sign_flip
        self._systems = {}

    def system(self, system_id, params=None):
        key = (system_id, tuple(sorted((params or {}).items())))
        if key not in self._systems:
            self._systems[key] = build_system(system_id, params)
        return self._systems[key]


def run_suites(policy, inject_sign_flip=False, names=None):
    """
    Run the invariant suites

    Args:
        policy (NumericPolicy): Sample counts, tolerance and seed
        inject_sign_flip (bool): Flip the sign of dL/dq in the Lagrangian isotropy checks
        names (list, optional): Subset of suite names (default all)

    Returns:
        dict: suites (name -> passed, checks) and the overall passed flag

    Raises:
        ValueError: Unknown suite name
    """
    known = [name for name, _ in SUITES]
    selected = list(names) if names else known
    unknown = [name for name in selected if name not in known]
    if unknown:
        raise ValueError(f"Unknown suites: {', '.join(unknown)}. Expected some of: {', '.join(known)}")

    context = SuiteContext(inject_sign_flip)
    results = {}
    for index, (name, suite) in enumerate(SUITES):
        if name not in selected:
            continue
        rng = np.random.default_rng([policy.seed, index])
        checks = suite(policy, rng, context)
        passed = all(c.passed for c in checks)
        results[name] = {'passed': passed, 'checks': [c.to_dict() for c in checks]}
        if passed:
            logger.info(f"Suite '{name}' passed ({len(checks)} checks)")
        else:
            failed = [c.name for c in checks if not c.passed]
            logger.warning(f"Suite '{name}' failed: {', '.join(failed)}")
    return {'suites': results, 'passed': all(r['passed'] for r in results.values())}
