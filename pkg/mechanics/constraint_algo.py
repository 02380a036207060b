"""
Integrability machinery for constrained Hamiltonian dynamics: bracket
tangency tests, secondary-constraint discovery, multiplier conditions, the
Dirac-style iteration and the prolongation feasibility test
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from mechanics.bundles import CotangentPoint, bracket_field, poisson_bracket_from_gradients
from mechanics.dynamics import MultiplierDomain
from mechanics.jetcalc import DomainError, ExpressionField, PartialField
from utils.numerics import DEFAULT_RANK_RTOL, ConvergenceError, NumericalFailure, gauss_newton, nullspace, numerical_rank

# Get or create logger for this module
logger = logging.getLogger(__name__)
# Only set level if not already configured
if not logger.handlers:
    logger.setLevel(logging.INFO)


ON_SET_TOL = 1e-8
PROJECTION_TOL = 1e-11
CONE_MARGIN = 1e-9
MERGE_COSINE = 1.0 - 1e-6
GENERATION_TAGS = ('primary', 'secondary', 'tertiary')

VERDICT_INTEGRABLE = 'integrable-at-samples'
VERDICT_NEW_CONSTRAINTS = 'new constraints added'
VERDICT_RESTRICTED = 'multiplier-restricted'
VERDICT_FAILED = 'failed'

PROLONGATION_NOTE = 'prolongation feasibility is checked per point; set-level iteration of it is not performed'


class ProjectionError(NumericalFailure):
    """Raised when a point cannot be projected onto a constraint set"""


class OffConstraintError(ValueError):
    """Raised when a point expected on a constraint set is not on it"""


def generation_tag(generation):
    """Tag of constraints found in a generation (0 = primary)"""
    if generation < len(GENERATION_TAGS):
        return GENERATION_TAGS[generation]
    return f"order-{generation}"


class HamiltonianFamily:
    """Multiplier-linear family H_alpha = sum_i alpha^i K_i over T*Q"""

    def __init__(self, generators, domains, m, names=None):
        """
        Initialize a Hamiltonian family

        Args:
            generators (list): ScalarFields K_i over (q, p)
            domains (list): MultiplierDomain (or kind string) per generator
            m (int): Configuration dimension
            names (list, optional): Display names of the generators
        """
        if not generators:
            raise ValueError("A Hamiltonian family needs at least one generator")
        self.generators = list(generators)
        self.domains = [d if isinstance(d, MultiplierDomain) else MultiplierDomain(d) for d in domains]
        if len(self.domains) != len(self.generators):
            raise ValueError(f"{len(self.generators)} generators but {len(self.domains)} domains")
        self.m = int(m)
        for K in self.generators:
            if K.arity != 2 * self.m:
                raise ValueError(f"Generator '{K.name}' arity {K.arity} does not match 2m = {2 * self.m}")
        self.names = list(names) if names is not None else [K.name for K in self.generators]

    def __len__(self):
        return len(self.generators)

    def __repr__(self):
        return f"HamiltonianFamily(m={self.m}, generators={self.names})"

    @classmethod
    def from_dirac(cls, sys):
        """Family of a Dirac system: base Hamiltonian (unit) plus its constraints"""
        return cls([sys.base_H] + sys.constraints, [MultiplierDomain.unit()] + sys.domains, sys.m,
                   names=[sys.base_H.name] + [phi.name for phi in sys.constraints])

    def hamiltonian(self, alpha):
        """H_alpha as a field"""
        alpha = [float(a) for a in alpha]
        generators = self.generators

        def combined(z):
            total = 0.0
            for a, K in zip(alpha, generators):
                if a != 0.0:
                    total = total + a * K(*z)
            return total

        return ExpressionField(combined, 2 * self.m, name='H_alpha')

    def vector_field(self, x, alpha):
        """(qdot, pdot) of H_alpha at x"""
        m = self.m
        grad = np.zeros(2 * m)
        for a, K in zip(alpha, self.generators):
            grad = grad + a * K.jet(x, order=1).gradient
        return grad[m:], -grad[:m]

    def hamiltonian_field_components(self, index):
        """Components (dK/dp, -dK/dq) of one generator's vector field as fields"""
        K = self.generators[index]
        m = self.m
        dp = [PartialField(K, m + j) for j in range(m)]
        dq = [-PartialField(K, j) for j in range(m)]
        return dp + dq


class ConstraintSet:
    """Constraint functions over T*Q with their generation tags"""

    def __init__(self, functions=None, tags=None, names=None):
        self.functions = list(functions or [])
        self.tags = list(tags) if tags is not None else ['primary'] * len(self.functions)
        self.names = list(names) if names is not None else [f.name for f in self.functions]
        if not (len(self.tags) == len(self.names) == len(self.functions)):
            raise ValueError("Constraint functions, tags and names must have the same length")

    def __len__(self):
        return len(self.functions)

    def __repr__(self):
        return f"ConstraintSet({list(zip(self.names, self.tags))})"

    @property
    def is_empty(self):
        return not self.functions

    def values(self, x):
        return np.array([f.evaluate(x) for f in self.functions])

    def jacobian(self, x):
        """Rows grad Phi_A(x)"""
        if not self.functions:
            return np.zeros((0, np.asarray(x).size))
        return np.vstack([f.jet(x, order=1).gradient for f in self.functions])

    def max_violation(self, x):
        values = self.values(x)
        return float(np.max(np.abs(values))) if values.size else 0.0

    def extended(self, functions, tag, names=None):
        """A new set with functions appended under one tag"""
        names = list(names) if names is not None else [f.name for f in functions]
        return ConstraintSet(self.functions + list(functions), self.tags + [tag] * len(functions),
                             self.names + names)

    def subset(self, indices):
        return ConstraintSet([self.functions[i] for i in indices], [self.tags[i] for i in indices],
                             [self.names[i] for i in indices])

    def describe(self):
        return [{'name': n, 'tag': t} for n, t in zip(self.names, self.tags)]


@dataclass
class MultiplierConditions:
    """Linear conditions sum_i alpha^i {K_i, Phi_A}(x) = 0 at one point"""

    coefficients: np.ndarray
    rank: int
    null_basis: np.ndarray
    feasible: bool
    alpha: np.ndarray = None
    ratio: float = None


@dataclass
class GenerationRecord:
    """Outcome of one generation of the constraint algorithm"""

    index: int
    constraints: list
    samples: int
    bracket_max: list
    added: list = field(default_factory=list)
    dropped: list = field(default_factory=list)
    multiplier_conditions: int = 0
    cone: dict = field(default_factory=dict)
    verdict: str = VERDICT_FAILED

    def to_dict(self):
        return {
            'index': self.index,
            'constraints': self.constraints,
            'samples': self.samples,
            'bracket_max': self.bracket_max,
            'added': self.added,
            'dropped': self.dropped,
            'multiplier_conditions': self.multiplier_conditions,
            'cone': self.cone,
            'verdict': self.verdict,
        }


@dataclass
class AlgoReport:
    """Sequence of generations and the final verdict"""

    verdict: str
    generation: int
    constraints: ConstraintSet
    generations: list = field(default_factory=list)
    restricted_bracket_max: float = None
    reason: str = None
    notes: list = field(default_factory=list)

    @property
    def secondary_count(self):
        return sum(1 for tag in self.constraints.tags if tag != 'primary')

    @property
    def multiplier_conditions(self):
        return self.generations[-1].multiplier_conditions if self.generations else 0

    def to_dict(self):
        return {
            'verdict': self.verdict,
            'generation': self.generation,
            'secondary_constraints': self.secondary_count,
            'multiplier_conditions': self.multiplier_conditions,
            'constraints': self.constraints.describe(),
            'restricted_bracket_max': self.restricted_bracket_max,
            'reason': self.reason,
            'generations': [g.to_dict() for g in self.generations],
            'notes': self.notes,
        }


def _point_array(x):
    if isinstance(x, CotangentPoint):
        return x.as_array()
    return np.asarray(x, dtype=float).reshape(-1)


def project_to_constraints(x0, C, tol=PROJECTION_TOL, max_iter=50):
    """
    Gauss-Newton projection of a point onto a constraint set

    Args:
        x0 (CotangentPoint or array-like): Seed point
        C (ConstraintSet): Constraints
        tol (float): Target max |Phi_A|
        max_iter (int): Iteration limit

    Returns:
        CotangentPoint: Point with max |Phi_A| <= tol

    Raises:
        ProjectionError: Gauss-Newton diverges or leaves a field's domain
    """
    x0 = _point_array(x0)
    if C.is_empty:
        return CotangentPoint.from_array(x0)
    try:
        x = gauss_newton(C.values, C.jacobian, x0, tol=tol, max_iter=max_iter)
    except (ConvergenceError, DomainError) as e:
        error_msg = f"Projection onto {C.names} failed from {x0}: {str(e)}"
        logger.error(error_msg)
        raise ProjectionError(error_msg)
    return CotangentPoint.from_array(x)


def bracket_matrix(fam, C, x, tol=ON_SET_TOL):
    """
    Poisson brackets {K_i, Phi_A} at a point of the constraint set

    Args:
        fam (HamiltonianFamily): Family
        C (ConstraintSet): Constraints
        x (CotangentPoint or array-like): Point on C
        tol (float): Membership tolerance

    Returns:
        np.ndarray: Matrix of shape (len(C), len(fam)), entry [A, i] = {K_i, Phi_A}(x)

    Raises:
        OffConstraintError: max |Phi_A(x)| > tol
    """
    x = _point_array(x)
    violation = C.max_violation(x)
    if violation > tol:
        error_msg = f"Point is off the constraint set: max |Phi| = {violation:.3e} > {tol:.1e}"
        logger.error(error_msg)
        raise OffConstraintError(error_msg)
    m = fam.m
    k_grads = [K.jet(x, order=1).gradient for K in fam.generators]
    c_grads = [f.jet(x, order=1).gradient for f in C.functions]
    M = np.zeros((len(C), len(fam)))
    for A, gc in enumerate(c_grads):
        for i, gk in enumerate(k_grads):
            M[A, i] = poisson_bracket_from_gradients(gk, gc, m)
    return M


def _active_rows(M, tol):
    """Rows with an entry above tol, each scaled to unit max norm"""
    M = np.atleast_2d(M)
    if M.size == 0:
        return np.zeros((0, M.shape[1]))
    scale = np.max(np.abs(M), axis=1)
    keep = scale > tol
    return M[keep] / scale[keep, None]


def cone_interior(rows, domains, rank_rtol=DEFAULT_RANK_RTOL):
    """
    Interior point of {alpha in domains : rows @ alpha = 0}

    Positive multipliers are pushed away from zero by maximizing their
    common lower bound; the result is refined onto the exact null space.

    Args:
        rows (np.ndarray): Normalized condition rows, shape (r, n)
        domains (list): MultiplierDomain per column

    Returns:
        np.ndarray or None: Interior alpha, or None when the cone is empty
    """
    n = len(domains)
    positive = [i for i, d in enumerate(domains) if d.kind == 'positive']
    unit = [i for i, d in enumerate(domains) if d.kind == 'unit']
    c = np.zeros(n + 1)
    c[-1] = -1.0
    bounds = []
    for d in domains:
        bounds.append({'positive': (0.0, 1.0), 'free': (-1.0, 1.0), 'unit': (1.0, 1.0)}[d.kind])
    bounds.append((0.0, 1.0))
    A_ub = b_ub = None
    if positive:
        A_ub = np.zeros((len(positive), n + 1))
        for r, i in enumerate(positive):
            A_ub[r, i] = -1.0
            A_ub[r, -1] = 1.0
        b_ub = np.zeros(len(positive))
    A_eq = b_eq = None
    if len(rows):
        A_eq = np.hstack([rows, np.zeros((len(rows), 1))])
        b_eq = np.zeros(len(rows))
    result = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method='highs')
    if result.status != 0:
        return None
    if positive and result.x[-1] <= CONE_MARGIN:
        return None

    alpha = result.x[:n]
    if len(rows):
        N = nullspace(rows, rank_rtol)
        alpha = N @ (N.T @ alpha)
    if unit:
        if abs(alpha[unit[0]]) <= CONE_MARGIN:
            return None
        alpha = alpha / alpha[unit[0]]
    if not all(d.contains(a) for d, a in zip(domains, alpha)):
        return None
    return alpha


def multiplier_conditions(fam, C, x, tol=ON_SET_TOL, rank_rtol=DEFAULT_RANK_RTOL):
    """
    Linear conditions on the multipliers at a point of the constraint set

    Args:
        fam (HamiltonianFamily): Family
        C (ConstraintSet): Current constraints
        x (CotangentPoint or array-like): Point on C
        tol (float): Bracket magnitude counted as zero

    Returns:
        MultiplierConditions: Active coefficient rows, their rank, the null basis,
            feasibility within the domains, an interior alpha and, for two
            generators, the ratio alpha^2 / alpha^1
    """
    rows = _active_rows(bracket_matrix(fam, C, x, tol=tol), tol)
    rank = numerical_rank(rows, rank_rtol)[0] if len(rows) else 0
    basis = nullspace(rows, rank_rtol) if len(rows) else np.eye(len(fam))
    alpha = cone_interior(rows, fam.domains, rank_rtol)
    ratio = None
    if alpha is not None and len(fam) == 2 and alpha[0] != 0.0:
        ratio = float(alpha[1] / alpha[0])
    return MultiplierConditions(rows, int(rank), basis, alpha is not None, alpha, ratio)


def _merge_candidates(candidates):
    kept = []
    for fn, values in candidates:
        norm = np.linalg.norm(values)
        duplicate = False
        for _, other in kept:
            cosine = abs(values @ other) / (norm * np.linalg.norm(other))
            if cosine >= MERGE_COSINE:
                duplicate = True
                break
        if not duplicate:
            kept.append((fn, values))
    return [fn for fn, _ in kept]


def discover_secondary(fam, C, points, tol=ON_SET_TOL):
    """
    Bracket functions that must vanish for the dynamics to stay on C

    A constraint row ({K_i, Phi_A})_i that no admissible alpha cancels at
    some sample contributes each of its bracket functions exceeding tol.
    Candidates proportional over the samples are merged.

    Args:
        fam (HamiltonianFamily): Family
        C (ConstraintSet): Constraints
        points (list): Sample points on C
        tol (float): Bracket magnitude counted as zero

    Returns:
        list: New constraint candidates as bracket fields
    """
    if C.is_empty or not points:
        return []
    arrays = [_point_array(x) for x in points]
    matrices = np.array([bracket_matrix(fam, C, x, tol=tol) for x in arrays])
    candidates = []
    for A in range(len(C)):
        infeasible = False
        for s in range(len(arrays)):
            rows = _active_rows(matrices[s, A:A + 1], tol)
            if len(rows) and cone_interior(rows, fam.domains) is None:
                infeasible = True
                break
        if not infeasible:
            continue
        for i in range(len(fam)):
            values = matrices[:, A, i]
            if np.max(np.abs(values)) > tol:
                candidates.append((bracket_field(fam.generators[i], C.functions[A]), values))
    found = _merge_candidates(candidates)
    if found:
        logger.info(f"Found {len(found)} secondary constraint candidate(s): {[f.name for f in found]}")
    return found


def independent_subset(C, points, rank_rtol=DEFAULT_RANK_RTOL):
    """
    Greedy selection of constraints with full-rank Jacobian at every sample

    Returns:
        tuple: (kept indices, dropped diagnostics)
    """
    kept, dropped = [], []
    jacobians = [C.jacobian(_point_array(x)) for x in points]
    for A in range(len(C)):
        trial = kept + [A]
        worst = np.inf
        ok = True
        for J in jacobians:
            rank, sv = numerical_rank(J[trial], rank_rtol)
            worst = min(worst, float(sv[-1]) if sv.size else 0.0)
            if rank < len(trial):
                ok = False
                break
        if ok:
            kept.append(A)
        else:
            logger.warning(f"Constraint '{C.names[A]}' is dependent at the samples and is dropped")
            dropped.append({'constraint': C.names[A], 'tag': C.tags[A], 'reason': 'rank drop',
                            'smallest_singular_value': worst})
    return kept, dropped


def sample_constraint_points(C, sampler, count, rng, excluded=None, tol=PROJECTION_TOL, max_attempts=None):
    """
    Project sampler seeds onto C until count points are collected

    Args:
        C (ConstraintSet): Constraints
        sampler (callable): Map rng -> seed point (q, p)
        count (int): Number of points wanted
        rng (np.random.Generator): Random source
        excluded (callable, optional): Predicate on (q, p) rejecting points
        tol (float): Projection tolerance
        max_attempts (int, optional): Seed budget (default 4 * count)

    Returns:
        list: CotangentPoints on C, in draw order
    """
    points = []
    attempts = max_attempts or 4 * count
    for _ in range(attempts):
        if len(points) >= count:
            break
        seed = np.asarray(sampler(rng), dtype=float)
        try:
            x = project_to_constraints(seed, C, tol=tol)
        except ProjectionError:
            logger.warning("Sample seed failed to project and was skipped")
            continue
        if excluded is not None and excluded(x.as_array()):
            continue
        points.append(x)
    return points


def dirac_iterate(fam, primary, sampler, tol=ON_SET_TOL, samples=64, max_generations=5, seed=0,
                  excluded=None, rank_rtol=DEFAULT_RANK_RTOL):
    """
    Iterate bracket tests until no new constraints appear

    Each generation projects fresh samples onto the current constraint set,
    drops dependent constraints, adds secondary candidates and finally solves
    the multiplier conditions at every sample.

    Args:
        fam (HamiltonianFamily): Family
        primary (ConstraintSet): Primary constraints
        sampler (callable): Map rng -> seed point (q, p)
        tol (float): Bracket magnitude counted as zero
        samples (int): Projected samples per generation
        max_generations (int): Generation limit
        seed (int): RNG seed
        excluded (callable, optional): Predicate on (q, p) rejecting samples
        rank_rtol (float): Relative rank threshold

    Returns:
        AlgoReport: Generations and the verdict
    """
    rng = np.random.default_rng(seed)
    C = primary
    records = []
    notes = [PROLONGATION_NOTE]
    for generation in range(max_generations + 1):
        points = sample_constraint_points(C, sampler, samples, rng, excluded=excluded)
        if not points:
            reason = f"no sample projected onto the constraint set in generation {generation}"
            logger.error(f"Constraint algorithm failed: {reason}")
            return AlgoReport(VERDICT_FAILED, generation, C, records, reason=reason, notes=notes)

        kept, dropped = independent_subset(C, points, rank_rtol)
        if dropped:
            C = C.subset(kept)
        matrices = [bracket_matrix(fam, C, x, tol=tol) for x in points]
        bracket_max = [float(np.max(np.abs([M[A] for M in matrices]))) for A in range(len(C))]
        record = GenerationRecord(generation, C.describe(), len(points), bracket_max, dropped=dropped)
        records.append(record)

        new = discover_secondary(fam, C, points, tol)
        if new:
            if generation == max_generations:
                record.verdict = VERDICT_FAILED
                reason = f"new constraints still appear after {max_generations} generations"
                logger.error(f"Constraint algorithm failed: {reason}")
                return AlgoReport(VERDICT_FAILED, generation, C, records, reason=reason, notes=notes)
            tag = generation_tag(generation + 1)
            record.added = [f.name for f in new]
            record.verdict = VERDICT_NEW_CONSTRAINTS
            C = C.extended(new, tag)
            logger.info(f"Generation {generation}: added {len(new)} {tag} constraint(s)")
            continue

        conditions = [multiplier_conditions(fam, C, x, tol=tol, rank_rtol=rank_rtol) for x in points]
        feasible = [c for c in conditions if c.feasible]
        record.multiplier_conditions = max(c.rank for c in conditions)
        record.cone = {
            'feasible_samples': len(feasible),
            'samples': len(conditions),
            'dimension': int(min(c.null_basis.shape[1] for c in conditions)),
            'domains': [d.describe() for d in fam.domains],
        }
        ratios = [c.ratio for c in feasible if c.ratio is not None]
        if ratios and record.multiplier_conditions:
            record.cone['ratio_min'] = float(min(ratios))
            record.cone['ratio_max'] = float(max(ratios))
        if len(feasible) < len(conditions):
            record.verdict = VERDICT_FAILED
            reason = f"no integrable part at samples: empty multiplier cone at {len(conditions) - len(feasible)} samples"
            logger.error(f"Constraint algorithm failed: {reason}")
            return AlgoReport(VERDICT_FAILED, generation, C, records, reason=reason, notes=notes)

        restricted = max(float(np.max(np.abs(M @ c.alpha))) if M.size else 0.0
                         for M, c in zip(matrices, conditions))
        if restricted > tol:
            record.verdict = VERDICT_FAILED
            reason = f"restricted brackets reach {restricted:.3e} > {tol:.1e}"
            logger.error(f"Constraint algorithm failed: {reason}")
            return AlgoReport(VERDICT_FAILED, generation, C, records, restricted, reason=reason, notes=notes)
        record.verdict = VERDICT_RESTRICTED if record.multiplier_conditions else VERDICT_INTEGRABLE
        logger.info(f"Constraint algorithm integrable at samples in generation {generation}")
        return AlgoReport(VERDICT_INTEGRABLE, generation, C, records, restricted, notes=notes)

    reason = f"generation limit {max_generations} reached"
    return AlgoReport(VERDICT_FAILED, max_generations, C, records, reason=reason, notes=notes)


def prolongation_defect(functions, v, tol=ON_SET_TOL, rank_rtol=DEFAULT_RANK_RTOL):
    """
    Least-squares residual of the prolonged equations at a point of D

    Solves (df/dqdot) qddot = -(df/dq) qdot in the least-squares sense.

    Args:
        functions (list): ScalarFields f_i over (q, qdot)
        v (TangentPoint): Point of D
        tol (float): Membership tolerance

    Returns:
        float: Largest residual entry of the linear system

    Raises:
        OffConstraintError: max |f_i(v)| > tol
    """
    m = v.dim
    point = np.concatenate([v.q, v.v])
    values = np.array([f.evaluate(point) for f in functions])
    if values.size and np.max(np.abs(values)) > tol:
        error_msg = f"Point is off D: max |f| = {np.max(np.abs(values)):.3e} > {tol:.1e}"
        logger.error(error_msg)
        raise OffConstraintError(error_msg)
    if not functions:
        return 0.0
    grads = np.vstack([f.jet(point, order=1).gradient for f in functions])
    A, rhs = grads[:, m:], -grads[:, :m] @ v.v
    qddot = np.linalg.lstsq(A, rhs, rcond=rank_rtol)[0]
    return float(np.max(np.abs(A @ qddot - rhs)))


def prolongation_feasible(functions, v, tol=ON_SET_TOL):
    """True when the prolonged equations are consistent at v (necessary integrability test)"""
    return prolongation_defect(functions, v, tol=tol) <= tol
