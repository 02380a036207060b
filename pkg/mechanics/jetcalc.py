"""
Second-order forward-mode differentiation of scalar fields

A Jet2 carries the value, gradient and Hessian of a scalar with respect to a
fixed list of variables. Scalar fields evaluate on floats or on jets; calling a
field on jets composes by the chain rule.
"""

import logging
import math

import numpy as np

from utils.numerics import newton_solve

# Get or create logger for this module
logger = logging.getLogger(__name__)
# Only set level if not already configured
if not logger.handlers:
    logger.setLevel(logging.INFO)


DEFAULT_FD_GRADIENT_STEP = 1e-5
DEFAULT_FD_HESSIAN_STEP = 1e-4
BRACKET_HESSIAN_STEP = 1e-5


class DomainError(ValueError):
    """Raised when a point violates the domain guard of a field"""

    def __init__(self, guard_name, point=None, detail=None):
        self.guard_name = guard_name
        self.point = None if point is None else np.array(point, dtype=float)
        message = f"Domain guard '{guard_name}' violated"
        if point is not None:
            message += f" at {np.array2string(self.point, precision=6)}"
        if detail:
            message += f" ({detail})"
        super().__init__(message)


class Jet2:
    """Value, gradient and (optionally) Hessian of a scalar"""

    __slots__ = ('value', 'gradient', 'hessian')
    __array_ufunc__ = None

    def __init__(self, value, gradient, hessian=None, _symmetric=False):
        """
        Initialize a jet

        Args:
            value (float): Scalar value
            gradient (np.ndarray): Gradient of length n
            hessian (np.ndarray, optional): n x n Hessian; None in first-order mode
        """
        self.value = float(value)
        self.gradient = np.asarray(gradient, dtype=float)
        if hessian is not None:
            hessian = np.asarray(hessian, dtype=float)
            if hessian.shape != (self.gradient.size, self.gradient.size):
                raise ValueError(
                    f"Hessian shape {hessian.shape} does not match gradient length {self.gradient.size}"
                )
            if not _symmetric:
                hessian = 0.5 * (hessian + hessian.T)
        self.hessian = hessian

    @classmethod
    def constant(cls, value, n, order=2):
        """Jet of a constant in n variables"""
        return cls(value, np.zeros(n), np.zeros((n, n)) if order == 2 else None, _symmetric=True)

    @property
    def size(self):
        return self.gradient.size

    @property
    def order(self):
        return 1 if self.hessian is None else 2

    def __repr__(self):
        return f"Jet2(value={self.value!r}, gradient={self.gradient!r}, order={self.order})"

    def __float__(self):
        return self.value

    def _chain(self, f0, f1, f2):
        # unary chain rule: f(a) with f' = f1, f'' = f2
        grad = f1 * self.gradient
        if self.hessian is None:
            return Jet2(f0, grad)
        hess = f1 * self.hessian + f2 * np.outer(self.gradient, self.gradient)
        return Jet2(f0, grad, hess, _symmetric=True)

    def _scaled(self, c):
        hess = None if self.hessian is None else c * self.hessian
        return Jet2(self.value * c, c * self.gradient, hess, _symmetric=True)

    def __add__(self, other):
        if isinstance(other, Jet2):
            hess = None
            if self.hessian is not None and other.hessian is not None:
                hess = self.hessian + other.hessian
            return Jet2(self.value + other.value, self.gradient + other.gradient, hess, _symmetric=True)
        if isinstance(other, (int, float, np.number)):
            return Jet2(self.value + float(other), self.gradient, self.hessian, _symmetric=True)
        return NotImplemented

    __radd__ = __add__

    def __neg__(self):
        return self._scaled(-1.0)

    def __pos__(self):
        return self

    def __sub__(self, other):
        if isinstance(other, (Jet2, int, float, np.number)):
            return self + (-other)
        return NotImplemented

    def __rsub__(self, other):
        if isinstance(other, (int, float, np.number)):
            return (-self) + other
        return NotImplemented

    def __mul__(self, other):
        if isinstance(other, Jet2):
            grad = self.value * other.gradient + other.value * self.gradient
            hess = None
            if self.hessian is not None and other.hessian is not None:
                cross = np.outer(self.gradient, other.gradient)
                hess = self.value * other.hessian + other.value * self.hessian + (cross + cross.T)
            return Jet2(self.value * other.value, grad, hess, _symmetric=True)
        if isinstance(other, (int, float, np.number)):
            return self._scaled(float(other))
        return NotImplemented

    __rmul__ = __mul__

    def reciprocal(self):
        v = self.value
        if v == 0.0:
            raise ZeroDivisionError("Jet2 division by a jet with zero value")
        return self._chain(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))

    def __truediv__(self, other):
        if isinstance(other, Jet2):
            return self * other.reciprocal()
        if isinstance(other, (int, float, np.number)):
            return self._scaled(1.0 / float(other))
        return NotImplemented

    def __rtruediv__(self, other):
        if isinstance(other, (int, float, np.number)):
            return self.reciprocal()._scaled(float(other))
        return NotImplemented

    def __pow__(self, exponent):
        if isinstance(exponent, Jet2):
            return exp(exponent * log(self))
        if not isinstance(exponent, (int, float, np.number)):
            return NotImplemented
        k = float(exponent)
        if k == 0.0:
            return Jet2.constant(1.0, self.size, self.order)
        if k == 1.0:
            return self
        v = self.value
        if k == 2.0:
            return self._chain(v * v, 2.0 * v, 2.0)
        f0 = math.pow(v, k)
        f1 = k * math.pow(v, k - 1.0)
        f2 = k * (k - 1.0) * math.pow(v, k - 2.0)
        return self._chain(f0, f1, f2)

    def __rpow__(self, base):
        if isinstance(base, (int, float, np.number)):
            return exp(self * math.log(float(base)))
        return NotImplemented

    def __abs__(self):
        return self if self.value >= 0.0 else -self

    def __lt__(self, other):
        return self.value < float(other)

    def __le__(self, other):
        return self.value <= float(other)

    def __gt__(self, other):
        return self.value > float(other)

    def __ge__(self, other):
        return self.value >= float(other)


def variables(x, order=2):
    """
    Seed jets for independent variables

    Args:
        x (array-like): Point of length n
        order (int): 2 for value/gradient/Hessian, 1 for value/gradient only

    Returns:
        list: n Jet2 objects with unit gradients
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    eye = np.eye(n)
    zero = np.zeros((n, n)) if order == 2 else None
    return [Jet2(x[i], eye[i], zero, _symmetric=True) for i in range(n)]


def sqrt(a):
    if isinstance(a, Jet2):
        if a.value <= 0.0:
            raise ValueError(f"sqrt of a jet with non-positive value {a.value}")
        s = math.sqrt(a.value)
        return a._chain(s, 0.5 / s, -0.25 / (s * a.value))
    return math.sqrt(a)


def exp(a):
    if isinstance(a, Jet2):
        e = math.exp(a.value)
        return a._chain(e, e, e)
    return math.exp(a)


def log(a):
    if isinstance(a, Jet2):
        v = a.value
        if v <= 0.0:
            raise ValueError(f"log of a jet with non-positive value {v}")
        return a._chain(math.log(v), 1.0 / v, -1.0 / (v * v))
    return math.log(a)


def sin(a):
    if isinstance(a, Jet2):
        s, c = math.sin(a.value), math.cos(a.value)
        return a._chain(s, c, -s)
    return math.sin(a)


def cos(a):
    if isinstance(a, Jet2):
        s, c = math.sin(a.value), math.cos(a.value)
        return a._chain(c, -s, -c)
    return math.cos(a)


class ScalarField:
    """Base class for scalar fields on a coordinate domain"""

    def __init__(self, arity, guard=None, guard_name=None, name=None):
        """
        Initialize a scalar field

        Args:
            arity (int): Number of variables
            guard (callable, optional): Predicate on a float point marking admissible inputs
            guard_name (str, optional): Label reported when the guard fails
            name (str, optional): Display name
        """
        self.arity = int(arity)
        self.guard = guard
        self.guard_name = guard_name or 'domain'
        self.name = name or type(self).__name__

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name!r}, arity={self.arity})"

    def admissible(self, x):
        """True when x passes the domain guard"""
        if self.guard is None:
            return True
        try:
            return bool(self.guard(np.asarray(x, dtype=float)))
        except (ValueError, ZeroDivisionError, OverflowError):
            return False

    def check_domain(self, x):
        """
        Raise if x is not admissible

        Raises:
            DomainError: Guard violated or wrong point size
        """
        x = np.asarray(x, dtype=float)
        if x.shape != (self.arity,):
            raise ValueError(f"Field '{self.name}' expects {self.arity} variables, got shape {x.shape}")
        if not self.admissible(x):
            raise DomainError(self.guard_name, x, detail=f"field '{self.name}'")
        return x

    def evaluate(self, x):
        """
        Value of the field at a point

        Args:
            x (array-like): Point of length arity

        Returns:
            float: Field value
        """
        return float(self._value(self.check_domain(x)))

    def jet(self, x, order=2):
        """
        Jet of the field at a point

        Args:
            x (array-like): Point of length arity
            order (int): 2 for the Hessian as well, 1 for value and gradient

        Returns:
            Jet2: Derivatives with respect to the field's own variables
        """
        return self._jet(self.check_domain(x), order)

    def _value(self, x):
        return self._jet(x, 1).value

    def _jet(self, x, order):
        raise NotImplementedError("Field must implement _jet method")

    def __call__(self, *args):
        if len(args) != self.arity:
            raise ValueError(f"Field '{self.name}' expects {self.arity} arguments, got {len(args)}")
        jets = [a for a in args if isinstance(a, Jet2)]
        if not jets:
            return self.evaluate([float(a) for a in args])
        n = jets[0].size
        order = 2 if all(j.hessian is not None for j in jets) else 1
        x = np.array([a.value if isinstance(a, Jet2) else float(a) for a in args])
        inner = self.jet(x, order=order)
        G = np.zeros((self.arity, n))
        for i, a in enumerate(args):
            if isinstance(a, Jet2):
                G[i] = a.gradient
        grad = G.T @ inner.gradient
        if order == 1:
            return Jet2(inner.value, grad)
        hess = G.T @ inner.hessian @ G
        for i, a in enumerate(args):
            if isinstance(a, Jet2) and inner.gradient[i] != 0.0:
                hess = hess + inner.gradient[i] * a.hessian
        return Jet2(inner.value, grad, hess)

    def _combine(self, other, op, symbol):
        if isinstance(other, ScalarField):
            if other.arity != self.arity:
                raise ValueError(f"Cannot combine fields of arity {self.arity} and {other.arity}")
            guards = [f for f in (self, other) if f.guard is not None]
            guard = (lambda x: all(f.guard(x) for f in guards)) if guards else None
            guard_name = ' and '.join(f.guard_name for f in guards) or None
            return ExpressionField(
                lambda z: op(self(*z), other(*z)), self.arity, guard=guard,
                guard_name=guard_name, name=f"({self.name} {symbol} {other.name})",
            )
        if isinstance(other, (int, float, np.number)):
            c = float(other)
            return ExpressionField(
                lambda z: op(self(*z), c), self.arity, guard=self.guard,
                guard_name=self.guard_name, name=f"({self.name} {symbol} {c:g})",
            )
        return NotImplemented

    def __add__(self, other):
        return self._combine(other, lambda a, b: a + b, '+')

    def __radd__(self, other):
        return self._combine(other, lambda a, b: b + a, '+')

    def __sub__(self, other):
        return self._combine(other, lambda a, b: a - b, '-')

    def __rsub__(self, other):
        return self._combine(other, lambda a, b: b - a, '-')

    def __mul__(self, other):
        return self._combine(other, lambda a, b: a * b, '*')

    def __rmul__(self, other):
        return self._combine(other, lambda a, b: b * a, '*')

    def __neg__(self):
        return ExpressionField(lambda z: -self(*z), self.arity, guard=self.guard,
                               guard_name=self.guard_name, name=f"-{self.name}")


class ExpressionField(ScalarField):
    """Field defined by a Python callable on a list of scalars"""

    def __init__(self, fn, arity, guard=None, guard_name=None, name=None):
        """
        Initialize an expression field

        Args:
            fn (callable): Map from a list of scalars (floats or Jet2) to a scalar,
                written with ordinary arithmetic and the functions of this module
            arity (int): Number of variables
            guard (callable, optional): Domain predicate on a float point
            guard_name (str, optional): Label of the guard
            name (str, optional): Display name
        """
        super().__init__(arity, guard=guard, guard_name=guard_name, name=name or 'expression')
        self.fn = fn

    def _value(self, x):
        return float(self.fn([float(v) for v in x]))

    def _jet(self, x, order):
        result = self.fn(variables(x, order))
        if not isinstance(result, Jet2):
            return Jet2.constant(result, self.arity, order)
        return result

    def __call__(self, *args):
        if len(args) != self.arity:
            raise ValueError(f"Field '{self.name}' expects {self.arity} arguments, got {len(args)}")
        jets = [a for a in args if isinstance(a, Jet2)]
        if not jets:
            return self.evaluate([float(a) for a in args])
        if self.guard is not None:
            self.check_domain([float(a) for a in args])
        result = self.fn(list(args))
        if not isinstance(result, Jet2):
            order = 2 if all(j.hessian is not None for j in jets) else 1
            return Jet2.constant(result, jets[0].size, order)
        return result


def constant_field(value, arity, name=None):
    """Field with the same value everywhere"""
    return ExpressionField(lambda z: float(value), arity, name=name or f"const({value:g})")


def coordinate_field(index, arity, name=None):
    """Field returning one coordinate"""
    return ExpressionField(lambda z: z[index], arity, name=name or f"x{index}")


class ReducedField(ScalarField):
    """
    Field obtained by eliminating variables at a stationary point

    The eliminated block y_E solves dU/dy_E = 0 by Newton iteration. The
    gradient is the kept partial gradient of the parent (envelope identity)
    and the Hessian is the Schur complement H_RR - H_RE H_EE^-1 H_ER.
    """

    def __init__(self, parent, eliminate, seed_rule=None, anchor_seed=None,
                 tol=1e-12, max_iter=50, name=None):
        """
        Initialize a reduced field

        Args:
            parent (ScalarField): Field of all variables
            eliminate (list): Parent variable indices to eliminate
            seed_rule (callable, optional): Map from the kept point to a seed for the
                eliminated block
            anchor_seed (array-like, optional): Constant seed used without a seed rule
            tol (float): Newton tolerance on the eliminated gradient
            max_iter (int): Newton iteration limit
            name (str, optional): Display name
        """
        self.parent = parent
        self.eliminate = [int(i) for i in eliminate]
        self.keep = [i for i in range(parent.arity) if i not in set(self.eliminate)]
        if seed_rule is None and anchor_seed is None:
            raise ValueError("ReducedField needs a seed_rule or an anchor_seed")
        self.seed_rule = seed_rule
        self.anchor_seed = None if anchor_seed is None else np.asarray(anchor_seed, dtype=float)
        self.tol = tol
        self.max_iter = max_iter
        super().__init__(len(self.keep), name=name or f"reduced({parent.name})")

    def assemble(self, x_kept, y_elim):
        """Parent point from kept and eliminated values"""
        full = np.zeros(self.parent.arity)
        full[self.keep] = x_kept
        full[self.eliminate] = y_elim
        return full

    def solve(self, x_kept):
        """
        Solve the eliminated block at a kept point

        Args:
            x_kept (np.ndarray): Values of the kept variables

        Returns:
            np.ndarray: Full parent point at the stationary eliminated block
        """
        x_kept = np.asarray(x_kept, dtype=float)
        seed = self.seed_rule(x_kept) if self.seed_rule is not None else self.anchor_seed
        cache = {}

        def parent_jet(y):
            key = y.tobytes()
            if key not in cache:
                cache.clear()
                cache[key] = self.parent.jet(self.assemble(x_kept, y), order=2)
            return cache[key]

        def residual(y):
            return parent_jet(y).gradient[self.eliminate]

        def jacobian(y):
            return parent_jet(y).hessian[np.ix_(self.eliminate, self.eliminate)]

        y, _ = newton_solve(residual, jacobian, np.asarray(seed, dtype=float),
                            tol=self.tol, max_iter=self.max_iter)
        return self.assemble(x_kept, y)

    def _value(self, x):
        return self.parent.evaluate(self.solve(x))

    def _jet(self, x, order):
        pj = self.parent.jet(self.solve(x), order=2)
        grad = pj.gradient[self.keep]
        if order == 1:
            return Jet2(pj.value, grad)
        H = pj.hessian
        H_rr = H[np.ix_(self.keep, self.keep)]
        H_re = H[np.ix_(self.keep, self.eliminate)]
        H_ee = H[np.ix_(self.eliminate, self.eliminate)]
        hess = H_rr - H_re @ np.linalg.solve(H_ee, H_re.T)
        return Jet2(pj.value, grad, hess)


class BracketField(ScalarField):
    """
    Poisson bracket {F, G} of two fields on a cotangent bundle

    Variables are ordered (q, p). Value and gradient are exact from the
    parents' jets; the Hessian is a central difference of the exact gradient.
    """

    def __init__(self, F, G, m, name=None):
        if F.arity != 2 * m or G.arity != 2 * m:
            raise ValueError(f"Bracket fields must have arity {2 * m}, got {F.arity} and {G.arity}")
        guards = [f for f in (F, G) if f.guard is not None]
        guard = (lambda x: all(f.guard(x) for f in guards)) if guards else None
        guard_name = ' and '.join(f.guard_name for f in guards) or None
        super().__init__(2 * m, guard=guard, guard_name=guard_name,
                         name=name or f"{{{F.name}, {G.name}}}")
        self.F = F
        self.G = G
        self.m = m

    def _bracket_gradient(self, x):
        m = self.m
        jF = self.F.jet(x, order=2)
        jG = self.G.jet(x, order=2)
        gF, gG = jF.gradient, jG.gradient
        value = float(gF[:m] @ gG[m:] - gG[:m] @ gF[m:])
        grad = (jF.hessian[:, :m] @ gG[m:] + jG.hessian[:, m:] @ gF[:m]
                - jG.hessian[:, :m] @ gF[m:] - jF.hessian[:, m:] @ gG[:m])
        return value, grad

    def _value(self, x):
        m = self.m
        gF = self.F.jet(x, order=1).gradient
        gG = self.G.jet(x, order=1).gradient
        return float(gF[:m] @ gG[m:] - gG[:m] @ gF[m:])

    def _jet(self, x, order):
        value, grad = self._bracket_gradient(x)
        if order == 1:
            return Jet2(value, grad)
        h = BRACKET_HESSIAN_STEP
        columns = []
        for i in range(self.arity):
            e = np.zeros(self.arity)
            e[i] = h
            plus = self.check_domain(x + e)
            minus = self.check_domain(x - e)
            columns.append((self._bracket_gradient(plus)[1] - self._bracket_gradient(minus)[1]) / (2.0 * h))
        return Jet2(value, grad, np.column_stack(columns))


class PartialField(ScalarField):
    """Partial derivative dF/dx_index as a field (Hessian by central differences)"""

    def __init__(self, F, index, name=None):
        if not 0 <= index < F.arity:
            raise ValueError(f"Index {index} out of range for arity {F.arity}")
        super().__init__(F.arity, guard=F.guard, guard_name=F.guard_name,
                         name=name or f"d{index}({F.name})")
        self.F = F
        self.index = int(index)

    def _value(self, x):
        return float(self.F.jet(x, order=1).gradient[self.index])

    def _jet(self, x, order):
        j = self.F.jet(x, order=2)
        value, grad = j.gradient[self.index], j.hessian[self.index].copy()
        if order == 1:
            return Jet2(value, grad)
        h = BRACKET_HESSIAN_STEP
        columns = []
        for i in range(self.arity):
            e = np.zeros(self.arity)
            e[i] = h
            plus = self.F.jet(self.check_domain(x + e), order=2).hessian[self.index]
            minus = self.F.jet(self.check_domain(x - e), order=2).hessian[self.index]
            columns.append((plus - minus) / (2.0 * h))
        return Jet2(value, grad, np.column_stack(columns))


def jet(f, x):
    """
    Value, gradient and Hessian of a field

    Args:
        f (ScalarField): Field
        x (array-like): Point passing the field's guard

    Returns:
        Jet2: Second-order jet

    Raises:
        DomainError: x violates the guard
    """
    return f.jet(x, order=2)


def gradient(f, x):
    """First-order jet of a field (no Hessian propagated)"""
    return f.jet(x, order=1)


def fd_jet(f, x, h=None, h_grad=DEFAULT_FD_GRADIENT_STEP, h_hess=DEFAULT_FD_HESSIAN_STEP):
    """
    Central-difference gradient and Hessian, used as a test oracle

    Args:
        f (ScalarField): Field
        x (array-like): Point
        h (float, optional): Single step for both gradient and Hessian
        h_grad (float): Gradient step
        h_hess (float): Hessian step

    Returns:
        Jet2: Finite-difference jet, O(h^2) accurate

    Raises:
        DomainError: x or a stencil point violates the guard
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    hg = h if h is not None else h_grad
    hh = h if h is not None else h_hess

    def value(point):
        if not f.admissible(point):
            raise DomainError(f.guard_name, point, detail='finite-difference stencil')
        return f.evaluate(point)

    f0 = value(x)
    eye = np.eye(n)
    grad = np.array([(value(x + hg * eye[i]) - value(x - hg * eye[i])) / (2.0 * hg) for i in range(n)])
    hess = np.zeros((n, n))
    for i in range(n):
        hess[i, i] = (value(x + 2 * hh * eye[i]) - 2.0 * f0 + value(x - 2 * hh * eye[i])) / (4.0 * hh * hh)
        for j in range(i + 1, n):
            ei, ej = hh * eye[i], hh * eye[j]
            hess[i, j] = (value(x + ei + ej) - value(x + ei - ej)
                          - value(x - ei + ej) + value(x - ei - ej)) / (4.0 * hh * hh)
            hess[j, i] = hess[i, j]
    return Jet2(f0, grad, hess, _symmetric=True)
