"""Cost functions over the load fraction x in [0, 1].

Expressions come from a small closed grammar -- numeric constants, the
variable ``x``, ``+ - * /``, unary minus, and integer powers -- which is
enough for the usual link performance shapes (affine, polynomial,
reciprocal-affine composites) while keeping scenario files auditable.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import EvaluationError, ValidationError

_BINOPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: a / b,
}


def _int_power(base, exponent: int):
    # Square-and-multiply with a fixed operation order so scalar and
    # numpy-array evaluation produce bit-identical doubles.
    if exponent < 0:
        return 1.0 / _int_power(base, -exponent)
    result = 1.0
    acc = base
    e = exponent
    while e:
        if e & 1:
            result = result * acc
        e >>= 1
        if e:
            acc = acc * acc
    return result


def _compile(node: ast.expr, expr: str) -> Callable:
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ValidationError(f"cost expression {expr!r}: non-numeric constant {node.value!r}")
        value = float(node.value)
        return lambda x: value
    if isinstance(node, ast.Name):
        if node.id != "x":
            raise ValidationError(f"cost expression {expr!r}: unknown name {node.id!r}, only 'x' is allowed")
        return lambda x: x
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _compile(node.operand, expr)
        if isinstance(node.op, ast.UAdd):
            return inner
        return lambda x: -inner(x)
    if isinstance(node, ast.BinOp):
        if isinstance(node.op, ast.Pow):
            exp_node = node.right
            negate = False
            if isinstance(exp_node, ast.UnaryOp) and isinstance(exp_node.op, ast.USub):
                negate = True
                exp_node = exp_node.operand
            if not (isinstance(exp_node, ast.Constant) and isinstance(exp_node.value, int)):
                raise ValidationError(f"cost expression {expr!r}: exponents must be integer literals")
            exponent = -exp_node.value if negate else exp_node.value
            base = _compile(node.left, expr)
            return lambda x: _int_power(base(x), exponent)
        op = _BINOPS.get(type(node.op))
        if op is None:
            raise ValidationError(f"cost expression {expr!r}: operator {type(node.op).__name__} not allowed")
        left = _compile(node.left, expr)
        right = _compile(node.right, expr)
        return lambda x: op(left(x), right(x))
    raise ValidationError(f"cost expression {expr!r}: construct {type(node).__name__} not allowed")


def parse_expression(expr: str) -> Callable:
    """Compile an expression string into a callable of x (scalar or ndarray)."""
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ValidationError(f"cost expression {expr!r}: {exc.msg}") from exc
    return _compile(tree.body, expr)


@dataclass(frozen=True)
class CostFunction:
    """One resource's cost of use as a function of its load fraction.

    ``resource`` is the 1-based resource id (used in error messages),
    ``lipschitz_hint`` an optional Lipschitz constant supplied by the
    scenario author.
    """

    expr: str
    resource: int = 1
    lipschitz_hint: float | None = None
    _fn: Callable = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_fn", parse_expression(self.expr))

    def __getstate__(self):
        # the compiled closure does not pickle; rebuild it on load
        return {"expr": self.expr, "resource": self.resource, "lipschitz_hint": self.lipschitz_hint}

    def __setstate__(self, state):
        for key, value in state.items():
            object.__setattr__(self, key, value)
        object.__setattr__(self, "_fn", parse_expression(self.expr))

    def __call__(self, x):
        """Evaluate at load fraction x; x may be a float or an ndarray."""
        if isinstance(x, np.ndarray):
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                out = self._fn(x)
            out = np.asarray(out, dtype=float)
            if out.shape != x.shape:  # constant expression
                out = np.broadcast_to(out, x.shape).copy()
            if not np.isfinite(out).all():
                bad = float(np.asarray(x)[~np.isfinite(out)].flat[0])
                raise EvaluationError(
                    f"cost of resource {self.resource} ({self.expr!r}) is not finite at x={bad!r}"
                )
            if (out < 0).any():
                bad = float(np.asarray(x)[out < 0].flat[0])
                raise EvaluationError(
                    f"cost of resource {self.resource} ({self.expr!r}) is negative at x={bad!r}"
                )
            return out
        try:
            out = float(self._fn(float(x)))
        except ZeroDivisionError as exc:
            raise EvaluationError(
                f"cost of resource {self.resource} ({self.expr!r}) is singular at x={float(x)!r}"
            ) from exc
        if not math.isfinite(out):
            raise EvaluationError(
                f"cost of resource {self.resource} ({self.expr!r}) is not finite at x={float(x)!r}"
            )
        if out < 0:
            raise EvaluationError(
                f"cost of resource {self.resource} ({self.expr!r}) is negative at x={float(x)!r}"
            )
        return out


def eval_cost(cost: CostFunction, n: int, total: int) -> float:
    """Cost of a resource carrying n of ``total`` agents (load fraction n/total)."""
    if total < 1:
        raise ValidationError(f"total agent count must be >= 1, got {total}")
    if not 0 <= n <= total:
        raise ValidationError(f"resource count {n} outside [0, {total}]")
    return cost(n / total)
