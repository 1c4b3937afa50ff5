"""Vectorized evaluation of implicit-domain membership expressions.

Grammar (a whitelisted subset of Python expression syntax)::

    expr     := or_expr
    or_expr  := and_expr ('or' and_expr)*
    and_expr := not_expr ('and' not_expr)*
    not_expr := 'not' not_expr | compare
    compare  := arith (('<' | '<=' | '>' | '>=') arith)*
    arith    := numbers, variables, + - * /, ^ or ** (power), unary minus,
                calls to min, max, abs, sqrt

Variables are ``x``, ``y``, ``z`` or equivalently ``x1``, ``x2``, ``x3``.
Chained comparisons (``0 < x <= 1``) behave as in Python.  The expression
must produce a boolean; a bare arithmetic expression is rejected.
"""

from __future__ import annotations

import ast
import io
import tokenize
from typing import Callable

import numpy as np

_VARIABLES = {"x": 0, "y": 1, "z": 2, "x1": 0, "x2": 1, "x3": 2}

_FUNCS: dict[str, Callable[..., np.ndarray]] = {
    "abs": np.abs,
    "sqrt": np.sqrt,
    "min": lambda *a: _reduce(np.minimum, a),
    "max": lambda *a: _reduce(np.maximum, a),
}

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}

_CMPOPS = {
    ast.Lt: np.less,
    ast.LtE: np.less_equal,
    ast.Gt: np.greater,
    ast.GtE: np.greater_equal,
}


class ExpressionError(ValueError):
    pass


def _reduce(fn, args):
    if len(args) < 2:
        raise ExpressionError("min/max need at least two arguments")
    out = args[0]
    for a in args[1:]:
        out = fn(out, a)
    return out


def _caret_to_power(source: str) -> str:
    """Rewrite ``^`` tokens as ``**`` so they get power precedence, not xor's."""
    try:
        toks = list(tokenize.generate_tokens(io.StringIO(source).readline))
    except (tokenize.TokenError, IndentationError) as exc:
        raise ExpressionError(f"cannot tokenize {source!r}: {exc}") from None
    out = [(t.type, "**") if t.type == tokenize.OP and t.string == "^" else (t.type, t.string)
           for t in toks]
    return tokenize.untokenize(out)


def compile_predicate(source: str, dim: int) -> Callable[[np.ndarray], np.ndarray]:
    """Compile ``source`` into ``pts (..., dim) -> bool array``."""
    try:
        tree = ast.parse(_caret_to_power(source).strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {source!r}: {exc.msg}") from None
    body = tree.body
    if not _is_boolean(body):
        raise ExpressionError(f"{source!r} is not a comparison or boolean combination")
    _check(body, dim)

    def predicate(pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            out = _eval(body, pts)
        return np.broadcast_to(np.asarray(out, dtype=bool), pts.shape[:-1]).copy()

    return predicate


def _is_boolean(node: ast.AST) -> bool:
    if isinstance(node, ast.Compare):
        return True
    if isinstance(node, ast.BoolOp):
        return all(_is_boolean(v) for v in node.values)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.Not):
        return _is_boolean(node.operand)
    return False


def _check(node: ast.AST, dim: int) -> None:
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ExpressionError(f"unsupported literal {node.value!r}")
    elif isinstance(node, ast.Name):
        idx = _VARIABLES.get(node.id)
        if idx is None:
            raise ExpressionError(f"unknown variable {node.id!r}")
        if idx >= dim:
            raise ExpressionError(f"variable {node.id!r} needs dimension > {idx}")
    elif isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise ExpressionError(f"unsupported operator {type(node.op).__name__}")
        _check(node.left, dim)
        _check(node.right, dim)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, (ast.USub, ast.UAdd, ast.Not)):
            raise ExpressionError(f"unsupported unary operator {type(node.op).__name__}")
        _check(node.operand, dim)
    elif isinstance(node, ast.Compare):
        for op in node.ops:
            if type(op) not in _CMPOPS:
                raise ExpressionError(f"unsupported comparison {type(op).__name__}")
        _check(node.left, dim)
        for c in node.comparators:
            _check(c, dim)
    elif isinstance(node, ast.BoolOp):
        for v in node.values:
            _check(v, dim)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
            raise ExpressionError("only min, max, abs, sqrt may be called")
        if node.keywords:
            raise ExpressionError("keyword arguments are not allowed")
        for a in node.args:
            _check(a, dim)
    else:
        raise ExpressionError(f"unsupported syntax {type(node).__name__}")


def _eval(node: ast.AST, pts: np.ndarray):
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        return pts[..., _VARIABLES[node.id]]
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, pts), _eval(node.right, pts))
    if isinstance(node, ast.UnaryOp):
        val = _eval(node.operand, pts)
        if isinstance(node.op, ast.USub):
            return np.negative(val)
        if isinstance(node.op, ast.Not):
            return np.logical_not(val)
        return val
    if isinstance(node, ast.Compare):
        left = _eval(node.left, pts)
        out = True
        for op, comp in zip(node.ops, node.comparators):
            right = _eval(comp, pts)
            out = np.logical_and(out, _CMPOPS[type(op)](left, right))
            left = right
        return out
    if isinstance(node, ast.BoolOp):
        vals = [_eval(v, pts) for v in node.values]
        fn = np.logical_and if isinstance(node.op, ast.And) else np.logical_or
        return _reduce(fn, vals) if len(vals) > 1 else vals[0]
    if isinstance(node, ast.Call):
        return _FUNCS[node.func.id](*[_eval(a, pts) for a in node.args])
    raise ExpressionError(f"unsupported syntax {type(node).__name__}")  # pragma: no cover
