"""A small expression vocabulary for analytic data fields.

Expressions are Python-syntax strings in the coordinates ``x``, ``y``, ``z``
using numbers, ``+ - * / **``, ``pi`` and the functions ``sin``, ``cos``,
``exp`` and ``sqrt``. Interface densities may also use the normal components
``nx``, ``ny``, ``nz``. Anything else is rejected before sympy sees it.
"""

from __future__ import annotations

import ast
from typing import Callable, Sequence

import numpy as np
import sympy

COORDS = ("x", "y", "z")
NORMALS = ("nx", "ny", "nz")
FUNCTIONS = {"sin": sympy.sin, "cos": sympy.cos, "exp": sympy.exp, "sqrt": sympy.sqrt}
CONSTANTS = {"pi": sympy.pi}
_ALLOWED = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
            ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd)


class ExpressionError(ValueError):
    pass


def symbols(dim: int, normals: bool = False) -> tuple[sympy.Symbol, ...]:
    names = COORDS[:dim] + (NORMALS[:dim] if normals else ())
    return sympy.symbols(names, real=True)


def parse(text: str | float | int, dim: int, normals: bool = False) -> sympy.Expr:
    """Validate and convert one expression string."""
    if isinstance(text, (int, float)):
        return sympy.Float(text) if isinstance(text, float) else sympy.Integer(text)
    try:
        tree = ast.parse(str(text), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from exc
    syms = symbols(dim, normals)
    names = {str(v): v for v in syms}
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED):
            raise ExpressionError(f"{text!r}: {type(node).__name__} is not allowed")
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS or node.keywords \
                    or len(node.args) != 1:
                raise ExpressionError(f"{text!r}: only sin, cos, exp, sqrt of one argument are allowed")
        elif isinstance(node, ast.Name):
            if node.id not in names and node.id not in CONSTANTS and node.id not in FUNCTIONS:
                raise ExpressionError(f"{text!r}: unknown name {node.id!r}")
        elif isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ExpressionError(f"{text!r}: only numeric constants are allowed")
    return _convert(tree.body, names)


def _convert(node, names) -> sympy.Expr:
    if isinstance(node, ast.Constant):
        return sympy.nsimplify(node.value) if isinstance(node.value, float) else sympy.Integer(node.value)
    if isinstance(node, ast.Name):
        if node.id in names:
            return names[node.id]
        return CONSTANTS[node.id]
    if isinstance(node, ast.UnaryOp):
        val = _convert(node.operand, names)
        return -val if isinstance(node.op, ast.USub) else val
    if isinstance(node, ast.Call):
        return FUNCTIONS[node.func.id](_convert(node.args[0], names))
    left, right = _convert(node.left, names), _convert(node.right, names)
    op = type(node.op)
    if op is ast.Add:
        return left + right
    if op is ast.Sub:
        return left - right
    if op is ast.Mult:
        return left * right
    if op is ast.Div:
        return left / right
    return left ** right


def vector(texts: Sequence, dim: int, normals: bool = False) -> list[sympy.Expr]:
    if len(texts) != dim:
        raise ExpressionError(f"expected {dim} components, got {len(texts)}")
    return [parse(t, dim, normals) for t in texts]


def lambdify(expr, dim: int, normals: bool = False) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized evaluator ``points (m, k) -> (m,)`` (or ``(m, ...)`` for arrays).

    ``k`` is ``dim``, or ``2 * dim`` with the normal appended when ``normals``.
    """
    syms = symbols(dim, normals)
    arr = sympy.Array(expr) if isinstance(expr, (list, tuple, sympy.Matrix)) else None
    if arr is None:
        f = sympy.lambdify(syms, expr, "numpy")

        def scalar(points):
            pts = np.asarray(points, dtype=float)
            val = f(*pts.T)
            return np.broadcast_to(np.asarray(val, dtype=float), pts.shape[:1]).copy()
        return scalar
    shape = arr.shape
    flat = [lambdify(e, dim, normals) for e in arr.reshape(len(arr)).tolist()]

    def tensor(points):
        pts = np.asarray(points, dtype=float)
        vals = np.stack([f(pts) for f in flat], axis=-1)
        return vals.reshape(pts.shape[:1] + tuple(shape))
    return tensor


def vector_field(texts: Sequence, dim: int) -> Callable:
    """``func(points, regions) -> (m, dim)`` from component expressions in the coordinates."""
    f = lambdify(vector(texts, dim), dim)
    return lambda points, regions=None: f(points)


def density_field(texts: Sequence, dim: int) -> Callable:
    """``func(points, normals) -> (m, dim)`` from expressions in coordinates and normals."""
    f = lambdify(vector(texts, dim, normals=True), dim, normals=True)
    return lambda points, normals: f(np.concatenate([points, normals], axis=1))
