"""A tiny arithmetic language for drift and noise fields.

Expressions use the variables ``x`` and ``t``, numeric literals, the binary
operators ``+ - * / ^`` (``^`` is exponentiation), unary minus, parentheses
and the functions ``exp``, ``ln`` and ``abs``.  Anything else is rejected.
Parsing goes through :mod:`ast`; nothing is ever passed to ``eval``.
"""
from __future__ import annotations

import ast
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

__all__ = ["ExpressionError", "Expression", "parse_expression"]


class ExpressionError(ValueError):
    """The expression text is not in the supported language."""


_FUNCS = {"exp": np.exp, "ln": np.log, "abs": np.abs}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply,
           ast.Div: np.divide, ast.Pow: np.power}


@dataclass(frozen=True)
class Expression:
    """A parsed field ``(x, t) -> array``.

    ``constant`` holds the value of an expression free of ``x`` and ``t``.
    """

    source: str
    uses_x: bool
    uses_t: bool
    constant: Optional[float]
    _fn: Callable

    def __call__(self, x, t=0.0):
        x = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            out = self._fn(x, t)
        return np.broadcast_to(np.asarray(out, dtype=float), x.shape)


def _compile(node, names):
    if isinstance(node, ast.Expression):
        return _compile(node.body, names)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        v = float(node.value)
        return lambda x, t: v
    if isinstance(node, ast.Name):
        if node.id == "x":
            names.add("x")
            return lambda x, t: x
        if node.id == "t":
            names.add("t")
            return lambda x, t: t
        raise ExpressionError(f"unknown name {node.id!r} (allowed: x, t)")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _compile(node.operand, names)
        if isinstance(node.op, ast.USub):
            return lambda x, t: np.negative(inner(x, t))
        return inner
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op = _BINOPS[type(node.op)]
        a, b = _compile(node.left, names), _compile(node.right, names)
        return lambda x, t: op(a(x, t), b(x, t))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError(f"{node.func.id}() takes exactly one argument")
        fn = _FUNCS[node.func.id]
        arg = _compile(node.args[0], names)
        return lambda x, t: fn(arg(x, t))
    what = type(node).__name__
    if isinstance(node, ast.Call):
        what = f"function {ast.unparse(node.func)!r}"
    elif isinstance(node, ast.BinOp):
        what = f"operator {type(node.op).__name__}"
    raise ExpressionError(f"unsupported syntax: {what}")


def parse_expression(source) -> Expression:
    """Parse ``source`` (a string or a number) into an :class:`Expression`."""
    if isinstance(source, (int, float)) and not isinstance(source, bool):
        source = repr(float(source))
    if not isinstance(source, str) or not source.strip():
        raise ExpressionError("expression must be a non-empty string")
    if "**" in source:
        raise ExpressionError("use '^' for powers")
    try:
        tree = ast.parse(source.replace("^", "**").strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {source!r}: {exc.msg}") from None
    names: set = set()
    fn = _compile(tree, names)
    constant = None
    if not names:
        with np.errstate(all="ignore"):
            constant = float(fn(np.zeros(()), 0.0))
        if not np.isfinite(constant):
            raise ExpressionError(f"{source!r} is not a finite constant")
    return Expression(source, "x" in names, "t" in names, constant, fn)
