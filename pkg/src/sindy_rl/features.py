"""Candidate feature libraries over concatenated state-action vectors.

A feature library is an ordered list of named scalar functions of the
``n + k`` inputs (state dimensions first, then action dimensions).  The
library order is fixed and defines the row order of any coefficient matrix
fitted against it.  Features can be built from the provided constructors
(polynomial, Fourier, the cart-pole product family) or parsed from small
expression strings so that config files stay declarative.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "FeatureFunction",
    "FeatureLibrary",
    "polynomial_library",
    "fourier_library",
    "cartpole_library",
    "mountain_car_library",
    "pendulum_library",
    "evaluate_library",
    "parse_custom_features",
    "parse_expression",
    "combine_libraries",
    "library_from_name",
    "FeatureEvaluationError",
    "ExpressionError",
]


class ExpressionError(ValueError):
    """Raised when a feature expression string cannot be parsed."""


class FeatureEvaluationError(ValueError):
    """Raised when a feature evaluates to a non-finite value."""


# ---------------------------------------------------------------------------
# Expression trees
#
# Nodes are tuples: ("num", v), ("var", slot, label), ("neg", e),
# ("sin", e), ("cos", e), and binary ("+"|"-"|"*"|"/"|"^", lhs, rhs).
# ---------------------------------------------------------------------------

_BINARY_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _eval_node(node, inputs: np.ndarray) -> np.ndarray:
    kind = node[0]
    if kind == "num":
        return np.full(inputs.shape[:-1], node[1], dtype=float)
    if kind == "var":
        return inputs[..., node[1]]
    if kind == "neg":
        return -_eval_node(node[1], inputs)
    if kind == "sin":
        return np.sin(_eval_node(node[1], inputs))
    if kind == "cos":
        return np.cos(_eval_node(node[1], inputs))
    lhs = _eval_node(node[1], inputs)
    rhs = _eval_node(node[2], inputs)
    if kind == "+":
        return lhs + rhs
    if kind == "-":
        return lhs - rhs
    if kind == "*":
        return lhs * rhs
    if kind == "/":
        with np.errstate(divide="ignore", invalid="ignore"):
            out = lhs / rhs
        return out
    if kind == "^":
        return lhs**rhs
    raise AssertionError(f"unknown node kind {kind!r}")


def _node_name(node, parent_prec: int = 0) -> str:
    kind = node[0]
    if kind == "num":
        v = node[1]
        text = repr(int(v)) if float(v).is_integer() and abs(v) < 1e15 else repr(v)
        return text if v >= 0 or parent_prec == 0 else f"({text})"
    if kind == "var":
        return node[2]
    if kind == "neg":
        inner = _node_name(node[1], 3)
        text = f"-{inner}"
        return f"({text})" if parent_prec > 1 else text
    if kind in ("sin", "cos"):
        return f"{kind}({_node_name(node[1])})"
    prec = _BINARY_PRECEDENCE[kind]
    # ^ is right-associative; the other operators are left-associative.
    lhs = _node_name(node[1], prec + (1 if kind == "^" else 0))
    rhs = _node_name(node[2], prec + (1 if kind in ("-", "/") else 0))
    text = f"{lhs}{kind}{rhs}"
    return f"({text})" if prec < parent_prec else text


def _node_slots(node, out: set[int]) -> None:
    kind = node[0]
    if kind == "var":
        out.add(node[1])
    elif kind in ("neg", "sin", "cos"):
        _node_slots(node[1], out)
    elif kind != "num":
        _node_slots(node[1], out)
        _node_slots(node[2], out)


class _Tokenizer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.tokens: list[tuple[str, object, int]] = []
        self._scan()
        self.index = 0

    def _scan(self) -> None:
        text = self.text
        i = 0
        while i < len(text):
            c = text[i]
            if c.isspace():
                i += 1
                continue
            if c in "+-*/^()":
                self.tokens.append(("op", c, i))
                i += 1
                continue
            if c.isdigit() or c == ".":
                j = i
                while j < len(text) and (text[j].isdigit() or text[j] in ".eE" or
                                         (text[j] in "+-" and text[j - 1] in "eE")):
                    j += 1
                try:
                    value = float(text[i:j])
                except ValueError:
                    raise ExpressionError(f"invalid number {text[i:j]!r} at position {i}")
                self.tokens.append(("num", value, i))
                i = j
                continue
            if c.isalpha() or c == "_":
                j = i
                while j < len(text) and (text[j].isalnum() or text[j] == "_"):
                    j += 1
                self.tokens.append(("ident", text[i:j], i))
                i = j
                continue
            raise ExpressionError(f"unexpected character {c!r} at position {i}")
        self.tokens.append(("end", None, len(text)))

    def peek(self):
        return self.tokens[self.index]

    def next(self):
        tok = self.tokens[self.index]
        self.index += 1
        return tok


class _Parser:
    """Recursive-descent parser for the config feature grammar.

    Variables are ``x0..x{n-1}`` for state slots and ``a0..a{k-1}`` for
    action slots; actions map to slots ``n..n+k-1`` of the concatenated
    input vector.
    """

    def __init__(self, text: str, state_dim: int, action_dim: int):
        self.toks = _Tokenizer(text)
        self.state_dim = state_dim
        self.action_dim = action_dim

    def parse(self):
        node = self._expr()
        kind, value, pos = self.toks.peek()
        if kind != "end":
            raise ExpressionError(f"unexpected token {value!r} at position {pos}")
        return node

    def _expr(self):
        node = self._term()
        while True:
            kind, value, _ = self.toks.peek()
            if kind == "op" and value in "+-":
                self.toks.next()
                rhs = self._term()
                node = (value, node, rhs)
            else:
                return node

    def _term(self):
        node = self._unary()
        while True:
            kind, value, _ = self.toks.peek()
            if kind == "op" and value in "*/":
                self.toks.next()
                rhs = self._unary()
                node = (value, node, rhs)
            else:
                return node

    def _unary(self):
        kind, value, _ = self.toks.peek()
        if kind == "op" and value == "-":
            self.toks.next()
            return ("neg", self._unary())
        if kind == "op" and value == "+":
            self.toks.next()
            return self._unary()
        return self._power()

    def _power(self):
        base = self._atom()
        kind, value, _ = self.toks.peek()
        if kind == "op" and value == "^":
            self.toks.next()
            # Right-associative.
            exponent = self._unary_power()
            return ("^", base, exponent)
        return base

    def _unary_power(self):
        kind, value, _ = self.toks.peek()
        if kind == "op" and value == "-":
            self.toks.next()
            return ("neg", self._unary_power())
        return self._power()

    def _atom(self):
        kind, value, pos = self.toks.next()
        if kind == "num":
            return ("num", value)
        if kind == "op" and value == "(":
            node = self._expr()
            kind, value, pos = self.toks.next()
            if not (kind == "op" and value == ")"):
                raise ExpressionError(f"expected ')' at position {pos}")
            return node
        if kind == "ident":
            if value in ("sin", "cos"):
                kind2, v2, p2 = self.toks.next()
                if not (kind2 == "op" and v2 == "("):
                    raise ExpressionError(f"expected '(' after {value} at position {p2}")
                inner = self._expr()
                kind2, v2, p2 = self.toks.next()
                if not (kind2 == "op" and v2 == ")"):
                    raise ExpressionError(f"expected ')' at position {p2}")
                return (value, inner)
            return ("var",) + self._resolve_variable(value, pos)
        raise ExpressionError(f"unexpected token {value!r} at position {pos}")

    def _resolve_variable(self, name: str, pos: int) -> tuple[int, str]:
        prefix, digits = name[0], name[1:]
        if prefix in ("x", "a") and digits.isdigit():
            index = int(digits)
            # x-names address raw input slots, so built-in library names
            # (which label every slot x0..x{n+k-1}) always round-trip.
            if prefix == "x" and index < self.state_dim + self.action_dim:
                return index, name
            if prefix == "a" and index < self.action_dim:
                return self.state_dim + index, name
        raise ExpressionError(f"unknown identifier {name!r} at position {pos}")


def parse_expression(text: str, state_dim: int, action_dim: int = 0) -> "FeatureFunction":
    """Parse one expression string into a feature over ``state_dim + action_dim`` slots."""
    node = _Parser(text, state_dim, action_dim).parse()
    slots: set[int] = set()
    _node_slots(node, slots)
    return FeatureFunction(
        name=_node_name(node),
        arity_indices=tuple(sorted(slots)),
        eval_fn=lambda inputs, _node=node: _eval_node(_node, inputs),
    )


# ---------------------------------------------------------------------------
# Library containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FeatureFunction:
    """A named scalar function of the concatenated state-action vector.

    ``eval_fn`` accepts an array of shape ``(..., input_dim)`` and returns
    values of shape ``(...,)``.
    """

    name: str
    arity_indices: tuple[int, ...]
    eval_fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    def __call__(self, inputs: np.ndarray) -> np.ndarray:
        return self.eval_fn(np.asarray(inputs, dtype=float))


@dataclass(frozen=True)
class FeatureLibrary:
    """Ordered, immutable collection of feature functions."""

    functions: tuple[FeatureFunction, ...]
    input_dim: int

    def __post_init__(self):
        if len(self.functions) < 1:
            raise ValueError("library must contain at least one feature")
        names = [f.name for f in self.functions]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ValueError(f"duplicate feature names: {dupes}")
        for f in self.functions:
            if f.arity_indices and max(f.arity_indices) >= self.input_dim:
                raise ValueError(
                    f"feature {f.name!r} reads slot {max(f.arity_indices)} "
                    f"but input_dim is {self.input_dim}")

    @property
    def size(self) -> int:
        return len(self.functions)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.functions]


def combine_libraries(*libraries: FeatureLibrary) -> FeatureLibrary:
    """Concatenate libraries over the same input dimension, preserving order."""
    dims = {lib.input_dim for lib in libraries}
    if len(dims) != 1:
        raise ValueError(f"cannot combine libraries with input dims {sorted(dims)}")
    functions = tuple(f for lib in libraries for f in lib.functions)
    return FeatureLibrary(functions=functions, input_dim=dims.pop())


# ---------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------


def _monomial_feature(exponents: tuple[int, ...]) -> FeatureFunction:
    slots = tuple(i for i, e in enumerate(exponents) if e > 0)
    if not slots:
        return FeatureFunction("1", (), lambda inputs: np.ones(inputs.shape[:-1]))
    parts = []
    for i in slots:
        e = exponents[i]
        parts.append(f"x{i}" if e == 1 else f"x{i}^{e}")
    name = "*".join(parts)

    def eval_fn(inputs: np.ndarray, _slots=slots, _exp=exponents) -> np.ndarray:
        out = np.ones(inputs.shape[:-1])
        for i in _slots:
            out = out * inputs[..., i] ** _exp[i]
        return out

    return FeatureFunction(name, slots, eval_fn)


def polynomial_library(
    input_dim: int,
    degree: int,
    include_bias: bool = True,
    include_interaction: bool = True,
) -> FeatureLibrary:
    """All monomials of total degree <= ``degree`` in graded lexicographic order.

    With ``include_interaction=False`` only per-input powers ``x_i^d`` are
    generated (no cross terms).
    """
    if input_dim < 1:
        raise ValueError("input_dim must be positive")
    if degree < 1:
        raise ValueError("degree must be positive")
    functions: list[FeatureFunction] = []
    if include_bias:
        functions.append(_monomial_feature((0,) * input_dim))
    for total in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(input_dim), total):
            exponents = [0] * input_dim
            for i in combo:
                exponents[i] += 1
            if not include_interaction and len(set(combo)) > 1:
                continue
            functions.append(_monomial_feature(tuple(exponents)))
    return FeatureLibrary(tuple(functions), input_dim)


def fourier_library(
    input_dim: int,
    target_indices: Sequence[int],
    k_max: int,
) -> FeatureLibrary:
    """sin(k*x_i) and cos(k*x_i) for each targeted input slot and k = 1..k_max."""
    indices = list(target_indices)
    if not indices:
        raise ValueError("target_indices must not be empty")
    if k_max < 1:
        raise ValueError("k_max must be positive")
    for i in indices:
        if not 0 <= i < input_dim:
            raise ValueError(f"target index {i} out of range for input_dim {input_dim}")
    functions: list[FeatureFunction] = []
    for i in indices:
        for k in range(1, k_max + 1):
            arg = f"x{i}" if k == 1 else f"{k}*x{i}"
            for trig, fn in (("sin", np.sin), ("cos", np.cos)):
                functions.append(FeatureFunction(
                    f"{trig}({arg})",
                    (i,),
                    lambda inputs, _i=i, _k=k, _fn=fn: _fn(_k * inputs[..., _i]),
                ))
    return FeatureLibrary(tuple(functions), input_dim)


def cartpole_library(state_dim: int = 4, action_dim: int = 1) -> FeatureLibrary:
    """Product family over the pole-cart state variables and the force input.

    Over the five slots (four state variables plus the force) this generates
    the constant, every singleton ``v``, every square ``v^2``, every distinct
    unordered product ``v*w``, and every ``v^2*w`` with ``v != w`` -- 41
    features, so a four-dimensional state yields 164 coefficients.
    """
    if state_dim != 4 or action_dim != 1:
        raise ValueError("cartpole library is defined for state_dim=4, action_dim=1")
    input_dim = state_dim + action_dim
    labels = [f"x{i}" for i in range(state_dim)] + [f"a{j}" for j in range(action_dim)]

    def power_feature(exponents: tuple[int, ...]) -> FeatureFunction:
        slots = tuple(i for i, e in enumerate(exponents) if e > 0)
        parts = [labels[i] if exponents[i] == 1 else f"{labels[i]}^{exponents[i]}"
                 for i in slots]
        name = "*".join(parts) if parts else "1"

        def eval_fn(inputs: np.ndarray, _slots=slots, _exp=exponents) -> np.ndarray:
            out = np.ones(inputs.shape[:-1])
            for i in _slots:
                out = out * inputs[..., i] ** _exp[i]
            return out

        return FeatureFunction(name, slots, eval_fn)

    def exps(**powers: int) -> tuple[int, ...]:
        out = [0] * input_dim
        for slot, p in powers.items():
            out[int(slot[1:])] = p
        return tuple(out)

    functions = [power_feature(exps())]
    for i in range(input_dim):
        functions.append(power_feature(exps(**{f"s{i}": 1})))
    for i in range(input_dim):
        functions.append(power_feature(exps(**{f"s{i}": 2})))
    for i, j in itertools.combinations(range(input_dim), 2):
        functions.append(power_feature(exps(**{f"s{i}": 1, f"s{j}": 1})))
    for i in range(input_dim):
        for j in range(input_dim):
            if i != j:
                functions.append(power_feature(exps(**{f"s{i}": 2, f"s{j}": 1})))
    return FeatureLibrary(tuple(functions), input_dim)


def mountain_car_library() -> FeatureLibrary:
    """Monomials to degree 3 over (position, velocity, force) plus sin/cos of k*position.

    The force slot is capped at degree 2 (forces enter the dynamics at low
    order), giving 19 monomials plus the constant's 6 trigonometric
    companions for 25 features total.
    """
    poly = polynomial_library(3, degree=3, include_bias=True, include_interaction=True)
    kept = tuple(f for f in poly.functions if f.name != "x2^3")
    fourier = fourier_library(3, target_indices=(0,), k_max=3)
    return combine_libraries(FeatureLibrary(kept, 3), fourier)


def pendulum_library() -> FeatureLibrary:
    """Polynomials over (angle, angular velocity, torque) plus sin/cos of the angle.

    Intended for the pendulum's model coordinates (theta, theta_dot) with the
    torque in the action slot: degree-2 monomials over the three inputs and
    the two trigonometric companions of the angle, 12 features total.
    """
    poly = polynomial_library(3, degree=2, include_bias=True, include_interaction=True)
    fourier = fourier_library(3, target_indices=(0,), k_max=1)
    return combine_libraries(poly, fourier)


_BUILTIN_LIBRARIES: dict[str, Callable[[], FeatureLibrary]] = {
    "cartpole": cartpole_library,
    "inverted_pendulum": cartpole_library,
    "mountain_car": mountain_car_library,
    "pendulum": pendulum_library,
}


def library_from_name(name: str) -> FeatureLibrary:
    """Look up a built-in library by environment name."""
    try:
        return _BUILTIN_LIBRARIES[name]()
    except KeyError:
        raise ValueError(
            f"unknown library {name!r}; choices: {sorted(_BUILTIN_LIBRARIES)}") from None


def parse_custom_features(
    expressions: Sequence[str],
    state_dim: int,
    action_dim: int = 0,
) -> FeatureLibrary:
    """Build a library from expression strings over x0..x{n-1}, a0..a{k-1}."""
    if not expressions:
        raise ValueError("expression list must not be empty")
    functions = tuple(parse_expression(text, state_dim, action_dim)
                      for text in expressions)
    return FeatureLibrary(functions, state_dim + action_dim)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def evaluate_library(
    library: FeatureLibrary,
    states: np.ndarray,
    actions: np.ndarray | None = None,
) -> np.ndarray:
    """Evaluate every feature on every row, returning an N x F design matrix."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if actions is None or np.size(actions) == 0:
        inputs = states
    else:
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        if actions.shape[0] != states.shape[0]:
            raise ValueError(
                f"row count mismatch: {states.shape[0]} states vs {actions.shape[0]} actions")
        inputs = np.hstack([states, actions])
    if inputs.shape[1] != library.input_dim:
        raise ValueError(
            f"expected {library.input_dim} input columns, got {inputs.shape[1]}")
    out = np.empty((inputs.shape[0], library.size))
    for col, feature in enumerate(library.functions):
        values = feature(inputs)
        bad = ~np.isfinite(values)
        if np.any(bad):
            row = int(np.argmax(bad))
            raise FeatureEvaluationError(
                f"feature {feature.name!r} is non-finite at row {row}")
        out[:, col] = values
    return out
