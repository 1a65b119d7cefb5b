"""Polynomial output functions and the small expression language that builds them.

Grammar::

    expr   := ['+'|'-'] term (('+'|'-') term)*
    term   := coef ('*' factor)* | factor ('*' factor)*
    factor := IDENT ('^' UINT)?
    coef   := decimal

IDENT is a declared species name or a positional alias ``x1..xd``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import ParseError, UnknownSpecies

MAX_DEGREE = 8

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_]\w*)|(?P<op>[-+*^]))"
)


@dataclass(frozen=True)
class OutputFunction:
    """``sum_j coef_j * prod_i x_i**exponents_j[i]``."""

    terms: tuple[tuple[float, tuple[int, ...]], ...]
    text: str = ""

    def __post_init__(self):
        for coef, exps in self.terms:
            if any(e < 0 for e in exps):
                raise ValueError("exponents must be nonnegative")
            if sum(exps) > MAX_DEGREE:
                raise ValueError(f"polynomial degree exceeds {MAX_DEGREE}")

    @property
    def degree(self) -> int:
        return max((sum(e) for _, e in self.terms), default=0)

    def __call__(self, x) -> float:
        total = 0.0
        for coef, exps in self.terms:
            v = coef
            for xi, e in zip(x, exps):
                if e:
                    v *= float(xi) ** e
            total += v
        return total

    def evaluate_many(self, states) -> np.ndarray:
        states = np.asarray(states, dtype=float)
        out = np.zeros(states.shape[0])
        for coef, exps in self.terms:
            out += coef * np.prod(states ** np.asarray(exps, dtype=float), axis=1)
        return out

    def value_and_derivative(self, x, theta):
        return self(x), 0.0

    def is_constant(self) -> bool:
        return all(not any(e) for _, e in self.terms)

    def __str__(self):
        return self.text or repr(self.terms)


def constant(value: float, d: int) -> OutputFunction:
    return OutputFunction(((float(value), (0,) * d),), text=repr(value))


def coordinate(i: int, d: int) -> OutputFunction:
    exps = [0] * d
    exps[i] = 1
    return OutputFunction(((1.0, tuple(exps)),), text=f"x{i + 1}")


def _tokens(text):
    pos = 0
    out = []
    while pos < len(text):
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos == len(text):
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        out.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


def parse_output_expr(text: str, species) -> OutputFunction:
    """Parse ``text`` into an :class:`OutputFunction` over ``species`` (a list of names)."""
    names = list(species)
    d = len(names)
    index = {n: i for i, n in enumerate(names)}
    for i in range(d):
        index.setdefault(f"x{i + 1}", i)
    if not text or not text.strip():
        raise ParseError("empty expression", 0)
    toks = _tokens(text)
    pos = 0

    def peek():
        return toks[pos]

    def take():
        nonlocal pos
        tok = toks[pos]
        pos += 1
        return tok

    def factor(exps):
        kind, val, at = take()
        if kind != "ident":
            raise ParseError(f"expected species name, got {val or 'end of input'!r}", at)
        if val not in index:
            if re.fullmatch(r"x\d+", val):
                raise UnknownSpecies(f"{val} is out of range for a {d}-species model")
            raise UnknownSpecies(f"unknown species {val!r}")
        power = 1
        if peek()[1] == "^":
            take()
            kind, val2, at2 = take()
            if kind != "num" or not val2.isdigit():
                raise ParseError("exponent must be an unsigned integer", at2)
            power = int(val2)
        exps[index[val]] += power

    def term(sign):
        exps = [0] * d
        coef = 1.0
        kind, val, at = peek()
        if kind == "num":
            take()
            coef = float(val)
        elif kind == "ident":
            factor(exps)
        else:
            raise ParseError(f"expected a term, got {val or 'end of input'!r}", at)
        while peek()[1] == "*":
            take()
            factor(exps)
        if sum(exps) > MAX_DEGREE:
            raise ParseError(f"term degree exceeds {MAX_DEGREE}", at)
        return sign * coef, tuple(exps)

    sign = 1.0
    if peek()[1] in "+-" and peek()[0] == "op":
        sign = -1.0 if take()[1] == "-" else 1.0
    terms = [term(sign)]
    while peek()[0] == "op" and peek()[1] in "+-":
        sign = -1.0 if take()[1] == "-" else 1.0
        terms.append(term(sign))
    kind, val, at = peek()
    if kind != "end":
        raise ParseError(f"unexpected {val!r}", at)
    return OutputFunction(tuple(terms), text=text.strip())
