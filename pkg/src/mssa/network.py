"""Multiscale mass-action reaction networks.

A network is a set of species, reactions with integer stoichiometry, and for
each reaction a scaling exponent ``beta``.  At reference time-scale ``gamma``
and scale ``N`` reaction ``k`` fires with intensity
``N**(beta[k] + gamma) * lam_k(x, theta)`` where ``lam_k`` is a mass-action
propensity with rate constant ``base * theta**p``.

Reaction indices are 0-based throughout the Python API.  Human-facing reports
label reactions ``R1..RK``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np
import yaml

from .errors import SchemaError, SpeciesError

MAX_OUTPUT_DEGREE = 8

_TOP_KEYS = ("species", "initial_state", "N0", "theta", "reactions")
_REACTION_KEYS = ("reactants", "products", "rate_base", "rate_theta_exponent", "beta")


@dataclass(frozen=True)
class Species:
    name: str
    index: int


@dataclass(frozen=True)
class RateConstant:
    base: float
    theta_exponent: int = 0

    def __post_init__(self):
        if not (self.base > 0 and math.isfinite(self.base)):
            raise ValueError(f"rate base must be positive and finite, got {self.base}")
        if self.theta_exponent < 0:
            raise ValueError("theta exponent must be nonnegative")

    def value(self, theta):
        return self.base * theta**self.theta_exponent

    def derivative(self, theta):
        p = self.theta_exponent
        if p == 0:
            return 0.0
        return p * self.base * theta ** (p - 1)


@dataclass(frozen=True)
class Reaction:
    reactants: tuple[int, ...]
    products: tuple[int, ...]
    beta: Fraction
    rate: RateConstant

    @property
    def zeta(self) -> np.ndarray:
        return np.asarray(self.products, dtype=np.int64) - np.asarray(self.reactants, dtype=np.int64)

    @property
    def order(self) -> int:
        return int(sum(self.reactants))


def _falling(n, r):
    out = 1
    for j in range(r):
        out *= n - j
    return out


@dataclass(frozen=True)
class ReactionNetwork:
    species: tuple[Species, ...]
    reactions: tuple[Reaction, ...]
    x0: tuple[int, ...]
    N0: int = 1
    theta_nominal: float = 1.0

    def __post_init__(self):
        d = len(self.species)
        if len(self.x0) != d:
            raise SchemaError(f"initial_state has length {len(self.x0)}, expected {d}")
        if any(v < 0 for v in self.x0):
            raise ValueError("initial_state must be nonnegative")
        for r in self.reactions:
            if len(r.reactants) != d or len(r.products) != d:
                raise SpeciesError("reaction refers to species outside the network")
            if min(r.reactants + r.products, default=0) < 0:
                raise ValueError("multiplicities must be nonnegative")
        if self.N0 < 1:
            raise ValueError("N0 must be a positive integer")
        if not self.theta_nominal > 0:
            raise ValueError("theta must be positive")

    # -- array views ----------------------------------------------------
    @property
    def d(self) -> int:
        return len(self.species)

    @property
    def n_reactions(self) -> int:
        return len(self.reactions)

    @cached_property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.species)

    @cached_property
    def reactant_matrix(self) -> np.ndarray:
        return np.array([r.reactants for r in self.reactions], dtype=np.int64).reshape(-1, self.d)

    @cached_property
    def jumps(self) -> np.ndarray:
        """Stoichiometric vectors, one row per reaction."""
        return np.array([r.zeta for r in self.reactions], dtype=np.int64).reshape(-1, self.d)

    @property
    def betas(self) -> tuple[Fraction, ...]:
        return tuple(r.beta for r in self.reactions)

    @property
    def initial(self) -> tuple[int, ...]:
        return self.x0

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(f"R{k + 1}" for k in range(self.n_reactions))

    def rate_constants(self, theta, gamma=0, N=1) -> np.ndarray:
        """Per-reaction constants ``c_k(theta) * N**(beta_k + gamma)``."""
        return np.array(
            [r.rate.value(theta) * _scale(N, r.beta + Fraction(gamma)) for r in self.reactions],
            dtype=float,
        )

    def rate(self, k, x, theta):
        return propensity(self, k, x, theta)

    def is_state(self, x) -> bool:
        return len(x) == self.d and all(v >= 0 for v in x)


def _scale(N, exponent: Fraction) -> float:
    if exponent == 0:
        return 1.0
    return float(N) ** float(exponent)


def scale_factor(N, exponent) -> float:
    return _scale(N, Fraction(exponent))


# ----------------------------------------------------------------------
# propensities and time-scales


def propensity(network: ReactionNetwork, k: int, x, theta: float):
    """Mass-action propensity of reaction ``k`` and its exact theta-derivative.

    Uses the combinatorial convention ``c * prod x_i!/(x_i - r_i)!``.
    """
    if not 0 <= k < network.n_reactions:
        raise IndexError(f"reaction index {k} out of range")
    rxn = network.reactions[k]
    comb = 1
    for xi, ri in zip(x, rxn.reactants):
        if ri:
            if xi < ri:
                return 0.0, 0.0
            comb *= _falling(int(xi), ri)
    return rxn.rate.value(theta) * comb, rxn.rate.derivative(theta) * comb


@dataclass(frozen=True)
class TimescaleClassification:
    gamma: Fraction
    natural: frozenset
    fast: frozenset
    slow: frozenset


def classify(network, gamma) -> TimescaleClassification:
    gamma = Fraction(gamma)
    nat, fast, slow = set(), set(), set()
    for k, b in enumerate(network.betas):
        s = b + gamma
        (nat if s == 0 else fast if s > 0 else slow).add(k)
    return TimescaleClassification(gamma, frozenset(nat), frozenset(fast), frozenset(slow))


def first_timescale(network) -> tuple[Fraction, frozenset]:
    """Smallest gamma with a nontrivial limit: ``-max beta`` and its natural set."""
    betas = network.betas
    if not betas:
        raise SchemaError("network has no reactions")
    top = max(betas)
    return -top, frozenset(k for k, b in enumerate(betas) if b == top)


# ----------------------------------------------------------------------
# assumption checks


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)  # (name, passed, detail)
    warnings: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(p for _, p, _ in self.checks)

    def lines(self):
        for name, passed, detail in self.checks:
            yield f"{'PASS' if passed else 'WARN'} {name}: {detail}"
        for w in self.warnings:
            yield f"warning: {w}"
        for n in self.notes:
            yield f"note: {n}"


def validate_assumptions(network: ReactionNetwork) -> ValidationReport:
    """Mechanical checks of the well-posedness assumptions for mass action.

    (A) holds automatically: a mass-action reaction has zero propensity unless
    its reactants are present, so no firing leaves the nonnegative orthant.
    (B) requires the total propensity of reactions with net positive molecule
    change to grow at most linearly; order <= 1 is sufficient.
    """
    rep = ValidationReport()
    rep.checks.append(
        ("A-state-space", True, "mass-action propensities vanish when reactants are absent")
    )
    offenders = []
    for k, r in enumerate(network.reactions):
        if int(r.zeta.sum()) > 0 and r.order > 1:
            offenders.append(k)
            rep.warnings.append(
                f"R{k + 1} has net positive change {int(r.zeta.sum())} with reactant order "
                f"{r.order} > 1; linear growth of the birth propensity is not guaranteed"
            )
    rep.checks.append(
        (
            "B-linear-growth",
            not offenders,
            "birth reactions have order <= 1"
            if not offenders
            else "order > 1 birth reactions: " + ", ".join(f"R{k + 1}" for k in offenders),
        )
    )
    rep.notes.append("theta-smoothness holds for rates base*theta^p")
    return rep


# ----------------------------------------------------------------------
# model documents


def _parse_beta(value, where):
    if isinstance(value, bool):
        raise SchemaError(f"{where}: beta must be an integer or rational")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value)
        except ValueError:
            pass
    raise SchemaError(f"{where}: beta must be an integer or 'p/q' string, got {value!r}")


def _check_keys(obj, expected, where):
    if not isinstance(obj, Mapping):
        raise SchemaError(f"{where} must be a mapping")
    missing = [k for k in expected if k not in obj]
    extra = [k for k in obj if k not in expected]
    if missing:
        raise SchemaError(f"{where}: missing field(s) {', '.join(missing)}")
    if extra:
        raise SchemaError(f"{where}: unexpected field(s) {', '.join(map(str, extra))}")


def _stoich(mapping, index, where):
    if mapping is None:
        mapping = {}
    if not isinstance(mapping, Mapping):
        raise SchemaError(f"{where} must map species names to counts")
    out = [0] * len(index)
    for name, count in mapping.items():
        if name not in index:
            raise SpeciesError(f"{where}: unknown species {name!r}")
        if isinstance(count, bool) or not isinstance(count, int):
            raise SchemaError(f"{where}: multiplicity of {name} must be an integer")
        if count < 0:
            raise ValueError(f"{where}: negative multiplicity for {name}")
        out[index[name]] += count
    return tuple(out)


def network_from_dict(doc) -> ReactionNetwork:
    _check_keys(doc, _TOP_KEYS, "model")
    names = doc["species"]
    if not isinstance(names, list) or not names:
        raise SchemaError("model: species must be a nonempty list")
    if not isinstance(doc["reactions"], list) or not doc["reactions"]:
        raise SchemaError("model: reactions must be a nonempty list")
    for n in names:
        if not isinstance(n, str) or not n.isidentifier():
            raise SchemaError(f"model: species name {n!r} is not an identifier")
    if len(set(names)) != len(names):
        raise SchemaError("model: duplicate species names")
    index = {n: i for i, n in enumerate(names)}
    x0 = doc["initial_state"]
    if not isinstance(x0, list) or any(isinstance(v, bool) or not isinstance(v, int) for v in x0):
        raise SchemaError("model: initial_state must be a list of integers")
    N0 = doc["N0"]
    if isinstance(N0, bool) or not isinstance(N0, int):
        raise SchemaError("model: N0 must be an integer")
    theta = doc["theta"]
    if isinstance(theta, bool) or not isinstance(theta, (int, float)):
        raise SchemaError("model: theta must be a number")

    reactions = []
    for i, rd in enumerate(doc["reactions"]):
        where = f"reactions[{i}]"
        _check_keys(rd, _REACTION_KEYS, where)
        base = rd["rate_base"]
        if isinstance(base, bool) or not isinstance(base, (int, float)):
            raise SchemaError(f"{where}: rate_base must be a number")
        p = rd["rate_theta_exponent"]
        if isinstance(p, bool) or not isinstance(p, int):
            raise SchemaError(f"{where}: rate_theta_exponent must be an integer")
        reactions.append(
            Reaction(
                reactants=_stoich(rd["reactants"], index, f"{where}.reactants"),
                products=_stoich(rd["products"], index, f"{where}.products"),
                beta=_parse_beta(rd["beta"], where),
                rate=RateConstant(float(base), p),
            )
        )
    return ReactionNetwork(
        species=tuple(Species(n, i) for i, n in enumerate(names)),
        reactions=tuple(reactions),
        x0=tuple(x0),
        N0=N0,
        theta_nominal=float(theta),
    )


def parse_model(document: str) -> ReactionNetwork:
    """Parse a YAML (or JSON) model document into a validated network."""
    try:
        doc = yaml.safe_load(document)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            raise SchemaError(f"malformed document: {exc.problem}", mark.line + 1, mark.column + 1)
        raise SchemaError(f"malformed document: {exc}")
    if doc is None:
        raise SchemaError("empty document")
    return network_from_dict(doc)


def load_model(path) -> ReactionNetwork:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read())


def network_to_dict(network: ReactionNetwork) -> dict:
    names = network.names

    def side(counts):
        return {names[i]: c for i, c in enumerate(counts) if c}

    reactions = []
    for r in network.reactions:
        beta = int(r.beta) if r.beta.denominator == 1 else str(r.beta)
        reactions.append(
            {
                "reactants": side(r.reactants),
                "products": side(r.products),
                "rate_base": r.rate.base,
                "rate_theta_exponent": r.rate.theta_exponent,
                "beta": beta,
            }
        )
    return {
        "species": list(names),
        "initial_state": list(network.x0),
        "N0": network.N0,
        "theta": network.theta_nominal,
        "reactions": reactions,
    }


def serialize_model(network: ReactionNetwork) -> str:
    return yaml.safe_dump(network_to_dict(network), sort_keys=False, default_flow_style=None)


def build_network(species: Sequence[str], reactions, x0, N0=1, theta=1.0) -> ReactionNetwork:
    """Convenience constructor.

    ``reactions`` is a sequence of ``(reactants, products, base, p, beta)`` with
    reactants/products as name->count mappings.
    """
    doc = {
        "species": list(species),
        "initial_state": list(x0),
        "N0": N0,
        "theta": theta,
        "reactions": [
            {
                "reactants": dict(r),
                "products": dict(p),
                "rate_base": base,
                "rate_theta_exponent": pe,
                "beta": beta if isinstance(beta, int) else str(Fraction(beta)),
            }
            for r, p, base, pe, beta in reactions
        ],
    }
    return network_from_dict(doc)


HEAT_SHOCK_DOCUMENT = """\
# sigma32 heat-shock response: S1 <-> S2 fast, S2 -> S3 slow
species: [S1, S2, S3]
initial_state: [20, 0, 0]
N0: 10000
theta: 1.0
reactions:
  - {reactants: {S1: 1}, products: {S2: 1}, rate_base: 1.0, rate_theta_exponent: 1, beta: 0}
  - {reactants: {S2: 1}, products: {S1: 1}, rate_base: 2.0, rate_theta_exponent: 0, beta: 0}
  - {reactants: {S2: 1}, products: {S3: 1}, rate_base: 5.0, rate_theta_exponent: 0, beta: -1}
"""


def heat_shock(v0: int = 20, N0: int = 10_000) -> ReactionNetwork:
    net = parse_model(HEAT_SHOCK_DOCUMENT)
    if v0 != 20 or N0 != 10_000:
        doc = network_to_dict(net)
        doc["initial_state"] = [v0, 0, 0]
        doc["N0"] = N0
        net = network_from_dict(doc)
    return net
