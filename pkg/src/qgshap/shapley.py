"""Exact classical Shapley machinery: games, weights, brute force, axioms."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .graph import MAX_NODES, Graph, zero_fill_features

AXIOM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class CooperativeGame:
    """Dense value table over all ``2**n`` coalitions, index = bitmask."""

    n: int
    values: np.ndarray
    v_min: float = field(init=False)
    v_max: float = field(init=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64, copy=True).ravel()
        if not 1 <= self.n <= MAX_NODES:
            raise ValueError(f"player count must lie in [1, {MAX_NODES}]")
        if vals.size != 1 << self.n:
            raise ValueError(f"value table has {vals.size} entries, expected {1 << self.n}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("value table contains non-finite entries")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "v_min", float(vals.min()))
        object.__setattr__(self, "v_max", float(vals.max()))

    @property
    def full_mask(self) -> int:
        return (1 << self.n) - 1

    @property
    def spread(self) -> float:
        return self.v_max - self.v_min

    @property
    def is_degenerate(self) -> bool:
        return self.v_max == self.v_min

    def __call__(self, mask: int) -> float:
        return float(self.values[mask])

    def __add__(self, other: "CooperativeGame") -> "CooperativeGame":
        if other.n != self.n:
            raise ValueError("games must have the same player count")
        return CooperativeGame(self.n, self.values + other.values)

    def scaled(self, c: float) -> "CooperativeGame":
        return CooperativeGame(self.n, self.values * c)

    @classmethod
    def from_function(cls, n: int, fn) -> "CooperativeGame":
        return cls(n, [fn(m) for m in range(1 << n)])


@dataclass
class ShapleyResult:
    phi: np.ndarray
    phi_plus: np.ndarray
    phi_minus: np.ndarray
    method: str


def build_game(model, g: Graph) -> CooperativeGame:
    """v(S) = probability of the full-graph prediction on the zero-filled graph for S.

    Includes the empty coalition (index 0).
    """
    from .gin import forward, forward_features

    if g.num_nodes > MAX_NODES:
        raise ValueError(f"graph has {g.num_nodes} nodes, limit is {MAX_NODES}")
    y_hat = int(np.argmax(forward(model, g)))
    masks = np.arange(1 << g.num_nodes)
    probs = np.empty(masks.size)
    # chunked so 16-node graphs stay within memory
    step = 1024
    for lo in range(0, masks.size, step):
        chunk = masks[lo:lo + step]
        probs[lo:lo + step] = forward_features(model, g, zero_fill_features(g, chunk))[:, y_hat]
    return CooperativeGame(g.num_nodes, probs)


@lru_cache(maxsize=None)
def shapley_weight_exact(r: int, n: int) -> Fraction:
    if n < 1 or not 0 <= r <= n - 1:
        raise ValueError(f"coalition size r={r} out of range for n={n}")
    return Fraction(1, n * math.comb(n - 1, r))


def shapley_weight(r: int, n: int) -> float:
    """``1 / (n * C(n-1, r))``: weight of a size-``r`` coalition excluding a fixed player."""
    return float(shapley_weight_exact(r, n))


def _popcounts(masks: np.ndarray) -> np.ndarray:
    return np.array([bin(int(m)).count("1") for m in masks], dtype=int)


def _others(n: int, j: int) -> np.ndarray:
    masks = np.arange(1 << n)
    return masks[(masks >> j) & 1 == 0]


def coalition_weights(n: int, j: int):
    """Masks of every ``S`` not containing ``j`` together with their Shapley weights."""
    masks = _others(n, j)
    table = np.array([shapley_weight(r, n) for r in range(n)])
    return masks, table[_popcounts(masks)]


def classical_shapley(game: CooperativeGame, j: int) -> float:
    """Brute-force Shapley value of player ``j`` over all ``2**(n-1)`` coalitions."""
    if not 0 <= j < game.n:
        raise ValueError(f"player {j} out of range for n={game.n}")
    masks, w = coalition_weights(game.n, j)
    marg = game.values[masks | (1 << j)] - game.values[masks]
    return float(math.fsum(w * marg))


def classical_shapley_all(game: CooperativeGame) -> np.ndarray:
    return np.array([classical_shapley(game, j) for j in range(game.n)])


def normalize_game(game: CooperativeGame) -> np.ndarray:
    """Min-max rescale the table into [0, 1]; a constant game maps to all zeros."""
    if game.is_degenerate:
        warnings.warn("constant game: normalized table set to zeros", RuntimeWarning, stacklevel=2)
        return np.zeros_like(game.values)
    out = (game.values - game.v_min) / game.spread
    return np.clip(out, 0.0, 1.0)


def weighted_expectations(vhat: np.ndarray, n: int, j: int):
    """Classical ``(phi_plus, phi_minus)``: Shapley-weighted means of v̂(S ∪ {j}) and v̂(S)."""
    masks, w = coalition_weights(n, j)
    return float(math.fsum(w * vhat[masks | (1 << j)])), float(math.fsum(w * vhat[masks]))


def classical_result(game: CooperativeGame) -> ShapleyResult:
    phi = classical_shapley_all(game)
    if game.is_degenerate:
        vhat = np.zeros_like(game.values)
    else:
        vhat = (game.values - game.v_min) / game.spread
    pm = np.array([weighted_expectations(vhat, game.n, j) for j in range(game.n)])
    return ShapleyResult(phi, pm[:, 0], pm[:, 1], "classical")


# --------------------------------------------------------------------------
# axioms


def symmetric_pairs(game: CooperativeGame, tol: float = 1e-12):
    """Pairs (j, k) with v(S ∪ {j}) = v(S ∪ {k}) for every S avoiding both."""
    pairs = []
    masks = np.arange(1 << game.n)
    for j in range(game.n):
        for k in range(j + 1, game.n):
            rest = masks[((masks >> j) & 1 == 0) & ((masks >> k) & 1 == 0)]
            if np.all(np.abs(game.values[rest | 1 << j] - game.values[rest | 1 << k]) <= tol):
                pairs.append((j, k))
    return pairs


def dummy_players(game: CooperativeGame, tol: float = 1e-12):
    out = []
    for j in range(game.n):
        rest = _others(game.n, j)
        if np.all(np.abs(game.values[rest | 1 << j] - game.values[rest]) <= tol):
            out.append(j)
    return out


@dataclass
class AxiomReport:
    efficiency_residual: float
    symmetry_violations: dict
    dummy_violations: dict
    tol: float = AXIOM_TOL

    @property
    def passed(self) -> bool:
        return (
            self.efficiency_residual <= self.tol
            and all(v <= self.tol for v in self.symmetry_violations.values())
            and all(v <= self.tol for v in self.dummy_violations.values())
        )


def check_axioms(game: CooperativeGame, phi: Sequence[float], tol: float = AXIOM_TOL) -> AxiomReport:
    """Residuals of efficiency, symmetry and dummy for a candidate attribution.

    Efficiency is checked against ``v(P) - v(empty)`` since v(empty) need not be 0.
    """
    phi = np.asarray(phi, dtype=float)
    eff = abs(math.fsum(phi) - (game.values[game.full_mask] - game.values[0]))
    sym = {(j, k): abs(phi[j] - phi[k]) for j, k in symmetric_pairs(game)}
    dum = {j: abs(phi[j]) for j in dummy_players(game)}
    return AxiomReport(eff, sym, dum, tol)


# --------------------------------------------------------------------------
# CSV dump


def write_game_csv(game: CooperativeGame, path) -> None:
    vhat = np.zeros_like(game.values) if game.is_degenerate else (game.values - game.v_min) / game.spread
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mask", "value", "normalized"])
        for m, (v, nv) in enumerate(zip(game.values, vhat)):
            w.writerow([m, repr(float(v)), repr(float(nv))])


def read_game_csv(path) -> CooperativeGame:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: empty game table")
    masks = [int(r["mask"]) for r in rows]
    if masks != list(range(len(rows))):
        raise ValueError(f"{path}: masks must run 0..2^n-1 in order")
    n = len(rows).bit_length() - 1
    if 1 << n != len(rows):
        raise ValueError(f"{path}: {len(rows)} rows is not a power of two")
    return CooperativeGame(n, [float(r["value"]) for r in rows])


def random_game(rng: np.random.Generator, n: int, low: float = 0.0, high: float = 1.0,
                empty_value: Optional[float] = None) -> CooperativeGame:
    vals = rng.uniform(low, high, size=1 << n)
    if empty_value is not None:
        vals[0] = empty_value
    return CooperativeGame(n, vals)
