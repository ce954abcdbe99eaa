"""Quantum Shapley pipeline: weighted-coalition state prep, utility oracles, QAE.

For each player ``j`` two circuits are simulated. Both start from

    sum_t sqrt(q_t) |t>_partition  (x)  prod_{p != j} (sqrt(1 - x_t)|0> + sqrt(x_t)|1>)_p

which, traced over the partition register, puts weight
``sum_t q_t x_t^|S| (1 - x_t)^(n-1-|S|)`` on coalition ``S``. With an exact
quadrature of ``int_0^1 x^r (1-x)^(n-1-r) dx`` that is the Shapley weight.
A cascade of multi-controlled RY gates then writes v̂(S) (or v̂(S ∪ {j}))
into the utility qubit's |1> probability, whose expectation is estimated
either by reading the statevector or by amplitude estimation.
"""
from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .graph import Graph
from .shapley import CooperativeGame, build_game, classical_shapley_all, normalize_game
from .statevector import (
    AmplitudeEstimate,
    BudgetExceeded,
    Circuit,
    RegisterLayout,
    Statevector,
    amplitude_estimation,
    marginal_probability,
    prepare_real_amplitudes,
    qae_error_bound,
    qubit_cap,
    ry,
)

log = logging.getLogger(__name__)

MODES = ("classical", "quantum-exact", "quantum-qae")
PREPS = ("beta-quadrature", "direct-exact")
MAX_QUANTUM_NODES = 8
MAX_PARTITION_QUBITS = 10


@dataclass
class PipelineConfig:
    mode: str = "quantum-exact"
    prep: str = "beta-quadrature"
    partition_qubits: int = 6
    eval_qubits: int = 6
    epsilon: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.prep not in PREPS:
            raise ValueError(f"prep must be one of {PREPS}, got {self.prep!r}")
        if not 1 <= self.partition_qubits <= MAX_PARTITION_QUBITS:
            raise BudgetExceeded(f"partition_qubits must lie in [1, {MAX_PARTITION_QUBITS}]")
        if not 1 <= self.eval_qubits <= 10:
            raise BudgetExceeded("eval_qubits must lie in [1, 10]")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


# --------------------------------------------------------------------------
# quadrature


def exact_partition_qubits(n: int) -> int:
    """Fewest partition qubits whose Gauss-Legendre rule integrates degree n-1 exactly."""
    nodes_needed = max(1, math.ceil(n / 2))
    return max(1, math.ceil(math.log2(nodes_needed)))


def quadrature_rule(prep: str, partition_qubits: int):
    """Nodes ``x_t`` in (0, 1) and weights ``q_t`` (summing to 1) for ``2**partition_qubits`` points."""
    K = 1 << partition_qubits
    if prep == "beta-quadrature":
        return (np.arange(K) + 0.5) / K, np.full(K, 1.0 / K)
    if prep == "direct-exact":
        u, w = np.polynomial.legendre.leggauss(K)
        return (u + 1.0) / 2.0, w / w.sum()
    raise ValueError(f"unknown prep {prep!r}")


def partition_qubits_for(cfg: PipelineConfig, n: int) -> int:
    return exact_partition_qubits(n) if cfg.prep == "direct-exact" else cfg.partition_qubits


def make_layout(n: int, partition_qubits: int, eval_qubits: int = 0) -> RegisterLayout:
    layout = RegisterLayout(partition_qubits, n, 1, eval_qubits)
    if layout.total_qubits > qubit_cap():
        raise BudgetExceeded(f"{layout.total_qubits} qubits needed, cap is {qubit_cap()}")
    return layout


# --------------------------------------------------------------------------
# circuits


def prepare_weighted_coalitions(layout: RegisterLayout, n: int, exclude: int, prep: str) -> Circuit:
    """A0: player register (minus ``exclude``) in a Shapley-weighted superposition."""
    if layout.player != n:
        raise ValueError(f"layout has {layout.player} player qubits, expected {n}")
    if not 0 <= exclude < n:
        raise ValueError(f"exclude={exclude} out of range")
    part = list(layout.span("partition"))
    xs, qs = quadrature_rule(prep, len(part))
    circ = Circuit(layout.working_qubits)
    circ.extend(prepare_real_amplitudes(qs, part))
    players = [layout.qubit("player", p) for p in range(n) if p != exclude]
    for t, x in enumerate(xs):
        if qs[t] == 0.0:
            continue
        bits = [(t >> i) & 1 for i in range(len(part))]
        theta = 2.0 * math.asin(math.sqrt(x))
        for q in players:
            circ.append(ry(q, theta, part, bits))
    return circ


def utility_oracle(layout: RegisterLayout, vhat: np.ndarray, include_j: bool, j: int) -> Circuit:
    """U±: rotate the utility qubit so P(1 | S) = v̂(S ∪ {j}) or v̂(S).

    One multi-controlled RY per coalition ``S`` avoiding ``j``.
    """
    n = layout.player
    vhat = np.asarray(vhat, dtype=float)
    if vhat.size != 1 << n:
        raise ValueError("normalized table size does not match the player register")
    if np.any(vhat < 0.0) or np.any(vhat > 1.0):
        raise ValueError("normalized values must lie in [0, 1]")
    others = [p for p in range(n) if p != j]
    ctrl = [layout.qubit("player", p) for p in others]
    target = layout.qubit("utility")
    circ = Circuit(layout.working_qubits)
    for s in range(1 << n):
        if s >> j & 1:
            continue
        v = vhat[s | (1 << j)] if include_j else vhat[s]
        if v == 0.0:
            continue
        bits = [(s >> p) & 1 for p in others]
        circ.append(ry(target, 2.0 * math.asin(math.sqrt(v)), ctrl, bits))
    return circ


def coalition_distribution(n: int, exclude: int, prep: str, partition_qubits: int) -> np.ndarray:
    """Simulated probability of each player-register mask after A0 alone."""
    if prep == "direct-exact":
        partition_qubits = exact_partition_qubits(n)
    layout = make_layout(n, partition_qubits)
    circ = prepare_weighted_coalitions(layout, n, exclude, prep)
    sv = circ.run(Statevector.for_layout(layout))
    return sv.register_distribution("player")


# --------------------------------------------------------------------------
# estimation


@dataclass
class PhiEstimate:
    phi_plus: float
    phi_minus: float
    details: dict = field(default_factory=dict)


def _estimate_one(layout, prep_circ, oracle, mode, m):
    circ = prep_circ + oracle
    ut = layout.qubit("utility")
    if mode == "quantum-exact":
        sv = circ.run(Statevector.for_layout(layout))
        return marginal_probability(sv, ut, 1), None
    ae: AmplitudeEstimate = amplitude_estimation(circ, ut, m)
    return ae.estimate, ae


def estimate_phi_pm(game: CooperativeGame, j: int, cfg: PipelineConfig,
                    vhat: Optional[np.ndarray] = None) -> PhiEstimate:
    """Shapley-weighted expectations of v̂ with ``j`` included and excluded."""
    if cfg.mode == "classical":
        raise ValueError("estimate_phi_pm is the quantum path; use classical_shapley for mode 'classical'")
    n = game.n
    if n > MAX_QUANTUM_NODES:
        raise BudgetExceeded(f"quantum modes are limited to {MAX_QUANTUM_NODES} players, game has {n}")
    if not 0 <= j < n:
        raise ValueError(f"player {j} out of range")
    if game.is_degenerate:
        warnings.warn("constant game: phi+ = phi- = 0", RuntimeWarning, stacklevel=2)
        return PhiEstimate(0.0, 0.0, {"degenerate": True})
    if vhat is None:
        vhat = normalize_game(game)
    ell = partition_qubits_for(cfg, n)
    layout = make_layout(n, ell)
    if cfg.mode == "quantum-qae" and layout.total_qubits + cfg.eval_qubits > qubit_cap():
        raise BudgetExceeded(f"QAE needs {layout.total_qubits + cfg.eval_qubits} qubits, cap is {qubit_cap()}")
    a0 = prepare_weighted_coalitions(layout, n, j, cfg.prep)
    plus, ae_p = _estimate_one(layout, a0, utility_oracle(layout, vhat, True, j), cfg.mode, cfg.eval_qubits)
    minus, ae_m = _estimate_one(layout, a0, utility_oracle(layout, vhat, False, j), cfg.mode, cfg.eval_qubits)
    details = {"qubits": layout.total_qubits, "prep_gates": len(a0)}
    if ae_p is not None:
        details.update(oracle_calls=ae_p.oracle_calls + ae_m.oracle_calls,
                       outcomes=(ae_p.best_outcome, ae_m.best_outcome))
    return PhiEstimate(plus, minus, details)


# --------------------------------------------------------------------------
# explanations


@dataclass
class Explanation:
    scores: np.ndarray
    raw_phi: np.ndarray
    phi_plus: np.ndarray
    phi_minus: np.ndarray
    ranking: list
    mode: str
    prep: Optional[str] = None
    l: Optional[int] = None
    m: Optional[int] = None
    seed: int = 0
    v_min: float = 0.0
    v_max: float = 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("scores", "raw_phi", "phi_plus", "phi_minus"):
            d[k] = [float(x) for x in np.asarray(d[k])]
        d["ranking"] = [int(i) for i in self.ranking]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "Explanation":
        kw = dict(d)
        for k in ("scores", "raw_phi", "phi_plus", "phi_minus"):
            kw[k] = np.asarray(kw[k], dtype=float)
        kw["ranking"] = [int(i) for i in kw["ranking"]]
        return cls(**{k: kw[k] for k in cls.__dataclass_fields__ if k in kw})


def rank_nodes(scores) -> list:
    """Descending score, ties broken by ascending node index."""
    scores = np.asarray(scores, dtype=float)
    return sorted(range(scores.size), key=lambda i: (-scores[i], i))


def final_scores(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    top = np.abs(phi).max() if phi.size else 0.0
    return phi / top if top > 0 else np.zeros_like(phi)


def explain_game(game: CooperativeGame, cfg: PipelineConfig = None) -> Explanation:
    """Node attributions for a ready-made game."""
    cfg = cfg or PipelineConfig()
    n = game.n
    if cfg.mode == "classical":
        from .shapley import weighted_expectations

        phi = classical_shapley_all(game)
        vhat = normalize_game(game) if not game.is_degenerate else np.zeros_like(game.values)
        pm = np.array([weighted_expectations(vhat, n, j) for j in range(n)])
        plus, minus = pm[:, 0], pm[:, 1]
        ell = m = prep = None
    else:
        if n > MAX_QUANTUM_NODES:
            raise BudgetExceeded(f"quantum modes are limited to {MAX_QUANTUM_NODES} nodes, graph has {n}")
        if game.is_degenerate:
            warnings.warn("constant game: all attributions are zero", RuntimeWarning, stacklevel=2)
            plus = minus = np.zeros(n)
        else:
            vhat = normalize_game(game)
            est = [estimate_phi_pm(game, j, cfg, vhat) for j in range(n)]
            plus = np.array([e.phi_plus for e in est])
            minus = np.array([e.phi_minus for e in est])
        phi = game.spread * (plus - minus)
        ell = partition_qubits_for(cfg, n)
        m = cfg.eval_qubits if cfg.mode == "quantum-qae" else None
        prep = cfg.prep
    scores = final_scores(phi)
    return Explanation(
        scores=scores,
        raw_phi=np.asarray(phi, dtype=float),
        phi_plus=np.asarray(plus, dtype=float),
        phi_minus=np.asarray(minus, dtype=float),
        ranking=rank_nodes(scores),
        mode=cfg.mode,
        prep=prep,
        l=ell,
        m=m,
        seed=cfg.seed,
        v_min=game.v_min,
        v_max=game.v_max,
    )


def explain(model, g: Graph, cfg: PipelineConfig = None) -> Explanation:
    """Build the zero-fill game for ``g`` under ``model`` and attribute it."""
    cfg = cfg or PipelineConfig()
    if cfg.mode != "classical" and g.num_nodes > MAX_QUANTUM_NODES:
        raise BudgetExceeded(f"quantum modes are limited to {MAX_QUANTUM_NODES} nodes, graph has {g.num_nodes}")
    return explain_game(build_game(model, g), cfg)


def qae_phi_bound(game: CooperativeGame, m: int) -> float:
    """Worst-case |phi_qae - phi| from the per-estimate QAE bound on both phi+ and phi-."""
    return game.spread * 2.0 * qae_error_bound(m)
