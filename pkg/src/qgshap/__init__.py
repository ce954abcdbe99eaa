"""Exact Shapley node attributions for small GIN classifiers, classical and simulated-quantum."""

__version__ = "0.1.0"

from .graph import (
    Coalition,
    Graph,
    complement_subgraph,
    enumerate_coalitions,
    induced_subgraph,
    mask_zero_fill,
    read_jsonl,
    write_jsonl,
)
from .gin import GinModel, TrainConfig, backward, forward, init_model, load_model, save_model, train
from .shapley import (
    CooperativeGame,
    ShapleyResult,
    build_game,
    check_axioms,
    classical_shapley,
    normalize_game,
    shapley_weight,
)
from .statevector import (
    Circuit,
    GateOp,
    RegisterLayout,
    Statevector,
    amplitude_estimation,
    apply_gate,
    grover_operator,
    marginal_probability,
)
from .pipeline import (
    Explanation,
    PipelineConfig,
    estimate_phi_pm,
    explain,
    explain_game,
    prepare_weighted_coalitions,
    utility_oracle,
)
from .benchmarks import DatasetSpec, MetricsReport, fidelity, gea, gen_ba2motif, gen_bridge, sparsity, topk_accuracy
