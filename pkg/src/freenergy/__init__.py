"""Predictive-coding computation engine.

Energy-minimizing iterative inference plus local Hebbian learning in four
flavors: a hierarchical stack (``core``), arbitrary directed graphs with
associative memory (``graph``), neural generative coding circuits with
asymmetric feedback (``ngc``), and divisive-modulation biased competition
(``bcdim``), with a plain backprop MLP (``backprop``) as the reference
model and gradient oracle.
"""

from .archive import ArchiveError, ModelArchive, archive_load, archive_save
from .backprop import MLP, mlp_backprop, mlp_forward, sgd_step
from .bcdim import (
    BCDIMNetwork,
    BCDIMStates,
    bc_additive_step,
    bcdim_apply,
    bcdim_error,
    bcdim_settle,
    bcdim_state_update,
    bcdim_weight_update,
    generalized_kl,
)
from .config import ConfigError, RunConfig, parse_config
from .core import (
    ClampSpec,
    InferenceConfig,
    PCNetwork,
    energy,
    feedforward,
    infer_code,
    infer_step,
    init_states,
    predict,
    settle,
    train_step,
    weight_update,
)
from .data import (
    CorruptionSpec,
    Dataset,
    batch_iter,
    corrupt,
    load_idx,
    one_hot,
    synth_patterns,
    write_idx_images,
    write_idx_labels,
)
from .graph import (
    GraphClamp,
    PCGraph,
    bipartite_mask,
    dense_mask,
    erdos_renyi_mask,
    from_network,
    graph_energy,
    graph_infer_step,
    graph_predict,
    graph_settle,
    graph_weight_update,
    layered_mask,
    memory_retrieve,
    memory_store,
    read_mask,
    write_mask,
)
from .ngc import (
    NGCCircuit,
    NGCStates,
    ngc_apply,
    ngc_hebbian_update,
    ngc_normalize,
    ngc_predict,
    ngc_project,
    ngc_settle,
    ngc_state_update,
)
from .numerics import (
    ACTIVATION_KINDS,
    activation_apply,
    activation_deriv,
    finite_diff_grad,
    glorot_uniform,
    make_rng,
)

__version__ = "0.1.0"
