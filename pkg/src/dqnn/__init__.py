"""Simulator and training engine for dissipative quantum neural networks."""

from .linalg import (
    QubitLayout,
    embed,
    expm_i_hermitian,
    fidelity_pure,
    haar_random_state,
    haar_random_unitary,
    partial_trace,
    split_rng,
    tensor,
)
from .network import (
    FeedforwardCache,
    Network,
    Perceptron,
    apply_adjoint_channel,
    apply_layer_channel,
    backpropagate_targets,
    build_cache,
    feedforward,
    network_output,
)
from .training import (
    Dataset,
    TrainingConfig,
    TrainingHistory,
    commutator_matrix_M,
    cost,
    gradient_norm_probe,
    parameter_matrix_K,
    train,
    training_step,
)
from .experiments import (
    ExperimentRecord,
    TaskSpec,
    corrupt_pairs,
    generalization_experiment,
    generate_unitary_task,
    noise_experiment,
    optimal_cost_estimate,
)
from .statevector import (
    ShotResult,
    cost_from_sampling,
    fd_gradient,
    resource_count,
    subroutine2_feedforward,
    swap_test,
)
from .universality import build_circuit_embedding, circuit_unitary

__version__ = "0.1.0"
