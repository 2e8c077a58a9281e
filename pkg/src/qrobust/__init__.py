"""qrobust: formal robustness verification for noisy quantum classifiers.

The package mirrors its pipeline: parse an OpenQASM 2.0 model, inject or
append Kraus noise, then verify local robustness per input state (fast sound
check, exact check with counterexamples) or global robustness through the
model's Lipschitz constant (dense or tensor-network path), and optionally
retrain on the counterexamples.
"""

from .circuit import (
    Circuit,
    Gate,
    Measurement,
    NoiseSite,
    QmlModel,
    adjoint_apply,
    adjoint_observables,
    apply_circuit,
    circuit_unitary,
    classify,
    predict_distribution,
)
from .errors import (
    ConvergenceError,
    DenseCapExceeded,
    DimensionMismatch,
    QasmError,
    QRobustError,
    UnsupportedConstruct,
    ValidationError,
)
from .lipschitz import GlobalVerdict, LipschitzResult, global_decision, kernel_expand, lipschitz_dense
from .linalg import (
    DensityMatrix,
    PureState,
    fidelity,
    hermitian_extremes,
    trace_distance,
    tv_distance,
)
from .local import (
    LabeledState,
    LocalReport,
    LocalVerdict,
    Neighborhood,
    exact_check_mixed,
    exact_check_pure,
    rough_check,
    verify_dataset,
)
from .noise import (
    QuantumChannel,
    RandomNoiseConfig,
    append_noise,
    inject_random_noise,
    standard_channel,
    validate_kraus,
)
from .qasm import build_model, parse_program, parse_qasm, render_text, serialize_qasm
from .tn import (
    TensorNetwork,
    TensorNode,
    build_heisenberg_tn,
    greedy_order,
    lanczos_extremes,
    lipschitz_tn,
    matfree_apply,
)
from .training import ParameterizedModel, adversarial_train, param_shift_grad

__version__ = "0.1.0"

__all__ = [
    "Circuit",
    "ConvergenceError",
    "DenseCapExceeded",
    "DensityMatrix",
    "DimensionMismatch",
    "Gate",
    "GlobalVerdict",
    "LabeledState",
    "LipschitzResult",
    "LocalReport",
    "LocalVerdict",
    "Measurement",
    "Neighborhood",
    "NoiseSite",
    "ParameterizedModel",
    "PureState",
    "QasmError",
    "QmlModel",
    "QRobustError",
    "QuantumChannel",
    "RandomNoiseConfig",
    "TensorNetwork",
    "TensorNode",
    "UnsupportedConstruct",
    "ValidationError",
    "adjoint_apply",
    "adjoint_observables",
    "adversarial_train",
    "append_noise",
    "apply_circuit",
    "build_heisenberg_tn",
    "build_model",
    "circuit_unitary",
    "classify",
    "exact_check_mixed",
    "exact_check_pure",
    "fidelity",
    "global_decision",
    "greedy_order",
    "hermitian_extremes",
    "inject_random_noise",
    "kernel_expand",
    "lanczos_extremes",
    "lipschitz_dense",
    "lipschitz_tn",
    "matfree_apply",
    "param_shift_grad",
    "parse_program",
    "parse_qasm",
    "predict_distribution",
    "render_text",
    "rough_check",
    "serialize_qasm",
    "standard_channel",
    "trace_distance",
    "tv_distance",
    "validate_kraus",
    "verify_dataset",
    "__version__",
]
