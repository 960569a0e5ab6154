"""SDP lower bounds on the sampling overhead of cutting bipartite quantum channels."""

__version__ = "0.1.0"

from .channel import (  # noqa: E402
    ChannelError,
    ChoiRepresentation,
    GateSpec,
    NoiseModel,
    apply_channel,
    build_channel,
    damped_swap,
    gate_channel,
    noisy_cnot,
    tensor_parallel,
)
from .measures import (  # noqa: E402
    Certificate,
    MeasureReport,
    QpdDecomposition,
    gamma_ppt,
    gamma_tot_bound,
    ln_max,
    max_rains,
    measure,
    verify_certificate,
    w_hat,
)
from .tensor import SystemLayout, partial_trace, partial_transpose  # noqa: E402

__all__ = [
    "Certificate", "ChannelError", "ChoiRepresentation", "GateSpec", "MeasureReport", "NoiseModel",
    "QpdDecomposition", "SystemLayout", "apply_channel", "build_channel", "damped_swap", "gamma_ppt",
    "gamma_tot_bound", "gate_channel", "ln_max", "max_rains", "measure", "noisy_cnot", "partial_trace",
    "partial_transpose", "tensor_parallel", "verify_certificate", "w_hat",
]
