"""Block-circulant (CDLinear) layers with FFT forward/backward passes,
closed-form Hessian-spectrum diagnostics, and the digits experiment harness."""

__version__ = "0.1.0"

from .layers import CirculantStack, DenseParams, LayerSpec
from .network import Network, NetworkSpec, cd_mlp_spec, dense_mlp_spec, param_count
from .training import TrainingConfig, run_experiment, train_model

__all__ = [
    "CirculantStack",
    "DenseParams",
    "LayerSpec",
    "Network",
    "NetworkSpec",
    "TrainingConfig",
    "cd_mlp_spec",
    "dense_mlp_spec",
    "param_count",
    "run_experiment",
    "train_model",
]
