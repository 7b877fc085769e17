"""RGB-D salient object detection with nested dual attention and adjacent
interaction aggregation, on a small float64 autodiff engine."""

from .config import AblationScheme, EncoderConfig, TrainConfig, scheme
from .errors import CodecError, ConfigError, ContractError, DimensionError, TrainingDiverged
from .losses import LossConfig, total_loss
from .metrics import MetricsReport, evaluate_dataset
from .network import M2RNet, build, predict
from .tensor import Tensor, no_grad

__version__ = "0.1.0"

__all__ = [
    "AblationScheme", "EncoderConfig", "TrainConfig", "scheme",
    "CodecError", "ConfigError", "ContractError", "DimensionError", "TrainingDiverged",
    "LossConfig", "total_loss", "MetricsReport", "evaluate_dataset",
    "M2RNet", "build", "predict", "Tensor", "no_grad",
]
