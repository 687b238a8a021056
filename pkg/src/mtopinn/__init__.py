"""Multi-task training of traffic PINNs on the Greenshields LWR model."""
from .errors import ConfigurationError, DivergenceError, ParseError, UndefinedMetricError, ValidationError
from .netcore import Architecture, NetworkParams, forward, forward_with_input_grads, init_params
from .physics import GreenshieldsParams
from .trainer import TaskSpec, TrainConfig, run

__version__ = "0.1.0"
