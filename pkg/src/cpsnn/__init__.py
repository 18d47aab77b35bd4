"""ChronoPlastic spiking networks: warped-trace dynamics, training, analysis."""

from .backend import BACKEND
from .config import (ABLATIONS, MODEL_KINDS, ModelHyperparams, RunConfig,
                     TaskConfig, TrainingConfig, load_run_config,
                     run_config_from_dict, save_run_config)
from .dynamics import (LayerState, Tape, batch_forward, forward_sequence,
                       init_layer_state, run_stream, state_bytes,
                       streaming_step)
from .errors import (ConfigError, ContractError, CPSNNError, DataFormatError,
                     InfeasibleScheduleError, NumericsError)
from .params import (AdaptiveSNNParams, CPSNNParams, FixedSNNParams,
                     init_adaptive_params, init_cpsnn_params,
                     init_fixed_params, load_snapshot, save_snapshot)
from .tasks import (SpikeSequence, accuracy_ceiling, cue_posterior,
                    dataset_arrays, generate_dataset, generate_sample,
                    load_dataset, save_dataset)
from .train import (backward_batch, backward_sequence, evaluate,
                    finite_difference_grads, forward_batch, train_model)

__all__ = [
    "ABLATIONS", "MODEL_KINDS", "BACKEND",
    "ModelHyperparams", "TrainingConfig", "TaskConfig", "RunConfig",
    "load_run_config", "save_run_config", "run_config_from_dict",
    "LayerState", "Tape", "init_layer_state", "state_bytes",
    "batch_forward", "forward_sequence", "streaming_step", "run_stream",
    "CPSNNError", "ConfigError", "ContractError", "DataFormatError",
    "InfeasibleScheduleError", "NumericsError",
    "CPSNNParams", "FixedSNNParams", "AdaptiveSNNParams",
    "init_cpsnn_params", "init_fixed_params", "init_adaptive_params",
    "save_snapshot", "load_snapshot",
    "SpikeSequence", "generate_sample", "generate_dataset",
    "save_dataset", "load_dataset", "dataset_arrays",
    "cue_posterior", "accuracy_ceiling",
    "forward_batch", "backward_batch", "backward_sequence",
    "train_model", "evaluate", "finite_difference_grads",
]

__version__ = "0.1.0"
