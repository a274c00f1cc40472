"""Multi-view frequency-LSTM acoustic encoder, built from scratch on numpy."""
from .analysis import count_params, projection_saving, table1_report, view_output_size
from .ctc import ctc_brute_force, ctc_loss, frame_ce_loss, greedy_decode
from .encoder import (
    EncoderConfig,
    EncoderParams,
    ViewConfig,
    chunk,
    encoder_backward,
    encoder_forward,
    flstm_view_forward,
    load_config,
    multi_view_forward,
    parse_config,
)
from .errors import CacheError, ConfigError, FormatError, InfeasibleLabelError, TrainingDiverged
from .features import FrontendConfig, MvnStats, lfr_stack, log_stft, mvn_apply, mvn_fit, permute_frequency
from .train import TOY_CONFIG, SynthTask, TrainConfig, train

__version__ = "0.1.0"
