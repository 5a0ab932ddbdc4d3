"""Stationarity-aware contrastive pretraining for time series, on numpy."""
from .augment import AugmentConfig, make_views
from .config import RunConfig, parse_config
from .contrast import (ContrastConfig, beta_mode, beta_weight, build_pair_structure, combined_loss, nc_loss,
                       tc_loss)
from .data import Dataset, SynthSpec, gen_synthetic, load_dataset, write_dataset
from .encoder import EncoderConfig, embed, encode, encoder_init
from .evaluate import fnp_audit, format_fnp_comparison, label_fraction_protocol, linear_probe
from .stationarity import adf_test, assess_dataset, assess_segment
from .train import TrainConfig, batch_schedule, pretrain, resume, stationarity_states

__version__ = "0.1.0"
