"""Hierarchical feature integration for multi-scale skeleton detection, on numpy."""

from ._backend import BACKEND
from .arch import ArchConfig, BackboneSpec, HierarchySpec, Network, build_network, forward, preset
from .config import Config, load_config, parse_config
from .errors import ArgumentError, ConfigError, DimensionError, FormatError, GraphError, HifiError
from .evaluate import evaluate, f_measure, match_maps, nms_thin, pr_curve
from .gt import quantize, scale_map_from_mask, so_target
from .loss import balanced_softmax_loss, fuse, response_map, total_loss
from .modelfile import load_model, save_model
from .predict import predict, predict_multiscale
from .train import train

__version__ = "0.1.0"
