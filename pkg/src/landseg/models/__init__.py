"""Model families, checkpoints and encoder transfer."""
from .checkpoint import Checkpoint, CheckpointFormatError, config_hash
from .layers import Module
from .resunet import (ENCODER_PREFIX, ConfigError, ResUNet, ResUNetConfig, build_resunet,
                      build_resunet_uncompressed)
from .transfer import (FreezeState, LoadReport, build_model, encoder_checksum, freeze_state, load_encoder,
                       load_model, load_state, model_spec, save_encoder, save_model, set_frozen, to_checkpoint)
from .unet import BaselineUNet, BaselineUNetConfig, build_baseline_unet, center_crop, pool_labels

__all__ = [
    "BaselineUNet", "BaselineUNetConfig", "Checkpoint", "CheckpointFormatError", "ConfigError", "ENCODER_PREFIX",
    "FreezeState", "LoadReport", "Module", "ResUNet", "ResUNetConfig", "build_baseline_unet", "build_model",
    "build_resunet", "build_resunet_uncompressed", "center_crop", "config_hash", "encoder_checksum",
    "freeze_state", "load_encoder", "load_model", "load_state", "model_spec", "pool_labels", "save_encoder",
    "save_model", "set_frozen", "to_checkpoint",
]
