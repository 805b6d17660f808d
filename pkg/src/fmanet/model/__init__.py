"""FMANet architecture: consensus fusion, soft motion attention, SCNN backbone."""
from .blocks import FmanetHyper, FusionBlock, MotionAttentionBlock, ffb_consensus, smab_cues
from .network import (FMANet, SCNNClassifier, TrainResult, TrainSchedule, build_model,
                      load_checkpoint, predict, save_checkpoint, train)
from .scnn import SCNN, REFERENCE_TRACE, expected_trace

__all__ = ["FmanetHyper", "FusionBlock", "MotionAttentionBlock", "ffb_consensus", "smab_cues",
           "FMANet", "SCNNClassifier", "TrainResult", "TrainSchedule", "build_model",
           "load_checkpoint", "predict", "save_checkpoint", "train", "SCNN", "REFERENCE_TRACE",
           "expected_trace"]
