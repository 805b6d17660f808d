"""Dataset indexing, label protocols, LOSO folds, augmentation and synthetic data."""
from .augment import AUGMENT_OPTIONS, FULL_SPEC, augment, flip_frame, parse_spec, rotate_frame, variant_names
from .features import FlowSettings, fmanet_input, phase_flows, resize_frame, sample_input, stack_inputs
from .index import (VOCABULARY, DatasetIndex, Fold, Sample, check_partition, load_index, loso_splits,
                    map_labels, normalize_label, write_index)
from .synth import SynthConfig, SynthDataset, synth_generate, write_dataset

__all__ = [
    "AUGMENT_OPTIONS", "FULL_SPEC", "augment", "flip_frame", "parse_spec", "rotate_frame", "variant_names",
    "FlowSettings", "fmanet_input", "phase_flows", "resize_frame", "sample_input", "stack_inputs",
    "VOCABULARY", "DatasetIndex", "Fold", "Sample", "check_partition", "load_index", "loso_splits",
    "map_labels", "normalize_label", "write_index",
    "SynthConfig", "SynthDataset", "synth_generate", "write_dataset",
]
