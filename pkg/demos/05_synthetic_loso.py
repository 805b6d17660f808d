"""Synthetic dataset, leave-one-subject-out training and pooled metrics (small and quick)."""
from fmanet.data import FlowSettings, SynthConfig, loso_splits, map_labels, synth_generate
from fmanet.eval import summary
from fmanet.experiment import ExperimentConfig, run_loso
from fmanet.model import FmanetHyper, TrainSchedule

ds = synth_generate(SynthConfig(classes=3, samples_per_class=10, subjects=4, image_size=16, noise_level=0.05))
index = map_labels(ds.index, 5)
print(len(index), "samples,", len(index.subjects()), "subjects, classes", index.class_names)
for fold in loso_splits(index):
    print("  fold %s: train %d test %d" % (fold.subject, len(fold.train), len(fold.test)))

config = ExperimentConfig(representation="mmcof", image_size=16, flow=FlowSettings(iterations=50),
                          hyper=FmanetHyper(c_mid=4), hidden=32,
                          schedule=TrainSchedule(epochs=15, batch_size=8, lr=1e-3))
report, _ = run_loso(index, ds.triplet, config)
print(summary(report, index.class_names))
