"""Accuracy, UF1 and UAR from a confusion matrix, per fold and pooled."""
import numpy as np

from fmanet.eval import FoldPredictions, aggregate_loso, compute_metrics, confusion

r = compute_metrics([[8, 2], [4, 6]])
print("acc %.3f uf1 %.3f uar %.3f" % (r.accuracy, r.uf1, r.uar))

labels = np.array([0, 0, 1, 1, 2, 2])
preds = np.array([0, 1, 1, 1, 2, 0])
print(confusion(preds, labels, 3))

folds = [FoldPredictions("s1", ["a", "b", "c"], labels[:3], preds[:3]),
         FoldPredictions("s2", ["d", "e", "f"], labels[3:], preds[3:])]
report = aggregate_loso(folds, 3)
for subject, fold in report.folds.items():
    print(subject, fold.as_dict())
print("pooled", report.pooled.as_dict())
