"""Classification metrics and leave-one-subject-out aggregation."""
from .metrics import (CSV_HEADER, POOLED_ID, FoldPredictions, LosoReport, MetricsReport, aggregate_loso,
                      compute_metrics, confusion, read_metrics_csv, summary, write_metrics_csv, write_summary)

__all__ = ["CSV_HEADER", "POOLED_ID", "FoldPredictions", "LosoReport", "MetricsReport", "aggregate_loso",
           "compute_metrics", "confusion", "read_metrics_csv", "summary", "write_metrics_csv", "write_summary"]
