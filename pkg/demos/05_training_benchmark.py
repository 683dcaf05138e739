"""
Training on a donation-style benchmark
======================================

End to end: a 748-row blood-donation-style table (4 numeric columns,
~24% positives) trained in the two modes that matter —

* full: graph encoder + supervised loss + alignment against the frozen
  text embeddings, weighted (1 - lambda) and lambda;
* graph: the same encoder with the alignment term switched off.

Inference is identical in both: predictions come from the graph branch
alone, so the text encoder is never needed after training.
"""
import logging
import time
from dataclasses import replace

from tabfuse import synthetic
from tabfuse.training import FULL, GRAPH_ONLY, TrainConfig, run_experiment

# Early epochs occasionally hit an all-dead relu row, which the alignment
# loss guards against (and logs); keep the demo output to the numbers.
logging.basicConfig(level=logging.ERROR)

data = synthetic.blood_like()
print("rows:", len(data), "| columns:", [c.name for c in data.schema.columns])

# Paper-style defaults everywhere except the optimizer: on a table this
# small, lr 3e-3 with batch 64 converges in a few hundred Adam steps.
config = TrainConfig(learning_rate=3e-3, batch_size=64, seed=5)

for mode in (FULL, GRAPH_ONLY):
    start = time.monotonic()
    result = run_experiment(data, replace(config, mode=mode))
    elapsed = time.monotonic() - start

    print(f"\n[{mode}] {elapsed:.1f}s, stopped after epoch {len(result.metrics.history) - 1}")
    head = result.metrics.history[0]
    best = result.metrics.history[result.metrics.best_epoch]
    print(f"  epoch {head['epoch']:>3}: loss {head['loss']:.4f} "
          f"(sup {head['loss_sup']:.4f}, cons {head['loss_cons']:.4f}) "
          f"val AUC {head['val_auc']:.4f}")
    print(f"  epoch {best['epoch']:>3}: loss {best['loss']:.4f} "
          f"(sup {best['loss_sup']:.4f}, cons {best['loss_cons']:.4f}) "
          f"val AUC {best['val_auc']:.4f}  <- checkpointed")
    print(f"  test AUC {result.test_auc:.4f}")

# Over the five standard seeds both modes land around 0.77 mean test AUC on
# this table; run `tabfuse seeds --help` or tests/test_acceptance.py for the
# aggregated version.
