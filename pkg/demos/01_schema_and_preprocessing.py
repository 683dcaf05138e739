"""
Schema inference and preprocessing
==================================

A CSV goes in; out come typed columns, a fitted preprocessor and three
stratified splits. Everything downstream (graphs, serialization, training)
consumes these pieces.
"""
import tempfile
from pathlib import Path

import numpy as np

from tabfuse import synthetic
from tabfuse.data import fit_preprocessor, infer_schema, load_dataset, split, transform

# Write a small mixed-type table to disk, the way a user would hand us one.
workdir = Path(tempfile.mkdtemp())
csv_path = synthetic.dataset_to_csv(synthetic.mixed_toy(n=120, seed=3),
                                    workdir / "mixed.csv")
print("table:", csv_path.read_text().splitlines()[0])

# Column kinds are inferred from the cells: a column where every non-missing
# value parses as a number is numeric, anything else is categorical.
schema = infer_schema(csv_path, "y")
for col in schema.columns:
    print(f"  {col.name:>6}: {col.kind}")
print("classes:", schema.class_names)

# Load the full dataset and cut it 70/15/15, stratified per class so each
# split keeps the class balance. The seed fixes the assignment.
data = load_dataset(csv_path, "y")
tr, va, te = split(data, seed=5, fractions=(0.70, 0.15, 0.15))
print(f"split sizes: train {len(tr)}, val {len(va)}, test {len(te)}")

# The preprocessor is fitted on the training split only: min-max ranges for
# numeric columns, vocabularies for categorical ones.
prep = fit_preprocessor(tr, "onehot")
matrix = transform(prep, tr)
print("one-hot width m' =", matrix.width, "from", len(schema.columns), "columns")
print("node names:", list(matrix.expanded_names))

# All transformed values live in [0, 1]: scaled numerics, one-hot indicators.
print("value range: [%.3f, %.3f]" % (matrix.values.min(), matrix.values.max()))

# Label encoding keeps one node per column instead of one per category.
narrow = transform(fit_preprocessor(tr, "label"), tr)
print("label-encoded width m' =", narrow.width)

# Unseen categories at transform time fall into the reserved missing slot,
# so validation and test rows never crash the pipeline.
held_out = transform(prep, te)
print("test matrix:", held_out.values.shape)
