"""tabfuse: tabular learning that trains a per-row column-graph encoder
against frozen text embeddings and predicts from the graph branch alone."""

from .data import (CATEGORICAL, LABEL, MISSING_CATEGORY, NUMERIC, ONEHOT, Column, Dataset,
                   NumericMatrix, Preprocessor, TableSchema, fit_preprocessor, infer_schema,
                   load_dataset, split, transform)
from .graph import ColumnGraphSpec, RowGraph, compute_edge_weights, row_to_graph, rows_to_batch
from .serialize import (SerializedRow, check_token_budget, read_corpus, serialize_dataset,
                        serialize_row, write_corpus)
from .embed import EmbeddingStore, hash_embed, hash_store, load_embeddings, write_embeddings
from .autodiff import Tape, Value, grad_check
from .model import (ClassifierParams, GnnParams, ModelDims, ModelParams, ProjectionParams,
                    bind_params, classify, encode_graph, init_params)
from .losses import LossConfig, consistency_loss, joint_loss, supervised_loss
from .metrics import auc_roc
from .training import (AUTO, FULL, GRAPH_ONLY, TEXT_ONLY, Checkpoint, Metrics, ModeDecision,
                       TrainConfig, TrainingDiverged, default_store, gradient_check_report,
                       load_experiment_checkpoint, predict, predict_matrix, predict_text,
                       run_experiment, run_seeds, save_experiment_checkpoint, select_mode,
                       train)

__version__ = "0.1.0"
