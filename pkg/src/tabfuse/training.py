"""Training loop, mode selection, prediction and multi-seed evaluation.

Three training modes share one loop:

  full   joint objective (1 - lambda) * CE + lambda * consistency, graph
         branch trained against a frozen embedding store;
  graph  the same graph branch with lambda pinned to 0 (no store needed);
  text   a classifier over the frozen store alone (fallback for tables the
         graph view cannot represent, e.g. no numeric columns).

Whatever the mode, prediction for full/graph checkpoints runs the graph
branch only, so the embedding store can be deleted after training.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .data import (Dataset, NumericMatrix, Preprocessor, TableSchema, fit_preprocessor,
                   split, transform, DEFAULT_FRACTIONS)
from .embed import EmbeddingStore, hash_store, DEFAULT_DIM
from .graph import ColumnGraphSpec, compute_edge_weights
from .losses import consistency_loss, joint_loss, supervised_loss
from .metrics import auc_roc
from .model import (ClassifierParams, ModelDims, ModelParams, bind_params, classify,
                    encode_graph, init_params, init_text_params, load_checkpoint,
                    params_to_tensors, save_checkpoint, tensors_to_params)
from .serialize import serialize_dataset

log = logging.getLogger("tabfuse")

FULL, GRAPH_ONLY, TEXT_ONLY, AUTO = "full", "graph", "text", "auto"
HIGH_CARDINALITY_FRACTION = 0.6
DEFAULT_SEEDS = (5, 108, 180, 234, 250)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 256
    max_epochs: int = 240
    patience: int = 16
    lam: float = 0.2
    tau: float = 0.1
    mode: str = AUTO
    seed: int = 5
    fractions: tuple[float, float, float] = DEFAULT_FRACTIONS
    encoding: str = "onehot"
    hash_dim: int = DEFAULT_DIM
    hidden: int = 64
    clf_hidden: int = 64
    num_layers: int = 3

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch size, epochs and patience must be at least 1")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must be in [0, 1], got {self.lam}")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.mode not in (FULL, GRAPH_ONLY, TEXT_ONLY, AUTO):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.encoding not in ("onehot", "label"):
            raise ValueError(f"unknown encoding {self.encoding!r}")

    def to_json(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["fractions"] = list(self.fractions)
        return d

    @staticmethod
    def from_json(obj: dict) -> "TrainConfig":
        obj = dict(obj)
        if "fractions" in obj:
            obj["fractions"] = tuple(obj["fractions"])
        return TrainConfig(**obj)


def config_hash(config: TrainConfig | dict) -> str:
    obj = config.to_json() if isinstance(config, TrainConfig) else config
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class Metrics:
    auc_roc: float
    best_epoch: int
    history: list


@dataclass(frozen=True)
class ModeDecision:
    mode: str
    reason: str


def select_mode(data: Dataset) -> ModeDecision:
    """Fall back to the text branch when the graph view is degenerate:
    no numeric feature columns, or an id-like column whose distinct count
    exceeds 60% of the rows."""
    schema = data.schema
    if not schema.numeric_names:
        return ModeDecision(TEXT_ONLY, "no numeric feature columns")
    n = len(data)
    threshold = HIGH_CARDINALITY_FRACTION * n
    for j, col in enumerate(schema.columns):
        distinct = len({r[j] for r in data.cells if r[j] is not None})
        if distinct > threshold:
            return ModeDecision(
                TEXT_ONLY,
                f"column {col.name!r} has {distinct} distinct values (> 60% of {n} rows)")
    return ModeDecision(FULL, "numeric columns present, no id-like column")


class Adam:
    """Adam with bias correction; state is keyed by parameter name."""

    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, arrays: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, arr in arrays.items():
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(arr)
                self.v[name] = np.zeros_like(arr)
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            mhat = self.m[name] / (1 - b1 ** self.t)
            vhat = self.v[name] / (1 - b2 ** self.t)
            arr -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


@dataclass
class Checkpoint:
    """Everything prediction needs, self-contained."""

    mode: str
    seed: int
    config: dict
    dims: ModelDims
    params: ModelParams
    schema: TableSchema
    preprocessor: Preprocessor | None
    graph_spec: ColumnGraphSpec | None
    provider_tag: str = "hash"


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _graph_probs(params: ModelParams, spec: ColumnGraphSpec, matrix: np.ndarray,
                 chunk: int = 1024) -> np.ndarray:
    out = []
    for start in range(0, matrix.shape[0], chunk):
        tape = ad.Tape()
        bound = bind_params(tape, params)
        _, g = encode_graph(tape, matrix[start:start + chunk], spec, bound)
        logits = classify(tape, g, bound.clf)
        out.append(_softmax(logits.data))
    return np.vstack(out)


def _text_probs(params: ModelParams, vectors: np.ndarray) -> np.ndarray:
    tape = ad.Tape()
    bound = bind_params(tape, params)
    logits = classify(tape, tape.leaf(vectors), bound.clf)
    return _softmax(logits.data)


def predict(ckpt: Checkpoint, data: Dataset) -> np.ndarray:
    """Class probabilities from the graph branch alone. Rows sum to 1 and
    results do not depend on batching."""
    if ckpt.mode == TEXT_ONLY:
        raise ValueError("text-mode checkpoints predict from stored embeddings; use predict_text")
    if data.schema != ckpt.schema:
        raise ValueError("dataset schema does not match the checkpoint")
    matrix = transform(ckpt.preprocessor, data)
    return _graph_probs(ckpt.params, ckpt.graph_spec, matrix.values)


def predict_matrix(ckpt: Checkpoint, matrix: np.ndarray) -> np.ndarray:
    if ckpt.mode == TEXT_ONLY:
        raise ValueError("text-mode checkpoints predict from stored embeddings; use predict_text")
    return _graph_probs(ckpt.params, ckpt.graph_spec, matrix)


def predict_text(ckpt: Checkpoint, store: EmbeddingStore, row_ids) -> np.ndarray:
    if ckpt.mode != TEXT_ONLY:
        raise ValueError(f"predict_text needs a text-mode checkpoint, got {ckpt.mode!r}")
    return _text_probs(ckpt.params, store.matrix(row_ids))


@dataclass
class SplitArrays:
    matrix: np.ndarray
    labels: np.ndarray
    row_ids: np.ndarray


def train(train_arrays: SplitArrays, val_arrays: SplitArrays, spec: ColumnGraphSpec | None,
          store: EmbeddingStore | None, config: TrainConfig, schema: TableSchema,
          preprocessor: Preprocessor | None, num_classes: int) -> tuple[Checkpoint, Metrics]:
    """Minibatch Adam with per-epoch reshuffling and early stopping on the
    validation AUC; returns the checkpoint from the best validation epoch."""
    mode = config.mode
    if mode == AUTO:
        raise ValueError("resolve mode before calling train")
    if mode in (FULL, TEXT_ONLY) and store is None:
        raise ValueError(f"{mode} mode needs an embedding store")
    if mode != TEXT_ONLY and spec is None:
        raise ValueError(f"{mode} mode needs a column graph spec")

    n = train_arrays.matrix.shape[0]
    if mode == TEXT_ONLY:
        dims = ModelDims(num_nodes=0, num_classes=num_classes, embed_dim=store.dim,
                         hidden=config.hidden, clf_hidden=config.clf_hidden, num_layers=0)
        params = init_text_params(config.seed, store.dim, config.clf_hidden, num_classes)
    else:
        embed_dim = store.dim if store is not None else config.hash_dim
        dims = ModelDims(num_nodes=spec.num_nodes, num_classes=num_classes,
                         embed_dim=embed_dim, hidden=config.hidden,
                         clf_hidden=config.clf_hidden, num_layers=config.num_layers)
        params = init_params(config.seed, dims)

    arrays = dict(params.named_arrays())
    adam = Adam(config.learning_rate)
    lam = 0.0 if mode == GRAPH_ONLY else config.lam
    use_consistency = mode == FULL and lam > 0.0

    best_auc = -np.inf
    best_params = params.copy()
    best_epoch = 0
    since_best = 0
    history: list[dict] = []

    for epoch in range(config.max_epochs):
        order = np.random.default_rng([config.seed, 202, epoch]).permutation(n)
        sup_total, cons_total, loss_total, batches = 0.0, 0.0, 0.0, 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            tape = ad.Tape()
            bound = bind_params(tape, params)
            if mode == TEXT_ONLY:
                g_text = tape.leaf(store.matrix(train_arrays.row_ids[idx]))
                logits = classify(tape, g_text, bound.clf)
                l_sup = supervised_loss(tape, logits, train_arrays.labels[idx])
                loss = l_sup
                l_cons_val = 0.0
            else:
                _, g = encode_graph(tape, train_arrays.matrix[idx], spec, bound)
                logits = classify(tape, g, bound.clf)
                l_sup = supervised_loss(tape, logits, train_arrays.labels[idx])
                if use_consistency:
                    g_text = tape.leaf(store.matrix(train_arrays.row_ids[idx]))
                    l_cons = consistency_loss(tape, g_text, g, config.tau)
                    loss = joint_loss(l_sup, l_cons, lam)
                    l_cons_val = float(l_cons.data[0, 0])
                else:
                    loss = l_sup
                    l_cons_val = 0.0
            loss_val = float(loss.data[0, 0])
            if not np.isfinite(loss_val):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} batch {batches}: "
                    f"loss={loss_val} sup={float(l_sup.data[0, 0])} cons={l_cons_val}")
            tape.backward(loss)
            adam.step(arrays, tape.gradients())
            for pname, arr in arrays.items():
                if not np.isfinite(arr).all():
                    raise TrainingDiverged(
                        f"non-finite parameter {pname!r} after update at epoch {epoch} "
                        f"batch {batches} (loss={loss_val})")
            sup_total += float(l_sup.data[0, 0])
            cons_total += l_cons_val
            loss_total += loss_val
            batches += 1

        if mode == TEXT_ONLY:
            val_probs = _text_probs(params, store.matrix(val_arrays.row_ids))
        else:
            val_probs = _graph_probs(params, spec, val_arrays.matrix)
        val_scores = val_probs[:, 1] if num_classes == 2 else val_probs
        val_auc = auc_roc(val_scores, val_arrays.labels)
        history.append({"epoch": epoch, "loss": loss_total / batches,
                        "loss_sup": sup_total / batches, "loss_cons": cons_total / batches,
                        "val_auc": val_auc})
        if val_auc > best_auc:
            best_auc = val_auc
            best_params = params.copy()
            best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                log.info("early stop at epoch %d (best %.4f at %d)", epoch, best_auc, best_epoch)
                break

    ckpt = Checkpoint(mode=mode, seed=config.seed, config=config.to_json(), dims=dims,
                      params=best_params, schema=schema, preprocessor=preprocessor,
                      graph_spec=None if mode == TEXT_ONLY else spec,
                      provider_tag=store.provider_tag if store is not None else "none")
    return ckpt, Metrics(auc_roc=best_auc, best_epoch=best_epoch, history=history)


# ---- experiment orchestration ----------------------------------------------

@dataclass
class ExperimentResult:
    checkpoint: Checkpoint
    metrics: Metrics
    test_auc: float
    val_auc: float
    mode: str
    seed: int
    decision: ModeDecision | None


def default_store(data: Dataset, dim: int = DEFAULT_DIM) -> EmbeddingStore:
    """Hash-encode the serialized text of every row (labels never appear)."""
    return hash_store(serialize_dataset(data), dim)


def run_experiment(data: Dataset, config: TrainConfig,
                   store: EmbeddingStore | None = None) -> ExperimentResult:
    """Split, preprocess, build the graph spec, train and score the test split."""
    decision = None
    mode = config.mode
    if mode == AUTO:
        decision = select_mode(data)
        mode = decision.mode
        log.info("mode %s: %s", mode, decision.reason)
    config = replace(config, mode=mode)

    tr, va, te = split(data, config.seed, config.fractions)
    prep = fit_preprocessor(tr, config.encoding)
    m_tr, m_va, m_te = (transform(prep, d) for d in (tr, va, te))
    spec = None
    if mode != TEXT_ONLY:
        spec = compute_edge_weights(m_tr)
    if store is None and mode in (FULL, TEXT_ONLY):
        store = default_store(data, config.hash_dim)

    num_classes = len(data.schema.class_names)
    ckpt, metrics = train(
        SplitArrays(m_tr.values, tr.labels, tr.row_ids),
        SplitArrays(m_va.values, va.labels, va.row_ids),
        spec, store, config, data.schema, prep, num_classes)

    if mode == TEXT_ONLY:
        te_probs = predict_text(ckpt, store, te.row_ids)
    else:
        te_probs = predict_matrix(ckpt, m_te.values)
    te_scores = te_probs[:, 1] if num_classes == 2 else te_probs
    test_auc = auc_roc(te_scores, te.labels)
    return ExperimentResult(ckpt, metrics, test_auc, metrics.auc_roc, mode, config.seed, decision)


def metrics_json(dataset_name: str, result: ExperimentResult) -> dict:
    return {
        "dataset": dataset_name,
        "mode": result.mode,
        "seed": result.seed,
        "auc_roc": result.test_auc,
        "best_epoch": result.metrics.best_epoch,
        "history": result.metrics.history,
    }


def run_seeds(data: Dataset, config: TrainConfig, seeds=DEFAULT_SEEDS,
              store: EmbeddingStore | None = None,
              dataset_name: str = "dataset") -> dict:
    """One experiment per seed; aggregate mean and population std of test AUC."""
    rows = []
    aucs = []
    for s in seeds:
        result = run_experiment(data, replace(config, seed=int(s)), store=store)
        rows.append(metrics_json(dataset_name, result))
        aucs.append(result.test_auc)
    arr = np.asarray(aucs, dtype=np.float64)
    return {"dataset": dataset_name, "mode": rows[0]["mode"] if rows else config.mode,
            "seeds": rows, "mean": float(arr.mean()), "std": float(arr.std())}


# ---- checkpoint file glue ---------------------------------------------------

def save_experiment_checkpoint(path, ckpt: Checkpoint) -> None:
    manifest = {
        "mode": ckpt.mode,
        "seed": ckpt.seed,
        "config": ckpt.config,
        "config_hash": config_hash(ckpt.config),
        "dims": ckpt.dims.to_json(),
        "schema": ckpt.schema.to_json(),
        "preprocessor": ckpt.preprocessor.to_json() if ckpt.preprocessor else None,
        "graph_nodes": list(ckpt.graph_spec.node_names) if ckpt.graph_spec else None,
        "provider_tag": ckpt.provider_tag,
    }
    tensors = params_to_tensors(ckpt.params)
    if ckpt.graph_spec is not None:
        tensors["graph.weights"] = ckpt.graph_spec.edge_weights
    save_checkpoint(path, manifest, tensors)


def load_experiment_checkpoint(path) -> Checkpoint:
    manifest, tensors = load_checkpoint(path)
    schema = TableSchema.from_json(manifest["schema"])
    dims = ModelDims.from_json(manifest["dims"])
    mode = manifest["mode"]
    graph_spec = None
    prep = None
    if manifest["graph_nodes"] is not None:
        names = tuple(manifest["graph_nodes"])
        w = tensors.pop("graph.weights")
        graph_spec = ColumnGraphSpec(np.ones_like(w), w, names)
    if manifest["preprocessor"] is not None:
        prep = Preprocessor.from_json(manifest["preprocessor"], schema)
    params = tensors_to_params(tensors, dims, graph_branch=mode != TEXT_ONLY)
    return Checkpoint(mode=mode, seed=manifest["seed"], config=manifest["config"],
                      dims=dims, params=params, schema=schema, preprocessor=prep,
                      graph_spec=graph_spec, provider_tag=manifest["provider_tag"])


# ---- gradient check suite ---------------------------------------------------

def gradient_check_report(seed: int = 0, epsilon: float = 1e-5) -> dict[str, float]:
    """Max relative error for every primitive and for the full joint loss on
    a small synthetic batch; used by tests and the gradcheck command."""
    from .embed import hash_embed
    rng = np.random.default_rng(seed)
    report: dict[str, float] = {}

    def check(name, f, params):
        report[name] = ad.grad_check(f, params, epsilon)

    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4, 2))
    c = rng.normal(size=(3, 4))
    row = rng.normal(size=(1, 4))
    one = rng.normal(size=(1, 1))

    check("matmul", lambda t, p: ad.mean(ad.matmul(p["a"], p["b"])), {"a": a, "b": b})
    check("add", lambda t, p: ad.mean(ad.add(p["a"], p["c"])), {"a": a, "c": c})
    check("add_row_broadcast", lambda t, p: ad.mean(ad.add(p["a"], p["row"])), {"a": a, "row": row})
    check("add_scalar_broadcast", lambda t, p: ad.mean(ad.add(p["a"], p["one"])), {"a": a, "one": one})
    check("scale", lambda t, p: ad.mean(ad.scale(p["a"], -1.7)), {"a": a})
    check("relu", lambda t, p: ad.mean(ad.relu(p["a"])), {"a": a})
    check("multiply", lambda t, p: ad.mean(ad.multiply(p["a"], p["c"])), {"a": a, "c": c})
    check("multiply_scalar", lambda t, p: ad.mean(ad.multiply(p["a"], p["one"])), {"a": a, "one": one})
    check("row_l2_normalize", lambda t, p: ad.mean(ad.row_l2_normalize(p["a"])), {"a": a + 3.0})
    check("log_softmax", lambda t, p: ad.mean(ad.log_softmax(p["a"])), {"a": a})
    check("mean", lambda t, p: ad.mean(p["a"]), {"a": a})
    check("sum", lambda t, p: ad.total_sum(p["a"]), {"a": a})
    check("transpose", lambda t, p: ad.mean(ad.matmul(ad.transpose(p["a"]), p["c"])), {"a": a, "c": c})

    idx = np.array([1, 0, 3])
    check("gather_rows", lambda t, p: ad.mean(ad.gather_rows(p["a"], idx)), {"a": a})

    # stop_gradient cannot be finite-differenced through (the defined training
    # gradient treats the stopped branch as constant), so its entry is the
    # worst deviation from the exact expectations: zero flow through the
    # stopped path, untouched flow around it.
    tape = ad.Tape()
    sg_in = tape.param("a", a)
    out = ad.mean(ad.add(sg_in, ad.stop_gradient(ad.scale(sg_in, 2.0))))
    tape.backward(out)
    expected = np.full_like(a, 1.0 / a.size)
    report["stop_gradient"] = float(np.abs(sg_in.grad - expected).max())

    mix = np.abs(rng.normal(size=(3, 3)))
    np.fill_diagonal(mix, 0.0)
    x6 = rng.normal(size=(6, 5))
    check("block_left_matmul", lambda t, p: ad.mean(ad.block_left_matmul(mix, p["x"], 3)), {"x": x6})
    check("block_mean", lambda t, p: ad.mean(ad.block_mean(p["x"], 3)), {"x": x6})
    vals = rng.normal(size=(4, 3))
    emb = rng.normal(size=(3, 5))
    check("expand_node_features",
          lambda t, p: ad.mean(ad.expand_node_features(vals, p["emb"])), {"emb": emb})

    # full joint objective, graph branch vs hash embeddings of 6 serialized rows
    from .losses import normalized_rows
    rows, cols = 6, 3
    hidden, embed_dim, clf_hidden, classes, layers = 6, 16, 5, 2, 2
    node_vals = rng.uniform(0.2, 1.0, size=(rows, cols))
    w = np.abs(rng.uniform(size=(cols, cols)))
    w = np.clip((w + w.T) / 2.0, 0.0, 1.0)
    np.fill_diagonal(w, 1.0)
    spec = ColumnGraphSpec(np.ones((cols, cols)), w, tuple(f"c{i}" for i in range(cols)))
    texts = [f"The c0 is {i}. The c1 is {i * i}. The c2 is x{i}." for i in range(rows)]
    g_text = np.stack([hash_embed(t, embed_dim) for t in texts]).astype(np.float64)
    labels = np.array([0, 1, 0, 1, 1, 0])
    dims = ModelDims(num_nodes=cols, num_classes=classes, embed_dim=embed_dim,
                     hidden=hidden, clf_hidden=clf_hidden, num_layers=layers)
    params = dict(init_params(seed, dims).named_arrays())
    # random offsets keep relu pre-activations away from kinks and paths alive
    for arr in params.values():
        arr += rng.uniform(0.02, 0.25, size=arr.shape) * np.where(rng.uniform(size=arr.shape) < 0.5, -1, 1)

    def base_projection() -> np.ndarray:
        tape = ad.Tape()
        bound = tensors_to_params({k: tape.param(k, v) for k, v in params.items()},
                                  dims, graph_branch=True)
        _, g = encode_graph(tape, node_vals, spec, bound)
        return g.data.copy()

    # the stopped operands are per-step constants; capture them at the base
    # parameters so finite differences see the same function backward sees
    frozen_graph = normalized_rows(base_projection())
    frozen_text = normalized_rows(g_text)

    def full_loss(tape: ad.Tape, p: dict[str, ad.Value]) -> ad.Value:
        bound = tensors_to_params(p, dims, graph_branch=True)
        _, g = encode_graph(tape, node_vals, spec, bound)
        logits = classify(tape, g, bound.clf)
        l_sup = supervised_loss(tape, logits, labels)
        l_cons = consistency_loss(tape, tape.leaf(g_text), g, tau=0.1,
                                  frozen_text=frozen_text, frozen_graph=frozen_graph)
        return joint_loss(l_sup, l_cons, lam=0.2)

    report["full_joint_loss"] = ad.grad_check(full_loss, params, epsilon)
    return report
