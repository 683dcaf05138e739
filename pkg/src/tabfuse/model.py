"""Graph encoder, projection head and classifier.

Message passing over the fully-connected column graph, GIN flavored:

    h0_v = node_value[v] * column_embeddings[v]
    h(k)_v = relu(MLP_k((1 + eps_k) * h(k-1)_v + sum_{u != v} W[u][v] * h(k-1)_u))

with a two-layer relu MLP per step, mean readout over nodes, and an affine
projection into the text-embedding space. Inference consumes this branch
only; the classifier is a one-hidden-layer relu MLP over the projection.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .graph import ColumnGraphSpec

CKPT_MAGIC = b"TGCK"
CKPT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sIQ")


@dataclass
class ModelDims:
    num_nodes: int
    num_classes: int
    embed_dim: int
    hidden: int = 64
    clf_hidden: int = 64
    num_layers: int = 3

    def to_json(self) -> dict:
        return {"num_nodes": self.num_nodes, "num_classes": self.num_classes,
                "embed_dim": self.embed_dim, "hidden": self.hidden,
                "clf_hidden": self.clf_hidden, "num_layers": self.num_layers}

    @staticmethod
    def from_json(obj: dict) -> "ModelDims":
        return ModelDims(**obj)


@dataclass
class LayerParams:
    mlp_w1: np.ndarray
    mlp_b1: np.ndarray
    mlp_w2: np.ndarray
    mlp_b2: np.ndarray
    epsilon: np.ndarray  # (1, 1), trainable self-loop gain


@dataclass
class GnnParams:
    column_embeddings: np.ndarray  # m' x h
    layers: list
    readout: str = "mean"


@dataclass
class ProjectionParams:
    weight: np.ndarray  # h x d
    bias: np.ndarray  # 1 x d


@dataclass
class ClassifierParams:
    w1: np.ndarray  # in x clf_hidden
    b1: np.ndarray
    w2: np.ndarray  # clf_hidden x C
    b2: np.ndarray


@dataclass
class ModelParams:
    gnn: GnnParams | None
    proj: ProjectionParams | None
    clf: ClassifierParams

    def named_arrays(self):
        """(name, array) pairs in a fixed order; the optimizer and the
        checkpoint writer both key off these names."""
        if self.gnn is not None:
            yield "gnn.column_embeddings", self.gnn.column_embeddings
            for k, layer in enumerate(self.gnn.layers):
                yield f"gnn.layers.{k}.mlp_w1", layer.mlp_w1
                yield f"gnn.layers.{k}.mlp_b1", layer.mlp_b1
                yield f"gnn.layers.{k}.mlp_w2", layer.mlp_w2
                yield f"gnn.layers.{k}.mlp_b2", layer.mlp_b2
                yield f"gnn.layers.{k}.epsilon", layer.epsilon
        if self.proj is not None:
            yield "proj.weight", self.proj.weight
            yield "proj.bias", self.proj.bias
        yield "clf.w1", self.clf.w1
        yield "clf.b1", self.clf.b1
        yield "clf.w2", self.clf.w2
        yield "clf.b2", self.clf.b2

    def copy(self) -> "ModelParams":
        gnn = None
        if self.gnn is not None:
            gnn = GnnParams(self.gnn.column_embeddings.copy(),
                            [LayerParams(l.mlp_w1.copy(), l.mlp_b1.copy(), l.mlp_w2.copy(),
                                         l.mlp_b2.copy(), l.epsilon.copy())
                             for l in self.gnn.layers],
                            self.gnn.readout)
        proj = None
        if self.proj is not None:
            proj = ProjectionParams(self.proj.weight.copy(), self.proj.bias.copy())
        clf = ClassifierParams(self.clf.w1.copy(), self.clf.b1.copy(),
                               self.clf.w2.copy(), self.clf.b2.copy())
        return ModelParams(gnn, proj, clf)


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_params(seed: int, dims: ModelDims) -> ModelParams:
    """Uniform Xavier weights, zero biases, epsilon starts at 0.
    Deterministic function of (seed, dims)."""
    rng = np.random.default_rng(seed)
    h = dims.hidden
    gnn = GnnParams(
        column_embeddings=_xavier(rng, dims.num_nodes, h),
        layers=[LayerParams(_xavier(rng, h, h), np.zeros((1, h)),
                            _xavier(rng, h, h), np.zeros((1, h)),
                            np.zeros((1, 1)))
                for _ in range(dims.num_layers)],
    )
    proj = ProjectionParams(_xavier(rng, h, dims.embed_dim), np.zeros((1, dims.embed_dim)))
    clf = ClassifierParams(_xavier(rng, dims.embed_dim, dims.clf_hidden), np.zeros((1, dims.clf_hidden)),
                           _xavier(rng, dims.clf_hidden, dims.num_classes), np.zeros((1, dims.num_classes)))
    return ModelParams(gnn, proj, clf)


def init_text_params(seed: int, embed_dim: int, clf_hidden: int, num_classes: int) -> ModelParams:
    """Classifier-only parameters for the text-branch fallback."""
    rng = np.random.default_rng(seed)
    clf = ClassifierParams(_xavier(rng, embed_dim, clf_hidden), np.zeros((1, clf_hidden)),
                           _xavier(rng, clf_hidden, num_classes), np.zeros((1, num_classes)))
    return ModelParams(None, None, clf)


def bind_params(tape: ad.Tape, params: ModelParams) -> ModelParams:
    """Register every tensor on the tape; returns the same structure with
    Value leaves in place of arrays."""
    bound = {name: tape.param(name, arr) for name, arr in params.named_arrays()}
    gnn = None
    if params.gnn is not None:
        gnn = GnnParams(bound["gnn.column_embeddings"],
                        [LayerParams(bound[f"gnn.layers.{k}.mlp_w1"], bound[f"gnn.layers.{k}.mlp_b1"],
                                     bound[f"gnn.layers.{k}.mlp_w2"], bound[f"gnn.layers.{k}.mlp_b2"],
                                     bound[f"gnn.layers.{k}.epsilon"])
                         for k in range(len(params.gnn.layers))],
                        params.gnn.readout)
    proj = None
    if params.proj is not None:
        proj = ProjectionParams(bound["proj.weight"], bound["proj.bias"])
    clf = ClassifierParams(bound["clf.w1"], bound["clf.b1"], bound["clf.w2"], bound["clf.b2"])
    return ModelParams(gnn, proj, clf)


def encode_graph(tape: ad.Tape, node_values: np.ndarray, spec: ColumnGraphSpec,
                 bound: ModelParams) -> tuple[ad.Value, ad.Value]:
    """Run message passing for a batch of row graphs.

    node_values is (B, m'). Returns (q, g_graph): the (B, hidden) readout
    and its (B, embed_dim) projection.
    """
    gnn, proj = bound.gnn, bound.proj
    m = spec.num_nodes
    vals = np.asarray(node_values, dtype=np.float64)
    if vals.ndim == 1:
        vals = vals.reshape(1, -1)
    if vals.shape[1] != m:
        raise ValueError(f"batch has {vals.shape[1]} node values, spec has {m} nodes")
    # sum_u W[u][v] h_u, so the mixer row v is W[:, v]
    mix = spec.offdiagonal().T

    h = ad.expand_node_features(vals, gnn.column_embeddings)
    for layer in gnn.layers:
        neighbors = ad.block_left_matmul(mix, h, m)
        self_gain = ad.add(ad.multiply(h, layer.epsilon), h)  # (1 + eps) * h
        agg = ad.add(self_gain, neighbors)
        z = ad.relu(ad.add(ad.matmul(agg, layer.mlp_w1), layer.mlp_b1))
        z = ad.add(ad.matmul(z, layer.mlp_w2), layer.mlp_b2)
        h = ad.relu(z)
    q = ad.block_mean(h, m)
    g = ad.add(ad.matmul(q, proj.weight), proj.bias)
    return q, g


def classify(tape: ad.Tape, g: ad.Value, clf: ClassifierParams) -> ad.Value:
    hidden = ad.relu(ad.add(ad.matmul(g, clf.w1), clf.b1))
    return ad.add(ad.matmul(hidden, clf.w2), clf.b2)


# ---- checkpoint file -------------------------------------------------------
# magic, u32 version, u64 manifest length, manifest JSON (utf-8), then each
# tensor's float64 row-major bytes in manifest["tensors"] order.

def save_checkpoint(path, manifest: dict, tensors: dict[str, np.ndarray]) -> None:
    meta = dict(manifest)
    meta["format_version"] = CKPT_VERSION
    meta["tensors"] = [{"name": k, "rows": int(v.shape[0]), "cols": int(v.shape[1])}
                       for k, v in tensors.items()]
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_HEADER.pack(CKPT_MAGIC, CKPT_VERSION, len(blob)))
        fh.write(blob)
        for v in tensors.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _CKPT_HEADER.size:
        raise ValueError(f"{path}: truncated checkpoint")
    magic, version, mlen = _CKPT_HEADER.unpack_from(blob, 0)
    if magic != CKPT_MAGIC:
        raise ValueError(f"{path}: bad checkpoint magic {magic!r}")
    if version != CKPT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = _CKPT_HEADER.size
    manifest = json.loads(blob[off:off + mlen].decode("utf-8"))
    off += mlen
    tensors: dict[str, np.ndarray] = {}
    for spec in manifest["tensors"]:
        count = spec["rows"] * spec["cols"]
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=off).copy()
        tensors[spec["name"]] = arr.reshape(spec["rows"], spec["cols"])
        off += count * 8
    if off != len(blob):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    return manifest, tensors


def params_to_tensors(params: ModelParams) -> dict[str, np.ndarray]:
    return {name: np.asarray(arr, dtype=np.float64) for name, arr in params.named_arrays()}


def tensors_to_params(tensors: dict[str, np.ndarray], dims: ModelDims,
                      graph_branch: bool) -> ModelParams:
    clf = ClassifierParams(tensors["clf.w1"], tensors["clf.b1"], tensors["clf.w2"], tensors["clf.b2"])
    if not graph_branch:
        return ModelParams(None, None, clf)
    layers = [LayerParams(tensors[f"gnn.layers.{k}.mlp_w1"], tensors[f"gnn.layers.{k}.mlp_b1"],
                          tensors[f"gnn.layers.{k}.mlp_w2"], tensors[f"gnn.layers.{k}.mlp_b2"],
                          tensors[f"gnn.layers.{k}.epsilon"])
              for k in range(dims.num_layers)]
    gnn = GnnParams(tensors["gnn.column_embeddings"], layers)
    proj = ProjectionParams(tensors["proj.weight"], tensors["proj.bias"])
    return ModelParams(gnn, proj, clf)
