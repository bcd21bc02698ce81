"""Model serialization: versioned key=value header plus hex-float parameter blocks.

The format is line-based text, binary-safe because every float is written
with float.hex() (base-16, exact round trip).  First line is the magic
``uapkit-model v1``; header keys depend on the model kind; parameter blocks
start with ``[name ...]`` lines.  Round trips reproduce parameters exactly.
"""

from __future__ import annotations

import numpy as np

from .gbdt import Tree, TreeEnsembleModel
from .linear import LinearModel
from .mlp import MlpModel

MAGIC = "uapkit-model v1"


def _hex_row(a: np.ndarray) -> str:
    return " ".join(float(v).hex() for v in a)


def _parse_hex_row(line: str) -> np.ndarray:
    return np.array([float.fromhex(t) for t in line.split()], dtype=np.float64)


def save_model(model, path) -> None:
    """Write any supported model to the versioned text format."""
    lines = [MAGIC]
    if isinstance(model, LinearModel):
        lines.append(f"kind={model.kind}")
        lines.append(f"n_features={model.n_features}")
        lines.append(f"bias={float(model.bias).hex()}")
        lines.append(f"[weights n={model.n_features}]")
        lines.append(_hex_row(model.weights))
    elif isinstance(model, MlpModel):
        lines.append("kind=mlp")
        lines.append("layer_sizes=" + ",".join(str(s) for s in model.layer_sizes))
        lines.append(f"leaky_slope={float(model.leaky_slope).hex()}")
        lines.append(f"dropout_rate={float(model.dropout_rate).hex()}")
        for l, (W, b) in enumerate(zip(model.weights, model.biases)):
            lines.append(f"[weights {l} rows={W.shape[0]} cols={W.shape[1]}]")
            for r in range(W.shape[0]):
                lines.append(_hex_row(W[r]))
            lines.append(f"[biases {l} n={b.shape[0]}]")
            lines.append(_hex_row(b))
    elif isinstance(model, TreeEnsembleModel):
        lines.append("kind=gbdt")
        lines.append(f"n_features={model.n_features}")
        lines.append(f"n_trees={len(model.trees)}")
        lines.append(f"max_leaves={model.max_leaves}")
        lines.append(f"shrinkage={float(model.shrinkage).hex()}")
        lines.append(f"base_score={float(model.base_score).hex()}")
        for t, tree in enumerate(model.trees):
            lines.append(f"[tree {t} nodes={len(tree.feature)}]")
            for i in range(len(tree.feature)):
                lines.append(
                    f"{tree.feature[i]} {float(tree.threshold[i]).hex()} "
                    f"{tree.left[i]} {tree.right[i]} {float(tree.value[i]).hex()}"
                )
    else:
        raise ValueError(f"unsupported model type {type(model).__name__}")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines))
        f.write("\n")


def _read_header(lines, i):
    fields = {}
    while i < len(lines) and lines[i] and not lines[i].startswith("["):
        if "=" not in lines[i]:
            raise ValueError(f"model file line {i + 1}: expected key=value")
        k, v = lines[i].split("=", 1)
        fields[k] = v
        i += 1
    return fields, i


def load_model(path):
    """Read a model written by save_model; raises ValueError on version or format problems."""
    with open(path, "r", encoding="utf-8") as f:
        lines = [ln.rstrip("\n") for ln in f]
    if not lines or lines[0] != MAGIC:
        raise ValueError(f"not a model file or unsupported version (expected {MAGIC!r})")
    fields, i = _read_header(lines, 1)
    kind = fields.get("kind")
    if kind in ("logistic_regression", "linear_svm"):
        n = int(fields["n_features"])
        if not lines[i].startswith("[weights"):
            raise ValueError("missing weights block")
        w = _parse_hex_row(lines[i + 1])
        if w.shape[0] != n:
            raise ValueError("weights block does not match n_features")
        return LinearModel(kind, w, float.fromhex(fields["bias"]))
    if kind == "mlp":
        sizes = tuple(int(s) for s in fields["layer_sizes"].split(","))
        weights, biases = [], []
        for l in range(len(sizes) - 1):
            if not lines[i].startswith(f"[weights {l} "):
                raise ValueError(f"missing weights block for layer {l}")
            i += 1
            W = np.stack([_parse_hex_row(lines[i + r]) for r in range(sizes[l])])
            i += sizes[l]
            if not lines[i].startswith(f"[biases {l} "):
                raise ValueError(f"missing biases block for layer {l}")
            biases.append(_parse_hex_row(lines[i + 1]))
            weights.append(W)
            i += 2
        if W.shape != (sizes[-2], sizes[-1]):
            raise ValueError("weight shapes do not match layer_sizes")
        return MlpModel(
            sizes, weights, biases,
            leaky_slope=float.fromhex(fields["leaky_slope"]),
            dropout_rate=float.fromhex(fields["dropout_rate"]),
        )
    if kind == "gbdt":
        n_trees = int(fields["n_trees"])
        trees = []
        for t in range(n_trees):
            if not lines[i].startswith(f"[tree {t} "):
                raise ValueError(f"missing block for tree {t}")
            n_nodes = int(lines[i].rstrip("]").split("nodes=")[1])
            i += 1
            feat, thr, left, right, val = [], [], [], [], []
            for _ in range(n_nodes):
                parts = lines[i].split()
                feat.append(int(parts[0]))
                thr.append(float.fromhex(parts[1]))
                left.append(int(parts[2]))
                right.append(int(parts[3]))
                val.append(float.fromhex(parts[4]))
                i += 1
            trees.append(Tree(np.array(feat), np.array(thr, dtype=np.float64),
                              np.array(left), np.array(right), np.array(val, dtype=np.float64)))
        return TreeEnsembleModel(
            trees, float.fromhex(fields["base_score"]), float.fromhex(fields["shrinkage"]),
            int(fields["n_features"]), int(fields["max_leaves"]),
        )
    raise ValueError(f"unknown model kind {kind!r}")
