"""Versioned model files with lossless numeric round trips.

Every trained controller serializes to a small JSON document:

    {"format_version": 1,
     "kind": "mlp" | "hdt" | "sdt" | "km",
     "env": {"state_dim": d, "action_count": K},
     "payload": {...kind-specific...}}

Numbers are stored as decimal text whose shortest repr round-trips
exactly, so parse(serialize(m)) reproduces every float bit for bit and
the files stay diffable.  Parsing validates the structure before
constructing anything; a truncated or inconsistent file never yields a
partial model.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .dqn import QPolicy
from .hard_tree import HardTree, TreeNode
from .kernel_machine import BinaryKernelMachine, KernelMachine
from .nn import Mlp
from .soft_tree import SoftTree

FORMAT_VERSION = 1
MODEL_KINDS = ("mlp", "hdt", "sdt", "km")


class ModelParseError(ValueError):
    """A model file that cannot be decoded into a controller."""


def _get(mapping, key: str, path: str):
    if not isinstance(mapping, dict):
        raise ModelParseError(f"expected an object at '{path}'")
    if key not in mapping:
        raise ModelParseError(f"missing field '{path}.{key}'")
    return mapping[key]


def _array(mapping, key: str, path: str, dtype=float) -> np.ndarray:
    try:
        return np.asarray(_get(mapping, key, path), dtype=dtype)
    except (TypeError, ValueError) as exc:
        raise ModelParseError(f"field '{path}.{key}' is not a numeric array: {exc}") from exc


# ---------------------------------------------------------------------------
# per-kind payload encoders


def _encode_mlp(model: QPolicy) -> tuple[dict, int, int]:
    payload = {
        "layer_sizes": list(model.net.layer_sizes),
        "weights": [w.tolist() for w in model.net.weights],
        "biases": [b.tolist() for b in model.net.biases],
        "input_shift": model.input_shift.tolist(),
        "input_scale": model.input_scale.tolist(),
        "label": model.label,
    }
    return payload, model.net.layer_sizes[0], model.net.layer_sizes[-1]


def _decode_mlp(payload: dict) -> QPolicy:
    p = "payload"
    sizes = tuple(int(s) for s in _get(payload, "layer_sizes", p))
    weights = [_array({"w": w}, "w", f"{p}.weights[{i}]")
               for i, w in enumerate(_get(payload, "weights", p))]
    biases = [_array({"b": b}, "b", f"{p}.biases[{i}]")
              for i, b in enumerate(_get(payload, "biases", p))]
    if len(weights) != len(sizes) - 1 or len(biases) != len(sizes) - 1:
        raise ModelParseError("payload.weights/biases do not match layer_sizes")
    for i, (w, b) in enumerate(zip(weights, biases)):
        if w.shape != (sizes[i + 1], sizes[i]) or b.shape != (sizes[i + 1],):
            raise ModelParseError(f"payload.weights[{i}] has shape {w.shape}, "
                                  f"expected {(sizes[i + 1], sizes[i])}")
    return QPolicy(
        net=Mlp(sizes, weights, biases),
        input_shift=_array(payload, "input_shift", p),
        input_scale=_array(payload, "input_scale", p),
        label=str(_get(payload, "label", p)),
    )


def _encode_hdt(model: HardTree) -> tuple[dict, int, int]:
    payload = {
        "max_depth": model.max_depth,
        "label": model.label,
        "nodes": [
            {
                "node_id": n.node_id,
                "counts": n.counts.tolist(),
                "klass": n.klass,
                "feature": n.feature,
                "threshold": n.threshold,
                "left": n.left,
                "right": n.right,
            }
            for n in model.nodes
        ],
    }
    return payload, model.n_features, model.n_classes


def _decode_hdt(payload: dict, state_dim: int, action_count: int) -> HardTree:
    nodes = []
    raw_nodes = _get(payload, "nodes", "payload")
    if not raw_nodes:
        raise ModelParseError("payload.nodes must be nonempty")
    for i, raw in enumerate(raw_nodes):
        p = f"payload.nodes[{i}]"
        node = TreeNode(
            node_id=int(_get(raw, "node_id", p)),
            counts=_array(raw, "counts", p, dtype=int),
            klass=int(_get(raw, "klass", p)),
            feature=int(_get(raw, "feature", p)),
            threshold=float(_get(raw, "threshold", p)),
            left=int(_get(raw, "left", p)),
            right=int(_get(raw, "right", p)),
        )
        if node.counts.shape != (action_count,):
            raise ModelParseError(f"{p}.counts length must equal env.action_count")
        if not 0 <= node.klass < action_count:
            raise ModelParseError(f"{p}.klass out of range")
        if not node.is_leaf:
            if not 0 <= node.feature < state_dim:
                raise ModelParseError(f"{p}.feature out of range for env.state_dim")
            if not (0 <= node.left < len(raw_nodes) and 0 <= node.right < len(raw_nodes)):
                raise ModelParseError(f"{p} child reference out of range")
        nodes.append(node)
    return HardTree(
        n_features=state_dim,
        n_classes=action_count,
        max_depth=int(_get(payload, "max_depth", "payload")),
        nodes=nodes,
        label=str(_get(payload, "label", "payload")),
    )


def _encode_sdt(model: SoftTree) -> tuple[dict, int, int]:
    payload = {
        "depth": model.depth,
        "inner_w": model.inner_w.tolist(),
        "inner_b": model.inner_b.tolist(),
        "leaf_logits": model.leaf_logits.tolist(),
        "beta": model.beta.tolist(),
        "feature_shift": model.feature_shift.tolist(),
        "feature_scale": model.feature_scale.tolist(),
        "balance_weight": model.balance_weight,
        "inference": model.inference,
        "label": model.label,
    }
    return payload, model.n_features, model.n_classes


def _decode_sdt(payload: dict, state_dim: int, action_count: int) -> SoftTree:
    p = "payload"
    depth = int(_get(payload, "depth", p))
    if depth < 1:
        raise ModelParseError("payload.depth must be >= 1")
    inner, leaves = 2**depth - 1, 2**depth
    tree = SoftTree(
        depth=depth,
        n_features=state_dim,
        n_classes=action_count,
        inner_w=_array(payload, "inner_w", p),
        inner_b=_array(payload, "inner_b", p),
        leaf_logits=_array(payload, "leaf_logits", p),
        beta=_array(payload, "beta", p),
        feature_shift=_array(payload, "feature_shift", p),
        feature_scale=_array(payload, "feature_scale", p),
        balance_weight=float(_get(payload, "balance_weight", p)),
        inference=str(_get(payload, "inference", p)),
        label=str(_get(payload, "label", p)),
    )
    if tree.inner_w.shape != (inner, state_dim):
        raise ModelParseError(f"payload.inner_w has shape {tree.inner_w.shape}, "
                              f"expected {(inner, state_dim)}")
    if tree.inner_b.shape != (inner,):
        raise ModelParseError("payload.inner_b length must be 2^depth - 1")
    if tree.leaf_logits.shape != (leaves, action_count):
        raise ModelParseError("payload.leaf_logits must be (2^depth, env.action_count)")
    if tree.beta.shape != (1,):
        raise ModelParseError("payload.beta must hold exactly one value")
    if tree.inference not in ("hard", "soft"):
        raise ModelParseError("payload.inference must be 'hard' or 'soft'")
    return tree


def _encode_km(model: KernelMachine) -> tuple[dict, int, int]:
    payload = {
        "n_train": model.n_train,
        "gamma": model.gamma,
        "c": model.c,
        "feature_shift": model.feature_shift.tolist(),
        "feature_scale": model.feature_scale.tolist(),
        "label": model.label,
        "machines": [
            {
                "neg_class": lo,
                "pos_class": hi,
                "support_vectors": m.support_vectors.tolist(),
                "dual_coef": m.dual_coef.tolist(),
                "intercept": m.intercept,
                "gamma": m.gamma,
                "support_indices": m.support_indices.tolist(),
                "converged": m.converged,
            }
            for lo, hi, m in model.machines
        ],
    }
    return payload, model.feature_shift.size, model.n_classes


def _decode_km(payload: dict, state_dim: int, action_count: int) -> KernelMachine:
    machines = []
    for i, raw in enumerate(_get(payload, "machines", "payload")):
        p = f"payload.machines[{i}]"
        svs = _array(raw, "support_vectors", p).reshape(-1, state_dim)
        machine = BinaryKernelMachine(
            support_vectors=svs,
            dual_coef=_array(raw, "dual_coef", p),
            intercept=float(_get(raw, "intercept", p)),
            gamma=float(_get(raw, "gamma", p)),
            support_indices=_array(raw, "support_indices", p, dtype=int),
            converged=bool(_get(raw, "converged", p)),
        )
        if machine.dual_coef.shape != (svs.shape[0],):
            raise ModelParseError(f"{p}.dual_coef length must match support_vectors")
        lo, hi = int(_get(raw, "neg_class", p)), int(_get(raw, "pos_class", p))
        if not 0 <= lo < hi < action_count:
            raise ModelParseError(f"{p} class pair ({lo}, {hi}) out of range")
        machines.append((lo, hi, machine))
    return KernelMachine(
        n_classes=action_count,
        n_train=int(_get(payload, "n_train", "payload")),
        gamma=float(_get(payload, "gamma", "payload")),
        c=float(_get(payload, "c", "payload")),
        machines=machines,
        feature_shift=_array(payload, "feature_shift", "payload"),
        feature_scale=_array(payload, "feature_scale", "payload"),
        label=str(_get(payload, "label", "payload")),
    )


# ---------------------------------------------------------------------------
# public surface

_ENCODERS = {"mlp": _encode_mlp, "hdt": _encode_hdt, "sdt": _encode_sdt, "km": _encode_km}


def serialize_model(model) -> bytes:
    """Render a trained controller as a versioned JSON document."""
    kind = getattr(model, "kind", None)
    if kind not in _ENCODERS:
        raise ValueError(f"cannot serialize model of kind {kind!r}")
    payload, state_dim, action_count = _ENCODERS[kind](model)
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "env": {"state_dim": int(state_dim), "action_count": int(action_count)},
        "payload": payload,
    }
    return (json.dumps(doc, indent=1) + "\n").encode("utf-8")


def parse_model(data: bytes | str):
    """Decode a model document, validating structure before construction."""
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ModelParseError(f"model file is not valid JSON: {exc}") from exc
    version = _get(doc, "format_version", "$")
    if version != FORMAT_VERSION:
        raise ModelParseError(f"unsupported format_version {version!r}, expected {FORMAT_VERSION}")
    kind = _get(doc, "kind", "$")
    env = _get(doc, "env", "$")
    state_dim = int(_get(env, "state_dim", "$.env"))
    action_count = int(_get(env, "action_count", "$.env"))
    if state_dim < 1 or action_count < 2:
        raise ModelParseError("$.env must declare state_dim >= 1 and action_count >= 2")
    payload = _get(doc, "payload", "$")
    if kind == "mlp":
        model = _decode_mlp(payload)
        if model.net.layer_sizes[0] != state_dim or model.net.layer_sizes[-1] != action_count:
            raise ModelParseError("payload.layer_sizes disagree with $.env dimensions")
        return model
    if kind == "hdt":
        return _decode_hdt(payload, state_dim, action_count)
    if kind == "sdt":
        return _decode_sdt(payload, state_dim, action_count)
    if kind == "km":
        return _decode_km(payload, state_dim, action_count)
    raise ModelParseError(f"unknown model kind {kind!r}, expected one of {MODEL_KINDS}")


def save_model(model, path) -> Path:
    """Serialize ``model`` to ``path`` and return the path written."""
    out = Path(path)
    out.write_bytes(serialize_model(model))
    return out


def load_model(path, env_spec=None):
    """Read a model file; optionally check it fits a target environment."""
    raw = Path(path).read_bytes()
    model = parse_model(raw)
    if env_spec is not None:
        doc = json.loads(raw)
        if doc["env"]["state_dim"] != env_spec.state_dim:
            raise ValueError(
                f"model at {path} expects state_dim {doc['env']['state_dim']}, "
                f"environment {env_spec.name!r} has {env_spec.state_dim}"
            )
        if doc["env"]["action_count"] != env_spec.action_count:
            raise ValueError(
                f"model at {path} expects action_count {doc['env']['action_count']}, "
                f"environment {env_spec.name!r} has {env_spec.action_count}"
            )
    return model
