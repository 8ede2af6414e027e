"""Compile a parsed bundle into an executable plan and run forward passes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .bundle import LayerSpec, ModelBundle, WeightStore
from .errors import MissingWeight, ShapeMismatch, UnboundWeights, UnsupportedLayer

__all__ = ["ExecutionPlan", "Node", "build_plan", "run", "summarize"]

_SUPPORTED_ACTIVATIONS = {"linear", "relu", "relu6", "softmax"}


@dataclass(frozen=True)
class Node:
    kind: str
    name: str
    inputs: tuple[int, ...]
    params: dict = field(default_factory=dict)
    out_shape: tuple[int, ...] = ()
    param_count: int = 0


@dataclass(frozen=True)
class ExecutionPlan:
    nodes: tuple[Node, ...]          # nodes[0] is the implicit image input
    input_size: int
    output_labels: tuple[str, ...]
    softmax_appended: bool = False


def _flatten(spec: LayerSpec):
    """Yield (leaf LayerSpec, input names) in topological order.

    Nested sub-models dissolve into their children; a nested model's name
    aliases to its last inner layer, its inner InputLayer aliases to
    whatever fed the sub-model.
    """
    order: list[tuple[LayerSpec, tuple[str, ...]]] = []
    alias: dict[str, str] = {}

    def resolve(name: str) -> str:
        while name in alias:
            name = alias[name]
        return name

    def walk(layers, prev: str | None) -> str | None:
        for layer in layers:
            if layer.class_name == "InputLayer":
                if prev is None:
                    alias[layer.name] = "<input>"
                else:
                    alias[layer.name] = prev
                prev = layer.name
                continue
            if layer.inbound:
                feeds = tuple(resolve(n) for n in layer.inbound)
            elif prev is not None:
                feeds = (resolve(prev),)
            else:
                feeds = ("<input>",)
            if layer.inner_layers is not None:
                last = walk(layer.inner_layers, feeds[0])
                alias[layer.name] = last if last is not None else feeds[0]
            else:
                order.append((layer, feeds))
            prev = layer.name
        return resolve(prev) if prev is not None else None

    if spec.inner_layers is None:
        raise UnsupportedLayer(spec.class_name)
    walk(spec.inner_layers, None)
    return order


class _Binder:
    """Resolves manifest weight names per layer and tracks consumption."""

    def __init__(self, store: WeightStore):
        self.store = store
        self.unused = set(store.names())

    def take(self, layer_name: str, suffix: str) -> np.ndarray:
        exact = f"{layer_name}/{suffix}"
        candidates = [n for n in self.store.names()
                      if n == exact
                      or (n.split("/")[-1] == suffix and layer_name in n.split("/"))]
        if not candidates:
            raise MissingWeight(exact)
        name = exact if exact in candidates else sorted(candidates, key=len)[0]
        self.unused.discard(name)
        return self.store[name]


def _pair(v, what: str) -> tuple[int, int]:
    if isinstance(v, int):
        return (v, v)
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return (int(v[0]), int(v[1]))
    raise ShapeMismatch(f"bad {what}: {v!r}")


def _norm_padding2d(v) -> tuple[tuple[int, int], tuple[int, int]]:
    if isinstance(v, int):
        return ((v, v), (v, v))
    if isinstance(v, (list, tuple)) and len(v) == 2:
        a, b = v
        if isinstance(a, int):
            return ((a, a), (b, b))
        return ((int(a[0]), int(a[1])), (int(b[0]), int(b[1])))
    raise ShapeMismatch(f"bad padding spec: {v!r}")


def _conv_out(size: int, k: int, s: int, padding: str) -> int:
    if padding == "same":
        return -(-size // s)
    return (size - k) // s + 1


def _activation(cfg) -> str:
    act = cfg.get("activation") or "linear"
    if act not in _SUPPORTED_ACTIVATIONS:
        raise UnsupportedLayer(f"activation:{act}")
    return act


def build_plan(bundle: ModelBundle) -> ExecutionPlan:
    size = bundle.metadata.image_size
    binder = _Binder(bundle.weights)
    flat = _flatten(bundle.topology)

    nodes: list[Node] = [Node("input", "<input>", (), {}, (size, size, 3))]
    index: dict[str, int] = {"<input>": 0}
    softmax_appended = False

    for layer, feeds in flat:
        try:
            in_idx = tuple(index[f] for f in feeds)
        except KeyError as exc:
            raise ShapeMismatch(f"layer {layer.name!r}: unknown input {exc}") from exc
        in_shapes = [nodes[i].out_shape for i in in_idx]
        shape = in_shapes[0]
        cn, cfg = layer.class_name, layer.config
        params: dict = {}
        pcount = 0

        if cn == "Conv2D":
            kernel = binder.take(layer.name, "kernel")
            bias = binder.take(layer.name, "bias") if cfg.get("use_bias", True) else None
            strides = _pair(cfg.get("strides", 1), "strides")
            padding = cfg.get("padding", "valid")
            if len(shape) != 3 or kernel.shape[2] != shape[2]:
                raise ShapeMismatch(
                    f"{layer.name}: kernel in_c {kernel.shape[2]} vs input {shape}"
                )
            cp = T.ConvParams(kernel=kernel, bias=bias, strides=strides, padding=padding)
            params = {"conv": cp, "activation": _activation(cfg)}
            shape = (_conv_out(shape[0], kernel.shape[0], strides[0], padding),
                     _conv_out(shape[1], kernel.shape[1], strides[1], padding),
                     kernel.shape[3])
            pcount = kernel.size + (bias.size if bias is not None else 0)
            kind = "conv2d"
        elif cn == "DepthwiseConv2D":
            kernel = binder.take(layer.name, "depthwise_kernel")
            bias = binder.take(layer.name, "bias") if cfg.get("use_bias", True) else None
            strides = _pair(cfg.get("strides", 1), "strides")
            padding = cfg.get("padding", "valid")
            if len(shape) != 3 or kernel.shape[2] != shape[2]:
                raise ShapeMismatch(
                    f"{layer.name}: depthwise in_c {kernel.shape[2]} vs input {shape}"
                )
            cp = T.ConvParams(kernel=kernel, bias=bias, strides=strides, padding=padding)
            params = {"conv": cp, "activation": _activation(cfg)}
            shape = (_conv_out(shape[0], kernel.shape[0], strides[0], padding),
                     _conv_out(shape[1], kernel.shape[1], strides[1], padding),
                     kernel.shape[2] * kernel.shape[3])
            pcount = kernel.size + (bias.size if bias is not None else 0)
            kind = "depthwise_conv2d"
        elif cn == "BatchNormalization":
            c = shape[-1]
            gamma = (binder.take(layer.name, "gamma")
                     if cfg.get("scale", True) else np.ones(c, np.float32))
            beta = (binder.take(layer.name, "beta")
                    if cfg.get("center", True) else np.zeros(c, np.float32))
            mean = binder.take(layer.name, "moving_mean")
            var = binder.take(layer.name, "moving_variance")
            params = {"gamma": gamma, "beta": beta, "mean": mean, "variance": var,
                      "epsilon": float(cfg.get("epsilon", 1e-3))}
            pcount = gamma.size + beta.size + mean.size + var.size
            kind = "batch_norm"
        elif cn == "Activation":
            act = _activation(cfg)
            params = {"activation": act}
            kind = "activation"
        elif cn == "ReLU":
            mv = cfg.get("max_value")
            params = {"max_value": float(mv) if mv is not None else None}
            kind = "relu"
        elif cn == "ZeroPadding2D":
            pads = _norm_padding2d(cfg.get("padding", 1))
            params = {"pads": pads}
            shape = (shape[0] + pads[0][0] + pads[0][1],
                     shape[1] + pads[1][0] + pads[1][1], shape[2])
            kind = "zero_pad2d"
        elif cn == "Add":
            if len(in_shapes) < 2:
                raise ShapeMismatch(f"{layer.name}: Add needs >=2 inputs")
            if any(s != shape for s in in_shapes):
                raise ShapeMismatch(f"{layer.name}: Add input shapes differ: {in_shapes}")
            kind = "add"
        elif cn in ("MaxPooling2D", "AveragePooling2D"):
            window = _pair(cfg.get("pool_size", 2), "pool_size")
            strides = _pair(cfg.get("strides") or window, "strides")
            padding = cfg.get("padding", "valid")
            params = {"kind": "max" if cn == "MaxPooling2D" else "average",
                      "window": window, "strides": strides, "padding": padding}
            shape = (_conv_out(shape[0], window[0], strides[0], padding),
                     _conv_out(shape[1], window[1], strides[1], padding), shape[2])
            kind = "pool2d"
        elif cn == "GlobalAveragePooling2D":
            params = {"kind": "global_average"}
            shape = (shape[2],)
            kind = "pool2d"
        elif cn == "Flatten":
            shape = (int(np.prod(shape)),)
            kind = "flatten"
        elif cn == "Reshape":
            target = tuple(int(d) for d in cfg.get("target_shape", ()))
            if int(np.prod(target)) != int(np.prod(shape)):
                raise ShapeMismatch(f"{layer.name}: cannot reshape {shape} to {target}")
            params = {"shape": target}
            shape = target
            kind = "reshape"
        elif cn == "Dense":
            kernel = binder.take(layer.name, "kernel")
            bias = binder.take(layer.name, "bias") if cfg.get("use_bias", True) else None
            n_in = int(np.prod(shape))
            if kernel.ndim != 2 or kernel.shape[0] != n_in:
                raise ShapeMismatch(
                    f"{layer.name}: dense kernel {kernel.shape} vs input {shape}"
                )
            params = {"kernel": kernel, "bias": bias, "activation": _activation(cfg)}
            shape = (kernel.shape[1],)
            pcount = kernel.size + (bias.size if bias is not None else 0)
            kind = "dense"
        elif cn == "Dropout":
            kind = "identity"
        else:
            raise UnsupportedLayer(cn)

        nodes.append(Node(kind, layer.name, in_idx, params, tuple(shape), pcount))
        index[layer.name] = len(nodes) - 1

    if binder.unused:
        raise UnboundWeights(binder.unused)

    last = nodes[-1]
    has_softmax = (
        (last.kind in ("dense", "conv2d", "activation")
         and last.params.get("activation") == "softmax")
    )
    if not has_softmax:
        nodes.append(Node("activation", "<appended_softmax>",
                          (len(nodes) - 1,), {"activation": "softmax"},
                          last.out_shape))
        softmax_appended = True
        last = nodes[-1]

    labels = bundle.metadata.labels
    if last.out_shape != (len(labels),):
        raise ShapeMismatch(
            f"final output shape {last.out_shape} vs {len(labels)} labels"
        )
    return ExecutionPlan(tuple(nodes), size, tuple(labels), softmax_appended)


def _apply_activation(x: np.ndarray, act: str) -> np.ndarray:
    if act == "linear":
        return x
    if act == "relu":
        return T.relu(x)
    if act == "relu6":
        return T.relu(x, max_value=6.0)
    if act == "softmax":
        return T.softmax(x)
    raise UnsupportedLayer(f"activation:{act}")


def run(plan: ExecutionPlan, image: np.ndarray) -> np.ndarray:
    """Forward pass: normalized (size, size, 3) image -> per-class probabilities."""
    x = T.as_f32(image)
    expected = (plan.input_size, plan.input_size, 3)
    if x.shape != expected:
        raise ShapeMismatch(f"input shape {x.shape}, plan expects {expected}")
    # per-run scratch: one output slot per node, freed with the call frame
    outputs: list[np.ndarray | None] = [None] * len(plan.nodes)
    outputs[0] = x
    for i, node in enumerate(plan.nodes[1:], start=1):
        ins = [outputs[j] for j in node.inputs]
        k, p = node.kind, node.params
        if k == "conv2d":
            y = _apply_activation(T.conv2d(ins[0], p["conv"]), p["activation"])
        elif k == "depthwise_conv2d":
            y = _apply_activation(T.depthwise_conv2d(ins[0], p["conv"]), p["activation"])
        elif k == "batch_norm":
            y = T.batch_norm(ins[0], p["gamma"], p["beta"], p["mean"],
                             p["variance"], p["epsilon"])
        elif k == "activation":
            y = _apply_activation(ins[0], p["activation"])
        elif k == "relu":
            y = T.relu(ins[0], max_value=p["max_value"])
        elif k == "zero_pad2d":
            y = T.zero_pad2d(ins[0], p["pads"])
        elif k == "add":
            y = ins[0]
            for other in ins[1:]:
                y = T.add(y, other)
        elif k == "pool2d":
            if p["kind"] == "global_average":
                y = T.pool2d(ins[0], "global_average")
            else:
                y = T.pool2d(ins[0], p["kind"], p["window"], p["strides"], p["padding"])
        elif k == "flatten":
            y = T.flatten(ins[0])
        elif k == "reshape":
            y = T.reshape(ins[0], p["shape"])
        elif k == "dense":
            y = T.dense(ins[0], p["kernel"], p["bias"], p["activation"])
        elif k == "identity":
            y = ins[0]
        else:
            raise UnsupportedLayer(k)
        outputs[i] = y
    return outputs[-1]


def _describe(node: Node) -> str:
    k, p = node.kind, node.params
    if k in ("conv2d", "depthwise_conv2d"):
        cp = p["conv"]
        desc = (f"{k}(k={cp.kernel.shape[0]}x{cp.kernel.shape[1]}, "
                f"s={cp.strides[0]}x{cp.strides[1]}, {cp.padding}")
        if p["activation"] != "linear":
            desc += f", {p['activation']}"
        return desc + ")"
    if k == "dense":
        desc = f"dense({p['kernel'].shape[1]}"
        if p["activation"] != "linear":
            desc += f", {p['activation']}"
        return desc + ")"
    if k == "activation":
        return f"activation({p['activation']})"
    if k == "pool2d":
        return f"pool2d({p['kind']})"
    return k


def summarize(plan: ExecutionPlan) -> str:
    lines = []
    total = 0
    for node in plan.nodes:
        shape = "x".join(str(d) for d in node.out_shape)
        line = f"{_describe(node):<44} -> {shape}"
        if node.param_count:
            line += f"  params={node.param_count}"
            total += node.param_count
        lines.append(line)
    lines.append(f"total params: {total}")
    lines.append(f"classes: {', '.join(plan.output_labels)}")
    return "\n".join(lines) + "\n"
