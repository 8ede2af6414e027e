"""Parsing of the three-file model export bundle.

A bundle is the trio a Teachable Machine image project publishes:
``metadata.json`` (labels, input size), ``model.json`` (layer topology plus
a weights manifest) and ``weights.bin`` (raw little-endian float32 values).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ByteLengthMismatch,
    DuplicateWeightName,
    InvalidValue,
    LabelCountMismatch,
    MalformedDocument,
    MissingField,
    UnsupportedDtype,
    UnsupportedQuantization,
)

__all__ = [
    "Metadata",
    "LayerSpec",
    "WeightsManifestEntry",
    "WeightStore",
    "ModelBundle",
    "parse_metadata",
    "parse_topology",
    "decode_weights",
    "encode_weights",
    "assemble_bundle",
    "class_count",
    "load_bundle_dir",
]


@dataclass(frozen=True)
class Metadata:
    labels: tuple[str, ...]
    image_size: int
    model_name: str = ""
    library_versions: dict[str, str] = field(default_factory=dict)
    timestamp: str = ""


@dataclass(frozen=True)
class LayerSpec:
    class_name: str
    name: str
    config: dict
    inner_layers: tuple["LayerSpec", ...] | None = None
    # Names of producing layers when the document wires layers explicitly
    # (functional form); empty for plain sequential stacking.
    inbound: tuple[str, ...] = ()


@dataclass(frozen=True)
class WeightsManifestEntry:
    name: str
    shape: tuple[int, ...]
    dtype: str


@dataclass(frozen=True)
class WeightStore:
    arrays: dict[str, np.ndarray]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __contains__(self, name: str) -> bool:
        return name in self.arrays

    def names(self):
        return self.arrays.keys()


@dataclass(frozen=True)
class ModelBundle:
    metadata: Metadata
    topology: LayerSpec
    weights: WeightStore


def _load_json(data: bytes | str, what: str) -> dict:
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedDocument(f"{what}: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedDocument(f"{what}: top level must be an object")
    return doc


def parse_metadata(data: bytes | str) -> Metadata:
    doc = _load_json(data, "metadata")
    if "labels" not in doc:
        raise MissingField("labels")
    if "imageSize" not in doc:
        raise MissingField("imageSize")
    labels = doc["labels"]
    if not isinstance(labels, list) or not all(isinstance(s, str) for s in labels):
        raise MalformedDocument("labels must be an array of strings")
    if not labels:
        raise InvalidValue("labels must be non-empty")
    if len(set(labels)) != len(labels):
        raise InvalidValue("duplicate label names")
    size = doc["imageSize"]
    if not isinstance(size, int) or isinstance(size, bool) or size < 1:
        raise InvalidValue(f"imageSize must be a positive integer, got {size!r}")
    versions = {
        k: v for k, v in doc.items()
        if k.endswith("Version") and isinstance(v, str)
    }
    return Metadata(
        labels=tuple(labels),
        image_size=size,
        model_name=doc.get("modelName", "") or "",
        library_versions=versions,
        timestamp=str(doc.get("timeStamp", "") or ""),
    )


_NESTED_CLASSES = {"Sequential", "Model", "Functional"}


def _parse_layer(raw: dict, path: str) -> LayerSpec:
    if not isinstance(raw, dict):
        raise MalformedDocument(f"{path}: layer entry must be an object")
    class_name = raw.get("class_name")
    if not class_name:
        raise MissingField(f"{path}.class_name")
    config = raw.get("config")
    if not isinstance(config, dict):
        raise MissingField(f"{path}.config")
    name = config.get("name") or raw.get("name") or ""
    if not name:
        raise MissingField(f"{path}.config.name")

    inbound: tuple[str, ...] = ()
    nodes = raw.get("inbound_nodes")
    if nodes:
        # functional form: [[["layer", node_idx, tensor_idx, {}], ...], ...]
        try:
            inbound = tuple(ref[0] for ref in nodes[0])
        except (TypeError, IndexError) as exc:
            raise MalformedDocument(f"{path}: bad inbound_nodes") from exc

    inner = None
    if class_name in _NESTED_CLASSES:
        raw_layers = config.get("layers")
        if not isinstance(raw_layers, list):
            raise MissingField(f"{path}.config.layers")
        inner = tuple(
            _parse_layer(sub, f"{path}.{name}[{i}]") for i, sub in enumerate(raw_layers)
        )
        seen = set()
        for sub in inner:
            if sub.name in seen:
                raise InvalidValue(f"duplicate layer name {sub.name!r} in {name}")
            seen.add(sub.name)
    return LayerSpec(
        class_name=class_name, name=name, config=config,
        inner_layers=inner, inbound=inbound,
    )


def parse_topology(data: bytes | str) -> tuple[LayerSpec, list[tuple[WeightsManifestEntry, str]]]:
    """Parse model.json into the root layer tree plus the flat weights manifest.

    The manifest is returned in declared order, each entry paired with the
    relative path of the binary file it is sliced from.
    """
    doc = _load_json(data, "model")
    topo = doc.get("modelTopology")
    if topo is None:
        raise MissingField("modelTopology")
    # Some exporters nest the config under model_config.
    if "model_config" in topo:
        topo = topo["model_config"]
    root = _parse_layer(topo, "modelTopology")

    groups = doc.get("weightsManifest")
    if groups is None:
        raise MissingField("weightsManifest")
    if not isinstance(groups, list):
        raise MalformedDocument("weightsManifest must be an array of groups")
    manifest: list[tuple[WeightsManifestEntry, str]] = []
    for gi, group in enumerate(groups):
        paths = group.get("paths")
        weights = group.get("weights")
        if not isinstance(paths, list) or not paths:
            raise MissingField(f"weightsManifest[{gi}].paths")
        if not isinstance(weights, list):
            raise MissingField(f"weightsManifest[{gi}].weights")
        # Multiple shard paths per group concatenate in order; the whole
        # group reads from that single logical stream, keyed by first path.
        source = "\x00".join(paths)
        for wi, w in enumerate(weights):
            if "quantization" in w:
                raise UnsupportedQuantization(
                    f"weight {w.get('name')!r} carries a quantization annotation"
                )
            name, shape, dtype = w.get("name"), w.get("shape"), w.get("dtype")
            if name is None or shape is None or dtype is None:
                raise MissingField(f"weightsManifest[{gi}].weights[{wi}]")
            if dtype != "float32":
                raise UnsupportedDtype(f"weight {name!r} has dtype {dtype!r}")
            if any((not isinstance(d, int)) or d < 0 for d in shape):
                raise MalformedDocument(f"weight {name!r} has invalid shape {shape!r}")
            manifest.append((WeightsManifestEntry(name, tuple(shape), dtype), source))
    return root, manifest


def decode_weights(manifest: list[tuple[WeightsManifestEntry, str]],
                   blobs: dict[str, bytes]) -> WeightStore:
    """Slice named float32 tensors out of the raw weight binaries.

    ``blobs`` maps each manifest source (shard paths are joined with NUL when
    a group declares several) to its concatenated bytes. Entries consume
    their source sequentially; every byte must be accounted for.
    """
    offsets = {src: 0 for src in {s for _, s in manifest}}
    arrays: dict[str, np.ndarray] = {}
    for entry, src in manifest:
        if entry.name in arrays:
            raise DuplicateWeightName(entry.name)
        blob = blobs.get(src)
        if blob is None:
            raise ByteLengthMismatch(f"no blob for source {src!r}")
        count = int(np.prod(entry.shape, dtype=np.int64)) if entry.shape else 1
        nbytes = count * 4
        start = offsets[src]
        if start + nbytes > len(blob):
            raise ByteLengthMismatch(
                f"weight {entry.name!r} needs {nbytes} bytes at offset {start}, "
                f"blob has {len(blob)}"
            )
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=start)
        arrays[entry.name] = arr.reshape(entry.shape).astype(np.float32)
        offsets[src] = start + nbytes
    for src, used in offsets.items():
        if used != len(blobs[src]):
            raise ByteLengthMismatch(
                f"source {src!r}: {len(blobs[src]) - used} leftover bytes"
            )
    return WeightStore(arrays)


def encode_weights(manifest: list[tuple[WeightsManifestEntry, str]],
                   store: WeightStore) -> dict[str, bytes]:
    """Inverse of decode_weights: re-serialize arrays in manifest order."""
    chunks: dict[str, list[bytes]] = {}
    for entry, src in manifest:
        arr = np.ascontiguousarray(store[entry.name], dtype="<f4")
        chunks.setdefault(src, []).append(arr.tobytes())
    return {src: b"".join(parts) for src, parts in chunks.items()}


def _leaf_layers(spec: LayerSpec):
    if spec.inner_layers is not None:
        for sub in spec.inner_layers:
            yield from _leaf_layers(sub)
    else:
        yield spec


def final_output_width(topology: LayerSpec) -> int | None:
    """Units of the last width-bearing layer, or None when undeterminable."""
    width = None
    for layer in _leaf_layers(topology):
        units = layer.config.get("units")
        if isinstance(units, int):
            width = units
    return width


def assemble_bundle(metadata: Metadata, topology: LayerSpec,
                    weights: WeightStore) -> ModelBundle:
    width = final_output_width(topology)
    if width is not None and width != len(metadata.labels):
        raise LabelCountMismatch(
            f"model outputs {width} classes but metadata lists {len(metadata.labels)}"
        )
    return ModelBundle(metadata=metadata, topology=topology, weights=weights)


def class_count(bundle: ModelBundle) -> int:
    return len(bundle.metadata.labels)


def load_bundle_dir(path) -> ModelBundle:
    """Assemble a bundle from a local directory holding the three files."""
    from pathlib import Path

    root = Path(path)
    metadata = parse_metadata((root / "metadata.json").read_bytes())
    topology, manifest = parse_topology((root / "model.json").read_bytes())
    blobs = {}
    for src in {s for _, s in manifest}:
        blobs[src] = b"".join((root / p).read_bytes() for p in src.split("\x00"))
    weights = decode_weights(manifest, blobs)
    return assemble_bundle(metadata, topology, weights)
