import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tminfer import bundle
from tminfer.errors import (
    ByteLengthMismatch,
    DuplicateWeightName,
    InvalidValue,
    LabelCountMismatch,
    MalformedDocument,
    MissingField,
    UnsupportedDtype,
    UnsupportedQuantization,
)


def make_metadata(**over):
    doc = {
        "tfjsVersion": "1.3.1",
        "tmVersion": "2.4.7",
        "packageVersion": "0.8.4",
        "packageName": "@teachablemachine/image",
        "timeStamp": "2022-03-01T12:00:00.000Z",
        "userMetadata": {},
        "modelName": "tm-my-image-model",
        "labels": ["plastic garbage", "metal"],
        "imageSize": 224,
    }
    doc.update(over)
    return json.dumps(doc).encode()


def make_model_doc(layers, weights, paths=("weights.bin",)):
    return json.dumps({
        "modelTopology": {
            "class_name": "Sequential",
            "config": {"name": "sequential_1", "layers": layers},
        },
        "weightsManifest": [{"paths": list(paths), "weights": weights}],
    }).encode()


DENSE_LAYERS = [
    {"class_name": "InputLayer", "config": {"name": "input_1",
                                            "batch_input_shape": [None, 4, 4, 3]}},
    {"class_name": "Flatten", "config": {"name": "flatten_1"}},
    {"class_name": "Dense", "config": {"name": "dense_1", "units": 2,
                                       "activation": "softmax", "use_bias": True}},
]
DENSE_WEIGHTS = [
    {"name": "dense_1/kernel", "shape": [48, 2], "dtype": "float32"},
    {"name": "dense_1/bias", "shape": [2], "dtype": "float32"},
]


class TestParseMetadata:
    def test_happy_path(self):
        md = bundle.parse_metadata(make_metadata())
        assert md.labels == ("plastic garbage", "metal")
        assert md.image_size == 224
        assert md.model_name == "tm-my-image-model"
        assert md.library_versions["tmVersion"] == "2.4.7"

    def test_missing_labels(self):
        doc = json.loads(make_metadata())
        del doc["labels"]
        with pytest.raises(MissingField) as exc:
            bundle.parse_metadata(json.dumps(doc))
        assert exc.value.field == "labels"

    def test_missing_image_size(self):
        doc = json.loads(make_metadata())
        del doc["imageSize"]
        with pytest.raises(MissingField):
            bundle.parse_metadata(json.dumps(doc))

    def test_duplicate_labels(self):
        with pytest.raises(InvalidValue):
            bundle.parse_metadata(make_metadata(labels=["a", "a"]))

    def test_empty_labels(self):
        with pytest.raises(InvalidValue):
            bundle.parse_metadata(make_metadata(labels=[]))

    def test_bad_image_size(self):
        with pytest.raises(InvalidValue):
            bundle.parse_metadata(make_metadata(imageSize=0))

    def test_not_json(self):
        with pytest.raises(MalformedDocument):
            bundle.parse_metadata(b"{nope")

    def test_unknown_fields_ignored(self):
        md = bundle.parse_metadata(make_metadata(futureField={"x": 1}))
        assert md.labels == ("plastic garbage", "metal")


class TestParseTopology:
    def test_tiny_dense(self):
        root, manifest = bundle.parse_topology(
            make_model_doc(DENSE_LAYERS, DENSE_WEIGHTS))
        assert root.class_name == "Sequential"
        assert [l.class_name for l in root.inner_layers] == [
            "InputLayer", "Flatten", "Dense"]
        assert [e.name for e, _ in manifest] == ["dense_1/kernel", "dense_1/bias"]
        assert manifest[0][1] == "weights.bin"

    def test_nested_model(self):
        inner = {
            "class_name": "Sequential",
            "config": {"name": "feature_extractor", "layers": [
                {"class_name": "Conv2D",
                 "config": {"name": "conv_1", "filters": 4, "kernel_size": [3, 3]}},
            ]},
        }
        layers = [DENSE_LAYERS[0], inner, DENSE_LAYERS[1], DENSE_LAYERS[2]]
        root, _ = bundle.parse_topology(make_model_doc(layers, DENSE_WEIGHTS))
        nested = root.inner_layers[1]
        assert nested.class_name == "Sequential"
        assert nested.inner_layers[0].name == "conv_1"

    def test_unsupported_dtype(self):
        weights = [{"name": "w", "shape": [2], "dtype": "int32"}]
        with pytest.raises(UnsupportedDtype):
            bundle.parse_topology(make_model_doc(DENSE_LAYERS, weights))

    def test_quantization_rejected(self):
        weights = [{"name": "w", "shape": [2], "dtype": "float32",
                    "quantization": {"dtype": "uint8"}}]
        with pytest.raises(UnsupportedQuantization):
            bundle.parse_topology(make_model_doc(DENSE_LAYERS, weights))

    def test_missing_topology(self):
        doc = json.dumps({"weightsManifest": []}).encode()
        with pytest.raises(MissingField):
            bundle.parse_topology(doc)

    def test_missing_manifest(self):
        doc = json.dumps({"modelTopology": {
            "class_name": "Sequential",
            "config": {"name": "m", "layers": []}}}).encode()
        with pytest.raises(MissingField):
            bundle.parse_topology(doc)

    def test_duplicate_sibling_names(self):
        layers = [
            {"class_name": "Flatten", "config": {"name": "x"}},
            {"class_name": "Flatten", "config": {"name": "x"}},
        ]
        with pytest.raises(InvalidValue):
            bundle.parse_topology(make_model_doc(layers, []))


class TestDecodeWeights:
    def test_single_float(self):
        manifest = [(bundle.WeightsManifestEntry("w", (1,), "float32"), "weights.bin")]
        store = bundle.decode_weights(manifest, {"weights.bin": b"\x00\x00\x80\x3f"})
        assert store["w"][0] == 1.0

    def test_sequential_consumption(self):
        manifest = [
            (bundle.WeightsManifestEntry("a", (2,), "float32"), "weights.bin"),
            (bundle.WeightsManifestEntry("b", (2,), "float32"), "weights.bin"),
        ]
        store = bundle.decode_weights(manifest, {"weights.bin": bytes(16)})
        np.testing.assert_array_equal(store["a"], [0.0, 0.0])
        np.testing.assert_array_equal(store["b"], [0.0, 0.0])

    def test_leftover_bytes(self):
        manifest = [
            (bundle.WeightsManifestEntry("a", (2,), "float32"), "weights.bin"),
            (bundle.WeightsManifestEntry("b", (1,), "float32"), "weights.bin"),
        ]
        with pytest.raises(ByteLengthMismatch):
            bundle.decode_weights(manifest, {"weights.bin": bytes(16)})

    def test_insufficient_bytes(self):
        manifest = [(bundle.WeightsManifestEntry("a", (4,), "float32"), "weights.bin")]
        with pytest.raises(ByteLengthMismatch):
            bundle.decode_weights(manifest, {"weights.bin": bytes(8)})

    def test_duplicate_names(self):
        manifest = [
            (bundle.WeightsManifestEntry("a", (1,), "float32"), "weights.bin"),
            (bundle.WeightsManifestEntry("a", (1,), "float32"), "weights.bin"),
        ]
        with pytest.raises(DuplicateWeightName):
            bundle.decode_weights(manifest, {"weights.bin": bytes(8)})

    def test_little_endian(self):
        manifest = [(bundle.WeightsManifestEntry("w", (2,), "float32"), "weights.bin")]
        blob = struct.pack("<2f", -2.5, 1e-3)
        store = bundle.decode_weights(manifest, {"weights.bin": blob})
        np.testing.assert_allclose(store["w"], [-2.5, 1e-3], rtol=1e-7)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(0, 6), min_size=1, max_size=5),
           st.integers(0, 2**32 - 1))
    def test_roundtrip_property(self, sizes, seed):
        rng = np.random.default_rng(seed)
        manifest = []
        blob = b""
        for i, n in enumerate(sizes):
            manifest.append(
                (bundle.WeightsManifestEntry(f"w{i}", (n,), "float32"), "weights.bin"))
            blob += rng.standard_normal(n).astype("<f4").tobytes()
        store = bundle.decode_weights(manifest, {"weights.bin": blob})
        again = bundle.encode_weights(manifest, store)
        assert again["weights.bin"] == blob


class TestAssemble:
    def _parts(self, labels=("plastic garbage", "metal"), units=2):
        md = bundle.parse_metadata(make_metadata(labels=list(labels), imageSize=4))
        layers = [dict(DENSE_LAYERS[0]), dict(DENSE_LAYERS[1]),
                  {"class_name": "Dense",
                   "config": {"name": "dense_1", "units": units,
                              "activation": "softmax", "use_bias": True}}]
        weights = [
            {"name": "dense_1/kernel", "shape": [48, units], "dtype": "float32"},
            {"name": "dense_1/bias", "shape": [units], "dtype": "float32"},
        ]
        topo, manifest = bundle.parse_topology(make_model_doc(layers, weights))
        blob = bytes(4 * (48 * units + units))
        store = bundle.decode_weights(manifest, {"weights.bin": blob})
        return md, topo, store

    def test_happy(self):
        md, topo, store = self._parts()
        mb = bundle.assemble_bundle(md, topo, store)
        assert bundle.class_count(mb) == 2

    def test_label_count_mismatch(self):
        md, _, _ = self._parts(labels=("a", "b", "c"))
        _, topo, store = self._parts()
        with pytest.raises(LabelCountMismatch):
            bundle.assemble_bundle(md, topo, store)

    def test_single_label(self):
        md, topo, store = self._parts(labels=("only",), units=1)
        assert bundle.class_count(bundle.assemble_bundle(md, topo, store)) == 1
