"""CPU inference runtime for Teachable Machine image-model bundles."""

from .bundle import (
    Metadata,
    ModelBundle,
    WeightsManifestEntry,
    WeightStore,
    assemble_bundle,
    class_count,
    decode_weights,
    load_bundle_dir,
    parse_metadata,
    parse_topology,
)
from .fetch import BundleLocator, fetch_bundle, open_model_ref, purge, resolve
from .graph import ExecutionPlan, build_plan, run, summarize
from .session import (
    ClassifierSession,
    Prediction,
    SessionConfig,
    SessionEvent,
    StaticFrameSource,
    format_result,
    new_session,
)
from .vision import Frame, decode_image, preprocess

__version__ = "0.1.0"

__all__ = [
    "Metadata",
    "ModelBundle",
    "WeightsManifestEntry",
    "WeightStore",
    "assemble_bundle",
    "class_count",
    "decode_weights",
    "load_bundle_dir",
    "parse_metadata",
    "parse_topology",
    "BundleLocator",
    "fetch_bundle",
    "open_model_ref",
    "purge",
    "resolve",
    "ExecutionPlan",
    "build_plan",
    "run",
    "summarize",
    "ClassifierSession",
    "Prediction",
    "SessionConfig",
    "SessionEvent",
    "StaticFrameSource",
    "format_result",
    "new_session",
    "Frame",
    "decode_image",
    "preprocess",
    "__version__",
]
