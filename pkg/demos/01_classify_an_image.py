"""
Load a model bundle and classify an image
=========================================

The shortest path through the library: open a bundle directory, compile it
into an execution plan, preprocess an image, run it, and print per-class
probabilities.
"""

from pathlib import Path

from tminfer import bundle, graph
from tminfer.vision import decode_image, preprocess

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

# A bundle directory holds model.json, metadata.json, and weights.bin —
# the on-disk layout Teachable Machine exports use.
b = bundle.load_bundle_dir(FIXTURES / "tiny_dense")
print("model:", b.metadata.model_name)
print("labels:", list(b.metadata.labels))

# Compile once, run many times. The plan owns the bound weights and the
# ordered list of kernel nodes.
plan = graph.build_plan(b)
print(graph.summarize(plan))

# Decode -> center-crop to square -> bilinear resize -> scale to [-1, 1].
frame = decode_image((FIXTURES / "tiny_dense/images/gradient.png").read_bytes())
probs = graph.run(plan, preprocess(frame, b.metadata.image_size))

for label, p in zip(plan.output_labels, probs):
    print(f"{label:>16}: {p:.6f}")
