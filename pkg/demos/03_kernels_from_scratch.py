"""
The inference kernels, one at a time
====================================

Everything the engine computes reduces to a handful of numpy kernels over
float32 height x width x channels arrays. This walks a tiny feature map
through them by hand.
"""

import numpy as np

from tminfer import tensor

rng = np.random.default_rng(0)
x = rng.uniform(-1, 1, size=(8, 8, 3)).astype(np.float32)

# Convolution with SAME padding keeps the spatial size at stride 1.
params = tensor.ConvParams(
    kernel=rng.uniform(-0.5, 0.5, size=(3, 3, 3, 4)).astype(np.float32),
    bias=np.zeros(4, dtype=np.float32),
    strides=(1, 1),
    padding="same",
)
y = tensor.conv2d(x, params)
print("conv2d:", x.shape, "->", y.shape)

# Batch norm folds to a per-channel affine transform at inference time.
y = tensor.batch_norm(
    y,
    gamma=np.ones(4, dtype=np.float32),
    beta=np.zeros(4, dtype=np.float32),
    mean=np.zeros(4, dtype=np.float32),
    variance=np.ones(4, dtype=np.float32),
)
y = tensor.relu(y, max_value=6)
print("after batch_norm + relu6, range:", float(y.min()), "..", float(y.max()))

# Depthwise convolution filters each channel independently; the trailing
# kernel axis is the channel multiplier.
dw = tensor.ConvParams(
    kernel=rng.uniform(-0.5, 0.5, size=(3, 3, 4, 1)).astype(np.float32),
    bias=np.zeros(4, dtype=np.float32),
    strides=(2, 2),
    padding="same",
)
y = tensor.depthwise_conv2d(y, dw)
print("depthwise stride 2:", y.shape)

# Global average pooling collapses the spatial axes.
y = tensor.pool2d(y, kind="global_average")
print("global average pool:", y.shape)

# A dense head plus softmax yields a probability vector.
w = rng.uniform(-0.5, 0.5, size=(4, 3)).astype(np.float32)
logits = tensor.dense(y.reshape(-1), w, np.zeros(3, dtype=np.float32))
probs = tensor.softmax(logits)
print("probabilities:", np.round(probs, 6), "sum:", float(probs.sum()))
