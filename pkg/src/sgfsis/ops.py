"""Dense forward primitives: convolution, pooling, cosine maps, softmax, losses.

All functions are pure and operate on plain numpy arrays with a CHW
(channel-major) layout. Reductions go through ``np.sum``, whose pairwise
scheme keeps results independent of any outer parallelism.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePrototypeError, DimensionError, EmptyMaskError

NORM_EPS = 1e-12
PROB_FLOOR = 1e-12
DICE_SMOOTH = 1.0


@dataclass
class ConvParams:
    """Weights of one same-padded convolution layer.

    kernel: outC x inC x kH x kW, bias: outC. Odd kernel extents only.
    """

    kernel: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.kernel = np.asarray(self.kernel)
        self.bias = np.asarray(self.bias)
        if self.kernel.ndim != 4:
            raise DimensionError("kernel must be outC x inC x kH x kW")
        kh, kw = self.kernel.shape[2:]
        if kh % 2 == 0 or kw % 2 == 0:
            raise DimensionError(f"kernel extents must be odd, got {kh}x{kw}")
        if self.bias.shape != (self.kernel.shape[0],):
            raise DimensionError("bias length must equal the output channel count")

    @property
    def out_channels(self):
        return self.kernel.shape[0]

    @property
    def in_channels(self):
        return self.kernel.shape[1]

    def copy(self):
        return ConvParams(self.kernel.copy(), self.bias.copy())

    def astype(self, dtype):
        return ConvParams(self.kernel.astype(dtype), self.bias.astype(dtype))


def identity_conv(channels, dtype=np.float32):
    """1x1 convolution that passes its input through unchanged."""
    kernel = np.eye(channels, dtype=dtype).reshape(channels, channels, 1, 1)
    return ConvParams(kernel, np.zeros(channels, dtype=dtype))


def _im2col(x, kh, kw):
    """Zero-padded sliding patches: (inC * kh * kw, H * W)."""
    in_c, h, w = x.shape
    ph, pw = kh // 2, kw // 2
    xp = np.zeros((in_c, h + 2 * ph, w + 2 * pw), dtype=x.dtype)
    xp[:, ph : ph + h, pw : pw + w] = x
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    # win: (inC, H, W, kh, kw) -> (inC, kh, kw, H*W)
    return win.transpose(0, 3, 4, 1, 2).reshape(in_c * kh * kw, h * w)


def conv2d(x, params):
    """Same-padded cross-correlation plus bias; CHW in, CHW out."""
    x = np.asarray(x)
    if x.ndim != 3:
        raise DimensionError("conv2d input must be C x H x W")
    if x.shape[0] != params.in_channels:
        raise DimensionError(
            f"input has {x.shape[0]} channels, kernel expects {params.in_channels}"
        )
    out_c, in_c, kh, kw = params.kernel.shape
    h, w = x.shape[1:]
    if h < kh or w < kw:
        raise DimensionError("spatial extent smaller than the kernel")
    cols = _im2col(x, kh, kw)
    kmat = params.kernel.reshape(out_c, in_c * kh * kw).astype(x.dtype)
    out = kmat @ cols + params.bias.astype(x.dtype)[:, None]
    return out.reshape(out_c, h, w)


def conv2d_param_grad(x, params, grad_out):
    """Gradients of sum(conv2d(x, params) * grad_out) w.r.t. kernel and bias."""
    x = np.asarray(x)
    grad_out = np.asarray(grad_out)
    out_c, in_c, kh, kw = params.kernel.shape
    h, w = x.shape[1:]
    cols = _im2col(x.astype(grad_out.dtype), kh, kw)
    gk = (grad_out.reshape(out_c, h * w) @ cols.T).reshape(out_c, in_c, kh, kw)
    gb = np.sum(grad_out, axis=(1, 2))
    return gk.astype(params.kernel.dtype), gb.astype(params.bias.dtype)


def masked_pool(features, mask):
    """Per-channel average of features over a soft mask (Eq. of GAP over L)."""
    features = np.asarray(features)
    mask = np.asarray(mask)
    if features.ndim != 3 or mask.ndim != 2:
        raise DimensionError("expected C x H x W features and H x W mask")
    if features.shape[1:] != mask.shape:
        raise DimensionError("mask spatial dims must match the features")
    denom = np.sum(mask)
    if denom <= 0:
        raise EmptyMaskError("mask sums to zero")
    return np.sum(features * mask[None], axis=(1, 2)) / denom


def cosine_map(features, proto):
    """Per-pixel cosine similarity between feature vectors and one prototype.

    Pixels whose feature vector norm falls below 1e-12 map to 0 (padded
    borders produce zero activations).
    """
    features = np.asarray(features)
    proto = np.asarray(proto)
    if features.ndim != 3 or proto.ndim != 1:
        raise DimensionError("expected C x H x W features and a length-C prototype")
    if features.shape[0] != proto.shape[0]:
        raise DimensionError("prototype length must equal the channel count")
    pnorm = np.sqrt(np.sum(proto.astype(np.float64) ** 2))
    if pnorm < NORM_EPS:
        raise DegeneratePrototypeError("prototype has zero norm")
    fnorm = np.sqrt(np.sum(features * features, axis=0))
    dot = np.tensordot(proto, features, axes=(0, 0))
    with np.errstate(invalid="ignore", divide="ignore"):
        out = dot / (fnorm * pnorm.astype(features.dtype))
    out = np.where(fnorm < NORM_EPS, 0.0, out).astype(features.dtype)
    return np.clip(out, -1.0, 1.0)


def channel_softmax(stack):
    """Softmax across the leading (channel) axis at every pixel."""
    stack = np.asarray(stack)
    if stack.ndim != 3:
        raise DimensionError("expected N x H x W stack")
    shifted = stack - np.max(stack, axis=0, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=0, keepdims=True)


def cross_entropy_loss(pred, target):
    """Mean over pixels of -log p(target channel); p clamped to >= 1e-12."""
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape or pred.ndim != 3:
        raise DimensionError("pred and one-hot target must share an N x H x W shape")
    p = np.sum(pred * target, axis=0)
    p = np.maximum(p, PROB_FLOOR)
    return float(np.mean(-np.log(p)))


def dice_loss(pred, target, smooth=DICE_SMOOTH):
    """Smoothed soft-dice loss, 1 - (2 sum(p*t) + eps) / (sum p + sum t + eps)."""
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape or pred.ndim != 2:
        raise DimensionError("pred and target must share an H x W shape")
    inter = np.sum(pred * target)
    denom = np.sum(pred) + np.sum(target)
    return float(1.0 - (2.0 * inter + smooth) / (denom + smooth))


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))
