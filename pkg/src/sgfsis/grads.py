"""Analytic parameter gradients for the two guided mask heads.

The encoder features are frozen, so the only differentiable pieces are the
small convolution layers and the prototype vectors. Two forward graphs are
supported:

* classification head: conv -> per-prototype cosine maps -> channel softmax,
  trained with pixel-wise cross-entropy;
* structural head: conv -> cosine map against one class-agnostic prototype,
  plus an optional support-feature convolution term, logistic squashing,
  trained with soft-dice loss.
"""

import numpy as np

from .errors import DimensionError, UnsupportedGraphError
from .ops import (
    DICE_SMOOTH,
    NORM_EPS,
    ConvParams,
    channel_softmax,
    conv2d,
    conv2d_param_grad,
    cosine_map,
    cross_entropy_loss,
    dice_loss,
    sigmoid,
)


def _cosine_backward(features, proto, grad_sim):
    """Backprop through a cosine map.

    Returns (grad wrt features, grad wrt proto). ``grad_sim`` is H x W.
    Pixels with feature norm below the cosine cutoff contribute nothing.
    """
    fnorm = np.sqrt(np.sum(features * features, axis=0))
    pnorm = np.sqrt(np.sum(proto * proto))
    live = fnorm >= NORM_EPS
    safe_fnorm = np.where(live, fnorm, 1.0)
    dot = np.tensordot(proto, features, axes=(0, 0))
    sim = np.where(live, dot / (safe_fnorm * pnorm), 0.0)
    g = np.where(live, grad_sim, 0.0)

    # d sim / d f = p/(|f||p|) - sim * f/|f|^2
    gf = (g / (safe_fnorm * pnorm))[None] * proto[:, None, None]
    gf -= (g * sim / safe_fnorm**2)[None] * features
    gf = np.where(live[None], gf, 0.0)

    # d sim / d p = f/(|f||p|) - sim * p/|p|^2
    gp = np.tensordot(features, g / (safe_fnorm * pnorm), axes=([1, 2], [0, 1]))
    gp -= np.sum(g * sim) / pnorm**2 * proto
    return gf, gp


def weighted_cross_entropy(probs, target, weight):
    """Pixel-weighted mean of -log p(target channel); p clamped to 1e-12."""
    from .ops import PROB_FLOOR

    wsum = np.sum(weight)
    if wsum == 0:
        return 0.0
    p = np.maximum(np.sum(probs * target, axis=0), PROB_FLOOR)
    return float(np.sum(weight * -np.log(p)) / wsum)


def _cosine_softmax_ce(features, protos, target, weight=None):
    """Forward + backward of cosine-map stack -> softmax -> cross-entropy.

    ``weight`` is an optional H x W pixel weight (used to restrict the
    classification loss to nucleus pixels). Returns (loss, grad wrt
    features, grad wrt protos).
    """
    n = protos.shape[0]
    sims = np.stack([cosine_map(features, protos[i]) for i in range(n)])
    probs = channel_softmax(sims)
    if weight is None:
        loss = cross_entropy_loss(probs, target)
        grad_sims = (probs - target) / (sims.shape[1] * sims.shape[2])
    else:
        loss = weighted_cross_entropy(probs, target, weight)
        wsum = np.sum(weight)
        scale = weight / wsum if wsum else np.zeros_like(weight)
        grad_sims = (probs - target) * scale[None]
    gf = np.zeros_like(features)
    gp = np.zeros_like(protos)
    for i in range(n):
        gfi, gpi = _cosine_backward(features, protos[i], grad_sims[i])
        gf += gfi
        gp[i] = gpi
    return loss, gf, gp


def classification_head_gradients(query_features, protos, cls_conv, target, weight=None):
    """Loss and gradients of the guided classification head.

    Returns (loss, grad ConvParams, grad protos N x C). ``target`` is a
    one-hot N x H x W stack; ``weight`` optionally restricts the loss to a
    subset of pixels.
    """
    protos = np.asarray(protos)
    if protos.ndim != 2:
        raise DimensionError("expected an N x C prototype matrix")
    g = conv2d(query_features, cls_conv)
    loss, gg, gp = _cosine_softmax_ce(g, protos, target, weight)
    gk, gb = conv2d_param_grad(query_features, cls_conv, gg)
    return loss, ConvParams(gk, gb), gp


def prototype_ce_gradients(features, protos, target, weight=None):
    """Loss and prototype gradients for the plain base-classification head
    (cosine maps straight off the features, no convolution)."""
    protos = np.asarray(protos)
    loss, _, gp = _cosine_softmax_ce(features, protos, target, weight)
    return loss, gp


def structural_head_gradients(
    query_features,
    support_features,
    proto,
    omega,
    phi,
    target,
    include_support_term=True,
    smooth=DICE_SMOOTH,
):
    """Loss and gradients of one structural guidance head.

    Returns (loss, grad omega, grad phi, grad proto). ``target`` is a binary
    H x W mask; the head output is sigmoid(cosine + support-conv).
    """
    proto = np.asarray(proto)
    gq = conv2d(query_features, omega)
    sim = cosine_map(gq, proto)
    pre = sim
    if include_support_term:
        pre = sim + conv2d(support_features, phi)[0]
    mask = sigmoid(pre)

    inter = np.sum(mask * target)
    a = 2.0 * inter + smooth
    b = np.sum(mask) + np.sum(target) + smooth
    loss = float(1.0 - a / b)
    grad_mask = -(2.0 * target * b - a) / b**2
    grad_pre = grad_mask * mask * (1.0 - mask)

    gfq, gproto = _cosine_backward(gq, proto, grad_pre)
    gk, gb = conv2d_param_grad(query_features, omega, gfq)
    if include_support_term:
        pk, pb = conv2d_param_grad(support_features, phi, grad_pre[None])
    else:
        pk, pb = np.zeros_like(phi.kernel), np.zeros_like(phi.bias)
    return loss, ConvParams(gk, gb), ConvParams(pk, pb), gproto


def registration_backward(novel, base, grad_registered, clamp=True):
    """Backprop through one prototype registration step.

    Forward: gamma = cos(novel, base) (clamped to [0,1] unless disabled),
    registered = gamma*novel + (1-gamma)*base. Returns grad wrt novel.
    """
    nn = np.sqrt(np.sum(novel * novel))
    bn = np.sqrt(np.sum(base * base))
    cos = float(np.dot(novel, base) / (nn * bn))
    gamma = min(max(cos, 0.0), 1.0) if clamp else cos
    grad = gamma * grad_registered
    active = (0.0 < cos < 1.0) if clamp else True
    if active:
        dcos = base / (nn * bn) - cos * novel / nn**2
        grad = grad + np.dot(novel - base, grad_registered) * dcos
    return grad


def guidance_gradients(loss_kind, **kw):
    """Dispatch on the loss kind of the two supported forward graphs."""
    if loss_kind == "cross-entropy":
        return classification_head_gradients(
            kw["query_features"], kw["prototypes"], kw["cls_conv"], kw["target"]
        )
    if loss_kind == "dice":
        return structural_head_gradients(
            kw["query_features"],
            kw.get("support_features"),
            kw["prototypes"],
            kw["omega"],
            kw["phi"],
            kw["target"],
            include_support_term=kw.get("include_support_term", True),
        )
    raise UnsupportedGraphError(f"no gradients for loss kind {loss_kind!r}")


def structural_head_forward(
    query_features, support_features, proto, omega, phi, include_support_term=True
):
    """Forward pass of one structural head (shared with the gradient path)."""
    sim = cosine_map(conv2d(query_features, omega), proto)
    if include_support_term:
        sim = sim + conv2d(support_features, phi)[0]
    return sigmoid(sim)


def structural_head_loss(
    query_features, support_features, proto, omega, phi, target,
    include_support_term=True, smooth=DICE_SMOOTH,
):
    mask = structural_head_forward(
        query_features, support_features, proto, omega, phi, include_support_term
    )
    return dice_loss(mask, target, smooth=smooth)
