"""Prototype machinery and the guided mask heads.

Covers the novel-class prototypes (masked pooling over support features),
base-prototype classification and its stage-1 training, prototype
registration, the guided classification head, the three structural guidance
heads, and support-set fine-tuning of the guidance parameters.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionError,
    EmptyMaskError,
    MissingClassError,
    RegistryError,
)
from .grads import (
    classification_head_gradients,
    prototype_ce_gradients,
    registration_backward,
    structural_head_forward,
    structural_head_gradients,
    structural_head_loss,
)
from .ops import (
    ConvParams,
    channel_softmax,
    conv2d,
    cosine_map,
    cross_entropy_loss,
    masked_pool,
)

STRUCT_BRANCHES = ("fg", "bd", "ct")
TOY_ENCODER_SEED = 0x53475331  # documented seed for the fixed-weight encoder
TOY_ENCODER_CHANNELS = 16


@dataclass
class PrototypeBank:
    """Novel, base and class-agnostic structural prototypes.

    ``registered`` is always derived on access, so it can never go stale
    when novel or base vectors change.
    """

    novel: np.ndarray  # N x C
    novel_classes: list
    base: np.ndarray  # M x C (may be empty)
    base_classes: list
    structural: dict = field(default_factory=dict)  # branch -> length-C vector
    clamp_gamma: bool = True

    @property
    def registered(self):
        return register_prototypes(
            self.novel, self.novel_classes, self.base, self.base_classes,
            clamp=self.clamp_gamma,
        )

    def copy(self):
        return PrototypeBank(
            self.novel.copy(),
            list(self.novel_classes),
            self.base.copy(),
            list(self.base_classes),
            {k: v.copy() for k, v in self.structural.items()},
            self.clamp_gamma,
        )


@dataclass
class GuidanceParams:
    """Learnable convolution layers of the guided heads.

    ``sgm`` maps each structural branch to its (omega, phi) pair; phi must
    output a single channel. ``plain_cls_conv`` backs the conv-only
    classification variant.
    """

    cls_conv: ConvParams
    sgm: dict  # branch -> (omega: ConvParams, phi: ConvParams)
    plain_cls_conv: ConvParams | None = None

    def __post_init__(self):
        for branch, (_, phi) in self.sgm.items():
            if phi.out_channels != 1:
                raise DimensionError(f"phi for branch {branch!r} must output 1 channel")

    def copy(self):
        return GuidanceParams(
            self.cls_conv.copy(),
            {b: (w.copy(), p.copy()) for b, (w, p) in self.sgm.items()},
            None if self.plain_cls_conv is None else self.plain_cls_conv.copy(),
        )


def default_params(channels, kernel_size=1, n_plain_classes=None, seed=7, dtype=np.float32):
    """Seeded initial guidance parameters (1x1 channel projections by default)."""
    rng = np.random.default_rng(seed)
    k = kernel_size

    def conv(out_c, in_c):
        kern = rng.standard_normal((out_c, in_c, k, k)) * (1.0 / np.sqrt(in_c * k * k))
        return ConvParams(kern.astype(dtype), np.zeros(out_c, dtype=dtype))

    sgm = {b: (conv(channels, channels), conv(1, channels)) for b in STRUCT_BRANCHES}
    plain = conv(n_plain_classes, channels) if n_plain_classes else None
    return GuidanceParams(conv(channels, channels), sgm, plain)


def novel_prototypes(support_features, support_channels, class_ids=None):
    """Masked-pooled per-class prototypes, averaged over the support items.

    Returns (class_ids, protos N x C). ``class_ids`` defaults to every class
    present in the support channels; a requested class with an empty mask in
    every item raises MissingClassError.
    """
    if len(support_features) != len(support_channels):
        raise DimensionError("need one feature map per support item")
    if class_ids is None:
        class_ids = sorted({c for ch in support_channels for c in ch.class_ids})
    protos = []
    for cid in class_ids:
        pooled = []
        for feats, ch in zip(support_features, support_channels):
            if cid not in ch.class_ids:
                continue
            mask = ch.class_masks[ch.class_ids.index(cid)]
            if mask.sum() == 0:
                continue
            pooled.append(masked_pool(feats, mask))
        if not pooled:
            raise MissingClassError(f"class {cid} absent from every support item")
        protos.append(np.mean(pooled, axis=0))
    return list(class_ids), np.stack(protos)


def base_classify(features, base_protos):
    """Cosine maps against the base prototypes, softmaxed across classes."""
    base_protos = np.asarray(base_protos)
    sims = np.stack([cosine_map(features, b) for b in base_protos])
    return channel_softmax(sims)


def register_prototypes(novel, novel_classes, base, base_classes, clamp=True):
    """Blend each novel prototype with its same-named base prototype.

    gamma = cos(novel, base), clamped to [0,1] unless disabled; classes
    without a base counterpart pass through unchanged.
    """
    novel = np.asarray(novel)
    base = np.asarray(base)
    if len(base_classes) != len(set(base_classes)):
        raise RegistryError("duplicate class names in the base prototype set")
    if len(base) and novel.shape[1] != base.shape[1]:
        raise DimensionError("novel and base prototype dimensionality differ")
    lookup = {name: i for i, name in enumerate(base_classes)}
    out = novel.copy()
    for n, name in enumerate(novel_classes):
        if name not in lookup:
            continue
        b = base[lookup[name]]
        p = novel[n]
        gamma = float(
            np.dot(p, b) / (np.linalg.norm(p) * np.linalg.norm(b))
        )
        if clamp:
            gamma = min(max(gamma, 0.0), 1.0)
        out[n] = gamma * p + (1.0 - gamma) * b
    return out


def gcm_forward(query_features, protos, cls_conv):
    """Guided classification head: conv, cosine per prototype, softmax."""
    g = conv2d(query_features, cls_conv)
    sims = np.stack([cosine_map(g, p) for p in np.asarray(protos)])
    return channel_softmax(sims)


def plain_cls_forward(query_features, conv):
    """Conv-only classification head (ablation variant #1)."""
    return channel_softmax(conv2d(query_features, conv))


def sgm_prototype(support_features, support_masks, omega):
    """Class-agnostic prototype: conv then masked pooling, averaged over items."""
    if isinstance(support_features, np.ndarray) and support_features.ndim == 3:
        support_features = [support_features]
        support_masks = [support_masks]
    pooled = []
    for feats, mask in zip(support_features, support_masks):
        if np.sum(mask) == 0:
            continue
        pooled.append(masked_pool(conv2d(feats, omega), mask))
    if not pooled:
        raise EmptyMaskError("structural mask empty in every support item")
    return np.mean(pooled, axis=0)


def sgm_forward(query_features, support_features, proto, omega, phi, no_support_term=False):
    """Structural head: cosine to the prototype plus a support-feature conv
    term, squashed to (0,1)."""
    return structural_head_forward(
        query_features, support_features, proto, omega, phi,
        include_support_term=not no_support_term,
    )


def train_base_prototypes(samples, m, steps=200, lr=1e-2, seed=0, dtype=np.float64):
    """Stage-1 base-prototype learning by gradient descent.

    ``samples`` is a list of (features C x H x W, one-hot M x H x W target).
    Only the prototype vectors move; features stay frozen. Returns
    (prototypes M x C, per-step total losses including the initial loss).
    """
    if not samples:
        raise MissingClassError("no training samples")
    c = samples[0][0].shape[0]
    present = np.zeros(m, dtype=bool)
    for _, target in samples:
        if target.shape[0] != m:
            raise DimensionError(f"targets must have {m} channels")
        present |= target.reshape(m, -1).any(axis=1)
    missing = [i for i in range(m) if not present[i]]
    if missing:
        raise MissingClassError(f"classes never present in the data: {missing}")

    rng = np.random.default_rng(seed)
    protos = rng.standard_normal((m, c)).astype(dtype)
    losses = []
    for _ in range(steps + 1):
        total = 0.0
        grad = np.zeros_like(protos)
        for feats, target in samples:
            loss, gp = prototype_ce_gradients(feats.astype(dtype), protos, target)
            total += loss
            grad += gp
        losses.append(total)
        protos = protos - lr * grad
    return protos, losses


@dataclass
class SupportItem:
    """One labeled support image with its per-branch feature maps."""

    features: dict  # "cls"/"fg"/"bd"/"ct" -> C x H x W
    channels: object  # StructuralChannels

    def structural_mask(self, branch):
        return {
            "fg": self.channels.foreground,
            "bd": self.channels.boundary,
            "ct": self.channels.centroid,
        }[branch]


def build_bank(support, params, base=None, base_classes=None, clamp_gamma=True):
    """Recompute all prototypes from a support set (Eq.1 / Eq.7 step)."""
    class_ids, novel = novel_prototypes(
        [it.features["cls"] for it in support], [it.channels for it in support]
    )
    structural = {}
    for branch in STRUCT_BRANCHES:
        omega, _ = params.sgm[branch]
        structural[branch] = sgm_prototype(
            [it.features[branch] for it in support],
            [it.structural_mask(branch) for it in support],
            omega,
        )
    if base is None:
        base = np.zeros((0, novel.shape[1]), dtype=novel.dtype)
        base_classes = []
    return PrototypeBank(novel, class_ids, np.asarray(base), list(base_classes),
                         structural, clamp_gamma)


def _one_hot_classes(channels, class_ids):
    """One-hot class target over the given class channel order.

    Background pixels fall to channel 0 ties-free by assigning them the
    class whose mask is absent; they are excluded by masking with the
    foreground so the classification loss only covers nucleus pixels.
    """
    n = len(class_ids)
    h, w = channels.foreground.shape
    target = np.zeros((n, h, w))
    for i, cid in enumerate(class_ids):
        if cid in channels.class_ids:
            target[i] = channels.class_masks[channels.class_ids.index(cid)]
    return target


def guidance_loss(item, bank, params, config=None):
    """Total guidance loss of one support item treated as query."""
    config = config or {}
    total = 0.0
    target = _one_hot_classes(item.channels, bank.novel_classes)
    fg = item.channels.foreground.astype(float)
    from .grads import weighted_cross_entropy

    probs = _cls_forward(item, bank, params, config)
    total += weighted_cross_entropy(probs, target, fg)
    for branch in STRUCT_BRANCHES:
        if not config.get(f"sgm_{branch}", True):
            continue
        omega, phi = params.sgm[branch]
        total += structural_head_loss(
            item.features[branch], item.features[branch], bank.structural[branch],
            omega, phi, item.structural_mask(branch).astype(float),
            include_support_term=not config.get("no_support_term", False),
        )
    return total


def _cls_forward(item, bank, params, config):
    variant = config.get("gcm_variant", "full")
    if variant == "var1":
        return plain_cls_forward(item.features["cls"], params.plain_cls_conv)
    protos = bank.novel if variant == "var2" else bank.registered
    return gcm_forward(item.features["cls"], protos, params.cls_conv)


def finetune(support, bank, params, steps=50, lr=1e-2, config=None):
    """Stage-3 fine-tuning on the support set.

    First recomputes the novel and structural prototypes from the support
    set, then runs full-batch gradient descent over the support items
    (each treated as query with its own labels as target), moving only the
    guidance convolutions and the prototype vectors. Returns
    (bank, params, losses) with one loss entry per step plus the final one.
    """
    config = dict(config or {})
    base = bank.base if bank is not None else None
    base_classes = bank.base_classes if bank is not None else None
    clamp = bank.clamp_gamma if bank is not None else not config.get("no_gamma_clamp", False)
    bank = build_bank(support, params, base, base_classes, clamp_gamma=clamp)
    params = params.copy()
    if steps == 0:
        return bank, params, []

    variant = config.get("gcm_variant", "full")
    losses = []
    for _ in range(steps + 1):
        total = 0.0
        g_novel = np.zeros_like(bank.novel)
        g_cls = None
        g_plain = None
        g_sgm = {b: None for b in STRUCT_BRANCHES}
        g_struct = {b: np.zeros_like(bank.structural[b]) for b in STRUCT_BRANCHES}

        for item in support:
            target = _one_hot_classes(item.channels, bank.novel_classes)
            fg = item.channels.foreground.astype(float)
            if variant == "var1":
                loss, gconv, _ = _plain_head_gradients(
                    item.features["cls"], params.plain_cls_conv, target, fg
                )
                g_plain = _acc_conv(g_plain, gconv)
            else:
                protos = bank.novel if variant == "var2" else bank.registered
                loss, gconv, gp = classification_head_gradients(
                    item.features["cls"], protos, params.cls_conv, target, fg
                )
                g_cls = _acc_conv(g_cls, gconv)
                if variant == "var2" or len(bank.base) == 0:
                    g_novel += gp
                else:
                    lookup = {name: i for i, name in enumerate(bank.base_classes)}
                    for n, name in enumerate(bank.novel_classes):
                        if name in lookup:
                            g_novel[n] += registration_backward(
                                bank.novel[n], bank.base[lookup[name]], gp[n],
                                clamp=bank.clamp_gamma,
                            )
                        else:
                            g_novel[n] += gp[n]
            total += loss

            for branch in STRUCT_BRANCHES:
                if not config.get(f"sgm_{branch}", True):
                    continue
                omega, phi = params.sgm[branch]
                loss, gw, gphi, gu = structural_head_gradients(
                    item.features[branch], item.features[branch],
                    bank.structural[branch], omega, phi,
                    item.structural_mask(branch).astype(float),
                    include_support_term=not config.get("no_support_term", False),
                )
                total += loss
                g_sgm[branch] = (
                    (_acc_conv(None, gw), _acc_conv(None, gphi))
                    if g_sgm[branch] is None
                    else (_acc_conv(g_sgm[branch][0], gw), _acc_conv(g_sgm[branch][1], gphi))
                )
                g_struct[branch] += gu

        losses.append(total)
        bank.novel = bank.novel - lr * g_novel
        if g_cls is not None:
            params.cls_conv = _step_conv(params.cls_conv, g_cls, lr)
        if g_plain is not None:
            params.plain_cls_conv = _step_conv(params.plain_cls_conv, g_plain, lr)
        for branch in STRUCT_BRANCHES:
            if g_sgm[branch] is not None:
                omega, phi = params.sgm[branch]
                params.sgm[branch] = (
                    _step_conv(omega, g_sgm[branch][0], lr),
                    _step_conv(phi, g_sgm[branch][1], lr),
                )
                bank.structural[branch] = bank.structural[branch] - lr * g_struct[branch]
    return bank, params, losses


def _plain_head_gradients(features, conv, target, weight=None):
    """CE loss and conv gradients of the conv-only classification head."""
    from .grads import weighted_cross_entropy
    from .ops import conv2d_param_grad

    logits = conv2d(features, conv)
    probs = channel_softmax(logits)
    if weight is None:
        loss = cross_entropy_loss(probs, target)
        grad = (probs - target) / (logits.shape[1] * logits.shape[2])
    else:
        loss = weighted_cross_entropy(probs, target, weight)
        wsum = np.sum(weight)
        grad = (probs - target) * (weight / wsum if wsum else 0.0)[None]
    gk, gb = conv2d_param_grad(features, conv, grad)
    return loss, ConvParams(gk, gb), None


def _acc_conv(acc, grad):
    if acc is None:
        return grad.copy()
    return ConvParams(acc.kernel + grad.kernel, acc.bias + grad.bias)


def _step_conv(params, grad, lr):
    return ConvParams(params.kernel - lr * grad.kernel, params.bias - lr * grad.bias)


def toy_encoder(image, branch="cls"):
    """Deterministic fixed-weight feature encoder (pretrained-backbone stand-in).

    3 x H x W in, 16 x H x W out. Eight descriptive channels (centered
    colour, brightness, saturation, edge magnitude, smoothed darkness,
    centre-surround contrast) are combined with four random fine
    projections and four block-pooled context channels. The random weights
    come from a documented seed offset per branch, so identical inputs
    always give identical outputs. H and W must be multiples of 4.
    """
    from scipy import ndimage

    image = np.asarray(image, dtype=np.float32)
    if image.ndim != 3 or image.shape[0] != 3:
        raise DimensionError("toy encoder expects a 3 x H x W image")
    h, w = image.shape[1:]
    if h % 4 or w % 4:
        raise DimensionError("spatial extents must be multiples of 4")
    branches = ("cls", "fg", "bd", "ct")
    if branch not in branches:
        raise DimensionError(f"unknown branch {branch!r}")

    img64 = image.astype(np.float64)
    bright = img64.mean(axis=0)
    sat = img64.max(axis=0) - img64.min(axis=0)
    gy = ndimage.sobel(bright, axis=0, mode="nearest")
    gx = ndimage.sobel(bright, axis=1, mode="nearest")
    edge = np.sqrt(gy * gy + gx * gx)
    dark = ndimage.gaussian_filter(1.0 - bright, sigma=2.0, mode="nearest")
    contrast = bright - ndimage.gaussian_filter(bright, sigma=2.0, mode="nearest")
    described = np.stack(
        [
            img64[0] - 0.5,
            img64[1] - 0.5,
            img64[2] - 0.5,
            bright - 0.5,
            sat - 0.25,
            edge - 0.5,
            dark - 0.25,
            contrast * 4.0,
        ]
    )

    rng = np.random.default_rng(TOY_ENCODER_SEED + branches.index(branch))
    fine_p = ConvParams(
        (rng.standard_normal((4, 3, 3, 3)) * 0.5).astype(np.float32),
        (rng.standard_normal(4) * 0.1).astype(np.float32),
    )
    ctx_p = ConvParams(
        (rng.standard_normal((4, 3, 3, 3)) * 0.5).astype(np.float32),
        (rng.standard_normal(4) * 0.1).astype(np.float32),
    )
    fine = np.tanh(conv2d(image, fine_p))
    pooled = image.reshape(3, h // 4, 4, w // 4, 4).mean(axis=(2, 4))
    ctx = np.tanh(conv2d(pooled, ctx_p))
    ctx_up = np.repeat(np.repeat(ctx, 4, axis=1), 4, axis=2)
    return np.concatenate([described, fine, ctx_up], axis=0).astype(np.float32)
