"""End-to-end composition: support set -> prototypes -> guided masks ->
marker-guided watershed -> fused instance labels."""

from dataclasses import dataclass

import numpy as np

from .guidance import (
    STRUCT_BRANCHES,
    SupportItem,
    build_bank,
    default_params,
    finetune,
    gcm_forward,
    plain_cls_forward,
    sgm_forward,
    toy_encoder,
)
from .labels import convert_labels
from .ops import conv2d
from .watershed import derive_markers, fuse_instance_class, watershed_segment

ALL_BRANCHES = ("cls",) + STRUCT_BRANCHES


def encode_branches(image, feature_provider=None):
    """Per-branch feature maps for one image."""
    provider = feature_provider or toy_encoder
    return {b: provider(image, b) for b in ALL_BRANCHES}


def make_support(images, labels, boundary_radius=1, centroid_radius=1,
                 feature_provider=None):
    support = []
    for image, label in zip(images, labels):
        channels = convert_labels(label, boundary_radius, centroid_radius)
        support.append(SupportItem(encode_branches(image, feature_provider), channels))
    return support


@dataclass
class QueryResult:
    cls_mask: np.ndarray  # N x H x W softmaxed
    fg: np.ndarray
    bd: np.ndarray
    ct: np.ndarray
    markers: object  # MarkerMap
    instances: object  # InstanceMask
    fused: object  # InstanceLabelMap


def _mean_support_features(support, branch):
    return np.mean([it.features[branch] for it in support], axis=0)


def infer_query(query_features, support, bank, params, config=None):
    """Run the guided heads and the watershed on one query image."""
    config = dict(config or {})
    thresholds = config.get("thresholds", (0.5, 0.5, 0.5))
    variant = config.get("gcm_variant", "full")
    no_support = config.get("no_support_term", False)

    if variant == "var1":
        cls_mask = plain_cls_forward(query_features["cls"], params.plain_cls_conv)
    else:
        protos = bank.novel if variant == "var2" else bank.registered
        cls_mask = gcm_forward(query_features["cls"], protos, params.cls_conv)

    struct = {}
    for branch in STRUCT_BRANCHES:
        if config.get(f"sgm_{branch}", True):
            omega, phi = params.sgm[branch]
            struct[branch] = sgm_forward(
                query_features[branch], _mean_support_features(support, branch),
                bank.structural[branch], omega, phi, no_support_term=no_support,
            )
        else:
            # ablated branch: plain un-guided conv head on the query features
            _, phi = params.sgm[branch]
            struct[branch] = 1.0 / (1.0 + np.exp(-conv2d(query_features[branch], phi)[0]))

    markers = derive_markers(struct["fg"], struct["bd"], struct["ct"], thresholds)
    instances = watershed_segment(markers, struct["fg"], thresholds[0])
    fused = fuse_instance_class(instances, cls_mask, class_ids=bank.novel_classes)
    return QueryResult(cls_mask, struct["fg"], struct["bd"], struct["ct"],
                       markers, instances, fused)


def run_pipeline(support_images, support_labels, query_images, config=None,
                 feature_provider=None, base=None, base_classes=None):
    """Fine-tune on the support set, then segment every query image."""
    config = dict(config or {})
    support = make_support(
        support_images, support_labels,
        config.get("boundary_radius", 1), config.get("centroid_radius", 1),
        feature_provider,
    )
    channels = support[0].features["cls"].shape[0]
    n_classes = len({c for it in support for c in it.channels.class_ids})
    params = default_params(
        channels,
        kernel_size=config.get("kernel_size", 1),
        n_plain_classes=n_classes,
        seed=config.get("seed", 7),
    )
    bank = build_bank(support, params, base, base_classes,
                      clamp_gamma=not config.get("no_gamma_clamp", False))
    steps = config.get("steps", 50)
    losses = []
    if steps:
        bank, params, losses = finetune(
            support, bank, params, steps=steps, lr=config.get("lr", 1e-2),
            config=config,
        )
    results = []
    for image in query_images:
        feats = encode_branches(image, feature_provider)
        results.append(infer_query(feats, support, bank, params, config))
    return results, bank, params, losses
