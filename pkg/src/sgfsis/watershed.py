"""Marker derivation, marker-controlled watershed and class fusion.

The flood floods higher-foreground-probability pixels first (relief is the
negated foreground map), restricted to the binarized foreground, with ties
broken by insertion order. Foreground components left unreached by the
4-connected flood (no marker of their own) are attached to the nearest
flooded pixel so that every foreground pixel ends up in exactly one basin.
"""

import heapq
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .accel import numba_enabled
from .errors import DimensionError, InconsistentMarkerError
from .labels import EIGHT_CONN, InstanceLabelMap


@dataclass
class MarkerMap:
    labels: np.ndarray  # H x W, consecutive 1..count
    count: int


@dataclass
class InstanceMask:
    labels: np.ndarray  # H x W, 0 = background

    def instance_ids(self):
        ids = np.unique(self.labels)
        return [int(i) for i in ids if i != 0]


def derive_markers(fg, bd, ct, thresholds=(0.5, 0.5, 0.5)):
    """Binarize the three structural masks and derive watershed markers.

    Boundary-eroded foreground components are split by the centroid mask:
    a component containing two or more centroid components is replaced by
    those components (clipped to itself), mirroring how touching nuclei
    separate.
    """
    fg = np.asarray(fg)
    bd = np.asarray(bd)
    ct = np.asarray(ct)
    if not (fg.shape == bd.shape == ct.shape) or fg.ndim != 2:
        raise DimensionError("fg, bd, ct must share one H x W shape")
    t_f, t_b, t_c = thresholds
    fg_bin = fg >= t_f
    bd_bin = bd >= t_b
    ct_bin = ct >= t_c

    eroded = fg_bin & ~bd_bin
    fg_cc, n_fg = ndimage.label(eroded, structure=EIGHT_CONN)
    ct_cc, n_ct = ndimage.label(ct_bin, structure=EIGHT_CONN)

    out = np.zeros(fg.shape, dtype=np.int32)
    next_label = 0
    for g in range(1, n_fg + 1):
        region = fg_cc == g
        inside = np.unique(ct_cc[region])
        inside = inside[inside > 0]
        if len(inside) >= 2:
            for o in inside:
                next_label += 1
                out[region & (ct_cc == o)] = next_label
        else:
            next_label += 1
            out[region] = next_label
    return MarkerMap(out, next_label)


def _flood_python(labels, relief, inside):
    h, w = labels.shape
    heap = []
    counter = 0
    for r in range(h):
        for c in range(w):
            if labels[r, c] > 0:
                heapq.heappush(heap, (relief[r, c], counter, r, c))
                counter += 1
    while heap:
        _, _, r, c = heapq.heappop(heap)
        lab = labels[r, c]
        for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= nr < h and 0 <= nc < w and inside[nr, nc] and labels[nr, nc] == 0:
                labels[nr, nc] = lab
                heapq.heappush(heap, (relief[nr, nc], counter, nr, nc))
                counter += 1


def watershed_segment(markers, fg, t_f=0.5):
    """Flood the binarized foreground from the markers."""
    fg = np.asarray(fg)
    if fg.shape != markers.labels.shape:
        raise DimensionError("foreground and marker shapes differ")
    inside = fg >= t_f
    labels = markers.labels.astype(np.int32).copy()
    if np.any((labels > 0) & ~inside):
        raise InconsistentMarkerError("marker pixel outside the binarized foreground")
    if markers.count == 0:
        return InstanceMask(np.zeros_like(labels))

    relief = -fg.astype(np.float64)
    if numba_enabled():
        from ._flood_numba import flood

        flood(labels, relief, inside)
    else:
        _flood_python(labels, relief, inside)

    # attach marker-less foreground components to the nearest flooded pixel
    leftover = inside & (labels == 0)
    if np.any(leftover):
        _, (ir, ic) = ndimage.distance_transform_edt(labels == 0, return_indices=True)
        labels[leftover] = labels[ir[leftover], ic[leftover]]
    return InstanceMask(labels)


def fuse_instance_class(instances, cls, class_ids=None):
    """Assign each instance the majority per-pixel argmax class.

    ``cls`` is an N x H x W (softmaxed) stack; ``class_ids`` maps channel
    index to class id (defaults to 1..N). Ties go to the lower channel.
    """
    cls = np.asarray(cls)
    if cls.ndim != 3 or cls.shape[1:] != instances.labels.shape:
        raise DimensionError("classification stack must be N x H x W over the raster")
    n = cls.shape[0]
    if class_ids is None:
        class_ids = list(range(1, n + 1))
    votes = np.argmax(cls, axis=0)
    classes = {}
    for iid in instances.instance_ids():
        region = instances.labels == iid
        counts = np.bincount(votes[region], minlength=n)
        classes[iid] = class_ids[int(np.argmax(counts))]
    class_names = {cid: str(cid) for cid in class_ids}
    return InstanceLabelMap(instances.labels.astype(np.int64), classes, class_names)
