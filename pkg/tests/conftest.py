import os
import sys

import numpy as np

sys.path.insert(0, os.path.dirname(__file__))

from sgfsis.labels import InstanceLabelMap
from sgfsis.synthetic import generate_blob_raster


def labeled_map(raster, n_classes=2):
    """InstanceLabelMap with deterministic classes (id modulo n_classes)."""
    raster = np.asarray(raster)
    ids = [int(i) for i in np.unique(raster) if i != 0]
    classes = {i: 1 + (i % n_classes) for i in ids}
    names = {c: f"C{c}" for c in classes.values()}
    return InstanceLabelMap(raster.astype(np.int64), classes, names)


def blob_scene_pair(seed, size=32):
    """A (gt, pred) pair of random labeled blob rasters sharing a canvas."""
    gt = labeled_map(generate_blob_raster(seed, size=size))
    pred = labeled_map(generate_blob_raster(seed + 10_000, size=size))
    return gt, pred
