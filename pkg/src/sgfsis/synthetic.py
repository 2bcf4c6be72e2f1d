"""Synthetic ellipse "nuclei" scenes for tests and the end-to-end demo.

Scenes are fully determined by their seed: random ellipses with a
controllable touching rate, one texture per class, drawn over a bright
background with mild noise.
"""

import numpy as np
from scipy import ndimage

from .labels import EIGHT_CONN, InstanceLabelMap

# per-class base colours (class textures differ in colour and striping)
_CLASS_COLORS = {
    1: (0.75, 0.20, 0.35),
    2: (0.15, 0.35, 0.70),
    3: (0.20, 0.60, 0.25),
    4: (0.60, 0.50, 0.10),
}
_BG_COLOR = (0.93, 0.90, 0.95)


def _ellipse_mask(h, w, cy, cx, ry, rx, angle):
    mask, _ = _ellipse_mask_rho(h, w, cy, cx, ry, rx, angle)
    return mask


def _ellipse_mask_rho(h, w, cy, cx, ry, rx, angle):
    """Ellipse mask plus the normalized radius (0 at center, 1 at the rim)."""
    yy, xx = np.mgrid[0:h, 0:w]
    dy, dx = yy - cy, xx - cx
    ca, sa = np.cos(angle), np.sin(angle)
    u = ca * dx + sa * dy
    v = -sa * dx + ca * dy
    rho = np.sqrt((u / rx) ** 2 + (v / ry) ** 2)
    return rho <= 1.0, rho


def generate_scene(seed, size=64, n_classes=2, touching=0.3, n_range=(5, 9)):
    """One scene: (image 3 x size x size float32, InstanceLabelMap)."""
    rng = np.random.default_rng(seed)
    h = w = size
    ids = np.zeros((h, w), dtype=np.int64)
    rho_map = np.zeros((h, w), dtype=np.float64)
    classes = {}
    count = int(rng.integers(n_range[0], n_range[1] + 1))
    placed = []  # (cy, cx, r)
    next_id = 0
    for _ in range(count):
        ry = float(rng.uniform(4.0, 8.0))
        rx = float(rng.uniform(4.0, 8.0))
        angle = float(rng.uniform(0, np.pi))
        if placed and rng.random() < touching:
            # drop next to an existing nucleus so the two touch
            base = placed[int(rng.integers(len(placed)))]
            theta = rng.uniform(0, 2 * np.pi)
            dist = base[2] + min(ry, rx) * rng.uniform(0.7, 0.95)
            cy = base[0] + dist * np.sin(theta)
            cx = base[1] + dist * np.cos(theta)
        else:
            cy = rng.uniform(8, h - 8)
            cx = rng.uniform(8, w - 8)
        if not (2 <= cy < h - 2 and 2 <= cx < w - 2):
            continue
        mask, rho = _ellipse_mask_rho(h, w, cy, cx, ry, rx, angle)
        mask &= ids == 0
        # keep only the biggest connected piece so instances stay connected
        cc, n = ndimage.label(mask, structure=EIGHT_CONN)
        if n == 0:
            continue
        areas = ndimage.sum_labels(np.ones_like(cc), cc, index=range(1, n + 1))
        mask = cc == (1 + int(np.argmax(areas)))
        if mask.sum() < 12:
            continue
        next_id += 1
        ids[mask] = next_id
        classes[next_id] = 1 + int(rng.integers(n_classes))
        placed.append((cy, cx, max(ry, rx)))
        rho_map[mask] = np.clip(rho[mask], 0.0, 1.0)

    image = np.empty((3, h, w), dtype=np.float32)
    for c in range(3):
        image[c] = _BG_COLOR[c]
    yy, xx = np.mgrid[0:h, 0:w]
    for iid, cid in classes.items():
        mask = ids == iid
        color = _CLASS_COLORS[1 + (cid - 1) % len(_CLASS_COLORS)]
        stripes = 0.08 * np.sin((yy + xx) * (0.8 if cid % 2 else 0.3))
        # chromatin-style radial shading: dark center, bright rim, so
        # centroid and boundary structure is visible in local texture
        shade = 0.55 + 0.65 * rho_map
        for c in range(3):
            image[c][mask] = color[c] * shade[mask] + (
                stripes[mask] if c == cid % 3 else 0.0
            )
    image += rng.normal(0.0, 0.02, image.shape).astype(np.float32)
    image = np.clip(image, 0.0, 1.0)

    names = {cid: f"C{cid}" for cid in set(classes.values())}
    return image, InstanceLabelMap(ids, classes, names)


def generate_blob_raster(seed, size=32, n_blobs=(2, 6)):
    """Random non-overlapping blob raster for metric property tests."""
    rng = np.random.default_rng(seed)
    ids = np.zeros((size, size), dtype=np.int64)
    count = int(rng.integers(n_blobs[0], n_blobs[1] + 1))
    next_id = 0
    for _ in range(count):
        cy, cx = rng.uniform(2, size - 2, 2)
        r = rng.uniform(2.0, 6.0)
        mask = _ellipse_mask(size, size, cy, cx, r, r * rng.uniform(0.6, 1.4),
                             rng.uniform(0, np.pi)) & (ids == 0)
        cc, n = ndimage.label(mask, structure=EIGHT_CONN)
        if n == 0:
            continue
        areas = ndimage.sum_labels(np.ones_like(cc), cc, index=range(1, n + 1))
        mask = cc == (1 + int(np.argmax(areas)))
        if mask.sum() < 4:
            continue
        next_id += 1
        ids[mask] = next_id
    return ids
