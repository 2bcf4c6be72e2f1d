"""Numba kernel for the marker-controlled priority flood.

Separate module so importing the package never triggers a numba import
when the fallback path is selected.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _heap_push(prio, seq, pos, size, p, s, q):
    i = size
    prio[i] = p
    seq[i] = s
    pos[i] = q
    while i > 0:
        parent = (i - 1) // 2
        if (prio[i], seq[i]) < (prio[parent], seq[parent]):
            prio[i], prio[parent] = prio[parent], prio[i]
            seq[i], seq[parent] = seq[parent], seq[i]
            pos[i], pos[parent] = pos[parent], pos[i]
            i = parent
        else:
            break
    return size + 1


@njit(cache=True)
def _heap_pop(prio, seq, pos, size):
    q = pos[0]
    size -= 1
    prio[0] = prio[size]
    seq[0] = seq[size]
    pos[0] = pos[size]
    i = 0
    while True:
        left = 2 * i + 1
        right = left + 1
        smallest = i
        if left < size and (prio[left], seq[left]) < (prio[smallest], seq[smallest]):
            smallest = left
        if right < size and (prio[right], seq[right]) < (prio[smallest], seq[smallest]):
            smallest = right
        if smallest == i:
            break
        prio[i], prio[smallest] = prio[smallest], prio[i]
        seq[i], seq[smallest] = seq[smallest], seq[i]
        pos[i], pos[smallest] = pos[smallest], pos[i]
        i = smallest
    return q, size


@njit(cache=True)
def flood(labels, relief, inside):
    """Grow marker labels over ``inside`` pixels, lowest relief first.

    ``labels`` holds the marker labels and is filled in place. Ties are
    broken by insertion order; growth is 4-connected.
    """
    h, w = labels.shape
    cap = h * w
    prio = np.empty(cap, np.float64)
    seq = np.empty(cap, np.int64)
    pos = np.empty(cap, np.int64)
    size = 0
    counter = 0
    for r in range(h):
        for c in range(w):
            if labels[r, c] > 0:
                size = _heap_push(prio, seq, pos, size, relief[r, c], counter, r * w + c)
                counter += 1
    while size > 0:
        q, size = _heap_pop(prio, seq, pos, size)
        r = q // w
        c = q % w
        lab = labels[r, c]
        for k in range(4):
            if k == 0:
                nr, nc = r - 1, c
            elif k == 1:
                nr, nc = r + 1, c
            elif k == 2:
                nr, nc = r, c - 1
            else:
                nr, nc = r, c + 1
            if 0 <= nr < h and 0 <= nc < w and inside[nr, nc] and labels[nr, nc] == 0:
                labels[nr, nc] = lab
                size = _heap_push(
                    prio, seq, pos, size, relief[nr, nc], counter, nr * w + nc
                )
                counter += 1
