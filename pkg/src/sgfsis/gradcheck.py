"""Central finite-difference verification of the analytic guidance gradients.

The oracle only evaluates forward losses, so it is independent of the
analytic backward path it checks. Runs in 64-bit precision on small random
instances (8 x 8 images, 4 channels by default).
"""

import numpy as np

from .grads import (
    classification_head_gradients,
    structural_head_gradients,
    structural_head_loss,
    weighted_cross_entropy,
)
from .guidance import gcm_forward
from .ops import ConvParams

FD_STEP = 1e-4
REL_TOL = 1e-5
# floor for the relative-error denominator: below this magnitude the finite
# difference itself carries ~1e-8 absolute noise, so the comparison switches
# to an absolute one
REL_FLOOR = 1e-2


def relative_error(analytic, numeric):
    denom = max(abs(analytic), abs(numeric), REL_FLOOR)
    return abs(analytic - numeric) / denom


def _central_diff(f, array, h=FD_STEP):
    grad = np.zeros_like(array)
    flat = array.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = f()
        flat[i] = orig - h
        lo = f()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * h)
    return grad


def check_classification_instance(rng, h=8, w=8, c=4, n=3, kernel_size=1):
    """One random classification-head instance; returns max relative error."""
    feats = rng.standard_normal((c, h, w))
    protos = rng.standard_normal((n, c))
    conv = ConvParams(
        rng.standard_normal((c, c, kernel_size, kernel_size)),
        rng.standard_normal(c),
    )
    idx = rng.integers(0, n, (h, w))
    target = np.zeros((n, h, w))
    for i in range(n):
        target[i] = idx == i
    weight = (rng.random((h, w)) < 0.7).astype(float)

    _, gconv, gp = classification_head_gradients(feats, protos, conv, target, weight)

    def loss():
        probs = gcm_forward(feats, protos, conv)
        return weighted_cross_entropy(probs, target, weight)

    errs = [
        np.max(_err_matrix(gconv.kernel, _central_diff(loss, conv.kernel))),
        np.max(_err_matrix(gconv.bias, _central_diff(loss, conv.bias))),
        np.max(_err_matrix(gp, _central_diff(loss, protos))),
    ]
    return max(errs)


def check_structural_instance(rng, h=8, w=8, c=4, kernel_size=1, support_term=True):
    """One random structural-head instance; returns max relative error."""
    fq = rng.standard_normal((c, h, w))
    fs = rng.standard_normal((c, h, w))
    u = rng.standard_normal(c)
    omega = ConvParams(
        rng.standard_normal((c, c, kernel_size, kernel_size)), rng.standard_normal(c)
    )
    phi = ConvParams(
        rng.standard_normal((1, c, kernel_size, kernel_size)), rng.standard_normal(1)
    )
    target = (rng.random((h, w)) < 0.4).astype(float)

    _, gw, gphi, gu = structural_head_gradients(
        fq, fs, u, omega, phi, target, include_support_term=support_term
    )

    def loss():
        return structural_head_loss(
            fq, fs, u, omega, phi, target, include_support_term=support_term
        )

    errs = [
        np.max(_err_matrix(gw.kernel, _central_diff(loss, omega.kernel))),
        np.max(_err_matrix(gw.bias, _central_diff(loss, omega.bias))),
        np.max(_err_matrix(gu, _central_diff(loss, u))),
    ]
    if support_term:
        errs.append(np.max(_err_matrix(gphi.kernel, _central_diff(loss, phi.kernel))))
        errs.append(np.max(_err_matrix(gphi.bias, _central_diff(loss, phi.bias))))
    return max(errs)


def _err_matrix(analytic, numeric):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), REL_FLOOR)
    return np.abs(analytic - numeric) / denom


def run(trials=100, seed=0, tol=REL_TOL):
    """Full gradient suite; returns (worst error, list of per-trial errors)."""
    rng = np.random.default_rng(seed)
    errors = []
    for t in range(trials):
        if t % 2 == 0:
            errors.append(check_classification_instance(rng))
        else:
            errors.append(check_structural_instance(rng, support_term=(t % 4 == 1)))
    return max(errors), errors
