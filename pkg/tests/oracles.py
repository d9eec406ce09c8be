"""Independent reference implementations used only by the tests."""

import math

import numpy as np


def hsic(k, l):
    n = k.shape[0]
    h = np.eye(n) - np.ones((n, n)) / n
    return np.trace(k @ h @ l @ h) / (n - 1) ** 2


def cka_hsic(x, y):
    """Linear-kernel CKA through explicit centering matrices."""
    k, l = x @ x.T, y @ y.T
    return hsic(k, l) / math.sqrt(hsic(k, k) * hsic(l, l))


def ce_scalar(logits, label):
    m = max(logits)
    lse = m + math.log(sum(math.exp(z - m) for z in logits))
    return lse - logits[label]


def kl_scalar(zt, zs, tau):
    def soft(z):
        e = [math.exp(v / tau) for v in z]
        s = sum(e)
        return [v / s for v in e]

    pt, ps = soft(zt), soft(zs)
    return sum(a * math.log(a / b) for a, b in zip(pt, ps))


def ckde_bytes(width, height, records, magic=b"CKDE", version=1, reserved=0, count=None):
    """Assemble a CKDE file with struct, field by field."""
    import struct

    out = magic + struct.pack("<HHHIQ", version, width, height, reserved,
                              len(records) if count is None else count)
    for t, x, y, p in records:
        out += struct.pack("<QHHB", t, x, y, p)
    return out


def random_records(rng, width, height, n):
    t = np.sort(rng.integers(0, 2**40, n))
    return [(int(t[i]), int(rng.integers(width)), int(rng.integers(height)), int(rng.integers(2)))
            for i in range(n)]
