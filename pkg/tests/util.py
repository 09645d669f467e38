"""Shared test oracles and deterministic field generators.

The matrix-exponential oracle here is intentionally independent of the
package's closed forms: plain Taylor summation with scaling and squaring.
"""

from __future__ import annotations

import numpy as np

from qwlb.fields import MassField
from qwlb.rng import noise


def expm_oracle(a: np.ndarray, terms: int = 24) -> np.ndarray:
    """Brute-force matrix exponential: scale by 2**s, Taylor-sum, square s times."""
    a = np.asarray(a, dtype=np.complex128)
    norm = np.abs(a).sum(axis=-1).max()
    s = max(0, int(np.ceil(np.log2(max(norm, 1e-300)))) + 1)
    b = a / (2**s)
    out = np.eye(a.shape[0], dtype=np.complex128)
    term = np.eye(a.shape[0], dtype=np.complex128)
    for k in range(1, terms + 1):
        term = term @ b / k
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


def random_mass_field(seed: int, amplitude: float = 1.0, time_dependent: bool = True) -> MassField:
    """Hermitian coupling fields with reproducible space-time white noise."""

    def sampler(j: np.ndarray, n: int):
        step = n if time_dependent else 0
        return tuple(amplitude * noise(j, step, seed, channel=c) for c in range(4))

    return MassField(sampler, time_dependent=time_dependent)


def random_unitary_rows(n_sites: int, step: int, seed: int) -> np.ndarray:
    """Per-site 2x2 unitaries from seeded noise (via QR of a complex matrix)."""
    j = np.arange(n_sites)
    re = np.stack([noise(j, step, seed, channel=c) for c in range(4)], axis=-1)
    im = np.stack([noise(j, step, seed, channel=4 + c) for c in range(4)], axis=-1)
    mats = (re + 1j * im).reshape(n_sites, 2, 2) + 0.1 * np.eye(2)
    q, r = np.linalg.qr(mats)
    # fix the phase convention so the result is deterministic and unitary
    d = np.diagonal(r, axis1=-2, axis2=-1)
    q = q * (d / np.abs(d))[:, None, :]
    return q
