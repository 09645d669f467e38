"""Generic stream-collide engine on the line.

One step of the basic walk is

    psi[n+1, j] = B[j, n] @ (psi1[n, j-1], psi2[n, j+1])

i.e. component 0 streams one site toward +z, component 1 toward -z, and a
per-site 2x2 coin mixes them afterwards.  The extended form adds a
residency matrix R acting on the unshifted amplitudes,

    psi[n+1, j] = R[j, n] @ psi[n, j] + T[j, n] @ (psi1[n, j-1], psi2[n, j+1]),

which is what finite-volume streaming on a stretched metric produces.

Schedules supply whole rows of matrices per step, shape (n_sites, 2, 2);
``CoinSchedule.coin_at`` exposes the per-(site, step) view.  Per-site coin
application is data-parallel: with ``threads > 1`` the site range is cut
into contiguous blocks processed by a thread pool, and each site's result
is the same floating-point expression as in the serial path, so serial
and parallel runs agree bitwise.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidArgumentError, ObserverError
from .fields import Boundary, Lattice1D, SpinorField1D, require_finite

__all__ = ["CoinSchedule", "shift", "step", "step_with_residency", "evolve"]

RowProvider = Callable[[int], np.ndarray]


@dataclass(frozen=True)
class CoinSchedule:
    """Per-step providers of coin rows and (optionally) residency rows.

    ``coin_rows(n)`` returns the (n_sites, 2, 2) transfer stack for step n;
    a residency provider, when present, returns the matching stack of
    matrices applied to the amplitudes that stay in place.  ``unitary``
    is metadata: schedules built from non-unitary collisions (the unstable
    reference scheme) set it False and are exempt from unitarity checks.
    """

    coin_rows: RowProvider
    residency_rows: RowProvider | None = None
    unitary: bool = True

    def coin_at(self, j: int, n: int) -> np.ndarray:
        return self.coin_rows(n)[j]

    def residency_at(self, j: int, n: int) -> np.ndarray:
        if self.residency_rows is None:
            raise InvalidArgumentError("schedule has no residency provider")
        return self.residency_rows(n)[j]

    @classmethod
    def uniform(cls, coin: np.ndarray, n_sites: int, unitary: bool = True) -> "CoinSchedule":
        rows = np.broadcast_to(np.asarray(coin, dtype=np.complex128), (n_sites, 2, 2))
        return cls(coin_rows=lambda n: rows, unitary=unitary)


def shift_data(psi: np.ndarray, boundary: Boundary) -> np.ndarray:
    """Shift component 0 by +1 site and component 1 by -1 site.

    Periodic: plain cyclic shifts.  Reflecting: the amplitude that would
    leave through a wall re-enters at the wall site on the opposite
    component (specular reflection).  Both are permutations of the 2n
    amplitudes, hence exactly norm-preserving.
    """
    out = np.empty_like(psi)
    if boundary is Boundary.PERIODIC:
        out[0] = np.roll(psi[0], 1)
        out[1] = np.roll(psi[1], -1)
        return out
    out[0, 1:] = psi[0, :-1]
    out[0, 0] = psi[1, 0]
    out[1, :-1] = psi[1, 1:]
    out[1, -1] = psi[0, -1]
    return out


def shift(f: SpinorField1D, lat: Lattice1D) -> SpinorField1D:
    return f.with_data(shift_data(f.data, lat.boundary))


def _apply_rows(mats: np.ndarray, psi: np.ndarray, out: np.ndarray, lo: int, hi: int) -> None:
    m = mats[lo:hi]
    out[0, lo:hi] = m[:, 0, 0] * psi[0, lo:hi] + m[:, 0, 1] * psi[1, lo:hi]
    out[1, lo:hi] = m[:, 1, 0] * psi[0, lo:hi] + m[:, 1, 1] * psi[1, lo:hi]


def apply_rows(mats: np.ndarray, psi: np.ndarray, threads: int = 1, out: np.ndarray | None = None) -> np.ndarray:
    """out[:, j] (+)= mats[j] @ psi[:, j], site-partitioned when threaded."""
    n = psi.shape[1]
    if out is None:
        out = np.empty_like(psi)
    if threads <= 1 or n < 4 * threads:
        _apply_rows(mats, psi, out, 0, n)
        return out
    bounds = np.linspace(0, n, threads + 1, dtype=int)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futs = [
            pool.submit(_apply_rows, mats, psi, out, int(bounds[i]), int(bounds[i + 1]))
            for i in range(threads)
        ]
        for fut in futs:
            fut.result()
    return out


def step(f: SpinorField1D, sched: CoinSchedule, lat: Lattice1D, n: int | None = None, threads: int = 1) -> SpinorField1D:
    """One walk step: shift, then per-site coin."""
    n = f.step_index if n is None else n
    shifted = shift_data(f.data, lat.boundary)
    new = apply_rows(np.asarray(sched.coin_rows(n)), shifted, threads)
    return SpinorField1D(new, step_index=n + 1)


def step_with_residency(f: SpinorField1D, sched: CoinSchedule, lat: Lattice1D, n: int | None = None, threads: int = 1) -> SpinorField1D:
    """One extended step: residency part plus transfer applied to shifted amplitudes."""
    if sched.residency_rows is None:
        raise InvalidArgumentError("step_with_residency requires a residency provider")
    n = f.step_index if n is None else n
    shifted = shift_data(f.data, lat.boundary)
    stay = apply_rows(np.asarray(sched.residency_rows(n)), f.data, threads)
    move = apply_rows(np.asarray(sched.coin_rows(n)), shifted, threads)
    return SpinorField1D(stay + move, step_index=n + 1)


def evolve(
    f: SpinorField1D,
    sched: CoinSchedule,
    lat: Lattice1D,
    n_steps: int,
    observer: Callable[[int, SpinorField1D], None] | None = None,
    observer_stride: int = 100,
    threads: int = 1,
) -> SpinorField1D:
    """Apply ``n_steps`` steps starting at ``f.step_index``.

    The residency form is used automatically when the schedule carries a
    residency provider.  The observer, when given, is called with
    (step_index, field) after every step whose index is a multiple of
    ``observer_stride``; an exception inside it aborts the run with an
    ObserverError naming the step.
    """
    if n_steps < 0:
        raise InvalidArgumentError(f"n_steps must be >= 0, got {n_steps}")
    stepper = step_with_residency if sched.residency_rows is not None else step
    cur = f
    for _ in range(n_steps):
        cur = stepper(cur, sched, lat, threads=threads)
        require_finite(cur.data, cur.step_index)
        if observer is not None and cur.step_index % observer_stride == 0:
            try:
                observer(cur.step_index, cur)
            except Exception as exc:  # noqa: BLE001 - wrapped with context
                raise ObserverError(cur.step_index, exc) from exc
    return cur
