"""Lattices, two-component spinor fields, observables and checkpoints.

Conventions used throughout the package (lattice units):

* ``c = hbar = 1``.  A 1-D lattice has ``n_sites`` cells of width ``dz``
  and advances in steps of ``dt``; the flat-space solvers additionally
  require ``dz == dt`` so that free streaming is an exact one-site shift.
* A spinor field stores two complex amplitudes per site in an array of
  shape ``(2, n_sites)``.  Component 0 streams toward +z, component 1
  toward -z.
* The default boundary is periodic.  Reflecting walls are implemented as
  specular reflection: an amplitude leaving through a wall re-enters at
  the same site with its direction (component) swapped.  Both boundary
  rules are exact permutations, so streaming never changes the norm.

Norms use exactly rounded summation (``math.fsum``), which makes the
reported value independent of reduction order; ``norm_squared`` is the
precise quantity ``sum_j rho_j * dz`` that ``norm`` takes the square root
of.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .errors import CheckpointFormatError, InvalidArgumentError, NumericError

__all__ = [
    "Boundary",
    "Lattice1D",
    "SpinorField1D",
    "MassField",
    "Gaussian",
    "PlaneWave",
    "Delta",
    "init_packet",
    "density",
    "norm",
    "norm_squared",
    "centroid_spread",
    "save_checkpoint",
    "load_checkpoint",
    "export_density_csv",
]

CHECKPOINT_MAGIC = b"QWLB"
CHECKPOINT_VERSION = 1


class Boundary(str, Enum):
    PERIODIC = "periodic"
    REFLECTING = "reflecting"


@dataclass(frozen=True)
class Lattice1D:
    """Uniform 1-D lattice: ``n_sites`` cells, spacing ``dz``, step ``dt``."""

    n_sites: int
    dz: float = 1.0
    dt: float = 1.0
    boundary: Boundary = Boundary.PERIODIC

    def __post_init__(self):
        if self.n_sites < 4:
            raise InvalidArgumentError(f"n_sites must be >= 4, got {self.n_sites}")
        if not (self.dz > 0.0 and math.isfinite(self.dz)):
            raise InvalidArgumentError(f"dz must be positive and finite, got {self.dz}")
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise InvalidArgumentError(f"dt must be positive and finite, got {self.dt}")
        object.__setattr__(self, "boundary", Boundary(self.boundary))

    @property
    def c(self) -> float:
        """Lattice speed dz/dt."""
        return self.dz / self.dt

    @property
    def unit_cfl(self) -> bool:
        """True when streaming is an exact one-site shift (dz == dt)."""
        return self.dz == self.dt

    def z(self) -> np.ndarray:
        """Cell-center coordinates z_j = j*dz."""
        return np.arange(self.n_sites) * self.dz


@dataclass
class SpinorField1D:
    """Two complex amplitudes per site; ``data`` has shape (2, n_sites)."""

    data: np.ndarray
    step_index: int = 0

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.complex128)
        if self.data.ndim != 2 or self.data.shape[0] != 2:
            raise InvalidArgumentError(f"spinor data must have shape (2, n), got {self.data.shape}")
        if self.step_index < 0:
            raise InvalidArgumentError(f"step_index must be >= 0, got {self.step_index}")
        require_finite(self.data, self.step_index)

    @property
    def n_sites(self) -> int:
        return self.data.shape[1]

    def copy(self) -> "SpinorField1D":
        return SpinorField1D(self.data.copy(), self.step_index)

    def with_data(self, data: np.ndarray, step_index: int | None = None) -> "SpinorField1D":
        return SpinorField1D(data, self.step_index if step_index is None else step_index)


def require_finite(data: np.ndarray, step_index: int) -> None:
    """Fail fast on NaN/Inf, naming the first offending site."""
    finite = np.isfinite(data.real) & np.isfinite(data.imag)
    if not finite.all():
        comp, site = np.argwhere(~finite)[0]
        raise NumericError(
            f"non-finite amplitude in component {comp} at site {site}, step {step_index}: "
            f"{data[comp, site]!r}"
        )


# ---------------------------------------------------------------------------
# mass fields
# ---------------------------------------------------------------------------

RowSampler = Callable[[np.ndarray, int], tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class MassField:
    """Four real coupling fields (m0, mx, my, mz) sampled on (site, step).

    ``sampler(j, n)`` receives an integer site-index array and a step index
    and returns the four component arrays.  Hermiticity of the resulting
    2x2 coupling matrix is equivalent to all four samples being real, which
    ``sample_row`` enforces.
    """

    sampler: RowSampler
    time_dependent: bool = True

    @classmethod
    def constant(cls, m0: float = 0.0, mx: float = 0.0, my: float = 0.0, mz: float = 0.0) -> "MassField":
        vals = (float(m0), float(mx), float(my), float(mz))

        def sample(j: np.ndarray, n: int):
            ones = np.ones(np.shape(j), dtype=np.float64)
            return vals[0] * ones, vals[1] * ones, vals[2] * ones, vals[3] * ones

        return cls(sample, time_dependent=False)

    @classmethod
    def free(cls, m: float) -> "MassField":
        """Free fermion of mass m (pure my coupling, real streaming form)."""
        return cls.constant(my=m)

    @classmethod
    def from_site_arrays(cls, m0, mx, my, mz) -> "MassField":
        arrs = [np.asarray(a, dtype=np.float64) for a in (m0, mx, my, mz)]
        n = arrs[0].shape[0]
        if any(a.shape != (n,) for a in arrs):
            raise InvalidArgumentError("mass component arrays must share one 1-D shape")

        def sample(j: np.ndarray, _n: int):
            return tuple(a[j] for a in arrs)

        return cls(sample, time_dependent=False)

    def sample_row(self, lat_or_n, n: int):
        """Sample all sites at step n; returns four float64 arrays."""
        n_sites = lat_or_n.n_sites if isinstance(lat_or_n, Lattice1D) else int(lat_or_n)
        j = np.arange(n_sites)
        comps = self.sampler(j, n)
        out = []
        for name, a in zip("m0 mx my mz".split(), comps):
            a = np.asarray(a, dtype=np.float64)
            a = np.broadcast_to(a, (n_sites,))
            if not np.isfinite(a).all():
                raise NumericError(f"mass field component {name} not finite at step {n}")
            out.append(a)
        return tuple(out)

    def sample_at(self, j: int, n: int) -> tuple[float, float, float, float]:
        comps = self.sampler(np.asarray([j]), n)
        return tuple(float(np.asarray(c).reshape(-1)[0]) for c in comps)


# ---------------------------------------------------------------------------
# initial conditions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Gaussian:
    """Gaussian envelope of width sigma carrying mean wavenumber k0."""

    sigma: float
    k0: float = 0.0
    center: float | None = None  # default: middle of the lattice


@dataclass(frozen=True)
class PlaneWave:
    k: float


@dataclass(frozen=True)
class Delta:
    j0: int


PacketKind = Gaussian | PlaneWave | Delta


def init_packet(lat: Lattice1D, kind: PacketKind, spinor_weights: Sequence[complex]) -> SpinorField1D:
    """Build an L2-normalized two-component packet.

    The two complex weights set the spinor direction; they are normalized
    away, so only their ratio matters.  The returned field satisfies
    ``norm(f, lat) == 1`` to within 1e-12.
    """
    w = np.asarray(spinor_weights, dtype=np.complex128)
    if w.shape != (2,):
        raise InvalidArgumentError(f"spinor_weights must be a complex pair, got shape {w.shape}")
    if not np.isfinite(w.view(np.float64)).all():
        raise InvalidArgumentError("spinor_weights must be finite")
    if w[0] == 0 and w[1] == 0:
        raise InvalidArgumentError("spinor_weights must not both be zero")

    z = lat.z()
    if isinstance(kind, Gaussian):
        if not (kind.sigma > 0 and math.isfinite(kind.sigma)):
            raise InvalidArgumentError(f"gaussian sigma must be positive, got {kind.sigma}")
        zc = 0.5 * lat.n_sites * lat.dz if kind.center is None else kind.center
        envelope = np.exp(-((z - zc) ** 2) / (4.0 * kind.sigma**2)) * np.exp(1j * kind.k0 * z)
    elif isinstance(kind, PlaneWave):
        envelope = np.exp(1j * kind.k * z)
    elif isinstance(kind, Delta):
        if not 0 <= kind.j0 < lat.n_sites:
            raise InvalidArgumentError(f"delta site {kind.j0} outside lattice of {lat.n_sites}")
        envelope = np.zeros(lat.n_sites, dtype=np.complex128)
        envelope[kind.j0] = 1.0
    else:
        raise InvalidArgumentError(f"unknown packet kind {kind!r}")

    data = w[:, None] * envelope[None, :]
    f = SpinorField1D(data)
    n = norm(f, lat)
    if n == 0.0:
        raise InvalidArgumentError("degenerate packet: zero norm")
    f.data /= n
    return f


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------


def density(f: SpinorField1D) -> np.ndarray:
    """Per-site probability density rho_j = |psi_1j|^2 + |psi_2j|^2."""
    return (f.data.real**2 + f.data.imag**2).sum(axis=0)


def norm_squared(f: SpinorField1D, lat: Lattice1D) -> float:
    """Exactly rounded sum_j rho_j * dz (order-independent)."""
    return math.fsum(density(f)) * lat.dz


def norm(f: SpinorField1D, lat: Lattice1D) -> float:
    return math.sqrt(norm_squared(f, lat))


def centroid_spread(f: SpinorField1D, lat: Lattice1D) -> tuple[float, float]:
    """Density centroid and rms spread, circular on periodic lattices.

    On a torus the centroid is the argument of the mean phasor
    ``sum rho_j exp(2*pi*i*z_j/L)``; the spread is the rms distance from it
    measured through the shorter way around.
    """
    rho = density(f)
    total = rho.sum()
    if total == 0.0:
        return 0.0, 0.0
    z = lat.z()
    L = lat.n_sites * lat.dz
    if lat.boundary is Boundary.PERIODIC:
        ang = 2.0 * np.pi * z / L
        mean = np.angle(np.sum(rho * np.exp(1j * ang))) / (2.0 * np.pi) * L
        if mean < 0:
            mean += L
        dzs = (z - mean + 0.5 * L) % L - 0.5 * L
        spread = math.sqrt(float(np.sum(rho * dzs**2) / total))
        return float(mean), spread
    mean = float(np.sum(rho * z) / total)
    spread = math.sqrt(float(np.sum(rho * (z - mean) ** 2) / total))
    return mean, spread


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------
#
# Binary layout, all little-endian:
#   bytes 0..3   magic "QWLB"
#   u16          version (currently 1)
#   u16          dims (1 or 2)
#   u64 * dims   grid shape (n_sites) or (n_z, n_y)
#   f64          dz
#   f64          dt
#   u64          step index
#   payload      components interleaved per site: for each site (row-major
#                in 2-D), for each component, (re, im) as f64 pairs.
# Payload length must equal n_components * n_sites * 16 bytes, with
# n_components = 2 for dims=1 and 4 for dims=2.

_HEAD = struct.Struct("<4sHH")


def _components_for(dims: int) -> int:
    return 2 if dims == 1 else 4


def write_checkpoint_bytes(components: np.ndarray, shape: tuple[int, ...], dz: float, dt: float, step_index: int) -> bytes:
    dims = len(shape)
    ncomp = _components_for(dims)
    out = bytearray()
    out += _HEAD.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, dims)
    out += struct.pack(f"<{dims}Q", *shape)
    out += struct.pack("<ddQ", dz, dt, step_index)
    # move the component axis last so sites are contiguous site-major
    flat = np.moveaxis(components, 0, -1).reshape(-1, ncomp)
    out += np.ascontiguousarray(flat, dtype="<c16").tobytes()
    return bytes(out)


def read_checkpoint_bytes(blob: bytes):
    """Parse a checkpoint; returns (components, shape, dz, dt, step_index)."""
    if len(blob) < _HEAD.size:
        raise CheckpointFormatError("truncated header", offset=len(blob))
    magic, version, dims = _HEAD.unpack_from(blob, 0)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(f"bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}", offset=0)
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(
            f"unsupported version {version}, this build reads version {CHECKPOINT_VERSION}", offset=4
        )
    if dims not in (1, 2):
        raise CheckpointFormatError(f"dims must be 1 or 2, got {dims}", offset=6)
    off = _HEAD.size
    need = dims * 8 + 8 + 8 + 8
    if len(blob) < off + need:
        raise CheckpointFormatError("truncated header", offset=len(blob))
    shape = struct.unpack_from(f"<{dims}Q", blob, off)
    off += dims * 8
    dz, dt, step_index = struct.unpack_from("<ddQ", blob, off)
    off += 24
    ncomp = _components_for(dims)
    n_sites = int(np.prod(shape))
    expect = ncomp * n_sites * 16
    if len(blob) - off != expect:
        raise CheckpointFormatError(
            f"payload length {len(blob) - off} != expected {expect} for shape {shape}", offset=off
        )
    flat = np.frombuffer(blob, dtype="<c16", count=ncomp * n_sites, offset=off)
    comps = np.moveaxis(flat.reshape(*shape, ncomp), -1, 0).copy()
    return comps, shape, dz, dt, step_index


def save_checkpoint(f: SpinorField1D, lat: Lattice1D, path) -> None:
    blob = write_checkpoint_bytes(f.data, (lat.n_sites,), lat.dz, lat.dt, f.step_index)
    with open(path, "wb") as fh:
        fh.write(blob)


def load_checkpoint(path) -> tuple[SpinorField1D, Lattice1D]:
    """Read a 1-D checkpoint.  Boundary mode is not stored; defaults to periodic."""
    with open(path, "rb") as fh:
        blob = fh.read()
    comps, shape, dz, dt, step_index = read_checkpoint_bytes(blob)
    if len(shape) != 1:
        raise CheckpointFormatError(f"expected a 1-D checkpoint, file has dims={len(shape)}", offset=6)
    lat = Lattice1D(n_sites=int(shape[0]), dz=dz, dt=dt)
    return SpinorField1D(comps, step_index=int(step_index)), lat


def export_density_csv(f: SpinorField1D, lat: Lattice1D, path, provenance: dict | None = None) -> None:
    """Write per-site density as CSV rows ``j,z,rho`` (%.17g formatting)."""
    rho = density(f)
    z = lat.z()
    with open(path, "w", newline="") as fh:
        if provenance:
            for key, value in provenance.items():
                fh.write(f"# {key}={value}\n")
        fh.write("j,z,rho\n")
        for j in range(lat.n_sites):
            fh.write(f"{j},{z[j]:.17g},{rho[j]:.17g}\n")
