"""Four-component (2+1)-D Dirac solver by dimensional splitting.

State and representation
------------------------
The field carries four complex amplitudes per site of an n_z x n_y
periodic grid, ordered psi = (u1, u2, d1, d2).  The computational basis is
chosen so that streaming along z is diagonal:

    alpha_z = sz (x) I    (u components move +z, d components move -z)
    alpha_y = sx (x) sz
    alpha_x = sx (x) sx
    beta    = sy (x) I

((x) is the Kronecker product; s* are Pauli matrices.)  These four
matrices are Hermitian, square to the identity and pairwise anticommute,
so they generate a Dirac algebra unitarily equivalent to any standard
representation.  gamma matrices are derived as g0 = beta, gk = beta
alpha_k, and g5 = i g0 g1 g2 g3; chiral bilinears built from them are
basis covariant.  The mass couples through beta, which acts as sigma_y
inside each (u_i, d_i) pair, so a y-uniform configuration reduces exactly
to two independent copies of the 1-D solver.

One step (unit CFL per sweep, dz == dy == dt)
---------------------------------------------
1. z-sweep: shift u components +1 site, d components -1 site along z.
2. rotate: apply the constant unitary R that maps alpha_y to the diagonal
   streaming pattern (a Hadamard-like rotation inside each pair).
3. y-sweep: same diagonal shift along y.
4. rotate back (R dagger).
5. collide: per-site Cayley coin of the effective coupling matrix
   M = V I + (m - g <psibar psi>) beta - g <psibar g5 psi> beta g5,
   where V is the impurity potential and the nonlinear bilinears are
   evaluated at the pre-collision state.  For Hermitian M the coin is
   unitary, so the g = 0 dynamics conserves the norm exactly.

The nonlinear term makes M state-dependent; it is evaluated explicitly
(no implicit solve), so norm conservation at g != 0 is approximate and is
measured per run rather than assumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .coin import ID2, SX, SY, SZ
from .errors import InvalidArgumentError, NumericError
from .fields import read_checkpoint_bytes, write_checkpoint_bytes
from .rng import XorShift64Star

__all__ = [
    "Grid2D",
    "SpinorField2D",
    "ImpurityConfig",
    "NJLConfig",
    "Solver2D",
    "init_2d",
    "impurity_field",
    "step_2d",
    "density_2d",
    "norm_2d",
    "run_experiment_2d",
    "diagonal_profile",
    "lobe_metrics",
    "total_variation",
    "save_checkpoint_2d",
    "load_checkpoint_2d",
]

ALPHA_Z = np.kron(SZ, ID2)
ALPHA_Y = np.kron(SX, SZ)
ALPHA_X = np.kron(SX, SX)
BETA = np.kron(SY, ID2)
ID4 = np.eye(4, dtype=np.complex128)

G0 = BETA
G1 = G0 @ ALPHA_X
G2 = G0 @ ALPHA_Y
G3 = G0 @ ALPHA_Z
G5 = 1j * G0 @ G1 @ G2 @ G3
# i * beta g5 is Hermitian; <psibar g5 psi> is purely imaginary, so the
# chiral coupling enters M as (real scalar) * HERM5.
HERM5 = 1j * (G0 @ G5)

_H = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=np.complex128) / math.sqrt(2.0)
_XH = SX @ _H
# Pair (u1, d1) = components (0, 2) rotates by H, pair (u2, d2) = (1, 3)
# by sx H; then R alpha_y R^dagger = alpha_z and the y-sweep reuses the
# diagonal shift.
ROT_Y = np.zeros((4, 4), dtype=np.complex128)
ROT_Y[np.ix_([0, 2], [0, 2])] = _H
ROT_Y[np.ix_([1, 3], [1, 3])] = _XH
ROT_Y_DAG = ROT_Y.conj().T


@dataclass(frozen=True)
class Grid2D:
    """Periodic n_z x n_y grid; dz is also the y spacing."""

    n_z: int
    n_y: int
    dz: float = 1.0
    dt: float = 1.0

    def __post_init__(self):
        if self.n_z < 4 or self.n_y < 4:
            raise InvalidArgumentError(f"grid must be at least 4x4, got {self.n_z}x{self.n_y}")
        if not (self.dz > 0 and self.dt > 0):
            raise InvalidArgumentError("dz and dt must be positive")

    @property
    def n_sites(self) -> int:
        return self.n_z * self.n_y

    def z(self) -> np.ndarray:
        return np.arange(self.n_z) * self.dz

    def y(self) -> np.ndarray:
        return np.arange(self.n_y) * self.dz


@dataclass
class SpinorField2D:
    """Four complex components on the grid; data shape (4, n_z, n_y)."""

    data: np.ndarray
    step_index: int = 0

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.complex128)
        if self.data.ndim != 3 or self.data.shape[0] != 4:
            raise InvalidArgumentError(f"2-D spinor data must have shape (4, nz, ny), got {self.data.shape}")
        if not np.isfinite(self.data.view(np.float64)).all():
            bad = np.argwhere(~(np.isfinite(self.data.real) & np.isfinite(self.data.imag)))[0]
            raise NumericError(
                f"non-finite amplitude in component {bad[0]} at site ({bad[1]}, {bad[2]}), "
                f"step {self.step_index}"
            )

    def copy(self) -> "SpinorField2D":
        return SpinorField2D(self.data.copy(), self.step_index)


@dataclass(frozen=True)
class ImpurityConfig:
    """Random scalar barriers: fraction of sites, height, placement seed."""

    concentration: float
    v: float
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.concentration <= 1.0:
            raise InvalidArgumentError(f"concentration must be in [0, 1], got {self.concentration}")


@dataclass(frozen=True)
class NJLConfig:
    """Quartic self-interaction strength g and bare mass m."""

    g: float
    m: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.g) and math.isfinite(self.m)):
            raise InvalidArgumentError("NJL parameters must be finite")


def density_2d(f: SpinorField2D) -> np.ndarray:
    return (f.data.real**2 + f.data.imag**2).sum(axis=0)


def norm_2d(f: SpinorField2D, grid: Grid2D) -> float:
    cell = grid.dz * grid.dz
    return math.sqrt(math.fsum(density_2d(f).ravel()) * cell)


def init_2d(
    grid: Grid2D,
    sigma: float,
    k_z: float,
    k_y: float,
    c_u: float,
    c_d: float,
    center: tuple[float, float] | None = None,
) -> SpinorField2D:
    """Gaussian minimum-uncertainty packet with counter-phased u/d parts.

    u components get envelope * exp(+i(k_z z + k_y y)) * c_u, d components
    the conjugate phase with c_d; the weights must satisfy
    2 c_u^2 + 2 c_d^2 = 1 so the total density equals the squared envelope
    pointwise.  The result is L2-normalized on the grid.
    """
    if not (sigma > 0 and math.isfinite(sigma)):
        raise InvalidArgumentError(f"sigma must be positive, got {sigma}")
    constraint = 2.0 * c_u**2 + 2.0 * c_d**2
    if abs(constraint - 1.0) > 1e-12:
        raise InvalidArgumentError(
            f"weights must satisfy 2*c_u^2 + 2*c_d^2 = 1, got {constraint!r}"
        )
    zc, yc = center if center is not None else (0.5 * grid.n_z * grid.dz, 0.5 * grid.n_y * grid.dz)
    z = grid.z()[:, None] - zc
    y = grid.y()[None, :] - yc
    envelope = np.exp(-(z**2 + y**2) / (4.0 * sigma**2)) / math.sqrt(2.0 * math.pi * sigma**2)
    phase = np.exp(1j * (k_z * z + k_y * y))
    up = c_u * envelope * phase
    down = c_d * envelope * np.conj(phase)
    data = np.stack([up, up, down, down])
    f = SpinorField2D(data)
    f.data /= norm_2d(f, grid)
    return f


def impurity_field(grid: Grid2D, cfg: ImpurityConfig) -> np.ndarray:
    """Scalar potential with exactly round(C*N) sites at height v.

    Site selection uses the xorshift64* generator (partial Fisher-Yates
    over the flattened row-major grid), so a seed fully determines the
    pattern on every platform.
    """
    n = grid.n_sites
    k = round(cfg.concentration * n)
    out = np.zeros(n, dtype=np.float64)
    if k:
        sites = XorShift64Star(cfg.seed).choose(n, k)
        out[sites] = cfg.v
    return out.reshape(grid.n_z, grid.n_y)


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------


def _shift_diag(psi: np.ndarray, axis: int) -> np.ndarray:
    """Components 0,1 move +1, components 2,3 move -1 along the grid axis (0=z, 1=y)."""
    out = np.empty_like(psi)
    out[0] = np.roll(psi[0], 1, axis=axis)
    out[1] = np.roll(psi[1], 1, axis=axis)
    out[2] = np.roll(psi[2], -1, axis=axis)
    out[3] = np.roll(psi[3], -1, axis=axis)
    return out


def _apply_matrix(mat: np.ndarray, psi: np.ndarray) -> np.ndarray:
    return np.tensordot(mat, psi, axes=(1, 0))


def _apply_stack(stack: np.ndarray, psi: np.ndarray) -> np.ndarray:
    # stack (nz, ny, 4, 4) applied site-wise
    moved = np.moveaxis(psi, 0, -1)[..., None]  # (nz, ny, 4, 1)
    return np.moveaxis((stack @ moved)[..., 0], -1, 0)


def _cayley_stack(m_stack: np.ndarray, dt: float) -> np.ndarray:
    k = (0.5 * dt) * m_stack
    eye = np.broadcast_to(ID4, m_stack.shape)
    return np.linalg.solve(eye + 1j * k, eye - 1j * k)


class Solver2D:
    """Splitting solver; precomputes static collision coins when possible."""

    def __init__(
        self,
        grid: Grid2D,
        mass: float = 0.0,
        potential: np.ndarray | None = None,
        njl: NJLConfig | None = None,
        threads: int = 1,
    ):
        if grid.dz != grid.dt:
            raise InvalidArgumentError(
                f"sweeps require unit CFL (dz == dt), got dz={grid.dz}, dt={grid.dt}"
            )
        self.grid = grid
        self.njl = njl
        self.threads = max(1, threads)
        self.bare_mass = njl.m if njl is not None else mass
        if potential is not None:
            potential = np.asarray(potential, dtype=np.float64)
            if potential.shape != (grid.n_z, grid.n_y):
                raise InvalidArgumentError(
                    f"potential shape {potential.shape} != grid {(grid.n_z, grid.n_y)}"
                )
        self.potential = potential
        self._nonlinear = njl is not None and njl.g != 0.0
        self._static_coin: np.ndarray | None = None
        self._static_stack: np.ndarray | None = None
        if not self._nonlinear:
            m_const = self.bare_mass * BETA
            if potential is None:
                self._static_coin = _cayley_stack(m_const[None], grid.dt)[0]
            else:
                stack = potential[..., None, None] * ID4 + m_const
                self._static_stack = _cayley_stack(stack, grid.dt)

    def _collision(self, psi: np.ndarray) -> np.ndarray:
        if self._static_coin is not None:
            coin = self._static_coin
            return self._chunked(lambda lo, hi, p: _apply_matrix(coin, p), psi)
        if self._static_stack is not None:
            stack = self._static_stack
            return self._chunked(lambda lo, hi, p: _apply_stack(stack[lo:hi], p), psi)
        return self._chunked(self._nonlinear_collision, psi)

    def _nonlinear_collision(self, lo: int, hi: int, psi: np.ndarray) -> np.ndarray:
        # Effective coupling M = c*I + a*beta + b*herm5 with real scalar
        # fields; beta and herm5 anticommute and square to the identity, so
        # the Cayley coin reduces to the closed form
        #   T = [(1 + K^2 c^2 - K^2 w^2) I - 2 i K (a*beta + b*herm5)] / D,
        #   D = 1 + 2 i K c - K^2 c^2 + K^2 w^2,  w^2 = a^2 + b^2,  K = dt/2,
        # applied as three constant-matrix products per site.
        g = self.njl.g
        beta_psi = _apply_matrix(BETA, psi)
        herm_psi = _apply_matrix(HERM5, psi)
        a = self.bare_mass - g * (psi.conj() * beta_psi).sum(axis=0).real
        b = g * (psi.conj() * herm_psi).sum(axis=0).real
        c = self.potential[lo:hi] if self.potential is not None else np.float64(0.0)
        kk = 0.5 * self.grid.dt
        w2 = a * a + b * b
        denom = 1.0 + 2.0j * kk * c - kk**2 * (c * c) + kk**2 * w2
        s0 = (1.0 + kk**2 * (c * c) - kk**2 * w2) / denom
        sa = (-2.0j * kk) * a / denom
        sb = (-2.0j * kk) * b / denom
        return s0[None] * psi + sa[None] * beta_psi + sb[None] * herm_psi

    def _chunked(self, fn: Callable[[int, int, np.ndarray], np.ndarray], psi: np.ndarray) -> np.ndarray:
        """Apply a per-site map over z-chunks; bitwise identical to serial."""
        nz = psi.shape[1]
        if self.threads <= 1 or nz < 2 * self.threads:
            return fn(0, nz, psi)
        from concurrent.futures import ThreadPoolExecutor

        bounds = np.linspace(0, nz, self.threads + 1, dtype=int)
        out = np.empty_like(psi)

        def work(lo: int, hi: int):
            out[:, lo:hi] = fn(lo, hi, psi[:, lo:hi])

        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            futs = [pool.submit(work, int(bounds[i]), int(bounds[i + 1])) for i in range(self.threads)]
            for fu in futs:
                fu.result()
        return out

    def step(self, f: SpinorField2D) -> SpinorField2D:
        psi = _shift_diag(f.data, axis=0)  # z-sweep
        psi = self._chunked(lambda lo, hi, p: _apply_matrix(ROT_Y, p), psi)
        psi = _shift_diag(psi, axis=1)  # y-sweep in the rotated basis
        psi = self._chunked(lambda lo, hi, p: _apply_matrix(ROT_Y_DAG, p), psi)
        psi = self._collision(psi)
        return SpinorField2D(psi, step_index=f.step_index + 1)

    def evolve(self, f: SpinorField2D, n_steps: int, observer=None, stride: int = 100) -> SpinorField2D:
        cur = f
        for _ in range(n_steps):
            cur = self.step(cur)
            if observer is not None and cur.step_index % stride == 0:
                observer(cur.step_index, cur)
        return cur


def step_2d(
    f: SpinorField2D,
    grid: Grid2D,
    mass: float = 0.0,
    potential: np.ndarray | None = None,
    njl: NJLConfig | None = None,
    threads: int = 1,
) -> SpinorField2D:
    """Single splitting step (functional form of :class:`Solver2D`)."""
    return Solver2D(grid, mass, potential, njl, threads).step(f)


# ---------------------------------------------------------------------------
# packet diagnostics
# ---------------------------------------------------------------------------


def circular_centroid(weights: np.ndarray, n: int) -> float:
    """Weighted circular mean position on a ring of n cells."""
    idx = np.arange(n)
    ang = 2.0 * np.pi * idx / n
    phasor = np.sum(weights * np.exp(1j * ang))
    pos = np.angle(phasor) / (2.0 * np.pi) * n
    return pos % n


def axis_centroids(rho: np.ndarray, grid: Grid2D) -> tuple[float, float]:
    """Circular density centroid (z, y) in physical units."""
    wz = rho.sum(axis=1)
    wy = rho.sum(axis=0)
    return (
        circular_centroid(wz, grid.n_z) * grid.dz,
        circular_centroid(wy, grid.n_y) * grid.dz,
    )


def _centered_coords(rho: np.ndarray, grid: Grid2D) -> tuple[np.ndarray, np.ndarray]:
    """Site offsets from the circular density centroid, unwrapped to
    [-L/2, L/2) on each axis.  Valid as long as the packet fits in half
    the torus around its own centroid."""
    cz, cy = axis_centroids(rho, grid)
    Lz = grid.n_z * grid.dz
    Ly = grid.n_y * grid.dz
    dz = (grid.z()[:, None] - cz + 0.5 * Lz) % Lz - 0.5 * Lz
    dy = (grid.y()[None, :] - cy + 0.5 * Ly) % Ly - 0.5 * Ly
    return np.broadcast_to(dz, rho.shape), np.broadcast_to(dy, rho.shape)


def diagonal_profile(rho: np.ndarray, grid: Grid2D) -> tuple[np.ndarray, np.ndarray]:
    """Density marginal along the packet's travel diagonal.

    Sites are projected onto p = (dz + dy)/sqrt(2) with (dz, dy) the
    centroid-centered circular offsets.  The projected positions live on
    an exact sub-lattice of spacing dz/sqrt(2) (up to one global fractional
    offset), so the marginal is accumulated per sub-lattice point and has
    no empty interleaved bins.  Returns (positions, marginal).
    """
    dz, dy = _centered_coords(rho, grid)
    m = (dz + dy) / grid.dz  # integer lattice shifted by one common fraction
    frac = float(m.flat[0] - np.rint(m.flat[0]))
    k = np.rint(m - frac).astype(np.int64)
    k0 = int(k.min())
    marginal = np.bincount((k - k0).ravel(), weights=rho.ravel())
    positions = (np.arange(marginal.size) + k0 + frac) * grid.dz / math.sqrt(2.0)
    return positions, marginal


@dataclass(frozen=True)
class LobeMetrics:
    separation: float  # Euclidean lobe-centroid distance along the diagonal
    sigma: float  # larger per-lobe rms width along the diagonal
    mass_plus: float
    mass_minus: float

    @property
    def separated(self) -> bool:
        return self.separation > 4.0 * self.sigma


def lobe_metrics(rho: np.ndarray, grid: Grid2D) -> LobeMetrics:
    """Two-lobe statistics of a density along its travel diagonal.

    The diagonal profile is split at its mass centroid into two halves;
    each contributes a centroid and rms width.  For a single Gaussian blob
    the half separation is ~2.7 half-widths (2 sqrt(2/pi) over
    sqrt(1 - 2/pi)); genuinely split packets exceed 4.
    """
    centers, marginal = diagonal_profile(rho, grid)
    total = float(marginal.sum())
    if total <= 0:
        raise InvalidArgumentError("density carries no mass")
    mean = float((marginal * centers).sum() / total)
    left = centers < mean
    right = ~left
    mass_l = float(marginal[left].sum())
    mass_r = float(marginal[right].sum())
    if mass_l == 0 or mass_r == 0:
        return LobeMetrics(0.0, float("inf"), mass_r, mass_l)
    c_l = float((marginal[left] * centers[left]).sum() / mass_l)
    c_r = float((marginal[right] * centers[right]).sum() / mass_r)
    s_l = math.sqrt(float((marginal[left] * (centers[left] - c_l) ** 2).sum() / mass_l))
    s_r = math.sqrt(float((marginal[right] * (centers[right] - c_r) ** 2).sum() / mass_r))
    return LobeMetrics(
        separation=c_r - c_l,
        sigma=max(s_l, s_r),
        mass_plus=mass_r,
        mass_minus=mass_l,
    )


def total_variation(marginal: np.ndarray) -> float:
    """Total variation of the mass-normalized marginal (fringe contrast)."""
    m = marginal / marginal.sum()
    return float(np.abs(np.diff(m)).sum())


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


@dataclass
class ExperimentResult:
    kind: str
    params: dict
    steps: list[int] = field(default_factory=list)
    norms: list[float] = field(default_factory=list)
    centroids: list[tuple[float, float]] = field(default_factory=list)
    spreads: list[float] = field(default_factory=list)
    snapshots: list[tuple[int, np.ndarray]] = field(default_factory=list)
    final: SpinorField2D | None = None


def _packet_spread(rho: np.ndarray, grid: Grid2D) -> float:
    cz, cy = axis_centroids(rho, grid)
    z = grid.z()[:, None]
    y = grid.y()[None, :]
    Lz = grid.n_z * grid.dz
    Ly = grid.n_y * grid.dz
    dz = (z - cz + 0.5 * Lz) % Lz - 0.5 * Lz
    dy = (y - cy + 0.5 * Ly) % Ly - 0.5 * Ly
    total = rho.sum()
    return math.sqrt(float((rho * (dz**2 + dy**2)).sum() / total))


def run_experiment_2d(
    kind: str,
    params: dict,
    grid: Grid2D,
    n_steps: int,
    snapshot_stride: int,
    threads: int = 1,
    record_stride: int = 10,
    snapshot_observer=None,
) -> ExperimentResult:
    """Run a named 2-D experiment and collect densities and packet tracks.

    ``kind`` is ``"impurity"`` (scalar barriers, directed massless packet)
    or ``"njl"`` (self-interacting packet with counter-phased halves).
    Snapshots of the density are stored every ``snapshot_stride`` steps;
    norm, circular centroid and rms spread every ``record_stride`` steps.
    ``snapshot_observer(step, field)``, when given, is called at every
    snapshot step with the full field (for checkpointing).
    """
    p = dict(params)
    sigma = float(p.get("sigma", 12.0))
    if kind == "impurity":
        conc = float(p.get("concentration", 0.0))
        v = float(p.get("v", 0.0))
        seed = int(p.get("seed", 1))
        k_z = float(p.get("k_z", 0.117))
        k_y = float(p.get("k_y", 0.0))
        center = p.get("center")
        potential = impurity_field(grid, ImpurityConfig(conc, v, seed)) if conc > 0 and v != 0 else None
        # pure u packet: +z moving eigenmode of the massless Hamiltonian
        f = init_2d(grid, sigma, k_z, k_y, c_u=1.0 / math.sqrt(2.0), c_d=0.0, center=center)
        solver = Solver2D(grid, mass=float(p.get("mass", 0.0)), potential=potential, threads=threads)
    elif kind == "njl":
        g = float(p.get("g", 0.0))
        m = float(p.get("m", 0.0))
        k = float(p.get("k", 0.0))
        c_u = float(p.get("c_u", 0.5))
        c_d = float(p.get("c_d", 0.5))
        f = init_2d(grid, sigma, k, k, c_u=c_u, c_d=c_d, center=p.get("center"))
        solver = Solver2D(grid, njl=NJLConfig(g=g, m=m), threads=threads)
    else:
        raise InvalidArgumentError(f"unknown experiment kind {kind!r}")

    res = ExperimentResult(kind=kind, params=p)

    def record(step: int, fld: SpinorField2D) -> None:
        rho = density_2d(fld)
        res.steps.append(step)
        res.norms.append(norm_2d(fld, grid))
        res.centroids.append(axis_centroids(rho, grid))
        res.spreads.append(_packet_spread(rho, grid))

    record(0, f)
    res.snapshots.append((0, density_2d(f)))
    if snapshot_observer is not None:
        snapshot_observer(0, f)
    cur = f
    for _ in range(n_steps):
        cur = solver.step(cur)
        if cur.step_index % record_stride == 0 or cur.step_index == n_steps:
            record(cur.step_index, cur)
        if cur.step_index % snapshot_stride == 0 or cur.step_index == n_steps:
            res.snapshots.append((cur.step_index, density_2d(cur)))
            if snapshot_observer is not None:
                snapshot_observer(cur.step_index, cur)
    res.final = cur
    return res


def save_checkpoint_2d(f: SpinorField2D, grid: Grid2D, path) -> None:
    blob = write_checkpoint_bytes(f.data, (grid.n_z, grid.n_y), grid.dz, grid.dt, f.step_index)
    with open(path, "wb") as fh:
        fh.write(blob)


def load_checkpoint_2d(path) -> tuple[SpinorField2D, Grid2D]:
    with open(path, "rb") as fh:
        blob = fh.read()
    comps, shape, dz, dt, step_index = read_checkpoint_bytes(blob)
    if len(shape) != 2:
        raise InvalidArgumentError(f"expected a 2-D checkpoint, file has dims={len(shape)}")
    grid = Grid2D(n_z=int(shape[0]), n_y=int(shape[1]), dz=dz, dt=dt)
    return SpinorField2D(comps, step_index=int(step_index)), grid
