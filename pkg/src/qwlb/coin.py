"""2x2 unitary collision matrices ("coins") and exact parameter maps.

A coin is the local U(2) matrix applied at one lattice site after the
streaming shift.  Three constructions are provided:

* :func:`euler_coin` from four angles (xi, alpha, beta, theta),

      exp(-i*xi) * [[exp(i*alpha)*cos(theta),  exp(i*beta)*sin(theta)],
                    [-exp(-i*beta)*sin(theta), exp(-i*alpha)*cos(theta)]]

* :func:`exp_coin`, the exponential map exp(-i*dt*M) of a Hermitian
  coupling matrix M = m0*I + mx*sx + my*sy + mz*sz, evaluated in closed
  form (operator-splitting collision),
* :func:`cayley_coin`, the Cayley transform
  (I + i*dt/2*M)^(-1) (I - i*dt/2*M), the Crank-Nicolson collision of the
  lattice Boltzmann scheme.  It is unitary for every Hermitian M and any
  step size.

:func:`decompose_u2` inverts :func:`euler_coin` on a canonical parameter
domain, and the two ``euler_from_mass_*`` maps compose it with the coin
constructors, giving the exact translation between the mass-matrix and
angle representations.  Angles are always recovered from matrix entries
with two-argument arctangents, never through tangent identities, so the
maps are quadrant-correct and stay finite at tangent singularities.

Canonical parameter domain (a unique representative for every U(2)
matrix): theta in [-pi/2, pi/2], alpha and beta in (-pi/2, pi/2],
xi in (-pi, pi]; beta is set to 0 when theta == 0 and alpha to 0 when
|theta| == pi/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

__all__ = [
    "CoinParams",
    "MassSample",
    "SX",
    "SY",
    "SZ",
    "ID2",
    "euler_coin",
    "exp_coin",
    "cayley_coin",
    "exp_coin_rows",
    "cayley_coin_rows",
    "mass_matrix_rows",
    "expi_hermitian_rows",
    "euler_from_mass_split",
    "euler_from_mass_qlb",
    "decompose_u2",
    "unitarity_deviation",
    "coin_sqrt",
]

SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.complex128)
SY = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=np.complex128)
SZ = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=np.complex128)
ID2 = np.eye(2, dtype=np.complex128)


@dataclass(frozen=True)
class CoinParams:
    """Euler-angle quadruple (radians)."""

    xi: float
    alpha: float
    beta: float
    theta: float

    def __post_init__(self):
        for name in ("xi", "alpha", "beta", "theta"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise InvalidArgumentError(f"angle {name} must be finite, got {v}")


@dataclass(frozen=True)
class MassSample:
    """One (site, step) sample of the coupling fields plus the time step."""

    m0: float = 0.0
    mx: float = 0.0
    my: float = 0.0
    mz: float = 0.0
    dt: float = 1.0

    def __post_init__(self):
        for name in ("m0", "mx", "my", "mz", "dt"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise InvalidArgumentError(f"{name} must be finite, got {v}")

    def matrix(self) -> np.ndarray:
        """Hermitian coupling matrix m0*I + m.sigma."""
        return self.m0 * ID2 + self.mx * SX + self.my * SY + self.mz * SZ


def euler_coin(p: CoinParams) -> np.ndarray:
    ca, sa = math.cos(p.theta), math.sin(p.theta)
    ea = np.exp(1j * p.alpha)
    eb = np.exp(1j * p.beta)
    u = np.array(
        [[ea * ca, eb * sa], [-np.conj(eb) * sa, np.conj(ea) * ca]],
        dtype=np.complex128,
    )
    return np.exp(-1j * p.xi) * u


# ---------------------------------------------------------------------------
# coins from mass samples, scalar and vectorized forms
# ---------------------------------------------------------------------------


def mass_matrix_rows(m0, mx, my, mz) -> np.ndarray:
    """Stack of Hermitian matrices m0*I + m.sigma, shape (..., 2, 2)."""
    m0, mx, my, mz = np.broadcast_arrays(
        *(np.asarray(a, dtype=np.float64) for a in (m0, mx, my, mz))
    )
    out = np.empty(m0.shape + (2, 2), dtype=np.complex128)
    out[..., 0, 0] = m0 + mz
    out[..., 0, 1] = mx - 1j * my
    out[..., 1, 0] = mx + 1j * my
    out[..., 1, 1] = m0 - mz
    return out


def expi_hermitian_rows(m0, mx, my, mz, s: float) -> np.ndarray:
    """exp(+i*s*(m0*I + m.sigma)) in closed form, shape (..., 2, 2).

    Uses exp(i*s*M) = exp(i*s*m0) * (cos(w*s)*I + i*(sin(w*s)/w)*m.sigma)
    with w = |m|; the w -> 0 limit is taken analytically via sinc.
    """
    m0, mx, my, mz = np.broadcast_arrays(
        *(np.asarray(a, dtype=np.float64) for a in (m0, mx, my, mz))
    )
    w = np.sqrt(mx**2 + my**2 + mz**2)
    phase = np.exp(1j * s * m0)
    c = np.cos(w * s)
    # sin(w*s)/w, finite at w = 0 (equals s there)
    snc = s * np.sinc(w * s / np.pi)
    out = np.empty(m0.shape + (2, 2), dtype=np.complex128)
    out[..., 0, 0] = phase * (c + 1j * snc * mz)
    out[..., 0, 1] = phase * (1j * snc * (mx - 1j * my))
    out[..., 1, 0] = phase * (1j * snc * (mx + 1j * my))
    out[..., 1, 1] = phase * (c - 1j * snc * mz)
    return out


def exp_coin_rows(m0, mx, my, mz, dt: float) -> np.ndarray:
    """Vectorized exponential-map coins exp(-i*dt*M)."""
    return expi_hermitian_rows(m0, mx, my, mz, -dt)


def exp_coin(m: MassSample) -> np.ndarray:
    return exp_coin_rows(m.m0, m.mx, m.my, m.mz, m.dt)


def cayley_coin_rows(m0, mx, my, mz, dt: float) -> np.ndarray:
    """Vectorized Cayley coins (I + i*dt/2*M)^(-1) (I - i*dt/2*M).

    Computed by direct linear solve; the solve is the authoritative form
    and is what every scheme that needs this coin shares.
    """
    K = (0.5 * dt) * mass_matrix_rows(m0, mx, my, mz)
    eye = np.broadcast_to(ID2, K.shape)
    return np.linalg.solve(eye + 1j * K, eye - 1j * K)


def cayley_coin(m: MassSample) -> np.ndarray:
    return cayley_coin_rows(m.m0, m.mx, m.my, m.mz, m.dt)


# ---------------------------------------------------------------------------
# decomposition and parameter maps
# ---------------------------------------------------------------------------


def unitarity_deviation(u: np.ndarray) -> float:
    """max-norm of U U^dagger - I."""
    u = np.asarray(u, dtype=np.complex128)
    return float(np.abs(u @ u.conj().T - ID2).max())


def decompose_u2(c: np.ndarray, tol: float = 1e-10) -> CoinParams:
    """Invert :func:`euler_coin` onto the canonical parameter domain.

    Raises InvalidArgumentError when the input deviates from unitarity by
    more than ``tol`` (max-norm of U U^dagger - I).
    """
    u = np.asarray(c, dtype=np.complex128)
    if u.shape != (2, 2):
        raise InvalidArgumentError(f"coin must be 2x2, got shape {u.shape}")
    dev = unitarity_deviation(u)
    if dev > tol:
        raise InvalidArgumentError(f"matrix is not unitary: deviation {dev:.3e} exceeds {tol:.0e}")

    det = u[0, 0] * u[1, 1] - u[0, 1] * u[1, 0]
    xi = -0.5 * np.angle(det)
    v = np.exp(1j * xi) * u
    # project onto the exact SU(2) pattern [[a, b], [-conj(b), conj(a)]]
    a = 0.5 * (v[0, 0] + np.conj(v[1, 1]))
    b = 0.5 * (v[0, 1] - np.conj(v[1, 0]))
    ra, rb = abs(a), abs(b)
    theta = math.atan2(rb, ra)
    alpha = float(np.angle(a)) if ra > 1e-15 else 0.0
    beta = float(np.angle(b)) if rb > 1e-15 else 0.0

    # fold beta into (-pi/2, pi/2]; the sign moves into theta
    if beta > math.pi / 2:
        beta -= math.pi
        theta = -theta
    elif beta <= -math.pi / 2:
        beta += math.pi
        theta = -theta
    # fold alpha into (-pi/2, pi/2]; compensated by xi -> xi + pi, theta -> -theta
    if ra > 1e-15 and not (-math.pi / 2 < alpha <= math.pi / 2):
        alpha += -math.pi if alpha > 0 else math.pi
        xi += math.pi
        theta = -theta
    # wrap xi into (-pi, pi]
    xi = math.remainder(xi, 2.0 * math.pi)
    if xi <= -math.pi:
        xi += 2.0 * math.pi
    return CoinParams(xi=float(xi), alpha=float(alpha), beta=float(beta), theta=float(theta))


def euler_from_mass_split(m: MassSample) -> CoinParams:
    """Angles whose Euler coin reproduces the exponential-map coin of m."""
    return decompose_u2(exp_coin(m))


def euler_from_mass_qlb(m: MassSample) -> CoinParams:
    """Angles whose Euler coin reproduces the Cayley coin of m."""
    return decompose_u2(cayley_coin(m))


def coin_sqrt(u: np.ndarray) -> np.ndarray:
    """Principal square root of a 2x2 unitary matrix.

    Splits u = exp(i*phi) * v with v in SU(2), v = cos(chi)*I - i*sin(chi)*n.sigma,
    and halves both angles.  At chi = pi (v = -I, degenerate eigenvalues)
    the principal root is i*I.
    """
    u = np.asarray(u, dtype=np.complex128)
    det = u[0, 0] * u[1, 1] - u[0, 1] * u[1, 0]
    phi = 0.5 * np.angle(det)
    v = np.exp(-1j * phi) * u
    cos_chi = float(np.clip(0.5 * np.real(v[0, 0] + v[1, 1]), -1.0, 1.0))
    chi = math.acos(cos_chi)
    sin_chi = math.sin(chi)
    if sin_chi < 1e-14:
        root_v = ID2 if cos_chi > 0 else 1j * ID2
    else:
        n_sigma = (np.cos(chi) * ID2 - v) / (1j * sin_chi)
        root_v = math.cos(chi / 2) * ID2 - 1j * math.sin(chi / 2) * n_sigma
    return np.exp(1j * phi / 2) * root_v
