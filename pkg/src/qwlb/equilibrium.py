"""Propagation-relaxation view of the lattice dynamics.

The collision can be read as scattering toward a local quantum
equilibrium ``psi_eq = U psi`` with ``U = exp(i*M*tau)``.  The update then
takes the relaxation form

    psi' = (I - dt*Omega) psi + dt*Omega psi_eq,

followed by component-wise streaming of the post-collision state (collide
then stream, with couplings sampled at the departure site).  Two choices
of the scattering operator are provided:

* ``EXACT``:  Omega = i M (I - U)^(-1).  This is the unique choice for
  which -Omega(psi - psi_eq) = -i M psi identically, so the relaxation
  step reproduces the forward-Euler collision (I - i*dt*M) and the update
  coincides with the unstable naive scheme, inheriting its exact norm
  growth law.
* ``PAPER_FORM``:  Omega = i M (I + U)^(-1), an alternative normalization
  of the same construction.  It does not satisfy the relaxation identity
  for U = exp(i*M*tau); :func:`relaxation_residual` reports the mismatch
  norm so the two variants can be compared quantitatively.

This module is diagnostic: it exposes the stream-relax structure, not the
production integrator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import coin as coins
from .errors import SingularOperatorError
from .fields import Lattice1D, MassField, SpinorField1D
from .walk import apply_rows, shift_data

__all__ = [
    "OmegaForm",
    "RelaxationConfig",
    "local_equilibrium",
    "scattering_omega",
    "collision_generator_rows",
    "relaxation_residual",
    "post_collide",
    "zero_modes",
    "relaxation_report",
]


class OmegaForm(str, Enum):
    PAPER_FORM = "paper"
    EXACT = "exact"


@dataclass(frozen=True)
class RelaxationConfig:
    """Relaxation time tau (defaults to the lattice dt) and Omega variant."""

    tau: float | None = None
    omega_form: OmegaForm = OmegaForm.EXACT

    def resolve_tau(self, lat: Lattice1D) -> float:
        tau = lat.dt if self.tau is None else self.tau
        if not (tau > 0 and math.isfinite(tau)):
            raise ValueError(f"tau must be positive and finite, got {tau}")
        return tau


def _equilibrium_unitary(m: coins.MassSample, tau: float) -> np.ndarray:
    """U = exp(+i*M*tau), unitary for Hermitian M."""
    return coins.expi_hermitian_rows(m.m0, m.mx, m.my, m.mz, tau)


def local_equilibrium(psi_site: np.ndarray, m: coins.MassSample, cfg: RelaxationConfig, tau: float | None = None) -> np.ndarray:
    """psi_eq = U psi at one site."""
    tau = cfg.tau if tau is None else tau
    if tau is None:
        raise ValueError("tau unset; pass tau explicitly or configure RelaxationConfig.tau")
    U = _equilibrium_unitary(m, tau)
    return U @ np.asarray(psi_site, dtype=np.complex128)


def scattering_omega(m: coins.MassSample, cfg: RelaxationConfig, tau: float | None = None) -> np.ndarray:
    """Scattering operator of the configured form.

    Raises SingularOperatorError when the required (I -+ U) inverse does
    not exist (an eigenvalue of M*tau sits at a multiple of 2*pi for the
    exact form, or at an odd multiple of pi for the alternative form).
    """
    tau = cfg.tau if tau is None else tau
    if tau is None:
        raise ValueError("tau unset; pass tau explicitly or configure RelaxationConfig.tau")
    U = _equilibrium_unitary(m, tau)
    M = m.matrix()
    sign = -1.0 if cfg.omega_form is OmegaForm.EXACT else 1.0
    A = coins.ID2 + sign * U
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    if abs(det) < 1e-12:
        eig = np.linalg.eigvals(U)
        raise SingularOperatorError(
            f"(I {'-' if sign < 0 else '+'} U) is singular: |det|={abs(det):.3e}, U eigenvalues {eig}"
        )
    # Omega = i M A^(-1), solved as (A^T X^T = (iM)^T)
    return np.linalg.solve(A.T, (1j * M).T).T


def collision_generator_rows(m0, mx, my, mz, tau: float, form: OmegaForm) -> np.ndarray:
    """G = Omega (I - U) per site, the operator the relaxation update applies.

    For the exact form the product collapses to i*M identically, which also
    extends it continuously across the points where (I - U) itself is not
    invertible (for example M = 0).  The alternative form keeps its genuine
    singularities at eigenvalues of M*tau equal to odd multiples of pi.
    """
    M = coins.mass_matrix_rows(m0, mx, my, mz)
    if form is OmegaForm.EXACT:
        return 1j * M
    U = coins.expi_hermitian_rows(m0, mx, my, mz, tau)
    A = np.broadcast_to(coins.ID2, U.shape) + U
    dets = A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
    bad = np.abs(dets) < 1e-12
    if bad.any():
        j = int(np.argmax(bad))
        raise SingularOperatorError(
            f"(I + U) is singular at site {j}: |det|={abs(dets.reshape(-1)[j]):.3e}, "
            f"U eigenvalues {np.linalg.eigvals(np.asarray(U).reshape(-1, 2, 2)[j])}"
        )
    omega = np.swapaxes(np.linalg.solve(np.swapaxes(A, -1, -2), np.swapaxes(1j * M, -1, -2)), -1, -2)
    return omega @ (np.broadcast_to(coins.ID2, U.shape) - U)


def relaxation_residual(m: coins.MassSample, cfg: RelaxationConfig, tau: float | None = None) -> float:
    """max-norm of Omega (I - U) - i M; identically zero for the exact form."""
    tau = cfg.tau if tau is None else tau
    g = collision_generator_rows(m.m0, m.mx, m.my, m.mz, tau, cfg.omega_form)
    return float(np.abs(g - 1j * m.matrix()).max())


def post_collide(f: SpinorField1D, mass: MassField, lat: Lattice1D, cfg: RelaxationConfig, n: int | None = None) -> SpinorField1D:
    """One relaxation step: collide toward psi_eq, then stream.

    The collision applies psi' = psi - dt * Omega (psi - psi_eq)
    = (I - dt * Omega (I - U)) psi site-wise; streaming then moves the
    post-collision amplitudes to their arrival sites (component 0 one site
    up, component 1 one site down), so the coupling acts at the departure
    site.  Singularities of the configured Omega form propagate.
    """
    n = f.step_index if n is None else n
    tau = cfg.resolve_tau(lat)
    m0, mx, my, mz = mass.sample_row(lat, n)
    try:
        g = collision_generator_rows(m0, mx, my, mz, tau, cfg.omega_form)
    except SingularOperatorError as exc:
        raise SingularOperatorError(f"step {n}: {exc}") from exc
    rows = np.broadcast_to(coins.ID2, g.shape) - lat.dt * g
    post = apply_rows(np.ascontiguousarray(rows), f.data)
    return SpinorField1D(shift_data(post, lat.boundary), step_index=n + 1)


def zero_modes(m: coins.MassSample, rel_tol: float = 1e-12) -> np.ndarray | None:
    """Unit-norm null vector of M when M is (numerically) singular, else None.

    Singularity is judged from the singular values: the determinant
    magnitude (product of singular values) is compared against
    rel_tol * ||M||^2 with ||M|| the largest singular value.  The zero
    matrix returns (1, 0) by convention.
    """
    M = m.matrix()
    s_max = float(np.linalg.norm(M, 2))
    if s_max == 0.0:
        return np.array([1.0 + 0.0j, 0.0 + 0.0j])
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    if abs(det) > rel_tol * s_max**2:
        return None
    _, _, vh = np.linalg.svd(M)
    vec = vh[-1].conj()
    return vec / np.linalg.norm(vec)


def relaxation_report(mass: MassField, lat: Lattice1D, cfg: RelaxationConfig, n: int = 0):
    """Per-site diagnostic rows (j, n, det_M, has_zero_mode, relax_residual)."""
    tau = cfg.resolve_tau(lat)
    m0, mx, my, mz = mass.sample_row(lat, n)
    rows = []
    for j in range(lat.n_sites):
        ms = coins.MassSample(m0[j], mx[j], my[j], mz[j], lat.dt)
        M = ms.matrix()
        det = complex(M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0])
        has_mode = zero_modes(ms) is not None
        rows.append((j, n, det.real, has_mode, relaxation_residual(ms, cfg, tau)))
    return rows
