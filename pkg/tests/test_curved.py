import math
import warnings

import numpy as np
import pytest

from qwlb import walk
from qwlb.coin import SZ
from qwlb.curved import (
    CurvedConfig,
    advection_profile,
    build_rt,
    build_rt_at,
    curved_order,
    curved_schedule,
    curved_step,
    effective_q,
)
from qwlb.errors import ConfigError
from qwlb.fields import Delta, Gaussian, Lattice1D, MassField, init_packet, norm
from qwlb.solvers import SchemeKind, make_schedule

from util import random_mass_field


def test_config_rejects_superluminal_advection():
    a = np.full(16, 1.0)
    a[5] = 1.5
    with pytest.raises(ConfigError, match="site 5"):
        CurvedConfig.free(a, c=1.0)


def test_config_rejects_nonpositive_advection():
    with pytest.raises(ConfigError):
        CurvedConfig.free(np.zeros(8), c=1.0)


def test_effective_q_constant_advection_keeps_q():
    lat = Lattice1D(32)
    mass = MassField.constant(my=0.7)
    cfg = CurvedConfig.from_mass(np.full(32, 1.0), mass, lat)
    qp = effective_q(cfg, lat, 0)
    expected = -1j * 0.7 * np.array([[0, -1j], [1j, 0]])
    assert np.abs(qp - expected).max() <= 1e-15


def test_effective_q_linear_profile_gradient():
    lat = Lattice1D(64)
    eps = 1e-3
    a = 1.0 - eps * lat.z()  # keep A <= c
    cfg = CurvedConfig.free(a, c=1.0)
    qp = effective_q(cfg, lat, 0)
    # interior sites: central difference of a linear profile is exact
    interior = qp[1:-1]
    assert np.abs(interior[:, 0, 0] - (-eps)).max() <= 1e-12
    assert np.abs(interior[:, 1, 1] - eps).max() <= 1e-12
    assert np.abs(interior[:, 0, 1]).max() == 0.0


def test_effective_q_gradient_is_sigma_z_shaped():
    lat = Lattice1D(32)
    a = advection_profile("gaussian-bump", lat, c=1.0)
    cfg = CurvedConfig.free(a, c=1.0)
    qp = effective_q(cfg, lat, 0)
    grad = (np.roll(a, -1) - np.roll(a, 1)) / (2 * lat.dz)
    assert np.abs(qp - grad[:, None, None] * SZ).max() <= 1e-15


class TestFlatLimit:
    def setup_method(self):
        self.lat = Lattice1D(64)
        self.mass = MassField.constant(m0=0.1, mx=0.2, my=0.4, mz=-0.3)
        self.cfg = CurvedConfig.from_mass(np.full(64, self.lat.c), self.mass, self.lat)

    def test_residency_vanishes_and_transfer_matches(self):
        R, T = build_rt(self.cfg, self.lat, 0)
        assert np.abs(R).max() == 0.0
        rows = make_schedule(SchemeKind.QLB, self.mass, self.lat).coin_rows(0)
        assert np.abs(T - rows).max() == 0.0  # identical assembly, bitwise

    def test_step_equals_flat_scheme(self):
        f = init_packet(self.lat, Gaussian(sigma=6.0, k0=0.5), (1.0, 0.4j))
        a = curved_step(f, self.cfg, self.lat)
        b = walk.step(f, make_schedule(SchemeKind.QLB, self.mass, self.lat), self.lat)
        assert np.abs(a.data - b.data).max() <= 1e-15

    def test_time_dependent_flat_limit(self):
        mass = random_mass_field(seed=91, amplitude=0.6)

        def uniform_in_space(j, n):
            # space-uniform but time-varying sample
            row = mass.sampler(np.zeros_like(j), n)
            return row

        uniform = MassField(uniform_in_space, time_dependent=True)
        cfg = CurvedConfig.from_mass(np.full(64, 1.0), uniform, self.lat)
        f = init_packet(self.lat, Gaussian(sigma=5.0), (0.6, 0.8))
        sched_c = curved_schedule(cfg, self.lat)
        sched_q = make_schedule(SchemeKind.QLB, uniform, self.lat)
        a = walk.evolve(f, sched_c, self.lat, 20)
        b = walk.evolve(f, sched_q, self.lat, 20)
        assert np.abs(a.data - b.data).max() <= 1e-14


def test_half_speed_splits_amplitude_evenly():
    lat = Lattice1D(64)
    cfg = CurvedConfig.free(np.full(64, 0.5), c=1.0)
    R, T = build_rt_at(cfg, lat, 10, 0)
    assert np.allclose(R, 0.5 * np.eye(2), atol=1e-15)
    assert np.allclose(T, 0.5 * np.eye(2), atol=1e-15)
    f = init_packet(lat, Delta(10), (1.0, 0.0))
    out = curved_step(f, cfg, lat)
    assert out.data[0, 10] == pytest.approx(0.5, abs=1e-15)
    assert out.data[0, 11] == pytest.approx(0.5, abs=1e-15)
    assert np.count_nonzero(out.data) == 2


def test_uniform_full_speed_free_is_identity_streaming():
    lat = Lattice1D(16)
    cfg = CurvedConfig.free(np.full(16, 1.0), c=1.0)
    R, T = build_rt(cfg, lat, 0)
    assert np.abs(R).max() == 0.0
    assert np.abs(T - np.eye(2)).max() == 0.0


def _pre_inversion_parts(cfg, lat):
    qp = effective_q(cfg, lat, 0)
    R, T = build_rt(cfg, lat, 0)
    L = np.broadcast_to(np.eye(2), qp.shape) - 0.5 * lat.dt * qp
    R0 = np.einsum("jab,jbc->jac", L, R)
    T0 = np.einsum("jab,jbc->jac", L, T)
    return R0, T0


def test_amplitude_routing_conserved_uniform_advection():
    # every spinor fraction either resides or streams to the downwind cell:
    # the residency weight at j plus the transfer weight with which the
    # downwind cell receives j's amplitude add to one (pre-inversion)
    lat = Lattice1D(32)
    for speed in (0.3, 0.5, 0.85, 1.0):
        cfg = CurvedConfig.free(np.full(32, speed), c=1.0)
        R0, T0 = _pre_inversion_parts(cfg, lat)
        for j in range(32):
            jm, jp = (j - 1) % 32, (j + 1) % 32
            assert abs(R0[j, 0, 0] + T0[jp, 0, 0] - 1.0) <= 1e-14
            assert abs(R0[j, 1, 1] + T0[jm, 1, 1] - 1.0) <= 1e-14
            assert abs(R0[j, 0, 1]) <= 1e-15 and abs(T0[j, 1, 0]) <= 1e-15


def test_amplitude_routing_varying_advection_accounts_for_stretch():
    # with nonuniform A the conservative form adds (dt/2)*dA/dz to the
    # budget; the routing weights account for exactly that fraction
    lat = Lattice1D(32)
    rng = np.random.default_rng(7)
    a = 0.2 + 0.75 * rng.random(32)
    cfg = CurvedConfig.free(a, c=1.0)
    grad = (np.roll(a, -1) - np.roll(a, 1)) / (2 * lat.dz)
    R0, T0 = _pre_inversion_parts(cfg, lat)
    for j in range(32):
        jm, jp = (j - 1) % 32, (j + 1) % 32
        assert abs(R0[j, 0, 0] + T0[jp, 0, 0] - 1.0 - 0.5 * lat.dt * grad[j]) <= 1e-13
        assert abs(R0[j, 1, 1] + T0[jm, 1, 1] - 1.0 + 0.5 * lat.dt * grad[j]) <= 1e-13


def test_build_rt_locality():
    lat = Lattice1D(32)
    base = 0.6 + 0.3 * np.sin(2 * math.pi * np.arange(32) / 32)
    cfg1 = CurvedConfig.free(base, c=1.0)
    _, t1 = build_rt(cfg1, lat, 0)
    perturbed = base.copy()
    perturbed[20] *= 0.9  # far from site 5
    cfg2 = CurvedConfig.free(perturbed, c=1.0)
    _, t2 = build_rt(cfg2, lat, 0)
    for j in (4, 5, 6):
        assert np.array_equal(t1[j], t2[j])
    assert not np.array_equal(t1[20], t2[20])


def test_norm_drift_shrinks_under_refinement():
    # the residency map is not unitary off the uniform grid; the drift is a
    # discretization effect and must shrink as the grid refines (same
    # physical profile, same final time)
    def drift(n_sites):
        dz = 128.0 / n_sites
        lat = Lattice1D(n_sites, dz=dz, dt=dz)
        z = lat.z()
        a = 0.95 - 0.3 * np.exp(-((z - 64.0) ** 2) / (2 * 12.8**2))
        cfg = CurvedConfig.free(a, c=1.0)
        f = init_packet(lat, Gaussian(sigma=10.0, k0=0.4, center=40.0), (1.0, 0.0))
        out = walk.evolve(f, curved_schedule(cfg, lat), lat, round(50.0 / dz))
        return abs(norm(out, lat) - 1.0)

    coarse, fine = drift(128), drift(256)
    assert fine < coarse < 1.0


def test_reflecting_boundary_rejected():
    lat = Lattice1D(16, boundary="reflecting")
    cfg = CurvedConfig.free(np.full(16, 0.8), c=1.0)
    with pytest.raises(ConfigError, match="periodic"):
        build_rt(cfg, lat, 0)


def test_curved_order_flat_is_second_order():
    slope, errors = curved_order(
        lambda z: np.full_like(z, 1.0),
        lambda z: np.broadcast_to(-1j * 0.5 * np.array([[0, -1j], [1j, 0]]), (z.size, 2, 2)),
        c=1.0,
        domain=16.0,
        final_time=4.0,
        base_sites=64,
        levels=3,
    )
    assert slope >= 1.9, errors


def test_curved_order_smooth_advection_first_order():
    def profile(z):
        L = 16.0
        return 0.85 - 0.25 * np.exp(-((z - 0.5 * L) ** 2) / (2 * (0.1 * L) ** 2))

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        slope, errors = curved_order(
            profile, None, c=1.0, domain=16.0, final_time=4.0, base_sites=64, levels=3
        )
    assert slope >= 0.9, errors


def test_advection_profiles_respect_bounds():
    lat = Lattice1D(64)
    for name in ("constant", "linear", "gaussian-bump"):
        a = advection_profile(name, lat, c=1.0)
        CurvedConfig.free(a, c=1.0)  # validates 0 < A <= c
