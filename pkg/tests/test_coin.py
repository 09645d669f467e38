import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qwlb.coin import (
    CoinParams,
    MassSample,
    cayley_coin,
    coin_sqrt,
    decompose_u2,
    euler_coin,
    euler_from_mass_qlb,
    euler_from_mass_split,
    exp_coin,
    unitarity_deviation,
)
from qwlb.errors import InvalidArgumentError

from util import expm_oracle

finite_angle = st.floats(min_value=-3.0, max_value=3.0, allow_nan=False)
mass_component = st.floats(min_value=-5.0, max_value=5.0, allow_nan=False)
step_size = st.floats(min_value=1e-3, max_value=2.0, allow_nan=False)


def mass_samples():
    return st.builds(
        MassSample, m0=mass_component, mx=mass_component, my=mass_component,
        mz=mass_component, dt=step_size,
    )


# --- euler_coin -------------------------------------------------------------


def test_euler_identity():
    assert np.array_equal(euler_coin(CoinParams(0, 0, 0, 0)), np.eye(2))


def test_euler_pure_swap():
    u = euler_coin(CoinParams(0, 0, 0, math.pi / 2))
    assert np.allclose(u, [[0, 1], [-1, 0]], atol=1e-15)


def test_euler_minus_identity_is_special_unitary():
    u = euler_coin(CoinParams(math.pi, 0, 0, 0))
    assert np.allclose(u, -np.eye(2), atol=1e-15)
    det = u[0, 0] * u[1, 1] - u[0, 1] * u[1, 0]
    assert abs(det - 1.0) < 1e-15


@settings(max_examples=100, deadline=None)
@given(finite_angle, finite_angle, finite_angle, finite_angle)
def test_euler_always_unitary(xi, alpha, beta, theta):
    assert unitarity_deviation(euler_coin(CoinParams(xi, alpha, beta, theta))) <= 1e-14


@settings(max_examples=60, deadline=None)
@given(finite_angle, finite_angle, finite_angle, finite_angle)
def test_special_unitary_iff_half_turn_phase(xi, alpha, beta, theta):
    u = euler_coin(CoinParams(xi, alpha, beta, theta))
    det = u[0, 0] * u[1, 1] - u[0, 1] * u[1, 0]
    is_su2 = abs(det - 1.0) < 1e-12
    half_turn = min(abs(math.remainder(xi, math.pi)), math.pi) < 1e-12
    assert is_su2 == half_turn


# --- exp_coin ---------------------------------------------------------------


def test_exp_coin_zero_mass():
    assert np.allclose(exp_coin(MassSample(dt=0.7)), np.eye(2), atol=1e-16)


def test_exp_coin_pure_phase():
    u = exp_coin(MassSample(m0=1.0, dt=0.1))
    assert np.allclose(u, np.exp(-0.1j) * np.eye(2), atol=1e-15)


def test_exp_coin_real_rotation():
    m, dt = 0.8, 0.3
    u = exp_coin(MassSample(my=m, dt=dt))
    c, s = math.cos(m * dt), math.sin(m * dt)
    assert np.allclose(u, [[c, -s], [s, c]], atol=1e-15)
    assert np.abs(u.imag).max() == 0.0  # real streaming form stays real


@settings(max_examples=150, deadline=None)
@given(mass_samples())
def test_exp_coin_matches_taylor_oracle(ms):
    direct = exp_coin(ms)
    oracle = expm_oracle(-1j * ms.dt * ms.matrix())
    assert np.abs(direct - oracle).max() <= 1e-12
    assert unitarity_deviation(direct) <= 1e-13


def test_exp_coin_near_quarter_turn():
    # |m| dt right at pi/2 where tangent parametrizations blow up
    ms = MassSample(mx=1.0, dt=math.pi / 2)
    u = exp_coin(ms)
    assert np.abs(u - expm_oracle(-1j * ms.dt * ms.matrix())).max() <= 1e-13
    p = euler_from_mass_split(ms)
    assert np.abs(euler_coin(p) - u).max() <= 1e-12


# --- cayley_coin ------------------------------------------------------------


def test_cayley_zero_mass():
    assert np.allclose(cayley_coin(MassSample(dt=0.5)), np.eye(2), atol=1e-16)


def test_cayley_free_entries():
    ms = MassSample(my=1.0, dt=0.2)
    u = cayley_coin(ms)
    a = 0.99 / 1.01
    b = 0.2 / 1.01
    assert np.allclose(u, [[a, -b], [b, a]], atol=1e-15)
    assert a * a + b * b == pytest.approx(1.0, abs=1e-15)


def explicit_cayley(ms: MassSample) -> np.ndarray:
    """Closed-form entries of the Crank-Nicolson transfer matrix.

    Derived by inverting (I + i*dt/2*M) analytically for
    M = m0 I + m.sigma, using msq = m0^2 - |m|^2:
        C = 1 + i*dt*m0 - dt^2/4 * msq
        T = [[1 - i*dt*mz + dt^2/4*msq, -dt*(i*mx + my)],
             [-dt*(i*mx - my),           1 + i*dt*mz + dt^2/4*msq]] / C
    Kept as an independent oracle for the linear-solve implementation.
    """
    dt = ms.dt
    msq = ms.m0**2 - (ms.mx**2 + ms.my**2 + ms.mz**2)
    c = 1.0 + 1j * dt * ms.m0 - 0.25 * dt**2 * msq
    t = np.array(
        [
            [1.0 - 1j * dt * ms.mz + 0.25 * dt**2 * msq, -dt * (1j * ms.mx + ms.my)],
            [-dt * (1j * ms.mx - ms.my), 1.0 + 1j * dt * ms.mz + 0.25 * dt**2 * msq],
        ],
        dtype=complex,
    )
    return t / c


@settings(max_examples=150, deadline=None)
@given(mass_samples())
def test_cayley_solve_matches_explicit_entries(ms):
    assert np.abs(cayley_coin(ms) - explicit_cayley(ms)).max() <= 1e-12


@settings(max_examples=150, deadline=None)
@given(mass_samples())
def test_cayley_unitary_any_step(ms):
    assert unitarity_deviation(cayley_coin(ms)) <= 1e-13


def test_cayley_pade_orders():
    # free-mass entries approximate cos/sin with errors O(dt^4) and O(dt^3)
    m = 1.0
    dts = np.array([0.4, 0.2, 0.1, 0.05])
    err_a, err_b = [], []
    for dt in dts:
        u = cayley_coin(MassSample(my=m, dt=dt))
        err_a.append(abs(u[0, 0].real - math.cos(m * dt)))
        err_b.append(abs(u[1, 0].real - math.sin(m * dt)))
    slope_a = np.polyfit(np.log(dts), np.log(err_a), 1)[0]
    slope_b = np.polyfit(np.log(dts), np.log(err_b), 1)[0]
    assert slope_a > 3.8
    assert slope_b > 2.8


# --- parameter maps ---------------------------------------------------------


def test_split_map_zero_mass():
    p = euler_from_mass_split(MassSample(dt=0.4))
    assert (p.xi, p.alpha, p.beta, p.theta) == (0.0, 0.0, 0.0, 0.0)


def test_split_map_pure_phase():
    p = euler_from_mass_split(MassSample(m0=1.0, dt=0.1))
    assert p.xi == pytest.approx(0.1, abs=1e-15)
    assert (p.alpha, p.beta, p.theta) == (0.0, 0.0, 0.0)


def test_split_map_free_mass():
    ms = MassSample(my=1.0, dt=0.2)
    p = euler_from_mass_split(ms)
    assert p.alpha == 0.0 and p.beta == 0.0 and p.xi == pytest.approx(0.0, abs=1e-15)
    assert abs(math.tan(p.theta)) == pytest.approx(math.tan(0.2), rel=1e-12)
    assert np.abs(euler_coin(p) - exp_coin(ms)).max() <= 1e-12


def test_qlb_map_zero_mass():
    p = euler_from_mass_qlb(MassSample(dt=0.4))
    assert (p.xi, p.alpha, p.beta, abs(p.theta)) == (0.0, 0.0, 0.0, 0.0)


def test_qlb_map_free_mass_exact():
    # the tangent relation is exact for every mass; for m*dt > 2 the
    # coin's diagonal turns negative and the canonical representative
    # moves that sign into xi = pi (tan is pi-periodic, so the relation
    # below is unchanged)
    for m, dt in [(1.0, 0.2), (0.4, 0.5), (3.0, 0.9)]:
        p = euler_from_mass_qlb(MassSample(my=m, dt=dt))
        assert math.sin(p.xi) == pytest.approx(0.0, abs=1e-14)
        assert p.alpha == 0.0 and p.beta == 0.0
        expected_tan = -m * dt / (1.0 - 0.25 * dt**2 * m**2)
        assert math.tan(p.theta) == pytest.approx(expected_tan, rel=1e-12)
    assert euler_from_mass_qlb(MassSample(my=1.0, dt=0.2)).xi == 0.0


def test_qlb_map_free_mass_value():
    p = euler_from_mass_qlb(MassSample(my=1.0, dt=0.2))
    assert math.tan(p.theta) == pytest.approx(-0.2 / 0.99, rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(mass_samples())
def test_representation_equivalence(ms):
    split = euler_coin(euler_from_mass_split(ms))
    assert np.abs(split - exp_coin(ms)).max() <= 1e-12
    qlb = euler_coin(euler_from_mass_qlb(ms))
    assert np.abs(qlb - cayley_coin(ms)).max() <= 1e-12


def test_representation_equivalence_edge_cases():
    edges = [
        MassSample(dt=1.0),
        MassSample(m0=2.0, dt=1.0),
        MassSample(mx=1.0, dt=math.pi / 2),  # |m| dt = pi/2
        MassSample(my=1.0, dt=math.pi / 2 - 1e-9),
        MassSample(mx=0.6, my=-0.8, dt=math.pi / 2),
        MassSample(m0=1.0, mx=1.0, my=1.0, mz=1.0, dt=3.0),  # large |m| dt
    ]
    for ms in edges:
        assert np.abs(euler_coin(euler_from_mass_split(ms)) - exp_coin(ms)).max() <= 1e-12
        assert np.abs(euler_coin(euler_from_mass_qlb(ms)) - cayley_coin(ms)).max() <= 1e-12


def test_split_map_tangent_identities():
    # the angle map agrees with the arctangent relations where those are
    # well conditioned (tangents away from poles)
    ms = MassSample(m0=0.3, mx=0.4, my=0.7, mz=-0.2, dt=0.35)
    p = euler_from_mass_split(ms)
    w = math.sqrt(ms.mx**2 + ms.my**2 + ms.mz**2)
    assert p.xi == pytest.approx(ms.m0 * ms.dt, rel=1e-12)
    assert math.tan(p.alpha) == pytest.approx(-(ms.mz / w) * math.tan(w * ms.dt), rel=1e-10)
    assert math.tan(p.beta) == pytest.approx(ms.mx / ms.my, rel=1e-10)
    expected_tan_theta = math.tan(w * ms.dt) * math.sqrt(
        (ms.mx**2 + ms.my**2) / (w**2 + ms.mz**2 * math.tan(w * ms.dt) ** 2)
    )
    assert abs(math.tan(p.theta)) == pytest.approx(expected_tan_theta, rel=1e-10)


def test_qlb_map_tangent_identities():
    ms = MassSample(m0=0.2, mx=0.5, my=0.6, mz=0.3, dt=0.4)
    p = euler_from_mass_qlb(ms)
    dt = ms.dt
    msq = ms.m0**2 - (ms.mx**2 + ms.my**2 + ms.mz**2)
    assert math.tan(p.xi) == pytest.approx(dt * ms.m0 / (1 - 0.25 * dt**2 * msq), rel=1e-10)
    assert math.tan(p.alpha) == pytest.approx(-dt * ms.mz / (1 + 0.25 * dt**2 * msq), rel=1e-10)
    assert math.tan(p.beta) == pytest.approx(ms.mx / ms.my, rel=1e-10)
    expected = dt * math.sqrt(
        (ms.mx**2 + ms.my**2)
        / ((1 + 0.25 * dt**2 * msq) ** 2 + dt**2 * ms.mz**2)
    )
    assert abs(math.tan(p.theta)) == pytest.approx(expected, rel=1e-10)


# --- decompose_u2 -----------------------------------------------------------


def canonical_params(rng: np.random.Generator) -> CoinParams:
    eps = 1e-3
    return CoinParams(
        xi=rng.uniform(-math.pi + eps, math.pi - eps),
        alpha=rng.uniform(-math.pi / 2 + eps, math.pi / 2 - eps),
        beta=rng.uniform(-math.pi / 2 + eps, math.pi / 2 - eps),
        theta=rng.uniform(-math.pi / 2 + eps, math.pi / 2 - eps),
    )


def test_decompose_identity():
    p = decompose_u2(np.eye(2))
    assert (p.xi, p.alpha, p.beta, p.theta) == (0.0, 0.0, 0.0, 0.0)


def test_decompose_round_trip_canonical():
    rng = np.random.default_rng(17)
    for _ in range(300):
        p = canonical_params(rng)
        q = decompose_u2(euler_coin(p))
        assert abs(q.xi - p.xi) <= 1e-11
        assert abs(q.alpha - p.alpha) <= 1e-11
        assert abs(q.beta - p.beta) <= 1e-11
        assert abs(q.theta - p.theta) <= 1e-11


def test_decompose_minus_identity():
    p = decompose_u2(-np.eye(2))
    assert p.xi == pytest.approx(math.pi, abs=1e-15)
    assert (p.alpha, p.beta, p.theta) == (0.0, 0.0, 0.0)


def test_decompose_rejects_non_unitary():
    with pytest.raises(InvalidArgumentError, match="deviation"):
        decompose_u2(np.array([[1.0, 0.1], [0.0, 1.0]]))


def test_decompose_reconstructs_any_unitary():
    rng = np.random.default_rng(23)
    for _ in range(200):
        q, r = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
        q = q * (np.diag(r) / np.abs(np.diag(r)))[None, :]
        p = decompose_u2(q)
        assert np.abs(euler_coin(p) - q).max() <= 1e-10
        # canonical ranges
        assert -math.pi < p.xi <= math.pi
        assert -math.pi / 2 < p.alpha <= math.pi / 2
        assert -math.pi / 2 < p.beta <= math.pi / 2
        assert -math.pi / 2 <= p.theta <= math.pi / 2


# --- coin square root -------------------------------------------------------


def test_coin_sqrt_squares_back():
    rng = np.random.default_rng(31)
    for _ in range(100):
        ms = MassSample(*rng.normal(0, 1.5, size=4), dt=rng.uniform(0.05, 1.5))
        u = cayley_coin(ms)
        r = coin_sqrt(u)
        assert np.abs(r @ r - u).max() <= 1e-12
        assert unitarity_deviation(r) <= 1e-12


def test_coin_sqrt_degenerate_cases():
    assert np.allclose(coin_sqrt(np.eye(2)), np.eye(2))
    assert np.allclose(coin_sqrt(-np.eye(2)), 1j * np.eye(2))
