import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bmsim.converters import ConverterParams, make_converter
from bmsim.core import (
    CircuitState,
    ExtendedState,
    RlcSystem,
    SwitchedRlcSystem,
    energy_storage,
    equilibrium_matrix,
    extended_rlc_dynamics,
    extended_srlc_dynamics,
    grad_mixed_potential,
    interconnection,
    krasovskii_storage,
    mixed_potential,
    rlc_dynamics,
    rlc_output,
    rlc_steady_state,
    srlc_dynamics,
    srlc_feasible_input,
    srlc_output,
    srlc_steady_state,
    verify_assumptions,
)
from bmsim.errors import DimensionError, InvalidSystem, MultipleRoots, NoFeasibleInput, SingularSystem


def buck(G=0.04):
    return make_converter(ConverterParams("buck", 1e-3, 1e-3, G, 400.0))


def boost(G=0.04):
    return make_converter(ConverterParams("boost", 1.12e-3, 6.8e-3, G, 280.0))


def series_rl():
    return RlcSystem(L=1.0, C=1.0, R=1.0, G=1.0, Gamma=1.0, B=1.0)


def random_spd(rng, n, scale=1.0):
    A = rng.normal(size=(n, n))
    return scale * (A @ A.T + n * np.eye(n))


def random_psd(rng, n, rank):
    A = rng.normal(size=(n, rank))
    return A @ A.T


def random_rlc(rng, sigma, rho, m):
    return RlcSystem(
        L=random_spd(rng, sigma, 1e-3),
        C=random_spd(rng, rho, 1e-3),
        R=random_psd(rng, sigma, sigma),
        G=random_psd(rng, rho, rho),
        Gamma=rng.normal(size=(sigma, rho)),
        B=np.linalg.qr(rng.normal(size=(sigma, sigma)))[0][:, :m],
    )


def random_srlc(rng, sigma, rho, p):
    return SwitchedRlcSystem(
        L=random_spd(rng, sigma, 1e-3),
        C=random_spd(rng, rho, 1e-3),
        R=random_psd(rng, sigma, sigma),
        G=random_psd(rng, rho, rho),
        Gamma0=rng.normal(size=(sigma, rho)),
        Gamma1=rng.normal(size=(p, sigma, rho)),
        B0=rng.normal(size=(sigma, 1)),
        B1=rng.normal(size=(p, sigma, 1)),
        Vs=[rng.uniform(50, 500)],
    )


# Construction


def test_rejects_non_spd_inductance():
    with pytest.raises(InvalidSystem):
        RlcSystem(L=-1.0, C=1.0, R=0.0, G=0.0, Gamma=1.0, B=1.0)


def test_rejects_negative_conductance():
    with pytest.raises(InvalidSystem):
        RlcSystem(L=1.0, C=1.0, R=0.0, G=-0.1, Gamma=1.0, B=1.0)


def test_rejects_rank_deficient_input_matrix():
    with pytest.raises(InvalidSystem):
        RlcSystem(L=np.eye(2), C=1.0, R=np.zeros((2, 2)), G=0.0, Gamma=np.ones((2, 1)), B=np.array([[1.0, 2.0], [2.0, 4.0]]))


def test_rejects_zero_source():
    with pytest.raises(InvalidSystem):
        SwitchedRlcSystem(1e-3, 1e-3, 0.0, 0.04, 1.0, 1.0, 0.0, 1.0, [0.0])


def test_state_must_be_finite():
    with pytest.raises(ValueError):
        CircuitState([np.nan], [0.0])


def test_system_arrays_are_read_only():
    sys = buck()
    with pytest.raises(ValueError):
        sys.L[0, 0] = 2.0


# Mixed potential


def test_mixed_potential_buck_equilibrium_value():
    assert mixed_potential(buck(), [0.95], CircuitState([15.2], [380.0])) == pytest.approx(2888.0, rel=1e-12)


def test_mixed_potential_zero_state():
    assert mixed_potential(boost(), [0.3], CircuitState([0.0], [0.0])) == 0.0


def test_mixed_potential_boost_closed_switch_drops_cross_term():
    assert mixed_potential(boost(), [1.0], CircuitState([7.0], [380.0])) == pytest.approx(-2888.0, rel=1e-12)


def test_gradient_buck_equilibrium():
    gI, gV = grad_mixed_potential(buck(), [0.95], CircuitState([15.2], [380.0]))
    assert gI == pytest.approx([380.0])
    assert gV == pytest.approx([0.0], abs=1e-12)


def test_gradient_zero_state():
    gI, gV = grad_mixed_potential(buck(), [0.5], CircuitState([0.0], [0.0]))
    assert np.all(gI == 0) and np.all(gV == 0)


def _fd_gradient(f, x, h):
    g = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h * max(1.0, abs(x[k]))
        g[k] = (f(x + e) - f(x - e)) / (2 * e[k])
    return g


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), sigma=st.integers(1, 4), rho=st.integers(1, 4), switched=st.booleans())
def test_gradient_matches_finite_differences(seed, sigma, rho, switched):
    rng = np.random.default_rng(seed)
    if switched:
        sys = random_srlc(rng, sigma, rho, 1)
        u = [rng.uniform()]
    else:
        sys = random_rlc(rng, sigma, rho, 1)
        u = None
    x = rng.normal(size=sigma + rho) * 10

    def P(z):
        return mixed_potential(sys, u, CircuitState(z[:sigma], z[sigma:]))

    gI, gV = grad_mixed_potential(sys, u, CircuitState(x[:sigma], x[sigma:]))
    analytic = np.concatenate([gI, gV])
    numeric = _fd_gradient(P, x, 1e-6)
    assert np.linalg.norm(analytic - numeric) <= 1e-6 * max(1.0, np.linalg.norm(analytic))


def test_dimension_mismatch_raises():
    with pytest.raises(DimensionError):
        mixed_potential(buck(), [0.5], CircuitState([1.0, 2.0], [3.0]))
    with pytest.raises(DimensionError):
        srlc_dynamics(buck(), CircuitState([1.0], [3.0]), [0.5, 0.5])


# Dynamics


def test_series_rl_hand_evaluation():
    dI, dV = rlc_dynamics(series_rl(), CircuitState([1.0], [0.0]), [0.0])
    assert dI == pytest.approx([-1.0]) and dV == pytest.approx([1.0])


def test_rlc_dynamics_affine_in_source(rng):
    sys = random_rlc(rng, 3, 2, 2)
    s = CircuitState(rng.normal(size=3), rng.normal(size=2))
    u, delta = rng.normal(size=2), rng.normal(size=2)
    d = rlc_dynamics(sys, s, u + delta)[0] - rlc_dynamics(sys, s, u)[0]
    assert d == pytest.approx(np.linalg.solve(sys.L, sys.B @ delta), rel=1e-10)


def test_buck_equilibrium_is_rest_point():
    dI, dV = srlc_dynamics(buck(), CircuitState([15.2], [380.0]), [0.95])
    assert np.max(np.abs(dI)) < 1e-9 and np.max(np.abs(dV)) < 1e-9


def test_boost_closed_switch():
    sys = boost()
    dI, _ = srlc_dynamics(sys, CircuitState([3.0], [250.0]), [1.0])
    assert dI == pytest.approx([280.0 / 1.12e-3])


@settings(max_examples=50, deadline=None)
@given(u=st.floats(0, 1), I=st.floats(-50, 50), V=st.floats(-500, 500))
def test_current_rate_affine_in_duty_without_resistance(u, I, V):
    sys = boost()
    s = CircuitState([I], [V])
    mixed = (1 - u) * srlc_dynamics(sys, s, [0.0])[0] + u * srlc_dynamics(sys, s, [1.0])[0]
    assert srlc_dynamics(sys, s, [u])[0] == pytest.approx(mixed, rel=1e-12, abs=1e-9)


def test_interconnection_midpoint_is_exact_average(rng):
    # integer entries keep every operation exact in binary floating point
    g0 = rng.integers(-8, 8, size=(3, 2)).astype(float)
    g1 = rng.integers(-8, 8, size=(3, 2)).astype(float)
    sys = SwitchedRlcSystem(np.eye(3), np.eye(2), np.zeros((3, 3)), np.zeros((2, 2)), g0, g1,
                            np.ones((3, 1)), np.ones((3, 1)), [1.0])
    assert np.array_equal(interconnection(sys, [0.5]), 0.5 * (g0 + g1))
    rand = random_srlc(rng, 3, 2, 1)
    mid = 0.5 * (rand.Gamma0 + rand.Gamma1[0])
    assert np.allclose(interconnection(rand, [0.5]), mid, rtol=1e-15, atol=1e-15)


def test_extended_rlc_zero_derivatives():
    sys = series_rl()
    e = ExtendedState(CircuitState([1.0], [2.0]), [0.0], [0.0], [0.0])
    d = extended_rlc_dynamics(sys, e, [0.0])
    assert np.all(d.dI == 0) and np.all(d.dV == 0) and np.all(d.u == 0)


def test_extended_rlc_series_example():
    e = ExtendedState(CircuitState([1.0], [0.0]), [-1.0], [1.0], [0.0])
    d = extended_rlc_dynamics(series_rl(), e, [0.0])
    assert d.dI == pytest.approx([0.0]) and d.dV == pytest.approx([-2.0])


def test_extended_srlc_zero_rates():
    sys = boost()
    e = ExtendedState(CircuitState([20.0], [380.0]), [0.0], [0.0], [0.3])
    d = extended_srlc_dynamics(sys, e, [0.0])
    assert np.all(d.dI == 0) and np.all(d.dV == 0)


def test_extended_srlc_buck_source_term():
    sys = buck()
    e = ExtendedState(CircuitState([3.0], [10.0]), [0.0], [0.0], [0.3])
    d = extended_srlc_dynamics(sys, e, [2.0])
    assert d.dI == pytest.approx([400.0 * 2.0 / 1e-3])


def _rk4_states(f, x0, dt, n):
    out = [np.array(x0, dtype=float)]
    x = out[0]
    for _ in range(n):
        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(x)
    return np.array(out)


@pytest.mark.parametrize("kind", ["rlc", "srlc"])
def test_extended_dynamics_match_finite_differences(kind, rng):
    """Second derivatives of the extended field equal central differences of the first."""
    if kind == "rlc":
        sys = random_rlc(rng, 2, 2, 1)
        first = lambda I, V, u: rlc_dynamics(sys, CircuitState(I, V), u)
        second = lambda e, ups: extended_rlc_dynamics(sys, e, ups)
    else:
        sys = random_srlc(rng, 2, 2, 1)
        first = lambda I, V, u: srlc_dynamics(sys, CircuitState(I, V), u)
        second = lambda e, ups: extended_srlc_dynamics(sys, e, ups)
    ups = np.array([3.0])

    def f(z):
        dI, dV = first(z[:2], z[2:4], z[4:])
        return np.concatenate([dI, dV, ups])

    dt = 1e-6
    z = _rk4_states(f, np.concatenate([rng.normal(size=4) * 5, [0.4]]), dt, 4)
    rates = np.array([f(x)[:4] for x in z])
    fd = (rates[3] - rates[1]) / (2 * dt)
    x = z[2]
    dI, dV = first(x[:2], x[2:4], x[4:])
    d = second(ExtendedState(CircuitState(x[:2], x[2:4]), dI, dV, x[4:]), ups)
    exact = np.concatenate([d.dI, d.dV])
    assert np.linalg.norm(fd - exact) <= 1e-5 * np.linalg.norm(exact)


# Storage and outputs


def test_energy_storage_values():
    sys = RlcSystem(L=1e-3, C=1e-3, R=0.0, G=0.0, Gamma=1.0, B=1.0)
    assert energy_storage(sys, CircuitState([0.0], [0.0])) == 0.0
    assert energy_storage(sys, CircuitState([2.0], [3.0])) == pytest.approx(6.5e-3)
    assert energy_storage(sys, CircuitState([4.0], [6.0])) == pytest.approx(4 * 6.5e-3)


def test_krasovskii_storage_values():
    sys = RlcSystem(L=1e-3, C=1e-3, R=0.0, G=0.0, Gamma=1.0, B=1.0)
    assert krasovskii_storage(sys, [0.0], [0.0]) == 0.0
    assert krasovskii_storage(sys, [2.0], [3.0]) == pytest.approx(6.5e-3)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_krasovskii_storage_positive_definite(seed):
    rng = np.random.default_rng(seed)
    sys = random_rlc(rng, 3, 2, 1)
    dI, dV = rng.normal(size=3), rng.normal(size=2)
    assert krasovskii_storage(sys, dI, dV) > 0
    assert krasovskii_storage(sys, np.zeros(3), np.zeros(2)) == 0


def test_rlc_output():
    sys = RlcSystem(L=np.eye(2), C=1.0, R=np.zeros((2, 2)), G=0.0, Gamma=np.ones((2, 1)), B=np.array([[1.0], [0.0]]))
    assert rlc_output(sys, [3.0, 5.0]) == pytest.approx([3.0])
    assert rlc_output(sys, [0.0, 0.0]) == pytest.approx([0.0])


def test_srlc_output_buck_and_boost():
    s = CircuitState([12.0], [300.0])
    assert srlc_output(buck(), s, [5.0], [7.0]) == pytest.approx([5.0 * 400.0])
    assert srlc_output(boost(), s, [5.0], [7.0]) == pytest.approx([5.0 * 300.0 - 7.0 * 12.0])
    assert srlc_output(boost(), s, [0.0], [0.0]) == pytest.approx([0.0])


# Equilibria


def test_rlc_steady_state_buck_analogue():
    sys = RlcSystem(L=1e-3, C=1e-3, R=0.0, G=0.04, Gamma=1.0, B=1.0)
    eq = rlc_steady_state(sys, [380.0])
    assert eq.I == pytest.approx([15.2], rel=1e-12) and eq.V == pytest.approx([380.0], rel=1e-12)
    zero = rlc_steady_state(sys, [0.0])
    assert np.all(zero.I == 0) and np.all(zero.V == 0)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_rlc_steady_state_residual(seed):
    rng = np.random.default_rng(seed)
    sys = RlcSystem(L=random_spd(rng, 2, 1e-3), C=random_spd(rng, 2, 1e-3), R=random_spd(rng, 2),
                    G=random_spd(rng, 2), Gamma=rng.normal(size=(2, 2)), B=np.eye(2))
    u = rng.normal(size=2) * 100
    eq = rlc_steady_state(sys, u)
    dI, dV = rlc_dynamics(sys, eq, u)
    scale = np.linalg.norm(np.concatenate([eq.I, eq.V]))
    assert np.linalg.norm(np.concatenate([sys.L @ dI, sys.C @ dV])) <= 1e-9 * max(scale, 1.0)


def test_singular_equilibrium_matrix():
    sys = RlcSystem(L=np.eye(2), C=np.eye(2), R=np.zeros((2, 2)), G=np.zeros((2, 2)),
                    Gamma=np.array([[1.0, 1.0], [1.0, 1.0]]), B=np.eye(2))
    with pytest.raises(SingularSystem):
        rlc_steady_state(sys, [1.0, 0.0])


def test_srlc_steady_state_buck_and_boost():
    eq = srlc_steady_state(buck(), [0.95])
    assert eq.I == pytest.approx([15.2], rel=1e-12) and eq.V == pytest.approx([380.0], rel=1e-12)
    eq = srlc_steady_state(boost(), [1 - 280 / 380])
    assert eq.V == pytest.approx([380.0], rel=1e-12)
    assert eq.I == pytest.approx([0.04 * 380**2 / 280], rel=1e-12)
    assert eq.I[0] == pytest.approx(20.6286, abs=1e-4)


def test_srlc_steady_state_decoupled_voltage():
    # boost with series resistance and the switch closed: Gamma(1) = 0
    sys = SwitchedRlcSystem(1e-3, 1e-3, 0.5, 0.04, 1.0, 0.0, 1.0, 1.0, [280.0])
    eq = srlc_steady_state(sys, [1.0])
    assert eq.V == pytest.approx([0.0], abs=1e-12) and eq.I == pytest.approx([560.0])
    with pytest.raises(SingularSystem):
        srlc_steady_state(boost(), [1.0])


def test_feasible_input_buck_and_boost():
    sp = srlc_feasible_input(buck(), 380.0)
    assert sp.ubar == pytest.approx([0.95], abs=1e-12) and sp.Ibar == pytest.approx([15.2], rel=1e-9)
    sp = srlc_feasible_input(boost(), 380.0)
    assert sp.ubar[0] == pytest.approx(0.263158, abs=1e-6)
    assert abs(srlc_steady_state(boost(), sp.ubar).V[0] - 380.0) <= 1e-9 * 380.0


def test_feasible_input_unreachable():
    with pytest.raises(NoFeasibleInput):
        srlc_feasible_input(buck(), 450.0)


def test_feasible_input_multiple_roots():
    # V(u) = u(1-u) Vs / G-like hump: a boost with series resistance peaks inside (0, 1)
    sys = SwitchedRlcSystem(1e-3, 1e-3, 1.0, 0.04, 1.0, 0.0, 1.0, 1.0, [100.0])
    peak = max(srlc_steady_state(sys, [u]).V[0] for u in np.linspace(0, 0.99, 500))
    with pytest.raises(MultipleRoots) as info:
        srlc_feasible_input(sys, 0.9 * peak)
    assert len(info.value.roots) == 2


# Assumption report


def test_buck_equilibrium_matrix_full_rank():
    A = equilibrium_matrix(buck(), [0.95])
    assert np.linalg.det(A) == pytest.approx(-1.0)
    for G in (0.0, 0.04, 10.0):
        assert verify_assumptions(buck(G), ubar=[0.5]).equilibrium_nonsingular


def test_boost_controllability_vector_at_origin_is_zero():
    # Gamma1 - Gamma0 = -1 and B1 - B0 = 0, so the vector is (-V, -I) and vanishes at the origin
    rep = verify_assumptions(boost(), samples=[CircuitState([0.0], [0.0]), CircuitState([1.0], [0.0])])
    assert [ok for _, ok in rep.controllability] == [False, True]
    assert rep.controllability_scope == "sampled only"


def test_buck_controllability_everywhere_sampled():
    rep = verify_assumptions(buck(), samples=[CircuitState([0.0], [0.0]), CircuitState([5.0], [-3.0])])
    assert rep.controllability_ok


def test_no_stability_case_for_lossless_singular_circuit():
    sys = RlcSystem(L=np.eye(2), C=np.eye(2), R=np.zeros((2, 2)), G=np.zeros((2, 2)),
                    Gamma=np.array([[1.0, 1.0], [1.0, 1.0]]), B=np.eye(2))
    rep = verify_assumptions(sys)
    assert rep.cases == []
    assert not rep.R_pd and not rep.G_pd and not rep.gamma_full_column_rank and not rep.gamma_t_full_column_rank
    assert "no stability case applies" in rep.failures()


def test_converter_structural_assumptions():
    for kind in ("buck", "boost", "buckboost"):
        rep = verify_assumptions(make_converter(ConverterParams(kind, 1e-3, 1e-3, 0.04, 100.0)))
        assert rep.L_spd and rep.C_spd and rep.R_psd and rep.G_psd
