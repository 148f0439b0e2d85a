import numpy as np
import pytest

from gmspde.dynamics import ModelParams, SchemeConfig, default_initial_pair
from gmspde.experiments import PairTrajectory, constant_trajectory, ensemble, replay_trace
from gmspde.fields import Field, FieldPair, FloorViolation
from gmspde.functionals import (
    AdmissibleSetSpec,
    FunctionalConfig,
    energy_monitors,
    fit_growth_envelope,
    lyapunov_L1,
    lyapunov_L2,
    lyapunov_L3,
    membership,
    xi_field,
)
from gmspde.noise import NoiseSpec
from gmspde.spectral import DomainSpec, build_basis

K = 8


@pytest.fixture(scope="module")
def basis():
    return build_basis(DomainSpec(dim=1, lengths=(1.0,),
                                  grid_points_per_axis=64), K)


def desk_params(sigma=0.1):
    return ModelParams(r_u=0.01, r_v=0.1, kappa_u=1.0, kappa_v=1.0,
                       mu_u=1.0, mu_v=2.0, sigma_u=sigma, sigma_v=sigma)


def const_traj(basis, chi_value, eta_value, n_steps=8, horizon=1.0):
    """Time-constant (chi, eta) trajectory with a power-of-two step."""
    sqrt_vol = np.sqrt(basis.volume)
    chi = np.zeros(K)
    chi[0] = chi_value * sqrt_vol
    eta = np.zeros(K)
    eta[0] = eta_value * sqrt_vol
    times = np.linspace(0.0, horizon, n_steps + 1)
    return PairTrajectory(
        times=times,
        chi_modal=np.tile(chi, (n_steps + 1, 1)),
        eta_modal=np.tile(eta, (n_steps + 1, 1)),
    )


def test_config_validation():
    with pytest.raises(ValueError, match="p must be"):
        FunctionalConfig(p=0.5)
    FunctionalConfig(rho=1.0).validate_for_dim(1)
    with pytest.raises(ValueError, match="rho"):
        FunctionalConfig(rho=1.0).validate_for_dim(2)
    with pytest.raises(ValueError, match="rho"):
        FunctionalConfig(rho=1.3).validate_for_dim(1)


def test_xi_examples(basis):
    v = Field.from_constant(basis, 2.0)
    xi, n = xi_field(v, 1e-8)
    assert np.allclose(xi.nodal, 0.5) and n == 0

    ones = Field.from_constant(basis, 1.0)
    xi, _ = xi_field(ones, 0.0)
    ln_mass = float(basis.weights @ np.log(xi.nodal))
    assert ln_mass == 0.0

    rng = np.random.default_rng(0)
    v = Field(basis, nodal=rng.uniform(0.5, 3.0, 65))
    xi, n = xi_field(v, 1e-8)
    assert n == 0
    assert np.abs(v.nodal * xi.nodal - 1.0).max() < 1e-12


def test_xi_zero_floor_rejects_nonpositive(basis):
    bad = np.ones(65)
    bad[5] = 0.0
    with pytest.raises(FloorViolation):
        xi_field(Field(basis, nodal=bad), 0.0)


def test_lyapunov_l1_trivial(basis):
    traj = const_traj(basis, 0.0, 1.0)
    trace = replay_trace(traj, basis, FunctionalConfig(observation_stride=1), 1e-8)
    # only the |xi|_p^p = |O| term survives
    assert lyapunov_L1(trace) == pytest.approx(1.0, rel=1e-12)


def test_lyapunov_l1_single_eigenmode(basis):
    # one step with chi = e_1, v = 1: |chi|^2 = 1, grad term = lambda_1 dt
    dt = 0.125
    chi = np.zeros((2, K))
    chi[:, 1] = 1.0
    eta = np.zeros((2, K))
    eta[:, 0] = 1.0
    traj = PairTrajectory(times=np.array([0.0, dt]), chi_modal=chi,
                          eta_modal=eta)
    trace = replay_trace(traj, basis, FunctionalConfig(observation_stride=1),
                         1e-8)
    lam1 = basis.eigenvalues[1]
    expected = 1.0 + lam1 * dt + 1.0
    assert lyapunov_L1(trace) == pytest.approx(expected, rel=1e-10)


def test_lyapunov_l1_quadratic_in_chi(basis):
    traj = const_traj(basis, 1.3, 1.0)
    doubled = const_traj(basis, 2.6, 1.0)
    cfg = FunctionalConfig(observation_stride=1)
    t1 = replay_trace(traj, basis, cfg, 1e-8)
    t2 = replay_trace(doubled, basis, cfg, 1e-8)
    assert t2.data["chi_l2_sq"].max() == 4.0 * t1.data["chi_l2_sq"].max()


def test_lyapunov_l2_examples(basis):
    cfg = FunctionalConfig(observation_stride=1)
    zero = replay_trace(const_traj(basis, 0.0, 1.0), basis, cfg, 1e-8)
    assert lyapunov_L2(zero) == 0.0
    # chi = 1, v = 1, T = 1 with dyadic steps: (|O| T)^2 + |O| T = 2
    ones = replay_trace(const_traj(basis, 1.0, 1.0), basis, cfg, 1e-8)
    assert lyapunov_L2(ones) == pytest.approx(2.0, abs=1e-12)


def test_lyapunov_l2_scaling_is_exact(basis):
    cfg = FunctionalConfig(observation_stride=1)
    t1 = replay_trace(const_traj(basis, 0.7, 2.0), basis, cfg, 1e-8)
    t2 = replay_trace(const_traj(basis, 1.4, 2.0), basis, cfg, 1e-8)
    assert t2.data["int_chi2_xi"][-1] == 4.0 * t1.data["int_chi2_xi"][-1]
    assert t2.data["int_xi2_chi2"][-1] == 4.0 * t1.data["int_xi2_chi2"][-1]
    # first L2 term is the square of a 4x quantity
    assert t2.data["int_chi2_xi"][-1] ** 2 == 16.0 * t1.data["int_chi2_xi"][-1] ** 2


def test_lyapunov_l3_trivial(basis):
    cfg = FunctionalConfig(observation_stride=1)
    trace = replay_trace(const_traj(basis, 0.0, 1.0), basis, cfg, 1e-8)
    l3 = lyapunov_L3(trace)
    assert np.allclose(l3, 2.0, atol=1e-12)  # |O| + |O| + 0


def test_running_integrals_nondecreasing(basis):
    params = desk_params()
    spec = NoiseSpec(gamma1=2.0, gamma2=2.0, mode_count=K, master_seed=13)
    init = default_initial_pair(basis, params)
    sch = SchemeConfig(dt=1e-3, T=0.2)
    report = ensemble(init, params, sch, basis, spec, 2,
                      FunctionalConfig(observation_stride=10))
    for trace in report.traces:
        for name in ("int_grad_chi_sq", "int_chi2_xi", "int_xi2_chi2",
                     "int_xi_p2_grad_v_sq", "int_u_chi2_xi"):
            assert np.all(np.diff(trace.data[name]) >= -1e-15)


def test_membership_trivial_pass_and_negative_node(basis):
    cfg = FunctionalConfig(observation_stride=1)
    good = replay_trace(const_traj(basis, 0.0, 1.0), basis, cfg, 1e-8)
    big = AdmissibleSetSpec(K1=1e6, K2=1e6, K3=1e6)
    rep = membership([good], big)
    assert rep.ok

    chi = np.zeros((2, K))
    chi[:, 0] = 0.5
    chi[:, 1] = -1.0  # pushes some nodes negative
    eta = np.zeros((2, K))
    eta[:, 0] = 1.0
    traj = PairTrajectory(times=np.array([0.0, 0.5]), chi_modal=chi,
                          eta_modal=eta)
    bad = replay_trace(traj, basis, cfg, 1e-8)
    rep = membership([bad], big)
    assert not rep.positivity_ok
    assert "node" in rep.failure


def test_membership_bound_violation_detected(basis):
    cfg = FunctionalConfig(observation_stride=1)
    trace = replay_trace(const_traj(basis, 1.0, 1.0), basis, cfg, 1e-8)
    tight = AdmissibleSetSpec(K1=1e-6, K2=1e6, K3=1e6)
    rep = membership([trace], tight)
    assert not rep.l1_ok and rep.l2_ok and rep.l3_ok and not rep.ok


def test_ensemble_membership_reproducible(basis):
    params = desk_params()
    spec = NoiseSpec(gamma1=2.0, gamma2=2.0, mode_count=K, master_seed=303)
    init = default_initial_pair(basis, params)
    sch = SchemeConfig(dt=1e-3, T=0.1)
    cfg = FunctionalConfig(observation_stride=10)
    bounds = AdmissibleSetSpec(K1=100.0, K2=100.0, K3=100.0)
    reports = []
    for _ in range(2):
        rep = ensemble(init, params, sch, basis, spec, 50, cfg)
        reports.append(membership(rep.traces, bounds))
    a, b = reports
    assert (a.mean_L1, a.mean_L2, a.sup_mean_L3) == \
        (b.mean_L1, b.mean_L2, b.sup_mean_L3)
    assert a.ok == b.ok


def test_fit_growth_envelope_recovers_synthetic_constants():
    horizons = np.array([0.5, 1.0, 2.0])
    init = np.full(3, 2.0)
    lhs = 3.0 * np.exp(0.7 * horizons) * init
    c, delta, blow = fit_growth_envelope(horizons, lhs, init)
    assert not blow
    assert delta == pytest.approx(0.7, rel=1e-10)
    assert c == pytest.approx(3.0, rel=1e-10)


def test_fit_growth_envelope_flags_blow_up():
    c, delta, blow = fit_growth_envelope([0.5, 1.0], [1.0, np.inf], [1.0, 1.0])
    assert blow


def test_monitors_constant_for_steady_trajectory(basis):
    # deterministic steady state: all monitor LHS constant, delta fits to 0
    params = desk_params(sigma=0.0)
    cfg = FunctionalConfig(observation_stride=1)
    from gmspde.dynamics import steady_state
    u_star, v_star = steady_state(params)
    traj = const_traj(basis, u_star, v_star, n_steps=8, horizon=1.0)
    trace = replay_trace(traj, basis, cfg, 1e-8)
    fits = energy_monitors([trace], params, cfg,
                           horizons=[0.25, 0.5, 1.0])
    for name in ("xi_lp_sup", "v_l2", "u_h1mrho"):
        assert abs(fits[name].delta) < 1e-10
        assert np.allclose(fits[name].lhs, fits[name].lhs[0])


def test_xi_l1_monitor_for_unit_inhibitor(basis):
    cfg = FunctionalConfig(observation_stride=1)
    trace = replay_trace(const_traj(basis, 0.0, 1.0), basis, cfg, 1e-8)
    fits = energy_monitors([trace], desk_params(), cfg,
                           horizons=[0.5, 1.0])
    assert np.allclose(fits["xi_l1_pathsup"].lhs, 1.0, atol=1e-12)
    assert np.allclose(fits["xi_l1_meansup"].lhs, 1.0, atol=1e-12)


def test_monitor_envelope_holds_on_stochastic_ensemble(basis):
    params = desk_params()
    spec = NoiseSpec(gamma1=2.0, gamma2=2.0, mode_count=K, master_seed=99)
    init = default_initial_pair(basis, params)
    sch = SchemeConfig(dt=1e-3, T=0.4)
    cfg = FunctionalConfig(observation_stride=20)
    report = ensemble(init, params, sch, basis, spec, 16, cfg,
                      horizons=[0.1, 0.2, 0.4])
    for name, fit in report.monitors.items():
        assert not fit.blow_up, name
        mask = fit.lhs > 0
        bound = fit.C * np.exp(fit.delta * fit.horizons) * fit.init
        assert np.all(fit.lhs[mask] <= bound[mask] * (1 + 1e-10)), name
