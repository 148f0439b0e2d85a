"""The three headline experiments.

* Picard iteration of the decoupling map: given an input trajectory
  (chi, eta), solve the inhibitor equation driven by chi^2, then the
  activator equation driven by chi^2/v, on frozen noise; iterate and
  measure contraction in the ensemble semi-norm
  (E sup_t |chi|^2_{H^(1-rho)})^(1/2) + E sup_t |eta|_{L2}.
* Common-noise uniqueness study: two trajectories from initial data a
  distance delta apart, driven by the identical increment table, with
  the stopping-time thresholds on |xi|_{L8} and the H^1 energy of u
  tracked along the way.
* Monte Carlo ensembles feeding the functional monitors.

Everything is deterministic given the master seed; ensemble members are
keyed by path index and reduced in index order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import noise as noise_mod
from ._parallel import map_indexed
from .dynamics import (
    ModelParams,
    SchemeConfig,
    SimulationError,
    Stepper,
    run,
)
from .fields import Field, FieldPair, FloorViolation, quotient_nodal
from .functionals import (
    AdmissibleSetSpec,
    FunctionalConfig,
    FunctionalRecorder,
    MembershipReport,
    auto_bounds,
    energy_monitors,
    membership,
)
from .noise import NoisePath, NoiseSpec, sample_path


@dataclass(frozen=True)
class FixedPointConfig:
    """Iteration budget and semi-norm settings for the Picard study."""

    max_iterations: int = 30
    tolerance: float = 1e-6
    ensemble_size: int = 16
    bound_margin: float = 10.0

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.ensemble_size < 1:
            raise ValueError("ensemble_size must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class StoppingSpec:
    """Increasing thresholds for the two stopping-time families."""

    m_levels: tuple[float, ...] = (2.0, 4.0, 8.0, 16.0)

    def __post_init__(self):
        levels = self.m_levels
        if len(levels) == 0 or any(
            b <= a for a, b in zip(levels, levels[1:])
        ):
            raise ValueError("stopping levels must be strictly increasing")


@dataclass
class PairTrajectory:
    """Dense modal snapshots of a (chi, eta) couple on a step grid."""

    times: np.ndarray        # (n+1,)
    chi_modal: np.ndarray    # (n+1, K)
    eta_modal: np.ndarray    # (n+1, K)

    @property
    def n_steps(self):
        return self.times.size - 1

    def copy(self):
        return PairTrajectory(
            self.times.copy(), self.chi_modal.copy(), self.eta_modal.copy()
        )


class TrajectoryRecorder:
    """Observer storing every step's modal coefficients."""

    stride = 1

    def __init__(self):
        self._times = []
        self._chi = []
        self._eta = []

    def record(self, view):
        self._times.append(view.t)
        self._chi.append(view.u_modal.copy())
        self._eta.append(view.v_modal.copy())

    def trajectory(self):
        return PairTrajectory(
            times=np.asarray(self._times),
            chi_modal=np.vstack(self._chi),
            eta_modal=np.vstack(self._eta),
        )


def constant_trajectory(pair: FieldPair, scheme: SchemeConfig) -> PairTrajectory:
    """Time-constant trajectory holding the given pair."""
    n = scheme.n_steps()
    times = np.linspace(0.0, scheme.T, n + 1)
    chi = np.tile(pair.u.modal, (n + 1, 1))
    eta = np.tile(pair.v.modal, (n + 1, 1))
    return PairTrajectory(times=times, chi_modal=chi, eta_modal=eta)


def seminorm_m(trajs_a, trajs_b, basis, rho):
    """Ensemble semi-norm of the difference of two trajectory families."""
    h_weights = (1.0 + basis.eigenvalues) ** (1.0 - rho)
    sup_h = []
    sup_l2 = []
    for a, b in zip(trajs_a, trajs_b):
        dchi = a.chi_modal - b.chi_modal
        deta = a.eta_modal - b.eta_modal
        sup_h.append(np.max(np.sum(h_weights * dchi**2, axis=1)))
        sup_l2.append(np.max(np.sqrt(np.sum(deta**2, axis=1))))
    return float(np.sqrt(np.mean(sup_h)) + np.mean(sup_l2))


@dataclass
class ApplyTDiagnostics:
    floor_activations: int = 0
    min_v: float = np.inf


def _check_input_positivity(traj, basis):
    for n in range(traj.times.size):
        chi = basis.synthesize(traj.chi_modal[n])
        if np.any(chi < 0.0):
            loc = int(np.argmin(chi))
            raise ValueError(
                f"input chi negative at t = {traj.times[n]:g}, node {loc} "
                f"(value {chi[loc]:g}): outside the admissible set"
            )
        eta = basis.synthesize(traj.eta_modal[n])
        if np.any(eta <= 0.0):
            loc = int(np.argmin(eta))
            raise ValueError(
                f"input eta nonpositive at t = {traj.times[n]:g}, node {loc} "
                f"(value {eta[loc]:g}): outside the admissible set"
            )


def apply_T(traj: PairTrajectory, init: FieldPair, params: ModelParams,
            scheme: SchemeConfig, basis, noise_spec: NoiseSpec,
            path: NoisePath, check_positivity: bool = True):
    """One application of the decoupling map on frozen noise.

    Solves the inhibitor equation with source kappa_v chi^2(t), then the
    activator equation with source kappa_u chi^2(t)/v(t); eta enters
    only through the admissibility check.  Returns the output
    trajectory and diagnostics.
    """
    n_steps = scheme.n_steps()
    if traj.n_steps != n_steps:
        raise ValueError(
            f"trajectory has {traj.n_steps} steps, scheme wants {n_steps}"
        )
    if check_positivity:
        _check_input_positivity(traj, basis)
    stepper = Stepper(basis, params, scheme, noise_spec)
    diag = ApplyTDiagnostics()
    k = basis.mode_count
    inc = path.increments

    chi_nodal = np.empty((n_steps, basis.n_nodes))
    for n in range(n_steps):
        chi_nodal[n] = basis.synthesize(traj.chi_modal[n])

    # inhibitor pass: v driven by chi^2
    v_store = np.empty((n_steps + 1, k))
    xi_store = np.empty((n_steps, basis.n_nodes))
    v_modal = init.v.modal.copy()
    v_nodal = basis.synthesize(v_modal)
    v_store[0] = v_modal
    p = params
    for n in range(n_steps):
        diag.min_v = min(diag.min_v, float(v_nodal.min()))
        try:
            xi, act = quotient_nodal(np.ones_like(v_nodal), v_nodal,
                                     scheme.v_floor)
        except FloorViolation as exc:
            raise SimulationError(
                f"inhibitor left the floor policy at step {n}: {exc}"
            ) from exc
        diag.floor_activations += act
        xi_store[n] = xi
        f_v = p.kappa_v * stepper._project(chi_nodal[n] ** 2) \
            + stepper.ito_lin_v * v_modal
        dw2 = stepper.damp2 * inc[1, :, n]
        n_v = stepper._project(p.sigma_v * v_nodal * basis.synthesize(dw2))
        v_modal = stepper.exp_v * (v_modal + n_v) + stepper.gain_v * f_v
        if not np.all(np.isfinite(v_modal)):
            raise SimulationError(f"inhibitor became non-finite at step {n}")
        v_nodal = basis.synthesize(v_modal)
        v_store[n + 1] = v_modal
    diag.min_v = min(diag.min_v, float(v_nodal.min()))

    # activator pass: u driven by chi^2 * xi
    u_store = np.empty((n_steps + 1, k))
    u_modal = init.u.modal.copy()
    u_nodal = basis.synthesize(u_modal)
    u_store[0] = u_modal
    for n in range(n_steps):
        q = chi_nodal[n] ** 2 * xi_store[n]
        peak = p.kappa_u * float(q.max(initial=0.0)) * scheme.dt
        if peak >= scheme.reaction_cfl_limit:
            raise SimulationError(
                f"reaction CFL violated in the activator pass at step {n}: "
                f"{peak:g} >= {scheme.reaction_cfl_limit:g}"
            )
        f_u = p.kappa_u * stepper._project(q) + stepper.ito_lin_u * u_modal
        dw1 = stepper.damp1 * inc[0, :, n]
        n_u = stepper._project(p.sigma_u * u_nodal * basis.synthesize(dw1))
        u_modal = stepper.exp_u * (u_modal + n_u) + stepper.gain_u * f_u
        if not np.all(np.isfinite(u_modal)):
            raise SimulationError(f"activator became non-finite at step {n}")
        u_nodal = basis.synthesize(u_modal)
        u_store[n + 1] = u_modal

    out = PairTrajectory(
        times=np.linspace(0.0, scheme.T, n_steps + 1),
        chi_modal=u_store,
        eta_modal=v_store,
    )
    return out, diag


def replay_trace(traj: PairTrajectory, basis, fconfig: FunctionalConfig,
                 v_floor: float, path_index: int = -1):
    """Functional trace of a stored trajectory (same math as live runs)."""
    rec = FunctionalRecorder(basis, fconfig, v_floor, path_index=path_index)
    times = traj.times
    n = traj.n_steps

    class _View:
        __slots__ = ("t", "step_index", "u_modal", "v_modal", "u_nodal",
                     "v_nodal", "floor_activations")

    def view(i):
        v = _View()
        v.t = float(times[i])
        v.step_index = i
        v.u_modal = traj.chi_modal[i]
        v.v_modal = traj.eta_modal[i]
        v.u_nodal = basis.synthesize(traj.chi_modal[i])
        v.v_nodal = basis.synthesize(traj.eta_modal[i])
        v.floor_activations = 0
        return v

    rec.record(view(0))
    dt = float(times[1] - times[0]) if n else 0.0
    for i in range(n):
        rec.accumulate(view(i), dt)
        if (i + 1) % rec.stride == 0 or (i + 1) == n:
            rec.record(view(i + 1))
    return rec.trace()


@dataclass
class PicardReport:
    distances: list
    ratios: list
    converged: bool
    iterations: int
    residual_vs_coupled: float
    memberships: list
    bounds: AdmissibleSetSpec
    start_description: str

    @property
    def all_ratios_below_one(self):
        return all(r < 1.0 for r in self.ratios)

    @property
    def all_members(self):
        return all(m.ok for m in self.memberships)

    def summary_lines(self):
        lines = [
            f"picard iterations: {self.iterations} "
            f"(converged: {self.converged})",
            f"start: {self.start_description}",
            f"bounds: K1={self.bounds.K1:.6g} K2={self.bounds.K2:.6g} "
            f"K3={self.bounds.K3:.6g}",
        ]
        for i, d in enumerate(self.distances):
            ratio = f" ratio={self.ratios[i - 1]:.6g}" if i >= 1 else ""
            member = " member=yes" if self.memberships[i].ok else " member=NO"
            lines.append(f"  d_{i} = {d:.6g}{ratio}{member}")
        lines.append(
            f"terminal residual vs coupled solve: "
            f"{self.residual_vs_coupled:.6g}"
        )
        return lines


def picard_iterate(start: PairTrajectory, init: FieldPair,
                   params: ModelParams, scheme: SchemeConfig, basis,
                   noise_spec: NoiseSpec, config: FixedPointConfig,
                   fconfig: FunctionalConfig | None = None,
                   start_description: str = "steady state + mode-1..4 bumps"):
    """Iterate the decoupling map on frozen paths until the semi-norm settles.

    Non-convergence within the budget is reported, not raised.
    """
    fconfig = fconfig or FunctionalConfig()
    m = config.ensemble_size
    grid = np.linspace(0.0, scheme.T, scheme.n_steps() + 1)
    paths = [sample_path(noise_spec, grid, i) for i in range(m)]

    start_trace = replay_trace(start, basis, fconfig, scheme.v_floor)
    bounds = auto_bounds([start_trace], margin=config.bound_margin)
    start_member = membership([start_trace], bounds)
    if not start_member.positivity_ok:
        raise ValueError(
            f"start trajectory violates positivity: {start_member.failure}"
        )

    current = [start.copy() for _ in range(m)]
    distances = []
    memberships = []
    converged = False
    iterations = 0

    def one(i):
        out, _ = apply_T(current[i], init, params, scheme, basis,
                         noise_spec, paths[i], check_positivity=False)
        return out

    for it in range(config.max_iterations):
        new = map_indexed(one, range(m))
        d = seminorm_m(new, current, basis, fconfig.rho)
        distances.append(d)
        traces = [
            replay_trace(new[i], basis, fconfig, scheme.v_floor, path_index=i)
            for i in range(m)
        ]
        memberships.append(membership(traces, bounds))
        current = new
        iterations = it + 1
        if d < config.tolerance:
            converged = True
            break

    # residual against the directly coupled solve on the same noise
    def coupled(i):
        rec = TrajectoryRecorder()
        run(init, params, scheme, basis, noise_spec, paths[i], observers=[rec])
        return rec.trajectory()

    coupled_trajs = map_indexed(coupled, range(m))
    residual = seminorm_m(current, coupled_trajs, basis, fconfig.rho)

    ratios = [
        distances[i + 1] / distances[i] if distances[i] > 0 else 0.0
        for i in range(len(distances) - 1)
    ]
    return PicardReport(
        distances=distances,
        ratios=ratios,
        converged=converged,
        iterations=iterations,
        residual_vs_coupled=residual,
        memberships=memberships,
        bounds=bounds,
        start_description=start_description,
    )


@dataclass
class UniquenessReport:
    times: np.ndarray
    du_l2: np.ndarray
    dv_l2: np.ndarray
    delta: float
    amplification: float
    tau1_steps: dict
    tau2_steps: dict
    bitwise_identical: bool
    theorem_scope: str

    def summary_lines(self):
        lines = [
            f"delta = {self.delta:g}  ({self.theorem_scope})",
            f"sup_t |u1-u2|_L2 = {self.du_l2.max():.6g}",
            f"sup_t |v1-v2|_L2 = {self.dv_l2.max():.6g}",
            f"bitwise identical: {self.bitwise_identical}",
        ]
        if self.delta > 0:
            lines.append(f"amplification C = sup/delta = {self.amplification:.6g}")
        for label, table in (("tau1(|xi|_L8)", self.tau1_steps),
                             ("tau2(H1 energy)", self.tau2_steps)):
            for (m, run_id), step in sorted(table.items()):
                hit = f"step {step}" if step is not None else "not hit"
                lines.append(f"  {label} m={m:g} run{run_id}: {hit}")
        return lines


def _stopping_scan(traj: PairTrajectory, basis, scheme, levels):
    """First-hitting steps of the two stopping-time families."""
    n = traj.n_steps
    lam = basis.eigenvalues
    w = basis.weights
    sup_xi8 = -np.inf
    h1_running = 0.0
    sup_u2 = -np.inf
    tau1 = {m: None for m in levels}
    tau2 = {m: None for m in levels}
    for i in range(n + 1):
        v_nodal = basis.synthesize(traj.eta_modal[i])
        xi, _ = quotient_nodal(np.ones_like(v_nodal), v_nodal, scheme.v_floor)
        xi8 = float((w @ xi**8) ** (1.0 / 8.0))
        sup_xi8 = max(sup_xi8, xi8)
        u_modal = traj.chi_modal[i]
        u2 = float(np.sum(u_modal**2))
        sup_u2 = max(sup_u2, u2)
        h1 = float(np.sum((1.0 + lam) * u_modal**2))
        for m in levels:
            if tau1[m] is None and sup_xi8 >= m:
                tau1[m] = i
            if tau2[m] is None and h1_running + sup_u2 >= m:
                tau2[m] = i
        if i < n:
            h1_running += h1 * scheme.dt
    return tau1, tau2


def uniqueness_study(init: FieldPair, delta: float, params: ModelParams,
                     scheme: SchemeConfig, basis, noise_spec: NoiseSpec,
                     stopping: StoppingSpec, path: NoisePath,
                     perturb_mode: int = 1) -> UniquenessReport:
    """Two runs differing by delta in one mode, driven by the same noise.

    delta = 0 must give bitwise-coincident trajectories; delta > 0
    reports the measured amplification sup_t |u1-u2|_L2 / delta.  The
    theorem behind this check is one-dimensional; rectangle runs are
    labeled outside its scope but executed all the same.
    """
    if delta < 0:
        raise ValueError("perturbation size must be >= 0")
    if perturb_mode >= basis.mode_count:
        raise ValueError("perturbation mode outside the truncation")
    init2_u = init.u.modal.copy()
    init2_u[perturb_mode] += delta
    init2 = FieldPair(Field(basis, modal=init2_u), init.v.copy())

    def solve(pair):
        rec = TrajectoryRecorder()
        run(pair, params, scheme, basis, noise_spec, path, observers=[rec])
        return rec.trajectory()

    t1 = solve(init)
    t2 = solve(init2)
    dchi = t1.chi_modal - t2.chi_modal
    deta = t1.eta_modal - t2.eta_modal
    du = np.sqrt(np.sum(dchi**2, axis=1))
    dv = np.sqrt(np.sum(deta**2, axis=1))
    bitwise = bool(np.all(dchi == 0.0) and np.all(deta == 0.0))
    amplification = float(du.max() / delta) if delta > 0 else 0.0

    levels = stopping.m_levels
    tau1_a, tau2_a = _stopping_scan(t1, basis, scheme, levels)
    tau1_b, tau2_b = _stopping_scan(t2, basis, scheme, levels)
    tau1 = {(m, 1): tau1_a[m] for m in levels}
    tau1.update({(m, 2): tau1_b[m] for m in levels})
    tau2 = {(m, 1): tau2_a[m] for m in levels}
    tau2.update({(m, 2): tau2_b[m] for m in levels})

    scope = ("within theorem scope (d=1)" if basis.domain.dim == 1
             else "outside theorem scope (d=2)")
    return UniquenessReport(
        times=t1.times, du_l2=du, dv_l2=dv, delta=delta,
        amplification=amplification, tau1_steps=tau1, tau2_steps=tau2,
        bitwise_identical=bitwise, theorem_scope=scope,
    )


@dataclass
class EnsembleReport:
    times: np.ndarray
    means: dict
    standard_errors: dict
    monitors: dict
    n_paths: int
    survivors: int
    failures: list
    traces: list = field(repr=False, default_factory=list)

    def summary_lines(self):
        lines = [f"paths: {self.n_paths}, survivors: {self.survivors}"]
        for idx, msg in self.failures:
            lines.append(f"  path {idx} failed: {msg}")
        for name, fit in self.monitors.items():
            status = "BLOW-UP" if fit.blow_up else "ok"
            lines.append(
                f"  monitor {name}: C={fit.C:.6g} delta={fit.delta:.6g} "
                f"[{status}]"
            )
        return lines


def ensemble(init: FieldPair, params: ModelParams, scheme: SchemeConfig,
             basis, noise_spec: NoiseSpec, n_paths: int,
             fconfig: FunctionalConfig, horizons=None,
             first_path_index: int = 0, path_indices=None) -> EnsembleReport:
    """Monte Carlo ensemble with per-column statistics and monitor fits.

    Path failures are reported per index; aggregation proceeds on the
    survivors.  ``path_indices`` overrides the default consecutive
    indexing (repeats are allowed, e.g. for zero-variance checks).
    """
    if path_indices is None:
        path_indices = [first_path_index + i for i in range(n_paths)]
    path_indices = list(path_indices)
    n_paths = len(path_indices)
    if n_paths < 2:
        raise ValueError("an ensemble needs at least two paths")
    grid = np.linspace(0.0, scheme.T, scheme.n_steps() + 1)

    def one(i):
        idx = path_indices[i]
        try:
            pth = sample_path(noise_spec, grid, idx)
            rec = FunctionalRecorder(basis, fconfig, scheme.v_floor,
                                     path_index=idx)
            run(init, params, scheme, basis, noise_spec, pth, observers=[rec])
            return rec.trace()
        except (SimulationError, FloorViolation, ValueError) as exc:
            return (idx, f"{type(exc).__name__}: {exc}")

    results = map_indexed(one, range(n_paths))
    traces = [r for r in results if not isinstance(r, tuple)]
    failures = [r for r in results if isinstance(r, tuple)]
    if not traces:
        raise SimulationError(
            f"every ensemble path failed; first failure: {failures[0][1]}"
        )
    times = traces[0].times
    means = {}
    ses = {}
    m = len(traces)
    for name in traces[0].data:
        stack = np.vstack([t.data[name] for t in traces])
        means[name] = stack.mean(axis=0)
        ses[name] = (stack.std(axis=0, ddof=1) / np.sqrt(m)
                     if m > 1 else np.zeros(stack.shape[1]))
    monitors = energy_monitors(traces, params, fconfig, horizons=horizons)
    return EnsembleReport(
        times=times, means=means, standard_errors=ses, monitors=monitors,
        n_paths=n_paths, survivors=m, failures=failures, traces=traces,
    )
