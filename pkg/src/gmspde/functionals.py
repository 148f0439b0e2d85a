"""Inverse-inhibitor field, energy functionals and growth monitors.

The recorder tracks, along a trajectory (chi, eta) = (u, v), the scalar
time series the analysis of the system lives on: L^2 and negative-order
Sobolev norms of the activator, L^p and L^1 norms and the log-mass of
xi = 1/eta, and the running space-time integrals that appear on the
left-hand side of the a-priori bounds (chi^2 xi, xi^2 chi^2,
xi^(p+2)|grad v|^2, u chi^2 xi).

From ensembles of traces the monitors fit minimal constants (C, delta)
such that LHS(T) <= C exp(delta T) * (initial-data term) over all
observed horizons; the constants are measured, never asserted.  A
monitor that meets a non-finite value flags blow-up instead of fitting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import Field, quotient_nodal

DEFAULT_P = 31.0 / 7.0
ALTERNATE_P = 20.0

TRACE_COLUMNS = (
    "time",
    "chi_l2_sq",
    "int_grad_chi_sq",
    "xi_lp_p",
    "xi_l1",
    "int_ln_xi",
    "abs_ln_xi_l1",
    "int_chi2_xi",
    "int_xi2_chi2",
    "int_xi_p2_grad_v_sq",
    "int_u_chi2_xi",
    "lnxi_dot_u",
    "chi_h1mrho_sq",
    "eta_l2",
    "eta_l1",
    "chi_min",
    "chi_argmin",
    "eta_min",
    "eta_argmin",
    "floor_activations",
)


@dataclass(frozen=True)
class FunctionalConfig:
    """Exponents and observation cadence for the functional trace."""

    p: float = DEFAULT_P
    rho: float = 1.1
    observation_stride: int = 10

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if self.observation_stride < 1:
            raise ValueError("observation_stride must be >= 1")

    def validate_for_dim(self, dim):
        lo_open = dim == 2
        if not (1.0 <= self.rho < 1.2) or (lo_open and self.rho == 1.0):
            interval = "(1, 6/5)" if lo_open else "[1, 6/5)"
            raise ValueError(f"rho = {self.rho:g} outside {interval} for d = {dim}")


@dataclass(frozen=True)
class AdmissibleSetSpec:
    """Bounds (K1, K2, K3) cutting out the admissible trajectory set."""

    K1: float
    K2: float
    K3: float

    def __post_init__(self):
        if min(self.K1, self.K2, self.K3) <= 0:
            raise ValueError("admissible-set bounds must be positive")


@dataclass
class FunctionalTrace:
    """Per-observation-time functional values of one trajectory."""

    times: np.ndarray
    data: dict[str, np.ndarray]
    p: float
    rho: float
    path_index: int = -1

    def column(self, name):
        if name == "time":
            return self.times
        return self.data[name]

    def n_rows(self):
        return self.times.size

    def window(self, horizon):
        """Index of the last observation time <= horizon (+ tolerance)."""
        idx = int(np.searchsorted(self.times, horizon + 1e-12, side="right")) - 1
        if idx < 0:
            raise ValueError(f"horizon {horizon:g} precedes the first observation")
        return idx


def xi_field(v: Field, floor: float):
    """Inverse inhibitor 1/max(v, floor); returns (field, activations)."""
    inv, activations = _xi_nodal(v.nodal, floor)
    return Field(v.basis, nodal=inv), activations


def _xi_nodal(v_nodal, floor):
    # reuse the quotient guard with u = 1 to get identical floor policy
    ones = np.ones_like(v_nodal)
    vals, activations = quotient_nodal(ones, v_nodal, floor)
    return vals, activations


class FunctionalRecorder:
    """Observer accumulating the functional trace of one trajectory."""

    def __init__(self, basis, config: FunctionalConfig, v_floor: float,
                 path_index: int = -1):
        self.basis = basis
        self.config = config
        self.v_floor = v_floor
        self.stride = config.observation_stride
        self.path_index = path_index
        self._rows = {name: [] for name in TRACE_COLUMNS if name != "time"}
        self._times = []
        self._int_grad_chi = 0.0
        self._int_chi2_xi = 0.0
        self._int_xi2_chi2 = 0.0
        self._int_xi_p2_gv = 0.0
        self._int_u_chi2_xi = 0.0
        self.xi_floor_activations = 0
        s = 1.0 - config.rho
        self._h_weights = (1.0 + basis.eigenvalues) ** s

    def _xi(self, view):
        xi, act = _xi_nodal(view.v_nodal, self.v_floor)
        self.xi_floor_activations += act
        return xi

    def _grad_v_sq(self, view):
        basis = self.basis
        out = np.zeros(basis.n_nodes)
        for ax in range(basis.domain.dim):
            g = basis.gradient_table(ax).T @ view.v_modal
            out += g * g
        return out

    def accumulate(self, view, dt):
        w = self.basis.weights
        xi = self._xi(view)
        u = view.u_nodal
        chi2xi = u * u * xi
        self._int_grad_chi += dt * float(
            np.sum(self.basis.eigenvalues * view.u_modal**2)
        )
        self._int_chi2_xi += dt * float(w @ chi2xi)
        self._int_xi2_chi2 += dt * float(w @ (chi2xi * xi))
        self._int_u_chi2_xi += dt * float(w @ (chi2xi * u))
        p = self.config.p
        self._int_xi_p2_gv += dt * float(
            w @ (xi ** (p + 2.0) * self._grad_v_sq(view))
        )

    def record(self, view):
        basis = self.basis
        w = basis.weights
        xi = self._xi(view)
        u = view.u_nodal
        v = view.v_nodal
        p = self.config.p
        ln_xi = np.log(xi)
        row = {
            "chi_l2_sq": float(np.sum(view.u_modal**2)),
            "int_grad_chi_sq": self._int_grad_chi,
            "xi_lp_p": float(w @ xi**p),
            "xi_l1": float(w @ xi),
            "int_ln_xi": float(w @ ln_xi),
            "abs_ln_xi_l1": float(w @ np.abs(ln_xi)),
            "int_chi2_xi": self._int_chi2_xi,
            "int_xi2_chi2": self._int_xi2_chi2,
            "int_xi_p2_grad_v_sq": self._int_xi_p2_gv,
            "int_u_chi2_xi": self._int_u_chi2_xi,
            "lnxi_dot_u": float(w @ (ln_xi * u)),
            "chi_h1mrho_sq": float(np.sum(self._h_weights * view.u_modal**2)),
            "eta_l2": float(np.sqrt(np.sum(view.v_modal**2))),
            "eta_l1": float(w @ np.abs(v)),
            "chi_min": float(u.min()),
            "chi_argmin": float(np.argmin(u)),
            "eta_min": float(v.min()),
            "eta_argmin": float(np.argmin(v)),
            "floor_activations": float(view.floor_activations
                                       + self.xi_floor_activations),
        }
        for name, value in row.items():
            self._rows[name].append(value)
        self._times.append(view.t)

    def trace(self) -> FunctionalTrace:
        return FunctionalTrace(
            times=np.asarray(self._times),
            data={k: np.asarray(v) for k, v in self._rows.items()},
            p=self.config.p,
            rho=self.config.rho,
            path_index=self.path_index,
        )


def lyapunov_L1(trace: FunctionalTrace, upto: int | None = None) -> float:
    """sup |chi|_L2^2 + int |grad chi|_L2^2 ds + sup |xi|_Lp^p over a window."""
    sl = slice(0, (trace.n_rows() if upto is None else upto + 1))
    return float(
        trace.data["chi_l2_sq"][sl].max()
        + trace.data["int_grad_chi_sq"][sl][-1]
        + trace.data["xi_lp_p"][sl].max()
    )


def lyapunov_L2(trace: FunctionalTrace, upto: int | None = None) -> float:
    """(int int chi^2 xi)^2 + int int xi^2 chi^2 over a window."""
    idx = trace.n_rows() - 1 if upto is None else upto
    return float(
        trace.data["int_chi2_xi"][idx] ** 2 + trace.data["int_xi2_chi2"][idx]
    )


def lyapunov_L3(trace: FunctionalTrace) -> np.ndarray:
    """Per-time |xi|_Lp^p + |xi|_L1 + (int ln xi)^2."""
    return (
        trace.data["xi_lp_p"]
        + trace.data["xi_l1"]
        + trace.data["int_ln_xi"] ** 2
    )


@dataclass
class MembershipReport:
    positivity_ok: bool
    l1_ok: bool
    l2_ok: bool
    l3_ok: bool
    mean_L1: float
    mean_L2: float
    sup_mean_L3: float
    bounds: AdmissibleSetSpec
    failure: str = ""

    @property
    def ok(self):
        return self.positivity_ok and self.l1_ok and self.l2_ok and self.l3_ok


def membership(traces, spec: AdmissibleSetSpec) -> MembershipReport:
    """Ensemble admissibility check against (K1, K2, K3).

    Expectations are ensemble means over the supplied traces; positivity
    requires chi >= 0 and eta > 0 at every observation of every trace.
    """
    traces = list(traces)
    if not traces:
        raise ValueError("membership needs at least one trace")
    failure = ""
    positivity_ok = True
    for trace in traces:
        chi_bad = trace.data["chi_min"] < 0.0
        eta_bad = trace.data["eta_min"] <= 0.0
        if chi_bad.any() or eta_bad.any():
            positivity_ok = False
            if chi_bad.any():
                i = int(np.flatnonzero(chi_bad)[0])
                failure = (
                    f"chi < 0 on path {trace.path_index} at t = "
                    f"{trace.times[i]:g}, node {int(trace.data['chi_argmin'][i])} "
                    f"(value {trace.data['chi_min'][i]:g})"
                )
            else:
                i = int(np.flatnonzero(eta_bad)[0])
                failure = (
                    f"eta <= 0 on path {trace.path_index} at t = "
                    f"{trace.times[i]:g}, node {int(trace.data['eta_argmin'][i])} "
                    f"(value {trace.data['eta_min'][i]:g})"
                )
            break
    mean_L1 = float(np.mean([lyapunov_L1(t) for t in traces]))
    mean_L2 = float(np.mean([lyapunov_L2(t) for t in traces]))
    l3 = np.mean([lyapunov_L3(t) for t in traces], axis=0)
    sup_mean_L3 = float(l3.max())
    return MembershipReport(
        positivity_ok=positivity_ok,
        l1_ok=mean_L1 <= spec.K1,
        l2_ok=mean_L2 <= spec.K2,
        l3_ok=sup_mean_L3 <= spec.K3,
        mean_L1=mean_L1,
        mean_L2=mean_L2,
        sup_mean_L3=sup_mean_L3,
        bounds=spec,
        failure=failure,
    )


def auto_bounds(traces, margin: float = 10.0) -> AdmissibleSetSpec:
    """Bounds sized from an ensemble's own functional values."""
    traces = list(traces)
    mean_L1 = float(np.mean([lyapunov_L1(t) for t in traces]))
    mean_L2 = float(np.mean([lyapunov_L2(t) for t in traces]))
    sup_L3 = float(np.max(np.mean([lyapunov_L3(t) for t in traces], axis=0)))
    tiny = 1e-12
    return AdmissibleSetSpec(
        K1=margin * max(mean_L1, tiny),
        K2=margin * max(mean_L2, tiny),
        K3=margin * max(sup_L3, tiny),
    )


@dataclass
class MonitorFit:
    name: str
    horizons: np.ndarray
    lhs: np.ndarray
    init: np.ndarray
    C: float
    delta: float
    blow_up: bool

    @property
    def ok(self):
        return not self.blow_up and np.isfinite(self.C) and np.isfinite(self.delta)


def fit_growth_envelope(horizons, lhs, init):
    """Minimal (C, delta) with lhs <= C exp(delta T) init at every horizon.

    delta comes from a least-squares fit of log(lhs/init) against T and
    C is then raised until every horizon satisfies the bound.  Entries
    with nonpositive lhs are vacuous and skipped; non-finite entries
    flag blow-up.
    """
    horizons = np.asarray(horizons, dtype=float)
    lhs = np.asarray(lhs, dtype=float)
    init = np.asarray(init, dtype=float)
    if not (np.all(np.isfinite(lhs)) and np.all(np.isfinite(init))):
        return np.nan, np.nan, True
    mask = (lhs > 0) & (init > 0)
    if not mask.any():
        return 0.0, 0.0, False
    y = np.log(lhs[mask] / init[mask])
    t = horizons[mask]
    if t.size >= 2 and np.ptp(t) > 0:
        delta = float(np.polyfit(t, y, 1)[0])
    else:
        delta = 0.0
    c = float(np.exp(np.max(y - delta * t)))
    return c, delta, False


def _mean_over(traces, name, idx):
    return float(np.mean([t.data[name][: idx + 1].max() for t in traces]))


def _mean_at(traces, name, idx):
    return float(np.mean([t.data[name][idx] for t in traces]))


def energy_monitors(traces, params, config: FunctionalConfig,
                    horizons=None) -> dict[str, MonitorFit]:
    """Fit growth envelopes for the a-priori-bound monitors.

    ``horizons`` defaults to the final observation time; each horizon
    must coincide with an observation time of every trace.
    """
    traces = list(traces)
    if not traces:
        raise ValueError("energy_monitors needs at least one trace")
    ref = traces[0]
    if horizons is None:
        horizons = [float(ref.times[-1])]
    horizons = np.asarray(sorted(horizons), dtype=float)
    idxs = [ref.window(h) for h in horizons]
    p = config.p

    def series(fn):
        return np.array([fn(i) for i in idxs])

    monitors = {}

    def add(name, lhs_fn, init_fn):
        lhs = series(lhs_fn)
        init = series(init_fn)
        c, delta, blow = fit_growth_envelope(horizons, lhs, init)
        monitors[name] = MonitorFit(
            name=name, horizons=horizons, lhs=lhs, init=init,
            C=c, delta=delta, blow_up=blow,
        )

    xi0 = _mean_at(traces, "xi_lp_p", 0)
    add("xi_lp_sup",
        lambda i: _mean_over(traces, "xi_lp_p", i),
        lambda i: xi0)
    r_v = params.r_v
    add("xi_lp_energy",
        lambda i: (_mean_over(traces, "xi_lp_p", i)
                   + 2 * p * (p + 1) * r_v
                   * _mean_at(traces, "int_xi_p2_grad_v_sq", i)),
        lambda i: xi0)
    xi_l1_0 = _mean_at(traces, "xi_l1", 0)
    add("xi_l1_pathsup",
        lambda i: (_mean_over(traces, "xi_l1", i)
                   + params.kappa_v * _mean_at(traces, "int_xi2_chi2", i)),
        lambda i: xi_l1_0)
    # sup_t of the ensemble mean, the literal quantifier order of the bound
    mean_l1_curve = np.mean([t.data["xi_l1"] for t in traces], axis=0)
    add("xi_l1_meansup",
        lambda i: (float(mean_l1_curve[: i + 1].max())
                   + params.kappa_v * _mean_at(traces, "int_xi2_chi2", i)),
        lambda i: xi_l1_0)
    ln0 = _mean_at(traces, "eta_l1", 0) + _mean_at(traces, "abs_ln_xi_l1", 0)
    add("ln_xi",
        lambda i: (_mean_at(traces, "abs_ln_xi_l1", i)
                   + params.kappa_v * _mean_at(traces, "int_chi2_xi", i)),
        lambda i: ln0)
    u0 = _mean_at(traces, "chi_l2_sq", 0)
    add("u_energy",
        lambda i: (_mean_over(traces, "chi_l2_sq", i)
                   + 4 * params.r_u * _mean_at(traces, "int_grad_chi_sq", i)),
        lambda i: u0 + 2 * params.kappa_u * _mean_at(traces, "int_u_chi2_xi", i))
    lnu0 = 1.0 + abs(_mean_at(traces, "lnxi_dot_u", 0))
    add("lnxi_u",
        lambda i: (_mean_at(traces, "lnxi_dot_u", i)
                   - _mean_at(traces, "lnxi_dot_u", 0)
                   + params.kappa_u * _mean_at(traces, "int_u_chi2_xi", i)),
        lambda i: lnu0)
    h0 = 1.0 + _mean_at(traces, "chi_h1mrho_sq", 0)
    add("u_h1mrho",
        lambda i: _mean_over(traces, "chi_h1mrho_sq", i),
        lambda i: h0)
    v0 = 1.0 + _mean_at(traces, "eta_l2", 0)
    add("v_l2",
        lambda i: _mean_over(traces, "eta_l2", i),
        lambda i: v0)
    return monitors
