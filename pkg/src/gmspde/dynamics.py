"""Time stepping of the coupled activator-inhibitor SPDE.

Two schemes share one exponential core:

* ``ito_imex``: the Ito form in which the scalar decay rates are
  replaced by the diagonal operators mu*Id - sigma*(Id+A)^(-gamma);
  the nonlinearity and the leftover sigma*(Id+A)^(-gamma) part are
  treated explicitly, the noise term by Euler-Maruyama.
* ``stratonovich_heun``: the Stratonovich form with plain scalar decay
  and a midpoint (Heun) predictor-corrector on the noise coefficient.

Per mode, the stiff linear part c_k = r*lambda_k (+ mu when the scalar
decay is folded in, the default) is integrated exactly:

    x <- exp(-c dt) x + dt phi1(c dt) F + exp(-c dt) noise,

with phi1(z) = (1 - exp(-z))/z.  The phi1 weighting makes homogeneous
steady states exact fixed points of the discrete map and reproduces
pure exponential decay to rounding error; the plain Euler bracket
cannot do both at once.

Nonlinear and noise products are formed nodally and projected back to
the truncation with a 2/3-rule guard.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import Field, FieldPair, dealias_modal, quotient_nodal
from .noise import NoisePath, NoiseSpec
from .spectral import SpectralBasis

SCHEMES = ("ito_imex", "stratonovich_heun")


class SimulationError(RuntimeError):
    """Runtime failure of a trajectory (CFL violation, non-finite state)."""


@dataclass(frozen=True)
class ModelParams:
    """Diffusion, source, decay and noise-intensity constants."""

    r_u: float
    r_v: float
    kappa_u: float
    kappa_v: float
    mu_u: float
    mu_v: float
    sigma_u: float
    sigma_v: float

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value < 0:
                raise ValueError(f"{name} = {value:g} violates positivity")

    def validate_strict(self):
        """All-positive check; zeros are reserved for analytic-limit runs."""
        zero = [k for k, v in self.__dict__.items() if v == 0]
        if zero:
            raise ValueError(f"parameters must be strictly positive: {zero} are zero")


def steady_state(params: ModelParams):
    """Homogeneous noiseless fixed point (u*, v*)."""
    u_star = params.kappa_u * params.mu_v / (params.kappa_v * params.mu_u)
    v_star = params.kappa_v * u_star**2 / params.mu_v
    return u_star, v_star


@dataclass(frozen=True)
class SchemeConfig:
    """Solver decisions: step size, scheme, floors, guards."""

    dt: float
    T: float
    scheme: str = "ito_imex"
    v_floor: float = 1e-8
    dealias: bool = True
    exact_scalar_decay: bool = True
    reaction_cfl_limit: float = 1.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.T < 0:
            raise ValueError("horizon must be nonnegative")
        if self.T > 0 and self.dt >= self.T + 1e-15:
            raise ValueError("dt must be smaller than the horizon")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.v_floor < 0:
            raise ValueError("v_floor must be >= 0")

    def n_steps(self):
        if self.T == 0:
            return 0
        n = int(round(self.T / self.dt))
        if abs(n * self.dt - self.T) > 1e-9 * max(1.0, self.T):
            raise ValueError(
                f"horizon {self.T:g} is not an integral number of steps of {self.dt:g}"
            )
        return n


@dataclass
class SimState:
    """One point along a trajectory."""

    t: float
    pair: FieldPair
    step_index: int = 0
    floor_activations: int = 0


def upsilon_apply(f: Field, mu: float, sigma: float, gamma: float,
                  basis: SpectralBasis) -> Field:
    """Apply the corrected decay operator mu*Id - sigma*(Id+A)^(-gamma)."""
    factor = mu - sigma * (1.0 + basis.eigenvalues) ** (-gamma)
    return Field(basis, modal=factor * f.modal)


def _phi1(z):
    """(1 - exp(-z))/z, stable at z = 0."""
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    pos = z != 0.0
    out[pos] = -np.expm1(-z[pos]) / z[pos]
    return out


@dataclass
class _RawState:
    t: float
    step_index: int
    u_modal: np.ndarray
    v_modal: np.ndarray
    u_nodal: np.ndarray    # flat
    v_nodal: np.ndarray    # flat
    floor_activations: int


class Stepper:
    """Precomputed per-mode factors for one (basis, params, scheme) triple."""

    def __init__(self, basis: SpectralBasis, params: ModelParams,
                 scheme: SchemeConfig, noise_spec: NoiseSpec):
        if basis.mode_count != noise_spec.mode_count:
            raise ValueError("basis and noise spec disagree on mode count")
        self.basis = basis
        self.params = params
        self.scheme = scheme
        self.noise_spec = noise_spec
        lam = basis.eigenvalues
        dt = scheme.dt
        fold = scheme.exact_scalar_decay
        c_u = params.r_u * lam + (params.mu_u if fold else 0.0)
        c_v = params.r_v * lam + (params.mu_v if fold else 0.0)
        self.exp_u = np.exp(-c_u * dt)
        self.exp_v = np.exp(-c_v * dt)
        self.gain_u = dt * _phi1(c_u * dt)
        self.gain_v = dt * _phi1(c_v * dt)
        # leftover diagonal drift once the exponential absorbed r*lambda (+mu)
        smooth1 = (1.0 + lam) ** (-noise_spec.gamma1)
        smooth2 = (1.0 + lam) ** (-noise_spec.gamma2)
        if fold:
            self.ito_lin_u = params.sigma_u * smooth1
            self.ito_lin_v = params.sigma_v * smooth2
            self.strat_lin_u = np.zeros_like(lam)
            self.strat_lin_v = np.zeros_like(lam)
        else:
            self.ito_lin_u = -(params.mu_u - params.sigma_u * smooth1)
            self.ito_lin_v = -(params.mu_v - params.sigma_v * smooth2)
            self.strat_lin_u = np.full_like(lam, -params.mu_u)
            self.strat_lin_v = np.full_like(lam, -params.mu_v)
        self.damp1 = (1.0 + lam) ** (-0.5 * noise_spec.gamma1)
        self.damp2 = (1.0 + lam) ** (-0.5 * noise_spec.gamma2)
        if scheme.dealias:
            self._keep = dealias_modal(basis, np.ones(basis.mode_count)) != 0.0
        else:
            self._keep = None

    def _project(self, nodal_flat):
        modal = self.basis.project(nodal_flat)
        if self._keep is not None:
            modal = np.where(self._keep, modal, 0.0)
        return modal

    def raw_state(self, pair: FieldPair, t=0.0, step_index=0,
                  floor_activations=0) -> _RawState:
        u_modal = pair.u.modal.copy()
        v_modal = pair.v.modal.copy()
        return _RawState(
            t=t, step_index=step_index,
            u_modal=u_modal, v_modal=v_modal,
            u_nodal=self.basis.synthesize(u_modal),
            v_nodal=self.basis.synthesize(v_modal),
            floor_activations=floor_activations,
        )

    def to_state(self, raw: _RawState) -> SimState:
        shape = self.basis.grid_shape
        pair = FieldPair(
            Field(self.basis, nodal=raw.u_nodal.reshape(shape).copy(),
                  modal=raw.u_modal.copy()),
            Field(self.basis, nodal=raw.v_nodal.reshape(shape).copy(),
                  modal=raw.v_modal.copy()),
        )
        return SimState(t=raw.t, pair=pair, step_index=raw.step_index,
                        floor_activations=raw.floor_activations)

    def _reaction(self, raw):
        """Quotient and squared source with the CFL guard."""
        p = self.params
        dt = self.scheme.dt
        q_nodal, activations = quotient_nodal(
            raw.u_nodal, raw.v_nodal, self.scheme.v_floor
        )
        raw.floor_activations += activations
        peak = p.kappa_u * float(q_nodal.max(initial=0.0)) * dt
        if peak >= self.scheme.reaction_cfl_limit:
            raise SimulationError(
                f"reaction CFL violated at step {raw.step_index}: "
                f"kappa_u*max(u^2/v)*dt = {peak:g} >= {self.scheme.reaction_cfl_limit:g}"
            )
        return q_nodal

    def _forcing(self, raw, q_nodal, lin_u, lin_v):
        p = self.params
        f_u = p.kappa_u * self._project(q_nodal) + lin_u * raw.u_modal
        f_v = p.kappa_v * self._project(raw.u_nodal * raw.u_nodal) + lin_v * raw.v_modal
        return f_u, f_v

    def _noise_modal(self, u_nodal, v_nodal, dw1_modal, dw2_modal):
        p = self.params
        n_u = self._project(p.sigma_u * u_nodal * self.basis.synthesize(dw1_modal))
        n_v = self._project(p.sigma_v * v_nodal * self.basis.synthesize(dw2_modal))
        return n_u, n_v

    def _finish(self, raw, u_new, v_new):
        if not (np.all(np.isfinite(u_new)) and np.all(np.isfinite(v_new))):
            raise SimulationError(
                f"non-finite state after step {raw.step_index}"
            )
        raw.u_modal = u_new
        raw.v_modal = v_new
        raw.u_nodal = self.basis.synthesize(u_new)
        raw.v_nodal = self.basis.synthesize(v_new)
        raw.step_index += 1
        raw.t = raw.step_index * self.scheme.dt

    def advance_ito(self, raw: _RawState, dw1_modal, dw2_modal):
        q = self._reaction(raw)
        f_u, f_v = self._forcing(raw, q, self.ito_lin_u, self.ito_lin_v)
        n_u, n_v = self._noise_modal(raw.u_nodal, raw.v_nodal, dw1_modal, dw2_modal)
        u_new = self.exp_u * (raw.u_modal + n_u) + self.gain_u * f_u
        v_new = self.exp_v * (raw.v_modal + n_v) + self.gain_v * f_v
        self._finish(raw, u_new, v_new)

    def advance_stratonovich(self, raw: _RawState, dw1_modal, dw2_modal):
        q = self._reaction(raw)
        f_u, f_v = self._forcing(raw, q, self.strat_lin_u, self.strat_lin_v)
        n_u, n_v = self._noise_modal(raw.u_nodal, raw.v_nodal, dw1_modal, dw2_modal)
        det_u = self.exp_u * raw.u_modal + self.gain_u * f_u
        det_v = self.exp_v * raw.v_modal + self.gain_v * f_v
        pred_u = det_u + self.exp_u * n_u
        pred_v = det_v + self.exp_v * n_v
        pn_u, pn_v = self._noise_modal(
            self.basis.synthesize(pred_u), self.basis.synthesize(pred_v),
            dw1_modal, dw2_modal,
        )
        u_new = det_u + self.exp_u * 0.5 * (n_u + pn_u)
        v_new = det_v + self.exp_v * 0.5 * (n_v + pn_v)
        self._finish(raw, u_new, v_new)

    def advance(self, raw, dw1_modal, dw2_modal):
        if self.scheme.scheme == "ito_imex":
            self.advance_ito(raw, dw1_modal, dw2_modal)
        else:
            self.advance_stratonovich(raw, dw1_modal, dw2_modal)


def _single_step(state, params, scheme, basis, noise_spec, dw1, dw2, method):
    stepper = Stepper(basis, params, scheme, noise_spec)
    raw = stepper.raw_state(state.pair, t=state.t, step_index=state.step_index,
                            floor_activations=state.floor_activations)
    getattr(stepper, method)(raw, dw1.modal, dw2.modal)
    out = stepper.to_state(raw)
    out.t = state.t + scheme.dt
    return out


def step_ito(state: SimState, params, scheme, basis, noise_spec,
             dw1: Field, dw2: Field) -> SimState:
    """One Ito IMEX step driven by the given increment fields."""
    return _single_step(state, params, scheme, basis, noise_spec, dw1, dw2,
                        "advance_ito")


def step_stratonovich(state: SimState, params, scheme, basis, noise_spec,
                      dw1: Field, dw2: Field) -> SimState:
    """One Stratonovich Heun step driven by the given increment fields."""
    return _single_step(state, params, scheme, basis, noise_spec, dw1, dw2,
                        "advance_stratonovich")


@dataclass
class StateView:
    """Read-only view handed to observers each step (buffers are live)."""

    t: float
    step_index: int
    u_modal: np.ndarray
    v_modal: np.ndarray
    u_nodal: np.ndarray
    v_nodal: np.ndarray
    floor_activations: int


@dataclass
class RunResult:
    final: SimState
    n_steps: int
    observers: tuple


def _view(raw):
    return StateView(
        t=raw.t, step_index=raw.step_index,
        u_modal=raw.u_modal, v_modal=raw.v_modal,
        u_nodal=raw.u_nodal, v_nodal=raw.v_nodal,
        floor_activations=raw.floor_activations,
    )


def run(initial: FieldPair, params: ModelParams, scheme: SchemeConfig,
        basis: SpectralBasis, noise_spec: NoiseSpec,
        path: NoisePath | None, observers=()) -> RunResult:
    """Drive a full trajectory, invoking observers along the way.

    Observers may define ``begin(view)``, ``accumulate(view, dt)``
    (called with the pre-step state before every step), and
    ``record(view)`` (called every ``observer.stride`` steps and at the
    final time).  The trajectory is a pure function of its arguments.

    ``path`` may be None only for noiseless runs (sigma_u = sigma_v = 0).
    """
    n_steps = scheme.n_steps()
    if path is None:
        if params.sigma_u != 0.0 or params.sigma_v != 0.0:
            raise ValueError("a noise path is required when sigma > 0")
        zeros = np.zeros(basis.mode_count)
        increments = None
    else:
        if path.n_steps < n_steps:
            raise ValueError(
                f"noise path has {path.n_steps} steps, run needs {n_steps}"
            )
        dts = path.dts[:n_steps]
        if n_steps and np.max(np.abs(dts - scheme.dt)) > 1e-12 * max(1.0, scheme.dt):
            raise ValueError("noise path time grid does not match scheme dt")
        increments = path.increments

    stepper = Stepper(basis, params, scheme, noise_spec)
    raw = stepper.raw_state(initial)

    for obs in observers:
        if hasattr(obs, "begin"):
            obs.begin(_view(raw))
        if hasattr(obs, "record"):
            obs.record(_view(raw))

    for n in range(n_steps):
        view = _view(raw)
        for obs in observers:
            if hasattr(obs, "accumulate"):
                obs.accumulate(view, scheme.dt)
        if increments is None:
            dw1 = dw2 = zeros
        else:
            dw1 = stepper.damp1 * increments[0, :, n]
            dw2 = stepper.damp2 * increments[1, :, n]
        stepper.advance(raw, dw1, dw2)
        at_end = (n + 1) == n_steps
        for obs in observers:
            stride = getattr(obs, "stride", 1)
            if hasattr(obs, "record") and (at_end or (n + 1) % stride == 0):
                obs.record(_view(raw))

    return RunResult(final=stepper.to_state(raw), n_steps=n_steps,
                     observers=tuple(observers))


def default_initial_pair(basis: SpectralBasis, params: ModelParams,
                         amplitude: float = 0.01) -> FieldPair:
    """Near-homogeneous start: u* with small bumps in modes 1..4, v*."""
    u_star, v_star = steady_state(params)
    sqrt_vol = np.sqrt(basis.volume)
    u_modal = np.zeros(basis.mode_count)
    u_modal[0] = u_star * sqrt_vol
    for k in range(1, min(5, basis.mode_count)):
        u_modal[k] = amplitude * u_star
    v_modal = np.zeros(basis.mode_count)
    v_modal[0] = v_star * sqrt_vol
    return FieldPair(Field(basis, modal=u_modal), Field(basis, modal=v_modal))
