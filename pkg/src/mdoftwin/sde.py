"""Strong SDE integration and synthetic-signal utilities.

Two schemes are provided for dy = a(y, f) dt + b(y) dW:

* Euler-Maruyama, ``y + a dt + b dw`` (the filter's low-fidelity model),
* the strong Taylor-1.5 scheme used for data generation and prediction,

      y + a dt + b dw + 0.5 L^j(b_j) (dw_j^2 - dt) + L^j(a) dz_j
        + L^0(b_j) (dw_j dt - dz_j) + 0.5 L^0(a) dt^2

  with L^0 = sum_i a_i d_i + 0.5 sum_ij (b b^T)_ij d_i d_j and
  L^j = sum_i b_ij d_i. The force sample is held constant across a step.
  For additive noise the L(b) terms are identically zero and are skipped.

Analytic partial derivatives supplied by the model builders are preferred;
finite-difference fallbacks cover models that do not provide them and are
reused by the validation tests.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidParameterError, NumericError
from .models import MdofSystem, StateSpaceModel, acceleration_model

SCHEME_EULER = "euler-maruyama"
SCHEME_TAYLOR15 = "taylor15"


@dataclass(frozen=True)
class IntegratorConfig:
    """Time step, scheme selector and seed; identical config and seed
    reproduce trajectories bit for bit."""

    dt: float = 1e-3
    scheme: str = SCHEME_TAYLOR15
    seed: int = 0

    def __post_init__(self):
        if self.dt <= 0.0:
            raise InvalidParameterError("dt must be positive")
        if self.scheme not in (SCHEME_EULER, SCHEME_TAYLOR15):
            raise InvalidParameterError(f"unknown scheme {self.scheme!r}")

    def to_dict(self) -> dict:
        return {"dt": self.dt, "scheme": self.scheme, "seed": int(self.seed)}

    @classmethod
    def from_dict(cls, doc: dict) -> "IntegratorConfig":
        return cls(
            dt=doc.get("dt", 1e-3),
            scheme=doc.get("scheme", SCHEME_TAYLOR15),
            seed=int(doc.get("seed", 0)),
        )


@dataclass(frozen=True)
class BrownianIncrementPair:
    """Correlated increments dw = int dW and dz = int int dW ds per channel.

    Joint moments: E[dw^2] = dt, E[dz^2] = dt^3/3, E[dw dz] = dt^2/2.
    Arrays are (n_channels,) for one step or (n_steps, n_channels).
    """

    dw: np.ndarray
    dz: np.ndarray


def sample_brownian_increments(
    rng: np.random.Generator, dt: float, n_channels: int, n_steps: int | None = None
) -> BrownianIncrementPair:
    """Draw increment pairs via dw = sqrt(dt) u1, dz = dt^1.5 (u1 + u2/sqrt(3))/2."""
    shape = (n_channels,) if n_steps is None else (n_steps, n_channels)
    u1 = rng.standard_normal(shape)
    u2 = rng.standard_normal(shape)
    dw = np.sqrt(dt) * u1
    dz = 0.5 * dt ** 1.5 * (u1 + u2 / np.sqrt(3.0))
    return BrownianIncrementPair(dw=dw, dz=dz)


def _check_state(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise NumericError("non-finite input state")
    return y


def em_step(model: StateSpaceModel, y, f_t, dw, dt: float) -> np.ndarray:
    """One Euler-Maruyama step y + a dt + b dw."""
    y = _check_state(y)
    a = model.drift(y, f_t)
    b = model.dispersion(y)
    return y + a * dt + b @ np.asarray(dw, dtype=float)


# ---- finite-difference fallbacks -------------------------------------------


def fd_drift_jacobian(model: StateSpaceModel, y, f_t, eps: float = 1e-6) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    dim = y.shape[0]
    jac = np.empty((dim, dim))
    for i in range(dim):
        step = np.zeros(dim)
        step[i] = eps
        jac[:, i] = (model.drift(y + step, f_t) - model.drift(y - step, f_t)) / (2.0 * eps)
    return jac


def fd_dispersion_jacobian(model: StateSpaceModel, y, eps: float = 1e-6) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    dim = y.shape[0]
    db = np.empty((dim, model.n_channels, dim))
    for i in range(dim):
        step = np.zeros(dim)
        step[i] = eps
        db[:, :, i] = (model.dispersion(y + step) - model.dispersion(y - step)) / (2.0 * eps)
    return db


def fd_drift_hessian_quad(
    model: StateSpaceModel, y, f_t, weight: np.ndarray, eps: float = 1e-4
) -> np.ndarray:
    """0.5 sum_ij weight[i,j] d2a/dy_i dy_j by central second differences."""
    y = np.asarray(y, dtype=float)
    dim = y.shape[0]
    out = np.zeros(dim)
    for i in range(dim):
        ei = np.zeros(dim)
        ei[i] = eps
        for j in range(i, dim):
            w = weight[i, j]
            if w == 0.0 and weight[j, i] == 0.0:
                continue
            ej = np.zeros(dim)
            ej[j] = eps
            d2 = (
                model.drift(y + ei + ej, f_t)
                - model.drift(y + ei - ej, f_t)
                - model.drift(y - ei + ej, f_t)
                + model.drift(y - ei - ej, f_t)
            ) / (4.0 * eps * eps)
            scale = w if i == j else w + weight[j, i]
            out += 0.5 * scale * d2
    return out


def taylor15_step(
    model: StateSpaceModel, y, f_t, inc: BrownianIncrementPair, dt: float
) -> np.ndarray:
    """One strong Taylor-1.5 step."""
    y = _check_state(y)
    dw = np.asarray(inc.dw, dtype=float)
    dz = np.asarray(inc.dz, dtype=float)
    a = model.drift(y, f_t)
    b = model.dispersion(y)

    if model.drift_jacobian is not None:
        jac = model.drift_jacobian(y, f_t)
    else:
        jac = fd_drift_jacobian(model, y, f_t)
    out = y + a * dt + b @ dw
    out += (jac @ b) @ dz  # L^j(a) dz_j

    bbT = b @ b.T
    if model.drift_hessian_quad is not None:
        hess_quad = model.drift_hessian_quad(y, f_t, bbT)
    else:
        hess_quad = fd_drift_hessian_quad(model, y, f_t, bbT)
    out += 0.5 * (jac @ a + hess_quad) * dt * dt  # 0.5 L^0(a) dt^2

    if model.dispersion_jacobian is not None:
        db = model.dispersion_jacobian(y)  # (dim, channels, dim)
        # L^j applied to column j of b (diagonal-noise Milstein term)
        ljb = np.einsum("ij,kji->kj", b, db)
        out += 0.5 * ljb @ (dw * dw - dt)
        # L^0(b): first-order transport only, exact for state-affine b
        l0b = np.einsum("i,kli->kl", a, db)
        out += l0b @ (dw * dt - dz)
    return out


# ---- trajectory simulation --------------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    """Uniform-grid sample path with clean accelerations and applied forces."""

    times: np.ndarray
    states: np.ndarray
    accelerations: np.ndarray
    forces: np.ndarray

    def __post_init__(self):
        m = self.times.shape[0]
        if not (self.states.shape[0] == self.accelerations.shape[0]
                == self.forces.shape[0] == m):
            raise InvalidParameterError("trajectory arrays must share the grid length")
        steps = np.diff(self.times)
        if m > 1 and not (np.all(steps > 0.0)
                          and np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12)):
            raise InvalidParameterError("times must increase on a uniform grid")

    def to_csv(self, path, state_labels: Sequence[str]) -> None:
        n_acc = self.accelerations.shape[1]
        n_f = self.forces.shape[1]
        header = (["time"] + list(state_labels)
                  + [f"accel_{i + 1}" for i in range(n_acc)]
                  + [f"force_{i + 1}" for i in range(n_f)])
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i in range(self.times.shape[0]):
                row = ([repr(float(self.times[i]))]
                       + [repr(float(v)) for v in self.states[i]]
                       + [repr(float(v)) for v in self.accelerations[i]]
                       + [repr(float(v)) for v in self.forces[i]])
                writer.writerow(row)


def simulate_window(
    model: StateSpaceModel,
    system: MdofSystem,
    y0,
    duration: float,
    cfg: IntegratorConfig,
    *,
    forces: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> Trajectory:
    """Integrate the model over [0, duration] and record clean accelerations.

    ``forces`` overrides the per-sample deterministic force (shape
    (n_steps + 1, n_dof)); by default the system's harmonic force is used.
    The left-endpoint force sample drives each step. A fresh generator is
    derived from ``cfg.seed`` unless ``rng`` is passed.
    """
    if duration < cfg.dt:
        raise InvalidParameterError("duration must be at least one time step")
    y0 = _check_state(y0)
    if y0.shape != (model.dim_state,):
        raise InvalidParameterError(
            f"y0 must have shape ({model.dim_state},), got {y0.shape}")
    n_steps = int(round(duration / cfg.dt))
    times = np.arange(n_steps + 1) * cfg.dt
    if forces is None:
        forces = system.force_at(times)
    else:
        forces = np.asarray(forces, dtype=float)
        if forces.shape != (n_steps + 1, system.n_dof):
            raise InvalidParameterError("forces must be sampled on the window grid")

    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    inc = sample_brownian_increments(rng, cfg.dt, model.n_channels, n_steps)

    states = np.empty((n_steps + 1, model.dim_state))
    states[0] = y0
    y = y0
    if cfg.scheme == SCHEME_EULER:
        for k in range(n_steps):
            y = em_step(model, y, forces[k], inc.dw[k], cfg.dt)
            states[k + 1] = y
    else:
        for k in range(n_steps):
            y = taylor15_step(
                model, y, forces[k],
                BrownianIncrementPair(dw=inc.dw[k], dz=inc.dz[k]), cfg.dt)
            states[k + 1] = y
    if not np.all(np.isfinite(states)):
        raise NumericError("trajectory diverged to non-finite values")

    h_all = acceleration_model(
        system, range(1, system.n_dof + 1), augment_params=model.augmented_params)
    accelerations = h_all(states)
    return Trajectory(times=times, states=states,
                      accelerations=accelerations, forces=forces)


# ---- measurement-noise injection --------------------------------------------


def noise_std_for_snr(signal: np.ndarray, snr: float) -> np.ndarray:
    """Per-channel Gaussian noise std giving var(signal)/var(noise) = snr."""
    if snr <= 0.0:
        raise InvalidParameterError("snr must be positive")
    signal = np.asarray(signal, dtype=float)
    sigma = np.std(signal, axis=0)
    if np.any(sigma <= 0.0):
        raise InvalidParameterError("signal has a zero-variance channel; SNR undefined")
    return sigma / np.sqrt(snr)


def corrupt_with_snr(signal: np.ndarray, snr: float, rng) -> np.ndarray:
    """Add white Gaussian noise at the requested signal-to-noise ratio.

    ``rng`` is a Generator or an integer seed. Channels are the trailing
    axis of a 2-D series; 1-D input is treated as a single channel.
    """
    signal = np.asarray(signal, dtype=float)
    sigma_noise = noise_std_for_snr(signal, snr)
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return signal + rng.standard_normal(signal.shape) * sigma_noise
