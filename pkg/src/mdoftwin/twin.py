"""Slow-timescale orchestration: windows, assimilation, tracking, prediction.

A campaign walks the service-time grid (every ``window_interval_days``),
producing one short measurement window per visit: the degraded system is
simulated with the strong Taylor-1.5 scheme, accelerations are corrupted at
the acceleration SNR and the deterministic force at the force SNR (the same
noisy force realization drives the simulation and is handed to the filter,
which never sees the clean force). Each window is assimilated by a joint
UKF run warm-started from the previous window; terminal stiffness estimates
accumulate in the snapshot and one GP per degrading stiffness is retrained
after every assimilation once three points exist.

All randomness derives from a single master seed; window i uses seed
``master_seed + i`` and consumes its generator in a fixed order (force
noise, Brownian increments, acceleration noise).
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import gpr
from .errors import InvalidParameterError, NumericError
from .models import (DegradationSchedule, MdofSystem, degraded_stiffness,
                     to_state_space)
from .sde import (IntegratorConfig, Trajectory, corrupt_with_snr,
                  noise_std_for_snr, simulate_window)
from .ukf import (GaussianBelief, NoiseModel, UkfParams, build_process_noise,
                  run_filter)

logger = logging.getLogger(__name__)

SNAPSHOT_VERSION = 1


# ---------------------------------------------------------------------------
# Measurement windows
# ---------------------------------------------------------------------------


@dataclass
class MeasurementWindow:
    """One fast-time record: noisy accelerations and force at slow time t_s."""

    t_s: float
    times: np.ndarray
    accel: np.ndarray
    force: np.ndarray
    observed_dofs: tuple
    accel_noise_std: np.ndarray | None = None
    force_noise_std: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.accel = np.atleast_2d(np.asarray(self.accel, dtype=float))
        if self.accel.shape[0] != self.times.shape[0] and \
                self.accel.shape[1] == self.times.shape[0]:
            self.accel = self.accel.T
        self.force = np.asarray(self.force, dtype=float)
        self.observed_dofs = tuple(int(d) for d in self.observed_dofs)
        n = self.times.shape[0]
        if self.accel.shape != (n, len(self.observed_dofs)):
            raise InvalidParameterError("accel must be (n_samples, n_observed)")
        if self.force.shape[0] != n:
            raise InvalidParameterError("force must be sampled on the window grid")
        if self.accel_noise_std is not None:
            self.accel_noise_std = np.asarray(self.accel_noise_std, dtype=float)
        if self.force_noise_std is not None:
            self.force_noise_std = np.asarray(self.force_noise_std, dtype=float)

    def save(self, base_path) -> tuple:
        """Write <base>.csv (series) and <base>.json (sidecar); return paths."""
        base = Path(base_path)
        csv_path = base.with_suffix(".csv")
        sidecar_path = base.with_suffix(".json")
        header = (["time"]
                  + [f"accel_dof{d}" for d in self.observed_dofs]
                  + [f"force_dof{i + 1}" for i in range(self.force.shape[1])])
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i in range(self.times.shape[0]):
                writer.writerow(
                    [repr(float(self.times[i]))]
                    + [repr(float(v)) for v in self.accel[i]]
                    + [repr(float(v)) for v in self.force[i]])
        sidecar = {
            "t_s": float(self.t_s),
            "observed_dofs": list(self.observed_dofs),
            "n_samples": int(self.times.shape[0]),
            "provenance": self.provenance,
        }
        if self.accel_noise_std is not None:
            sidecar["accel_noise_std"] = [float(v) for v in self.accel_noise_std]
        if self.force_noise_std is not None:
            sidecar["force_noise_std"] = [float(v) for v in self.force_noise_std]
        with open(sidecar_path, "w", encoding="utf-8") as fh:
            json.dump(sidecar, fh, sort_keys=True, indent=2)
            fh.write("\n")
        return csv_path, sidecar_path

    @classmethod
    def load(cls, base_path) -> "MeasurementWindow":
        base = Path(base_path)
        csv_path = base.with_suffix(".csv")
        sidecar_path = base.with_suffix(".json")
        with open(sidecar_path, encoding="utf-8") as fh:
            sidecar = json.load(fh)
        observed = tuple(sidecar["observed_dofs"])
        with open(csv_path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = np.array([[float(v) for v in row] for row in reader])
        n_obs = len(observed)
        times = rows[:, 0]
        accel = rows[:, 1:1 + n_obs]
        force = rows[:, 1 + n_obs:]
        expected = ["time"] + [f"accel_dof{d}" for d in observed]
        if header[:1 + n_obs] != expected:
            raise InvalidParameterError(f"unexpected window header {header[:1 + n_obs]}")
        return cls(
            t_s=sidecar["t_s"],
            times=times,
            accel=accel,
            force=force,
            observed_dofs=observed,
            accel_noise_std=sidecar.get("accel_noise_std"),
            force_noise_std=sidecar.get("force_noise_std"),
            provenance=dict(sidecar.get("provenance", {"kind": "ingested",
                                                       "path": str(csv_path)})),
        )


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UkfRunConfig:
    """Per-window filter settings (priors, warm start, noise overrides)."""

    params: UkfParams = UkfParams()
    init_offset_factor: float = 0.8
    init_state_variance: float = 1e-4
    init_param_std_factor: float = 0.1
    warm_param_std_factor: float = 0.02
    frozen_param_std_factor: float = 1e-3
    q_scale: float | None = None
    q_extra_diag: float | None = None
    measurement_noise_std: tuple | None = None

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "init_offset_factor": self.init_offset_factor,
            "init_state_variance": self.init_state_variance,
            "init_param_std_factor": self.init_param_std_factor,
            "warm_param_std_factor": self.warm_param_std_factor,
            "frozen_param_std_factor": self.frozen_param_std_factor,
            "q_scale": self.q_scale,
            "q_extra_diag": self.q_extra_diag,
            "measurement_noise_std": (
                None if self.measurement_noise_std is None
                else list(self.measurement_noise_std)),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "UkfRunConfig":
        mns = doc.get("measurement_noise_std")
        return cls(
            params=UkfParams.from_dict(doc.get("params", {})),
            init_offset_factor=doc.get("init_offset_factor", 0.8),
            init_state_variance=doc.get("init_state_variance", 1e-4),
            init_param_std_factor=doc.get("init_param_std_factor", 0.1),
            warm_param_std_factor=doc.get("warm_param_std_factor", 0.02),
            frozen_param_std_factor=doc.get("frozen_param_std_factor", 1e-3),
            q_scale=doc.get("q_scale"),
            q_extra_diag=doc.get("q_extra_diag"),
            measurement_noise_std=None if mns is None else tuple(mns),
        )


@dataclass(frozen=True)
class CampaignConfig:
    """Slow-time sampling plan plus all sub-configurations."""

    horizon_days: float = 2000.0
    window_interval_days: float = 50.0
    window_duration_s: float = 5.0
    observed_dofs: tuple | None = None  # None = all DOFs
    snr_accel: float = 50.0
    snr_force: float = 20.0
    degradation_rate_per_day: float = 0.5e-4
    master_seed: int = 0
    integrator: IntegratorConfig = IntegratorConfig()
    ukf: UkfRunConfig = UkfRunConfig()
    gp: gpr.GpTrainConfig = gpr.GpTrainConfig()

    def __post_init__(self):
        if self.window_interval_days <= 0.0 or self.window_duration_s <= 0.0:
            raise InvalidParameterError("interval and duration must be positive")
        if self.horizon_days < 0.0:
            raise InvalidParameterError("horizon must be non-negative")
        if self.observed_dofs is not None:
            object.__setattr__(self, "observed_dofs",
                               tuple(int(d) for d in self.observed_dofs))

    def to_dict(self) -> dict:
        return {
            "horizon_days": self.horizon_days,
            "window_interval_days": self.window_interval_days,
            "window_duration_s": self.window_duration_s,
            "observed_dofs": (None if self.observed_dofs is None
                              else list(self.observed_dofs)),
            "snr_accel": self.snr_accel,
            "snr_force": self.snr_force,
            "degradation_rate_per_day": self.degradation_rate_per_day,
            "master_seed": int(self.master_seed),
            "integrator": self.integrator.to_dict(),
            "ukf": self.ukf.to_dict(),
            "gp": self.gp.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CampaignConfig":
        obs = doc.get("observed_dofs")
        return cls(
            horizon_days=doc.get("horizon_days", 2000.0),
            window_interval_days=doc.get("window_interval_days", 50.0),
            window_duration_s=doc.get("window_duration_s", 5.0),
            observed_dofs=None if obs is None else tuple(obs),
            snr_accel=doc.get("snr_accel", 50.0),
            snr_force=doc.get("snr_force", 20.0),
            degradation_rate_per_day=doc.get("degradation_rate_per_day", 0.5e-4),
            master_seed=int(doc.get("master_seed", 0)),
            integrator=IntegratorConfig.from_dict(doc.get("integrator", {})),
            ukf=UkfRunConfig.from_dict(doc.get("ukf", {})),
            gp=gpr.GpTrainConfig.from_dict(doc.get("gp", {})),
        )


# ---------------------------------------------------------------------------
# Snapshot
# ---------------------------------------------------------------------------


@dataclass
class TwinSnapshot:
    """Persisted twin state: config echo, estimate history, trained GPs."""

    system: dict
    config: dict
    schedule: dict | None = None
    version: int = SNAPSHOT_VERSION
    windows_processed: int = 0
    parameter_history: list = field(default_factory=list)
    rejected_windows: list = field(default_factory=list)
    gp_models: dict = field(default_factory=dict)
    gp_trained_upto: float | None = None

    @property
    def param_names(self) -> tuple:
        n = len(self.system["stiffnesses"])
        return tuple(f"k{i + 1}" for i in range(n))

    @property
    def history_times(self) -> np.ndarray:
        return np.array([rec["t_s"] for rec in self.parameter_history])

    @property
    def history_estimates(self) -> np.ndarray:
        return np.array([rec["estimate"] for rec in self.parameter_history])

    @property
    def history_stddevs(self) -> np.ndarray:
        return np.array([rec["stddev"] for rec in self.parameter_history])

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "system": self.system,
            "config": self.config,
            "schedule": self.schedule,
            "windows_processed": self.windows_processed,
            "parameter_history": self.parameter_history,
            "rejected_windows": self.rejected_windows,
            "gp_models": self.gp_models,
            "gp_trained_upto": self.gp_trained_upto,
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "TwinSnapshot":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        version = doc.get("version")
        if version != SNAPSHOT_VERSION:
            raise InvalidParameterError(f"unsupported snapshot version {version!r}")
        return cls(
            system=doc["system"],
            config=doc["config"],
            schedule=doc.get("schedule"),
            version=version,
            windows_processed=doc.get("windows_processed", 0),
            parameter_history=doc.get("parameter_history", []),
            rejected_windows=doc.get("rejected_windows", []),
            gp_models=doc.get("gp_models", {}),
            gp_trained_upto=doc.get("gp_trained_upto"),
        )


def new_snapshot(system: MdofSystem, cfg: CampaignConfig,
                 schedule: DegradationSchedule | None = None) -> TwinSnapshot:
    return TwinSnapshot(
        system=system.to_dict(),
        config=cfg.to_dict(),
        schedule=None if schedule is None else schedule.to_dict(),
    )


# ---------------------------------------------------------------------------
# Campaign generation
# ---------------------------------------------------------------------------


def campaign_times(cfg: CampaignConfig) -> np.ndarray:
    n = int(np.floor(cfg.horizon_days / cfg.window_interval_days + 1e-9))
    return np.arange(n + 1) * cfg.window_interval_days


def generate_window(system: MdofSystem, schedule: DegradationSchedule,
                    cfg: CampaignConfig, t_s: float, seed: int,
                    window_index: int = -1) -> MeasurementWindow:
    """Simulate one synthetic window at slow time t_s with the given seed."""
    observed = cfg.observed_dofs or tuple(range(1, system.n_dof + 1))
    rng = np.random.default_rng(seed)
    k_t = degraded_stiffness(schedule, t_s)
    system_t = replace(system, stiffnesses=k_t)
    model = to_state_space(system_t)

    dt = cfg.integrator.dt
    n_steps = int(round(cfg.window_duration_s / dt))
    times = np.arange(n_steps + 1) * dt
    force_clean = system_t.force_at(times)
    force_noise_std = noise_std_for_snr(force_clean, cfg.snr_force)
    force_noisy = corrupt_with_snr(force_clean, cfg.snr_force, rng)

    y0 = np.zeros(model.dim_state)  # at rest at the start of every visit
    traj = simulate_window(model, system_t, y0, cfg.window_duration_s,
                           cfg.integrator, forces=force_noisy, rng=rng)
    obs0 = [d - 1 for d in observed]
    accel_clean = traj.accelerations[:, obs0]
    accel_noise_std = noise_std_for_snr(accel_clean, cfg.snr_accel)
    accel_noisy = corrupt_with_snr(accel_clean, cfg.snr_accel, rng)

    return MeasurementWindow(
        t_s=float(t_s),
        times=times,
        accel=accel_noisy,
        force=force_noisy,
        observed_dofs=observed,
        accel_noise_std=accel_noise_std,
        force_noise_std=force_noise_std,
        provenance={"kind": "synthetic", "seed": int(seed),
                    "window_index": int(window_index)},
    )


def generate_campaign(system: MdofSystem, schedule: DegradationSchedule,
                      cfg: CampaignConfig) -> list:
    """Synthesize the full window sequence on the slow-time grid.

    Window i is seeded with ``master_seed + i``, so any window can be
    regenerated independently.
    """
    windows = []
    for i, t_s in enumerate(campaign_times(cfg)):
        try:
            windows.append(generate_window(
                system, schedule, cfg, t_s, cfg.master_seed + i, i))
        except (InvalidParameterError, NumericError) as exc:
            raise type(exc)(f"window {i} (t_s={t_s}): {exc}") from exc
    return windows


# ---------------------------------------------------------------------------
# Assimilation
# ---------------------------------------------------------------------------


def _initial_belief(system: MdofSystem, model, prior_estimate,
                    ukf_cfg: UkfRunConfig) -> GaussianBelief:
    n = system.n_dof
    k_nom = system.stiffnesses
    frozen = set(system.frozen_indices)
    warm = prior_estimate is not None
    if warm:
        k_guess = np.asarray(prior_estimate, dtype=float)
    else:
        k_guess = ukf_cfg.init_offset_factor * k_nom
        for i in frozen:
            k_guess[i - 1] = k_nom[i - 1]
    mean = np.zeros(model.dim_state)
    mean[2 * n:] = k_guess

    # warm windows trust the carried-over estimate: the true drift between
    # visits is far smaller than the cold-start offset
    loose = ukf_cfg.warm_param_std_factor if warm else ukf_cfg.init_param_std_factor
    var = np.full(model.dim_state, ukf_cfg.init_state_variance)
    for slot, idx in zip(model.param_indices, model.augmented_params):
        factor = ukf_cfg.frozen_param_std_factor if idx in frozen else loose
        var[slot] = (factor * k_nom[idx - 1]) ** 2
    return GaussianBelief(mean=mean, cov=np.diag(var))


def _measurement_noise(window: MeasurementWindow,
                       ukf_cfg: UkfRunConfig) -> np.ndarray:
    if ukf_cfg.measurement_noise_std is not None:
        std = np.asarray(ukf_cfg.measurement_noise_std, dtype=float)
    elif window.accel_noise_std is not None:
        std = np.asarray(window.accel_noise_std, dtype=float)
    else:
        raise InvalidParameterError(
            "no measurement noise level: window carries none and the config "
            "does not override")
    if std.shape != (len(window.observed_dofs),):
        raise InvalidParameterError("measurement noise std must be per observed DOF")
    return np.diag(std ** 2)


def filter_window(system: MdofSystem, cfg: CampaignConfig,
                  window: MeasurementWindow, prior_estimate=None):
    """Joint UKF run over one window against the nominal system.

    All stiffness entries are augmented into the state (frozen ones get the
    tight prior). ``prior_estimate`` warm-starts the stiffness mean;
    otherwise the configured offset from nominal applies. Returns the
    FilterResult with the full belief trajectory.
    """
    model = to_state_space(system, augment_params=range(1, system.n_dof + 1))
    init = _initial_belief(system, model, prior_estimate, cfg.ukf)
    dt = float(window.times[1] - window.times[0])
    noise = NoiseModel(
        q=build_process_noise(model, dt, scale_factors=cfg.ukf.q_scale,
                              extra_diag=cfg.ukf.q_extra_diag),
        r=_measurement_noise(window, cfg.ukf),
    )
    return run_filter(model, system, window, init, noise, cfg.ukf.params)


def assimilate_window(snapshot: TwinSnapshot,
                      window: MeasurementWindow) -> TwinSnapshot:
    """Run the joint filter on one window and fold the result into the twin.

    Out-of-order windows and filter failures are recorded under
    ``rejected_windows`` without disturbing the accepted history. GP models
    are retrained after each accepted window once three points exist.
    """
    history = snapshot.parameter_history
    if history and window.t_s <= history[-1]["t_s"]:
        snapshot.rejected_windows.append(
            {"t_s": float(window.t_s), "reason": "out-of-order window"})
        logger.warning("rejected out-of-order window at t_s=%s", window.t_s)
        return snapshot

    system = MdofSystem.from_dict(snapshot.system)
    cfg = CampaignConfig.from_dict(snapshot.config)
    prior = history[-1]["estimate"] if history else None
    try:
        result = filter_window(system, cfg, window, prior_estimate=prior)
    except NumericError as exc:
        snapshot.rejected_windows.append(
            {"t_s": float(window.t_s), "reason": f"filter failure: {exc}"})
        logger.warning("rejected window at t_s=%s: %s", window.t_s, exc)
        return snapshot

    history.append({
        "t_s": float(window.t_s),
        "estimate": [float(v) for v in result.param_estimate],
        "stddev": [float(v) for v in result.param_std],
        "psd_repairs": int(result.psd_repairs.count),
        "n_updates": int(result.n_updates),
    })
    snapshot.windows_processed += 1

    if len(history) >= 3:
        _retrain_gps(snapshot, system, cfg)
    return snapshot


def _retrain_gps(snapshot: TwinSnapshot, system: MdofSystem,
                 cfg: CampaignConfig) -> None:
    times = snapshot.history_times
    estimates = snapshot.history_estimates
    stddevs = snapshot.history_stddevs
    frozen = set(system.frozen_indices)
    tracked = [i for i in range(1, system.n_dof + 1) if i not in frozen]
    columns = [i - 1 for i in tracked]
    models = gpr.track_parameters(
        times, estimates[:, columns], stddevs[:, columns], cfg.gp)
    snapshot.gp_models = {
        f"k{idx}": model.to_dict() for idx, model in zip(tracked, models)}
    snapshot.gp_trained_upto = float(times[-1])


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------


def predict_parameters(snapshot: TwinSnapshot, future_ts) -> dict:
    """GP mean and 95% band per tracked stiffness at the queried slow times."""
    if not snapshot.gp_models:
        raise InvalidParameterError("snapshot has no trained GP models yet")
    out = {}
    for name in sorted(snapshot.gp_models):
        model = gpr.GpModel.from_dict(snapshot.gp_models[name])
        out[name] = gpr.predict(model, future_ts)
    return out


def predicted_stiffness_vector(snapshot: TwinSnapshot, t_tilde: float) -> np.ndarray:
    """Full stiffness vector at t_tilde: GP means plus nominal frozen entries."""
    system = MdofSystem.from_dict(snapshot.system)
    k = system.stiffnesses.copy()
    predictions = predict_parameters(snapshot, [float(t_tilde)])
    for name, pred in predictions.items():
        idx = int(name[1:]) - 1
        k[idx] = pred.mean[0]
    if np.any(k <= 0.0):
        raise NumericError(f"predicted stiffness not positive at t_s={t_tilde}")
    return k


def predict_response(snapshot: TwinSnapshot, t_tilde: float, duration: float,
                     seed: int, y0=None) -> Trajectory:
    """High-fidelity forward simulation at the GP-mean stiffness."""
    system = MdofSystem.from_dict(snapshot.system)
    cfg = CampaignConfig.from_dict(snapshot.config)
    k_pred = predicted_stiffness_vector(snapshot, t_tilde)
    system_pred = replace(system, stiffnesses=k_pred)
    model = to_state_space(system_pred)
    integrator = replace(cfg.integrator, seed=int(seed))
    start = np.zeros(model.dim_state) if y0 is None else np.asarray(y0, dtype=float)
    return simulate_window(model, system_pred, start, duration, integrator)


@dataclass
class ResponseEnsemble:
    """Per-time state quantiles over stiffness draws from the GP band."""

    times: np.ndarray
    levels: tuple
    quantiles: np.ndarray  # (n_levels, n_samples, dim_state)
    stiffness_draws: np.ndarray

    @property
    def spread(self) -> np.ndarray:
        """Quantile envelope width per time sample and state entry."""
        return self.quantiles[-1] - self.quantiles[0]


def predict_response_ensemble(
    snapshot: TwinSnapshot, t_tilde: float, duration: float, seed: int,
    n_draws: int = 100, levels: tuple = (0.05, 0.5, 0.95), y0=None,
) -> ResponseEnsemble:
    """Propagate GP parameter uncertainty through the high-fidelity model.

    Draw j simulates with seed ``seed + 1 + j``; the parameter draws use
    ``seed`` itself.
    """
    if n_draws < 2:
        raise InvalidParameterError("n_draws must be at least 2")
    system = MdofSystem.from_dict(snapshot.system)
    cfg = CampaignConfig.from_dict(snapshot.config)
    predictions = predict_parameters(snapshot, [float(t_tilde)])
    k_base = system.stiffnesses.copy()
    rng = np.random.default_rng(seed)

    draws = np.tile(k_base, (n_draws, 1))
    for name, pred in predictions.items():
        idx = int(name[1:]) - 1
        samples = rng.normal(pred.mean[0], pred.stddev[0], size=n_draws)
        draws[:, idx] = np.clip(samples, 1e-6 * k_base[idx], None)

    trajectories = []
    for j in range(n_draws):
        system_j = replace(system, stiffnesses=draws[j])
        model = to_state_space(system_j)
        integrator = replace(cfg.integrator, seed=int(seed) + 1 + j)
        start = np.zeros(model.dim_state) if y0 is None else np.asarray(y0, float)
        traj = simulate_window(model, system_j, start, duration, integrator)
        trajectories.append(traj.states)
    stacked = np.stack(trajectories)  # (n_draws, n_samples, dim)
    qs = np.quantile(stacked, levels, axis=0)
    times = np.arange(stacked.shape[1]) * cfg.integrator.dt
    return ResponseEnsemble(times=times, levels=tuple(levels), quantiles=qs,
                            stiffness_draws=draws)


# ---------------------------------------------------------------------------
# Campaign-level exports
# ---------------------------------------------------------------------------


def write_estimates_csv(snapshot: TwinSnapshot, path) -> None:
    names = snapshot.param_names
    header = ["t_s"]
    for name in names:
        header += [name, f"sd_{name}"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for rec in snapshot.parameter_history:
            row = [repr(float(rec["t_s"]))]
            for est, std in zip(rec["estimate"], rec["stddev"]):
                row += [repr(float(est)), repr(float(std))]
            writer.writerow(row)


def write_gp_track_csv(snapshot: TwinSnapshot, path, query_times) -> None:
    """Dense GP track with confidence bands at the queried slow times."""
    predictions = predict_parameters(snapshot, np.asarray(query_times, dtype=float))
    names = sorted(predictions)
    header = ["t_s"]
    for name in names:
        header += [f"{name}_mean", f"{name}_sd", f"{name}_lo95", f"{name}_hi95"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        query_times = np.asarray(query_times, dtype=float)
        for i, t in enumerate(query_times):
            row = [repr(float(t))]
            for name in names:
                pred = predictions[name]
                lo, hi = pred.confidence_band
                row += [repr(float(pred.mean[i])), repr(float(pred.stddev[i])),
                        repr(float(lo[i])), repr(float(hi[i]))]
            writer.writerow(row)
