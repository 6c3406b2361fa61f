"""Gaussian-process regression over the slow (service-time) scale.

One scalar GP per tracked stiffness parameter, trained by minimizing the
negative log marginal likelihood

    0.5 v^T (K + sn^2 I)^-1 v + 0.5 log|K + sn^2 I| + (n/2) log 2 pi

over (log lengthscale, log variance, log noise variance) with analytic
gradients, L-BFGS-B and Latin-hypercube multi-starts. A constant mean is
profiled out by generalized least squares; its uncertainty enters the
predictive variance through the universal-kriging correction term

    s^2 = sigma^2 - k*^T Kt^-1 k* + (1 - Phi^T Kt^-1 k*)^2 / (Phi^T Kt^-1 Phi)

with Kt = K + sn^2 I. Inputs (days) and targets (N/m) are standardized
internally and the transforms undone at prediction time.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize

from .errors import InvalidParameterError, TrainingError

logger = logging.getLogger(__name__)

FAMILY_SE = "squared-exponential"
FAMILY_MATERN52 = "matern-5/2"
_FAMILIES = (FAMILY_SE, FAMILY_MATERN52)

_GRAM_JITTER = 1e-10
_CONFIDENCE_FACTOR = 1.959963984540054  # two-sided 95% normal quantile


@dataclass(frozen=True)
class Kernel:
    """Stationary covariance function on the 1-D slow-time axis."""

    family: str = FAMILY_SE
    variance: float = 1.0
    lengthscale: float = 1.0

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise InvalidParameterError(f"unknown kernel family {self.family!r}")
        if self.variance <= 0.0 or self.lengthscale <= 0.0:
            raise InvalidParameterError("variance and lengthscale must be positive")

    def cross(self, a, b) -> np.ndarray:
        return _kernel_matrix(self.family, self.variance, self.lengthscale,
                              np.asarray(a, dtype=float), np.asarray(b, dtype=float))

    def gram(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.cross(x, x)


def _kernel_matrix(family, variance, lengthscale, a, b):
    r = np.abs(np.subtract.outer(a, b))
    if family == FAMILY_SE:
        return variance * np.exp(-0.5 * (r / lengthscale) ** 2)
    u = math.sqrt(5.0) * r / lengthscale
    return variance * (1.0 + u + u * u / 3.0) * np.exp(-u)


def _kernel_grads(family, variance, lengthscale, x):
    """Gram matrix plus derivatives w.r.t. log lengthscale and log variance."""
    r = np.abs(np.subtract.outer(x, x))
    if family == FAMILY_SE:
        s = (r / lengthscale) ** 2
        k = variance * np.exp(-0.5 * s)
        dk_dlogl = k * s
    else:
        u = math.sqrt(5.0) * r / lengthscale
        e = np.exp(-u)
        k = variance * (1.0 + u + u * u / 3.0) * e
        dk_dlogl = variance * (u * u / 3.0) * (1.0 + u) * e
    return k, dk_dlogl, k.copy()  # dK/dlog(variance) = K


@dataclass(frozen=True)
class GpTrainConfig:
    """Hyperparameter search settings (Latin-hypercube multi-start L-BFGS)."""

    kernel_family: str = FAMILY_SE
    mean_spec: str = "constant"  # or "zero"
    n_restarts: int = 5
    n_max: int = 500
    eps_tol: float = 1e-6
    seed: int = 0
    standardize: bool = True
    use_stddev_floor: bool = False
    lengthscale_range: tuple = (1e-2, 1e2)
    variance_range: tuple = (1e-2, 1e2)
    noise_range: tuple = (1e-8, 1.0)

    def __post_init__(self):
        if self.kernel_family not in _FAMILIES:
            raise InvalidParameterError(f"unknown kernel family {self.kernel_family!r}")
        if self.mean_spec not in ("zero", "constant"):
            raise InvalidParameterError("mean_spec must be 'zero' or 'constant'")
        if self.n_restarts < 1 or self.n_max < 1:
            raise InvalidParameterError("n_restarts and n_max must be positive")

    def to_dict(self) -> dict:
        return {
            "kernel_family": self.kernel_family,
            "mean_spec": self.mean_spec,
            "n_restarts": self.n_restarts,
            "n_max": self.n_max,
            "eps_tol": self.eps_tol,
            "seed": int(self.seed),
            "standardize": self.standardize,
            "use_stddev_floor": self.use_stddev_floor,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GpTrainConfig":
        known = set(cls.__dataclass_fields__)
        clean = {}
        for key, value in doc.items():
            if key in known:
                clean[key] = tuple(value) if key.endswith("_range") else value
        return cls(**clean)


@dataclass
class GpPrediction:
    """Predictive mean/variance of the latent function, raw units."""

    inputs: np.ndarray
    mean: np.ndarray
    variance: np.ndarray

    @property
    def stddev(self) -> np.ndarray:
        return np.sqrt(self.variance)

    @property
    def confidence_band(self) -> tuple:
        half = _CONFIDENCE_FACTOR * self.stddev
        return self.mean - half, self.mean + half


@dataclass
class GpModel:
    """Trained GP: hyperparameters, data, transforms, cached factorization.

    ``noise_floor`` holds optional fixed per-point noise variances in raw
    target units (e.g. squared filter stddevs). The cached Cholesky factor
    lives in standardized coordinates and is rebuilt on deserialization.
    """

    kernel: Kernel
    mean_spec: str
    noise_variance: float
    train_inputs: np.ndarray
    train_targets: np.ndarray
    input_shift: float = 0.0
    input_scale: float = 1.0
    target_shift: float = 0.0
    target_scale: float = 1.0
    noise_floor: np.ndarray | None = None
    nlml: float = math.nan

    def __post_init__(self):
        self.train_inputs = np.asarray(self.train_inputs, dtype=float)
        self.train_targets = np.asarray(self.train_targets, dtype=float)
        if (self.train_inputs.ndim != 1
                or self.train_inputs.shape != self.train_targets.shape):
            raise InvalidParameterError("training inputs/targets must be matching vectors")
        if np.any(np.diff(self.train_inputs) <= 0.0):
            raise InvalidParameterError("training inputs must be strictly increasing")
        if self.noise_variance < 0.0:
            raise InvalidParameterError("noise variance must be non-negative")
        if self.noise_floor is not None:
            self.noise_floor = np.asarray(self.noise_floor, dtype=float)
            if self.noise_floor.shape != self.train_inputs.shape:
                raise InvalidParameterError("noise_floor must match the training grid")
        self._refactorize()

    # ---- cached standardized quantities -------------------------------------

    def _std_inputs(self, tau) -> np.ndarray:
        return (np.asarray(tau, dtype=float) - self.input_shift) / self.input_scale

    def _refactorize(self) -> None:
        x = self._std_inputs(self.train_inputs)
        v = (self.train_targets - self.target_shift) / self.target_scale
        n = x.shape[0]
        kt = self.kernel.gram(x)
        kt[np.diag_indices(n)] += self.noise_variance + _GRAM_JITTER
        if self.noise_floor is not None:
            kt[np.diag_indices(n)] += self.noise_floor / self.target_scale ** 2
        try:
            self._chol = cho_factor(kt, lower=True)
        except np.linalg.LinAlgError as exc:
            raise InvalidParameterError(f"kernel matrix not positive definite: {exc}")
        self._x_std = x
        if self.mean_spec == "constant":
            phi = np.ones(n)
            w = cho_solve(self._chol, phi)
            self._gls_denom = float(phi @ w)
            self.beta = float(w @ v) / self._gls_denom
            self._phi = phi
        else:
            self.beta = 0.0
            self._phi = None
            self._gls_denom = None
        self._alpha = cho_solve(self._chol, v - self.beta)

    # ---- raw-unit views of the hyperparameters -------------------------------

    @property
    def raw_lengthscale(self) -> float:
        return self.kernel.lengthscale * self.input_scale

    @property
    def raw_variance(self) -> float:
        return self.kernel.variance * self.target_scale ** 2

    @property
    def raw_noise_variance(self) -> float:
        return self.noise_variance * self.target_scale ** 2

    # ---- serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        doc = {
            "kernel": {
                "family": self.kernel.family,
                "variance": float(self.kernel.variance),
                "lengthscale": float(self.kernel.lengthscale),
            },
            "mean_spec": self.mean_spec,
            "beta": float(self.beta),
            "noise_variance": float(self.noise_variance),
            "train_inputs": [float(v) for v in self.train_inputs],
            "train_targets": [float(v) for v in self.train_targets],
            "input_shift": float(self.input_shift),
            "input_scale": float(self.input_scale),
            "target_shift": float(self.target_shift),
            "target_scale": float(self.target_scale),
            "nlml": float(self.nlml),
        }
        if self.noise_floor is not None:
            doc["noise_floor"] = [float(v) for v in self.noise_floor]
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "GpModel":
        kern = doc["kernel"]
        floor = doc.get("noise_floor")
        return cls(
            kernel=Kernel(family=kern["family"], variance=kern["variance"],
                          lengthscale=kern["lengthscale"]),
            mean_spec=doc["mean_spec"],
            noise_variance=doc["noise_variance"],
            train_inputs=doc["train_inputs"],
            train_targets=doc["train_targets"],
            input_shift=doc.get("input_shift", 0.0),
            input_scale=doc.get("input_scale", 1.0),
            target_shift=doc.get("target_shift", 0.0),
            target_scale=doc.get("target_scale", 1.0),
            noise_floor=floor,
            nlml=doc.get("nlml", math.nan),
        )


# ---------------------------------------------------------------------------
# Likelihood and training
# ---------------------------------------------------------------------------


def negative_log_marginal_likelihood(
    log_theta: np.ndarray,
    x: np.ndarray,
    v: np.ndarray,
    family: str,
    mean_spec: str,
    floor: np.ndarray | None = None,
):
    """NLML and its gradient w.r.t. (log l, log s2, log sn2).

    A constant mean is profiled out by GLS; by the envelope theorem the
    gradient formula with the profiled residual is exact.
    """
    lengthscale, variance, noise = np.exp(log_theta)
    n = x.shape[0]
    k, dk_dlogl, dk_dlogv = _kernel_grads(family, variance, lengthscale, x)
    kt = k.copy()
    kt[np.diag_indices(n)] += noise + _GRAM_JITTER
    if floor is not None:
        kt[np.diag_indices(n)] += floor
    chol = cho_factor(kt, lower=True)

    if mean_spec == "constant":
        phi = np.ones(n)
        w = cho_solve(chol, phi)
        beta = float(w @ v) / float(phi @ w)
        e = v - beta
    else:
        e = v
    alpha = cho_solve(chol, e)
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol[0]))))
    value = 0.5 * float(e @ alpha) + 0.5 * logdet + 0.5 * n * math.log(2.0 * math.pi)

    kt_inv = cho_solve(chol, np.eye(n))
    grad = np.empty(3)
    for i, dk in enumerate((dk_dlogl, dk_dlogv, noise * np.eye(n))):
        grad[i] = 0.5 * (float(np.sum(kt_inv * dk)) - float(alpha @ dk @ alpha))
    return value, grad


def _latin_hypercube(rng: np.random.Generator, n_points: int, log_ranges) -> np.ndarray:
    dims = len(log_ranges)
    samples = np.empty((n_points, dims))
    for d, (lo, hi) in enumerate(log_ranges):
        cells = (rng.permutation(n_points) + rng.uniform(size=n_points)) / n_points
        samples[:, d] = lo + cells * (hi - lo)
    return samples


def train(tau, v, config: GpTrainConfig = GpTrainConfig(),
          noise_floor=None) -> GpModel:
    """Fit hyperparameters by multi-start MLE and return the trained model.

    Requires at least 3 strictly increasing training pairs. ``noise_floor``
    gives fixed per-point noise variances in raw target units. Raises
    TrainingError (carrying the best parameters found) if every restart
    fails to produce a usable likelihood.
    """
    tau = np.asarray(tau, dtype=float)
    v = np.asarray(v, dtype=float)
    if tau.ndim != 1 or tau.shape != v.shape:
        raise InvalidParameterError("tau and v must be matching vectors")
    if tau.shape[0] < 3:
        raise InvalidParameterError("need at least 3 training pairs")
    if np.any(np.diff(tau) <= 0.0):
        raise InvalidParameterError("training inputs must be strictly increasing")

    if config.standardize:
        input_shift = float(np.mean(tau))
        input_scale = float(np.std(tau))
        if input_scale <= 0.0:
            raise InvalidParameterError("degenerate training inputs")
        target_shift = float(np.mean(v))
        spread = float(np.std(v))
        target_scale = spread if spread > 0.0 else 1.0
    else:
        input_shift, input_scale = 0.0, 1.0
        target_shift, target_scale = 0.0, 1.0
    x_std = (tau - input_shift) / input_scale
    v_std = (v - target_shift) / target_scale
    floor_std = None
    if noise_floor is not None:
        floor_std = np.asarray(noise_floor, dtype=float) / target_scale ** 2
        if floor_std.shape != tau.shape or np.any(floor_std < 0.0):
            raise InvalidParameterError("noise_floor must be non-negative per point")

    log_ranges = [
        (math.log(config.lengthscale_range[0]), math.log(config.lengthscale_range[1])),
        (math.log(config.variance_range[0]), math.log(config.variance_range[1])),
        (math.log(config.noise_range[0]), math.log(config.noise_range[1])),
    ]
    rng = np.random.default_rng(config.seed)
    starts = [np.array([0.0, 0.0, math.log(1e-2)])]  # unit-scale heuristic
    starts.extend(_latin_hypercube(rng, config.n_restarts, log_ranges))
    bounds = [(-16.0, 16.0), (-16.0, 16.0), (math.log(1e-12), math.log(1e2))]

    _PENALTY = 1e25

    def objective(log_theta):
        # a singular kernel matrix marks an infeasible region, not a fatal
        # error; a flat penalty makes the line search back off
        try:
            return negative_log_marginal_likelihood(
                log_theta, x_std, v_std, config.kernel_family,
                config.mean_spec, floor_std)
        except np.linalg.LinAlgError:
            return _PENALTY, np.zeros(3)

    best_value = math.inf
    best_theta = None
    for x0 in starts:
        state = {"prev": np.asarray(x0, dtype=float)}

        def callback(xk, state=state):
            eps = float(np.sum((xk - state["prev"]) ** 2))
            state["prev"] = np.array(xk, copy=True)
            if eps <= config.eps_tol:
                raise StopIteration

        try:
            result = minimize(
                objective, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                callback=callback, options={"maxiter": config.n_max})
            candidate, value = result.x, float(result.fun)
        except StopIteration:
            candidate = state["prev"]
            value = float(objective(candidate)[0])
        except np.linalg.LinAlgError:
            continue
        if math.isfinite(value) and value < min(best_value, _PENALTY):
            best_value = value
            best_theta = np.array(candidate, copy=True)

    if best_theta is None:
        raise TrainingError("all hyperparameter restarts failed", best_theta=None)

    lengthscale, variance, noise = np.exp(best_theta)
    return GpModel(
        kernel=Kernel(family=config.kernel_family, variance=float(variance),
                      lengthscale=float(lengthscale)),
        mean_spec=config.mean_spec,
        noise_variance=float(noise),
        train_inputs=tau,
        train_targets=v,
        input_shift=input_shift,
        input_scale=input_scale,
        target_shift=target_shift,
        target_scale=target_scale,
        noise_floor=None if noise_floor is None else np.asarray(noise_floor, float),
        nlml=float(best_value),
    )


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------


def predict(model: GpModel, query) -> GpPrediction:
    """Predictive mean and latent-function variance at the query inputs."""
    query = np.atleast_1d(np.asarray(query, dtype=float))
    xq = model._std_inputs(query)
    k_star = model.kernel.cross(model._x_std, xq)  # (n, m)
    mean_std = model.beta + k_star.T @ model._alpha
    w = cho_solve(model._chol, k_star)
    var_std = model.kernel.variance - np.einsum("nm,nm->m", k_star, w)
    if model.mean_spec == "constant":
        u = 1.0 - model._phi @ w
        var_std = var_std + u * u / model._gls_denom
    negative = var_std < 0.0
    if np.any(negative):
        worst = float(var_std.min())
        if worst < -1e-8 * model.kernel.variance:
            logger.warning("clipped negative predictive variance %.3e", worst)
        var_std = np.clip(var_std, 0.0, None)
    mean = mean_std * model.target_scale + model.target_shift
    variance = var_std * model.target_scale ** 2
    return GpPrediction(inputs=query, mean=mean, variance=variance)


def track_parameters(
    times,
    values,
    stddevs=None,
    config: GpTrainConfig = GpTrainConfig(),
) -> list:
    """Train one independent GP per parameter column.

    ``values`` is (n_windows, n_params); ``stddevs`` of the same shape
    optionally provides per-window filter stddevs folded into fixed noise
    floors when ``config.use_stddev_floor`` is set.
    """
    times = np.asarray(times, dtype=float)
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if values.shape[0] != times.shape[0]:
        raise InvalidParameterError("values must have one row per window")
    if times.shape[0] < 3:
        raise InvalidParameterError("need at least 3 windows to train")
    floors = None
    if stddevs is not None and config.use_stddev_floor:
        stddevs = np.atleast_2d(np.asarray(stddevs, dtype=float))
        if stddevs.shape != values.shape:
            raise InvalidParameterError("stddevs must match values")
        floors = stddevs ** 2

    models = []
    for j in range(values.shape[1]):
        try:
            models.append(train(
                times, values[:, j], config,
                noise_floor=None if floors is None else floors[:, j]))
        except (InvalidParameterError, TrainingError) as exc:
            raise type(exc)(f"parameter column {j}: {exc}") from exc
    return models
