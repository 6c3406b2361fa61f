"""Chain-topology stochastic nonlinear N-DOF systems and their state-space form.

Conventions used throughout:

* DOF numbers, stiffness parameter indices and observed-DOF sets are 1-based
  in the public API (``k1`` is the ground spring); array internals are 0-based.
* The second-order model is ``M x'' + C x' + K x + G(x) = F(t) + Sigma W'``
  with diagonal ``M`` and ``Sigma``, chain-assembled ``C`` and ``K``, and a
  cubic coupling nonlinearity ``G`` whose shape depends on the system kind.
* First-order state vectors come in two orderings: ``blocked``
  ``[x1..xN, v1..vN]`` (2-DOF benchmark) and ``interleaved``
  ``[x1, v1, x2, v2, ...]`` (7-DOF benchmark). Augmented states append the
  estimated stiffness entries after the kinematic block in index order.
* Forces are per-DOF harmonics ``F_i(t) = amp_i * sin(freq_i * t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import InvalidParameterError

KIND_DUFFING_2DOF = "duffing_2dof"
KIND_DVP_7DOF = "dvp_7dof"
_KNOWN_KINDS = (KIND_DUFFING_2DOF, KIND_DVP_7DOF)

_BLOCKED = "blocked"
_INTERLEAVED = "interleaved"


def _as_vector(x, n: int, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.shape != (n,):
        raise InvalidParameterError(f"{name} must have shape ({n},), got {v.shape}")
    return v


def _chain_stiffness_patterns(n: int) -> np.ndarray:
    """Per-spring stiffness patterns P with K(k) = sum_j k_j P[j].

    Spring 1 ties DOF 1 to ground; spring j>=2 couples DOFs j-1 and j.
    """
    pat = np.zeros((n, n, n))
    pat[0, 0, 0] = 1.0
    for j in range(1, n):
        pat[j, j - 1, j - 1] += 1.0
        pat[j, j - 1, j] -= 1.0
        pat[j, j, j - 1] -= 1.0
        pat[j, j, j] += 1.0
    return pat


def _dvp_stiffness_patterns(n: int, symmetric_consistent: bool) -> np.ndarray:
    """7-DOF patterns; spring 4 carries the negative-stiffness DVP coupling.

    The sign-flipped k4 block reproduces the benchmark's linear part, where
    the element between DOFs 3 and 4 contributes -k4*(x3 - x4) paired with
    the hardening cubic. ``symmetric_consistent`` swaps it for a standard
    positive chain spring (robustness-study variant).
    """
    pat = _chain_stiffness_patterns(n)
    if not symmetric_consistent:
        pat[3, 2:4, 2:4] = -pat[3, 2:4, 2:4]
    return pat


@dataclass(frozen=True)
class MdofSystem:
    """Immutable description of one chain-topology benchmark system.

    Parameters
    ----------
    masses, stiffnesses, dampings : arrays (n_dof,)
        Per-DOF lumped mass (kg), spring constant (N/m) and damper (N s/m).
    force_amplitudes, force_frequencies : arrays (n_dof,)
        Harmonic force descriptors (N, rad/s).
    noise_sigmas : array (n_dof,)
        Diagonal stochastic-load intensities (N).
    nonlinear_coeff : float
        Cubic coefficient (N/m^3) of the attached oscillator.
    kind : str
        ``"duffing_2dof"`` or ``"dvp_7dof"``; fixes topology, nonlinearity
        and state ordering.
    frozen_indices : tuple of int
        1-based stiffness indices excluded from slow-time degradation.
    """

    masses: np.ndarray
    stiffnesses: np.ndarray
    dampings: np.ndarray
    force_amplitudes: np.ndarray
    force_frequencies: np.ndarray
    noise_sigmas: np.ndarray
    nonlinear_coeff: float
    kind: str
    frozen_indices: tuple = ()
    symmetric_consistent: bool = False

    def __post_init__(self):
        if self.kind not in _KNOWN_KINDS:
            raise InvalidParameterError(f"unknown system kind {self.kind!r}")
        n = 2 if self.kind == KIND_DUFFING_2DOF else 7
        for name in ("masses", "stiffnesses", "dampings", "force_amplitudes",
                     "force_frequencies", "noise_sigmas"):
            object.__setattr__(self, name, _as_vector(getattr(self, name), n, name))
        if np.any(self.masses <= 0.0):
            raise InvalidParameterError("masses must be strictly positive")
        if np.any(self.stiffnesses <= 0.0):
            raise InvalidParameterError("stiffnesses must be strictly positive")
        if np.any(self.dampings < 0.0) or np.any(self.noise_sigmas < 0.0):
            raise InvalidParameterError("dampings and noise_sigmas must be non-negative")
        object.__setattr__(self, "nonlinear_coeff", float(self.nonlinear_coeff))
        frozen = tuple(sorted(int(i) for i in self.frozen_indices))
        if any(i < 1 or i > n for i in frozen):
            raise InvalidParameterError("frozen_indices must lie in 1..n_dof")
        object.__setattr__(self, "frozen_indices", frozen)

    # ---- assembled matrices -------------------------------------------------

    @property
    def n_dof(self) -> int:
        return self.masses.shape[0]

    @property
    def state_ordering(self) -> str:
        return _BLOCKED if self.kind == KIND_DUFFING_2DOF else _INTERLEAVED

    @property
    def mass(self) -> np.ndarray:
        """Diagonal mass matrix."""
        return np.diag(self.masses)

    @property
    def noise_intensity(self) -> np.ndarray:
        """Diagonal stochastic-load intensity matrix Sigma."""
        return np.diag(self.noise_sigmas)

    @property
    def stiffness_patterns(self) -> np.ndarray:
        """(n, n, n) array P with K(k) = sum_j k_j P[j]."""
        if self.kind == KIND_DUFFING_2DOF:
            return _chain_stiffness_patterns(self.n_dof)
        return _dvp_stiffness_patterns(self.n_dof, self.symmetric_consistent)

    def stiffness_matrix(self, k: np.ndarray | None = None) -> np.ndarray:
        k = self.stiffnesses if k is None else np.asarray(k, dtype=float)
        return np.einsum("j,jri->ri", k, self.stiffness_patterns)

    @property
    def stiffness_linear(self) -> np.ndarray:
        """Assembled linear stiffness matrix at the stored coefficients."""
        return self.stiffness_matrix()

    @property
    def damping(self) -> np.ndarray:
        """Assembled damping matrix (standard chain for both kinds)."""
        return np.einsum(
            "j,jri->ri", self.dampings, _chain_stiffness_patterns(self.n_dof)
        )

    # ---- forces -------------------------------------------------------------

    def force_at(self, t) -> np.ndarray:
        """Deterministic harmonic force; t scalar or (m,) -> (n,) or (m, n)."""
        t = np.asarray(t, dtype=float)
        return self.force_amplitudes * np.sin(np.multiply.outer(t, self.force_frequencies))

    def restoring_force(self, x: np.ndarray, k: np.ndarray | None = None) -> np.ndarray:
        """Linear restoring force K(k) x, batched over leading axes of x and k."""
        x = np.asarray(x, dtype=float)
        k = self.stiffnesses if k is None else np.asarray(k, dtype=float)
        return np.einsum("...j,jri,...i->...r", k, self.stiffness_patterns, x)

    # ---- nonlinearity -------------------------------------------------------

    def nonlinear_term(self, x: np.ndarray) -> np.ndarray:
        """Cubic coupling force G(x); batched over leading axes."""
        x = np.asarray(x, dtype=float)
        g = np.zeros_like(x)
        a = self.nonlinear_coeff
        if self.kind == KIND_DUFFING_2DOF:
            g[..., 0] = a * x[..., 0] ** 3
        else:
            d = a * (x[..., 2] - x[..., 3]) ** 3
            g[..., 2] = d
            g[..., 3] = -d
        return g

    def nonlinear_jacobian(self, x: np.ndarray) -> np.ndarray:
        """dG/dx at a single displacement vector, (n, n)."""
        x = np.asarray(x, dtype=float)
        n = self.n_dof
        jac = np.zeros((n, n))
        a = self.nonlinear_coeff
        if self.kind == KIND_DUFFING_2DOF:
            jac[0, 0] = 3.0 * a * x[0] ** 2
        else:
            s = 3.0 * a * (x[2] - x[3]) ** 2
            jac[2, 2] = s
            jac[2, 3] = -s
            jac[3, 2] = -s
            jac[3, 3] = s
        return jac

    def nonlinear_hessian(self, x: np.ndarray) -> np.ndarray:
        """d2G/dx2 at a single displacement vector, (n, n, n)."""
        x = np.asarray(x, dtype=float)
        n = self.n_dof
        hess = np.zeros((n, n, n))
        a = self.nonlinear_coeff
        if self.kind == KIND_DUFFING_2DOF:
            hess[0, 0, 0] = 6.0 * a * x[0]
        else:
            t = 6.0 * a * (x[2] - x[3])
            block = np.array([[t, -t], [-t, t]])
            hess[2, 2:4, 2:4] = block
            hess[3, 2:4, 2:4] = -block
        return hess

    # ---- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "masses": [float(v) for v in self.masses],
            "stiffnesses": [float(v) for v in self.stiffnesses],
            "dampings": [float(v) for v in self.dampings],
            "force_amplitudes": [float(v) for v in self.force_amplitudes],
            "force_frequencies": [float(v) for v in self.force_frequencies],
            "noise_sigmas": [float(v) for v in self.noise_sigmas],
            "nonlinear_coefficient": float(self.nonlinear_coeff),
            "frozen_indices": list(self.frozen_indices),
            "symmetric_consistent": bool(self.symmetric_consistent),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MdofSystem":
        try:
            return cls(
                masses=doc["masses"],
                stiffnesses=doc["stiffnesses"],
                dampings=doc["dampings"],
                force_amplitudes=doc["force_amplitudes"],
                force_frequencies=doc["force_frequencies"],
                noise_sigmas=doc["noise_sigmas"],
                nonlinear_coeff=doc["nonlinear_coefficient"],
                kind=doc["kind"],
                frozen_indices=tuple(doc.get("frozen_indices", ())),
                symmetric_consistent=bool(doc.get("symmetric_consistent", False)),
            )
        except KeyError as exc:
            raise InvalidParameterError(f"system document missing key {exc}") from exc


def build_duffing_2dof(
    *,
    masses: Sequence[float] = (20.0, 10.0),
    stiffnesses: Sequence[float] = (1000.0, 500.0),
    dampings: Sequence[float] = (10.0, 5.0),
    force_amplitudes: Sequence[float] = (10.0, 10.0),
    force_frequencies: Sequence[float] = (10.0, 10.0),
    noise_sigmas: Sequence[float] = (0.1, 0.1),
    nonlinear_coeff: float = 100.0,
) -> MdofSystem:
    """Two-mass chain with a hardening cubic spring at DOF 1.

    Defaults are the benchmark values (m = [20, 10] kg, k = [1000, 500] N/m,
    c = [10, 5] N s/m, harmonic forces 10 sin(10 t), sigma = 0.1).
    """
    return MdofSystem(
        masses=masses,
        stiffnesses=stiffnesses,
        dampings=dampings,
        force_amplitudes=force_amplitudes,
        force_frequencies=force_frequencies,
        noise_sigmas=noise_sigmas,
        nonlinear_coeff=nonlinear_coeff,
        kind=KIND_DUFFING_2DOF,
    )


def build_dvp_7dof(
    *,
    masses: Sequence[float] = (20.0, 20.0, 10.0, 10.0, 10.0, 10.0, 5.0),
    stiffnesses: Sequence[float] = (2000.0, 2000.0, 1000.0, 1000.0, 1000.0, 1000.0, 500.0),
    dampings: Sequence[float] = (20.0,) * 7,
    force_amplitudes: Sequence[float] = (10.0,) * 7,
    force_frequencies: Sequence[float] = (10.0,) * 7,
    noise_sigmas: Sequence[float] = (0.1,) * 7,
    nonlinear_coeff: float = 100.0,
    symmetric_consistent: bool = False,
) -> MdofSystem:
    """Seven-mass chain with a Duffing-van-der-Pol element between DOFs 3 and 4.

    The element combines a negative linear stiffness (the sign-flipped k4
    rows of the assembled matrix) with a hardening cubic in (x3 - x4), and
    drives multiplicative process noise on DOF 4. Spring 4 is excluded from
    degradation (``frozen_indices=(4,)``). ``symmetric_consistent=True``
    replaces the sign-flipped k4 block with a standard chain spring.
    """
    return MdofSystem(
        masses=masses,
        stiffnesses=stiffnesses,
        dampings=dampings,
        force_amplitudes=force_amplitudes,
        force_frequencies=force_frequencies,
        noise_sigmas=noise_sigmas,
        nonlinear_coeff=nonlinear_coeff,
        kind=KIND_DVP_7DOF,
        frozen_indices=(4,),
        symmetric_consistent=symmetric_consistent,
    )


# ---------------------------------------------------------------------------
# Degradation law
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DegradationSchedule:
    """Exponential slow-time stiffness decay k(t_s) = k0 * exp(-rate * t_s).

    ``rate_per_day`` applies per day of service time; entries listed in
    ``frozen_indices`` (1-based) stay at their nominal value.
    """

    k0: np.ndarray
    rate_per_day: float = 0.5e-4
    frozen_indices: tuple = ()

    def __post_init__(self):
        k0 = np.asarray(self.k0, dtype=float)
        if k0.ndim != 1 or np.any(k0 <= 0.0):
            raise InvalidParameterError("k0 must be a positive vector")
        object.__setattr__(self, "k0", k0)
        object.__setattr__(self, "rate_per_day", float(self.rate_per_day))
        frozen = tuple(sorted(int(i) for i in self.frozen_indices))
        if any(i < 1 or i > k0.shape[0] for i in frozen):
            raise InvalidParameterError("frozen_indices must lie in 1..len(k0)")
        object.__setattr__(self, "frozen_indices", frozen)

    def to_dict(self) -> dict:
        return {
            "k0": [float(v) for v in self.k0],
            "rate_per_day": self.rate_per_day,
            "frozen_indices": list(self.frozen_indices),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DegradationSchedule":
        return cls(
            k0=doc["k0"],
            rate_per_day=doc.get("rate_per_day", 0.5e-4),
            frozen_indices=tuple(doc.get("frozen_indices", ())),
        )

    @classmethod
    def for_system(cls, system: MdofSystem, rate_per_day: float = 0.5e-4) -> "DegradationSchedule":
        return cls(
            k0=system.stiffnesses,
            rate_per_day=rate_per_day,
            frozen_indices=system.frozen_indices,
        )


def degraded_stiffness(schedule: DegradationSchedule, t_s: float) -> np.ndarray:
    """Stiffness vector after t_s days of service.

    Raises InvalidParameterError for negative t_s.
    """
    t_s = float(t_s)
    if t_s < 0.0:
        raise InvalidParameterError("service time t_s must be non-negative")
    delta = math.exp(-schedule.rate_per_day * t_s)
    k = schedule.k0 * delta
    for i in schedule.frozen_indices:
        k[i - 1] = schedule.k0[i - 1]
    return k


# ---------------------------------------------------------------------------
# First-order state-space form
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StateSpaceModel:
    """Ito diffusion dy = a(y, f) dt + b(y) dW for simulation and filtering.

    ``drift`` and ``dispersion`` accept a single state ``(dim,)`` or a batch
    ``(m, dim)``; ``drift`` additionally takes the force sample ``(n_dof,)``.
    The analytic partial-derivative callables operate on a single state and
    feed the strong Taylor-1.5 scheme; ``dispersion_jacobian`` is None for
    additive-noise systems, which makes the L(b) correction terms vanish.
    Augmented models carry the estimated stiffness entries at
    ``param_indices`` with zero drift and zero dispersion rows.
    """

    dim_state: int
    n_channels: int
    labels: tuple
    augmented_params: tuple
    param_indices: tuple
    drift: Callable
    dispersion: Callable
    drift_jacobian: Callable | None = None
    drift_hessian_quad: Callable | None = None
    dispersion_jacobian: Callable | None = None


def _index_maps(n_dof: int, ordering: str):
    if ordering == _BLOCKED:
        disp = np.arange(n_dof)
        vel = n_dof + np.arange(n_dof)
    else:
        disp = 2 * np.arange(n_dof)
        vel = 2 * np.arange(n_dof) + 1
    return disp, vel


def to_state_space(system: MdofSystem, augment_params: Iterable[int] = ()) -> StateSpaceModel:
    """Build the drift/dispersion model, optionally augmented with stiffness.

    ``augment_params`` lists 1-based stiffness indices appended to the state;
    their drift and dispersion rows are identically zero (degradation is not
    dynamic on the fast time-scale). With no augmentation the state is the
    plain kinematic vector of dimension 2 * n_dof.
    """
    n = system.n_dof
    aug = tuple(sorted(int(i) for i in augment_params))
    if any(i < 1 or i > n for i in aug):
        raise InvalidParameterError("augment_params must be 1-based stiffness indices")
    if len(set(aug)) != len(aug):
        raise InvalidParameterError("augment_params must be unique")

    disp_idx, vel_idx = _index_maps(n, system.state_ordering)
    n_aug = len(aug)
    dim = 2 * n + n_aug
    param_slots = tuple(range(2 * n, dim))
    aug0 = np.array([i - 1 for i in aug], dtype=int)

    masses = system.masses
    sig_over_m = system.noise_sigmas / masses
    damping = system.damping
    patterns = system.stiffness_patterns
    k_nominal = system.stiffnesses
    is_dvp = system.kind == KIND_DVP_7DOF
    dvp_disp = disp_idx[3] if is_dvp else -1  # displacement of DOF 4 scales channel 4

    if system.state_ordering == _BLOCKED:
        labels = [f"x{i + 1}" for i in range(n)] + [f"v{i + 1}" for i in range(n)]
    else:
        labels = []
        for i in range(n):
            labels += [f"x{i + 1}", f"v{i + 1}"]
    labels += [f"k{i}" for i in aug]

    def _stiffness_from_state(y: np.ndarray) -> np.ndarray:
        if not n_aug:
            return k_nominal
        k = np.broadcast_to(k_nominal, y.shape[:-1] + (n,)).copy()
        k[..., aug0] = y[..., 2 * n:]
        return k

    def drift(y, f) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        f = np.asarray(f, dtype=float)
        x = y[..., disp_idx]
        v = y[..., vel_idx]
        k = _stiffness_from_state(y)
        acc = (f - system.nonlinear_term(x) - system.restoring_force(x, k)
               - v @ damping.T) / masses
        out = np.zeros_like(y)
        out[..., disp_idx] = v
        out[..., vel_idx] = acc
        return out

    def dispersion(y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        b = np.zeros(y.shape[:-1] + (dim, n))
        for j in range(n):
            b[..., vel_idx[j], j] = sig_over_m[j]
        if is_dvp:
            b[..., vel_idx[3], 3] *= y[..., dvp_disp]
        return b

    def drift_jacobian(y, f) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        x = y[disp_idx]
        k = _stiffness_from_state(y)
        jac = np.zeros((dim, dim))
        jac[disp_idx, vel_idx] = 1.0
        dacc_dx = -(system.stiffness_matrix(k) + system.nonlinear_jacobian(x)) / masses[:, None]
        dacc_dv = -damping / masses[:, None]
        jac[np.ix_(vel_idx, disp_idx)] = dacc_dx
        jac[np.ix_(vel_idx, vel_idx)] = dacc_dv
        for slot, j in zip(param_slots, aug0):
            jac[vel_idx, slot] = -(patterns[j] @ x) / masses
        return jac

    def drift_hessian_quad(y, f, weight: np.ndarray) -> np.ndarray:
        """0.5 * sum_ij weight[i, j] d2a/dy_i dy_j, analytic."""
        y = np.asarray(y, dtype=float)
        x = y[disp_idx]
        out = np.zeros(dim)
        hess = system.nonlinear_hessian(x)  # (n, n, n) over displacements
        w_xx = weight[np.ix_(disp_idx, disp_idx)]
        out[vel_idx] -= 0.5 * np.einsum("rij,ij->r", hess, w_xx) / masses
        # bilinear stiffness-displacement cross terms of the augmented model
        for slot, j in zip(param_slots, aug0):
            w_kx = weight[slot, disp_idx]
            out[vel_idx] -= (patterns[j] @ w_kx) / masses
        return out

    dispersion_jacobian = None
    if is_dvp:

        def dispersion_jacobian(y) -> np.ndarray:
            db = np.zeros((dim, n, dim))
            db[vel_idx[3], 3, dvp_disp] = sig_over_m[3]
            return db

    return StateSpaceModel(
        dim_state=dim,
        n_channels=n,
        labels=tuple(labels),
        augmented_params=aug,
        param_indices=param_slots,
        drift=drift,
        dispersion=dispersion,
        drift_jacobian=drift_jacobian,
        drift_hessian_quad=drift_hessian_quad,
        dispersion_jacobian=dispersion_jacobian,
    )


def acceleration_model(
    system: MdofSystem,
    observed_dofs: Iterable[int],
    augment_params: Iterable[int] = (),
) -> Callable:
    """Measurement function for the selected DOF accelerations.

    Returns h(y) = rows of -M^-1 (G(x) + K x + C x'), the restoring-force
    acceleration; the deterministic force does not enter the measurement.
    ``augment_params`` must match the state layout h will be applied to:
    when nonempty, the stiffness entering K is read off the state tail.
    """
    obs = tuple(int(i) for i in observed_dofs)
    n = system.n_dof
    if not obs:
        raise InvalidParameterError("observed_dofs must be nonempty")
    if any(i < 1 or i > n for i in obs) or len(set(obs)) != len(obs):
        raise InvalidParameterError("observed_dofs must be unique DOF numbers in 1..n_dof")
    obs0 = np.array([i - 1 for i in obs], dtype=int)

    aug = tuple(sorted(int(i) for i in augment_params))
    aug0 = np.array([i - 1 for i in aug], dtype=int)
    disp_idx, vel_idx = _index_maps(n, system.state_ordering)
    masses = system.masses
    damping = system.damping
    k_nominal = system.stiffnesses

    def h(y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        x = y[..., disp_idx]
        v = y[..., vel_idx]
        if aug:
            k = np.broadcast_to(k_nominal, y.shape[:-1] + (n,)).copy()
            k[..., aug0] = y[..., 2 * n:]
        else:
            k = k_nominal
        acc = -(system.nonlinear_term(x) + system.restoring_force(x, k)
                + v @ damping.T) / masses
        return acc[..., obs0]

    return h
