"""Finite ensembles of pulse-coupled phase oscillators, with and without
chaos-expanded exponent uncertainty, plus exponent-sensitivity transport and
trajectory diagnostics (rotation numbers, trapping, norms).

Phases are kept unwrapped throughout so rotation numbers are plain difference
quotients; only the influence weights see the phase through cos/sin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DomainError
from .uncertainty import (LOG_EPS, ChaosBasis, QuadratureRule, cos_power,
                          log_normalizer_a, normalizer_a, normalizer_a_prime)


@dataclass(frozen=True)
class ParticleConfig:
    """Ensemble parameters: frequencies, coupling, step size, sign convention.

    flip_coupling_sign reproduces the repulsive (+sin) variant of the coupling
    for comparison runs; the default is the attractive (-sin) form.
    """

    nu: np.ndarray
    kappa: float
    dt: float = 1e-3
    flip_coupling_sign: bool = False

    def __post_init__(self):
        nu = np.atleast_1d(np.asarray(self.nu, dtype=float))
        if nu.ndim != 1 or nu.size == 0 or not np.all(np.isfinite(nu)):
            raise ConfigError("nu must be a nonempty finite frequency vector")
        object.__setattr__(self, "nu", nu)
        if not (np.isfinite(self.kappa) and self.kappa >= 0.0):
            raise ConfigError("coupling kappa must be finite and >= 0")
        if not (np.isfinite(self.dt) and self.dt > 0.0):
            raise ConfigError("step size dt must be positive")

    @property
    def n(self) -> int:
        return self.nu.size

    @property
    def sign(self) -> float:
        return 1.0 if self.flip_coupling_sign else -1.0


@dataclass
class PhaseState:
    t: float
    theta: np.ndarray  # unwrapped phases, shape (N,)


@dataclass
class SgPhaseState:
    """Chaos-coefficient phases theta_hat[i, k], one row per oscillator."""

    t: float
    coeffs: np.ndarray  # (N, M+1)
    basis: ChaosBasis
    quad: QuadratureRule


@dataclass
class SensitivityState:
    t: float
    theta: np.ndarray
    dz_theta: np.ndarray  # d theta / dz along the same trajectory


# ---------------------------------------------------------------------------
# right-hand sides
# ---------------------------------------------------------------------------

def drift(theta, z, config: ParticleConfig):
    """d theta_i/dt = nu_i - (a(z) kappa / N) sin(theta_i) sum_j (1+cos theta_j)^z.

    theta has the oscillator index on the last axis; z broadcasts against the
    leading axes, so a (Q, N) batch integrates all quadrature nodes at once.
    The shared influence sum keeps the cost at O(N) per state.
    """
    theta = np.asarray(theta, dtype=float)
    z = np.asarray(z, dtype=float)
    log_a = log_normalizer_a(z)
    weights = cos_power(theta, z[..., None], log_a[..., None])
    pressure = np.sum(weights, axis=-1, keepdims=True)
    return config.nu + config.sign * (config.kappa / config.n) \
        * pressure * np.sin(theta)


def sg_drift(coeffs, config: ParticleConfig, basis: ChaosBasis,
             quad: QuadratureRule, phi: np.ndarray | None = None):
    """Galerkin drift of the coefficient matrix theta_hat (N, M+1).

    Reconstructs phases at every quadrature node once, forms the shared
    influence pressure per node, and projects the nodal drift back on the
    basis: cost O(N Q (M+1)) per evaluation.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.ndim != 2 or coeffs.shape[1] != basis.degree + 1:
        raise ConfigError("coefficient matrix must be (N, degree+1)")
    if phi is None:
        phi = basis.eval_matrix(quad.h_nodes)  # (Q, M+1)
    theta_nodes = coeffs @ phi.T  # (N, Q)
    z = quad.z_nodes
    infl = cos_power(theta_nodes, z, log_normalizer_a(z))  # a(z)(1+cos)^z
    pressure = np.sum(infl, axis=0)  # (Q,)
    nodal = config.sign * (config.kappa / config.n) * np.sin(theta_nodes) * pressure
    out = (nodal * quad.weights) @ phi  # (N, M+1)
    out[:, 0] += config.nu
    return out


def sensitivity_drift(theta, dz_theta, z: float, config: ParticleConfig):
    """Transport of the exponent sensitivity d theta/dz along a trajectory.

    Differentiating the drift in z produces four terms per pair (i, j): the
    normalizer derivative, the phase Jacobian, the log factor of the power,
    and the chain term through theta_j. Any phase at the cusp 1+cos = 0 makes
    the log terms meaningless and raises.
    """
    theta = np.asarray(theta, dtype=float)
    dz_theta = np.asarray(dz_theta, dtype=float)
    base = 1.0 + np.cos(theta)
    if np.any(base <= LOG_EPS):
        raise DomainError("sensitivity transport is singular at 1 + cos(theta) = 0")
    a = float(normalizer_a(z))
    a_prime = float(normalizer_a_prime(z))
    w = cos_power(theta, z)  # (1+cos theta_j)^z
    sum_w = np.sum(w, axis=-1, keepdims=True)
    sum_logw = np.sum(w * np.log(base), axis=-1, keepdims=True)
    sum_chain = np.sum(w * np.sin(theta) * dz_theta / base, axis=-1, keepdims=True)
    sin_t = np.sin(theta)
    bracket = (a_prime * sin_t * sum_w
               + a * np.cos(theta) * dz_theta * sum_w
               + a * sin_t * sum_logw
               - a * z * sin_t * sum_chain)
    return config.sign * (config.kappa / config.n) * bracket


# ---------------------------------------------------------------------------
# fixed-step integration (classical RK4)
# ---------------------------------------------------------------------------

def _run_rk4(rhs, y0, dt: float, n_steps: int, record_every: int):
    """March an autonomous system; returns (times, snapshots) with snapshot 0
    at t=0 and the final state always included."""
    if record_every < 1:
        record_every = n_steps if n_steps > 0 else 1
    y = np.array(y0, dtype=float)
    times = [0.0]
    snaps = [y.copy()]
    for step in range(1, n_steps + 1):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * dt * k1)
        k3 = rhs(y + 0.5 * dt * k2)
        k4 = rhs(y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if step % record_every == 0 or step == n_steps:
            times.append(step * dt)
            snaps.append(y.copy())
    return np.asarray(times), np.stack(snaps)


def _step_count(t_end: float, dt: float) -> int:
    if t_end < 0.0:
        raise ConfigError("integration horizon must be nonnegative")
    n = int(round(t_end / dt))
    if abs(n * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ConfigError(f"t_end = {t_end} is not a multiple of dt = {dt}")
    return n


def integrate(theta0, z, config: ParticleConfig, t_end: float,
              record_every: int = 1):
    """Fixed-z trajectory; theta0 may be (N,) or a (Q, N) node batch with a
    matching z vector. Returns (times, thetas)."""
    theta0 = np.asarray(theta0, dtype=float)
    n_steps = _step_count(t_end, config.dt)
    return _run_rk4(lambda y: drift(y, z, config), theta0, config.dt,
                    n_steps, record_every)


def integrate_sg(coeffs0, config: ParticleConfig, basis: ChaosBasis,
                 quad: QuadratureRule, t_end: float, record_every: int = 1):
    """Chaos-coefficient trajectory of the (N, M+1) matrix."""
    phi = basis.eval_matrix(quad.h_nodes)
    n_steps = _step_count(t_end, config.dt)
    return _run_rk4(lambda y: sg_drift(y, config, basis, quad, phi=phi),
                    np.asarray(coeffs0, dtype=float), config.dt, n_steps,
                    record_every)


def integrate_with_sensitivity(theta0, z: float, config: ParticleConfig,
                               t_end: float, dz0=None, record_every: int = 1):
    """Joint phase + sensitivity trajectory at fixed z.

    dz0 defaults to zero (exponent-independent initial data). Returns
    (times, thetas, dz_thetas).
    """
    theta0 = np.asarray(theta0, dtype=float)
    if dz0 is None:
        dz0 = np.zeros_like(theta0)
    y0 = np.stack([theta0, np.asarray(dz0, dtype=float)])

    def rhs(y):
        th, dz = y[0], y[1]
        return np.stack([drift(th, z, config),
                         sensitivity_drift(th, dz, z, config)])

    n_steps = _step_count(t_end, config.dt)
    times, snaps = _run_rk4(rhs, y0, config.dt, n_steps, record_every)
    return times, snaps[:, 0], snaps[:, 1]


# ---------------------------------------------------------------------------
# trajectory diagnostics
# ---------------------------------------------------------------------------

class RotationNumbers(NamedTuple):
    rho: np.ndarray
    window: float
    window_ok: bool  # False when the averaging window is shorter than burn_in


def rotation_numbers(times, thetas, burn_in: float) -> RotationNumbers:
    """Difference-quotient rotation numbers after discarding the burn-in."""
    times = np.asarray(times, dtype=float)
    thetas = np.asarray(thetas, dtype=float)
    if times.size < 2:
        raise DomainError("need at least two snapshots for rotation numbers")
    i0 = int(np.searchsorted(times, burn_in))
    i0 = min(i0, times.size - 2)
    window = times[-1] - times[i0]
    rho = (thetas[-1] - thetas[i0]) / window
    return RotationNumbers(rho, float(window), bool(window >= burn_in))


def classify_pattern(rho, tol: float) -> str:
    """death | locking | incoherence | mixed from rotation numbers."""
    rho = np.asarray(rho, dtype=float)
    if tol <= 0.0:
        raise DomainError("classification tolerance must be positive")
    if np.max(np.abs(rho)) < tol:
        return "death"
    diffs = np.abs(rho[:, None] - rho[None, :])
    off = ~np.eye(rho.size, dtype=bool)
    if rho.size < 2 or np.max(diffs[off]) < tol:
        return "locking"
    if np.min(diffs[off]) >= tol:
        return "incoherence"
    return "mixed"


def entrance_time(times, thetas, level: float) -> float:
    """First recorded time after which all |theta_i| stay below level; inf if
    the trajectory is still outside at the last snapshot."""
    sup = np.max(np.abs(np.asarray(thetas, dtype=float)), axis=-1)
    outside = sup > level
    if not outside.any():
        return float(times[0])
    last_out = int(np.max(np.nonzero(outside)[0]))
    if last_out == len(times) - 1:
        return math.inf
    return float(times[last_out + 1])


class TrappingCheck(NamedTuple):
    confined: bool        # never left [-c, c]
    entrance: float       # measured entrance time into [-c*, c*]
    max_abs_phase: float


def trapping_check(times, thetas, c: float, c_star_level: float) -> TrappingCheck:
    sup = float(np.max(np.abs(np.asarray(thetas, dtype=float))))
    return TrappingCheck(confined=bool(sup <= c),
                         entrance=entrance_time(times, thetas, c_star_level),
                         max_abs_phase=sup)


class H1zNorms(NamedTuple):
    theta: float
    dz_theta: float
    total: float


def h1z_norms(theta_nodes, dz_nodes, weights) -> H1zNorms:
    """Quadrature L2-in-z norms of the phase vector and its sensitivity.

    theta_nodes and dz_nodes are (Q, N) node batches; the Euclidean norm is
    taken over oscillators and the weighted rms over nodes.
    """
    w = np.asarray(weights, dtype=float)
    nt = float(np.sqrt(np.sum(w * np.sum(np.asarray(theta_nodes) ** 2, axis=-1))))
    nd = float(np.sqrt(np.sum(w * np.sum(np.asarray(dz_nodes) ** 2, axis=-1))))
    return H1zNorms(nt, nd, math.hypot(nt, nd))


def deviation_l1(theta, reference):
    """Total absolute deviation sum_i |theta_i - ref_i| (the decay observable)."""
    return np.sum(np.abs(np.asarray(theta) - np.asarray(reference)), axis=-1)


# ---------------------------------------------------------------------------
# trajectory export
# ---------------------------------------------------------------------------

def write_phase_trajectory(path, times, thetas, meta=None) -> None:
    """CSV of rows (t, theta_0, ..., theta_{N-1}) with # metadata lines."""
    from .csvio import write_csv
    thetas = np.asarray(thetas, dtype=float)
    cols = ["t"] + [f"theta_{i}" for i in range(thetas.shape[-1])]
    rows = [(t, *row) for t, row in zip(times, thetas)]
    write_csv(path, cols, rows, meta or {})


def write_sg_trajectory(path, times, coeff_snaps, meta=None) -> None:
    """Long-format CSV of rows (t, oscillator, mode, coefficient)."""
    from .csvio import write_csv
    coeff_snaps = np.asarray(coeff_snaps, dtype=float)
    rows = []
    for t, mat in zip(times, coeff_snaps):
        for i in range(mat.shape[0]):
            for k in range(mat.shape[1]):
                rows.append((t, i, k, mat[i, k]))
    write_csv(path, ["t", "oscillator", "mode", "coeff"], rows, meta or {})
