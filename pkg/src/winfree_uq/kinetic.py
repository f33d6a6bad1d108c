"""Mean-field transport of the phase density with a chaos-expanded random
exponent: conservative nodewise-upwind finite volumes on a periodic grid,
moment extraction, histogram reconstruction from particle ensembles, and
discrete norms over (theta, frequency, exponent) space.

The projected system d/dt fhat_h + d_theta sum_k L_hk fhat_k = 0 is never
stepped in coupled matrix form; each step reconstructs the density at the
exponent quadrature nodes, upwinds the scalar conservation law per node, and
projects the flux divergence back — the same scheme in the basis where the
coupling matrix is diagonal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from numpy.polynomial import legendre

from .errors import CapabilityError, CflError, ConfigError, DomainError
from .uncertainty import (ChaosBasis, QuadratureRule, RandomParameter,
                          _check_match, basis_z_derivative_matrix, cos_power,
                          log_normalizer_a)


@dataclass(frozen=True)
class ThetaGrid:
    """Uniform periodic grid on [0, 2pi): cells [m, m+1) * d_theta."""

    n_theta: int

    def __post_init__(self):
        if self.n_theta < 8:
            raise ConfigError("theta grid needs at least 8 cells")

    @property
    def d_theta(self) -> float:
        return 2.0 * math.pi / self.n_theta

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n_theta) + 0.5) * self.d_theta

    @property
    def edges(self) -> np.ndarray:
        """Left edge of each cell; edge m separates cells m-1 and m."""
        return np.arange(self.n_theta) * self.d_theta


@dataclass(frozen=True)
class FrequencyModel:
    """Natural-frequency law: zero | dirac(nu0) | uniform(gamma) | samples."""

    kind: str
    nu0: float = 0.0
    gamma: float = 0.0
    n_nodes: int = 16
    values: tuple = ()
    weights: tuple = ()

    def __post_init__(self):
        if self.kind not in ("zero", "dirac", "uniform", "samples"):
            raise ConfigError(f"unknown frequency model {self.kind!r}")
        if self.kind == "uniform":
            if not self.gamma > 0.0:
                raise ConfigError("uniform frequency model needs gamma > 0")
            if self.n_nodes < 1:
                raise ConfigError("uniform frequency model needs >= 1 node")
        if self.kind == "samples" and len(self.values) == 0:
            raise ConfigError("sample frequency model needs values")

    def nodes(self):
        """(nu values, probability weights); weights sum to one."""
        if self.kind == "zero":
            return np.zeros(1), np.ones(1)
        if self.kind == "dirac":
            return np.array([self.nu0]), np.ones(1)
        if self.kind == "uniform":
            x, w = legendre.leggauss(self.n_nodes)
            return self.gamma * x, w / 2.0
        vals = np.asarray(self.values, dtype=float)
        if self.weights:
            w = np.asarray(self.weights, dtype=float)
            w = w / np.sum(w)
        else:
            w = np.full(vals.size, 1.0 / vals.size)
        return vals, w


@dataclass(frozen=True)
class KineticField:
    """Chaos coefficients of the density per frequency node: (n_nu, M+1, n_theta).

    Each frequency node carries a conditional density of unit mass; the
    frequency weights enter only through observables and the coupling.
    """

    fhat: np.ndarray
    grid: ThetaGrid
    basis: ChaosBasis
    quad: QuadratureRule
    rp: RandomParameter
    freq: FrequencyModel
    kappa: float
    t: float = 0.0

    def __post_init__(self):
        fhat = np.asarray(self.fhat, dtype=float)
        n_nu = self.freq.nodes()[0].size
        want = (n_nu, self.basis.degree + 1, self.grid.n_theta)
        if fhat.shape != want:
            raise ConfigError(f"fhat must have shape {want}, got {fhat.shape}")
        object.__setattr__(self, "fhat", fhat)
        if not (np.isfinite(self.kappa) and self.kappa >= 0.0):
            raise ConfigError("coupling kappa must be finite and >= 0")

    def node_values(self) -> np.ndarray:
        """Reconstruction f(theta_m; nu_p, z_q), shape (n_nu, Q, n_theta)."""
        phi = self.basis.eval_matrix(self.quad.h_nodes)  # (Q, M+1)
        return np.einsum("pkm,qk->pqm", self.fhat, phi)

    def marginal_node_values(self) -> np.ndarray:
        """Frequency-marginalized reconstruction, shape (Q, n_theta)."""
        _, nu_w = self.freq.nodes()
        return np.tensordot(nu_w, self.node_values(), axes=1)

    def nodal_min(self) -> float:
        """Positivity monitor: most negative reconstructed value."""
        return float(np.min(self.node_values()))


def init_bimodal(grid: ThetaGrid, theta_bar_1: float, theta_bar_2: float,
                 sigma0_sq: float, rp: RandomParameter, basis: ChaosBasis,
                 quad: QuadratureRule, freq: FrequencyModel | None = None,
                 kappa: float = 1.0) -> KineticField:
    """Two-Gaussian initial density at the cell centers, renormalized to unit
    mass on the grid; the datum is exponent-independent so only mode 0 is set.
    """
    if not sigma0_sq > 0.0:
        raise ConfigError("sigma0_sq must be positive")
    _check_match(rp, basis)
    if freq is None:
        freq = FrequencyModel("zero")
    th = grid.centers
    f0 = (np.exp(-0.5 * (th - theta_bar_1) ** 2 / sigma0_sq)
          + np.exp(-0.5 * (th - theta_bar_2) ** 2 / sigma0_sq))
    f0 = f0 / (np.sum(f0) * grid.d_theta)
    n_nu = freq.nodes()[0].size
    fhat = np.zeros((n_nu, basis.degree + 1, grid.n_theta))
    fhat[:, 0, :] = f0
    return KineticField(fhat, grid, basis, quad, rp, freq, kappa, 0.0)


# ---------------------------------------------------------------------------
# coupling strength and projected velocity
# ---------------------------------------------------------------------------

def _sigma_from_nodes(field: KineticField, f_nodes: np.ndarray) -> np.ndarray:
    """sigma(z_q) = kappa a(z_q) sum_m (1+cos)^z f Delta-theta, nu-marginalized."""
    z = field.quad.z_nodes
    infl = cos_power(field.grid.centers, z[:, None], log_normalizer_a(z)[:, None])
    _, nu_w = field.freq.nodes()
    f_marg = np.tensordot(nu_w, f_nodes, axes=1)  # (Q, n_theta)
    return field.kappa * field.grid.d_theta * np.sum(f_marg * infl, axis=1)


def sigma_nodes(field: KineticField) -> np.ndarray:
    """Coupling strength at every exponent quadrature node, shape (Q,)."""
    return _sigma_from_nodes(field, field.node_values())


def sigma_of_z(field: KineticField, z: float) -> float:
    """Coupling strength at one exponent value (germ looked up through the law)."""
    h = field.rp.h_of_z(z)
    phi = field.basis.eval_matrix(h)  # (1, M+1)
    _, nu_w = field.freq.nodes()
    f_marg = np.tensordot(nu_w, field.fhat, axes=1)  # (M+1, n_theta)
    f_at_z = (phi @ f_marg)[0]
    infl = cos_power(field.grid.centers, float(z), float(log_normalizer_a(z)))
    return float(field.kappa * field.grid.d_theta * np.sum(f_at_z * infl))


def l_matrix(field: KineticField, nu: float, theta: float) -> np.ndarray:
    """Galerkin velocity matrix L_hk = sum_q w_q (nu - sigma(z_q) sin theta) Phi_h Phi_k."""
    sig = sigma_nodes(field)
    v = nu - sig * math.sin(theta)  # (Q,)
    phi = field.basis.eval_matrix(field.quad.h_nodes)  # (Q, M+1)
    return (phi * (field.quad.weights * v)[:, None]).T @ phi


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------

def step(field: KineticField, dt: float) -> KineticField:
    """One forward-Euler step of the projected system via nodewise upwinding.

    Per exponent node: donor-cell flux v(edge) * f(upwind cell) with the edge
    velocity nu - sigma(z_q) sin(theta_edge); the flux difference telescopes,
    so per-node mass is conserved to rounding. Violating either step bound
    (dt <= d_theta^2, or CFL 0.9 against the fastest edge speed) raises.
    """
    grid = field.grid
    if not dt > 0.0:
        raise ConfigError("dt must be positive")
    if dt > grid.d_theta ** 2 * (1.0 + 1e-9):
        raise CflError(f"dt = {dt} exceeds the d_theta^2 = {grid.d_theta**2:.3e} step rule")
    phi = field.basis.eval_matrix(field.quad.h_nodes)
    f_nodes = np.einsum("pkm,qk->pqm", field.fhat, phi)
    sigma = _sigma_from_nodes(field, f_nodes)
    nu_vals, _ = field.freq.nodes()
    v_edge = nu_vals[:, None, None] \
        - sigma[None, :, None] * np.sin(grid.edges)[None, None, :]
    vmax = float(np.max(np.abs(v_edge)))
    if vmax > 0.0 and dt * vmax > 0.9 * grid.d_theta * (1.0 + 1e-9):
        raise CflError(f"dt = {dt} violates CFL 0.9 at max speed {vmax:.3g}")
    f_left = np.roll(f_nodes, 1, axis=-1)
    flux = np.maximum(v_edge, 0.0) * f_left + np.minimum(v_edge, 0.0) * f_nodes
    dfn = -(np.roll(flux, -1, axis=-1) - flux) / grid.d_theta
    dfhat = np.einsum("pqm,q,qk->pkm", dfn, field.quad.weights, phi)
    return replace(field, fhat=field.fhat + dt * dfhat, t=field.t + dt)


def evolve(field: KineticField, t_end: float, dt: float | None = None) -> KineticField:
    """March to t_end (>= field.t) with full steps of dt (default d_theta^2)
    and one shorter remainder step."""
    if dt is None:
        dt = field.grid.d_theta ** 2
    if t_end < field.t - 1e-12:
        raise ConfigError("t_end lies before the field's current time")
    while field.t < t_end - 1e-12:
        field = step(field, min(dt, t_end - field.t))
    return field


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------

def temperature(obj, z: float | None = None):
    """Phase variance T = int (theta - u)^2 f dtheta, u the mean phase.

    Accepts a KineticField (needs z; frequency marginalized first) or an array
    of phases on the last axis (empirical second central moment).
    """
    if isinstance(obj, KineticField):
        if z is None:
            raise ConfigError("temperature of a field needs the exponent value z")
        h = obj.rp.h_of_z(z)
        phi = obj.basis.eval_matrix(h)
        _, nu_w = obj.freq.nodes()
        f_marg = np.tensordot(nu_w, obj.fhat, axes=1)
        f_at_z = (phi @ f_marg)[0]
        return _density_temperature(f_at_z[None, :], obj.grid)[0]
    theta = np.asarray(obj, dtype=float)
    u = np.mean(theta, axis=-1, keepdims=True)
    return np.mean((theta - u) ** 2, axis=-1)


def _density_temperature(f_rows: np.ndarray, grid: ThetaGrid) -> np.ndarray:
    """Temperature of each row of cell-center densities, shape (rows,)."""
    th = grid.centers
    mass = np.sum(f_rows, axis=-1) * grid.d_theta
    u = np.sum(f_rows * th, axis=-1) * grid.d_theta / np.where(mass == 0.0, 1.0, mass)
    return np.sum(f_rows * (th - u[:, None]) ** 2, axis=-1) * grid.d_theta


def temperature_nodes(field: KineticField) -> np.ndarray:
    """Temperature at every exponent quadrature node, shape (Q,)."""
    return _density_temperature(field.marginal_node_values(), field.grid)


class MomentReport(NamedTuple):
    mean_density: np.ndarray      # fhat_0, frequency-marginalized
    variance_density: np.ndarray  # sum of squared higher modes
    temperature: np.ndarray       # per exponent node
    mass: np.ndarray              # per exponent node


def moments(field: KineticField) -> MomentReport:
    _, nu_w = field.freq.nodes()
    fhat_marg = np.tensordot(nu_w, field.fhat, axes=1)  # (M+1, n_theta)
    f_nodes = field.marginal_node_values()
    return MomentReport(
        mean_density=fhat_marg[0].copy(),
        variance_density=np.sum(fhat_marg[1:] ** 2, axis=0),
        temperature=_density_temperature(f_nodes, field.grid),
        mass=np.sum(f_nodes, axis=-1) * field.grid.d_theta,
    )


class DensityReconstruction(NamedTuple):
    mean: np.ndarray
    variance: np.ndarray


def reconstruct_particle_density(thetas, grid: ThetaGrid,
                                 weights=None) -> DensityReconstruction:
    """Histogram (top-hat kernel) density from per-node particle phases.

    thetas is (Q, N) — one phase vector per exponent node — or plain (N,);
    phases are wrapped to [0, 2pi) here and nowhere else. The expectation is
    the weight-average of the per-node histograms and the variance their
    across-node second central moment.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    n_nodes, n_particles = thetas.shape
    if weights is None:
        weights = np.full(n_nodes, 1.0 / n_nodes)
    weights = np.asarray(weights, dtype=float)
    idx = np.floor(np.mod(thetas, 2.0 * math.pi) / grid.d_theta).astype(int)
    idx = np.clip(idx, 0, grid.n_theta - 1)  # guard the theta = 2pi rounding edge
    hists = np.zeros((n_nodes, grid.n_theta))
    for q in range(n_nodes):
        hists[q] = np.bincount(idx[q], minlength=grid.n_theta) \
            / (n_particles * grid.d_theta)
    mean = np.tensordot(weights, hists, axes=1)
    second = np.tensordot(weights, hists ** 2, axes=1)
    return DensityReconstruction(mean, np.maximum(second - mean ** 2, 0.0))


def l1_distance(f_a, f_b, grid: ThetaGrid) -> float:
    return float(np.sum(np.abs(np.asarray(f_a) - np.asarray(f_b))) * grid.d_theta)


# ---------------------------------------------------------------------------
# random-space error metrics and norms
# ---------------------------------------------------------------------------

def l2z_error(ref_values, gpc, quad: QuadratureRule) -> float:
    """Quadrature L2 distance in z between per-node reference values and a
    chaos expansion evaluated at the same nodes."""
    ref = np.asarray(ref_values, dtype=float)
    if ref.shape != (quad.n,):
        raise ConfigError("reference values must be given per quadrature node")
    rec = gpc.coeffs @ gpc.basis.eval_matrix(quad.h_nodes).T
    return float(np.sqrt(np.sum(quad.weights * (ref - rec) ** 2)))


def wkp_norm(field: KineticField, k: int, p) -> float:
    """Discrete W^{k,p} norm over theta-grid x frequency nodes x z-quadrature,
    with z-derivatives taken through the basis (so k may not exceed the chaos
    degree). p = inf takes the max over the whole discrete set."""
    if k < 0:
        raise DomainError("derivative order k must be >= 0")
    if k > field.basis.degree:
        raise CapabilityError(
            f"k = {k} z-derivatives need chaos degree >= {k}, have {field.basis.degree}")
    if not (p == math.inf or p > 1.0):
        raise ConfigError("p must exceed 1 (or be inf)")
    _, nu_w = field.freq.nodes()
    levels = []
    for l in range(k + 1):
        d_mat = basis_z_derivative_matrix(field.basis, field.rp,
                                          field.quad.h_nodes, l)  # (M+1, Q)
        levels.append(np.einsum("pkm,kq->pqm", field.fhat, d_mat))
    if p == math.inf:
        return float(max(np.max(np.abs(lv)) for lv in levels))
    cell_w = nu_w[:, None, None] * field.quad.weights[None, :, None] \
        * field.grid.d_theta
    total = sum(float(np.sum(cell_w * np.abs(lv) ** p)) for lv in levels)
    return float(total ** (1.0 / p))
