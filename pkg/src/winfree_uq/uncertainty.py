"""Uncertain coupling exponent: germ laws, orthonormal chaos bases, Gauss
quadrature, spectral projection, and the influence normalizer a(z).

The exponent z is always parametrized through a standard germ h (uniform on
[-1,1] or standard normal), and every integral against the law of z is pulled
back to h-space, so unbounded supports and the density singularity of the
squared-Gaussian law never have to be touched directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import hermite_e as herme
from numpy.polynomial import legendre
from numpy.polynomial import polynomial as npoly
from scipy.special import digamma, gammaln

from .errors import CapabilityError, ConfigError, DomainError

# Below this, 1 + cos(theta) is treated as exactly zero (removable branch of
# the log-space power) and the log-derivative terms are declared singular.
LOG_EPS = 1e-12

UNIFORM_AFFINE = "uniform-affine"
GAUSSIAN_SQUARE = "gaussian-square"


# ---------------------------------------------------------------------------
# random exponent laws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RandomParameter:
    """Law of the exponent z, as a transport z = T(h) of a standard germ h.

    uniform-affine(lo, hi):  h ~ U[-1, 1],  z = lo + (hi - lo)(h + 1)/2
    gaussian-square(shift):  h ~ N(0, 1),   z = h^2 + shift

    Supports must sit inside [1, inf) so that a(z) is defined at every node.
    """

    family: str
    lo: float = 1.0
    hi: float = 3.0
    shift: float = 1.5

    def __post_init__(self):
        if self.family not in (UNIFORM_AFFINE, GAUSSIAN_SQUARE):
            raise ConfigError(f"unknown exponent family {self.family!r}")
        if self.family == UNIFORM_AFFINE:
            if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
                raise ConfigError("uniform-affine bounds must be finite")
            if not 1.0 <= self.lo < self.hi:
                raise ConfigError("uniform-affine law needs 1 <= lo < hi")
        else:
            if not (np.isfinite(self.shift) and self.shift >= 1.0):
                raise ConfigError("gaussian-square law needs shift >= 1")

    # transport map and its ingredients -------------------------------------

    def z_of_h(self, h):
        h = np.asarray(h, dtype=float)
        if self.family == UNIFORM_AFFINE:
            return self.lo + 0.5 * (self.hi - self.lo) * (h + 1.0)
        return h * h + self.shift

    def dz_dh(self, h):
        h = np.asarray(h, dtype=float)
        if self.family == UNIFORM_AFFINE:
            return np.full_like(h, 0.5 * (self.hi - self.lo))
        return 2.0 * h

    def h_of_z(self, z):
        """Germ preimage of z (principal branch h >= 0 for the squared law)."""
        z = np.asarray(z, dtype=float)
        if self.family == UNIFORM_AFFINE:
            if np.any(z < self.lo) or np.any(z > self.hi):
                raise DomainError("z outside the support of the exponent law")
            return -1.0 + 2.0 * (z - self.lo) / (self.hi - self.lo)
        if np.any(z < self.shift):
            raise DomainError("z outside the support of the exponent law")
        return np.sqrt(z - self.shift)

    @property
    def z_min(self) -> float:
        return self.lo if self.family == UNIFORM_AFFINE else self.shift

    @property
    def z_max(self) -> float:
        return self.hi if self.family == UNIFORM_AFFINE else math.inf

    @property
    def basis_family(self) -> str:
        return "legendre" if self.family == UNIFORM_AFFINE else "hermite"

    def density(self, z):
        """Lebesgue density of z (push-forward of the germ law)."""
        z = np.asarray(z, dtype=float)
        if self.family == UNIFORM_AFFINE:
            inside = (z >= self.lo) & (z <= self.hi)
            return np.where(inside, 1.0 / (self.hi - self.lo), 0.0)
        # z = h^2 + shift with two germ preimages +-sqrt(z - shift)
        u = z - self.shift
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.exp(-0.5 * u) / np.sqrt(2.0 * math.pi * u)
        return np.where(u > 0.0, val, 0.0)


# ---------------------------------------------------------------------------
# orthonormal chaos bases
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChaosBasis:
    """Orthonormal polynomial basis of the germ: Phi_0 = 1, E[Phi_i Phi_j] = delta_ij."""

    family: str  # "legendre" | "hermite"
    degree: int

    def __post_init__(self):
        if self.family not in ("legendre", "hermite"):
            raise ConfigError(f"unknown chaos family {self.family!r}")
        if self.degree < 0:
            raise ConfigError("chaos degree must be >= 0")

    def _norms(self) -> np.ndarray:
        k = np.arange(self.degree + 1)
        if self.family == "legendre":
            # ||P_k||^2 = 1/(2k+1) under the uniform law on [-1,1]
            return np.sqrt(2.0 * k + 1.0)
        # ||He_k||^2 = k! under the standard normal law
        return np.exp(-0.5 * gammaln(k + 1.0))

    def eval_matrix(self, h) -> np.ndarray:
        """Phi_k(h_q) as an array of shape (len(h), degree + 1)."""
        h = np.atleast_1d(np.asarray(h, dtype=float))
        if self.family == "legendre":
            van = legendre.legvander(h, self.degree)
        else:
            van = herme.hermevander(h, self.degree)
        return van * self._norms()

    def eval_deriv_matrix(self, h, order: int = 1) -> np.ndarray:
        """d^order/dh^order Phi_k(h_q), shape (len(h), degree + 1)."""
        h = np.atleast_1d(np.asarray(h, dtype=float))
        norms = self._norms()
        out = np.zeros((h.size, self.degree + 1))
        der = legendre.legder if self.family == "legendre" else herme.hermeder
        val = legendre.legval if self.family == "legendre" else herme.hermeval
        for k in range(self.degree + 1):
            coeff = np.zeros(k + 1)
            coeff[k] = 1.0
            if order > k:
                continue  # derivative of too-low-degree polynomial vanishes
            out[:, k] = val(h, der(coeff, m=order)) * norms[k]
        return out


def basis_for(rp: RandomParameter, degree: int) -> ChaosBasis:
    return ChaosBasis(rp.basis_family, degree)


def _check_match(rp: RandomParameter, basis: ChaosBasis) -> None:
    if rp.basis_family != basis.family:
        raise ConfigError(
            f"basis family {basis.family!r} does not match exponent family {rp.family!r}"
        )


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureRule:
    """Gauss rule in germ space; weights are probabilist-normalized (sum 1)."""

    h_nodes: np.ndarray
    weights: np.ndarray
    z_nodes: np.ndarray
    family: str  # germ family the rule belongs to

    @property
    def n(self) -> int:
        return self.h_nodes.size


def make_quadrature(rp: RandomParameter, n_nodes: int) -> QuadratureRule:
    """Gauss rule matched to the germ of rp, with weights summing to one."""
    if n_nodes < 1:
        raise ConfigError("quadrature rule needs at least one node")
    if rp.family == UNIFORM_AFFINE:
        h, w = legendre.leggauss(n_nodes)
        w = w / 2.0
    else:
        h, w = herme.hermegauss(n_nodes)
        w = w / math.sqrt(2.0 * math.pi)
    return QuadratureRule(h_nodes=h, weights=w, z_nodes=rp.z_of_h(h),
                          family=rp.basis_family)


def default_order(degree: int) -> int:
    """Node count used when nothing finer is requested: exact Gram plus margin."""
    return 2 * degree + 2


# ---------------------------------------------------------------------------
# chaos coefficients
# ---------------------------------------------------------------------------

@dataclass
class GpcCoefficients:
    """Chaos coefficients of a quantity; the chaos index is the LAST axis."""

    coeffs: np.ndarray
    basis: ChaosBasis

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape[-1] != self.basis.degree + 1:
            raise ConfigError("coefficient length does not match basis degree + 1")

    @property
    def mean(self):
        return self.coeffs[..., 0]

    @property
    def variance(self):
        # orthonormal basis: Var = sum_{k>=1} c_k^2
        return np.sum(self.coeffs[..., 1:] ** 2, axis=-1)


def project(sampler, basis: ChaosBasis, quad: QuadratureRule,
            rp: RandomParameter | None = None) -> GpcCoefficients:
    """Project z -> sampler(z) on the chaos basis with the given rule.

    sampler is called once per quadrature node and may return scalars or
    arrays (all of one shape).
    """
    if rp is not None:
        _check_match(rp, basis)
    if basis.family != quad.family:
        raise ConfigError("quadrature rule and basis families differ")
    values = np.stack([np.asarray(sampler(z), dtype=float) for z in quad.z_nodes])
    phi = basis.eval_matrix(quad.h_nodes)  # (Q, M+1)
    coeffs = np.tensordot(phi.T * quad.weights, values, axes=1)  # (M+1, ...)
    return GpcCoefficients(np.moveaxis(coeffs, 0, -1), basis)


def reconstruct(gpc: GpcCoefficients, h):
    """Evaluate the chaos expansion at germ values h; returns shape (..., len(h))."""
    phi = gpc.basis.eval_matrix(h)
    return gpc.coeffs @ phi.T


def reconstruct_derivative(gpc: GpcCoefficients, rp: RandomParameter, h):
    """d/dz of the expansion at germ values h, by the chain rule dh/dz = 1/(dz/dh).

    Returns (values, singular) where singular flags nodes at which the
    transport map is not invertible (h = 0 for the squared-Gaussian law);
    values are NaN there.
    """
    _check_match(rp, gpc.basis)
    h = np.atleast_1d(np.asarray(h, dtype=float))
    dphi = gpc.basis.eval_deriv_matrix(h)  # (H, M+1)
    jac = rp.dz_dh(h)
    singular = np.abs(jac) < LOG_EPS
    safe = np.where(singular, 1.0, jac)
    vals = (gpc.coeffs @ dphi.T) / safe
    if np.any(singular):
        vals = np.where(singular, np.nan, vals)
    return vals, singular


def basis_z_derivative_matrix(basis: ChaosBasis, rp: RandomParameter, h,
                              order: int) -> np.ndarray:
    """d^order/dz^order of Phi_k(h(z)) at germ nodes h; shape (degree+1, len(h)).

    For the affine law this is a constant rescaling of germ derivatives. For
    the squared-Gaussian law, repeated application of d/dz = (2h)^{-1} d/dh to
    a polynomial p(h)/h^m stays rational, with

        p <- p' h - m p,   m <- m + 2,   factor <- factor/2,

    which is evaluated exactly; nodes at h = 0 are rejected.
    """
    _check_match(rp, basis)
    h = np.atleast_1d(np.asarray(h, dtype=float))
    if order == 0:
        return basis.eval_matrix(h).T
    if rp.family == UNIFORM_AFFINE:
        scale = (2.0 / (rp.hi - rp.lo)) ** order
        return basis.eval_deriv_matrix(h, order=order).T * scale
    if np.any(np.abs(h) < LOG_EPS):
        raise DomainError("z-derivative is singular at germ node h = 0")
    norms = basis._norms()
    out = np.zeros((basis.degree + 1, h.size))
    for k in range(basis.degree + 1):
        e_k = np.zeros(k + 1)
        e_k[k] = 1.0
        p = herme.herme2poly(e_k)  # power-basis coefficients of He_k
        m = 0
        factor = norms[k]
        for _ in range(order):
            p = npoly.polysub(npoly.polymulx(npoly.polyder(p)),
                              m * np.atleast_1d(p))
            m += 2
            factor *= 0.5
        out[k] = factor * npoly.polyval(h, p) / h ** m
    return out


# ---------------------------------------------------------------------------
# normalizer and influence function
# ---------------------------------------------------------------------------

def _check_exponent(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if np.any(z < 1.0) or not np.all(np.isfinite(z)):
        raise DomainError("coupling exponent must satisfy z >= 1")
    return z


def log_normalizer_a(z):
    """log a(z) with a(z) = 2^z Gamma(z+1)^2 / Gamma(2z+1), evaluated stably."""
    z = _check_exponent(z)
    return z * math.log(2.0) + 2.0 * gammaln(z + 1.0) - gammaln(2.0 * z + 1.0)


def normalizer_a(z):
    """Normalizer making the influence function average to one on the circle."""
    return np.exp(log_normalizer_a(z))


def normalizer_a_prime(z, method: str = "digamma"):
    """da/dz, either through the digamma identity or a central difference."""
    z = _check_exponent(z)
    if method == "digamma":
        return normalizer_a(z) * (
            math.log(2.0) + 2.0 * digamma(z + 1.0) - 2.0 * digamma(2.0 * z + 1.0)
        )
    if method == "fd":
        delta = 1e-6
        zp = z + delta
        zm = np.maximum(z - delta, 1.0)  # stay inside the domain at z = 1
        return (normalizer_a(zp) - normalizer_a(zm)) / (zp - zm)
    raise ConfigError(f"unknown derivative method {method!r}")


def cos_power(theta, z, log_scale=0.0):
    """exp(log_scale + z*log(1 + cos theta)) with the exact-zero branch at the cusp.

    This is the only place (1 + cos)^z is formed; everything upstream passes
    through here so overflow-free log-space arithmetic is uniform.
    """
    theta = np.asarray(theta, dtype=float)
    base = 1.0 + np.cos(theta)
    zero = base <= 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.exp(log_scale + z * np.log(np.where(zero, 1.0, base)))
    return np.where(zero, 0.0, out)


def influence(theta, z):
    """Influence profile a(z)(1 + cos theta)^z; wraps automatically (cos is periodic)."""
    z = _check_exponent(z)
    return cos_power(theta, z, log_normalizer_a(z))
