"""Measure-valued death states: existence thresholds and self-consistent
coupling amplitudes for uniform and point frequency marginals.

The single scalar unknown is the stationary amplitude sigma solving

    sigma = kappa a(z) Integral (1 + sqrt(1 - nu^2/sigma^2))^z g(nu) d nu,

equivalently F(sigma) = 1/kappa with F(x) = a(z)/(2 gamma x) * Integral over
the uniform marginal, or a(z) H(|nu0|/x, z) = |nu0| x^{-1} ... reduced to the
one-hump profile H(y, z) = y (1 + sqrt(1 - y^2))^z for a point marginal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import DomainError
from .rootfind import bisect, expand_bracket
from .uncertainty import log_normalizer_a, normalizer_a

SIGMA_CAP = 1e8
_GL64 = np.polynomial.legendre.leggauss(64)
_GL128 = np.polynomial.legendre.leggauss(128)


def h_func(y, z):
    """One-hump profile H(y, z) = y (1 + sqrt(1 - y^2))^z on [0, 1]."""
    y = np.asarray(y, dtype=float)
    if np.any((y < 0.0) | (y > 1.0)):
        raise DomainError("h_func needs 0 <= y <= 1")
    if z < 1.0:
        raise DomainError("h_func needs z >= 1")
    root = np.sqrt(np.maximum(0.0, 1.0 - y * y))
    return y * np.exp(z * np.log1p(root))


def h_peak_location(z: float) -> float:
    """argmax of H(., z): y = sqrt(2z+1)/(z+1)."""
    if z < 1.0:
        raise DomainError("z >= 1 required")
    return math.sqrt(2.0 * z + 1.0) / (z + 1.0)


def y_star(z: float) -> float:
    """The point on the rising branch of H with H(y*, z) = 1 = H(1, z)."""
    ymax = h_peak_location(z)
    return bisect(lambda y: float(h_func(y, z)) - 1.0, 1e-300, ymax,
                  xtol=0.0, f_lo=-1.0)


def gamma_star(z: float) -> float:
    """Widest uniform marginal for which the interior amplitude maximum exists."""
    ys = y_star(z)
    return (1.0 - ys) / (1.0 + ys)


def f_func(x: float, gamma: float, z: float) -> float:
    """Mean-influence amplitude map F(x, gamma, z) for the uniform marginal.

    Fixed 64-point Gauss-Legendre in nu, escalated to adaptive quadrature when
    a 128-point evaluation disagrees beyond 1e-9 relative (the integrand has a
    square-root kink when x is at the support edge).
    """
    if not 0.0 < gamma < 1.0:
        raise DomainError("uniform marginal needs 0 < gamma < 1")
    if x < 1.0 + gamma:
        raise DomainError("amplitude must cover the support: x >= 1 + gamma")
    if z < 1.0:
        raise DomainError("z >= 1 required")
    a = float(normalizer_a(z))

    def integrand(nu):
        return np.exp(z * np.log1p(np.sqrt(np.maximum(0.0, 1.0 - (nu / x) ** 2))))

    lo, hi = 1.0 - gamma, 1.0 + gamma
    half = gamma

    def fixed(rule):
        nodes, weights = rule
        nu = 1.0 + half * nodes
        return half * float(np.dot(weights, integrand(nu)))

    coarse, fine = fixed(_GL64), fixed(_GL128)
    integral = fine
    if abs(coarse - fine) > 1e-9 * abs(fine):
        integral, _ = integrate.quad(integrand, lo, hi,
                                     epsabs=1e-13, epsrel=1e-12, limit=200)
    return a / (2.0 * gamma * x) * integral


def x_star(gamma: float, z: float) -> float:
    """Interior maximizer of F(., gamma, z); only exists for gamma < gamma*(z).

    x* is the root of H((1+gamma)/x) - H((1-gamma)/x), negative at the left
    endpoint x = 1 + gamma and positive for large x.
    """
    gs = gamma_star(z)
    if gamma >= gs:
        raise DomainError(
            f"no interior maximum: gamma = {gamma} >= gamma*(z) = {gs:.12g}")
    if not 0.0 < gamma:
        raise DomainError("uniform marginal needs 0 < gamma < 1")

    def diff(x):
        return float(h_func((1.0 + gamma) / x, z) - h_func((1.0 - gamma) / x, z))

    left = 1.0 + gamma
    lo, hi, f_lo, f_hi, capped = expand_bracket(diff, left, 2.0 * left)
    if capped:
        raise DomainError("maximizer search exceeded the amplitude cap")
    return bisect(diff, lo, hi, xtol=0.0, f_lo=f_lo, f_hi=f_hi)


def kappa_threshold_uniform(gamma: float, z: float) -> float:
    """Smallest coupling with a death state under the uniform marginal."""
    if gamma < gamma_star(z):
        return 1.0 / f_func(x_star(gamma, z), gamma, z)
    return 1.0 / f_func(1.0 + gamma, gamma, z)


def kappa_threshold_dirac(nu0: float, z: float) -> float:
    """Smallest coupling with a death state at a single frequency nu0.

    Zero frequency admits a death state for every positive coupling. The
    closed form is |nu0|/a(z) * (z+1)/sqrt(2z+1) * ((z+1)/(2z+1))^z.
    """
    if z < 1.0:
        raise DomainError("z >= 1 required")
    if nu0 == 0.0:
        return 0.0
    # log space: a(z) ~ sqrt(pi z)/2^z underflows near z ~ 1e3 while the
    # product stays O(|nu0|), so the factors must never materialize alone
    log_k = (math.log(abs(nu0)) - float(log_normalizer_a(z))
             + math.log(z + 1.0) - 0.5 * math.log(2.0 * z + 1.0)
             + z * math.log((z + 1.0) / (2.0 * z + 1.0)))
    return math.exp(log_k)


@dataclass(frozen=True)
class DeathStateReport:
    exists: bool
    roots: tuple          # all self-consistent amplitudes found, ascending
    canonical: float      # largest root (nan when none)
    threshold: float
    capped: bool          # search hit the amplitude cap


def solve_sigma_uniform(kappa: float, gamma: float, z: float) -> DeathStateReport:
    """All stationary amplitudes sigma >= 1 + gamma for the uniform marginal.

    F rises to an interior maximum at x* (when gamma < gamma*) and decays to
    zero afterwards, so there are at most two solutions of F = 1/kappa: one on
    each monotone branch. They merge at the threshold coupling.
    """
    if kappa <= 0.0:
        raise DomainError("coupling must be positive")
    threshold = kappa_threshold_uniform(gamma, z)
    target = 1.0 / kappa
    left = 1.0 + gamma
    roots: list[float] = []
    if kappa < threshold:
        return DeathStateReport(False, (), math.nan, threshold, False)

    def shifted(x):
        return f_func(x, gamma, z) - target

    if gamma < gamma_star(z):
        xs = x_star(gamma, z)
        peak = shifted(xs)
        if peak <= 8e-16 * max(1.0, target):
            # threshold coupling: both branch roots have merged at the maximizer
            return DeathStateReport(True, (xs,), xs, threshold, False)
        at_left = shifted(left)
        if at_left == 0.0:
            roots.append(left)
        elif at_left < 0.0:
            roots.append(bisect(shifted, left, xs, xtol=0.0,
                                f_lo=at_left, f_hi=peak))
        # (at_left > 0: the rising branch sits above the target everywhere)
        start = xs
    else:
        start = left
        if shifted(left) <= 0.0:
            # at or below the target already at the support edge
            return DeathStateReport(True, (left,), left, threshold, False)
    lo, hi, f_lo, f_hi, capped = expand_bracket(shifted, start, 2.0 * start,
                                                cap=SIGMA_CAP)
    if capped:
        roots.append(hi)
    else:
        roots.append(bisect(shifted, lo, hi, xtol=0.0, f_lo=f_lo, f_hi=f_hi))
    uniq: list[float] = []
    for r in sorted(roots):
        if not uniq or r - uniq[-1] > 1e-9 * max(1.0, r):
            uniq.append(r)
    return DeathStateReport(True, tuple(uniq), uniq[-1], threshold, capped)


def solve_sigma_dirac(kappa: float, nu0: float, z: float) -> DeathStateReport:
    """Stationary amplitudes for a point frequency marginal at nu0.

    With y = |nu0|/sigma the equation is H(y, z) = |nu0|/(kappa a(z)); the
    one-hump shape gives a root on each side of the peak when the target lies
    between H(1) = 1 and the peak value, and a single root when below 1.
    """
    if kappa <= 0.0:
        raise DomainError("coupling must be positive")
    threshold = kappa_threshold_dirac(nu0, z)
    if nu0 == 0.0:
        sigma = kappa * float(np.exp(log_normalizer_a(z) + z * math.log(2.0)))
        return DeathStateReport(True, (sigma,), sigma, threshold, False)
    if kappa < threshold:
        return DeathStateReport(False, (), math.nan, threshold, False)
    target = abs(nu0) / (kappa * float(normalizer_a(z)))
    ymax = h_peak_location(z)
    peak_val = float(h_func(ymax, z))
    roots = []

    def shifted(y):
        return float(h_func(y, z)) - target

    # rising branch root -> largest amplitude (always present above threshold)
    if shifted(ymax) <= 0.0:
        roots.append(abs(nu0) / ymax)  # tangency at the peak
    else:
        y_lo = bisect(shifted, 1e-300, ymax, xtol=0.0, f_lo=-target)
        roots.append(abs(nu0) / y_lo)
    # falling branch root exists when the target still exceeds H(1) = 1
    if target >= 1.0 and shifted(ymax) > 0.0:
        y_hi = bisect(shifted, ymax, 1.0, xtol=0.0, f_hi=1.0 - target)
        roots.append(abs(nu0) / y_hi)
    uniq: list[float] = []
    for r in sorted(roots):
        if not uniq or r - uniq[-1] > 1e-9 * max(1.0, r):
            uniq.append(r)
    return DeathStateReport(True, tuple(uniq), uniq[-1], threshold, False)


def death_profile(nu, sigma: float):
    """Stationary phase arcsin(nu/sigma) of frequency nu under amplitude sigma."""
    nu = np.asarray(nu, dtype=float)
    if sigma <= 0.0:
        raise DomainError("amplitude must be positive")
    if np.any(np.abs(nu) > sigma):
        raise DomainError("no death profile: |nu| exceeds the amplitude sigma")
    return np.arcsin(nu / sigma)
