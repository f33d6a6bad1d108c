"""Closed-form trapped-regime quantities: trapping levels and thresholds,
phase-locked equilibria, exponential decay rates, sensitivity-envelope
coefficients, and the integer-exponent sufficient conditions.

Everything in here is algebra plus one-dimensional bracketed root finding; no
time integration. The particle module measures, this module predicts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError, NumericsError
from .rootfind import bisect
from .uncertainty import (cos_power, log_normalizer_a, normalizer_a,
                          normalizer_a_prime)


def beta(z):
    """Opening angle of the trapping cone, arccos(z/(z+1))."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 1.0):
        raise DomainError("beta requires z >= 1")
    return np.arccos(z / (z + 1.0))


def gain(c, z):
    """Shared gain g(c, z) = sin(c) (1 + cos c)^z appearing in every threshold."""
    return np.sin(c) * cos_power(c, z)


def c_star(c: float, z: float) -> float:
    """Adjoint trapping level: the point in (0, beta] with the same gain as c.

    g is increasing up to beta and decreasing after, so for c <= beta the
    level is c itself and otherwise the unique solution of g(x) = g(c) on
    (0, beta] is returned (bisection run to the floating-point floor).
    """
    if not 0.0 < c < math.pi:
        raise DomainError("trapping level c must lie in (0, pi)")
    b = float(beta(z))
    if c <= b:
        return c
    target = gain(c, z)
    lo = 1e-300  # g(0+) = 0 < target
    return bisect(lambda x: gain(x, z) - target, lo, b, xtol=0.0,
                  f_lo=-target)


def kappa_threshold(c: float, z: float, v_inf: float) -> float:
    """Coupling strength above which the box B_c traps: ||V||_inf / (a(z) g(c, z))."""
    if v_inf < 0.0:
        raise DomainError("v_inf is a sup-norm and cannot be negative")
    if not 0.0 < c < math.pi:
        raise DomainError("trapping level c must lie in (0, pi)")
    return v_inf / (normalizer_a(z) * gain(c, z))


class EntranceBound(NamedTuple):
    time: float
    kappa_ok: bool  # False when the coupling assumption fails (time is +inf)


def entrance_time_bound(c: float, z: float, kappa: float, v_inf: float) -> EntranceBound:
    """Upper bound (c - c*) / (a(z) kappa g(c, z) - ||V||_inf) on the entrance time."""
    cs = c_star(c, z)
    margin = normalizer_a(z) * kappa * gain(c, z) - v_inf
    if margin <= 0.0:
        return EntranceBound(math.inf, False)
    return EntranceBound((c - cs) / margin, True)


# ---------------------------------------------------------------------------
# phase-locked equilibrium
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Equilibrium:
    s: float                 # root of the scalar consistency function
    phases: np.ndarray       # phi_j = arcsin(-nu_j s), inside [-c*, c*]
    residual: float          # sup-norm residual of the stationarity equations


def equilibrium(nu, kappa: float, c: float, z: float) -> Equilibrium:
    """Phase-locked state of the averaged system under the coupling assumption.

    Solves F(s) = 1 + (kappa/N) s sum_j I_z(arcsin(-nu_j s)) = 0 on
    [-sin(c*)/||nu||_inf, 0]; F(0) = 1 > 0 and the coupling assumption makes
    F negative at the left endpoint, so the bracket is certain.
    """
    nu = np.asarray(nu, dtype=float)
    n = nu.size
    v_inf = float(np.max(np.abs(nu))) if n else 0.0
    if kappa <= kappa_threshold(c, z, v_inf):
        raise DomainError("coupling assumption fails: kappa below the trapping threshold")
    cs = c_star(c, z)
    log_a = float(log_normalizer_a(z))
    if v_inf == 0.0:
        return Equilibrium(0.0, np.zeros(n), 0.0)

    def consistency(s):
        phi = np.arcsin(np.clip(-nu * s, -1.0, 1.0))
        return 1.0 + (kappa / n) * s * np.sum(cos_power(phi, z, log_a))

    lo = -math.sin(cs) / v_inf
    if not math.isfinite(lo):
        raise NumericsError(
            "frequency sup-norm too small to bracket the consistency root")
    s = bisect(consistency, lo, 0.0, xtol=0.0, f_hi=1.0)
    phases = np.arcsin(-nu * s)
    coupling = (kappa / n) * np.sum(cos_power(phases, z, log_a))
    residual = float(np.max(np.abs(nu - coupling * np.sin(phases))))
    return Equilibrium(float(s), phases, residual)


def decay_rate(c: float, z: float, kappa: float) -> float:
    """Contraction exponent C(z) of the total deviation inside B_{c*}.

    C(z) = kappa z a(z) (1 + cos c*)^z (1 - (z+1)/z cos c*); strictly negative
    whenever c* < beta(z).
    """
    cs = c_star(c, z)
    return kappa * z * float(cos_power(cs, z, log_normalizer_a(z))) * (
        1.0 - (z + 1.0) / z * math.cos(cs)
    )


# ---------------------------------------------------------------------------
# sensitivity envelope coefficients
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SensitivityCoefficients:
    c111: float
    c11: float
    c12: float
    c21: float
    c22: float


def sensitivity_coeffs(c: float, z: float, kappa: float, n: int) -> SensitivityCoefficients:
    """Growth/decay coefficients of the exponent-sensitivity bounds.

    c111 switches branch with the sign of cos c; c12 equals the decay rate;
    c21 and c22 carry the sqrt(N) loss of the crude pre-entrance estimate.
    """
    if n < 1:
        raise DomainError("need at least one oscillator")
    if z < 1.0:
        raise DomainError("sensitivity coefficients require z >= 1")
    a = float(normalizer_a(z))
    a_prime = float(normalizer_a_prime(z))
    cs = c_star(c, z)
    cos_c = math.cos(c)
    if cos_c < 0.0:
        c111 = (2.0 ** z) * cos_c
    else:
        c111 = cos_c * float(cos_power(c, z))
    c11 = kappa * a * (-c111 + z / math.sqrt(2.0 * z - 1.0)
                       * ((2.0 * z - 1.0) / z) ** z)
    c12 = decay_rate(c, z, kappa)
    root_n = math.sqrt(n)
    c21 = kappa * abs(a_prime) * 2.0 ** z * root_n \
        + kappa * a * 2.0 ** z * root_n * math.log(2.0)
    c22 = c21 * math.sin(cs)
    return SensitivityCoefficients(c111, c11, c12, c21, c22)


def sensitivity_envelope(t, coeffs: SensitivityCoefficients, tau_e: float):
    """Two-window bound on |d_z Theta(t)| for sensitivities started at zero.

    Before tau_e the crude c11/c21 growth estimate applies; after entrance the
    contraction c12 < 0 pulls the bound toward -c22/c12. The two windows are
    glued continuously at tau_e.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise DomainError("envelope times must be nonnegative")
    if tau_e < 0.0:
        raise DomainError("entrance time must be nonnegative")
    if coeffs.c12 >= 0.0:
        raise DomainError("envelope needs a negative contraction coefficient c12")

    if coeffs.c11 == 0.0:
        def before(s):
            return s * coeffs.c21
    else:
        def before(s):
            return coeffs.c21 / coeffs.c11 * np.expm1(s * coeffs.c11)

    ratio = coeffs.c22 / coeffs.c12
    at_entrance = before(tau_e)
    # evaluate each window only on its own side so the idle branch of the
    # where() cannot overflow for t far from tau_e
    after = (at_entrance + ratio) * np.exp(
        coeffs.c12 * (np.maximum(t, tau_e) - tau_e)) - ratio
    return np.where(t < tau_e, before(np.minimum(t, tau_e)), after)


# ---------------------------------------------------------------------------
# integer-exponent sufficient conditions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Condition:
    holds: bool | None       # None when the data needed to decide is missing
    slack: float             # positive means the binding inequality holds
    detail: str


@dataclass(frozen=True)
class ThresholdReport:
    incoherence: Condition
    death: Condition
    locking: Condition


def deterministic_thresholds(n: int, nu, kappa: float,
                             alpha: float | None = None,
                             theta_in=None) -> ThresholdReport:
    """Verbatim sufficient conditions for the three integer-exponent patterns.

    These are one-directional: a negative slack only means the sufficient
    condition fails, not that the pattern is impossible. alpha is the assumed
    confinement level for death/locking; theta_in (initial phases) sharpens
    the death and locking verdicts when provided.
    """
    if n < 1:
        raise DomainError("exponent n must be a positive integer")
    nu = np.asarray(nu, dtype=float)
    a_n = float(normalizer_a(float(n)))
    two_n = 2.0 ** n

    # (1) incoherence: kappa < min gap / (2^{n+1} a_n), gaps all positive
    if nu.size >= 2:
        gaps = np.abs(nu[:, None] - nu[None, :])[~np.eye(nu.size, dtype=bool)]
        min_gap = float(np.min(gaps))
    else:
        min_gap = math.inf
    inc_slack = min_gap / (2.0 * two_n * a_n) - kappa
    incoherence = Condition(
        holds=(min_gap > 0.0 and 0.0 <= kappa and inc_slack > 0.0),
        slack=inc_slack,
        detail=f"kappa < min gap / (2^{n + 1} a_n) = {min_gap / (2.0 * two_n * a_n):.6g}",
    )

    # (2) oscillator death: beta_n < alpha < pi, phases inside, kappa above threshold
    if alpha is None:
        death = Condition(None, math.nan, "needs a confinement level alpha")
    else:
        b_n = float(beta(float(n)))
        v_inf = float(np.max(np.abs(nu))) if nu.size else 0.0
        thr = kappa_threshold(alpha, float(n), v_inf)
        level_ok = b_n < alpha < math.pi
        inside = True
        if theta_in is not None:
            th = np.asarray(theta_in, dtype=float)
            inside = bool(np.all(np.abs(th) < alpha))
        death = Condition(
            holds=bool(level_ok and inside and kappa > thr),
            slack=float(kappa - thr),
            detail=f"kappa > {thr:.6g}, beta_n = {b_n:.6g} < alpha < pi, phases in (-alpha, alpha)",
        )

    # (3) phase locking at identical frequencies
    same = nu.size > 0 and bool(np.all(nu == nu[0]))
    if alpha is None or not same:
        locking = Condition(None if alpha is None else False, math.nan,
                            "needs alpha and identical frequencies")
    else:
        v = float(abs(nu[0]))
        alpha_bound = (math.pi / (2.0 * two_n * a_n) * n / (n + 1.0) - 1.0 / two_n) \
            / math.sqrt(2.0 * n - 1.0) * ((2.0 * n) / (2.0 * n - 1.0)) ** (n - 1)
        kappa_bound = v / (2.0 * two_n * a_n)
        diam_ok = None
        diam_bound = math.nan
        if theta_in is not None and v > two_n * a_n * kappa:
            th = np.asarray(theta_in, dtype=float)
            diam = float(np.max(th) - np.min(th)) if th.size else 0.0
            rate = two_n * a_n * kappa / (v - two_n * a_n * kappa)
            diam_bound = alpha * math.exp(-rate * (
                alpha * math.sqrt(2.0 * n - 1.0)
                * ((2.0 * n - 1.0) / (2.0 * n)) ** (n - 1)
                + 2.0 / two_n))
            diam_ok = diam < diam_bound
        cond = (0.0 < alpha < alpha_bound) and (0.0 < kappa < kappa_bound)
        if diam_ok is not None:
            cond = cond and diam_ok
        locking = Condition(
            holds=cond,
            slack=min(alpha_bound - alpha, kappa_bound - kappa),
            detail=(f"alpha < {alpha_bound:.6g}, kappa < {kappa_bound:.6g}, "
                    f"initial diameter < {diam_bound:.6g}"),
        )

    return ThresholdReport(incoherence, death, locking)


# ---------------------------------------------------------------------------
# bundled report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrappedRegimeReport:
    z: float
    c: float
    beta: float
    c_star: float
    kappa_threshold: float
    kappa_ok: bool
    entrance_bound: float
    decay_rate: float
    equilibrium: Equilibrium | None


def trapped_regime_report(nu, kappa: float, c: float, z: float) -> TrappedRegimeReport:
    """All closed-form trapped-regime numbers for one (nu, kappa, c, z)."""
    nu = np.asarray(nu, dtype=float)
    v_inf = float(np.max(np.abs(nu))) if nu.size else 0.0
    thr = kappa_threshold(c, z, v_inf)
    bound = entrance_time_bound(c, z, kappa, v_inf)
    eq = None
    if bound.kappa_ok and kappa > thr:
        try:
            eq = equilibrium(nu, kappa, c, z)
        except (DomainError, NumericsError):
            eq = None
    return TrappedRegimeReport(
        z=z, c=c, beta=float(beta(z)), c_star=c_star(c, z),
        kappa_threshold=thr, kappa_ok=bound.kappa_ok,
        entrance_bound=bound.time, decay_rate=decay_rate(c, z, kappa),
        equilibrium=eq,
    )
