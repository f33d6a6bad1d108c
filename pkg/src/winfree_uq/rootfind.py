"""Bracketed bisection used everywhere a closed-form bracket is known.

Plain bisection is deliberate: every root in this package comes with a proved
sign-change interval, and bisection's unconditional convergence is worth more
here than the few saved iterations of a secant hybrid.
"""

from __future__ import annotations

from .errors import NumericsError

MAX_ITER = 200


def bisect(f, lo: float, hi: float, xtol: float = 1e-12, f_lo=None, f_hi=None) -> float:
    """Root of f on [lo, hi]; f(lo) and f(hi) must have opposite signs.

    Runs until the bracket width drops below xtol (absolute), the midpoint
    stops moving in floating point, or MAX_ITER halvings. Pass xtol=0.0 to
    run to the floating-point fixed point.
    """
    if not lo < hi:
        raise NumericsError(f"empty bracket [{lo}, {hi}]")
    flo = f(lo) if f_lo is None else f_lo
    fhi = f(hi) if f_hi is None else f_hi
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0.0) == (fhi > 0.0):
        raise NumericsError(
            f"no sign change on [{lo}, {hi}]: f(lo)={flo:.3e}, f(hi)={fhi:.3e}"
        )
    for _ in range(MAX_ITER):
        mid = lo + 0.5 * (hi - lo)  # 0.5*(lo+hi) overflows near the float ceiling
        if mid <= lo or mid >= hi:  # interval has collapsed to adjacent floats
            break
        fmid = f(mid)
        if fmid == 0.0:
            return mid
        if (fmid > 0.0) == (fhi > 0.0):
            hi, fhi = mid, fmid
        else:
            lo, flo = mid, fmid
        if hi - lo <= xtol:
            break
    return lo + 0.5 * (hi - lo)


def expand_bracket(f, lo: float, hi: float, growth: float = 2.0,
                   cap: float = 1e8):
    """Grow [lo, hi] rightward until f changes sign or hi exceeds cap.

    Returns (lo, hi, f_lo, f_hi, capped). With capped=True no sign change was
    found below the cap and hi sits at the last tried point.
    """
    f_lo = f(lo)
    f_hi = f(hi)
    while (f_lo > 0.0) == (f_hi > 0.0):
        if hi >= cap:
            return lo, hi, f_lo, f_hi, True
        lo, f_lo = hi, f_hi
        hi = min(hi * growth, cap)
        f_hi = f(hi)
    return lo, hi, f_lo, f_hi, False
