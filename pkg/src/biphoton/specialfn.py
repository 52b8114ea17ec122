"""Complex log-Gamma and the regularized Gauss hypergeometric function.

Both functions accept Python scalars or numpy arrays (broadcast together)
and return a complex scalar or array of the broadcast shape.
"""
import math
from fractions import Fraction

import numpy as np

from .errors import ConvergenceError, DomainError, PoleError

__all__ = ["ln_gamma", "gamma", "hyp2f1_regularized"]

_HALF_LN_2PI = 0.5 * np.log(2.0 * np.pi)

# Stirling series coefficients B_2k / (2k (2k - 1)), k = 1..8
_BERNOULLI = [Fraction(1, 6), Fraction(-1, 30), Fraction(1, 42), Fraction(-1, 30),
              Fraction(5, 66), Fraction(-691, 2730), Fraction(7, 6), Fraction(-3617, 510)]
_STIRLING = [float(b / ((2 * k) * (2 * k - 1))) for k, b in enumerate(_BERNOULLI, start=1)]

# real part the argument is shifted to before the asymptotic series is used
_SHIFT_TO = 15.0

MAX_TERMS = 10_000
_EPS = np.finfo(float).eps
_TINY = np.finfo(float).tiny
SERIES_TOL = 1e-14
DIRECT_RADIUS = 0.5
# series results with a larger roundoff estimate are recomputed by continuation
CONDITION_TOL = 1e-13
START_RADIUS = 0.125
STEP_FRACTION = 0.25
MIN_START_RADIUS = 1e-3


def _pole_mask(z):
    near = np.abs(z - np.round(z.real)) <= 8 * np.finfo(float).eps * np.maximum(1.0, np.abs(z))
    return near & (np.round(z.real) <= 0)


def ln_gamma(z):
    """Principal branch of log Gamma(z) for complex z.

    Upward recurrence moves the argument to ``Re z >= 15`` where an
    8-term Stirling series is accurate to double precision. The branch cut
    lies along the negative real axis, matching the usual ``loggamma``
    convention.

    Raises
    ------
    PoleError
        If ``z`` is within rounding of 0, -1, -2, ...
    """
    z = np.asarray(z, dtype=complex)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    if np.any(_pole_mask(z)):
        raise PoleError(f"ln_gamma has a pole at {z[_pole_mask(z)][0]}")

    shift = np.maximum(0, np.ceil(_SHIFT_TO - z.real)).astype(int)
    correction = np.zeros_like(z)
    w = z.copy()
    for k in range(int(shift.max(initial=0))):
        active = shift > k
        correction[active] += np.log(w[active])
        w[active] += 1.0

    inv = 1.0 / w
    inv2 = inv * inv
    series = np.zeros_like(w)
    for coeff in reversed(_STIRLING):
        series = series * inv2 + coeff
    series *= inv
    out = (w - 0.5) * np.log(w) - w + _HALF_LN_2PI + series - correction
    return out[0] if scalar else out


def gamma(z):
    """Gamma(z) as ``exp(ln_gamma(z))``."""
    return np.exp(ln_gamma(z))


def _is_nonpositive_integer(c):
    return (c.imag == 0) & (c.real <= 0) & (c.real == np.round(c.real))


def _pole_distance(x):
    """Distance from x to the nearest non-positive integer."""
    return np.abs(x - np.minimum(np.round(x.real), 0.0))


def _rgamma(c):
    """1/Gamma(c), exactly zero at the poles of Gamma."""
    out = np.zeros_like(c)
    ok = ~_is_nonpositive_integer(c)
    near = ok & _pole_mask(c)
    far = ok & ~near
    if np.any(far):
        out[far] = np.exp(-ln_gamma(c[far]))
    if np.any(near):
        # reflection keeps 1/Gamma finite and accurate right next to a pole
        cn = c[near]
        out[near] = np.sin(np.pi * cn) * np.exp(ln_gamma(1 - cn)) / np.pi
    return out


def _series(a, b, c, z, rgamma_c=None, tol=SERIES_TOL):
    """Direct Gauss series of the regularized function; arrays share one shape.

    For ``c`` in {0, -1, ...} the sum starts at ``n0 = 1 - c`` whose leading
    term is ``(a)_n0 (b)_n0 z**n0 / n0!`` (the Gamma(c + n0) = 1 factor).
    ``rgamma_c`` overrides 1/Gamma(c); the arithmetic follows the dtype of
    the inputs (``clongdouble`` works).
    """
    eps = np.finfo(z.dtype).eps
    n0 = np.where(_is_nonpositive_integer(c), 1 - np.round(c.real), 0).astype(int)
    term = (_rgamma(c.astype(complex)) if rgamma_c is None else rgamma_c).astype(z.dtype)
    if np.any(n0 > 0):
        lead = np.ones_like(z)
        for j in range(int(n0.max())):
            act = n0 > j
            lead[act] *= (a[act] + j) * (b[act] + j) * z[act] / (j + 1)
        term = np.where(n0 > 0, lead, term)

    total = term.copy()
    magnitude = np.abs(term)
    n = n0.astype(float)
    done = term == 0
    quiet = np.zeros(z.shape, dtype=int)
    err = np.full(z.shape, np.inf)
    for _ in range(MAX_TERMS):
        if np.all(done):
            break
        act = ~done
        num = (a[act] + n[act]) * (b[act] + n[act])
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            # complex division by a subnormal c would turn 0 into nan
            ratio = np.where(num == 0, 0, num / ((n[act] + 1) * (c[act] + n[act])))
        term[act] = term[act] * ratio * z[act]
        total[act] += term[act]
        magnitude[act] += np.abs(term[act])
        n[act] += 1
        scale = np.maximum(np.abs(total[act]), np.finfo(float).tiny)
        rel = np.abs(term[act]) / scale
        # cancellation between large terms sets a roundoff floor
        err[act] = np.maximum(rel, eps * magnitude[act] / scale)
        # the ratio test guards against stopping on an accidental small term
        small = (rel <= tol) & (np.abs(ratio * z[act]) < 1.0)
        quiet[act] = np.where(small, quiet[act] + 1, 0)
        stop = quiet[act] >= 2
        terminated = term[act] == 0
        idx = np.flatnonzero(act)
        done[idx[stop | terminated]] = True
        err[idx[terminated]] = (eps * magnitude[act] / scale)[terminated]
    if not np.all(done):
        worst = float(np.max(err[~done]))
        raise ConvergenceError(
            f"hypergeometric series did not converge in {MAX_TERMS} terms "
            f"(attained relative error {worst:.2e})", attained=worst)
    err[done & ~np.isfinite(err)] = 0.0
    return total, err


def _step_matrix(a, b, c, pos, step, tol=SERIES_TOL):
    """Transfer matrix of ``(F, F')`` over one Taylor step of the ODE.

    ``z(1-z) F'' + [c - (a+b+1) z] F' - ab F = 0`` is expanded about
    ``pos``; both columns (initial data ``(1, 0)`` and ``(0, 1)``) are
    summed together. Also returns the elementwise sum of term magnitudes,
    which sets the roundoff of the step.
    """
    dt = np.result_type(pos, step)
    p0, p1 = pos * (1 - pos), 1 - 2 * pos
    q0, q1 = c - (a + b + 1) * pos, -(a + b + 1)
    c_prev = np.array([1, 0], dtype=dt)
    c_cur = np.array([0, 1], dtype=dt)
    T = np.array([c_prev + c_cur * step, c_cur], dtype=dt)
    mag = np.abs(T)
    tpow = step
    quiet = 0
    for n in range(MAX_TERMS):
        c_next = -((p1 * n + q0) * (n + 1) * c_cur
                   + (-n * (n - 1) + q1 * n - a * b) * c_prev) / (p0 * (n + 2) * (n + 1))
        c_prev, c_cur = c_cur, c_next
        d_term = (n + 2) * c_cur * tpow
        tpow = tpow * step
        term = c_cur * tpow
        T[0] += term
        T[1] += d_term
        mag[0] += np.abs(term)
        mag[1] += np.abs(d_term)
        small = np.all(np.abs(term) <= tol * np.maximum(mag[0], _TINY)) and \
            np.all(np.abs(d_term) <= tol * np.maximum(mag[1], _TINY))
        quiet = quiet + 1 if small else 0
        if quiet >= 2:
            return T, mag
    raise ConvergenceError("hypergeometric continuation step did not converge", attained=math.inf)


def _continue(a, b, c, z):
    """Regularized 2F1 at one point by Taylor stepping along the ODE.

    Starts from the direct series at ``z0 = r * z/|z|``, with ``r`` shrunk
    from START_RADIUS until the series there is free of cancellation, and
    walks the straight ray to ``z``. Each step covers STEP_FRACTION of the
    distance to the nearest singular point (0 or 1), so the local series
    converge at least like ``4**-n``.

    The error estimate propagates the starting error and each step's
    roundoff through the step transfer matrices, so growth of the second
    ODE solution along the path is accounted for. Returns
    ``(value, relative_error_estimate)``.
    """
    # extended precision (where the platform has it) absorbs the growth of
    # the second solution; the start values share one 1/Gamma(c) factor so
    # that their ratio carries no double-precision rounding
    X = np.clongdouble
    eps = np.finfo(np.longdouble).eps
    tol = max(eps, 1e-19)
    rg0 = _rgamma(np.array([c]))[0]
    if rg0 != 0 and c != 0:
        rg1 = X(rg0) / X(c)
    else:
        rg1 = X(_rgamma(np.array([c + 1]))[0])
    a_, b_, c_ = X(a), X(b), X(c)
    r = min(START_RADIUS, abs(z))
    while True:
        z0 = X(r) * X(z) / X(abs(z))
        vals, errs = _series(np.array([a_, a_ + 1]), np.array([b_, b_ + 1]), np.array([c_, c_ + 1]),
                             np.array([z0, z0]), rgamma_c=np.array([X(rg0), rg1]), tol=tol)
        if max(errs) <= CONDITION_TOL * 1e-3 or r <= MIN_START_RADIUS:
            break
        r /= 2
    y = np.array([vals[0], a_ * b_ * vals[1]])
    e = np.abs(y) * errs.astype(np.longdouble)
    pos, target = z0, X(z)
    for _ in range(MAX_TERMS):
        remaining = target - pos
        if remaining == 0:
            break
        radius = min(abs(pos), abs(1 - pos))
        reach = STEP_FRACTION * radius
        step = remaining if abs(remaining) <= reach else remaining / abs(remaining) * reach
        T, mag = _step_matrix(a_, b_, c_, pos, step, tol)
        y = T @ y
        e = np.abs(T) @ e + eps * (mag @ np.abs(y) + np.abs(y)) + tol * np.abs(y)
        pos = pos + step
    else:
        raise ConvergenceError("hypergeometric continuation took too many steps", attained=math.inf)
    # final rounding to double
    return complex(y[0]), float(e[0] / max(abs(y[0]), _TINY)) + _EPS


def _candidates(a, b, c, z):
    """Alternative evaluations of one point as lazily computed ``(value, err)``."""
    one = (lambda x: np.array([x]))
    euler = (1 - z) ** (c - a - b)

    def series(x, y):
        v, e = _series(one(x), one(y), one(c), one(z))
        return v[0], e[0]

    yield lambda: series(a, b)
    yield lambda: (lambda v, e: (v * euler, e))(*series(c - a, c - b))
    if abs(1 - z) <= DIRECT_RADIUS:
        yield lambda: _reflected(a, b, c, z)
    yield lambda: _continue(a, b, c, z)
    yield lambda: (lambda v, e: (v * euler, e))(*_continue(c - a, c - b, c, z))


def _reflected(a, b, c, z):
    """Connection formula about z = 1 (regularized form).

    ``pi / sin(pi s) [F~(a, b; 1-s; 1-z) / (G(c-a) G(c-b))
    - (1-z)**s F~(c-a, c-b; 1+s; 1-z) / (G(a) G(b))]`` with ``s = c-a-b``.
    Near-integer ``s`` makes the two parts cancel; the error estimate
    carries that cancellation. Within 1e-3 of an integer the route is
    refused.
    """
    s = c - a - b
    # at integer s the formula needs a limit (log terms) that is not implemented
    if abs(s - round(s.real)) < 1e-3:
        raise ConvergenceError("connection formula is singular for integer c - a - b", attained=math.inf)
    sin = np.sin(np.pi * s)
    one = (lambda x: np.array([x]))
    w = 1 - z
    v, e = _series(np.array([a, c - a]), np.array([b, c - b]), np.array([1 - s, 1 + s]), np.array([w, w]))
    g = _rgamma(np.array([c - a, c - b, a, b]))
    first = v[0] * g[0] * g[1]
    second = w ** s * v[1] * g[2] * g[3]
    value = np.pi / sin * (first - second)
    scale = abs(np.pi / sin) * (abs(first) + abs(second))
    err = (scale * (max(e) + 8 * _EPS * (1 + abs(s) * np.pi)) + abs(value) * 4 * _EPS) / max(abs(value), _TINY)
    return value, float(err)


def _best_candidate(a, b, c, z, current=None):
    best = current
    for make in _candidates(a, b, c, z):
        if best is not None and best[1] <= CONDITION_TOL:
            break
        try:
            v, e = make()
        except ConvergenceError:
            continue
        if best is None or e < best[1]:
            best = (v, e)
    if best is None:
        raise ConvergenceError("no evaluation route for 2F1 converged", attained=math.inf)
    return best


def hyp2f1_regularized(a, b, c, z, full_output=False):
    """Regularized Gauss hypergeometric function 2F1(a, b; c; z) / Gamma(c).

    The function is entire in ``c``; for ``c`` a non-positive integer the
    analytic limit is used rather than a division by Gamma(c).

    Evaluation uses the power series for ``|z| <= 0.5`` and the Pfaff
    transformation ``z -> z/(z - 1)`` where that lands inside the same
    radius. The remaining points, and points where the series loses digits
    to cancellation (large parameters), take the most accurate of: the
    direct series, the Euler-transformed series, and analytic continuation
    along the hypergeometric ODE (plain or Euler-transformed), judged by
    their propagated error estimates.

    Parameters
    ----------
    a, b, c, z : complex or array_like
        Broadcast against each other.
    full_output : bool
        Also return the attained relative error estimate per element.

    Raises
    ------
    DomainError
        If ``|z| >= 1``.
    ConvergenceError
        If the series misses its tolerance within the term cap.
    """
    a, b, c, z = np.broadcast_arrays(*(np.asarray(x, dtype=complex) for x in (a, b, c, z)))
    shape = z.shape
    a, b, c, z = (np.atleast_1d(x).ravel().copy() for x in (a, b, c, z))
    if not np.all(np.isfinite(z)) or np.any(np.abs(z) >= 1.0):
        raise DomainError("hyp2f1_regularized requires |z| < 1")

    # for |c| below ~1e-290 the ratio (a)(b)/c overflows; there
    # F~(a, b; c; z) = c + F~(a, b; 0; z) + O(c) exactly in double precision
    offset = np.where((np.abs(c) < 1e-290) & (c != 0), c, 0)
    c = c - offset

    # at c = -m the leading factor (a)_{m+1} (b)_{m+1} is pulled out exactly;
    # the Pfaff form would otherwise round c - b onto a pole and lose it
    at_pole = _is_nonpositive_integer(c)
    if np.any(at_pole):
        n0 = 1 - np.round(c[at_pole].real)
        ap, bp, zp = a[at_pole], b[at_pole], z[at_pole]
        lead = np.ones_like(zp)
        for j in range(int(n0.max())):
            act = n0 > j
            lead[act] *= (ap[act] + j) * (bp[act] + j) * zp[act]
        shifted, shifted_err = hyp2f1_regularized(ap + n0, bp + n0, 1 + n0, zp, full_output=True)
        a, b, c, z = (x[~at_pole] for x in (a, b, c, z))
        inner = hyp2f1_regularized(a, b, c, z, full_output=True) if z.size else (z, np.zeros(0))
        value = np.empty(at_pole.shape, dtype=complex)
        err = np.empty(at_pole.shape)
        value[at_pole], err[at_pole] = lead * shifted, shifted_err
        value[~at_pole], err[~at_pole] = inner
        value = value + offset
        if shape == ():
            value, err = value[0], err[0]
        else:
            value, err = value.reshape(shape), err.reshape(shape)
        return (value, err) if full_output else value

    # canonical (a, b) order makes the a <-> b symmetry exact
    swap = (a.real > b.real) | ((a.real == b.real) & (a.imag > b.imag))
    a, b = np.where(swap, b, a), np.where(swap, a, b)

    with np.errstate(divide="ignore", invalid="ignore"):
        w = z / (z - 1.0)
    direct = np.abs(z) <= DIRECT_RADIUS
    pfaff = ~direct & (np.abs(w) <= DIRECT_RADIUS)
    hard = ~direct & ~pfaff
    value = np.zeros_like(z)
    err = np.zeros(z.shape)
    easy = ~hard
    if np.any(easy):
        # Pfaff on the parameter farther from {0, -1, ...}: c - x would
        # round away a small offset that decides whether the series terminates
        keep_b = _pole_distance(b) < _pole_distance(a)
        first = np.where(pfaff & keep_b, b, a)
        other = np.where(pfaff & keep_b, a, b)
        arg = np.where(pfaff, w, z)[easy]
        second = np.where(pfaff, c - other, other)[easy]
        value[easy], err[easy] = _series(first[easy], second, c[easy], arg)
        value[pfaff] *= (1.0 - z[pfaff]) ** (-first[pfaff])
    # large parameters make the series cancel and the ODE path can amplify
    # a growing second solution; the Euler transform swaps which solution
    # is recessive. Keep whichever candidate has the smallest estimate.
    retry = hard | (err > CONDITION_TOL)
    for k in np.flatnonzero(retry):
        value[k], err[k] = _best_candidate(a[k], b[k], c[k], z[k],
                                           None if hard[k] else (value[k], err[k]))
    value = value + offset
    if shape == ():
        value, err = value[0], err[0]
    else:
        value, err = value.reshape(shape), err.reshape(shape)
    return (value, err) if full_output else value
