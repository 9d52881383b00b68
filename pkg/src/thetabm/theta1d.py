"""One-dimensional rescaled theta function with first and second derivatives.

All functions use the real-exponential convention

.. math::

    \\tilde\\theta(z|\\Omega) = \\sum_{n\\in\\mathbb{Z}} e^{-\\Omega n^2/2 + n z},

with nome ``q = exp(-Omega/2)``. The summands are paired (``n`` and ``-n``)
and generated by three coupled recurrences::

    v_n  = 2 q^{n^2} cosh(n z)         (value)
    w_n  = 2 n q^{n^2} sinh(n z)       (first derivative)
    xi_n = 2 n^2 q^{n^2} cosh(n z)     (second derivative)

The trigonometric form with ``tau = i Omega / (2 pi)`` and
``z_trig = z / (2 pi i)`` maps ``cos(2 pi z_trig)`` onto ``cosh(z)``; the
derivatives with respect to ``z_trig`` are ``2 pi i`` and ``-4 pi^2`` times
ours.

Truncation: for ``Omega >= OMEGA_CERTIFIED`` the number of terms comes from
the closed-form bound ``3 q^{(B-1)^2} <= eps``, valid for all three partial
sums once the argument is reduced to ``|z| <= Omega/2``. Below the threshold
the sum stops adaptively.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numba
import numpy as np

__all__ = [
    "DEFAULT_EPS",
    "OMEGA_CERTIFIED",
    "OMEGA_CERTIFIED_GRAD",
    "ThetaArgs",
    "ThetaEval",
    "RecurrenceState",
    "bound_B",
    "reduce_argument",
    "recurrence_step",
    "partial_sums",
    "theta_tilde",
    "theta_tilde_batch",
]

DEFAULT_EPS = 1e-14

#: Smallest Omega at which the value, gradient and Hessian bounds all hold.
OMEGA_CERTIFIED = 2.0 * math.pi * 0.882
#: Smallest Omega at which the gradient bound holds.
OMEGA_CERTIFIED_GRAD = 2.0 * math.pi * 0.742

MAX_TERMS = 50_000


@dataclass(frozen=True)
class ThetaArgs:
    """Validated arguments of the 1-D kernel."""

    z: float
    omega: float
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        for name in ("z", "omega", "eps"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite, got {getattr(self, name)!r}")
        if self.omega <= 0.0:
            raise ValueError(f"omega must be positive, got {self.omega!r}")
        if not 0.0 < self.eps < 1.0:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps!r}")


class ThetaEval(NamedTuple):
    """Log-space result: ``log theta``, ``d/dz log theta``, ``d2/dz2 log theta``."""

    log_value: float
    dlog: float
    d2log: float

    @property
    def grad_ratio(self) -> float:
        """theta' / theta."""
        return self.dlog

    @property
    def hess_ratio(self) -> float:
        """theta'' / theta."""
        return self.d2log + self.dlog**2


def bound_B(eps: float, omega: float) -> int:
    """Smallest ``B >= 1`` with ``3 q^{(B-1)^2} <= eps``, ``q = exp(-omega/2)``.

    The partial sums run over ``0 < n < B``. The bound is only certified for
    ``omega >= OMEGA_CERTIFIED``; callers below that threshold should sum
    adaptively instead.
    """
    if omega <= 0.0:
        raise ValueError(f"omega must be positive, got {omega!r}")
    if eps >= 3.0:
        return 1
    # 3 exp(-omega m^2 / 2) <= eps  <=>  m^2 >= 2 ln(3/eps) / omega
    m = math.ceil(math.sqrt(2.0 * math.log(3.0 / eps) / omega) - 1e-12)
    B = max(m, 0) + 1
    # guard the ceil against rounding in either direction
    while B > 1 and 3.0 * math.exp(-0.5 * omega * (B - 2) ** 2) <= eps:
        B -= 1
    while 3.0 * math.exp(-0.5 * omega * (B - 1) ** 2) > eps:
        B += 1
    return B


def reduce_argument(z, omega):
    """Fold ``z`` into ``|z_r| <= omega/2`` using parity and quasi-periodicity.

    Returns ``(z_r, k, log_prefactor, sign)`` with ``z = sign * (z_r + k*omega)``
    and ``theta(z) = exp(log_prefactor) * theta(z_r)``. Works elementwise on
    arrays.
    """
    z = np.asarray(z, dtype=float)
    omega = np.asarray(omega, dtype=float)
    sign = np.where(z < 0.0, -1.0, 1.0)
    az = np.abs(z)
    k = np.floor(az / omega + 0.5)
    z_r = az - k * omega
    log_prefactor = k * z_r + 0.5 * k * k * omega
    if z_r.ndim == 0:
        return float(z_r), int(k), float(log_prefactor), int(sign)
    return z_r, k.astype(np.int64), log_prefactor, sign


@dataclass
class RecurrenceState:
    """Two consecutive summands of each sequence plus the powers of q needed next.

    ``v1`` is the first value summand ``q * 2 cosh(z)``, which stands in for
    the ``2 cos(2 pi z) q`` factor of the trigonometric recurrences.
    """

    n: int
    v_prev: np.ndarray
    v: np.ndarray
    w_prev: np.ndarray
    w: np.ndarray
    xi_prev: np.ndarray
    xi: np.ndarray
    v1: np.ndarray
    q2: np.ndarray  # q^2
    q2n: np.ndarray  # q^(2n)

    @classmethod
    def start(cls, z_r, omega) -> "RecurrenceState":
        """State at ``n = 1``; the ``n = 0`` slots hold ``v_0 = 2`` and ``w_0 = xi_0 = 0``."""
        z_r = np.asarray(z_r, dtype=float)
        half = -0.5 * np.asarray(omega, dtype=float)
        ep = np.exp(half + z_r)
        em = np.exp(half - z_r)
        v1 = ep + em
        w1 = ep - em
        zeros = np.zeros_like(v1)
        q2 = np.exp(2.0 * half) + zeros
        return cls(1, 2.0 + zeros, v1, zeros, w1, zeros, v1.copy(), v1, q2, q2)


def recurrence_step(state: RecurrenceState) -> RecurrenceState:
    """Advance ``v``, ``w`` and ``xi`` from index ``n`` to ``n + 1``."""
    n = state.n
    a = state.q2n * state.v1  # q^(2n+1) * 2cosh(z)
    q4n = state.q2n * state.q2n
    v_next = a * state.v - q4n * state.v_prev
    if n == 1:
        # w_0 / 0 is absent (sinh(0) = 0); xi_0 / 0^2 is the n = 0 cosine term, 2.
        w_next = 2.0 * a * state.w
        xi_next = 4.0 * (a * state.xi - 2.0 * q4n)
    else:
        w_next = (n + 1) * (a * state.w / n - q4n * state.w_prev / (n - 1))
        xi_next = (n + 1) ** 2 * (a * state.xi / n**2 - q4n * state.xi_prev / (n - 1) ** 2)
    return RecurrenceState(
        n + 1, state.v, v_next, state.w, w_next, state.xi, xi_next,
        state.v1, state.q2, state.q2n * state.q2,
    )


def partial_sums(z_r, omega, B: int):
    """``(S_B, U_B, V_B)`` over ``0 < n < B`` in the real convention.

    ``S_B`` includes the constant term 1. No argument reduction is applied.
    """
    z_r = np.asarray(z_r, dtype=float)
    S = np.ones_like(z_r)
    U = np.zeros_like(z_r)
    V = np.zeros_like(z_r)
    if B <= 1:
        return S, U, V
    st = RecurrenceState.start(z_r, omega)
    while True:
        S = S + st.v
        U = U + st.w
        V = V + st.xi
        if st.n + 1 >= B:
            return S, U, V
        st = recurrence_step(st)


@numba.njit(cache=True)
def _truncation(om, eps):
    """Certified ``B`` for ``om``, or ``-1`` to request adaptive stopping."""
    if om < OMEGA_CERTIFIED:
        return -1
    B = int(math.ceil(math.sqrt(2.0 * math.log(3.0 / eps) / om) - 1e-12)) + 1
    if B < 1:
        B = 1
    while B > 1 and 3.0 * math.exp(-0.5 * om * (B - 2) ** 2) <= eps:
        B -= 1
    while 3.0 * math.exp(-0.5 * om * (B - 1) ** 2) > eps:
        B += 1
    return B


@numba.njit(cache=True)
def _one(z, om, eps, B, out, j):
    """Sum one element into ``out[0..2, j]``; returns False if the series did not settle."""
    az = abs(z)
    sgn = -1.0 if z < 0.0 else 1.0
    k = math.floor(az / om + 0.5)
    zr = az - k * om
    certified = B >= 0
    half = -0.5 * om
    ep = math.exp(half + zr)
    em = math.exp(half - zr)
    v1 = ep + em
    S = 1.0
    U = 0.0
    V = 0.0
    if B != 1:
        q2 = math.exp(-om)
        q2n = q2
        vp, v, wp, w, xp, x = 2.0, v1, 0.0, ep - em, 0.0, v1
        n = 1
        small = 0
        extra = -1
        while True:
            S += v
            U += w
            V += x
            if certified:
                if n + 1 >= B:
                    break
            elif extra < 0:
                big = max(abs(v), abs(w), abs(x))
                small = small + 1 if big < eps * S else 0
                if small >= 3:
                    extra = 2
            else:
                extra -= 1
                if extra == 0:
                    break
            if n >= MAX_TERMS:
                return False
            a = q2n * v1  # q^(2n+1) * 2cosh(z)
            q4n = q2n * q2n
            vn = a * v - q4n * vp
            if n == 1:
                wn = 2.0 * a * w
                xn = 4.0 * (a * x - 2.0 * q4n)
            else:
                wn = (n + 1) * (a * w / n - q4n * wp / (n - 1))
                xn = (n + 1) ** 2 * (a * x / n**2 - q4n * xp / (n - 1) ** 2)
            vp, v, wp, w, xp, x = v, vn, w, wn, x, xn
            q2n *= q2
            n += 1
    g = U / S
    out[0, j] = math.log(S) + k * zr + 0.5 * k * k * om
    out[1, j] = sgn * (k + g)
    out[2, j] = V / S - g * g
    return True


@numba.njit(cache=True)
def _kernel(z, omega, eps, out):
    """Elementwise over flat ``z``/``omega``; returns the first failing index or -1."""
    for i in range(z.size):
        if not _one(z[i], omega[i], eps, _truncation(omega[i], eps), out, i):
            return i
    return -1


@numba.njit(cache=True)
def _kernel_columns(Z, omega, eps, out):
    """``Z`` is (M, k) with one ``omega`` per column; ``out`` is (3, M*k) row-major."""
    M, k = Z.shape
    for j in range(k):
        B = _truncation(omega[j], eps)
        for m in range(M):
            if not _one(Z[m, j], omega[j], eps, B, out, m * k + j):
                return j
    return -1


def _columns_unchecked(Z, omega, eps):
    """Kernel over the columns of a finite ``(M, k)`` array with positive ``omega``; no validation."""
    M, k = Z.shape
    out = np.empty((3, M * k))
    bad = _kernel_columns(np.ascontiguousarray(Z, dtype=float), np.ascontiguousarray(omega, dtype=float), eps, out)
    if bad >= 0:
        raise ValueError(f"theta series did not converge within {MAX_TERMS} terms (omega={omega[bad]:.3g})")
    return out.reshape(3, M, k)


def theta_tilde_batch(z, omega, eps: float = DEFAULT_EPS):
    """Vectorized kernel.

    Each element is reduced to ``|z| <= omega/2`` and summed with its own
    truncation: the certified bound when ``omega >= OMEGA_CERTIFIED``,
    adaptive stopping otherwise.

    Parameters
    ----------
    z : array_like
        Real arguments.
    omega : array_like
        Positive coefficients, broadcastable against ``z``.
    eps : float
        Absolute tolerance on the reduced (``|z| <= omega/2``) raw values.

    Returns
    -------
    log_value, dlog, d2log : ndarray
        Same broadcast shape as the inputs.
    """
    z, omega = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(omega, dtype=float))
    if not (np.all(np.isfinite(z)) and np.all(np.isfinite(omega))):
        raise ValueError("theta arguments must be finite")
    if np.any(omega <= 0.0):
        raise ValueError("omega must be positive")
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps!r}")
    shape = z.shape
    zf = np.ascontiguousarray(z).ravel()
    of = np.ascontiguousarray(omega).ravel()
    out = np.empty((3, zf.size))
    bad = _kernel(zf, of, float(eps), out)
    if bad >= 0:
        raise ValueError(f"theta series did not converge within {MAX_TERMS} terms (omega={of[bad]:.3g})")
    return out[0].reshape(shape), out[1].reshape(shape), out[2].reshape(shape)


def theta_tilde(z: float, omega: float, eps: float = DEFAULT_EPS) -> ThetaEval:
    """Evaluate ``log theta(z|omega)`` and its first two log-derivatives.

    Examples
    --------
    >>> r = theta_tilde(0.0, 200.0)
    >>> round(r.log_value, 12), r.dlog
    (0.0, 0.0)
    """
    args = ThetaArgs(float(z), float(omega), float(eps))
    lv, d1, d2 = theta_tilde_batch(args.z, args.omega, args.eps)
    return ThetaEval(float(lv), float(d1), float(d2))
