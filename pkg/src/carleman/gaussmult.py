"""Gaussian Fourier multipliers in the time variable.

``Q u = exp(-eps |D_t|^2 / (2 tau)) u`` with ``D_t = -i d/dt``, applied either
spectrally (zero-padded FFT) or as a convolution with the heat kernel
``sqrt(tau / (2 pi eps)) exp(-tau s^2 / (2 eps))``.  Signals are sampled on a
uniform time grid; extra axes are carried along.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

__all__ = [
    "TimeSignal", "apply_multiplier", "heat_kernel", "commutation_residual",
    "decay_ratio", "support_distance", "hf_imaginary_axis", "MultiplierWarning",
]

TAPER_FRACTION = 0.05
TRUNCATE_SIGMAS = 12.0


class MultiplierWarning(UserWarning):
    """The input does not decay at the edges of its window."""


@dataclass
class TimeSignal:
    """Samples ``values[k, ...]`` at ``t0 + k * ht``."""

    values: np.ndarray
    ht: float
    t0: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, float)
        if self.values.ndim < 1 or self.values.shape[0] < 4:
            raise ValueError("need at least 4 time samples")
        if not self.ht > 0:
            raise ValueError("ht must be positive")

    @classmethod
    def sample(cls, fun, t_min: float, t_max: float, n: int) -> "TimeSignal":
        t = np.linspace(t_min, t_max, n)
        return cls(fun(t), t[1] - t[0], t_min)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.ht * np.arange(self.n)

    def with_values(self, values) -> "TimeSignal":
        return TimeSignal(values, self.ht, self.t0)

    def norm(self) -> float:
        return float(np.sqrt(self.ht * np.sum(self.values ** 2)))


def _check_edges(u: TimeSignal):
    total = np.sum(u.values ** 2)
    if total == 0:
        return
    m = max(1, int(round(0.05 * u.n)))
    edge = np.sum(u.values[:m] ** 2) + np.sum(u.values[-m:] ** 2)
    if edge > 1e-8 * total:
        warnings.warn("signal energy in the outer 10% of the window exceeds 1e-8 of the total; "
                      "the multiplier sees a truncated signal", MultiplierWarning, stacklevel=3)


def _taper(m: int) -> np.ndarray:
    w = np.ones(m)
    k = max(1, int(round(TAPER_FRACTION * m)))
    ramp = 0.5 * (1.0 - np.cos(np.pi * (np.arange(k) + 0.5) / k))
    w[:k] = ramp
    w[-k:] = ramp[::-1]
    return w


def heat_kernel(s, eps: float, tau: float):
    """``sqrt(tau / (2 pi eps)) exp(-tau s^2 / (2 eps))``."""
    s = np.asarray(s, float)
    return np.sqrt(tau / (2.0 * np.pi * eps)) * np.exp(-tau * s * s / (2.0 * eps))


def apply_multiplier(u: TimeSignal, eps: float, tau: float, mode: str = "spectral",
                     pad: int = 2, truncate: bool = True, check: bool = True) -> TimeSignal:
    """Apply ``exp(-eps |D_t|^2 / (2 tau))`` along axis 0.

    Parameters
    ----------
    u : TimeSignal
    eps, tau : float
        Positive parameters; the kernel has variance ``eps / tau``.
    mode : {"spectral", "convolution"}
        ``"spectral"`` multiplies the FFT of the signal, zero-padded to
        ``pad`` times its length, by ``exp(-eps w^2 / (2 tau))``; the padded
        window gets a raised-cosine taper on its outer 5%.  ``"convolution"``
        convolves with the sampled heat kernel, cut at 12 standard deviations
        unless ``truncate`` is false.
    """
    if not (eps > 0 and tau > 0):
        raise ValueError("eps and tau must be positive")
    if check:
        _check_edges(u)
    n = u.n
    vals = u.values
    if mode == "spectral":
        if pad < 2:
            raise ValueError("padding factor must be at least 2")
        m = pad * n
        off = (m - n) // 2
        buf = np.zeros((m,) + vals.shape[1:])
        buf[off:off + n] = vals
        buf *= _taper(m).reshape((m,) + (1,) * (vals.ndim - 1))
        w = 2.0 * np.pi * np.fft.rfftfreq(m, u.ht)
        mult = np.exp(-eps * w * w / (2.0 * tau)).reshape((-1,) + (1,) * (vals.ndim - 1))
        out = np.fft.irfft(np.fft.rfft(buf, axis=0) * mult, n=m, axis=0)
        return u.with_values(out[off:off + n])
    if mode == "convolution":
        sigma = np.sqrt(eps / tau)
        half = n - 1
        if truncate:
            half = min(half, int(np.ceil(TRUNCATE_SIGMAS * sigma / u.ht)))
        s = u.ht * np.arange(-half, half + 1)
        ker = heat_kernel(s, eps, tau) * u.ht
        ker = ker.reshape((-1,) + (1,) * (vals.ndim - 1))
        full = fftconvolve(vals, ker, mode="full", axes=0) if vals.ndim > 1 else np.convolve(vals, ker.ravel())
        return u.with_values(full[half:half + n])
    raise ValueError("mode must be 'spectral' or 'convolution'")


def _ddt(u: TimeSignal) -> np.ndarray:
    """Spectral time derivative on the zero-padded window."""
    n = u.n
    m = 2 * n
    buf = np.zeros((m,) + u.values.shape[1:])
    buf[:n] = u.values
    w = 2.0 * np.pi * np.fft.rfftfreq(m, u.ht)
    w = w.reshape((-1,) + (1,) * (u.values.ndim - 1))
    return np.fft.irfft(1j * w * np.fft.rfft(buf, axis=0), n=m, axis=0)[:n]


def commutation_residual(u: TimeSignal, eps: float, tau: float, power: int = 1) -> float:
    """``||Q(t^k u) - (t + i eps D_t / tau)^k Q u|| / ||u||``.

    Since ``i D_t = d/dt`` the operator on the right is ``t + (eps/tau) d/dt``.
    """
    t = u.t.reshape((-1,) + (1,) * (u.values.ndim - 1))
    lhs = apply_multiplier(u.with_values(t ** power * u.values), eps, tau, check=False)
    v = apply_multiplier(u, eps, tau, check=False)
    for _ in range(power):
        v = v.with_values(t * v.values + (eps / tau) * _ddt(v))
    return float(np.linalg.norm(lhs.values - v.values) / np.linalg.norm(u.values))


def support_distance(t, chi1, chi2) -> float:
    """Distance between the supports of two sampled cutoffs."""
    t = np.asarray(t, float)
    s1 = t[np.asarray(chi1) != 0]
    s2 = t[np.asarray(chi2) != 0]
    if len(s1) == 0 or len(s2) == 0:
        raise ValueError("empty support")
    d = np.min(np.abs(s1[:, None] - s2[None, :]))
    return float(d)


def decay_ratio(chi1, chi2, u: TimeSignal, lambdas):
    """``||chi1 exp(-|D_t|^2 / lam) (chi2 u)|| / ||u||`` for each ``lam``.

    The multiplier is applied by direct convolution with the full, untruncated
    kernel ``sqrt(lam / 4 pi) exp(-lam s^2 / 4)``, so the ratios stay accurate
    far below the FFT round-off floor.

    Returns
    -------
    ratios : ndarray
    rate : float
        Minus the least-squares slope of ``log ratio`` against ``lam``.
    d : float
        Distance between the supports of ``chi1`` and ``chi2``.
    """
    c1, c2 = np.asarray(chi1, float), np.asarray(chi2, float)
    d = support_distance(u.t, c1, c2)
    if d <= 0:
        raise ValueError("cutoff supports overlap")
    lambdas = np.asarray(lambdas, float)
    v = c2 * u.values
    nu = np.linalg.norm(u.values)
    out = []
    for lam in lambdas:
        # exp(-|D|^2/lam) is the multiplier with eps/(2 tau) = 1/lam
        w = apply_multiplier(u.with_values(v), 2.0, lam, mode="convolution",
                             truncate=False, check=False)
        out.append(np.linalg.norm(c1 * w.values) / nu)
    ratios = np.array(out)
    slope = np.polyfit(lambdas, np.log(ratios), 1)[0]
    return ratios, float(-slope), d


def hf_imaginary_axis(v: np.ndarray, f: np.ndarray, phi: np.ndarray, cell: float,
                      ht: float, tau_grid, eps: float, spectrum_tol: float = 1e-12):
    """Evaluate ``h_f(i tau) = <f, v exp(tau phi)>`` and its multiplier bound.

    ``v``, ``f`` and ``phi`` are sampled on the same space-time grid with
    time on axis 0; ``cell`` is the volume of one grid cell.  The bound is
    ``exp(eps R^2 / (2 tau)) ||f|| ||Q(v exp(tau phi))||`` with ``R`` the
    radius of the time spectrum of ``f`` above ``spectrum_tol``.

    Returns a list of dicts with keys ``tau``, ``h``, ``bound``.
    """
    v, f, phi = (np.asarray(a, float) for a in (v, f, phi))
    if not (v.shape == f.shape == phi.shape):
        raise ValueError("v, f and phi must share a grid")
    nt = f.shape[0]
    spec = np.abs(np.fft.rfft(f, axis=0))
    spec = spec.reshape(spec.shape[0], -1).max(axis=1)
    w = 2.0 * np.pi * np.fft.rfftfreq(nt, ht)
    R = float(w[spec > spectrum_tol * spec.max()].max())
    fn = np.sqrt(cell * np.sum(f * f))
    rows = []
    for tau in np.asarray(tau_grid, float):
        g = v * np.exp(tau * phi)
        h = float(cell * np.sum(f * g))
        Qg = apply_multiplier(TimeSignal(g, ht), eps, tau, check=False).values
        bound = np.exp(eps * R * R / (2.0 * tau)) * fn * np.sqrt(cell * np.sum(Qg * Qg))
        rows.append({"tau": float(tau), "h": h, "bound": float(bound)})
    return rows
