"""Spectral helpers for smooth periodic sample arrays.

All routines assume ``values`` holds samples of a smooth P-periodic
function at the uniform grid x_j = j*P/n, j = 0..n-1 (right endpoint
excluded).
"""

import numpy as np


def wavenumbers(n: int, period: float) -> np.ndarray:
    """Angular wavenumbers 2*pi*k/P matching ``np.fft.rfft`` ordering."""
    return 2.0 * np.pi * np.fft.rfftfreq(n, d=period / n)


def spectral_derivative(values: np.ndarray, period: float, order: int = 1) -> np.ndarray:
    """Differentiate periodic samples by FFT.

    For odd derivative orders the Nyquist mode (even n) is zeroed, which
    is the standard symmetric choice.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    coeff = np.fft.rfft(values)
    omega = wavenumbers(n, period)
    coeff = coeff * (1j * omega) ** order
    if order % 2 == 1 and n % 2 == 0:
        coeff[..., -1] = 0.0
    return np.fft.irfft(coeff, n=n)


def spectral_antiderivative(values: np.ndarray, period: float) -> tuple[np.ndarray, float]:
    """Return (F, mean) with F the zero-at-origin antiderivative of the
    mean-free part of ``values``, so that int_0^x f = mean*x + F(x) - F(0)."""
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    coeff = np.fft.rfft(values)
    mean = coeff[0].real / n
    omega = wavenumbers(n, period)
    out = np.zeros_like(coeff)
    out[1:] = coeff[1:] / (1j * omega[1:])
    if n % 2 == 0:
        out[-1] = 0.0
    anti = np.fft.irfft(out, n=n)
    return anti - anti[0], mean


def trig_interpolate(values: np.ndarray, period: float, x_new: np.ndarray) -> np.ndarray:
    """Evaluate the trigonometric interpolant of periodic samples at
    arbitrary points.  Exact at the original grid points."""
    values = np.asarray(values, dtype=float)
    x_new = np.atleast_1d(np.asarray(x_new, dtype=float))
    n = values.shape[-1]
    coeff = np.fft.rfft(values) / n
    k = np.arange(coeff.shape[-1])
    phase = np.exp(2j * np.pi * np.outer(x_new, k) / period)
    # rfft halves: double every mode except DC and (for even n) Nyquist.
    scale = np.full(coeff.shape[-1], 2.0)
    scale[0] = 1.0
    if n % 2 == 0:
        scale[-1] = 1.0
    return np.real(phase @ (scale * coeff))


def periodic_integral(values: np.ndarray, period: float) -> float:
    """Integral over one period; the uniform-grid Riemann sum, which is
    spectrally accurate for smooth periodic integrands."""
    values = np.asarray(values, dtype=float)
    return float(values.mean(axis=-1) * period)
