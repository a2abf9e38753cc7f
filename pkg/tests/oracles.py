"""Independent reference computations used by the tests.

Nothing here calls into rotospec; each oracle is a slow, direct evaluation
of the quantity the package computes another way.
"""

import math

import numpy as np
from scipy import integrate, signal


def dtft(x, freqs, sample_rate):
    """Direct sum X(f) = sum_n x[n] exp(-j 2 pi f n / fs)."""
    n = np.arange(len(x))
    f = np.atleast_1d(np.asarray(freqs, dtype=float))
    out = np.empty(len(f), dtype=complex)
    # chunked to keep the phase matrix small
    for i in range(0, len(f), 512):
        ph = np.exp(-2j * np.pi * np.outer(f[i:i + 512], n) / sample_rate)
        out[i:i + 512] = ph @ x
    return out


def dense_peak(x, sample_rate, lo, hi, step=0.001):
    """Frequency of the largest |DTFT| on a uniform grid over [lo, hi].

    The grid is evaluated by a chirp-z transform, which gives the same
    values as :func:`dtft` on a uniform grid.
    """
    count = int(round((hi - lo) / step)) + 1
    grid = lo + step * np.arange(count)
    vals = signal.czt(np.asarray(x, dtype=complex), count,
                      np.exp(-2j * np.pi * step / sample_rate),
                      np.exp(2j * np.pi * lo / sample_rate))
    return float(grid[np.argmax(np.abs(vals))])


def continuous_leakage(m, window_duration=1.0):
    """|integral_0^T exp(j 2 pi m t / T) dt| in closed form, evaluated directly."""
    m = float(m)
    if m == 0:
        return window_duration
    return window_duration * abs(math.sin(math.pi * m)) / (math.pi * abs(m))


def line_amplitudes(k_wave, radial, axial, separation, harmonics):
    """|c_h| of exp(-j k sqrt(R^2 + D^2 - 2 R d cos(theta) + d^2)) as a
    Fourier series in theta, by quadrature.

    The machine return is exp(j theta) times this (up to a constant
    phase), so spectral line h + 1 carries amplitude |c_h|.
    """
    def coeff(h):
        def f(th, part):
            v = -k_wave * math.sqrt(radial ** 2 + axial ** 2 - 2 * radial * separation
                                    * math.cos(th) + separation ** 2) - h * th
            return math.cos(v) if part == 0 else math.sin(v)
        re = integrate.quad(f, 0, 2 * math.pi, args=(0,), limit=400, epsabs=1e-13)[0]
        im = integrate.quad(f, 0, 2 * math.pi, args=(1,), limit=400, epsabs=1e-13)[0]
        return abs(complex(re, im)) / (2 * math.pi)
    return {h: coeff(h) for h in harmonics}


def brute_peaks(mag, threshold):
    """1-based bins that beat every existing neighbour and reach threshold."""
    out = []
    for i, v in enumerate(mag):
        left = mag[i - 1] if i > 0 else -math.inf
        right = mag[i + 1] if i + 1 < len(mag) else -math.inf
        if v > left and v > right and v >= threshold:
            out.append(i + 1)
    return out


def round_half_up(x):
    return math.floor(x + 0.5)
