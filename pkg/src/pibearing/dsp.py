"""
Envelope spectrum analysis of vibration windows.

Bandpass filter -> analytic-signal envelope -> mean removal -> single-sided
FFT magnitude.  Amplitudes read off at characteristic frequencies feed the
physics branch and the physics-informed loss.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import signal as sp_signal


class InvalidSpecError(ValueError):
    """Filter or analysis parameters are inconsistent with the signal."""


class InvalidRangeError(ValueError):
    """A frequency window selects no spectral bins."""


@dataclass(frozen=True)
class TimeSeries:
    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("TimeSeries needs a non-empty 1-D sample array")
        if not self.sample_rate_hz > 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size


@dataclass(frozen=True)
class BandpassSpec:
    low_cut_hz: float = 1000.0
    high_cut_hz: float = 10000.0
    order: int = 4

    def validate(self, sample_rate_hz: float) -> None:
        nyq = 0.5 * sample_rate_hz
        if not (0 < self.low_cut_hz < self.high_cut_hz < nyq):
            raise InvalidSpecError(
                f"band [{self.low_cut_hz}, {self.high_cut_hz}] Hz must satisfy 0 < low < high < {nyq} Hz"
            )
        if int(self.order) != self.order or self.order < 1:
            raise InvalidSpecError(f"filter order must be a positive integer, got {self.order}")


@dataclass(frozen=True)
class EnvelopeSpectrum:
    bin_frequencies_hz: np.ndarray
    amplitudes: np.ndarray

    @property
    def resolution_hz(self) -> float:
        return float(self.bin_frequencies_hz[1] - self.bin_frequencies_hz[0])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["frequency_hz", "amplitude"])
            for f, a in zip(self.bin_frequencies_hz, self.amplitudes):
                w.writerow([repr(float(f)), repr(float(a))])


def _sos(spec: BandpassSpec, sample_rate_hz: float) -> np.ndarray:
    spec.validate(sample_rate_hz)
    return sp_signal.butter(
        spec.order, [spec.low_cut_hz, spec.high_cut_hz], btype="bandpass", fs=sample_rate_hz, output="sos"
    )


def bandpass_filter(x: TimeSeries, spec: BandpassSpec) -> TimeSeries:
    """Zero-phase Butterworth bandpass (forward-backward second-order sections)."""
    sos = _sos(spec, x.sample_rate_hz)
    y = sp_signal.sosfiltfilt(sos, x.samples)
    return TimeSeries(y, x.sample_rate_hz)


def analytic_signal(samples: np.ndarray) -> np.ndarray:
    """Analytic signal through the frequency-domain Hilbert transform.

    Positive frequencies are doubled, negative ones zeroed, DC and (for even
    lengths) Nyquist kept as-is.
    """
    x = np.asarray(samples, dtype=np.float64)
    n = x.size
    spectrum = np.fft.fft(x)
    h = np.zeros(n)
    if n % 2 == 0:
        h[0] = h[n // 2] = 1.0
        h[1 : n // 2] = 2.0
    else:
        h[0] = 1.0
        h[1 : (n + 1) // 2] = 2.0
    return np.fft.ifft(spectrum * h)


def envelope(x: TimeSeries) -> TimeSeries:
    """Modulus of the analytic signal."""
    if len(x) < 2:
        raise ValueError("envelope needs at least 2 samples")
    return TimeSeries(np.abs(analytic_signal(x.samples)), x.sample_rate_hz)


def amplitude_spectrum(samples: np.ndarray, sample_rate_hz: float) -> EnvelopeSpectrum:
    """Single-sided FFT magnitude scaled 2/N (DC and Nyquist bins scaled 1/N)."""
    n = samples.size
    mag = np.abs(np.fft.rfft(samples)) / n
    mag[1:] *= 2.0
    if n % 2 == 0:
        mag[-1] *= 0.5
    freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate_hz)
    return EnvelopeSpectrum(freqs, mag)


def envelope_spectrum(x: TimeSeries, band: BandpassSpec) -> EnvelopeSpectrum:
    filtered = bandpass_filter(x, band)
    env = envelope(filtered).samples
    return amplitude_spectrum(env - env.mean(), x.sample_rate_hz)


def default_tolerance(spec: EnvelopeSpectrum, f_target: float) -> float:
    """Half-width of the read-off band: max(one bin, 2% of the target)."""
    return max(spec.resolution_hz, 0.02 * f_target)


def amplitude_at(spec: EnvelopeSpectrum, f_target: float, tolerance_hz: float | None = None) -> float:
    """Largest amplitude among bins within ``f_target ± tolerance_hz``."""
    if not f_target > 0:
        raise InvalidRangeError(f"target frequency must be positive, got {f_target}")
    if tolerance_hz is None:
        tolerance_hz = default_tolerance(spec, f_target)
    if not tolerance_hz > 0:
        raise InvalidRangeError(f"tolerance must be positive, got {tolerance_hz}")
    f = spec.bin_frequencies_hz
    # small slack so a tolerance of exactly one bin width includes the neighbour
    eps = 1e-9 * max(1.0, tolerance_hz)
    mask = (f >= f_target - tolerance_hz - eps) & (f <= f_target + tolerance_hz + eps)
    if not mask.any():
        raise InvalidRangeError(f"no spectral bins within {f_target} ± {tolerance_hz} Hz")
    return float(spec.amplitudes[mask].max())


def peak_frequency(spec: EnvelopeSpectrum, min_hz: float = 5.0) -> float:
    """Frequency of the largest bin at or above ``min_hz``."""
    mask = spec.bin_frequencies_hz >= min_hz
    if not mask.any():
        raise InvalidRangeError(f"no bins above {min_hz} Hz")
    idx = np.flatnonzero(mask)[np.argmax(spec.amplitudes[mask])]
    return float(spec.bin_frequencies_hz[idx])


def percentile_threshold(amplitudes, p: float) -> float:
    """p-th percentile with linear interpolation between closest ranks."""
    a = np.asarray(amplitudes, dtype=np.float64).ravel()
    if a.size == 0:
        raise ValueError("percentile of an empty amplitude array")
    if not 0 < p < 100:
        raise ValueError(f"percentile must lie in (0, 100), got {p}")
    return float(np.percentile(a, p, method="linear"))
