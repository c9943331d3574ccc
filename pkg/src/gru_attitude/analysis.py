"""Error metrics: RMSE, periodogram PSD, box statistics and the campaign report."""

from dataclasses import asdict, dataclass

import numpy as np
from scipy import signal

from .errors import EmptySeries, TooShort

CHANNELS = ("phi", "theta", "psi", "p", "q", "r")
ATTITUDE = slice(0, 3)
# Relative growth tolerated between consecutive iterations before the
# "non-increasing" flag with allowance is cleared.
NOISE_ALLOWANCE = 0.05


@dataclass(frozen=True)
class ChannelMetrics:
    rmse: float
    mean: float
    median: float
    q1: float
    q3: float
    iqr: float
    min: float
    max: float


@dataclass(frozen=True)
class Spectrum:
    frequencies: np.ndarray  # Hz, 0 .. Nyquist
    psd: np.ndarray          # (n_freq, n_channels), unit**2 / Hz

    def peak(self):
        """Per-channel (peak value, peak frequency), ignoring the DC bin."""
        body = self.psd[1:]
        idx = np.argmax(body, axis=0) + 1
        cols = np.arange(self.psd.shape[1])
        return self.psd[idx, cols], self.frequencies[idx]


def _as_2d(series) -> np.ndarray:
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        raise EmptySeries("series is empty")
    return x.reshape(len(x), -1) if x.ndim != 1 else x[:, None]


def rmse(series) -> np.ndarray:
    """Root mean square along axis 0; returns one value per channel."""
    x = _as_2d(series)
    out = np.sqrt(np.mean(x * x, axis=0))
    return out if np.ndim(series) > 1 else out[0]


def psd(series, dt: float) -> Spectrum:
    """One-sided Hann-windowed periodogram with the mean removed."""
    x = _as_2d(series)
    if len(x) < 8:
        raise TooShort(f"need at least 8 samples for a PSD, got {len(x)}")
    if not dt > 0:
        raise ValueError("dt must be > 0")
    freqs, p = signal.periodogram(x, fs=1.0 / dt, window="hann", detrend="constant",
                                  scaling="density", return_onesided=True, axis=0)
    return Spectrum(freqs, p)


def box_stats(samples) -> ChannelMetrics:
    # sorted first so sums (and hence mean / rmse) are independent of input order
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size == 0:
        raise EmptySeries("samples are empty")
    q1, med, q3 = np.quantile(x, [0.25, 0.5, 0.75], method="linear")
    return ChannelMetrics(
        rmse=float(np.sqrt(np.mean(x * x))), mean=float(x.mean()), median=float(med),
        q1=float(q1), q3=float(q3), iqr=float(q3 - q1), min=float(x.min()), max=float(x.max()),
    )


def channel_metrics(series):
    x = _as_2d(series)
    return [box_stats(x[:, c]) for c in range(x.shape[1])]


@dataclass
class IterationReport:
    iteration: int                 # 1-based
    channels: list                 # ChannelMetrics per channel in CHANNELS order
    spectrum: Spectrum
    mean_attitude_rmse: float
    max_psd_peak: float
    training_time: float = float("nan")

    def rows(self):
        peaks, peak_freqs = self.spectrum.peak()
        for name, cm, pk, pf in zip(CHANNELS, self.channels, peaks, peak_freqs):
            yield dict(iteration=self.iteration, channel=name, **asdict(cm),
                       psd_peak=float(pk), psd_peak_freq=float(pf))


@dataclass
class CampaignReport:
    iterations: list
    rmse_nonincreasing: bool
    rmse_nonincreasing_with_allowance: bool
    psd_peak_decreasing: bool

    @property
    def flags(self) -> dict:
        return {
            "rmse_nonincreasing": self.rmse_nonincreasing,
            "rmse_nonincreasing_with_allowance": self.rmse_nonincreasing_with_allowance,
            "psd_peak_decreasing": self.psd_peak_decreasing,
        }

    def rows(self):
        for it in self.iterations:
            yield from it.rows()


def iteration_report(iteration: int, channels, dt: float, training_time=float("nan")) -> IterationReport:
    """Metrics for one period; ``channels`` is (n, 6) in CHANNELS order."""
    x = _as_2d(channels)
    metrics = channel_metrics(x)
    spec = psd(x, dt)
    peaks, _ = spec.peak()
    att = float(np.mean([m.rmse for m in metrics[ATTITUDE]]))
    return IterationReport(iteration, metrics, spec, att, float(peaks.max()), training_time)


def campaign_report(records, dt: float = None) -> CampaignReport:
    """Build the cross-iteration report.

    ``records`` are iteration records (anything with ``channels`` and
    ``times``) or plain (n, 6) arrays, in which case ``dt`` is required.
    """
    if len(records) == 0:
        raise EmptySeries("no records")
    its = []
    for i, rec in enumerate(records):
        if hasattr(rec, "channels"):
            step = float(rec.times[1] - rec.times[0])
            wall = rec.training.wall_time if getattr(rec, "training", None) is not None else float("nan")
            its.append(iteration_report(i + 1, rec.channels, step, wall))
        else:
            its.append(iteration_report(i + 1, rec, dt))
    return summarize(its)


def summarize(its) -> CampaignReport:
    if not its:
        raise EmptySeries("no iterations to summarize")
    r = [it.mean_attitude_rmse for it in its]
    strict = all(b <= a for a, b in zip(r, r[1:]))
    allowed = all(b <= a * (1.0 + NOISE_ALLOWANCE) for a, b in zip(r, r[1:]))
    peaks = [it.max_psd_peak for it in its]
    decreasing = len(peaks) == 1 or peaks[-1] < peaks[0]
    return CampaignReport(its, strict, allowed, decreasing)
