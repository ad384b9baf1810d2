"""Gammachirp filterbank producing the energy representation E(t, f).

Each channel is a complex gammachirp band-pass filter (gammatone for
chirp 0); the published value is the squared magnitude of the filter
output.  Filter history is carried across continuous chunks so chunked
output equals the unchunked convolution exactly.
"""

from __future__ import annotations

from typing import Dict, Optional

import numpy as np

from ..chunks import AlignmentParams, is_withprevious_subtype
from ..errors import ShapeMismatch, SpecMismatch, TooFewChannels
from ..merge import MergedChunk
from .base import FeatureData, Processor, TimeWindowState, register


def erb_bandwidth(cf: np.ndarray) -> np.ndarray:
    """Equivalent rectangular bandwidth of the auditory filter at cf (Hz)."""
    return 24.7 + 0.108 * cf


def gammachirp_ir(
    cf: float,
    sample_rate: float,
    length: int,
    order: int = 4,
    bw_factor: float = 1.019,
    chirp: float = 0.0,
) -> np.ndarray:
    """Complex gammachirp impulse response, normalized to unit peak gain."""
    t = (np.arange(length) + 1.0) / sample_rate
    envelope = t ** (order - 1) * np.exp(-2 * np.pi * bw_factor * erb_bandwidth(np.array(cf)) * t)
    phase = 2 * np.pi * cf * t + chirp * np.log(t)
    h = envelope * np.exp(1j * phase)
    nfft = 1 << max(12, int(np.ceil(np.log2(4 * length))))
    gain = np.abs(np.fft.fft(h, nfft)).max()
    return h / gain


@register
class GammaChirpFilterbank(Processor):
    """Per-channel band-pass energy via direct streaming convolution.

    Parameters: channels, f_min, f_max (center frequencies log-spaced),
    impulse_ms (filter length, default 50 ms), order, chirp, and
    optionally sample_rate to pin the design rate up front.
    """

    kind = "gammachirp_filterbank"

    def __init__(self, name: str, params: dict):
        super().__init__(name, params)
        self.channels = int(params.get("channels", 64))
        if self.channels < 4:
            raise TooFewChannels("filterbank needs at least 4 channels")
        self.f_min = float(params.get("f_min", 100.0))
        self.f_max = float(params.get("f_max", 1500.0))
        self.impulse_ms = float(params.get("impulse_ms", 50.0))
        self.order = int(params.get("order", 4))
        self.chirp = float(params.get("chirp", 0.0))
        self._rate: Optional[float] = None
        self._h_real: Optional[np.ndarray] = None
        self._h_imag: Optional[np.ndarray] = None
        self.impulse_length: Optional[int] = None
        self.center_freqs = np.geomspace(self.f_min, self.f_max, self.channels)
        self._window: Optional[TimeWindowState] = None
        if "sample_rate" in params:
            self.prepare(float(params["sample_rate"]))

    def prepare(self, in_rate: float) -> float:
        if self.f_max >= in_rate / 2:
            raise SpecMismatch(
                f"f_max {self.f_max} Hz is not below Nyquist for rate {in_rate}"
            )
        self._rate = in_rate
        self.impulse_length = max(2, int(round(self.impulse_ms * in_rate / 1000.0)))
        bank = np.stack(
            [
                gammachirp_ir(cf, in_rate, self.impulse_length, self.order,
                              chirp=self.chirp)
                for cf in self.center_freqs
            ]
        )
        self._h_real = np.ascontiguousarray(bank.real)
        self._h_imag = np.ascontiguousarray(bank.imag)
        self._window = TimeWindowState(declared_d=self.impulse_length, declared_p=0)
        return in_rate

    def feature_alignment(self) -> Dict[str, AlignmentParams]:
        if self.impulse_length is None:
            raise SpecMismatch("filterbank not prepared: sample rate unknown")
        return {"E": AlignmentParams(p=0, d=self.impulse_length, l=0, s=0)}

    def reset(self) -> None:
        if self._window is not None:
            self._window.reset()

    def _energy(self, buf: np.ndarray) -> np.ndarray:
        out = np.empty((self.channels, buf.shape[-1]))
        n = buf.shape[-1]
        for c in range(self.channels):
            yr = np.convolve(buf, self._h_real[c], mode="full")[:n]
            yi = np.convolve(buf, self._h_imag[c], mode="full")[:n]
            out[c] = yr * yr + yi * yi
        return out

    def process(self, merged: MergedChunk) -> Dict[str, FeatureData]:
        if len(merged.payloads) != 1:
            raise ShapeMismatch("filterbank expects exactly one input")
        x = next(iter(merged.payloads.values()))
        if x.ndim != 1:
            raise ShapeMismatch("filterbank expects a 1-D time series")
        if self._rate is None:
            self.prepare(merged.sample_rate)
        elif merged.sample_rate != self._rate:
            raise SpecMismatch(
                f"chunk rate {merged.sample_rate} != design rate {self._rate}"
            )
        continuous = is_withprevious_subtype(merged.continuity)
        buf, out = self._window.feed(continuous, x)
        energy = self._energy(buf)[:, out]
        return {
            "E": FeatureData(
                payload=energy,
                sample_rate=merged.sample_rate,
                channel_freqs=self.center_freqs.copy(),
            )
        }
