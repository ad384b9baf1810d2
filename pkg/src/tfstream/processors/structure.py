"""Structure extractor: tract features scoring local time-frequency order.

The score at (t, f) is the normalized (cosine) self-similarity of the
energy under a time shift (horizontal, tonal organization) or a scale
shift (vertical, pulsal organization), evaluated on the window spanning
w_t steps and w_s channels around the location.  Scores lie in [0, 1]
with 1 for perfectly repeating structure.

Receiving a calibration chunk (white noise) makes the extractor estimate
its decision threshold theta and slope beta from the noise score
distribution.
"""

from __future__ import annotations

from typing import Dict, Optional, Tuple

import numpy as np

from ..chunks import AlignmentParams, Continuity, is_withprevious_subtype
from ..errors import NotACalibrationChunk, ShapeMismatch, TooFewChannels
from ..merge import MergedChunk
from .base import FeatureData, Processor, TimeWindowState, register


def _moving_sum(x: np.ndarray, width: int) -> np.ndarray:
    """Per-row running sum; output[t] = sum of x[t-width+1 .. t]."""
    kernel = np.ones(width)
    return np.apply_along_axis(
        lambda row: np.convolve(row, kernel, mode="full")[: row.shape[-1]], -1, x
    )


def horizontal_score(energy: np.ndarray, w_t: int) -> np.ndarray:
    """Time-shift self-similarity per channel row.

    Valid for t in [w_t, T - w_t); other positions hold garbage and are
    sliced away by the window state.
    """
    lag = w_t
    width = w_t + 1
    sq = energy * energy
    prod = energy[:, :-lag] * energy[:, lag:] if lag else sq
    s_ab = _moving_sum(prod, width)          # sum ending at t (prod index)
    s_sq = _moving_sum(sq, width)
    out = np.full(energy.shape, np.nan)
    t = np.arange(w_t, energy.shape[-1] - w_t)
    num = s_ab[:, t]                          # windows [t-w_t, t] x [t, t+w_t]
    denom = np.sqrt(s_sq[:, t] * s_sq[:, t + lag])
    with np.errstate(invalid="ignore", divide="ignore"):
        score = np.where(denom > 0, num / denom, 1.0)
    out[:, t] = score
    return out


def vertical_score(energy: np.ndarray, w_t: int, w_s: int) -> np.ndarray:
    """Scale-shift self-similarity, time-averaged over the window."""
    lag = w_s
    sq = energy * energy
    prod = energy[:-lag, :] * energy[lag:, :] if lag else sq

    def scale_sum(x: np.ndarray) -> np.ndarray:
        kernel = np.ones(w_s + 1)
        return np.apply_along_axis(
            lambda col: np.convolve(col, kernel, mode="full")[: col.shape[-1]], 0, x
        )

    s_ab = scale_sum(prod)
    s_sq = scale_sum(sq)
    # accumulate the time window [t-w_t, t+w_t] as well
    width = 2 * w_t + 1
    s_ab = _moving_sum(s_ab, width)
    s_sq = _moving_sum(s_sq, width)

    out = np.full(energy.shape, np.nan)
    f = np.arange(w_s, energy.shape[0] - w_s)
    t = np.arange(w_t, energy.shape[-1] - w_t)
    num = s_ab[np.ix_(f, t + w_t)]
    denom = np.sqrt(s_sq[np.ix_(f, t + w_t)] * s_sq[np.ix_(f + lag, t + w_t)])
    with np.errstate(invalid="ignore", divide="ignore"):
        score = np.where(denom > 0, num / denom, 1.0)
    out[np.ix_(f, t)] = score
    return out


@register
class StructureExtractor(Processor):
    """Publishes the tract feature T with alignment (w_t, w_t, w_s, w_s)."""

    kind = "structure_extractor"

    def __init__(self, name: str, params: dict):
        super().__init__(name, params)
        self.w_t = int(params.get("w_t", 40))
        self.w_s = int(params.get("w_s", 3))
        if self.w_t < 1 or self.w_s < 1:
            raise ValueError("w_t and w_s must be >= 1")
        self.direction = params.get("direction", "horizontal")
        if self.direction not in ("horizontal", "vertical"):
            raise ValueError(f"bad direction {self.direction!r}")
        self.theta_quantile = float(params.get("theta_quantile", 95.0))
        self.beta_quantile = float(params.get("beta_quantile", 99.0))
        if not 0 < self.theta_quantile < self.beta_quantile < 100:
            raise ValueError("need 0 < theta_quantile < beta_quantile < 100")
        self.theta = params.get("theta")
        self.beta = params.get("beta")
        self._window = TimeWindowState(declared_d=self.w_t, declared_p=self.w_t)

    def feature_alignment(self) -> Dict[str, AlignmentParams]:
        return {
            "T": AlignmentParams(p=self.w_t, d=self.w_t, l=self.w_s, s=self.w_s)
        }

    def reset(self) -> None:
        self._window.reset()

    def _raw_scores(self, energy: np.ndarray) -> np.ndarray:
        if energy.shape[0] < 2 * self.w_s + 1:
            raise TooFewChannels(
                f"structure extraction needs >= {2 * self.w_s + 1} channels, "
                f"got {energy.shape[0]}"
            )
        if self.direction == "horizontal":
            return horizontal_score(energy, self.w_t)
        return vertical_score(energy, self.w_t, self.w_s)

    def calibrate(
        self, energy: np.ndarray, continuity: Continuity
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Estimate per-channel (theta, beta) from the noise score tail.

        Noise scores are bounded by 1 and their bulk sits well below it,
        so mean-plus-sigma thresholds can exceed the score ceiling.  The
        upper quantiles stay inside it: theta is the theta_quantile score
        per channel and beta the distance to the beta_quantile, which
        puts repeating structure (scores near 1) several slopes above
        the threshold on every channel.
        """
        if Continuity(continuity) is not Continuity.CALIBRATION:
            raise NotACalibrationChunk(
                f"calibration on a chunk flagged {Continuity(continuity).name}"
            )
        scores = self._raw_scores(energy)
        channels = scores.shape[0]
        valid = scores[self.w_s : channels - self.w_s,
                       self.w_t : scores.shape[-1] - self.w_t]
        q_theta = np.percentile(valid, self.theta_quantile, axis=1)
        q_beta = np.percentile(valid, self.beta_quantile, axis=1)
        theta = np.full(channels, q_theta.mean())
        beta = np.full(channels, max(float(np.mean(q_beta - q_theta)), 1e-9))
        theta[self.w_s : channels - self.w_s] = q_theta
        beta[self.w_s : channels - self.w_s] = np.maximum(q_beta - q_theta, 1e-9)
        self.theta = theta
        self.beta = beta
        return theta, beta

    def process(self, merged: MergedChunk) -> Dict[str, FeatureData]:
        if len(merged.payloads) != 1:
            raise ShapeMismatch("structure extractor expects exactly one input")
        key = next(iter(merged.payloads))
        energy = merged.payloads[key]
        if energy.ndim != 2:
            raise ShapeMismatch("structure extractor expects a 2-D representation")
        if Continuity(merged.continuity) is Continuity.CALIBRATION:
            self.calibrate(energy, merged.continuity)
        continuous = is_withprevious_subtype(merged.continuity)
        buf, out = self._window.feed(continuous, energy)
        scores = self._raw_scores(buf)[:, out]
        # mark the cumulative invalid scale margins
        l_cum = merged.alignment.l + self.w_s
        s_cum = merged.alignment.s + self.w_s
        scores[:l_cum, :] = np.nan
        scores[scores.shape[0] - s_cum :, :] = np.nan
        freqs = merged.channel_freqs.get(key)
        return {
            "T": FeatureData(
                payload=scores,
                sample_rate=merged.sample_rate,
                channel_freqs=None if freqs is None else np.asarray(freqs).copy(),
            )
        }
