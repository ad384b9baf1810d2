"""Processor kinds: sources, resampler, filterbank, scores, blocks."""

import numpy as np
import pytest

from conftest import synth_tone_noise, write_wav
from tfstream.chunks import AlignmentParams, Continuity, DataChunk, ZERO_ALIGNMENT
from tfstream.errors import (
    IoError,
    NonIntegerRate,
    NotACalibrationChunk,
    SpecMismatch,
    TooFewChannels,
    UnsupportedFormat,
)
from tfstream.merge import MergeState, complete_merge
from tfstream.processors import (
    GammaChirpFilterbank,
    MicInput,
    PTNProcessor,
    Resampler,
    StructureExtractor,
    TimeWindowState,
    WavReader,
    registered_kinds,
    resolve_kind,
)
from tfstream.processors.filterbank import erb_bandwidth, gammachirp_ir
from tfstream.processors.ptn import block_average, logistic, noise_complement
from tfstream.processors.resampler import design_lowpass
from tfstream.processors.sources import calibration_noise
from tfstream.processors.structure import horizontal_score, vertical_score


def test_registry_contains_all_kinds():
    kinds = registered_kinds()
    for kind in ("wav_reader", "mic_input", "resampler",
                 "gammachirp_filterbank", "structure_extractor", "ptn",
                 "file_writer"):
        assert kind in kinds
        assert resolve_kind(kind).kind == kind


def as_merged(processor_name, key, payload, rate, continuity,
              alignment=ZERO_ALIGNMENT, freqs=None):
    """Wrap one array as the merged input set of a single-input processor."""
    chunk = DataChunk(
        number=0, source_key=key, payload=payload, sample_rate=rate,
        alignment=alignment, continuity=continuity, channel_freqs=freqs,
    )
    merged, _ = complete_merge(MergeState(), {key: chunk}, 0)
    return merged


# --- sources ------------------------------------------------------------

def test_wav_reader_chunk_sequence(tmp_path):
    path = write_wav(tmp_path / "t.wav", 8000, synth_tone_noise(8000, 0.5))
    reader = WavReader("r", {"path": str(path), "chunk_size": 1000})
    chunks = list(reader.chunks())
    assert [c.continuity for c in chunks] == [
        Continuity.NEWFILE, Continuity.WITHPREVIOUS, Continuity.WITHPREVIOUS,
        Continuity.LAST,
    ]
    assert [c.number for c in chunks] == [0, 1, 2, 3]
    assert all(c.time_length == 1000 for c in chunks)


def test_wav_reader_short_final_chunk(tmp_path):
    path = write_wav(tmp_path / "t.wav", 8000, np.zeros(2500))
    reader = WavReader("r", {"path": str(path), "chunk_size": 1000})
    chunks = list(reader.chunks())
    assert chunks[-1].time_length == 500
    assert chunks[-1].continuity is Continuity.LAST


def test_wav_reader_single_chunk_file_is_newfile(tmp_path):
    path = write_wav(tmp_path / "t.wav", 8000, np.zeros(300))
    reader = WavReader("r", {"path": str(path), "chunk_size": 1000})
    (only,) = list(reader.chunks())
    assert only.continuity is Continuity.NEWFILE


def test_wav_reader_calibration_chunk_first(tmp_path):
    path = write_wav(tmp_path / "t.wav", 8000, np.zeros(2000))
    reader = WavReader("r", {
        "path": str(path), "chunk_size": 1000,
        "calibration": {"seed": 5, "duration_s": 0.25},
    })
    chunks = list(reader.chunks())
    assert chunks[0].continuity is Continuity.CALIBRATION
    assert chunks[0].number == 0
    assert chunks[0].time_length == 2000
    assert chunks[1].number == 1


def test_wav_reader_missing_file():
    with pytest.raises(IoError):
        WavReader("r", {"path": "/nonexistent/x.wav", "chunk_size": 100})


def test_wav_reader_rejects_unsupported_dtype(tmp_path):
    from scipy.io import wavfile
    path = tmp_path / "t.wav"
    wavfile.write(str(path), 8000, np.zeros(100, dtype=np.int32))
    with pytest.raises(UnsupportedFormat):
        WavReader("r", {"path": str(path), "chunk_size": 100})


def test_calibration_noise_deterministic():
    np.testing.assert_array_equal(
        calibration_noise(11, 500), calibration_noise(11, 500)
    )
    assert not np.array_equal(calibration_noise(11, 500),
                              calibration_noise(12, 500))


def test_mic_input_sequence_without_faults():
    mic = MicInput("m", {"num_chunks": 4, "chunk_size": 256, "seed": 2})
    chunks = list(mic.chunks())
    assert [c.continuity for c in chunks] == [
        Continuity.DISCONTINUOUS, Continuity.WITHPREVIOUS,
        Continuity.WITHPREVIOUS, Continuity.LAST,
    ]
    assert mic.last_invalid is None


def test_mic_overflow_keeps_invalid_chunk_unpublished():
    mic = MicInput("m", {"num_chunks": 6, "chunk_size": 256, "seed": 2})
    mic.set_overflow_numbers({3})
    chunks = list(mic.chunks())
    assert [c.number for c in chunks] == [0, 1, 2, 4, 5]
    assert mic.last_invalid is not None
    assert mic.last_invalid.number == 3
    assert mic.last_invalid.continuity is Continuity.INVALID
    # successor keeps its natural flag; the number gap carries the signal
    assert chunks[3].continuity is Continuity.WITHPREVIOUS


def test_mic_overflow_discontinuous_flag_option():
    mic = MicInput("m", {"num_chunks": 6, "chunk_size": 256, "seed": 2,
                         "flag_after_overflow": "discontinuous"})
    mic.set_overflow_numbers({3})
    chunks = list(mic.chunks())
    assert chunks[3].number == 4
    assert chunks[3].continuity is Continuity.DISCONTINUOUS


def test_mic_signal_content_is_independent_of_overflow():
    plain = MicInput("m", {"num_chunks": 5, "chunk_size": 128, "seed": 4})
    faulty = MicInput("m", {"num_chunks": 5, "chunk_size": 128, "seed": 4})
    faulty.set_overflow_numbers({2})
    by_number = {c.number: c for c in plain.chunks()}
    for c in faulty.chunks():
        np.testing.assert_array_equal(c.payload, by_number[c.number].payload)


# --- resampler ----------------------------------------------------------

def test_design_lowpass_unit_dc_gain():
    for factor in (1, 2, 4):
        h = design_lowpass(127, factor)
        assert abs(h.sum() - 1.0) < 1e-12


def test_design_lowpass_length_one_is_identity():
    np.testing.assert_array_equal(design_lowpass(1, 2), np.ones(1))


def test_design_lowpass_rejects_even_length():
    with pytest.raises(ValueError):
        design_lowpass(126, 2)


def test_resampler_rejects_non_integer_rate():
    r = Resampler("r", {"factor": 3})
    with pytest.raises(NonIntegerRate):
        r.prepare(8000)


def test_resampler_chunked_equals_unchunked():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(4096)
    key = ("src", "snd")

    whole = Resampler("r", {"factor": 2})
    ref = whole.process(
        as_merged("r", key, x, 8000.0, Continuity.DISCONTINUOUS)
    )["snd"].payload

    chunked = Resampler("r", {"factor": 2})
    parts = []
    state = MergeState()
    for i, continuity in zip(range(4), [Continuity.DISCONTINUOUS] + 3 * [
            Continuity.WITHPREVIOUS]):
        chunk = DataChunk(
            number=i, source_key=key, payload=x[i * 1024:(i + 1) * 1024],
            sample_rate=8000.0, alignment=ZERO_ALIGNMENT, continuity=continuity,
        )
        merged, state = complete_merge(state, {key: chunk}, i)
        parts.append(chunked.process(merged)["snd"].payload)
    np.testing.assert_array_equal(np.concatenate(parts), ref)


def test_resampler_declared_drop_is_honest():
    """The first declared-dropped output after a discontinuity really does
    depend on missing history: providing that history changes it."""
    rng = np.random.default_rng(1)
    past = rng.standard_normal(1024)
    x = rng.standard_normal(1024)
    key = ("src", "snd")

    r1 = Resampler("r", {"factor": 2})
    without = r1.process(
        as_merged("r", key, x, 8000.0, Continuity.DISCONTINUOUS)
    )["snd"].payload

    r2 = Resampler("r", {"factor": 2})
    r2.process(as_merged("r", key, past, 8000.0, Continuity.DISCONTINUOUS))
    state = MergeState()
    chunk0 = DataChunk(number=0, source_key=key, payload=past,
                       sample_rate=8000.0, alignment=ZERO_ALIGNMENT,
                       continuity=Continuity.DISCONTINUOUS)
    _, state = complete_merge(state, {key: chunk0}, 0)
    chunk1 = DataChunk(number=1, source_key=key, payload=x, sample_rate=8000.0,
                       alignment=ZERO_ALIGNMENT,
                       continuity=Continuity.WITHPREVIOUS)
    merged, _ = complete_merge(state, {key: chunk1}, 1)
    with_history = r2.process(merged)["snd"].payload

    drop = r1.drop
    # outputs the first run kept agree exactly with the historied run
    np.testing.assert_array_equal(without, with_history[drop:])
    # and at least the first withheld output would have been wrong
    assert with_history.shape[-1] == without.shape[-1] + drop


# --- gammachirp filterbank ----------------------------------------------

def test_erb_bandwidth_values():
    assert erb_bandwidth(0) == pytest.approx(24.7)
    assert erb_bandwidth(1000) == pytest.approx(24.7 + 108.0)


def test_gammachirp_ir_unit_peak_gain():
    for cf in (200.0, 500.0, 1200.0):
        h = gammachirp_ir(cf, 4000.0, 200)
        spectrum = np.abs(np.fft.fft(h, 8192))
        assert spectrum.max() == pytest.approx(1.0, rel=1e-6)


def test_filterbank_white_noise_energy_matches_filter_norm():
    fb = GammaChirpFilterbank("fb", {
        "channels": 16, "f_min": 300, "f_max": 1500, "impulse_ms": 25,
        "sample_rate": 4000,
    })
    rng = np.random.default_rng(3)
    sigma = 0.2
    noise = sigma * rng.standard_normal(8 * 4000)
    key = ("src", "snd")
    out = fb.process(
        as_merged("fb", key, noise, 4000.0, Continuity.DISCONTINUOUS)
    )["E"].payload
    norms = (fb._h_real ** 2 + fb._h_imag ** 2).sum(axis=1)
    measured = out.mean(axis=1)
    expected = sigma ** 2 * norms
    assert np.all(np.abs(measured / expected - 1) < 0.1)


def test_filterbank_tone_peaks_at_matching_channel():
    fb = GammaChirpFilterbank("fb", {
        "channels": 32, "f_min": 100, "f_max": 1500, "impulse_ms": 50,
        "sample_rate": 4000,
    })
    t = np.arange(4000) / 4000.0
    tone = np.sin(2 * np.pi * 440.0 * t)
    out = fb.process(
        as_merged("fb", ("s", "snd"), tone, 4000.0, Continuity.DISCONTINUOUS)
    )["E"].payload
    peak = int(np.argmax(out.mean(axis=1)))
    nearest = int(np.argmin(np.abs(fb.center_freqs - 440.0)))
    assert abs(peak - nearest) <= 1


def test_filterbank_rejects_rate_mismatch():
    fb = GammaChirpFilterbank("fb", {"channels": 8, "f_min": 100,
                                     "f_max": 1500, "sample_rate": 4000})
    with pytest.raises(SpecMismatch):
        fb.process(as_merged("fb", ("s", "snd"), np.zeros(500), 8000.0,
                             Continuity.DISCONTINUOUS))


def test_filterbank_rejects_f_max_at_nyquist():
    with pytest.raises(SpecMismatch):
        GammaChirpFilterbank("fb", {"channels": 8, "f_min": 100,
                                    "f_max": 2000, "sample_rate": 4000})


def test_filterbank_needs_enough_channels():
    with pytest.raises(TooFewChannels):
        GammaChirpFilterbank("fb", {"channels": 2, "f_min": 100,
                                    "f_max": 1500})


def test_filterbank_chunked_equals_unchunked():
    fb_whole = GammaChirpFilterbank("fb", {
        "channels": 12, "f_min": 200, "f_max": 1500, "impulse_ms": 25,
        "sample_rate": 4000,
    })
    rng = np.random.default_rng(5)
    x = rng.standard_normal(3000)
    key = ("src", "snd")
    ref = fb_whole.process(
        as_merged("fb", key, x, 4000.0, Continuity.DISCONTINUOUS)
    )["E"].payload

    fb = GammaChirpFilterbank("fb", {
        "channels": 12, "f_min": 200, "f_max": 1500, "impulse_ms": 25,
        "sample_rate": 4000,
    })
    state = MergeState()
    parts = []
    bounds = [(0, 1000), (1000, 2000), (2000, 3000)]
    for i, (lo, hi) in enumerate(bounds):
        continuity = (Continuity.DISCONTINUOUS if i == 0
                      else Continuity.WITHPREVIOUS)
        chunk = DataChunk(number=i, source_key=key, payload=x[lo:hi],
                          sample_rate=4000.0, alignment=ZERO_ALIGNMENT,
                          continuity=continuity)
        merged, state = complete_merge(state, {key: chunk}, i)
        parts.append(fb.process(merged)["E"].payload)
    np.testing.assert_array_equal(np.concatenate(parts, axis=-1), ref)


# --- structure scores ---------------------------------------------------

def test_horizontal_score_constant_input_is_one():
    energy = np.full((8, 200), 3.5)
    scores = horizontal_score(energy, 10)
    valid = scores[:, 10:-10]
    np.testing.assert_allclose(valid, 1.0, atol=1e-12)


def test_horizontal_score_zero_denominator_is_one():
    energy = np.zeros((4, 100))
    scores = horizontal_score(energy, 5)
    np.testing.assert_array_equal(scores[:, 5:-5], 1.0)


def test_horizontal_score_periodic_rows_score_high_noise_low():
    rng = np.random.default_rng(6)
    t = np.arange(400)
    periodic = 1.0 + 0.5 * np.sin(2 * np.pi * t / 20)[None, :] * np.ones((3, 1))
    noisy = rng.exponential(size=(3, 400))
    w_t = 40  # multiple of the period: shifted windows line up exactly
    p_scores = horizontal_score(periodic, w_t)[:, w_t:-w_t]
    n_scores = horizontal_score(noisy, w_t)[:, w_t:-w_t]
    assert p_scores.min() > 0.999
    assert n_scores.mean() < 0.9


def test_horizontal_score_bounds():
    rng = np.random.default_rng(7)
    energy = rng.exponential(size=(6, 300))
    scores = horizontal_score(energy, 20)[:, 20:-20]
    assert np.all(scores > 0)
    assert np.all(scores <= 1.0 + 1e-12)


def test_vertical_score_constant_input_is_one():
    energy = np.full((12, 100), 2.0)
    scores = vertical_score(energy, 5, 2)
    valid = scores[2:-2, 5:-5]
    np.testing.assert_allclose(valid, 1.0, atol=1e-12)


def test_structure_extractor_marks_scale_margins():
    se = StructureExtractor("se", {"w_t": 10, "w_s": 2})
    rng = np.random.default_rng(8)
    energy = rng.exponential(size=(16, 300))
    merged = as_merged("se", ("fb", "E"), energy, 4000.0,
                       Continuity.DISCONTINUOUS)
    out = se.process(merged)["T"].payload
    assert np.isnan(out[:2]).all()
    assert np.isnan(out[-2:]).all()
    assert not np.isnan(out[2:-2]).any()


def test_structure_extractor_calibration_requires_flag():
    se = StructureExtractor("se", {"w_t": 10, "w_s": 2})
    with pytest.raises(NotACalibrationChunk):
        se.calibrate(np.ones((16, 100)), Continuity.WITHPREVIOUS)


def test_structure_extractor_calibration_deterministic():
    energy = np.random.default_rng(10).exponential(size=(16, 400))
    a = StructureExtractor("se", {"w_t": 10, "w_s": 2})
    b = StructureExtractor("se", {"w_t": 10, "w_s": 2})
    ta, ba = a.calibrate(energy, Continuity.CALIBRATION)
    tb, bb = b.calibrate(energy, Continuity.CALIBRATION)
    np.testing.assert_array_equal(ta, tb)
    np.testing.assert_array_equal(ba, bb)
    assert ta.shape == (16,)
    assert np.all(ba > 0)


def test_structure_extractor_alignment_declaration():
    se = StructureExtractor("se", {"w_t": 7, "w_s": 2})
    assert se.feature_alignment() == {
        "T": AlignmentParams(p=7, d=7, l=2, s=2)
    }


# --- ptn ----------------------------------------------------------------

def test_logistic_limits_and_midpoint():
    assert logistic(np.array([0.0]))[0] == pytest.approx(0.5)
    assert logistic(np.array([50.0]))[0] == pytest.approx(1.0)
    assert logistic(np.array([-50.0]))[0] == pytest.approx(0.0, abs=1e-20)
    # no overflow warnings for large negative input
    with np.errstate(over="raise"):
        logistic(np.array([-1000.0, 1000.0]))


def test_block_average_nan_aware():
    data = np.array([
        [1.0, 2.0],
        [np.nan, 4.0],
        [5.0, np.nan],
        [np.nan, np.nan],
    ])
    means, counts = block_average(data, 2)
    assert means[0] == pytest.approx((1 + 2 + 4) / 3)
    assert counts[0] == 3
    assert means[1] == pytest.approx(5.0)
    assert counts[1] == 1
    nan_means, nan_counts = block_average(data[3:4], 2)
    assert np.isnan(nan_means[0]) and nan_counts[0] == 0


def test_noise_complement():
    total = np.array([[4.0, 5.0]])
    tonal = np.array([[1.0, 2.0]])
    np.testing.assert_array_equal(noise_complement(total, tonal),
                                  [[3.0, 3.0]])


def make_ptn_merged(energy, tract, continuity, number=0, state=None):
    state = state if state is not None else MergeState()
    e = DataChunk(number=number, source_key=("fb", "E"), payload=energy,
                  sample_rate=40.0, alignment=ZERO_ALIGNMENT,
                  continuity=continuity)
    t = DataChunk(number=number, source_key=("se", "T"), payload=tract,
                  sample_rate=40.0, alignment=ZERO_ALIGNMENT,
                  continuity=continuity)
    return complete_merge(state, {("fb", "E"): e, ("se", "T"): t}, number)


def test_ptn_sigmoid_saturation_recovers_energy_blocks():
    """With the threshold far below every score, tonal energy equals the
    total energy block for block."""
    rng = np.random.default_rng(11)
    energy = rng.exponential(size=(8, 50))
    tract = rng.uniform(0.5, 1.0, size=(8, 50))
    ptn = PTNProcessor("p", {"block_dt": 10, "block_df": 4,
                             "theta": -1e6, "beta": 1.0})
    merged, _ = make_ptn_merged(energy, tract, Continuity.DISCONTINUOUS)
    out = ptn.process(merged)
    np.testing.assert_allclose(out["E_T"].payload, out["E_blocks"].payload,
                               rtol=1e-12)


def test_ptn_block_carry_across_continuous_chunks():
    """Blocks are cut at multiples of block_dt from the discontinuity,
    not from chunk borders."""
    rng = np.random.default_rng(12)
    energy = rng.exponential(size=(4, 75))
    tract = rng.uniform(0, 1, size=(4, 75))
    params = {"block_dt": 10, "block_df": 2, "theta": 0.5, "beta": 0.1}

    whole = PTNProcessor("p", params)
    merged, _ = make_ptn_merged(energy, tract, Continuity.DISCONTINUOUS)
    ref = whole.process(merged)["E_T"].payload

    split = PTNProcessor("p", params)
    state = MergeState()
    parts = []
    for i, (lo, hi) in enumerate([(0, 35), (35, 75)]):
        continuity = (Continuity.DISCONTINUOUS if i == 0
                      else Continuity.WITHPREVIOUS)
        merged, state = make_ptn_merged(energy[:, lo:hi], tract[:, lo:hi],
                                        continuity, number=i, state=state)
        out = split.process(merged)
        if out:
            parts.append(out["E_T"].payload)
    np.testing.assert_array_equal(np.concatenate(parts, axis=-1), ref)


def test_ptn_discontinuity_resets_block_phase():
    rng = np.random.default_rng(13)
    params = {"block_dt": 10, "block_df": 2, "theta": 0.5, "beta": 0.1}
    ptn = PTNProcessor("p", params)
    e0 = rng.exponential(size=(4, 25))
    t0 = rng.uniform(0, 1, size=(4, 25))
    merged, state = make_ptn_merged(e0, t0, Continuity.DISCONTINUOUS)
    ptn.process(merged)          # 2 blocks out, 5 columns carried
    e1 = rng.exponential(size=(4, 30))
    t1 = rng.uniform(0, 1, size=(4, 30))
    merged, _ = make_ptn_merged(e1, t1, Continuity.DISCONTINUOUS,
                                number=5, state=state)
    out = ptn.process(merged)
    # the carry was abandoned: exactly 3 fresh blocks from the new segment
    assert out["E_T"].payload.shape[-1] == 3


def test_ptn_pending_discontinuity_surfaces_on_next_output():
    params = {"block_dt": 50, "block_df": 2, "theta": 0.5, "beta": 0.1}
    ptn = PTNProcessor("p", params)
    rng = np.random.default_rng(14)
    merged, state = make_ptn_merged(rng.exponential(size=(4, 30)),
                                    rng.uniform(0, 1, size=(4, 30)),
                                    Continuity.DISCONTINUOUS)
    assert ptn.process(merged) == {}           # no complete block yet
    assert ptn.consume_pending_continuity() is Continuity.DISCONTINUOUS
    assert ptn.consume_pending_continuity() is None


def test_ptn_requires_threshold_without_calibration():
    from tfstream.errors import ConfigError
    ptn = PTNProcessor("p", {"block_dt": 10, "block_df": 2})
    rng = np.random.default_rng(15)
    merged, _ = make_ptn_merged(rng.exponential(size=(4, 20)),
                                rng.uniform(0, 1, size=(4, 20)),
                                Continuity.DISCONTINUOUS)
    with pytest.raises(ConfigError):
        ptn.process(merged)


# --- window state -------------------------------------------------------

def test_time_window_state_reproduces_unchunked_moving_sum():
    rng = np.random.default_rng(16)
    x = rng.standard_normal((2, 300))
    d, p = 4, 3

    def windowed(buf):
        # value at t needs buf[t-d .. t+p]: a (d+p+1)-point moving sum
        kernel = np.ones(d + p + 1)
        full = np.apply_along_axis(
            lambda row: np.convolve(row, kernel, mode="full"), -1, buf)
        return full[:, d + p:buf.shape[-1]]

    ref = windowed(x)[:, : x.shape[-1] - d - p]

    state = TimeWindowState(d, p)
    parts = []
    for i, (lo, hi) in enumerate([(0, 100), (100, 200), (200, 300)]):
        buf, out = state.feed(i > 0, x[:, lo:hi])
        got = windowed(buf)
        parts.append(got[:, : buf.shape[-1] - d - p][:, (out.start - d):(out.stop - d)])
    chunked = np.concatenate(parts, axis=-1)
    np.testing.assert_array_equal(chunked, ref)
