#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "radaralloc/signal.hpp"

using namespace radaralloc;
using namespace radaralloc::signal;

namespace {

RadarParams small_frame() {
  RadarParams p;
  p.frame_duration = 1e-3;
  return p;
}

}  // namespace

TEST(Waveform, OneUpAndOneDownWhenFrameIsTwoChirps) {
  RadarParams p;
  p.frame_duration = 2 * p.chirp_interval;
  const auto tx = synth_chirp_frame(p, 1);
  EXPECT_EQ(tx.samples.size(), static_cast<std::size_t>(std::floor(p.frame_duration * p.sample_rate)));
  const auto halves = chirp_halves(tx.samples.size(), p.sample_rate, p.chirp_interval);
  ASSERT_EQ(halves.size(), 2u);
  EXPECT_TRUE(halves[0].up);
  EXPECT_FALSE(halves[1].up);
  EXPECT_DOUBLE_EQ(tx.carrier, p.base_freq + p.bandwidth);
}

TEST(Waveform, InstantaneousFrequencyEndpoints) {
  const double tc = 50e-6, b = 200e6;
  EXPECT_NEAR(triangular_frequency(0.0, tc, b), 0.0, 1e-6);
  EXPECT_NEAR(triangular_frequency(tc, tc, b), b, 1e-3 * b);
  EXPECT_NEAR(triangular_frequency(std::nextafter(2 * tc, 0.0), tc, b), 0.0, 1e-3 * b);
  // Phase derivative agrees with the closed-form instantaneous frequency.
  for (double t : {3e-6, 31e-6, 67e-6, 99e-6}) {
    const double h = 1e-10;
    const double f = (triangular_phase(t + h, tc, b) - triangular_phase(t - h, tc, b)) / (2 * kPi * 2 * h);
    EXPECT_NEAR(f, triangular_frequency(t, tc, b), 1e-4 * b) << t;
  }
}

TEST(Waveform, ChirpRate) {
  RadarParams p;
  EXPECT_DOUBLE_EQ(p.chirp_rate(), 4e12);
}

TEST(Waveform, RejectsBadSubband) {
  RadarParams p;
  EXPECT_THROW(synth_chirp_frame(p, -1), std::invalid_argument);
  EXPECT_THROW(synth_chirp_frame(p, p.subband_count), std::invalid_argument);
}

TEST(Received, EmptySuperpositionIsZero) {
  const auto p = small_frame();
  const auto tx = synth_chirp_frame(p, 0);
  Rng rng(1);
  const auto rx = synth_received(p, tx, {}, {}, rng, 0.0);
  for (const auto& s : rx) EXPECT_EQ(s, cplx(0.0, 0.0));
}

TEST(Received, EchoCarriesItsPower) {
  const auto p = small_frame();
  const auto tx = synth_chirp_frame(p, 0);
  Rng rng(1);
  const std::vector<EchoSpec> echo{{50.0, 10.0, 2.5e-9}};
  const auto rx = synth_received(p, tx, echo, {}, rng, 0.0);
  std::size_t nonzero = 0;
  for (const auto& s : rx) {
    if (std::norm(s) == 0) continue;
    ++nonzero;
    EXPECT_NEAR(std::norm(s), 2.5e-9, 1e-20);
  }
  // Only the first round-trip delay is silent.
  const double tau = 2 * 50.0 / kSpeedOfLight;
  EXPECT_NEAR(static_cast<double>(rx.size() - nonzero), tau * p.sample_rate, 1.5);
}

TEST(Received, NoisePowerMatches) {
  const auto p = small_frame();
  const auto tx = synth_chirp_frame(p, 0);
  Rng rng(7);
  const auto rx = synth_received(p, tx, {}, {}, rng, 2.0);
  double acc = 0;
  for (const auto& s : rx) acc += std::norm(s);
  EXPECT_NEAR(acc / static_cast<double>(rx.size()), 2.0, 0.05);
}

TEST(Spectrum, DechirpedTransmitIsDc) {
  auto p = small_frame();
  p.window = Window::rectangular;
  const auto tx = synth_chirp_frame(p, 0);
  const auto spec = mix_and_spectrum(p, tx.samples, tx);
  ASSERT_FALSE(spec.up.empty());
  for (const auto* group : {&spec.up, &spec.down}) {
    for (const auto& s : *group) {
      EXPECT_DOUBLE_EQ(s.bin_width, p.sample_rate / p.fft_size);
      const double dc = std::norm(s.bins[0]);
      // Zero padding widens the mainlobe to Mf/len bins either side of DC.
      const double lobe = static_cast<double>(p.fft_size) / static_cast<double>(s.window_length);
      double rest = 0;
      for (std::size_t m = 1; m < s.bins.size(); ++m)
        if (std::abs(s.signed_bin(m)) > lobe) rest = std::max(rest, std::norm(s.bins[m]));
      EXPECT_NEAR(dc, static_cast<double>(s.window_length * s.window_length), 1e-6 * dc);
      EXPECT_GT(dc, 10 * rest);
    }
  }
}

TEST(Spectrum, ParsevalAgainstTimeDomain) {
  auto p = small_frame();
  const auto tx = synth_chirp_frame(p, 0);
  Rng rng(3);
  const std::vector<EchoSpec> echo{{40.0, -5.0, 1e-9}};
  const auto rx = synth_received(p, tx, echo, {}, rng, 1e-9);
  const auto spec = mix_and_spectrum(p, rx, tx);
  const auto halves = chirp_halves(rx.size(), p.sample_rate, p.chirp_interval);
  std::size_t up_i = 0, down_i = 0;
  for (const auto& h : halves) {
    const auto& s = h.up ? spec.up[up_i++] : spec.down[down_i++];
    double time_energy = 0;
    const std::size_t n = h.end - h.begin;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = 0.5 - 0.5 * std::cos(2 * kPi * static_cast<double>(i) / static_cast<double>(n - 1));
      time_energy += std::norm(rx[h.begin + i]) * w * w;
    }
    double freq_energy = 0;
    for (const auto& b : s.bins) freq_energy += std::norm(b);
    // Unnormalized transform: sum |R_m|^2 = Mf * sum |x_n|^2.
    EXPECT_NEAR(freq_energy, p.fft_size * time_energy, 1e-9 * freq_energy);
  }
}

TEST(Spectrum, LengthMismatchRejected) {
  const auto p = small_frame();
  const auto tx = synth_chirp_frame(p, 0);
  std::vector<cplx> rx(tx.samples.size() - 1);
  EXPECT_THROW(mix_and_spectrum(p, rx, tx), std::invalid_argument);
}

TEST(Beats, ZeroRangeZeroVelocity) {
  RadarParams p;
  const auto b = beat_frequencies(p, 0, 0, 0);
  EXPECT_EQ(b.up, 0.0);
  EXPECT_EQ(b.down, 0.0);
}

TEST(Beats, ReferenceTarget) {
  RadarParams p;
  const auto b = beat_frequencies(p, 50.0, 10.0, 0);
  const double c = 299792458.0;
  const double ranging = 200e6 / 50e-6 * 2 * 50.0 / c;
  const double doppler = 2 * 10.0 / c * 76e9;
  EXPECT_NEAR(b.up, -ranging + doppler, 1e-9);
  EXPECT_NEAR(b.down, ranging + doppler, 1e-9);
  // Rounded reference values (computed with c = 3e8) agree to 0.1%.
  EXPECT_NEAR(b.up, -1.3283e6, 1.4e3);
  EXPECT_NEAR(b.down, 1.3384e6, 1.4e3);
  EXPECT_NEAR(b.down - b.up, 2 * ranging, 1e-6);
}

TEST(Beats, InversionRoundTrip) {
  RadarParams p;
  for (double d = 0.5; d <= 300.0; d += 13.7) {
    for (double v = -70.0; v <= 70.0; v += 9.3) {
      for (int m = 0; m < p.subband_count; ++m) {
        const auto b = beat_frequencies(p, d, v, m);
        const auto rv = invert_beats(p, b.up, b.down, m);
        EXPECT_NEAR(rv.range, d, 1e-9 * d);
        EXPECT_NEAR(rv.velocity, v, 1e-9 * std::max(1.0, std::abs(v)));
      }
    }
  }
}

TEST(Beats, EqualBeatsMeanZeroRange) {
  RadarParams p;
  const auto rv = invert_beats(p, 1000.0, 1000.0, 0);
  EXPECT_NEAR(rv.range, 0.0, 1e-12);
  EXPECT_NEAR(rv.velocity, 1000.0 * kSpeedOfLight / (2 * p.carrier(0)), 1e-9);
}

TEST(Beats, FftPeaksMatchClosedForm) {
  RadarParams p;
  const auto tx = synth_chirp_frame(p, 0);
  Rng rng(11);
  const std::vector<EchoSpec> echo{{50.0, 10.0, 4 * p.noise_power}};
  const auto rx = synth_received(p, tx, echo, {}, rng);
  const auto spec = mix_and_spectrum(p, rx, tx);
  const auto up = average_power(spec.up);
  const auto down = average_power(spec.down);
  const auto b = beat_frequencies(p, 50.0, 10.0, 0);
  auto peak = [](const PowerSpectrum& s) {
    const auto it = std::max_element(s.power.begin(), s.power.end());
    return s.frequency(static_cast<double>(it - s.power.begin()));
  };
  EXPECT_NEAR(peak(up), b.up, up.bin_width);
  EXPECT_NEAR(peak(down), b.down, down.bin_width);
}

TEST(Detect, PureNoiseGivesNothing) {
  RadarParams p;
  const auto tx = synth_chirp_frame(p, 0);
  Rng rng(5);
  int clean = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto rx = synth_received(p, tx, {}, {}, rng);
    if (detect_targets(p, mix_and_spectrum(p, rx, tx), 0).empty()) ++clean;
  }
  EXPECT_GE(clean, 9);
}

TEST(Detect, SingleEchoWithinOneBin) {
  RadarParams p;
  const auto tx = synth_chirp_frame(p, 0);
  Rng rng(6);
  const std::vector<EchoSpec> echo{{50.0, 10.0, 4 * p.noise_power}};
  const auto dets = detect_targets(p, mix_and_spectrum(p, synth_received(p, tx, echo, {}, rng), tx), 0);
  ASSERT_EQ(dets.size(), 1u);
  const double native_bin = p.sample_rate / (p.chirp_interval * p.sample_rate);
  const double range_bin = kSpeedOfLight * p.chirp_interval * native_bin / (4 * p.bandwidth);
  const double vel_bin = kSpeedOfLight * native_bin / (2 * p.carrier(0));
  EXPECT_NEAR(dets[0].range, 50.0, range_bin);
  EXPECT_NEAR(dets[0].velocity, 10.0, vel_bin);
}

TEST(Detect, TwoSeparatedEchoes) {
  RadarParams p;
  const auto tx = synth_chirp_frame(p, 0);
  Rng rng(8);
  const std::vector<EchoSpec> echoes{{40.0, 5.0, 4 * p.noise_power}, {90.0, -8.0, 4 * p.noise_power}};
  auto dets = detect_targets(p, mix_and_spectrum(p, synth_received(p, tx, echoes, {}, rng), tx), 0);
  ASSERT_EQ(dets.size(), 2u);
  std::sort(dets.begin(), dets.end(), [](const auto& a, const auto& b) { return a.range < b.range; });
  EXPECT_NEAR(dets[0].range, 40.0, 1.0);
  EXPECT_NEAR(dets[1].range, 90.0, 1.0);
}

TEST(Power, CrossLaneHandEvaluated) {
  RadarParams p;
  p.beamwidth = 1e9;  // pattern is 1 everywhere that matters
  // 25 dBm = 0.316 W, 48 dB = 63096, Ae = 5e-6, g = 0.1, L^2 + d^2 = 2516.
  const double expected = 0.31622776601683794 * 63095.7344480193 * 5e-6 * 0.1 / (4 * kPi * 2516.0);
  EXPECT_NEAR(interference_power_cross_lane(p, 50.0), expected, 1e-12 * expected);
  EXPECT_NEAR(interference_power_cross_lane(p, 50.0), 3.155e-7, 0.001e-7);
}

TEST(Power, SameLaneHandEvaluated) {
  RadarParams p;
  EXPECT_NEAR(interference_power_same_lane(p, 50.0), 3.17e-8, 0.01e-8);
  EXPECT_NEAR(interference_power_same_lane(p, 100.0), interference_power_same_lane(p, 50.0) / 4, 1e-20);
  EXPECT_THROW(interference_power_same_lane(p, 0.0), std::invalid_argument);
}

TEST(Power, FormulaIdentity) {
  RadarParams p;
  p.beamwidth = 1e9;
  p.tx_power_srr = p.tx_power_lrr;
  for (double d : {5.0, 20.0, 77.0}) {
    const double cross = interference_power_cross_lane(p, d);
    const double same = interference_power_same_lane(p, std::hypot(p.lane_gap, d));
    EXPECT_NEAR(cross, same, 1e-12 * same);
  }
}

TEST(Power, DecreasingPastPeak) {
  RadarParams p;
  // Close in, the lateral offset puts the source outside the beam; the
  // received power peaks where the pattern and path loss balance, then falls.
  double best_d = 1, best = 0;
  for (double d = 1.0; d < 500.0; d += 0.5) {
    const double v = interference_power_cross_lane(p, d);
    if (v > best) best = v, best_d = d;
  }
  EXPECT_GT(best_d, 20.0);
  EXPECT_LT(best_d, 150.0);
  double prev = best;
  for (double d = best_d + 1; d < 2000.0; d += 1.0) {
    const double v = interference_power_cross_lane(p, d);
    EXPECT_LT(v, prev) << d;
    prev = v;
  }
  double prev_same = interference_power_same_lane(p, 1.0);
  for (double d = 2.0; d < 500.0; d += 1.0) {
    const double v = interference_power_same_lane(p, d);
    EXPECT_LT(v, prev_same);
    prev_same = v;
  }
}

TEST(Pattern, Properties) {
  const double bw = deg_to_rad(10.0);
  EXPECT_DOUBLE_EQ(antenna_pattern(0.0, bw), 1.0);
  EXPECT_NEAR(antenna_pattern(bw / 2, bw), 0.5, 1e-15);
  for (double t : {0.01, 0.1, 0.7}) EXPECT_DOUBLE_EQ(antenna_pattern(-t, bw), antenna_pattern(t, bw));
  EXPECT_THROW(antenna_pattern(0.0, 0.0), std::invalid_argument);
}

TEST(NoiseLevel, NothingDiscarded) {
  const std::vector<double> power{1.0, 4.0, 2.0, 0.5};
  EXPECT_DOUBLE_EQ(estimate_noise_level(power, 2.0, 0), 15.0);
}

TEST(NoiseLevel, HandExample) {
  SpectrumSamples s;
  s.bins = {cplx(3, 0), cplx(0, 1), cplx(-1, 0), cplx(0, -1)};
  s.bin_width = 1.0;
  EXPECT_DOUBLE_EQ(estimate_noise_level(s, 1), 4.0);
}

TEST(NoiseLevel, WhiteNoiseWithinTenPercent) {
  const int mf = 4096;
  const double fs = 20e6, sigma2 = 3.0;
  std::mt19937_64 rng(99);
  std::normal_distribution<double> g(0.0, std::sqrt(sigma2 / 2));
  std::vector<cplx> x(mf);
  int within = 0;
  for (int trial = 0; trial < 100; ++trial) {
    for (auto& v : x) v = cplx(g(rng), g(rng));
    SpectrumSamples s;
    s.bins = fft::forward(x);
    s.bin_width = fs / mf;
    // Unnormalized transform of Mf samples: expected total is Mf * fs * sigma^2.
    const double est = estimate_noise_level(s, 20) / (mf * fs);
    if (std::abs(est - sigma2) < 0.1 * sigma2) ++within;
  }
  EXPECT_EQ(within, 100);
}

TEST(NoiseLevel, PermutationInvariantAndMonotone) {
  std::mt19937_64 rng(4);
  std::exponential_distribution<double> e(1.0);
  std::vector<double> v(512);
  for (auto& x : v) x = e(rng);
  const double base = estimate_noise_level(v, 1.0, 20);
  auto shuffled = v;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  EXPECT_NEAR(estimate_noise_level(shuffled, 1.0, 20), base, 1e-12 * base);

  auto sorted = v;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const double kth = sorted[19];
  for (std::size_t i = 0; i < v.size(); i += 37) {
    if (v[i] >= kth) continue;
    auto bumped = v;
    bumped[i] = std::min(kth, v[i] + 0.5);
    EXPECT_GE(estimate_noise_level(bumped, 1.0, 20), base - 1e-12);
  }
  EXPECT_THROW(estimate_noise_level(v, 1.0, 512), std::invalid_argument);
}

TEST(NoiseLevel, RelativeLevel) {
  EXPECT_DOUBLE_EQ(relative_noise_level(22.0, 2.0), 11.0);
  EXPECT_THROW(relative_noise_level(1.0, 0.0), std::invalid_argument);
}

TEST(NoiseLevel, InterferenceFreeFrameIsOne) {
  RadarParams p;
  const auto tx = synth_chirp_frame(p, 0);
  Rng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    const double eta = measure_eta(p, tx, {}, {}, rng);
    EXPECT_GT(eta, 0.8);
    EXPECT_LT(eta, 1.2);
  }
}

TEST(Segments, Partition) {
  const auto segs = piecewise_if_segments(200e6, 50e-6, 20e-6, 100e-6);
  ASSERT_FALSE(segs.empty());
  EXPECT_DOUBLE_EQ(segs.front().t_start, 0.0);
  EXPECT_NEAR(segs.back().t_end, 100e-6, 1e-18);
  for (std::size_t i = 0; i + 1 < segs.size(); ++i) EXPECT_DOUBLE_EQ(segs[i].t_end, segs[i + 1].t_start);
}

TEST(Segments, BreakpointsAtChirpEdges) {
  const auto segs = piecewise_if_segments(200e6, 50e-6, 20e-6, 100e-6);
  std::vector<double> edges;
  for (const auto& s : segs) edges.push_back(s.t_start * 1e6);
  edges.push_back(segs.back().t_end * 1e6);
  const std::vector<double> expected{0, 20, 40, 50, 60, 80, 100};
  ASSERT_EQ(edges.size(), expected.size());
  for (std::size_t i = 0; i < edges.size(); ++i) EXPECT_NEAR(edges[i], expected[i], 1e-9);
}

TEST(Segments, SlopesAreRampDifferences) {
  const double b = 200e6, tw = 50e-6, ti = 20e-6;
  const auto segs = piecewise_if_segments(b, tw, ti, 400e-6);
  for (const auto& s : segs) {
    bool matched = false;
    for (double si : {b / ti, -b / ti})
      for (double sw : {b / tw, -b / tw}) matched = matched || std::abs(s.slope - (si - sw)) < 1e-6 * b / ti;
    EXPECT_TRUE(matched);
    EXPECT_NEAR(s.f_end - s.f_start, s.slope * (s.t_end - s.t_start), 1e-6 * b);
  }
  EXPECT_THROW(piecewise_if_segments(b, tw, tw, 1e-4), std::invalid_argument);
}

TEST(Envelope, SingleSweepIsFlat) {
  const std::vector<IfSegment> one{{0.0, 50e-6, 0.0, 200e6, 4e12}};
  const auto env = approx_interference_spectrum(one);
  EXPECT_FALSE(env.has_dirac());
  const double h = env.magnitude_at(1e6);
  EXPECT_GT(h, 0);
  for (double f : {1.0, 5e7, 1e8, 1.99e8}) EXPECT_DOUBLE_EQ(env.magnitude_at(f), h);
  EXPECT_EQ(env.magnitude_at(-1.0), 0.0);
  EXPECT_EQ(env.magnitude_at(2.01e8), 0.0);
}

TEST(Envelope, ZeroSlopeFlaggedAsDirac) {
  const std::vector<IfSegment> segs{{0.0, 1e-5, 3e5, 3e5, 0.0}};
  const auto env = approx_interference_spectrum(segs);
  ASSERT_TRUE(env.has_dirac());
  EXPECT_DOUBLE_EQ(env.diracs[0].frequency, 3e5);
}

namespace {

// Dechirped interference in one working window, sampled fast enough that the
// frequency difference never aliases.
struct Synth {
  std::vector<cplx> r;
  double fs;
};

Synth dechirped_interference(double b, double tw, double ti, double frame, double fs) {
  const auto n = static_cast<std::size_t>(frame * fs);
  Synth s{std::vector<cplx>(n), fs};
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    s.r[i] = std::polar(1.0, triangular_phase(t, ti, b) - triangular_phase(t, tw, b));
  }
  return s;
}

}  // namespace

TEST(Envelope, ParsevalAgainstSynthesis) {
  const double b = 1e6, tw = 50e-6, ti = 20e-6, frame = 100e-6, fs = 20e6;
  const auto env = approx_interference_spectrum(piecewise_if_segments(b, tw, ti, frame));
  const auto s = dechirped_interference(b, tw, ti, frame, fs);
  double energy = 0;
  for (const auto& v : s.r) energy += std::norm(v) / fs;
  EXPECT_NEAR(env.total_power(), energy, 0.2 * energy);
}

TEST(Envelope, NoBinAboveFiveTimesPrediction) {
  const double b = 1e6, tw = 50e-6, ti = 20e-6, frame = 100e-6, fs = 20e6;
  const auto env = approx_interference_spectrum(piecewise_if_segments(b, tw, ti, frame));
  const auto s = dechirped_interference(b, tw, ti, frame, fs);
  const std::size_t mf = 1 << 16;
  std::vector<cplx> padded(mf);
  std::copy(s.r.begin(), s.r.end(), padded.begin());
  const auto spec = fft::forward(padded);
  double peak_env = 0;
  for (double f = -b; f <= b; f += 100.0) peak_env = std::max(peak_env, env.magnitude_at(f));
  int compared = 0;
  for (std::size_t m = 0; m < mf; ++m) {
    const double f = (m < mf / 2 ? static_cast<double>(m) : static_cast<double>(m) - mf) * fs / mf;
    const double predicted = env.magnitude_at(f);
    if (predicted == 0) continue;
    ++compared;
    EXPECT_LE(std::abs(spec[m]) / fs, 5 * predicted) << "f=" << f;
  }
  EXPECT_GT(compared, 100);
  EXPECT_GT(peak_env, 0);
}
