#pragma once

// FMCW waveform synthesis, dechirp spectra, beat-frequency geometry,
// interference power models and the ordered-statistics noise estimator.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "radaralloc/common.hpp"
#include "radaralloc/fft.hpp"

namespace radaralloc::signal {

enum class Window { rectangular, hann };

/// Waveform and link-budget constants shared by every radar in a scenario.
struct RadarParams {
  double bandwidth = 200e6;            // B, Hz
  double chirp_interval = 50e-6;       // Tc, s
  double frame_duration = 5e-3;        // Tf, s
  double period = 0.1;                 // T, s
  double base_freq = 76e9;             // f0, Hz
  int subband_count = 2;               // M
  double tx_power_lrr = dbm_to_watt(25.0);
  double tx_power_srr = dbm_to_watt(15.0);
  double antenna_gain = db_to_linear(48.0);
  double effective_area = 5e-6;        // m^2
  double decay = 0.1;                  // g
  double lane_gap = 4.0;               // L, m
  double noise_power = 3e-9;           // sigma^2, W
  double eta_threshold = 11.0;         // eta0
  int discard_count = 20;              // K
  int fft_size = 4096;                 // Mf
  double sample_rate = 20e6;           // fs, Hz
  double beamwidth = deg_to_rad(10.0); // 3 dB beamwidth of p_r
  Window window = Window::hann;
  double detection_factor = 8.0;

  double carrier(int subband) const { return base_freq + subband * bandwidth; }
  double chirp_rate() const { return bandwidth / chirp_interval; }
  double bin_width() const { return sample_rate / fft_size; }
  std::size_t frame_samples() const {
    return static_cast<std::size_t>(std::floor(frame_duration * sample_rate + 1e-9));
  }

  void validate() const {
    auto require = [](bool ok, const char* what) {
      if (!ok) throw ConfigError(std::string("radar params: ") + what);
    };
    require(bandwidth > 0, "bandwidth must be positive");
    require(chirp_interval > 0 && chirp_interval <= frame_duration && frame_duration <= period,
            "need 0 < chirp_interval <= frame_duration <= period");
    require(subband_count >= 1, "subband_count must be >= 1");
    require(fft_size > 0 && (fft_size & (fft_size - 1)) == 0, "fft_size must be a power of two");
    require(discard_count >= 0 && discard_count < fft_size, "need 0 <= discard_count < fft_size");
    require(sample_rate > 0, "sample_rate must be positive");
    require(noise_power > 0, "noise_power must be positive");
    require(eta_threshold > 0, "eta_threshold must be positive");
    require(decay > 0 && decay <= 1, "decay must lie in (0, 1]");
    require(beamwidth > 0, "beamwidth must be positive");
    require(lane_gap >= 0, "lane_gap must be non-negative");
    require(detection_factor > 1, "detection_factor must exceed 1");
  }
};

// ---------------------------------------------------------------------------
// Waveform

/// Baseband phase (rad) of a triangular chirp train at time t. Periodic in 2*tc:
/// up-ramp pi*(B/tc)*u^2 on [0, tc), down-ramp -pi*(B/tc)*(u - 2tc)^2 on [tc, 2tc).
inline double triangular_phase(double t, double chirp_interval, double bandwidth) {
  const double period = 2.0 * chirp_interval;
  const double u = t - period * std::floor(t / period);
  const double k = bandwidth / chirp_interval;
  if (u < chirp_interval) return kPi * k * u * u;
  const double d = u - period;
  return -kPi * k * d * d;
}

/// Instantaneous baseband frequency (Hz) of the triangular chirp train.
inline double triangular_frequency(double t, double chirp_interval, double bandwidth) {
  const double period = 2.0 * chirp_interval;
  const double u = t - period * std::floor(t / period);
  const double k = bandwidth / chirp_interval;
  return u < chirp_interval ? k * u : k * (period - u);
}

struct ChirpTrain {
  std::vector<cplx> samples;
  int subband = 0;
  double chirp_interval = 0;
  double sample_rate = 0;
  double carrier = 0;
};

inline ChirpTrain synth_chirp_frame(const RadarParams& p, int subband) {
  if (subband < 0 || subband >= p.subband_count)
    throw std::invalid_argument("synth_chirp_frame: subband out of range");
  ChirpTrain tx;
  tx.subband = subband;
  tx.chirp_interval = p.chirp_interval;
  tx.sample_rate = p.sample_rate;
  tx.carrier = p.carrier(subband);
  const std::size_t n = p.frame_samples();
  tx.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / p.sample_rate;
    tx.samples[i] = std::polar(1.0, triangular_phase(t, p.chirp_interval, p.bandwidth));
  }
  return tx;
}

/// A point target. Positive velocity means approaching.
struct EchoSpec {
  double range = 0;
  double radial_velocity = 0;
  double rx_power = 0;
};

/// Another radar transmitting in the same subband.
struct InterfererSpec {
  double distance = 0;
  double relative_velocity = 0;
  double rx_power = 0;
  double chirp_interval = 0;
  double start_offset = 0;   // time shift of the interferer's chirp train, s
  double carrier_phase = 0;  // rad
};

/// Received baseband (relative to the working carrier): echoes, interference and
/// circular white noise of total power noise_power. Delays are applied to the
/// analytic waveform phase, so there is no resampling error.
inline std::vector<cplx> synth_received(const RadarParams& p, const ChirpTrain& tx,
                                        std::span<const EchoSpec> echoes,
                                        std::span<const InterfererSpec> interferers, Rng& rng,
                                        double noise_power) {
  for (const auto& e : echoes)
    if (e.rx_power < 0 || e.range <= 0)
      throw std::invalid_argument("synth_received: echo needs range > 0 and power >= 0");
  for (const auto& h : interferers)
    if (h.rx_power < 0 || h.distance <= 0 || h.chirp_interval <= 0)
      throw std::invalid_argument("synth_received: invalid interferer");
  if (noise_power < 0) throw std::invalid_argument("synth_received: negative noise power");

  const std::size_t n = tx.samples.size();
  const double fs = tx.sample_rate;
  const double frame = static_cast<double>(n) / fs;
  const double fc = tx.carrier;
  std::vector<cplx> rx(n, cplx(0.0, 0.0));

  for (const auto& e : echoes) {
    if (e.rx_power == 0) continue;
    const double amp = std::sqrt(e.rx_power);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / fs;
      const double tau = 2.0 * (e.range - e.radial_velocity * t) / kSpeedOfLight;
      const double tt = t - tau;
      if (tt < 0 || tt >= frame) continue;
      const double carrier_cycles = fc * tau;
      const double phase = triangular_phase(tt, tx.chirp_interval, p.bandwidth) -
                           2.0 * kPi * (carrier_cycles - std::floor(carrier_cycles));
      rx[i] += std::polar(amp, phase);
    }
  }

  for (const auto& h : interferers) {
    if (h.rx_power == 0) continue;
    const double amp = std::sqrt(h.rx_power);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / fs;
      const double tau = (h.distance - h.relative_velocity * t) / kSpeedOfLight;
      const double carrier_cycles = fc * tau;
      const double phase = triangular_phase(t - h.start_offset - tau, h.chirp_interval, p.bandwidth) -
                           2.0 * kPi * (carrier_cycles - std::floor(carrier_cycles)) +
                           h.carrier_phase;
      rx[i] += std::polar(amp, phase);
    }
  }

  if (noise_power > 0) {
    std::normal_distribution<double> gauss(0.0, std::sqrt(noise_power / 2.0));
    for (auto& s : rx) s += cplx(gauss(rng), gauss(rng));
  }
  return rx;
}

inline std::vector<cplx> synth_received(const RadarParams& p, const ChirpTrain& tx,
                                        std::span<const EchoSpec> echoes,
                                        std::span<const InterfererSpec> interferers, Rng& rng) {
  return synth_received(p, tx, echoes, interferers, rng, p.noise_power);
}

// ---------------------------------------------------------------------------
// Dechirp and spectra

struct SpectrumSamples {
  std::vector<cplx> bins;
  double bin_width = 0;
  std::size_t window_length = 0;  // time samples that entered the transform
  bool up = true;

  /// Signed frequency of bin m (upper half maps to negative frequencies).
  double frequency(std::size_t m) const { return signed_bin(m) * bin_width; }
  double signed_bin(std::size_t m) const {
    const auto n = bins.size();
    return m < n / 2 ? static_cast<double>(m) : static_cast<double>(m) - static_cast<double>(n);
  }
};

/// Bin-wise power averaged over several half-chirp spectra.
struct PowerSpectrum {
  std::vector<double> power;
  double bin_width = 0;
  std::size_t window_length = 0;

  double frequency(double fractional_bin) const {
    const auto n = static_cast<double>(power.size());
    double b = fractional_bin;
    if (b >= n / 2) b -= n;
    return b * bin_width;
  }
};

struct FrameSpectra {
  std::vector<SpectrumSamples> up;
  std::vector<SpectrumSamples> down;
};

struct HalfWindow {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool up = true;
};

/// Sample ranges of every complete chirp half inside the frame.
inline std::vector<HalfWindow> chirp_halves(std::size_t n_samples, double sample_rate,
                                            double chirp_interval) {
  std::vector<HalfWindow> halves;
  const double per_half = chirp_interval * sample_rate;
  for (std::size_t k = 0;; ++k) {
    const auto b = static_cast<std::size_t>(std::ceil(static_cast<double>(k) * per_half - 1e-9));
    const auto e =
        static_cast<std::size_t>(std::ceil(static_cast<double>(k + 1) * per_half - 1e-9));
    if (e > n_samples || e <= b) break;
    halves.push_back({b, e, k % 2 == 0});
  }
  return halves;
}

inline double window_weight(Window w, std::size_t i, std::size_t n) {
  if (w == Window::rectangular || n < 2) return 1.0;
  return 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(n - 1));
}

/// Dechirp (rx * conj(tx)) and transform each chirp half separately at
/// fft_size points; halves shorter than fft_size are zero padded, longer ones
/// truncated.
inline FrameSpectra mix_and_spectrum(const RadarParams& p, std::span<const cplx> rx,
                                     const ChirpTrain& tx) {
  if (rx.size() != tx.samples.size())
    throw std::invalid_argument("mix_and_spectrum: rx and tx lengths differ");
  FrameSpectra out;
  const auto mf = static_cast<std::size_t>(p.fft_size);
  std::vector<cplx> buf(mf);
  for (const auto& h : chirp_halves(rx.size(), tx.sample_rate, tx.chirp_interval)) {
    const std::size_t len = std::min(h.end - h.begin, mf);
    std::fill(buf.begin(), buf.end(), cplx(0.0, 0.0));
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t s = h.begin + i;
      buf[i] = rx[s] * std::conj(tx.samples[s]) * window_weight(p.window, i, len);
    }
    SpectrumSamples spec;
    spec.bins = fft::forward(buf);
    spec.bin_width = tx.sample_rate / static_cast<double>(mf);
    spec.window_length = len;
    spec.up = h.up;
    (h.up ? out.up : out.down).push_back(std::move(spec));
  }
  return out;
}

inline PowerSpectrum average_power(std::span<const SpectrumSamples> spectra) {
  if (spectra.empty()) throw std::invalid_argument("average_power: no spectra");
  PowerSpectrum ps;
  ps.power.assign(spectra.front().bins.size(), 0.0);
  ps.bin_width = spectra.front().bin_width;
  ps.window_length = spectra.front().window_length;
  for (const auto& s : spectra) {
    if (s.bins.size() != ps.power.size())
      throw std::invalid_argument("average_power: spectra differ in length");
    for (std::size_t m = 0; m < s.bins.size(); ++m) ps.power[m] += std::norm(s.bins[m]);
  }
  const double inv = 1.0 / static_cast<double>(spectra.size());
  for (auto& v : ps.power) v *= inv;
  return ps;
}

// ---------------------------------------------------------------------------
// Beat frequencies

struct BeatPair {
  double up = 0;
  double down = 0;
};

inline BeatPair beat_frequencies(const RadarParams& p, double range, double velocity, int subband) {
  if (range < 0) throw std::invalid_argument("beat_frequencies: negative range");
  const double ranging = p.chirp_rate() * 2.0 * range / kSpeedOfLight;
  const double doppler = 2.0 * velocity / kSpeedOfLight * p.carrier(subband);
  return {-ranging + doppler, ranging + doppler};
}

struct RangeVelocity {
  double range = 0;
  double velocity = 0;
};

inline RangeVelocity invert_beats(const RadarParams& p, double f_up, double f_down, int subband) {
  return {(f_down - f_up) * kSpeedOfLight * p.chirp_interval / (4.0 * p.bandwidth),
          (f_up + f_down) * kSpeedOfLight / (4.0 * p.carrier(subband))};
}

/// Beat frequencies produced by a synchronized interferer with the same chirp
/// interval (one-way propagation).
inline BeatPair ghost_frequencies(const RadarParams& p, double distance, double velocity,
                                  int subband) {
  const double ranging = p.chirp_rate() * distance / kSpeedOfLight;
  const double doppler = velocity / kSpeedOfLight * p.carrier(subband);
  return {-ranging + doppler, ranging + doppler};
}

// ---------------------------------------------------------------------------
// Interference power geometry

/// Normalized Gaussian mainlobe with half-power full width `beamwidth`.
inline double antenna_pattern(double theta, double beamwidth) {
  if (beamwidth <= 0) throw std::invalid_argument("antenna_pattern: beamwidth must be positive");
  return std::exp(-4.0 * std::numbers::ln2 * theta * theta / (beamwidth * beamwidth));
}

/// Facing long-range radar in the other lane at longitudinal distance d.
inline double interference_power_cross_lane(const RadarParams& p, double d) {
  if (d < 0) throw std::invalid_argument("interference_power_cross_lane: negative distance");
  const double l = p.lane_gap;
  const double pr = antenna_pattern(std::atan2(l, d), p.beamwidth);
  return p.tx_power_lrr * p.antenna_gain * p.effective_area * p.decay /
         (4.0 * kPi * (l * l + d * d)) * pr * pr;
}

/// Rear short-range radar of the car ahead in the same lane.
inline double interference_power_same_lane(const RadarParams& p, double d) {
  if (!(d > 0)) throw std::invalid_argument("interference_power_same_lane: distance must be > 0");
  return p.tx_power_srr * p.antenna_gain * p.effective_area * p.decay / (4.0 * kPi * d * d);
}

// ---------------------------------------------------------------------------
// Ordered-statistics noise level

/// Discard the K largest bins and rescale: (Mf/(Mf-K)) * sum_{m>=K} |R_(m)|^2 * df.
inline double estimate_noise_level(std::span<const double> power, double bin_width, int discard) {
  const auto n = power.size();
  if (discard < 0 || static_cast<std::size_t>(discard) >= n)
    throw std::invalid_argument("estimate_noise_level: need 0 <= K < Mf");
  std::vector<double> v(power.begin(), power.end());
  const auto k = static_cast<std::ptrdiff_t>(discard);
  if (k > 0) std::nth_element(v.begin(), v.begin() + (k - 1), v.end(), std::greater<>());
  double kept = 0;
  for (auto it = v.begin() + k; it != v.end(); ++it) kept += *it;
  return static_cast<double>(n) / static_cast<double>(n - static_cast<std::size_t>(k)) * kept *
         bin_width;
}

inline double estimate_noise_level(const SpectrumSamples& spec, int discard) {
  std::vector<double> power(spec.bins.size());
  std::transform(spec.bins.begin(), spec.bins.end(), power.begin(),
                 [](const cplx& c) { return std::norm(c); });
  return estimate_noise_level(power, spec.bin_width, discard);
}

inline double estimate_noise_level(const PowerSpectrum& spec, int discard) {
  return estimate_noise_level(spec.power, spec.bin_width, discard);
}

inline double relative_noise_level(double estimate, double interference_free) {
  if (!(interference_free > 0))
    throw std::invalid_argument("relative_noise_level: interference-free level must be positive");
  return estimate / interference_free;
}

/// K counts native resolution cells; a zero-padded spectrum spreads each cell
/// over fft_size/window_length bins, so the discard grows accordingly.
inline int effective_discard(const RadarParams& p, std::size_t window_length) {
  const double pad = static_cast<double>(p.fft_size) / static_cast<double>(std::max<std::size_t>(1, window_length));
  const auto k = static_cast<int>(std::lround(p.discard_count * std::max(1.0, pad)));
  return std::min(k, p.fft_size - 1);
}

/// Noise level of one frame: half-chirp spectra of each ramp direction are
/// power-averaged, trimmed, and the two directions averaged.
inline double frame_noise_level(const RadarParams& p, const FrameSpectra& spectra) {
  double total = 0;
  int parts = 0;
  for (const auto* group : {&spectra.up, &spectra.down}) {
    if (group->empty()) continue;
    const auto avg = average_power(*group);
    total += estimate_noise_level(avg, effective_discard(p, avg.window_length));
    ++parts;
  }
  if (parts == 0) throw std::invalid_argument("frame_noise_level: frame holds no chirp half");
  return total / parts;
}

/// Interference-free noise level N_IF for the given chirp interval, obtained
/// by running the estimator on pure receiver noise (fixed seed, cached).
inline double interference_free_level(const RadarParams& p, double chirp_interval) {
  using Key = std::tuple<double, double, double, int, int, int>;
  static std::mutex mutex;
  static std::map<Key, double> cache;
  const Key key{chirp_interval, p.frame_duration, p.sample_rate, p.fft_size, p.discard_count,
                static_cast<int>(p.window)};
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) return it->second * p.noise_power;
  }
  RadarParams unit = p;
  unit.chirp_interval = chirp_interval;
  unit.noise_power = 1.0;
  const auto tx = synth_chirp_frame(unit, 0);
  Rng rng(0x5eed'ca1bULL);
  constexpr int kTrials = 16;
  double acc = 0;
  for (int trial = 0; trial < kTrials; ++trial) {
    const auto rx = synth_received(unit, tx, {}, {}, rng);
    acc += frame_noise_level(unit, mix_and_spectrum(unit, rx, tx));
  }
  const double level = acc / kTrials;
  {
    std::lock_guard lock(mutex);
    cache.emplace(key, level);
  }
  return level * p.noise_power;
}

/// Full receive chain: synthesize, dechirp, estimate, normalize.
inline double measure_eta(const RadarParams& p, const ChirpTrain& tx,
                          std::span<const EchoSpec> echoes,
                          std::span<const InterfererSpec> interferers, Rng& rng) {
  const auto rx = synth_received(p, tx, echoes, interferers, rng);
  const auto spectra = mix_and_spectrum(p, rx, tx);
  return relative_noise_level(frame_noise_level(p, spectra),
                              interference_free_level(p, tx.chirp_interval));
}

// ---------------------------------------------------------------------------
// Detection

struct Peak {
  double bin = 0;        // interpolated, in [0, Mf)
  double frequency = 0;  // Hz, signed
  double power = 0;
};

struct Detection {
  double range = 0;
  double velocity = 0;
  double power = 0;
  double f_up = 0;
  double f_down = 0;
};

/// Local maxima above detection_factor x (mean of the non-discarded bins).
/// Peaks more than 25 dB below a stronger peak within 8 resolution cells are
/// treated as window sidelobes.
inline std::vector<Peak> find_peaks(const RadarParams& p, const PowerSpectrum& spec) {
  const auto n = spec.power.size();
  if (n < 3) return {};
  const int k = effective_discard(p, spec.window_length);
  std::vector<double> sorted(spec.power);
  std::nth_element(sorted.begin(), sorted.begin() + k, sorted.end(), std::greater<>());
  const double floor_mean =
      std::accumulate(sorted.begin() + k, sorted.end(), 0.0) / static_cast<double>(n - k);
  const double threshold = p.detection_factor * floor_mean;

  std::vector<Peak> peaks;
  for (std::size_t m = 0; m < n; ++m) {
    const double a = spec.power[(m + n - 1) % n];
    const double b = spec.power[m];
    const double c = spec.power[(m + 1) % n];
    if (!(b > threshold && b > a && b >= c)) continue;
    double delta = 0;
    if (a > 0 && c > 0) {
      const double la = std::log(a), lb = std::log(b), lc = std::log(c);
      const double den = la - 2 * lb + lc;
      if (den < 0) delta = std::clamp(0.5 * (la - lc) / den, -0.5, 0.5);
    }
    const double bin = static_cast<double>(m) + delta;
    peaks.push_back({bin, spec.frequency(bin < 0 ? bin + static_cast<double>(n) : bin), b});
  }

  const double pad = static_cast<double>(n) / static_cast<double>(std::max<std::size_t>(1, spec.window_length));
  const double span = 8.0 * std::max(1.0, pad);
  const double margin = db_to_linear(25.0);
  std::vector<Peak> kept;
  for (const auto& pk : peaks) {
    bool sidelobe = false;
    for (const auto& other : peaks) {
      double d = std::abs(other.bin - pk.bin);
      d = std::min(d, static_cast<double>(n) - d);
      if (d <= span && other.power > margin * pk.power) {
        sidelobe = true;
        break;
      }
    }
    if (!sidelobe) kept.push_back(pk);
  }
  return kept;
}

/// Pair up-ramp and down-ramp peaks greedily by ascending |frequency| (ties:
/// stronger first) and invert each pair to range and velocity.
inline std::vector<Detection> detect_targets(const RadarParams& p, const PowerSpectrum& up,
                                             const PowerSpectrum& down, int subband) {
  auto order = [](std::vector<Peak> v) {
    std::sort(v.begin(), v.end(), [](const Peak& a, const Peak& b) {
      const double fa = std::abs(a.frequency), fb = std::abs(b.frequency);
      if (fa != fb) return fa < fb;
      return a.power > b.power;
    });
    return v;
  };
  const auto pu = order(find_peaks(p, up));
  const auto pd = order(find_peaks(p, down));
  std::vector<Detection> out;
  for (std::size_t i = 0; i < std::min(pu.size(), pd.size()); ++i) {
    const auto rv = invert_beats(p, pu[i].frequency, pd[i].frequency, subband);
    out.push_back({rv.range, rv.velocity, 0.5 * (pu[i].power + pd[i].power), pu[i].frequency,
                   pd[i].frequency});
  }
  return out;
}

inline std::vector<Detection> detect_targets(const RadarParams& p, const FrameSpectra& spectra,
                                             int subband) {
  return detect_targets(p, average_power(spectra.up), average_power(spectra.down), subband);
}

// ---------------------------------------------------------------------------
// Piecewise-LFM view of non-coherent interference

struct IfSegment {
  double t_start = 0;
  double t_end = 0;
  double f_start = 0;
  double f_end = 0;
  double slope = 0;  // Hz/s
};

/// Instantaneous frequency difference (interferer minus working radar) of two
/// synchronized triangular chirp trains, split at every ramp edge of either.
inline std::vector<IfSegment> piecewise_if_segments(double bandwidth, double tc_working,
                                                    double tc_interfering, double frame) {
  if (!(tc_working > 0 && tc_interfering > 0 && frame > 0 && bandwidth > 0))
    throw std::invalid_argument("piecewise_if_segments: intervals must be positive");
  if (std::abs(tc_working - tc_interfering) <= 1e-12 * std::max(tc_working, tc_interfering))
    throw std::invalid_argument(
        "piecewise_if_segments: equal chirp intervals give a constant beat, not pieces");

  std::vector<double> edges{0.0, frame};
  for (double tc : {tc_working, tc_interfering})
    for (long k = 1; static_cast<double>(k) * tc < frame; ++k) edges.push_back(static_cast<double>(k) * tc);
  std::sort(edges.begin(), edges.end());
  const double tol = 1e-12 * frame;
  edges.erase(std::unique(edges.begin(), edges.end(),
                          [tol](double a, double b) { return std::abs(a - b) <= tol; }),
              edges.end());

  auto slope_of = [&](double t, double tc) {
    const double u = t - 2 * tc * std::floor(t / (2 * tc));
    return (u < tc ? 1.0 : -1.0) * bandwidth / tc;
  };
  auto diff_at = [&](double t) {
    return triangular_frequency(t, tc_interfering, bandwidth) -
           triangular_frequency(t, tc_working, bandwidth);
  };

  std::vector<IfSegment> segs;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    const double a = edges[i], b = edges[i + 1];
    const double mid = 0.5 * (a + b);
    const double slope = slope_of(mid, tc_interfering) - slope_of(mid, tc_working);
    const double f_mid = diff_at(mid);
    segs.push_back({a, b, f_mid - slope * (mid - a), f_mid + slope * (b - mid), slope});
  }
  return segs;
}

/// Piecewise-constant spectral envelope of a sum of LFM pieces: each piece of
/// slope k contributes power density 1/|k| (unit amplitude, Hz convention)
/// across the band it sweeps; overlapping pieces add in power.
struct InterferenceEnvelope {
  std::vector<double> edges;    // ascending frequency breakpoints
  std::vector<double> density;  // |R(f)|^2 on [edges[i], edges[i+1])
  struct Dirac {
    double frequency;
    double energy;
  };
  std::vector<Dirac> diracs;    // zero-slope pieces

  bool has_dirac() const { return !diracs.empty(); }

  double magnitude_at(double f) const {
    if (edges.size() < 2 || f < edges.front() || f >= edges.back()) return 0.0;
    const auto it = std::upper_bound(edges.begin(), edges.end(), f);
    return std::sqrt(density[static_cast<std::size_t>(it - edges.begin()) - 1]);
  }

  double total_power() const {
    double e = 0;
    for (std::size_t i = 0; i < density.size(); ++i) e += density[i] * (edges[i + 1] - edges[i]);
    for (const auto& d : diracs) e += d.energy;
    return e;
  }
};

inline InterferenceEnvelope approx_interference_spectrum(std::span<const IfSegment> segments) {
  InterferenceEnvelope env;
  struct Band {
    double lo, hi, density;
  };
  std::vector<Band> bands;
  for (const auto& s : segments) {
    if (!(s.t_end > s.t_start)) throw std::invalid_argument("approx_interference_spectrum: empty segment");
    const double span = std::abs(s.f_end - s.f_start);
    if (s.slope == 0 || span <= 0) {
      env.diracs.push_back({s.f_start, s.t_end - s.t_start});
      continue;
    }
    bands.push_back({std::min(s.f_start, s.f_end), std::max(s.f_start, s.f_end), 1.0 / std::abs(s.slope)});
  }
  for (const auto& b : bands) {
    env.edges.push_back(b.lo);
    env.edges.push_back(b.hi);
  }
  std::sort(env.edges.begin(), env.edges.end());
  env.edges.erase(std::unique(env.edges.begin(), env.edges.end()), env.edges.end());
  if (env.edges.size() < 2) {
    env.edges.clear();
    return env;
  }
  env.density.assign(env.edges.size() - 1, 0.0);
  for (const auto& b : bands) {
    auto lo = std::lower_bound(env.edges.begin(), env.edges.end(), b.lo) - env.edges.begin();
    auto hi = std::lower_bound(env.edges.begin(), env.edges.end(), b.hi) - env.edges.begin();
    for (auto i = lo; i < hi; ++i) env.density[static_cast<std::size_t>(i)] += b.density;
  }
  return env;
}

}  // namespace radaralloc::signal
