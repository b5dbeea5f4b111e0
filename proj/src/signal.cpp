#include "arrestmap/signal.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <string>

#include <fftw3.h>

#include "arrestmap/error.hpp"

namespace arrestmap {

std::string_view to_string(SignalKind kind) {
  return kind == SignalKind::raw ? "raw" : "high_gamma";
}

SignalKind parse_signal_kind(std::string_view text) {
  if (text == "raw") return SignalKind::raw;
  if (text == "high_gamma") return SignalKind::high_gamma;
  throw ConfigError("unknown signal kind '" + std::string(text) + "'");
}

Eigen::MatrixXd common_average_reference(const Eigen::MatrixXd& samples) {
  if (samples.rows() < 2) throw InvalidInput("common average reference needs at least 2 channels");
  const Eigen::RowVectorXd mean = samples.colwise().mean();
  return samples.rowwise() - mean;
}

namespace {

// FFTW planning is not thread-safe; execution on distinct buffers is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

template <class T>
struct FftwBuffer {
  explicit FftwBuffer(std::size_t n) : data(static_cast<T*>(fftw_malloc(sizeof(T) * n))) {
    if (!data) throw std::bad_alloc();
  }
  ~FftwBuffer() { fftw_free(data); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  T* data;
};

struct FftwPlan {
  fftw_plan plan = nullptr;
  ~FftwPlan() {
    if (plan) {
      std::lock_guard lock(planner_mutex());
      fftw_destroy_plan(plan);
    }
  }
};

}  // namespace

Eigen::MatrixXd band_envelope(const Eigen::MatrixXd& samples, double sample_rate, double low_hz,
                              double high_hz) {
  if (!(sample_rate > 2.0 * high_hz)) {
    throw InvalidInput("sample rate " + std::to_string(sample_rate) +
                       " Hz puts the upper band edge at or above Nyquist");
  }
  const auto n = static_cast<std::size_t>(samples.cols());
  Eigen::MatrixXd out(samples.rows(), samples.cols());
  if (n == 0) return out;

  const std::size_t half = n / 2 + 1;
  FftwBuffer<double> real(n);
  FftwBuffer<fftw_complex> spectrum(half);
  FftwBuffer<fftw_complex> analytic(n);
  FftwPlan forward, backward;
  {
    std::lock_guard lock(planner_mutex());
    forward.plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), real.data, spectrum.data, FFTW_ESTIMATE);
    backward.plan = fftw_plan_dft_1d(static_cast<int>(n), analytic.data, analytic.data,
                                     FFTW_BACKWARD, FFTW_ESTIMATE);
  }

  const double bin_hz = sample_rate / static_cast<double>(n);
  for (Eigen::Index row = 0; row < samples.rows(); ++row) {
    for (std::size_t t = 0; t < n; ++t) real.data[t] = samples(row, static_cast<Eigen::Index>(t));
    fftw_execute(forward.plan);
    for (std::size_t k = 0; k < n; ++k) {
      analytic.data[k][0] = 0.0;
      analytic.data[k][1] = 0.0;
    }
    // Positive-frequency bins only; DC and Nyquist are never inside the band.
    for (std::size_t k = 1; k < half; ++k) {
      const double f = bin_hz * static_cast<double>(k);
      if (f < low_hz || f > high_hz) continue;
      if (2 * k == n) continue;
      analytic.data[k][0] = 2.0 * spectrum.data[k][0];
      analytic.data[k][1] = 2.0 * spectrum.data[k][1];
    }
    fftw_execute(backward.plan);
    const double scale = 1.0 / static_cast<double>(n);
    for (std::size_t t = 0; t < n; ++t) {
      out(row, static_cast<Eigen::Index>(t)) =
          scale * std::hypot(analytic.data[t][0], analytic.data[t][1]);
    }
  }
  return out;
}

std::vector<double> spectral_filter(std::span<const double> samples, double sample_rate,
                                    const std::function<double(double)>& gain) {
  const std::size_t n = samples.size();
  std::vector<double> out(n);
  if (n == 0) return out;
  const std::size_t half = n / 2 + 1;
  FftwBuffer<double> real(n);
  FftwBuffer<fftw_complex> spectrum(half);
  FftwPlan forward, backward;
  {
    std::lock_guard lock(planner_mutex());
    forward.plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), real.data, spectrum.data, FFTW_ESTIMATE);
    backward.plan = fftw_plan_dft_c2r_1d(static_cast<int>(n), spectrum.data, real.data, FFTW_ESTIMATE);
  }
  std::copy(samples.begin(), samples.end(), real.data);
  fftw_execute(forward.plan);
  const double bin_hz = sample_rate / static_cast<double>(n);
  for (std::size_t k = 0; k < half; ++k) {
    const double g = gain(bin_hz * static_cast<double>(k));
    spectrum.data[k][0] *= g;
    spectrum.data[k][1] *= g;
  }
  fftw_execute(backward.plan);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t t = 0; t < n; ++t) out[t] = real.data[t] * scale;
  return out;
}

Eigen::MatrixXd high_gamma_envelope(const Eigen::MatrixXd& samples, double sample_rate) {
  if (!(sample_rate > 2.0 * kHighGammaHighHz)) {
    throw InvalidInput("high-gamma envelope needs sample_rate > 300 Hz, got " +
                       std::to_string(sample_rate));
  }
  return band_envelope(samples, sample_rate, kHighGammaLowHz, kHighGammaHighHz);
}

std::vector<TrialEpoch> epoch_and_normalize(std::span<const double> channel,
                                            std::span<const Onset> onsets, double sample_rate,
                                            int electrode) {
  const std::int64_t pre = pre_onset_samples(sample_rate);
  const std::int64_t length = epoch_length(sample_rate);
  const auto total = static_cast<std::int64_t>(channel.size());
  if (pre <= 0 || length <= pre) throw InvalidInput("sample rate too low for epoching");

  std::vector<TrialEpoch> epochs;
  epochs.reserve(onsets.size());
  for (const auto& onset : onsets) {
    const std::int64_t start = onset.sample - pre;
    if (start < 0 || start + length > total) {
      throw InvalidInput("epoch window of trial " + std::to_string(onset.trial_id) +
                         " falls outside the recording");
    }
    double baseline = 0.0;
    for (std::int64_t t = 0; t < pre; ++t) baseline += channel[static_cast<std::size_t>(start + t)];
    baseline /= static_cast<double>(pre);
    const double denom = std::abs(baseline) + kBaselineEpsilon;

    TrialEpoch epoch;
    epoch.electrode = electrode;
    epoch.trial_id = onset.trial_id;
    epoch.samples.resize(static_cast<std::size_t>(length));
    for (std::int64_t t = 0; t < length; ++t) {
      epoch.samples[static_cast<std::size_t>(t)] =
          static_cast<float>((channel[static_cast<std::size_t>(start + t)] - baseline) / denom);
    }
    epochs.push_back(std::move(epoch));
  }
  return epochs;
}

Eigen::MatrixXd preprocess_recording(const Recording& recording,
                                     std::span<const Electrode> electrodes, double sample_rate,
                                     SignalKind kind) {
  if (electrodes.size() != recording.n_electrodes) {
    throw ValidationError("electrode table does not match recording rows");
  }
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < electrodes.size(); ++i) {
    if (electrodes[i].valid) rows.push_back(i);
  }
  Eigen::MatrixXd data(static_cast<Eigen::Index>(rows.size()),
                       static_cast<Eigen::Index>(recording.n_samples));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto ch = recording.channel(rows[r]);
    for (std::size_t t = 0; t < ch.size(); ++t) {
      data(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(t)) = ch[t];
    }
  }
  Eigen::MatrixXd referenced = common_average_reference(data);
  if (kind == SignalKind::high_gamma) return high_gamma_envelope(referenced, sample_rate);
  return referenced;
}

}  // namespace arrestmap
