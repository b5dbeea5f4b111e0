#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "arrestmap/dataset.hpp"

namespace arrestmap {

enum class SignalKind { raw, high_gamma };

std::string_view to_string(SignalKind kind);
SignalKind parse_signal_kind(std::string_view text);

inline constexpr double kHighGammaLowHz = 70.0;
inline constexpr double kHighGammaHighHz = 150.0;
inline constexpr double kBaselineEpsilon = 1e-8;

// One electrode-trial window after preprocessing. Samples are stored as float:
// that rounding is the canonical representation shared by fresh runs and cache hits.
struct TrialEpoch {
  int electrode = 0;
  int trial_id = 0;
  std::vector<float> samples;
};

struct Onset {
  int trial_id = 0;
  std::int64_t sample = 0;
};

// Subtracts the per-sample mean across rows. Requires at least 2 rows.
Eigen::MatrixXd common_average_reference(const Eigen::MatrixXd& samples);

// Magnitude of the analytic signal of each row restricted to [low_hz, high_hz]:
// all FFT bins outside the band are zeroed (brick wall), the positive half is
// doubled and the negative half dropped, then inverse transformed.
Eigen::MatrixXd band_envelope(const Eigen::MatrixXd& samples, double sample_rate, double low_hz,
                              double high_hz);

// Multiplies every real-FFT bin of `samples` by gain(frequency_hz) and transforms
// back. The Nyquist bin of even-length input is treated like any other bin.
std::vector<double> spectral_filter(std::span<const double> samples, double sample_rate,
                                    const std::function<double(double)>& gain);

// band_envelope over 70-150 Hz; needs sample_rate > 300 Hz.
Eigen::MatrixXd high_gamma_envelope(const Eigen::MatrixXd& samples, double sample_rate);

// Cuts [onset - ceil(0.25 fs), onset - ceil(0.25 fs) + round(0.75 fs)) for each onset
// and applies relative-change normalization against the pre-onset mean:
// (x - mu) / (|mu| + 1e-8).
std::vector<TrialEpoch> epoch_and_normalize(std::span<const double> channel,
                                            std::span<const Onset> onsets, double sample_rate,
                                            int electrode = 0);

// CAR over the valid electrodes of a recording followed by the envelope stage when
// kind == high_gamma. Returned rows follow the order of the valid electrodes.
Eigen::MatrixXd preprocess_recording(const Recording& recording,
                                     std::span<const Electrode> electrodes, double sample_rate,
                                     SignalKind kind);

}  // namespace arrestmap
