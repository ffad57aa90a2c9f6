#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mia/corpus.hpp"

namespace mia {

/// Per-subject knobs of the synthetic ECG generator. Amplitudes are in
/// arbitrary units (records are z-normalized downstream).
struct SynthSubjectParams {
  double heart_rate = 70.0;  // beats/min, [40, 180]
  double qrs_amplitude = 1.0;
  double t_wave_amplitude = 0.3;
  double p_wave_amplitude = 0.12;
  double baseline_wander_freq = 0.25;  // Hz
  double baseline_wander_amplitude = 0.1;
  double noise_std = 0.02;
  /// Scale of the subject-specific template perturbation drawn from
  /// morphology_seed (0 gives the canonical template).
  double morphology_dispersion = 0.1;
  std::uint64_t morphology_seed = 0;

  /// Throws ValidationError naming the offending field.
  void validate() const;
};

/// Sum of per-beat P/Q/R/S/T Gaussian pulses at heart-rate spacing with small
/// RR jitter, plus sinusoidal baseline wander and Gaussian noise. Fully
/// determined by (params, duration, seed, sampling rate).
RawRecord generate_synth_subject(const SynthSubjectParams& params, double duration_s, std::uint64_t seed,
                                 std::uint32_t sampling_rate = kTargetRate);

/// A parameter drawn per subject as center + spread * U(-1, 1).
struct ParamRange {
  double center = 0.0;
  double spread = 0.0;
  bool operator==(const ParamRange&) const = default;
};

/// A synthetic dataset: `subjects` records drawn around shared centers.
struct SynthCohort {
  std::string dataset_id;
  std::size_t subjects = 8;
  double duration_s = 120.0;
  std::uint32_t sampling_rate = kTargetRate;
  ParamRange heart_rate{70.0, 10.0};
  ParamRange qrs_amplitude{1.0, 0.2};
  ParamRange t_wave_amplitude{0.3, 0.1};
  ParamRange p_wave_amplitude{0.12, 0.04};
  ParamRange baseline_wander_freq{0.25, 0.1};
  ParamRange baseline_wander_amplitude{0.1, 0.05};
  ParamRange noise_std{0.05, 0.03};
  double morphology_dispersion = 0.1;

  void validate() const;
  bool operator==(const SynthCohort&) const = default;
};

/// Record id of subject `index` in a cohort. butqdb-named cohorts use the
/// "<subject>_ECG" convention so subject_of() strips the suffix.
std::string synth_record_id(const std::string& dataset_id, std::size_t index);

std::vector<SynthSubjectParams> draw_cohort_params(const SynthCohort& cohort, std::uint64_t seed);
std::vector<RawRecord> generate_cohort(const SynthCohort& cohort, std::uint64_t seed);

}  // namespace mia
