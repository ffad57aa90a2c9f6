#include "mia/synth.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "mia/error.hpp"
#include "mia/rng.hpp"

namespace mia {

namespace {

struct Pulse {
  double offset_s;
  double width_s;
  double amplitude;
};

// Canonical beat relative to the R peak.
std::array<Pulse, 5> beat_template(const SynthSubjectParams& p) {
  return {{
      {-0.200, 0.025, p.p_wave_amplitude},
      {-0.035, 0.010, -0.15 * p.qrs_amplitude},
      {0.000, 0.012, p.qrs_amplitude},
      {0.035, 0.010, -0.25 * p.qrs_amplitude},
      {0.280, 0.060, p.t_wave_amplitude},
  }};
}

void require(bool ok, const std::string& field, const std::string& rule) {
  if (!ok) {
    throw ValidationError(field + " " + rule);
  }
}

void require_range(const ParamRange& r, const std::string& field, double lo, double hi) {
  require(std::isfinite(r.center) && std::isfinite(r.spread), field, "must be finite");
  require(r.spread >= 0.0, field + ".spread", "must be >= 0");
  require(r.center - r.spread >= lo && r.center + r.spread <= hi, field,
          "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "] (got center " +
              std::to_string(r.center) + " +/- " + std::to_string(r.spread) + ")");
}

}  // namespace

void SynthSubjectParams::validate() const {
  require(heart_rate >= 40.0 && heart_rate <= 180.0, "heart_rate",
          "must lie in [40, 180] beats/min (got " + std::to_string(heart_rate) + ")");
  require(noise_std >= 0.0, "noise_std", "must be >= 0");
  require(baseline_wander_freq >= 0.0, "baseline_wander_freq", "must be >= 0");
  require(morphology_dispersion >= 0.0 && morphology_dispersion < 1.0, "morphology_dispersion",
          "must lie in [0, 1)");
  for (const double v : {qrs_amplitude, t_wave_amplitude, p_wave_amplitude, baseline_wander_amplitude}) {
    require(std::isfinite(v), "amplitude", "must be finite");
  }
}

RawRecord generate_synth_subject(const SynthSubjectParams& params, double duration_s, std::uint64_t seed,
                                 std::uint32_t sampling_rate) {
  params.validate();
  if (!(duration_s > 0.0)) {
    throw std::invalid_argument("generate_synth_subject: duration must be positive");
  }
  if (sampling_rate == 0) {
    throw std::invalid_argument("generate_synth_subject: sampling rate must be positive");
  }

  // Subject-specific morphology: each pulse's timing, width and amplitude is
  // nudged by a multiplicative factor drawn from the morphology seed.
  auto pulses = beat_template(params);
  SeededRng morph(params.morphology_seed, stream_id("morphology"));
  for (Pulse& pulse : pulses) {
    pulse.offset_s *= 1.0 + params.morphology_dispersion * morph.uniform(-1.0, 1.0);
    pulse.width_s *= 1.0 + params.morphology_dispersion * morph.uniform(-1.0, 1.0);
    pulse.amplitude *= 1.0 + params.morphology_dispersion * morph.uniform(-1.0, 1.0);
  }

  const auto n = static_cast<std::size_t>(std::llround(duration_s * sampling_rate));
  RawRecord record{"", "", sampling_rate, std::vector<double>(n, 0.0)};
  const double dt = 1.0 / sampling_rate;

  SeededRng rhythm(seed, stream_id("rhythm"));
  const double rr = 60.0 / params.heart_rate;
  constexpr double kRrJitter = 0.02;
  constexpr double kSupport = 0.6;  // seconds either side of the R peak
  for (double beat = 0.5 * rr; beat < duration_s + kSupport;) {
    const auto first = static_cast<std::ptrdiff_t>(std::ceil((beat - kSupport) / dt));
    const auto last = static_cast<std::ptrdiff_t>(std::floor((beat + kSupport) / dt));
    for (std::ptrdiff_t i = std::max<std::ptrdiff_t>(first, 0); i <= last && i < static_cast<std::ptrdiff_t>(n);
         ++i) {
      const double t = static_cast<double>(i) * dt - beat;
      double v = 0.0;
      for (const Pulse& pulse : pulses) {
        const double z = (t - pulse.offset_s) / pulse.width_s;
        v += pulse.amplitude * std::exp(-0.5 * z * z);
      }
      record.samples[static_cast<std::size_t>(i)] += v;
    }
    beat += rr * std::max(0.5, 1.0 + kRrJitter * rhythm.normal());
  }

  SeededRng nuisance(seed, stream_id("nuisance"));
  const double phase = nuisance.uniform(0.0, 2.0 * std::numbers::pi);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * dt;
    record.samples[i] +=
        params.baseline_wander_amplitude * std::sin(2.0 * std::numbers::pi * params.baseline_wander_freq * t + phase);
    if (params.noise_std > 0.0) {
      record.samples[i] += params.noise_std * nuisance.normal();
    }
  }
  return record;
}

void SynthCohort::validate() const {
  require(!dataset_id.empty(), "dataset_id", "must be non-empty");
  require(dataset_id.find('/') == std::string::npos, "dataset_id", "must not contain '/'");
  require(subjects >= 1, "subjects", "must be >= 1");
  require(duration_s > 0.0, "duration_s", "must be positive");
  require(sampling_rate > 0, "sampling_rate", "must be positive");
  require_range(heart_rate, "heart_rate", 40.0, 180.0);
  require_range(noise_std, "noise_std", 0.0, 1e9);
  require_range(baseline_wander_freq, "baseline_wander_freq", 0.0, 1e9);
  require_range(qrs_amplitude, "qrs_amplitude", -1e9, 1e9);
  require_range(t_wave_amplitude, "t_wave_amplitude", -1e9, 1e9);
  require_range(p_wave_amplitude, "p_wave_amplitude", -1e9, 1e9);
  require_range(baseline_wander_amplitude, "baseline_wander_amplitude", -1e9, 1e9);
  require(morphology_dispersion >= 0.0 && morphology_dispersion < 1.0, "morphology_dispersion",
          "must lie in [0, 1)");
}

std::string synth_record_id(const std::string& dataset_id, std::size_t index) {
  char buf[32];
  if (dataset_id == "butqdb") {
    std::snprintf(buf, sizeof buf, "%zu_ECG", 100001 + index);
  } else {
    std::snprintf(buf, sizeof buf, "rec%03zu", index);
  }
  return buf;
}

std::vector<SynthSubjectParams> draw_cohort_params(const SynthCohort& cohort, std::uint64_t seed) {
  cohort.validate();
  std::vector<SynthSubjectParams> out;
  out.reserve(cohort.subjects);
  for (std::size_t i = 0; i < cohort.subjects; ++i) {
    SeededRng rng(seed, combine_streams(stream_id(cohort.dataset_id), i));
    auto draw = [&](const ParamRange& r) { return r.center + r.spread * rng.uniform(-1.0, 1.0); };
    SynthSubjectParams p;
    p.heart_rate = draw(cohort.heart_rate);
    p.qrs_amplitude = draw(cohort.qrs_amplitude);
    p.t_wave_amplitude = draw(cohort.t_wave_amplitude);
    p.p_wave_amplitude = draw(cohort.p_wave_amplitude);
    p.baseline_wander_freq = draw(cohort.baseline_wander_freq);
    p.baseline_wander_amplitude = draw(cohort.baseline_wander_amplitude);
    p.noise_std = draw(cohort.noise_std);
    p.morphology_dispersion = cohort.morphology_dispersion;
    p.morphology_seed = rng.next_u64();
    out.push_back(p);
  }
  return out;
}

std::vector<RawRecord> generate_cohort(const SynthCohort& cohort, std::uint64_t seed) {
  const auto params = draw_cohort_params(cohort, seed);
  std::vector<RawRecord> records;
  records.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::uint64_t record_seed = combine_streams(seed, combine_streams(stream_id(cohort.dataset_id), i));
    RawRecord record = generate_synth_subject(params[i], cohort.duration_s, record_seed, cohort.sampling_rate);
    record.dataset_id = cohort.dataset_id;
    record.record_id = synth_record_id(cohort.dataset_id, i);
    records.push_back(std::move(record));
  }
  return records;
}

}  // namespace mia
