#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mia/audit.hpp"
#include "mia/encoders.hpp"
#include "mia/synth.hpp"

namespace mia {

inline constexpr const char* kRunConfigSchema = "mia-audit/run-config/1";

/// One run of the pipeline. Encoder seeds are not stored per encoder; every
/// encoder trains under the master seed.
struct RunConfig {
  std::uint64_t seed = 42;
  std::vector<SynthCohort> synthetic;  // generated by `synth`
  std::vector<std::string> recorded;   // dataset ids expected from record directories
  std::string train_dataset;           // members = every subject of this dataset
  std::vector<EncoderConfig> encoders;
  std::vector<Attack> attacks;
  AggregationPolicy aggregation;
  double alpha = 0.01;
  double nonmember_ratio = 1.0;
  SplitFractions fractions;
  std::size_t rec_masks = 8;
  std::size_t con_draws = 8;
  std::optional<AugmentConfig> con_augment;
  std::size_t knn_k = 5;

  /// Throws ValidationError naming the offending field.
  void validate() const;

  std::vector<std::string> datasets() const;
  /// The encoder entry for `family`; ValidationError when absent.
  const EncoderConfig& encoder(Family family) const;
  AuditSettings audit_settings(std::size_t threads) const;

  bool operator==(const RunConfig&) const = default;
};

/// Strict parse: unknown keys, a wrong schema tag or invalid values throw
/// ValidationError (FormatError for malformed JSON).
RunConfig parse_run_config(const std::string& text);
std::string run_config_json(const RunConfig& cfg);

/// A loaded config file together with the bytes it was read from.
struct LoadedConfig {
  RunConfig config;
  std::string bytes;
  /// Set when --seed replaced the file's seed.
  std::optional<std::uint64_t> seed_override;

  /// Lowercase hex SHA-256 over the file bytes, plus the override when set.
  std::string fingerprint() const;
};

LoadedConfig load_run_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override = {});

std::string sha256_hex(const std::string& data);

}  // namespace mia
