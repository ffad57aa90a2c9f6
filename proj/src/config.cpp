#include "mia/config.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <set>

#include "binary_io.hpp"
#include "json_util.hpp"

namespace mia {

namespace {

using detail::field;
using detail::reject_unknown;
using nlohmann::json;
using nlohmann::ordered_json;

ordered_json range_json(const ParamRange& r) { return {{"center", r.center}, {"spread", r.spread}}; }

ParamRange parse_range(const json& obj, const char* key, const std::string& ctx) {
  const json r = field<json>(obj, key, ctx);
  const std::string rctx = ctx + "." + key;
  reject_unknown(r, {"center", "spread"}, rctx);
  return {field<double>(r, "center", rctx), field<double>(r, "spread", rctx)};
}

ordered_json cohort_json(const SynthCohort& c) {
  return {
      {"dataset_id", c.dataset_id},
      {"subjects", c.subjects},
      {"duration_s", c.duration_s},
      {"sampling_rate", c.sampling_rate},
      {"heart_rate", range_json(c.heart_rate)},
      {"qrs_amplitude", range_json(c.qrs_amplitude)},
      {"t_wave_amplitude", range_json(c.t_wave_amplitude)},
      {"p_wave_amplitude", range_json(c.p_wave_amplitude)},
      {"baseline_wander_freq", range_json(c.baseline_wander_freq)},
      {"baseline_wander_amplitude", range_json(c.baseline_wander_amplitude)},
      {"noise_std", range_json(c.noise_std)},
      {"morphology_dispersion", c.morphology_dispersion},
  };
}

SynthCohort parse_cohort(const json& obj, const std::string& ctx) {
  reject_unknown(obj,
                 {"dataset_id", "subjects", "duration_s", "sampling_rate", "heart_rate", "qrs_amplitude",
                  "t_wave_amplitude", "p_wave_amplitude", "baseline_wander_freq", "baseline_wander_amplitude",
                  "noise_std", "morphology_dispersion"},
                 ctx);
  SynthCohort c;
  c.dataset_id = field<std::string>(obj, "dataset_id", ctx);
  c.subjects = field<std::size_t>(obj, "subjects", ctx);
  c.duration_s = field<double>(obj, "duration_s", ctx);
  c.sampling_rate = field<std::uint32_t>(obj, "sampling_rate", ctx);
  c.heart_rate = parse_range(obj, "heart_rate", ctx);
  c.qrs_amplitude = parse_range(obj, "qrs_amplitude", ctx);
  c.t_wave_amplitude = parse_range(obj, "t_wave_amplitude", ctx);
  c.p_wave_amplitude = parse_range(obj, "p_wave_amplitude", ctx);
  c.baseline_wander_freq = parse_range(obj, "baseline_wander_freq", ctx);
  c.baseline_wander_amplitude = parse_range(obj, "baseline_wander_amplitude", ctx);
  c.noise_std = parse_range(obj, "noise_std", ctx);
  c.morphology_dispersion = field<double>(obj, "morphology_dispersion", ctx);
  return c;
}

ordered_json augment_json(const AugmentConfig& a) {
  return {
      {"scale_lo", a.scale_lo},
      {"scale_hi", a.scale_hi},
      {"time_shift_max", a.time_shift_max},
      {"jitter_std", a.jitter_std},
      {"mask_segment_len", a.mask_segment_len},
      {"mask_prob", a.mask_prob},
  };
}

AugmentConfig parse_augment(const json& obj, const std::string& ctx) {
  reject_unknown(obj, {"scale_lo", "scale_hi", "time_shift_max", "jitter_std", "mask_segment_len", "mask_prob"},
                 ctx);
  AugmentConfig a;
  a.scale_lo = field<double>(obj, "scale_lo", ctx);
  a.scale_hi = field<double>(obj, "scale_hi", ctx);
  a.time_shift_max = field<std::size_t>(obj, "time_shift_max", ctx);
  a.jitter_std = field<double>(obj, "jitter_std", ctx);
  a.mask_segment_len = field<std::size_t>(obj, "mask_segment_len", ctx);
  a.mask_prob = field<double>(obj, "mask_prob", ctx);
  return a;
}

// Encoder entries carry no seed of their own; the master seed is injected.
ordered_json encoder_entry_json(const EncoderConfig& cfg) {
  ordered_json doc = ordered_json::parse(encoder_config_json(cfg));
  doc.erase("seed");
  return doc;
}

EncoderConfig parse_encoder_entry(const json& obj, std::uint64_t seed, const std::string& ctx) {
  if (!obj.is_object()) {
    throw ValidationError(ctx + " must be a JSON object");
  }
  if (obj.contains("seed")) {
    throw ValidationError(ctx + ".seed is not allowed; encoders train under the top-level seed");
  }
  json doc = obj;
  doc["seed"] = seed;
  try {
    return parse_encoder_config_json(doc.dump());
  } catch (const ValidationError& e) {
    throw ValidationError(ctx + ": " + e.what());
  }
}

const char* aggregation_name(AggregationKind kind) { return kind == AggregationKind::mean ? "mean" : "top_k_mean"; }

AggregationKind parse_aggregation_kind(const std::string& name) {
  if (name == "top_k_mean") return AggregationKind::top_k_mean;
  if (name == "mean") return AggregationKind::mean;
  throw ValidationError("audit.aggregation.kind: unknown aggregation '" + name + "'");
}

}  // namespace

void RunConfig::validate() const {
  std::set<std::string> ids;
  for (const SynthCohort& c : synthetic) {
    try {
      c.validate();
    } catch (const ValidationError& e) {
      throw ValidationError(std::string("corpus.synthetic: ") + e.what());
    }
    if (!ids.insert(c.dataset_id).second) {
      throw ValidationError("corpus: dataset '" + c.dataset_id + "' is defined twice");
    }
  }
  for (const std::string& id : recorded) {
    if (id.empty() || id.find('/') != std::string::npos) {
      throw ValidationError("corpus.recorded: invalid dataset id '" + id + "'");
    }
    if (!ids.insert(id).second) {
      throw ValidationError("corpus: dataset '" + id + "' is defined twice");
    }
  }
  if (ids.empty()) {
    throw ValidationError("corpus: no datasets defined");
  }
  if (!ids.contains(train_dataset)) {
    throw ValidationError("train_dataset: '" + train_dataset + "' is not a defined dataset");
  }
  if (encoders.empty()) {
    throw ValidationError("encoders: at least one encoder is required");
  }
  std::set<Family> families;
  for (const EncoderConfig& e : encoders) {
    e.validate();
    if (!families.insert(e.family).second) {
      throw ValidationError("encoders: family " + to_string(e.family) + " is listed twice");
    }
    if (e.seed != seed) {
      throw ValidationError("encoders: " + to_string(e.family) + " seed differs from the top-level seed");
    }
  }
  if (attacks.empty()) {
    throw ValidationError("attacks: at least one attack is required");
  }
  if (std::set<Attack>(attacks.begin(), attacks.end()).size() != attacks.size()) {
    throw ValidationError("attacks: duplicate attack");
  }
  aggregation.validate();
  if (!(alpha >= 0.0 && alpha < 1.0)) {
    throw ValidationError("audit.alpha must lie in [0, 1)");
  }
  if (!(nonmember_ratio > 0.0)) {
    throw ValidationError("audit.nonmember_ratio must be positive");
  }
  fractions.validate();
  if (rec_masks == 0) throw ValidationError("audit.rec_masks must be >= 1");
  if (con_draws == 0) throw ValidationError("audit.con_draws must be >= 1");
  if (knn_k == 0) throw ValidationError("audit.knn_k must be >= 1");
  if (con_augment) {
    con_augment->validate(kWindowLength);
  }
}

std::vector<std::string> RunConfig::datasets() const {
  std::vector<std::string> out;
  for (const SynthCohort& c : synthetic) out.push_back(c.dataset_id);
  out.insert(out.end(), recorded.begin(), recorded.end());
  std::sort(out.begin(), out.end());
  return out;
}

const EncoderConfig& RunConfig::encoder(Family family) const {
  for (const EncoderConfig& e : encoders) {
    if (e.family == family) return e;
  }
  throw ValidationError("encoders: no entry for family " + to_string(family));
}

AuditSettings RunConfig::audit_settings(std::size_t threads) const {
  AuditSettings s;
  s.aggregation = aggregation;
  s.alpha = alpha;
  s.nonmember_ratio = nonmember_ratio;
  s.fractions = fractions;
  s.rec_masks = rec_masks;
  s.con_draws = con_draws;
  s.con_augment = con_augment;
  s.knn_k = knn_k;
  s.seed = seed;
  s.threads = threads;
  return s;
}

RunConfig parse_run_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("run config is not valid JSON: ") + e.what());
  }
  const std::string ctx = "config";
  reject_unknown(doc, {"schema", "seed", "corpus", "train_dataset", "encoders", "attacks", "audit"}, ctx);
  const auto schema = field<std::string>(doc, "schema", ctx);
  if (schema != kRunConfigSchema) {
    throw ValidationError("config.schema: expected '" + std::string(kRunConfigSchema) + "', got '" + schema + "'");
  }

  RunConfig cfg;
  cfg.seed = field<std::uint64_t>(doc, "seed", ctx);

  const json corpus = field<json>(doc, "corpus", ctx);
  reject_unknown(corpus, {"synthetic", "recorded"}, "corpus");
  if (corpus.contains("synthetic")) {
    const json list = field<json>(corpus, "synthetic", "corpus");
    if (!list.is_array()) throw ValidationError("corpus.synthetic must be an array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      cfg.synthetic.push_back(parse_cohort(list[i], "corpus.synthetic[" + std::to_string(i) + "]"));
    }
  }
  if (corpus.contains("recorded")) {
    cfg.recorded = field<std::vector<std::string>>(corpus, "recorded", "corpus");
  }
  cfg.train_dataset = field<std::string>(doc, "train_dataset", ctx);

  const json encoders = field<json>(doc, "encoders", ctx);
  if (!encoders.is_array()) throw ValidationError("config.encoders must be an array");
  for (std::size_t i = 0; i < encoders.size(); ++i) {
    cfg.encoders.push_back(parse_encoder_entry(encoders[i], cfg.seed, "encoders[" + std::to_string(i) + "]"));
  }
  for (const auto& name : field<std::vector<std::string>>(doc, "attacks", ctx)) {
    cfg.attacks.push_back(parse_attack(name));
  }

  const json audit = field<json>(doc, "audit", ctx);
  reject_unknown(audit,
                 {"aggregation", "alpha", "nonmember_ratio", "fractions", "rec_masks", "con_draws", "con_augment",
                  "knn_k"},
                 "audit");
  const json agg = field<json>(audit, "aggregation", "audit");
  reject_unknown(agg, {"kind", "k", "window_cap"}, "audit.aggregation");
  cfg.aggregation.kind = parse_aggregation_kind(field<std::string>(agg, "kind", "audit.aggregation"));
  cfg.aggregation.k = field<std::size_t>(agg, "k", "audit.aggregation");
  cfg.aggregation.window_cap = field<std::size_t>(agg, "window_cap", "audit.aggregation");
  cfg.alpha = field<double>(audit, "alpha", "audit");
  cfg.nonmember_ratio = field<double>(audit, "nonmember_ratio", "audit");
  const json fr = field<json>(audit, "fractions", "audit");
  reject_unknown(fr, {"attacker_train", "calibration", "test"}, "audit.fractions");
  cfg.fractions.attacker_train = field<double>(fr, "attacker_train", "audit.fractions");
  cfg.fractions.calibration = field<double>(fr, "calibration", "audit.fractions");
  cfg.fractions.test = field<double>(fr, "test", "audit.fractions");
  cfg.rec_masks = field<std::size_t>(audit, "rec_masks", "audit");
  cfg.con_draws = field<std::size_t>(audit, "con_draws", "audit");
  cfg.knn_k = field<std::size_t>(audit, "knn_k", "audit");
  if (audit.contains("con_augment") && !audit.at("con_augment").is_null()) {
    cfg.con_augment = parse_augment(audit.at("con_augment"), "audit.con_augment");
  }

  cfg.validate();
  return cfg;
}

std::string run_config_json(const RunConfig& cfg) {
  ordered_json synthetic = ordered_json::array();
  for (const SynthCohort& c : cfg.synthetic) synthetic.push_back(cohort_json(c));
  ordered_json encoders = ordered_json::array();
  for (const EncoderConfig& e : cfg.encoders) encoders.push_back(encoder_entry_json(e));
  ordered_json attacks = ordered_json::array();
  for (Attack a : cfg.attacks) attacks.push_back(to_string(a));

  ordered_json doc = {
      {"schema", kRunConfigSchema},
      {"seed", cfg.seed},
      {"corpus", {{"synthetic", synthetic}, {"recorded", cfg.recorded}}},
      {"train_dataset", cfg.train_dataset},
      {"encoders", encoders},
      {"attacks", attacks},
      {"audit",
       {
           {"aggregation",
            {{"kind", aggregation_name(cfg.aggregation.kind)},
             {"k", cfg.aggregation.k},
             {"window_cap", cfg.aggregation.window_cap}}},
           {"alpha", cfg.alpha},
           {"nonmember_ratio", cfg.nonmember_ratio},
           {"fractions",
            {{"attacker_train", cfg.fractions.attacker_train},
             {"calibration", cfg.fractions.calibration},
             {"test", cfg.fractions.test}}},
           {"rec_masks", cfg.rec_masks},
           {"con_draws", cfg.con_draws},
           {"con_augment", cfg.con_augment ? augment_json(*cfg.con_augment) : ordered_json(nullptr)},
           {"knn_k", cfg.knn_k},
       }},
  };
  return doc.dump(2) + "\n";
}

std::string sha256_hex(const std::string& data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256: digest failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

std::string LoadedConfig::fingerprint() const {
  if (!seed_override) {
    return sha256_hex(bytes);
  }
  return sha256_hex(bytes + "\n--seed=" + std::to_string(*seed_override));
}

LoadedConfig load_run_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override) {
  LoadedConfig out;
  out.bytes = detail::read_file(path);
  try {
    out.config = parse_run_config(out.bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  if (seed_override) {
    out.seed_override = seed_override;
    out.config.seed = *seed_override;
    for (EncoderConfig& e : out.config.encoders) e.seed = *seed_override;
  }
  return out;
}

}  // namespace mia
