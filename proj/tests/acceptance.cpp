// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "mia/attacks.hpp"
#include "mia/audit.hpp"
#include "mia/cli.hpp"
#include "mia/config.hpp"
#include "mia/encoders.hpp"
#include "mia/log.hpp"
#include "mia/losses.hpp"
#include "mia/plots.hpp"
#include "mia/synth.hpp"
#include "support.hpp"
#include "xml_check.hpp"

using namespace mia;
using nlohmann::json;
using nn::Tensor;
using testing::random_tensor;
using testing::TempDir;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and thresholds.
constexpr double kGradTol = 1e-4;
constexpr std::size_t kGradSeeds = 20;
constexpr double kOracleTol = 1e-12;
constexpr std::size_t kOracleSets = 200;
constexpr std::size_t kCalibrationSets = 500;
constexpr std::size_t kProtocolConfigs = 50;
constexpr double kLeakAucMin = 0.9;
constexpr double kUntrainedLo = 0.3;
constexpr double kUntrainedHi = 0.7;
constexpr double kAttenuationMin = 0.1;

// Runtime budgets, seconds.
constexpr double kBudget1 = 60, kBudget2 = 60, kBudget3 = 30, kBudget5 = 600, kBudget6 = 600, kBudget7 = 900;

const fs::path kConfigs = fs::path(MIA_SOURCE_DIR) / "configs";

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string num(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// ---- criterion 1 ----------------------------------------------------------

Outcome gradient_fidelity() {
  double worst = 0.0;
  std::string worst_name;
  auto note = [&](double err, const std::string& name) {
    if (!(err <= worst)) {
      worst = err;
      worst_name = name;
    }
  };
  for (std::uint64_t seed = 0; seed < kGradSeeds; ++seed) {
    for (const auto& [layer, shape] : testing::gradient_suite_layers()) {
      note(testing::layer_gradient_error(layer, shape, seed), layer.name);
    }
    SeededRng rng(seed, stream_id("acceptance-grad"));
    nn::GradCheckOptions opt;
    opt.seed = seed;
    opt.probe_count = 64;

    const double tau = rng.uniform(0.1, 1.0);
    auto nce = [tau](std::span<const Tensor> xs, std::vector<Tensor>* g) {
      PairLoss out = info_nce_loss(xs[0], xs[1], tau);
      if (g != nullptr) *g = {out.grad_view1, out.grad_view2};
      return out.loss;
    };
    note(nn::finite_diff_check(nce, {random_tensor({4, 6}, rng), random_tensor({4, 6}, rng)}, opt), "info_nce");

    auto multi = [tau](std::span<const Tensor> xs, std::vector<Tensor>* g) {
      const std::vector<Tensor> a{xs[0], xs[1], xs[2]}, b{xs[3], xs[4], xs[5]};
      MultiLevelLoss out = ts2vec_loss(a, b, tau);
      if (g != nullptr) {
        *g = out.grad_view1;
        g->insert(g->end(), out.grad_view2.begin(), out.grad_view2.end());
      }
      return out.loss;
    };
    std::vector<Tensor> levels;
    for (int i = 0; i < 6; ++i) levels.push_back(random_tensor({3, 5}, rng));
    note(nn::finite_diff_check(multi, levels, opt), "ts2vec");

    const MaskPattern mask = random_mask(8, 5, 0.5, rng);
    const Tensor target = random_tensor({40}, rng);
    auto mae = [&](std::span<const Tensor> xs, std::vector<Tensor>* g) {
      std::vector<double> grad;
      const double loss = mae_loss(target.values(), xs[0].values(), mask, g != nullptr ? &grad : nullptr);
      if (g != nullptr) *g = {Tensor({40}, grad)};
      return loss;
    };
    note(nn::finite_diff_check(mae, {random_tensor({40}, rng)}, opt), "mae_loss");

    std::vector<SubjectFeatureVector> features;
    std::vector<int> labels;
    for (int i = 0; i < 10; ++i) {
      features.push_back({rng.normal(), std::abs(rng.normal()), rng.normal() + 1.0, rng.normal()});
      labels.push_back(i % 2);
    }
    const MlpAttacker base(seed);
    auto bce = [&](std::span<const Tensor> ps, std::vector<Tensor>* g) {
      MlpAttacker a = base;
      for (std::size_t i = 0; i < ps.size(); ++i) a.params()[i] = ps[i];
      return mlp_bce(a, features, labels, g);
    };
    const auto params = base.params().all();
    note(nn::finite_diff_check(bce, {params.begin(), params.end()}, opt), "attacker_bce");
  }
  return {worst < kGradTol, "max relative error " + num("%.3g", worst) + " (" + worst_name + ")"};
}

// ---- criterion 2 ----------------------------------------------------------

double pairwise_auc(std::span<const double> pos, std::span<const double> neg) {
  double wins = 0.0;
  for (double p : pos)
    for (double q : neg) wins += p > q ? 1.0 : (p == q ? 0.5 : 0.0);
  return wins / static_cast<double>(pos.size() * neg.size());
}

std::vector<double> draw_scores(SeededRng& rng, std::size_t n, bool ties) {
  std::vector<double> v(n);
  for (double& x : v) x = ties ? static_cast<double>(rng.uniform_int(0, 5)) : rng.normal();
  return v;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::max(std::sqrt(aa) * std::sqrt(bb), 1e-12);
}

Outcome oracle_equivalence() {
  SeededRng rng(42, stream_id("acceptance-oracle"));
  double worst = 0.0;
  for (std::size_t s = 0; s < kOracleSets; ++s) {
    const bool ties = s % 2 == 1;
    const auto pos = draw_scores(rng, 1 + rng.uniform_index(30), ties);
    const auto neg = draw_scores(rng, 1 + rng.uniform_index(30), ties);
    worst = std::max(worst, std::abs(auc(pos, neg) - pairwise_auc(pos, neg)));

    const std::size_t k = 1 + rng.uniform_index(40);
    std::vector<double> sorted = pos;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    const std::size_t used = std::min(k, sorted.size());
    const double top = std::accumulate(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(used), 0.0) /
                       static_cast<double>(used);
    const double all = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
    worst = std::max(worst, std::abs(aggregate(pos, {AggregationKind::top_k_mean, k, 2000}) - top));
    worst = std::max(worst, std::abs(aggregate(pos, {AggregationKind::mean, k, 2000}) - all));

    ReferenceSet refs;
    std::vector<std::vector<double>> raw;
    for (int r = 0; r < 20; ++r) {
      std::vector<double> z(8);
      for (double& x : z) x = rng.normal();
      raw.push_back(z);
      refs.add({"ref", "r" + std::to_string(r)}, z);
    }
    std::vector<double> q(8);
    for (double& x : q) x = rng.normal();
    std::vector<double> d;
    for (const auto& z : raw) {
      double acc = 0;
      for (std::size_t i = 0; i < 8; ++i) acc += (q[i] - z[i]) * (q[i] - z[i]);
      d.push_back(std::sqrt(acc));
    }
    std::sort(d.begin(), d.end());
    worst = std::max(worst, std::abs(knn_score(q, refs, 5) - (-(d[0] + d[1] + d[2] + d[3] + d[4]) / 5.0)));
  }

  // Window observables against explicit K loops.
  for (Family family : {Family::mae_cnn, Family::mae_transformer, Family::simclr_cnn, Family::ts2vec}) {
    EncoderConfig cfg;
    cfg.family = family;
    const EncoderModel model(cfg);
    for (int w = 0; w < 3; ++w) {
      std::vector<double> x(kWindowLength);
      for (double& v : x) v = rng.normal();
      if (is_mae(family)) {
        const auto masks = make_fixed_masks(8, cfg.patch_count(), cfg.mask_ratio, 42);
        double total = 0;
        for (const auto& m : masks) total += mae_loss(x, model.reconstruct(x, m), m);
        worst = std::max(worst, std::abs(score_rec(model, x, masks) - (-total / 8.0)));
      } else {
        SeededRng a(7, static_cast<std::uint64_t>(w)), b = a;
        const double score = score_con(model, x, 8, cfg.augment, a);
        double total = 0;
        for (int k = 0; k < 8; ++k) {
          const auto v1 = sample_view(x, cfg.augment, b);
          const auto v2 = sample_view(x, cfg.augment, b);
          total += cosine(model.encode(v1), model.encode(v2));
        }
        worst = std::max(worst, std::abs(score - total / 8.0));
      }
    }
  }
  return {worst <= kOracleTol, "max deviation " + num("%.3g", worst)};
}

// ---- criterion 3 ----------------------------------------------------------

Outcome calibration_guarantee() {
  SeededRng rng(42, stream_id("acceptance-calibration"));
  std::size_t cases = 0, violations = 0;
  for (std::size_t s = 0; s < kCalibrationSets; ++s) {
    const auto scores = draw_scores(rng, 1 + rng.uniform_index(200), s % 3 != 0);
    for (double alpha : {0.0, 0.01, 0.05, 0.1}) {
      const CalibrationResult r = calibrate_threshold(scores, alpha);
      const auto above = std::count_if(scores.begin(), scores.end(), [&](double v) { return v >= r.threshold; });
      const double fpr = static_cast<double>(above) / static_cast<double>(scores.size());
      ++cases;
      if (!(fpr <= alpha) || fpr != r.achieved_fpr) ++violations;
    }
  }
  return {violations == 0, std::to_string(cases - violations) + "/" + std::to_string(cases) + " sets within alpha"};
}

// ---- criterion 4 ----------------------------------------------------------

Outcome protocol_identities() {
  std::vector<RawRecord> records;
  for (const auto& [name, n] : {std::pair{"train", 12}, std::pair{"aux_a", 10}, std::pair{"aux_b", 10}}) {
    SynthCohort c;
    c.dataset_id = name;
    c.subjects = static_cast<std::size_t>(n);
    c.duration_s = 20.0;
    auto r = generate_cohort(c, 42);
    records.insert(records.end(), r.begin(), r.end());
  }
  const WindowCorpus corpus = build_corpus(records, {});
  const auto all = corpus.subjects();
  std::vector<SubjectId> train;
  for (const auto& s : all)
    if (s.dataset_id == "train") train.push_back(s);

  TempDir dir("acceptance-protocol");
  SeededRng rng(42, stream_id("acceptance-protocol"));
  std::size_t failures = 0, evaluations = 0;
  for (std::size_t c = 0; c < kProtocolConfigs; ++c) {
    std::vector<SubjectId> pool = train;
    rng.shuffle(pool);
    std::vector<SubjectId> members(pool.begin(), pool.begin() + 6 + static_cast<std::ptrdiff_t>(rng.uniform_index(7)));
    std::sort(members.begin(), members.end());
    const double ratios[] = {0.5, 1.0, 1.5, 2.0};
    const double ratio = ratios[rng.uniform_index(4)];
    const double a = rng.uniform(0.3, 0.5);
    const SplitFractions fractions{a, (1.0 - a) / 2.0, 1.0 - a - (1.0 - a) / 2.0};
    const std::uint64_t seed = rng.next_u64();

    const auto nonmembers = build_nonmember_pool(all, "train", members, ratio, seed);
    for (const auto& s : nonmembers) failures += s.dataset_id == "train";

    const SubjectSplit split = split_subjects(members, nonmembers, fractions, seed);
    std::set<LabeledSubject> seen;
    std::size_t total = 0;
    for (const auto* part : {&split.attacker_train, &split.calibration, &split.test}) {
      for (const auto& s : *part) {
        seen.insert(s);
        ++total;
      }
    }
    std::set<LabeledSubject> expected;
    for (const auto& s : members) expected.insert({s, true});
    for (const auto& s : nonmembers) expected.insert({s, false});
    failures += total != seen.size() || seen != expected;

    for (int e = 0; e < 20; ++e) {
      const auto m = draw_scores(rng, 1 + rng.uniform_index(10), e % 2 == 0);
      const auto n = draw_scores(rng, 1 + rng.uniform_index(10), e % 2 == 0);
      const OperatingPoint op = evaluate_at_threshold(m, n, rng.normal());
      failures += op.adv != op.tpr - op.fpr;
      ++evaluations;
    }

    EncoderConfig cfg;
    cfg.channels = {4, 4, 4};
    cfg.embedding_dim = 8;
    cfg.epochs = 1;
    cfg.batch_size = 8;
    cfg.seed = seed;
    PretrainOptions options;
    options.train_ids_path = dir / ("train_ids_" + std::to_string(c) + ".json");
    const std::set<SubjectId> member_set(members.begin(), members.end());
    const PretrainResult result = pretrain(cfg, corpus, member_set, options);
    failures += read_train_ids(options.train_ids_path) != member_set;
    failures += result.model.train_subjects() != member_set;
  }
  return {failures == 0, std::to_string(kProtocolConfigs) + " configs, " + std::to_string(evaluations) +
                             " evaluations, " + std::to_string(failures) + " violations"};
}

// ---- criterion 5 ----------------------------------------------------------

int cli(const std::vector<std::string>& args, std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int code = cli::dispatch(args, out, err);
  if (err_text != nullptr) *err_text = err.str();
  return code;
}

Outcome determinism() {
  TempDir dir("acceptance-determinism");
  const std::string cfg = (kConfigs / "desk_preset.json").string();
  for (const char* run : {"run1", "run2"}) {
    const fs::path root = dir / run;
    std::string err;
    const std::vector<std::vector<std::string>> steps{
        {"--config", cfg, "synth", "--out", (root / "records").string()},
        {"preprocess", "--records", (root / "records").string(), "--out", (root / "cache.bin").string()},
        {"--config", cfg, "pretrain", "--cache", (root / "cache.bin").string(), "--out", (root / "models").string()},
        {"--config", cfg, "attack", "--cache", (root / "cache.bin").string(), "--models", (root / "models").string(),
         "--out", (root / "report").string()},
    };
    for (const auto& step : steps) {
      if (cli(step, &err) != 0) return {false, std::string(run) + " " + step[step.size() > 3 ? 2 : 0] + ": " + err};
    }
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir / "run1")) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir / "run1"));
  }
  std::size_t mismatches = 0, checkpoints = 0;
  for (const auto& f : files) {
    mismatches += slurp(dir / "run1" / f) != slurp(dir / "run2" / f);
    checkpoints += f.filename() == "model.bin";
  }
  std::size_t second = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "run2")) second += e.is_regular_file();
  const bool complete = checkpoints == 4 && fs::exists(dir / "run1" / "cache.bin") &&
                        fs::exists(dir / "run1" / "report" / "report.json");
  return {mismatches == 0 && second == files.size() && complete,
          std::to_string(files.size()) + " files compared, " + std::to_string(mismatches) + " differ"};
}

// ---- criteria 6 and 7 -----------------------------------------------------

struct LeakRun {
  double trained = 0.0;
  double untrained = 0.0;
};

double knn_auc(const RunConfig& cfg, const WindowCorpus& corpus, const EncoderModel& model,
               const std::set<SubjectId>& members) {
  const std::vector<AuditTarget> targets{{&model, members, {Attack::knn}}};
  const AuditRun run = run_audit(cfg.audit_settings(1), corpus, targets);
  return run.report.cells.at(0).auc;
}

LeakRun planted_leak(const std::string& config_name) {
  const RunConfig cfg = load_run_config(kConfigs / config_name).config;
  std::vector<RawRecord> records;
  for (const SynthCohort& c : cfg.synthetic) {
    auto r = generate_cohort(c, cfg.seed);
    records.insert(records.end(), r.begin(), r.end());
  }
  const WindowCorpus corpus = build_corpus(records, {});
  std::set<SubjectId> members;
  for (const auto& s : corpus.subjects())
    if (s.dataset_id == cfg.train_dataset) members.insert(s);
  const EncoderConfig& enc = cfg.encoder(Family::simclr_cnn);
  const EncoderModel untrained(enc);
  const PretrainResult trained = pretrain(enc, corpus, members);
  return {knn_auc(cfg, corpus, trained.model, members), knn_auc(cfg, corpus, untrained, members)};
}

std::optional<LeakRun> small_cohort;

const LeakRun& small_cohort_run() {
  if (!small_cohort) small_cohort = planted_leak("planted_leak.json");
  return *small_cohort;
}

Outcome leakage_reproduction() {
  const LeakRun& r = small_cohort_run();
  const bool trained_ok = r.trained >= kLeakAucMin;
  const bool untrained_ok = r.untrained >= kUntrainedLo && r.untrained <= kUntrainedHi;
  return {trained_ok && untrained_ok, "kNN AUC trained " + num("%.3f", r.trained) + " (need >= 0.9), untrained " +
                                          num("%.3f", r.untrained) + " (need in [0.3, 0.7])"};
}

Outcome attenuation() {
  const LeakRun& small = small_cohort_run();
  const LeakRun large = planted_leak("planted_leak_64.json");
  const double drop = small.trained - large.trained;
  return {drop >= kAttenuationMin, "kNN AUC 8 members " + num("%.3f", small.trained) + ", 64 members " +
                                       num("%.3f", large.trained) + ", drop " + num("%.3f", drop) +
                                       " (need >= 0.1)"};
}

// ---- criterion 8 ----------------------------------------------------------

Outcome interface_asymmetry() {
  AuditReport report;
  report.config_fingerprint = "hand-built";
  struct Row {
    const char* dataset;
    const char* family;
    double score;
    double learned;
  };
  const Row rows[] = {{"ds_a", "simclr_cnn", 0.62, 0.81},
                      {"ds_a", "mae_cnn", 0.74, 0.55},
                      {"ds_b", "simclr_cnn", 0.50, 0.50},
                      {"ds_b", "mae_cnn", 0.91, 0.64}};
  for (const Row& r : rows) {
    report.cells.push_back({r.dataset, r.family, "score", r.score, 0.1, 0.05, 0.05, 0.0, 0.0});
    report.cells.push_back({r.dataset, r.family, "learned", r.learned, 0.2, -0.03, 0.23, 0.0, 0.0});
  }
  report.delta_auc = compute_delta_auc(report.cells);

  std::size_t failures = 0;
  failures += report.delta_auc.size() != 4;
  for (const DeltaCell& d : report.delta_auc) {
    const auto row = std::find_if(std::begin(rows), std::end(rows),
                                  [&](const Row& r) { return d.dataset == r.dataset && d.family == r.family; });
    failures += row == std::end(rows) || d.value != row->learned - row->score;
  }

  TempDir dir("acceptance-report");
  {
    std::ofstream(dir / "report.json", std::ios::binary) << report_json(report);
  }
  if (cli({"report", "--report", (dir / "report.json").string(), "--out", (dir / "plots").string()}) != 0) {
    return {false, "report command failed"};
  }
  const auto svg = testing::check_xml(slurp(dir / "plots" / "delta_auc_heatmap.svg"));
  if (!svg.ok) return {false, "heatmap is not well-formed: " + svg.error};
  std::size_t positive = 0, negative = 0, zero = 0;
  for (const auto& e : svg.elements) {
    if (e.name != "rect" || !e.attrs.contains("class") || e.attrs.at("class") != "cell") continue;
    const double v = std::stod(e.attrs.at("data-value"));
    const std::string fill = e.attrs.at("fill");
    const int red = std::stoi(fill.substr(1, 2), nullptr, 16);
    const int blue = std::stoi(fill.substr(5, 2), nullptr, 16);
    if (v > 0) {
      ++positive;
      failures += !(red > blue);
    } else if (v < 0) {
      ++negative;
      failures += !(blue > red);
    } else {
      ++zero;
      failures += fill != "#ffffff";
    }
  }
  failures += positive != 1 || negative != 2 || zero != 1;
  return {failures == 0, std::to_string(positive) + " positive, " + std::to_string(negative) + " negative, " +
                             std::to_string(zero) + " zero delta cells rendered"};
}

// ---- criterion 9 ----------------------------------------------------------

Outcome paper_preset() {
  const fs::path path = kConfigs / "paper_preset.json";
  const json raw = json::parse(slurp(path));
  const LoadedConfig loaded = load_run_config(path);
  const RunConfig& cfg = loaded.config;
  std::vector<std::string> bad;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) bad.push_back(what);
  };

  // The file itself carries the published constants...
  for (const auto& e : raw["encoders"]) {
    expect(e["epochs"] == 30, "file epochs");
    expect(e["batch_size"] == 256, "file batch_size");
    expect(e["temperature"] == 0.2, "file temperature");
    expect(e["patch_len"] == 50, "file patch_len");
    expect(e["mask_ratio"] == 0.5, "file mask_ratio");
  }
  const json& audit = raw["audit"];
  expect(audit["rec_masks"] == 8 && audit["con_draws"] == 8, "file K");
  expect(audit["aggregation"]["window_cap"] == 2000, "file w");
  expect(audit["aggregation"]["k"] == 50, "file k");
  expect(audit["alpha"] == 0.01, "file alpha");
  expect(audit["knn_k"] == 5, "file knn k");
  expect(audit["nonmember_ratio"] == 1.0, "file r");
  expect(raw["seed"] == 42, "file seed");

  // ...and the loaded config matches the file field by field.
  expect(cfg.encoders.size() == raw["encoders"].size(), "encoder count");
  for (std::size_t i = 0; i < cfg.encoders.size(); ++i) {
    const EncoderConfig& e = cfg.encoders[i];
    const json& f = raw["encoders"][i];
    expect(e.epochs == f["epochs"].get<std::size_t>(), "epochs");
    expect(e.batch_size == f["batch_size"].get<std::size_t>(), "batch_size");
    expect(e.temperature == f["temperature"].get<double>(), "temperature");
    expect(e.patch_len == f["patch_len"].get<std::size_t>(), "patch_len");
    expect(e.mask_ratio == f["mask_ratio"].get<double>(), "mask_ratio");
    expect(e.seed == raw["seed"].get<std::uint64_t>(), "encoder seed");
  }
  expect(cfg.rec_masks == audit["rec_masks"].get<std::size_t>(), "rec_masks");
  expect(cfg.con_draws == audit["con_draws"].get<std::size_t>(), "con_draws");
  expect(cfg.aggregation.window_cap == audit["aggregation"]["window_cap"].get<std::size_t>(), "window_cap");
  expect(cfg.aggregation.k == audit["aggregation"]["k"].get<std::size_t>(), "aggregation k");
  expect(cfg.alpha == audit["alpha"].get<double>(), "alpha");
  expect(cfg.knn_k == audit["knn_k"].get<std::size_t>(), "knn_k");
  expect(cfg.nonmember_ratio == audit["nonmember_ratio"].get<double>(), "nonmember_ratio");
  expect(cfg.seed == raw["seed"].get<std::uint64_t>(), "seed");

  // Round trip through serialization and fingerprinting.
  TempDir dir("acceptance-preset");
  const std::string text = run_config_json(cfg);
  { std::ofstream(dir / "again.json", std::ios::binary) << text; }
  const LoadedConfig again = load_run_config(dir / "again.json");
  expect(again.config == cfg, "round trip");
  expect(run_config_json(again.config) == text, "stable serialization");
  expect(again.fingerprint() == sha256_hex(text), "fingerprint of serialized bytes");
  expect(load_run_config(path).fingerprint() == loaded.fingerprint(), "fingerprint stability");
  expect(loaded.fingerprint() == sha256_hex(slurp(path)), "fingerprint of file bytes");

  std::string detail = bad.empty() ? "all constants intact" : "mismatch:";
  for (const auto& b : bad) detail += " " + b;
  return {bad.empty(), detail};
}

struct Criterion {
  int id;
  const char* name;
  double budget;  // seconds, 0 = none
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  log::init_from_env(spdlog::level::warn);
  const std::vector<Criterion> criteria{
      {1, "gradient fidelity", kBudget1, gradient_fidelity},
      {2, "oracle equivalence", kBudget2, oracle_equivalence},
      {3, "calibration guarantee", kBudget3, calibration_guarantee},
      {4, "protocol identities", 0, protocol_identities},
      {5, "determinism", kBudget5, determinism},
      {6, "planted-leak reproduction", kBudget6, leakage_reproduction},
      {7, "cohort-size attenuation", kBudget7, attenuation},
      {8, "delta-AUC rendering", 0, interface_asymmetry},
      {9, "paper preset", 0, paper_preset},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const Criterion& c : criteria) {
    if (!wanted.empty() && !wanted.contains(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget > 0 && secs > c.budget) {
      o.pass = false;
      o.detail += "; over the " + num("%.0f", c.budget) + " s budget";
    }
    failed += !o.pass;
    std::cout << "criterion " << c.id << " (" << c.name << "): " << (o.pass ? "PASS" : "FAIL") << " - " << o.detail
              << " [" << num("%.1f", secs) << " s]" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
