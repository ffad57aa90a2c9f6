#include "mia/audit.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <json.hpp>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "mia/error.hpp"
#include "mia/log.hpp"
#include "mia/parallel.hpp"
#include "mia/rng.hpp"

namespace mia {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::uint64_t subject_stream(std::string_view purpose, const SubjectId& s) {
  return combine_streams(stream_id(purpose), stream_id(s.str()));
}

std::vector<std::size_t> largest_remainder(std::size_t n, const std::array<double, 3>& fractions) {
  std::array<std::size_t, 3> base{};
  std::array<double, 3> rest{};
  std::size_t used = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double raw = fractions[i] * static_cast<double>(n);
    base[i] = static_cast<std::size_t>(std::floor(raw));
    rest[i] = raw - std::floor(raw);
    used += base[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rest[a] > rest[b]; });
  for (std::size_t i = 0; used < n; ++i, ++used) {
    ++base[order[i % 3]];
  }
  return {base.begin(), base.end()};
}

}  // namespace

void AggregationPolicy::validate() const {
  if (k == 0) throw ValidationError("aggregation.k must be >= 1");
  if (window_cap == 0) throw ValidationError("aggregation.window_cap must be >= 1");
}

double aggregate(std::span<const double> scores, const AggregationPolicy& policy) {
  if (scores.empty()) {
    throw std::invalid_argument("aggregate: subject has no window scores");
  }
  std::vector<double> sorted(scores.begin(), scores.end());
  std::size_t used = sorted.size();
  if (policy.kind == AggregationKind::top_k_mean) {
    used = std::min(policy.k, sorted.size());
    std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(used), sorted.end(),
                      std::greater<>());
  } else {
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
  }
  double total = 0.0;
  for (std::size_t i = 0; i < used; ++i) {
    total += sorted[i];
  }
  return total / static_cast<double>(used);
}

std::vector<SubjectId> build_nonmember_pool(std::span<const SubjectId> all_subjects, const std::string& train_dataset,
                                            std::span<const SubjectId> members, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0) || !std::isfinite(ratio)) {
    throw ValidationError("non-member ratio must be > 0");
  }
  const std::set<SubjectId> member_set(members.begin(), members.end());
  std::set<SubjectId> candidates;
  for (const SubjectId& s : all_subjects) {
    if (s.dataset_id != train_dataset && !member_set.contains(s)) {
      candidates.insert(s);
    }
  }
  if (candidates.empty()) {
    throw ValidationError("no auxiliary subjects outside dataset '" + train_dataset +
                          "' are available as non-members");
  }
  const std::vector<SubjectId> pool(candidates.begin(), candidates.end());
  const auto wanted = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(members.size())));
  const std::size_t count = std::min(std::max<std::size_t>(wanted, 1), pool.size());
  SeededRng rng(seed, stream_id("nonmember-pool"));
  std::vector<SubjectId> out;
  for (std::size_t i : rng.sample_without_replacement(pool.size(), count)) {
    out.push_back(pool[i]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

void SplitFractions::validate() const {
  for (double f : {attacker_train, calibration, test}) {
    if (!(f > 0.0 && f < 1.0)) {
      throw ValidationError("split fractions must each lie in (0, 1)");
    }
  }
  if (std::abs(attacker_train + calibration + test - 1.0) > 1e-9) {
    throw ValidationError("split fractions must sum to 1");
  }
}

SubjectSplit split_subjects(std::span<const SubjectId> members, std::span<const SubjectId> nonmembers,
                            const SplitFractions& fractions, std::uint64_t seed) {
  fractions.validate();
  const std::array<double, 3> f{fractions.attacker_train, fractions.calibration, fractions.test};
  const std::array<const char*, 3> names{"attacker_train", "calibration", "test"};
  SubjectSplit split;
  std::array<std::vector<LabeledSubject>*, 3> parts{&split.attacker_train, &split.calibration, &split.test};

  for (const bool label : {true, false}) {
    const auto source = label ? members : nonmembers;
    std::vector<SubjectId> pool(source.begin(), source.end());
    std::sort(pool.begin(), pool.end());
    if (std::adjacent_find(pool.begin(), pool.end()) != pool.end()) {
      throw ValidationError("split_subjects: duplicate subject in input");
    }
    SeededRng(seed, stream_id(label ? "split-members" : "split-nonmembers")).shuffle(pool);
    const auto sizes = largest_remainder(pool.size(), f);
    std::size_t at = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      if (sizes[i] == 0) {
        throw ValidationError(std::string("split '") + names[i] + "' receives no " +
                              (label ? "members" : "non-members") + " (" + std::to_string(pool.size()) +
                              " available)");
      }
      for (std::size_t j = 0; j < sizes[i]; ++j) {
        parts[i]->push_back({pool[at++], label});
      }
    }
  }
  for (auto* part : parts) {
    std::sort(part->begin(), part->end());
  }
  return split;
}

CalibrationResult calibrate_threshold(std::span<const double> nonmember_scores, double alpha) {
  if (nonmember_scores.empty()) {
    throw std::invalid_argument("calibrate_threshold: no calibration non-member scores");
  }
  if (!(alpha >= 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("calibrate_threshold: alpha must lie in [0, 1)");
  }
  std::vector<double> sorted(nonmember_scores.begin(), nonmember_scores.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  std::vector<double> candidates = sorted;
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  double sentinel = sorted.back() + 1.0;
  if (!(sentinel > sorted.back())) {
    sentinel = std::nextafter(sorted.back(), std::numeric_limits<double>::infinity());
  }
  candidates.push_back(sentinel);
  for (double tau : candidates) {
    const auto above = static_cast<double>(sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), tau));
    if (above / n <= alpha) {
      return {tau, alpha, above / n};
    }
  }
  return {sentinel, alpha, 0.0};
}

double auc(std::span<const double> member_scores, std::span<const double> nonmember_scores) {
  if (member_scores.empty() || nonmember_scores.empty()) {
    throw std::invalid_argument("auc: both member and non-member scores are required");
  }
  std::vector<double> negatives(nonmember_scores.begin(), nonmember_scores.end());
  std::sort(negatives.begin(), negatives.end());
  std::uint64_t twice_wins = 0;
  for (double s : member_scores) {
    const auto lo = std::lower_bound(negatives.begin(), negatives.end(), s);
    const auto hi = std::upper_bound(lo, negatives.end(), s);
    twice_wins += 2 * static_cast<std::uint64_t>(lo - negatives.begin()) + static_cast<std::uint64_t>(hi - lo);
  }
  return static_cast<double>(twice_wins) /
         (2.0 * static_cast<double>(member_scores.size()) * static_cast<double>(negatives.size()));
}

OperatingPoint evaluate_at_threshold(std::span<const double> member_scores, std::span<const double> nonmember_scores,
                                     double threshold) {
  if (member_scores.empty() || nonmember_scores.empty()) {
    throw std::invalid_argument("evaluate_at_threshold: empty test set");
  }
  auto rate = [&](std::span<const double> scores) {
    const auto hits = std::count_if(scores.begin(), scores.end(), [&](double s) { return s >= threshold; });
    return static_cast<double>(hits) / static_cast<double>(scores.size());
  };
  OperatingPoint p;
  p.tpr = rate(member_scores);
  p.fpr = rate(nonmember_scores);
  p.adv = p.tpr - p.fpr;
  return p;
}

std::string to_string(Attack attack) {
  switch (attack) {
    case Attack::score: return "score";
    case Attack::learned: return "learned";
    case Attack::knn: return "knn";
  }
  return "unknown";
}

Attack parse_attack(const std::string& name) {
  for (Attack a : {Attack::score, Attack::learned, Attack::knn}) {
    if (to_string(a) == name) {
      return a;
    }
  }
  throw ValidationError("unknown attack '" + name + "' (expected score, learned or knn)");
}

std::vector<DeltaCell> compute_delta_auc(std::span<const ReportCell> cells) {
  std::map<std::pair<std::string, std::string>, std::pair<const ReportCell*, const ReportCell*>> found;
  std::vector<std::pair<std::string, std::string>> order;
  for (const ReportCell& c : cells) {
    const auto key = std::make_pair(c.dataset, c.family);
    if (!found.contains(key)) {
      order.push_back(key);
    }
    auto& slot = found[key];
    if (c.attack == "score") slot.first = &c;
    if (c.attack == "learned") slot.second = &c;
  }
  std::vector<DeltaCell> out;
  for (const auto& key : order) {
    const auto [score, learned] = found[key];
    if (score != nullptr && learned != nullptr) {
      out.push_back({key.first, key.second, learned->auc - score->auc});
    }
  }
  return out;
}

std::string report_json(const AuditReport& report) {
  ordered_json doc;
  doc["config_fingerprint"] = report.config_fingerprint;
  doc["cells"] = ordered_json::array();
  for (const ReportCell& c : report.cells) {
    doc["cells"].push_back(ordered_json{{"dataset", c.dataset},
                                        {"family", c.family},
                                        {"attack", c.attack},
                                        {"auc", c.auc},
                                        {"tpr_at_alpha", c.tpr_at_alpha},
                                        {"adv", c.adv},
                                        {"fpr", c.fpr},
                                        {"threshold", c.threshold},
                                        {"cal_fpr", c.cal_fpr}});
  }
  doc["delta_auc"] = ordered_json::array();
  for (const DeltaCell& d : report.delta_auc) {
    doc["delta_auc"].push_back(ordered_json{{"dataset", d.dataset}, {"family", d.family}, {"value", d.value}});
  }
  return doc.dump(2) + "\n";
}

AuditReport parse_report_json(const std::string& text) {
  try {
    const json doc = json::parse(text);
    AuditReport r;
    r.config_fingerprint = doc.at("config_fingerprint").get<std::string>();
    for (const json& c : doc.at("cells")) {
      ReportCell cell;
      cell.dataset = c.at("dataset").get<std::string>();
      cell.family = c.at("family").get<std::string>();
      cell.attack = c.at("attack").get<std::string>();
      cell.auc = c.at("auc").get<double>();
      cell.tpr_at_alpha = c.at("tpr_at_alpha").get<double>();
      cell.adv = c.at("adv").get<double>();
      cell.fpr = c.value("fpr", cell.tpr_at_alpha - cell.adv);
      cell.threshold = c.at("threshold").get<double>();
      cell.cal_fpr = c.at("cal_fpr").get<double>();
      r.cells.push_back(std::move(cell));
    }
    for (const json& d : doc.at("delta_auc")) {
      r.delta_auc.push_back(
          {d.at("dataset").get<std::string>(), d.at("family").get<std::string>(), d.at("value").get<double>()});
    }
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed report: ") + e.what());
  }
}

std::string cells_csv(const AuditReport& report) {
  std::ostringstream out;
  out << "dataset,family,attack,auc,tpr_at_alpha,adv,fpr,threshold,cal_fpr\n" << std::setprecision(17);
  for (const ReportCell& c : report.cells) {
    out << c.dataset << ',' << c.family << ',' << c.attack << ',' << c.auc << ',' << c.tpr_at_alpha << ',' << c.adv
        << ',' << c.fpr << ',' << c.threshold << ',' << c.cal_fpr << '\n';
  }
  return out.str();
}

namespace {

struct SubjectData {
  SubjectId subject;
  std::vector<std::size_t> window_indices;
  std::vector<double> window_scores;
  std::vector<double> embedding;
};

ReportCell make_cell(const std::string& dataset, Family family, Attack attack, const SubjectSplit& split,
                     const std::map<SubjectId, double>& scores, double alpha) {
  std::vector<double> cal_nonmembers, test_members, test_nonmembers;
  for (const auto& s : split.calibration) {
    if (!s.member) cal_nonmembers.push_back(scores.at(s.subject));
  }
  for (const auto& s : split.test) {
    (s.member ? test_members : test_nonmembers).push_back(scores.at(s.subject));
  }
  const CalibrationResult cal = calibrate_threshold(cal_nonmembers, alpha);
  const OperatingPoint op = evaluate_at_threshold(test_members, test_nonmembers, cal.threshold);
  if (op.adv != op.tpr - op.fpr) {
    throw std::logic_error("advantage identity violated");
  }
  ReportCell cell;
  cell.dataset = dataset;
  cell.family = to_string(family);
  cell.attack = to_string(attack);
  cell.auc = auc(test_members, test_nonmembers);
  cell.tpr_at_alpha = op.tpr;
  cell.adv = op.adv;
  cell.fpr = op.fpr;
  cell.threshold = cal.threshold;
  cell.cal_fpr = cal.achieved_fpr;
  return cell;
}

}  // namespace

AuditRun run_audit(const AuditSettings& settings, const WindowSource& corpus, std::span<const AuditTarget> targets) {
  settings.aggregation.validate();
  settings.fractions.validate();
  if (!(settings.alpha >= 0.0 && settings.alpha < 1.0)) {
    throw ValidationError("alpha must lie in [0, 1)");
  }
  const auto all_subjects = corpus.subjects();
  const std::set<SubjectId> known(all_subjects.begin(), all_subjects.end());

  AuditRun run;
  std::set<std::pair<std::string, Family>> seen;
  for (const AuditTarget& target : targets) {
    if (target.model == nullptr) {
      throw std::invalid_argument("run_audit: target without a model");
    }
    const EncoderModel& model = *target.model;
    const Family family = model.config().family;
    if (target.members.empty()) {
      throw ValidationError("run_audit: " + to_string(family) + " model has no recorded training subjects");
    }
    const std::string dataset = target.members.begin()->dataset_id;
    for (const SubjectId& s : target.members) {
      if (s.dataset_id != dataset) {
        throw ValidationError("run_audit: members span several datasets (" + dataset + ", " + s.dataset_id + ")");
      }
      if (!known.contains(s)) {
        throw ValidationError("run_audit: member " + s.str() + " is missing from the corpus");
      }
    }
    if (!seen.insert({dataset, family}).second) {
      throw ValidationError("run_audit: " + to_string(family) + " on " + dataset + " requested twice");
    }

    const std::vector<SubjectId> members(target.members.begin(), target.members.end());
    const auto nonmembers =
        build_nonmember_pool(all_subjects, dataset, members, settings.nonmember_ratio, settings.seed);
    SubjectSplit split = split_subjects(members, nonmembers, settings.fractions, settings.seed);

    std::vector<SubjectData> data;
    for (const auto* part : {&split.attacker_train, &split.calibration, &split.test}) {
      for (const auto& s : *part) data.push_back({s.subject, {}, {}, {}});
    }
    std::sort(data.begin(), data.end(), [](const auto& a, const auto& b) { return a.subject < b.subject; });

    const bool wants_windows = std::any_of(target.attacks.begin(), target.attacks.end(),
                                           [](Attack a) { return a != Attack::knn; });
    const bool wants_embedding = std::find(target.attacks.begin(), target.attacks.end(), Attack::knn) !=
                                 target.attacks.end();
    const auto masks = is_mae(family) ? make_fixed_masks(settings.rec_masks, model.config().patch_count(),
                                                         model.config().mask_ratio, settings.seed)
                                      : std::vector<MaskPattern>{};
    const AugmentConfig con_augment = settings.con_augment.value_or(model.config().augment);

    parallel_for(data.size(), settings.threads, [&](std::size_t i) {
      SubjectData& d = data[i];
      const std::size_t n = corpus.window_count(d.subject);
      if (n == 0) {
        throw ValidationError("run_audit: subject " + d.subject.str() + " has no windows");
      }
      d.window_indices.resize(n);
      std::iota(d.window_indices.begin(), d.window_indices.end(), 0);
      if (n > settings.aggregation.window_cap) {
        SeededRng rng(settings.seed, subject_stream("window-sample", d.subject));
        d.window_indices = rng.sample_without_replacement(n, settings.aggregation.window_cap);
        std::sort(d.window_indices.begin(), d.window_indices.end());
      }
      std::vector<std::span<const double>> windows;
      for (std::size_t j : d.window_indices) {
        windows.push_back(corpus.window(d.subject, j));
      }
      if (wants_windows) {
        for (std::size_t w = 0; w < windows.size(); ++w) {
          if (is_mae(family)) {
            d.window_scores.push_back(score_rec(model, windows[w], masks));
          } else {
            SeededRng rng(settings.seed,
                          combine_streams(subject_stream("score-con", d.subject), d.window_indices[w]));
            d.window_scores.push_back(score_con(model, windows[w], settings.con_draws, con_augment, rng));
          }
        }
      }
      if (wants_embedding) {
        SeededRng rng(settings.seed, subject_stream("embedding", d.subject));
        d.embedding = subject_embedding(model, windows, settings.aggregation.window_cap, rng);
      }
    });

    std::map<SubjectId, const SubjectData*> by_subject;
    for (const auto& d : data) by_subject[d.subject] = &d;

    for (Attack attack : target.attacks) {
      std::map<SubjectId, double> scores;
      if (attack == Attack::score) {
        for (const auto& d : data) scores[d.subject] = aggregate(d.window_scores, settings.aggregation);
      } else if (attack == Attack::learned) {
        std::vector<SubjectFeatureVector> features;
        std::vector<int> labels;
        for (const auto& s : split.attacker_train) {
          features.push_back(subject_features(by_subject.at(s.subject)->window_scores));
          labels.push_back(s.member ? 1 : 0);
        }
        const MlpTraining trained =
            train_mlp_attacker(features, labels, combine_streams(settings.seed, stream_id(to_string(family))));
        for (const auto* part : {&split.calibration, &split.test}) {
          for (const auto& s : *part) {
            scores[s.subject] = trained.attacker.score(subject_features(by_subject.at(s.subject)->window_scores));
          }
        }
      } else {
        ReferenceSet refs;
        for (const auto& s : split.attacker_train) {
          if (s.member) refs.add(s.subject, by_subject.at(s.subject)->embedding);
        }
        for (const auto* part : {&split.calibration, &split.test}) {
          for (const auto& s : *part) {
            scores[s.subject] = knn_score(by_subject.at(s.subject)->embedding, refs, settings.knn_k, s.subject);
          }
        }
      }
      run.report.cells.push_back(make_cell(dataset, family, attack, split, scores, settings.alpha));
      const ReportCell& c = run.report.cells.back();
      log::info("{} / {} / {}: auc {:.4f} tpr@{} {:.4f} adv {:.4f}", dataset, c.family, c.attack, c.auc,
                settings.alpha, c.tpr_at_alpha, c.adv);
    }

    if (wants_windows) {
      ScoreDump dump{dataset, to_string(family), {}};
      for (const auto& d : data) {
        for (std::size_t w = 0; w < d.window_scores.size(); ++w) {
          dump.scores.push_back({d.subject, d.window_indices[w], d.window_scores[w]});
        }
      }
      run.dumps.push_back(std::move(dump));
    }
    run.splits.push_back(std::move(split));
  }
  run.report.delta_auc = compute_delta_auc(run.report.cells);
  return run;
}

}  // namespace mia
