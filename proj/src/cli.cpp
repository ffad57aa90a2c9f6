#include "mia/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <json.hpp>
#include <map>
#include <optional>
#include <set>

#include "binary_io.hpp"
#include "mia/audit.hpp"
#include "mia/config.hpp"
#include "mia/corpus.hpp"
#include "mia/encoders.hpp"
#include "mia/error.hpp"
#include "mia/log.hpp"
#include "mia/plots.hpp"
#include "mia/synth.hpp"

namespace mia::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
};

LoadedConfig require_config(const Globals& g) {
  if (g.config.empty()) {
    throw ValidationError("--config is required for this command");
  }
  return load_run_config(g.config, g.seed);
}

void check_threads(const Globals& g) {
  if (g.threads == 0) throw ValidationError("--threads must be >= 1");
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

fs::path model_dir(const fs::path& root, const std::string& dataset, Family family) {
  return root / dataset / to_string(family);
}

std::vector<Family> selected_families(const RunConfig& cfg, const std::vector<std::string>& names) {
  std::vector<Family> out;
  if (names.empty()) {
    for (const EncoderConfig& e : cfg.encoders) out.push_back(e.family);
    return out;
  }
  for (const std::string& n : names) {
    const Family f = parse_family(n);
    cfg.encoder(f);
    if (std::find(out.begin(), out.end(), f) == out.end()) out.push_back(f);
  }
  return out;
}

std::set<SubjectId> dataset_subjects(const WindowSource& corpus, const std::string& dataset) {
  std::set<SubjectId> out;
  for (const SubjectId& s : corpus.subjects()) {
    if (s.dataset_id == dataset) out.insert(s);
  }
  if (out.empty()) {
    throw ValidationError("cache holds no subjects of training dataset '" + dataset + "'");
  }
  return out;
}

void cmd_synth(const Globals& g, const fs::path& out_dir, std::ostream& out) {
  const LoadedConfig loaded = require_config(g);
  const RunConfig& cfg = loaded.config;
  if (cfg.synthetic.empty()) {
    throw ValidationError("config defines no synthetic cohorts");
  }
  ordered_json entries = ordered_json::array();
  std::size_t count = 0;
  for (const SynthCohort& cohort : cfg.synthetic) {
    for (const RawRecord& record : generate_cohort(cohort, cfg.seed)) {
      const fs::path rel = fs::path(record.dataset_id) / (record.record_id + ".rec");
      write_record_file(record, out_dir / rel);
      entries.push_back({{"dataset_id", record.dataset_id},
                         {"subject_key", subject_of(record.dataset_id, record.record_id).subject_key},
                         {"record_id", record.record_id},
                         {"path", rel.generic_string()}});
      ++count;
    }
  }
  const ordered_json manifest = {{"config_fingerprint", loaded.fingerprint()}, {"records", entries}};
  detail::write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
  out << "wrote " << count << " records to " << out_dir.string() << "\n";
}

void cmd_preprocess(const fs::path& records_dir, const fs::path& cache, std::ostream& out) {
  const std::vector<RawRecord> records = read_record_dir(records_dir);
  if (records.empty()) {
    throw ValidationError("no records found in " + records_dir.string());
  }
  const WindowCorpus corpus = build_corpus(records, cache);
  std::map<std::string, std::size_t> record_counts;
  for (const RawRecord& r : records) ++record_counts[r.dataset_id];
  for (const auto& [dataset, windows] : corpus.windows_per_dataset()) {
    out << dataset << ": records=" << record_counts[dataset] << " N=" << windows << "\n";
  }
}

void cmd_pretrain(const Globals& g, const fs::path& cache, const fs::path& out_dir,
                  const std::vector<std::string>& families, std::ostream& out) {
  check_threads(g);
  const LoadedConfig loaded = require_config(g);
  const RunConfig& cfg = loaded.config;
  const auto selected = selected_families(cfg, families);
  const WindowCorpus corpus = read_cache(cache);
  const std::set<SubjectId> members = dataset_subjects(corpus, cfg.train_dataset);
  for (Family family : selected) {
    const fs::path dir = model_dir(out_dir, cfg.train_dataset, family);
    PretrainOptions options;
    options.threads = g.threads;
    options.train_ids_path = dir / "train_ids.json";
    log::info("pretraining {} on {} ({} subjects)", to_string(family), cfg.train_dataset, members.size());
    const PretrainResult result = pretrain(cfg.encoder(family), corpus, members, options);
    write_checkpoint(result.model, dir / "model.bin");
    std::string csv = "epoch,loss\n";
    for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
      csv += std::to_string(e + 1) + "," + num(result.epoch_losses[e]) + "\n";
    }
    detail::write_file(dir / "loss.csv", csv);
    out << to_string(family) << ": final loss " << num(result.epoch_losses.back()) << " -> " << dir.string()
        << "\n";
  }
}

void cmd_attack(const Globals& g, const fs::path& cache, const fs::path& models, const fs::path& out_dir,
                const std::vector<std::string>& families, std::ostream& out) {
  check_threads(g);
  const LoadedConfig loaded = require_config(g);
  const RunConfig& cfg = loaded.config;
  const auto selected = selected_families(cfg, families);
  const WindowCorpus corpus = read_cache(cache);

  std::vector<EncoderModel> encoders;
  std::vector<std::set<SubjectId>> members;
  for (Family family : selected) {
    const fs::path dir = model_dir(models, cfg.train_dataset, family);
    if (!fs::exists(dir / "model.bin")) {
      throw IoError("missing checkpoint " + (dir / "model.bin").string());
    }
    EncoderModel model = read_checkpoint(dir / "model.bin");
    if (model.config().family != family) {
      throw ValidationError("checkpoint " + (dir / "model.bin").string() + " holds a " +
                            to_string(model.config().family) + " encoder, config expects " + to_string(family));
    }
    encoders.push_back(std::move(model));
    members.push_back(read_train_ids(dir / "train_ids.json"));
  }
  std::vector<AuditTarget> targets;
  for (std::size_t i = 0; i < encoders.size(); ++i) {
    targets.push_back({&encoders[i], members[i], cfg.attacks});
  }

  AuditRun run = run_audit(cfg.audit_settings(g.threads), corpus, targets);
  run.report.config_fingerprint = loaded.fingerprint();
  detail::write_file(out_dir / "report.json", report_json(run.report));
  detail::write_file(out_dir / "cells.csv", cells_csv(run.report));
  for (const ScoreDump& dump : run.dumps) {
    write_score_dump(dump.scores, out_dir / "scores" / dump.dataset / (dump.family + ".csv"));
  }
  for (const ReportCell& c : run.report.cells) {
    out << c.dataset << " " << c.family << " " << c.attack << " auc=" << num(c.auc) << "\n";
  }
}

void cmd_report(const fs::path& report_path, const fs::path& out_dir, bool clip_adv, std::ostream& out) {
  const AuditReport report = parse_report_json(detail::read_file(report_path));
  detail::write_file(out_dir / "delta_auc_heatmap.svg", delta_heatmap_svg(report));
  detail::write_file(out_dir / "auc_scatter.svg", auc_scatter_svg(report));
  char line[256];
  out << "dataset,family,attack,[AUC|TPR@alpha|Adv]\n";
  for (const ReportCell& c : report.cells) {
    const double adv = clip_adv ? std::max(0.0, c.adv) : c.adv;
    std::snprintf(line, sizeof line, "[%.3f|%.3f|%.3f]", c.auc, c.tpr_at_alpha, adv);
    out << c.dataset << "," << c.family << "," << c.attack << "," << line << "\n";
  }
}

}  // namespace

int run_guarded(const std::function<void()>& body, std::ostream& err) {
  try {
    body();
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitOk;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Membership-inference audit of self-supervised ECG encoders", "mia_audit"};
  app.fallthrough();
  app.require_subcommand(1);

  Globals g;
  app.add_option("--config", g.config, "Run configuration (JSON)");
  app.add_option("--seed", g.seed, "Override the configured master seed");
  app.add_option("--threads", g.threads, "Worker threads")->capture_default_str();

  fs::path synth_out;
  auto* synth = app.add_subcommand("synth", "Generate synthetic record files");
  synth->add_option("--out", synth_out, "Output directory")->required();

  fs::path records_dir, cache_out;
  auto* preprocess = app.add_subcommand("preprocess", "Build the window cache from record files");
  preprocess->add_option("--records", records_dir, "Directory of <dataset>/<record>.rec files")->required();
  preprocess->add_option("--out", cache_out, "Cache file to write")->required();

  fs::path cache, models_out;
  std::vector<std::string> pretrain_families;
  auto* pretrain_cmd = app.add_subcommand("pretrain", "Pretrain the configured encoders");
  pretrain_cmd->add_option("--cache", cache, "Window cache")->required();
  pretrain_cmd->add_option("--out", models_out, "Model root directory")->required();
  pretrain_cmd->add_option("--family", pretrain_families, "Restrict to these families");

  fs::path attack_cache, models_in, report_out;
  std::vector<std::string> attack_families;
  auto* attack = app.add_subcommand("attack", "Run the membership audit");
  attack->add_option("--cache", attack_cache, "Window cache")->required();
  attack->add_option("--models", models_in, "Model root directory")->required();
  attack->add_option("--out", report_out, "Report directory")->required();
  attack->add_option("--family", attack_families, "Restrict to these families");

  fs::path report_in, plots_out;
  bool clip_adv = false;
  auto* report = app.add_subcommand("report", "Render report plots");
  report->add_option("--report", report_in, "report.json from attack")->required();
  report->add_option("--out", plots_out, "Plot directory")->required();
  report->add_flag("--clip-adv", clip_adv, "Show negative advantage as 0");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  return run_guarded(
      [&] {
        if (*synth) cmd_synth(g, synth_out, out);
        if (*preprocess) cmd_preprocess(records_dir, cache_out, out);
        if (*pretrain_cmd) cmd_pretrain(g, cache, models_out, pretrain_families, out);
        if (*attack) cmd_attack(g, attack_cache, models_in, report_out, attack_families, out);
        if (*report) cmd_report(report_in, plots_out, clip_adv, out);
      },
      err);
}

}  // namespace mia::cli
