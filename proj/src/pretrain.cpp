#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "binary_io.hpp"
#include "json_util.hpp"
#include "mia/encoders.hpp"
#include "mia/error.hpp"
#include "mia/log.hpp"
#include "mia/rng.hpp"

namespace mia {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

struct Item {
  std::size_t subject;
  std::size_t window;
};

std::uint64_t position_stream(std::string_view purpose, std::size_t epoch, std::size_t position) {
  return combine_streams(combine_streams(stream_id(purpose), epoch), position);
}

using detail::field;
using detail::reject_unknown;

}  // namespace

PretrainResult pretrain(const EncoderConfig& cfg, const WindowSource& corpus, const std::set<SubjectId>& train_subjects,
                        const PretrainOptions& options) {
  cfg.validate();
  if (train_subjects.empty()) {
    throw ValidationError("pretrain: empty training set (no train subjects given)");
  }
  const auto available = corpus.subjects();
  const std::set<SubjectId> known(available.begin(), available.end());
  for (const SubjectId& s : train_subjects) {
    if (!known.contains(s)) {
      throw ValidationError("pretrain: train subject " + s.str() + " is not in the corpus");
    }
  }

  const std::vector<SubjectId> subjects(train_subjects.begin(), train_subjects.end());
  std::vector<Item> items;
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    const std::size_t n = corpus.window_count(subjects[s]);
    for (std::size_t j = 0; j < n; ++j) {
      items.push_back({s, j});
    }
  }
  if (items.empty()) {
    throw ValidationError("pretrain: empty training set (train subjects have no windows)");
  }

  EncoderModel model(cfg);
  model.set_train_subjects(train_subjects);
  const nn::AdamOptions adam{.lr = cfg.lr};
  PretrainResult result{model, {}};
  EncoderModel& m = result.model;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<Item> order = items;
    SeededRng(cfg.seed, combine_streams(stream_id("epoch-order"), epoch)).shuffle(order);
    double weighted = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - begin);
      nn::Gradients grads = m.params().zero_gradients();
      double loss = 0.0;
      if (is_contrastive(cfg.family)) {
        nn::Tensor view1({count, 1, kWindowLength});
        nn::Tensor view2({count, 1, kWindowLength});
        for (std::size_t n = 0; n < count; ++n) {
          const Item item = order[begin + n];
          const auto window = corpus.window(subjects[item.subject], item.window);
          SeededRng rng(cfg.seed, position_stream("views", epoch, begin + n));
          const auto a = sample_view(window, cfg.augment, rng);
          const auto b = sample_view(window, cfg.augment, rng);
          std::copy(a.begin(), a.end(), view1.data() + n * kWindowLength);
          std::copy(b.begin(), b.end(), view2.data() + n * kWindowLength);
        }
        loss = m.contrastive_step(view1, view2, grads, options.threads);
      } else {
        nn::Tensor windows({count, 1, kWindowLength});
        std::vector<MaskPattern> masks;
        for (std::size_t n = 0; n < count; ++n) {
          const Item item = order[begin + n];
          const auto window = corpus.window(subjects[item.subject], item.window);
          std::copy(window.begin(), window.end(), windows.data() + n * kWindowLength);
          SeededRng rng(cfg.seed, position_stream("masks", epoch, begin + n));
          masks.push_back(random_mask(cfg.patch_count(), cfg.patch_len, cfg.mask_ratio, rng));
        }
        loss = m.mae_step(windows, masks, grads, options.threads);
      }
      if (!std::isfinite(loss)) {
        throw std::runtime_error("pretrain: non-finite loss at epoch " + std::to_string(epoch + 1));
      }
      nn::clip_global_norm(grads, cfg.clip_threshold);
      nn::adam_step(m.params(), grads, adam);
      weighted += loss * static_cast<double>(count);
    }
    const double epoch_loss = weighted / static_cast<double>(order.size());
    result.epoch_losses.push_back(epoch_loss);
    log::debug("{} epoch {}/{} loss {:.6f}", to_string(cfg.family), epoch + 1, cfg.epochs, epoch_loss);
    if (options.on_epoch) {
      options.on_epoch(epoch + 1, epoch_loss);
    }
  }
  if (!options.train_ids_path.empty()) {
    write_train_ids(train_subjects, options.train_ids_path);
  }
  return result;
}

void write_train_ids(const std::set<SubjectId>& subjects, const std::filesystem::path& path) {
  std::vector<std::string> ids;
  for (const SubjectId& s : subjects) {
    ids.push_back(s.str());
  }
  std::sort(ids.begin(), ids.end());
  detail::write_file(path, json(ids).dump(2) + "\n");
}

std::set<SubjectId> read_train_ids(const std::filesystem::path& path) {
  const std::string text = detail::read_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": not valid JSON (" + e.what() + ")");
  }
  if (!doc.is_array()) {
    throw FormatError(path.string() + ": expected a top-level array of subject ids");
  }
  std::set<SubjectId> out;
  for (const json& entry : doc) {
    if (!entry.is_string()) {
      throw FormatError(path.string() + ": subject ids must be strings");
    }
    try {
      out.insert(SubjectId::parse(entry.get<std::string>()));
    } catch (const std::exception& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
  }
  return out;
}

std::string encoder_config_json(const EncoderConfig& cfg) {
  ordered_json augment = {
      {"scale_lo", cfg.augment.scale_lo},
      {"scale_hi", cfg.augment.scale_hi},
      {"time_shift_max", cfg.augment.time_shift_max},
      {"jitter_std", cfg.augment.jitter_std},
      {"mask_segment_len", cfg.augment.mask_segment_len},
      {"mask_prob", cfg.augment.mask_prob},
  };
  ordered_json doc = {
      {"family", to_string(cfg.family)},
      {"embedding_dim", cfg.embedding_dim},
      {"channels", cfg.channels},
      {"kernel", cfg.kernel},
      {"stride", cfg.stride},
      {"blocks", cfg.blocks},
      {"mlp_dim", cfg.mlp_dim},
      {"temperature", cfg.temperature},
      {"patch_len", cfg.patch_len},
      {"mask_ratio", cfg.mask_ratio},
      {"resolutions", cfg.resolutions},
      {"epochs", cfg.epochs},
      {"batch_size", cfg.batch_size},
      {"lr", cfg.lr},
      {"clip_threshold", cfg.clip_threshold},
      {"seed", cfg.seed},
      {"augment", augment},
  };
  return doc.dump();
}

EncoderConfig parse_encoder_config_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("encoder config is not valid JSON: ") + e.what());
  }
  const std::string ctx = "encoder";
  if (!doc.is_object()) {
    throw ValidationError("encoder config must be a JSON object");
  }
  reject_unknown(doc,
                 {"family", "embedding_dim", "channels", "kernel", "stride", "blocks", "mlp_dim", "temperature",
                  "patch_len", "mask_ratio", "resolutions", "epochs", "batch_size", "lr", "clip_threshold", "seed",
                  "augment"},
                 ctx);
  EncoderConfig cfg;
  cfg.family = parse_family(field<std::string>(doc, "family", ctx));
  cfg.embedding_dim = field<std::size_t>(doc, "embedding_dim", ctx);
  cfg.channels = field<std::vector<std::size_t>>(doc, "channels", ctx);
  cfg.kernel = field<std::size_t>(doc, "kernel", ctx);
  cfg.stride = field<std::size_t>(doc, "stride", ctx);
  cfg.blocks = field<std::size_t>(doc, "blocks", ctx);
  cfg.mlp_dim = field<std::size_t>(doc, "mlp_dim", ctx);
  cfg.temperature = field<double>(doc, "temperature", ctx);
  cfg.patch_len = field<std::size_t>(doc, "patch_len", ctx);
  cfg.mask_ratio = field<double>(doc, "mask_ratio", ctx);
  cfg.resolutions = field<std::size_t>(doc, "resolutions", ctx);
  cfg.epochs = field<std::size_t>(doc, "epochs", ctx);
  cfg.batch_size = field<std::size_t>(doc, "batch_size", ctx);
  cfg.lr = field<double>(doc, "lr", ctx);
  cfg.clip_threshold = field<double>(doc, "clip_threshold", ctx);
  cfg.seed = field<std::uint64_t>(doc, "seed", ctx);
  const json aug = field<json>(doc, "augment", ctx);
  const std::string actx = "encoder.augment";
  reject_unknown(aug, {"scale_lo", "scale_hi", "time_shift_max", "jitter_std", "mask_segment_len", "mask_prob"}, actx);
  cfg.augment.scale_lo = field<double>(aug, "scale_lo", actx);
  cfg.augment.scale_hi = field<double>(aug, "scale_hi", actx);
  cfg.augment.time_shift_max = field<std::size_t>(aug, "time_shift_max", actx);
  cfg.augment.jitter_std = field<double>(aug, "jitter_std", actx);
  cfg.augment.mask_segment_len = field<std::size_t>(aug, "mask_segment_len", actx);
  cfg.augment.mask_prob = field<double>(aug, "mask_prob", actx);
  cfg.validate();
  return cfg;
}

void write_checkpoint(const EncoderModel& model, const std::filesystem::path& path) {
  detail::ByteWriter out;
  out.bytes("MIAMDL01");
  out.long_string(encoder_config_json(model.config()));
  const nn::ParamSet& params = model.params();
  out.u32(static_cast<std::uint32_t>(params.size()));
  for (const nn::Tensor& p : params.all()) {
    out.u32(static_cast<std::uint32_t>(p.size()));
    for (double v : p.values()) {
      out.f64(v);
    }
  }
  detail::write_file(path, out.buffer());
}

EncoderModel read_checkpoint(const std::filesystem::path& path) {
  const std::string data = detail::read_file(path);
  detail::ByteReader in(data, path.string());
  in.expect_magic("MIAMDL01");
  EncoderModel model(parse_encoder_config_json(in.long_string()));
  nn::ParamSet& params = model.params();
  const std::uint32_t count = in.u32();
  if (count != params.size()) {
    throw FormatError(path.string() + ": checkpoint holds " + std::to_string(count) + " tensors, config implies " +
                      std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::uint32_t size = in.u32();
    if (size != params[i].size()) {
      throw FormatError(path.string() + ": tensor " + params.name(i) + " has " + std::to_string(size) +
                        " values, expected " + std::to_string(params[i].size()));
    }
    for (double& v : params[i].values()) {
      v = in.f64();
    }
  }
  in.expect_end();
  return model;
}

}  // namespace mia
