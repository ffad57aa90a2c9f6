#include "mia/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "binary_io.hpp"
#include "mia/error.hpp"

namespace mia {

namespace {
constexpr std::string_view kRecordMagic = "MIAREC01";
constexpr std::string_view kCacheMagic = "MIAWIN01";
constexpr double kNormEps = 1e-8;
}  // namespace

SubjectId SubjectId::parse(const std::string& text) {
  const auto slash = text.find('/');
  if (slash == std::string::npos || slash == 0 || slash + 1 == text.size()) {
    throw FormatError("subject id must look like dataset/subject, got \"" + text + "\"");
  }
  return {text.substr(0, slash), text.substr(slash + 1)};
}

RawRecord resample(const RawRecord& record, std::uint32_t target_rate) {
  if (target_rate == 0 || record.sampling_rate == 0) {
    throw std::invalid_argument("resample: sampling rates must be positive");
  }
  if (record.samples.empty()) {
    throw std::invalid_argument("resample: record " + record.dataset_id + "/" + record.record_id + " is empty");
  }
  RawRecord out{record.dataset_id, record.record_id, target_rate, {}};
  if (target_rate == record.sampling_rate) {
    out.samples = record.samples;
    return out;
  }
  const std::size_t n = record.samples.size();
  const auto out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * target_rate / static_cast<double>(record.sampling_rate)));
  const double ratio = static_cast<double>(record.sampling_rate) / static_cast<double>(target_rate);
  out.samples.resize(out_len);
  for (std::size_t i = 0; i < out_len; ++i) {
    const double pos = static_cast<double>(i) * ratio;
    const auto left = static_cast<std::size_t>(pos);
    if (left + 1 >= n) {
      out.samples[i] = record.samples[n - 1];
      continue;
    }
    const double frac = pos - static_cast<double>(left);
    out.samples[i] = record.samples[left] + frac * (record.samples[left + 1] - record.samples[left]);
  }
  return out;
}

std::vector<Window> segment(const RawRecord& record, const SubjectId& subject) {
  if (record.sampling_rate != kTargetRate) {
    throw std::invalid_argument("segment: record " + record.record_id + " is at " +
                                std::to_string(record.sampling_rate) + " Hz, expected 250 Hz");
  }
  std::vector<Window> windows;
  const std::size_t n = record.samples.size();
  if (n < kWindowLength) {
    return windows;
  }
  const std::size_t count = (n - kWindowLength) / kWindowStride + 1;
  windows.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    const auto begin = record.samples.begin() + static_cast<std::ptrdiff_t>(w * kWindowStride);
    windows.push_back({subject, std::vector<double>(begin, begin + kWindowLength)});
  }
  return windows;
}

RawRecord z_normalize(const RawRecord& record) {
  RawRecord out{record.dataset_id, record.record_id, record.sampling_rate, {}};
  out.samples.reserve(record.samples.size());
  std::copy_if(record.samples.begin(), record.samples.end(), std::back_inserter(out.samples),
               [](double v) { return std::isfinite(v); });
  if (out.samples.empty()) {
    return out;
  }
  const double n = static_cast<double>(out.samples.size());
  double mean = 0.0;
  for (const double v : out.samples) {
    mean += v;
  }
  mean /= n;
  double var = 0.0;
  for (const double v : out.samples) {
    var += (v - mean) * (v - mean);
  }
  const double stddev = std::sqrt(var / n);
  if (!(stddev > kNormEps)) {
    std::fill(out.samples.begin(), out.samples.end(), 0.0);
    return out;
  }
  for (double& v : out.samples) {
    v = (v - mean) / stddev;
  }
  return out;
}

SubjectId subject_of(const std::string& dataset_id, const std::string& record_id) {
  if (record_id.empty()) {
    throw std::invalid_argument("subject_of: empty record id");
  }
  if (dataset_id == "butqdb") {
    return {dataset_id, record_id.substr(0, record_id.find('_'))};
  }
  return {dataset_id, record_id};
}

std::span<const double> RecordWindows::window(std::size_t index) const {
  if (index >= count) {
    throw std::out_of_range("window " + std::to_string(index) + " of record " + record_id + " (has " +
                            std::to_string(count) + ")");
  }
  return std::span<const double>(values).subspan(index * kWindowLength, kWindowLength);
}

void WindowCorpus::add_record(RecordWindows record) {
  if (record.values.size() != record.count * kWindowLength) {
    throw std::invalid_argument("record " + record.record_id + ": window payload does not match count");
  }
  const auto key = [](const RecordWindows& r) { return std::tie(r.dataset_id, r.record_id); };
  const auto pos = std::lower_bound(records_.begin(), records_.end(), record,
                                    [&](const RecordWindows& a, const RecordWindows& b) { return key(a) < key(b); });
  if (pos != records_.end() && key(*pos) == key(record)) {
    throw ValidationError("duplicate record " + record.dataset_id + "/" + record.record_id);
  }
  records_.insert(pos, std::move(record));
  rebuild_registry();
}

void WindowCorpus::rebuild_registry() {
  registry_.clear();
  for (std::size_t i = 0; i < records_.size(); ++i) {
    registry_[records_[i].subject].push_back(i);
  }
}

std::vector<SubjectId> WindowCorpus::subjects() const {
  std::vector<SubjectId> out;
  out.reserve(registry_.size());
  for (const auto& [subject, _] : registry_) {
    out.push_back(subject);
  }
  return out;
}

std::vector<SubjectId> WindowCorpus::subjects_in(const std::string& dataset_id) const {
  std::vector<SubjectId> out;
  for (const auto& [subject, _] : registry_) {
    if (subject.dataset_id == dataset_id) {
      out.push_back(subject);
    }
  }
  return out;
}

std::vector<std::string> WindowCorpus::datasets() const {
  std::vector<std::string> out;
  for (const auto& r : records_) {
    if (out.empty() || out.back() != r.dataset_id) {
      out.push_back(r.dataset_id);
    }
  }
  return out;
}

std::size_t WindowCorpus::window_count(const SubjectId& subject) const {
  const auto it = registry_.find(subject);
  if (it == registry_.end()) {
    throw std::out_of_range("unknown subject " + subject.str());
  }
  std::size_t total = 0;
  for (const std::size_t r : it->second) {
    total += records_[r].count;
  }
  return total;
}

std::span<const double> WindowCorpus::window(const SubjectId& subject, std::size_t index) const {
  const auto it = registry_.find(subject);
  if (it == registry_.end()) {
    throw std::out_of_range("unknown subject " + subject.str());
  }
  for (const std::size_t r : it->second) {
    if (index < records_[r].count) {
      return records_[r].window(index);
    }
    index -= records_[r].count;
  }
  throw std::out_of_range("window index out of range for subject " + subject.str());
}

std::size_t WindowCorpus::total_windows() const {
  std::size_t total = 0;
  for (const auto& r : records_) {
    total += r.count;
  }
  return total;
}

std::map<std::string, std::size_t> WindowCorpus::windows_per_dataset() const {
  std::map<std::string, std::size_t> out;
  for (const auto& r : records_) {
    out[r.dataset_id] += r.count;
  }
  return out;
}

RecordWindows preprocess_record(const RawRecord& record) {
  const SubjectId subject = subject_of(record.dataset_id, record.record_id);
  const RawRecord normalized = z_normalize(record);
  if (normalized.samples.empty()) {
    throw ValidationError("record " + record.dataset_id + "/" + record.record_id + " has no finite samples");
  }
  const RawRecord resampled = resample(normalized, kTargetRate);
  const std::vector<Window> windows = segment(resampled, subject);
  RecordWindows out{record.dataset_id, record.record_id, subject, windows.size(), {}};
  out.values.reserve(windows.size() * kWindowLength);
  for (const Window& w : windows) {
    out.values.insert(out.values.end(), w.values.begin(), w.values.end());
  }
  return out;
}

WindowCorpus build_corpus(std::span<const RawRecord> records, const std::filesystem::path& cache_path) {
  WindowCorpus corpus;
  for (const RawRecord& record : records) {
    corpus.add_record(preprocess_record(record));
  }
  if (!cache_path.empty()) {
    write_cache(corpus, cache_path);
  }
  return corpus;
}

std::string encode_cache(const WindowCorpus& corpus) {
  detail::ByteWriter out;
  out.bytes(kCacheMagic);
  out.u32(static_cast<std::uint32_t>(corpus.records().size()));
  for (const RecordWindows& r : corpus.records()) {
    out.short_string(r.dataset_id);
    out.short_string(r.record_id);
    out.short_string(r.subject.subject_key);
    out.u32(static_cast<std::uint32_t>(r.count));
    for (const double v : r.values) {
      out.f64(v);
    }
  }
  return out.release();
}

void write_cache(const WindowCorpus& corpus, const std::filesystem::path& path) {
  detail::write_file(path, encode_cache(corpus));
}

WindowCorpus read_cache(const std::filesystem::path& path) {
  const std::string raw = detail::read_file(path);
  detail::ByteReader in(raw, path.string());
  in.expect_magic(kCacheMagic);
  const std::uint32_t record_count = in.u32();
  WindowCorpus corpus;
  for (std::uint32_t i = 0; i < record_count; ++i) {
    RecordWindows r;
    r.dataset_id = in.short_string();
    r.record_id = in.short_string();
    r.subject = {r.dataset_id, in.short_string()};
    r.count = in.u32();
    if (r.count * kWindowLength * sizeof(double) > in.remaining()) {
      throw FormatError(path.string() + ": truncated window payload for record " + r.record_id);
    }
    r.values.resize(r.count * kWindowLength);
    for (double& v : r.values) {
      v = in.f64();
    }
    corpus.add_record(std::move(r));
  }
  in.expect_end();
  return corpus;
}

void write_record_file(const RawRecord& record, const std::filesystem::path& path) {
  detail::ByteWriter out;
  out.bytes(kRecordMagic);
  out.u32(record.sampling_rate);
  out.u32(static_cast<std::uint32_t>(record.samples.size()));
  for (const double v : record.samples) {
    out.f32(static_cast<float>(v));
  }
  detail::write_file(path, out.buffer());
}

RawRecord read_record_file(const std::filesystem::path& path, const std::string& dataset_id,
                           const std::string& record_id) {
  const std::string raw = detail::read_file(path);
  detail::ByteReader in(raw, path.string());
  in.expect_magic(kRecordMagic);
  RawRecord record{dataset_id, record_id, in.u32(), {}};
  const std::uint32_t count = in.u32();
  if (record.sampling_rate == 0) {
    throw FormatError(path.string() + ": sampling rate must be positive");
  }
  if (count == 0) {
    throw FormatError(path.string() + ": record has no samples");
  }
  if (static_cast<std::size_t>(count) * 4 != in.remaining()) {
    throw FormatError(path.string() + ": header declares " + std::to_string(count) + " samples but payload has " +
                      std::to_string(in.remaining()) + " bytes");
  }
  record.samples.resize(count);
  for (double& v : record.samples) {
    v = static_cast<double>(in.f32());
  }
  return record;
}

std::vector<RawRecord> read_record_dir(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) {
    throw IoError("records directory " + dir.string() + " does not exist");
  }
  std::vector<std::pair<std::string, fs::path>> dataset_dirs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory()) {
      dataset_dirs.emplace_back(entry.path().filename().string(), entry.path());
    }
  }
  std::sort(dataset_dirs.begin(), dataset_dirs.end());
  std::vector<RawRecord> records;
  for (const auto& [dataset_id, path] : dataset_dirs) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file() && entry.path().extension() == ".rec") {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    for (const fs::path& file : files) {
      records.push_back(read_record_file(file, dataset_id, file.stem().string()));
    }
  }
  return records;
}

}  // namespace mia
