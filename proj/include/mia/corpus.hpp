#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace mia {

inline constexpr std::uint32_t kTargetRate = 250;
inline constexpr std::size_t kWindowLength = 2000;  // 10 s at 250 Hz
inline constexpr std::size_t kWindowStride = 1250;  // 5 s at 250 Hz

/// One subject's continuous single-channel signal.
struct RawRecord {
  std::string dataset_id;
  std::string record_id;
  std::uint32_t sampling_rate = kTargetRate;
  std::vector<double> samples;
};

struct SubjectId {
  std::string dataset_id;
  std::string subject_key;

  /// "dataset_id/subject_key", the form used in train_ids.json.
  std::string str() const { return dataset_id + "/" + subject_key; }
  static SubjectId parse(const std::string& text);

  auto operator<=>(const SubjectId&) const = default;
  bool operator==(const SubjectId&) const = default;
};

struct Window {
  SubjectId subject;
  std::vector<double> values;
};

/// Linear interpolation onto a uniform grid at `target_rate`; output length is
/// round(n * target / source). Positions past the last sample hold its value.
RawRecord resample(const RawRecord& record, std::uint32_t target_rate);

/// 2000-sample windows at offsets 0, 1250, 2500, ... Requires a 250 Hz record.
std::vector<Window> segment(const RawRecord& record, const SubjectId& subject);

/// Drops non-finite samples, then rescales to zero mean and unit population
/// standard deviation; records with std <= 1e-8 become all zeros.
RawRecord z_normalize(const RawRecord& record);

/// butqdb: prefix of record_id before the first underscore. Other datasets:
/// one subject per record.
SubjectId subject_of(const std::string& dataset_id, const std::string& record_id);

/// Read access to subject windows. pretrain() consumes corpora through this
/// interface so tests can observe which subjects are touched.
class WindowSource {
 public:
  virtual ~WindowSource() = default;
  virtual std::vector<SubjectId> subjects() const = 0;
  virtual std::size_t window_count(const SubjectId& subject) const = 0;
  virtual std::span<const double> window(const SubjectId& subject, std::size_t index) const = 0;
};

struct RecordWindows {
  std::string dataset_id;
  std::string record_id;
  SubjectId subject;
  std::size_t count = 0;
  std::vector<double> values;  // count x kWindowLength, row-major

  std::span<const double> window(std::size_t index) const;
  bool operator==(const RecordWindows&) const = default;
};

/// Cached windows of every record, ordered by (dataset_id, record_id), with a
/// registry from subject to the records it owns.
class WindowCorpus : public WindowSource {
 public:
  void add_record(RecordWindows record);

  const std::vector<RecordWindows>& records() const { return records_; }
  std::vector<SubjectId> subjects() const override;
  std::vector<SubjectId> subjects_in(const std::string& dataset_id) const;
  std::vector<std::string> datasets() const;
  bool contains(const SubjectId& subject) const { return registry_.contains(subject); }
  std::size_t window_count(const SubjectId& subject) const override;
  std::span<const double> window(const SubjectId& subject, std::size_t index) const override;
  std::size_t total_windows() const;
  std::map<std::string, std::size_t> windows_per_dataset() const;

  bool operator==(const WindowCorpus& other) const { return records_ == other.records_; }

 private:
  void rebuild_registry();
  std::vector<RecordWindows> records_;
  std::map<SubjectId, std::vector<std::size_t>> registry_;
};

/// normalize -> resample(250 Hz) -> segment, per record.
RecordWindows preprocess_record(const RawRecord& record);

/// Preprocesses every record and, when `cache_path` is non-empty, writes the
/// window cache there.
WindowCorpus build_corpus(std::span<const RawRecord> records, const std::filesystem::path& cache_path);

void write_cache(const WindowCorpus& corpus, const std::filesystem::path& path);
WindowCorpus read_cache(const std::filesystem::path& path);
std::string encode_cache(const WindowCorpus& corpus);

/// MIAREC01 record files. ids are supplied by the caller (directory and stem).
void write_record_file(const RawRecord& record, const std::filesystem::path& path);
RawRecord read_record_file(const std::filesystem::path& path, const std::string& dataset_id,
                           const std::string& record_id);
/// Reads `<dir>/<dataset_id>/<record_id>.rec`, sorted by dataset then record.
std::vector<RawRecord> read_record_dir(const std::filesystem::path& dir);

}  // namespace mia
