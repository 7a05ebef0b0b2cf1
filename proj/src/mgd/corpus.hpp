#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mgd/digest.hpp"

namespace mgd {

using ImageId = std::uint32_t;

struct ImageRecord {
  ImageId image_id = 0;
  std::filesystem::path path;
  Digest256 content_hash{};
  std::string source_tag;
  int width = 0;
  int height = 0;

  bool operator==(const ImageRecord&) const = default;
};

struct CorpusSnapshot {
  std::vector<ImageRecord> records;  // sorted by image_id, ids dense 0..N-1
  std::string created_at;            // ISO-8601 UTC
  Digest256 manifest_digest{};

  std::size_t size() const { return records.size(); }
};

struct SkipEntry {
  std::size_t manifest_row = 0;  // 1-based data row, header excluded
  std::string path;
  std::string reason;
};

struct IngestResult {
  CorpusSnapshot snapshot;
  std::vector<SkipEntry> skipped;
  std::size_t manifest_rows = 0;
};

struct DedupResult {
  CorpusSnapshot snapshot;
  // old_to_new[old_id] = id of the surviving record with the same bytes.
  std::vector<ImageId> old_to_new;
  std::size_t removed = 0;
};

// Reads a `path,source_tag` manifest and decodes/hashes each listed file.
// Throws on a missing manifest or when no row decodes ("empty corpus").
IngestResult ingest_manifest(const std::filesystem::path& manifest_path,
                             const std::filesystem::path& image_root);

// First occurrence of each content hash wins; ids are re-densified.
DedupResult dedup_exact(const CorpusSnapshot& snapshot);

void save_snapshot(const std::filesystem::path& path, const CorpusSnapshot& snapshot);
CorpusSnapshot load_snapshot(const std::filesystem::path& path);

void save_skip_report(const std::filesystem::path& path, const std::vector<SkipEntry>& skipped);
void save_dedup_map(const std::filesystem::path& path, const std::vector<ImageId>& old_to_new);
std::vector<ImageId> load_dedup_map(const std::filesystem::path& path);

std::string utc_timestamp();

}  // namespace mgd
