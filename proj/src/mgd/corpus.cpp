#include "mgd/corpus.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>

#include "mgd/csv.hpp"
#include "mgd/error.hpp"
#include "mgd/image.hpp"
#include "mgd/parallel.hpp"

namespace mgd {
namespace fs = std::filesystem;

namespace {

constexpr const char* kSnapshotHeader = "#mgd-corpus v1";

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

bool under_root(const fs::path& p, const fs::path& root) {
  auto rel = p.lexically_relative(root);
  return !rel.empty() && *rel.begin() != "..";
}

struct RowOutcome {
  std::optional<ImageRecord> record;
  std::string reason;
};

RowOutcome examine(const std::string& rel, const std::string& tag, const fs::path& root) {
  if (rel.empty()) return {std::nullopt, "empty path"};
  if (rel.find_first_of("\t\n") != std::string::npos || tag.find_first_of("\t\n") != std::string::npos)
    return {std::nullopt, "tab or newline in field"};
  fs::path full = (root / fs::path(rel)).lexically_normal();
  if (!under_root(full, root)) return {std::nullopt, "path escapes image root"};
  auto bytes = read_bytes(full);
  if (bytes.empty()) return {std::nullopt, "missing or empty file"};
  auto img = decode_gray(bytes);
  if (!img) return {std::nullopt, "decode failed"};
  ImageRecord rec;
  rec.path = full;
  rec.content_hash = sha256(bytes);
  rec.source_tag = tag;
  rec.width = img->width;
  rec.height = img->height;
  return {std::move(rec), {}};
}

}  // namespace

std::string utc_timestamp() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

IngestResult ingest_manifest(const fs::path& manifest_path, const fs::path& image_root) {
  std::ifstream in(manifest_path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "manifest not found: " + manifest_path.string());
  std::string manifest_bytes((std::istreambuf_iterator<char>(in)), {});
  std::istringstream ms(manifest_bytes);

  std::vector<std::string> fields;
  std::vector<std::pair<std::string, std::string>> rows;
  bool header = true;
  while (csv::read_row(ms, fields)) {
    if (header) {
      header = false;
      require(!fields.empty() && fields[0] == "path", ErrorCode::kFormat,
              "manifest header must start with 'path'");
      continue;
    }
    if (fields.size() == 1 && fields[0].empty()) continue;  // blank line
    rows.emplace_back(fields[0], fields.size() > 1 ? fields[1] : std::string());
  }
  require(!rows.empty(), ErrorCode::kEmptyCorpus, "empty corpus: manifest lists no images");

  fs::path root = fs::absolute(image_root).lexically_normal();
  std::vector<RowOutcome> outcomes(rows.size());
  parallel_for(rows.size(), [&](std::size_t i) { outcomes[i] = examine(rows[i].first, rows[i].second, root); });

  IngestResult result;
  result.manifest_rows = rows.size();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (outcomes[i].record) {
      auto& rec = *outcomes[i].record;
      rec.image_id = static_cast<ImageId>(result.snapshot.records.size());
      result.snapshot.records.push_back(std::move(rec));
    } else {
      result.skipped.push_back({i + 1, rows[i].first, outcomes[i].reason});
    }
  }
  require(!result.snapshot.records.empty(), ErrorCode::kEmptyCorpus,
          "empty corpus: no manifest entry could be decoded");
  result.snapshot.created_at = utc_timestamp();
  result.snapshot.manifest_digest =
      sha256({reinterpret_cast<const std::uint8_t*>(manifest_bytes.data()), manifest_bytes.size()});
  return result;
}

DedupResult dedup_exact(const CorpusSnapshot& snapshot) {
  DedupResult out;
  out.snapshot.created_at = snapshot.created_at;
  out.snapshot.manifest_digest = snapshot.manifest_digest;
  out.old_to_new.resize(snapshot.records.size());
  std::map<Digest256, ImageId> first;
  for (const auto& rec : snapshot.records) {
    auto [it, inserted] = first.try_emplace(rec.content_hash, static_cast<ImageId>(out.snapshot.records.size()));
    if (inserted) {
      ImageRecord kept = rec;
      kept.image_id = it->second;
      out.snapshot.records.push_back(std::move(kept));
    } else {
      ++out.removed;
    }
    out.old_to_new[rec.image_id] = it->second;
  }
  return out;
}

void save_snapshot(const fs::path& path, const CorpusSnapshot& snapshot) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  out << kSnapshotHeader << '\n'
      << "#created_at " << snapshot.created_at << '\n'
      << "#manifest_digest " << to_hex(snapshot.manifest_digest) << '\n'
      << "#image_id\tpath\tcontent_hash\tsource_tag\twidth\theight\n";
  for (const auto& r : snapshot.records) {
    out << r.image_id << '\t' << r.path.string() << '\t' << to_hex(r.content_hash) << '\t' << r.source_tag
        << '\t' << r.width << '\t' << r.height << '\n';
  }
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed: " + path.string());
}

CorpusSnapshot load_snapshot(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "snapshot not found: " + path.string());
  std::string line;
  require(std::getline(in, line) && line == kSnapshotHeader, ErrorCode::kFormat,
          "not a corpus snapshot: " + path.string());
  CorpusSnapshot snap;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("#created_at ", 0) == 0) snap.created_at = line.substr(12);
      if (line.rfind("#manifest_digest ", 0) == 0) snap.manifest_digest = digest_from_hex(line.substr(17));
      continue;
    }
    std::vector<std::string> f;
    std::size_t start = 0;
    for (;;) {
      auto tab = line.find('\t', start);
      f.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    require(f.size() == 6, ErrorCode::kFormat, "snapshot record must have 6 fields");
    ImageRecord r;
    r.image_id = static_cast<ImageId>(std::stoul(f[0]));
    r.path = f[1];
    r.content_hash = digest_from_hex(f[2]);
    r.source_tag = f[3];
    r.width = std::stoi(f[4]);
    r.height = std::stoi(f[5]);
    require(r.image_id == snap.records.size(), ErrorCode::kFormat, "snapshot ids must be dense and sorted");
    require(r.width >= 1 && r.height >= 1, ErrorCode::kFormat, "snapshot record with empty size");
    snap.records.push_back(std::move(r));
  }
  return snap;
}

void save_skip_report(const fs::path& path, const std::vector<SkipEntry>& skipped) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  out << "manifest_row,path,reason\n";
  for (const auto& s : skipped) out << s.manifest_row << ',' << csv::quote(s.path) << ',' << csv::quote(s.reason) << '\n';
}

void save_dedup_map(const fs::path& path, const std::vector<ImageId>& old_to_new) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  out << "old_id,new_id\n";
  for (std::size_t i = 0; i < old_to_new.size(); ++i) out << i << ',' << old_to_new[i] << '\n';
}

std::vector<ImageId> load_dedup_map(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kIo, "dedup map not found: " + path.string());
  std::vector<std::string> f;
  std::vector<ImageId> out;
  csv::read_row(in, f);
  while (csv::read_row(in, f)) {
    require(f.size() == 2 && std::stoul(f[0]) == out.size(), ErrorCode::kFormat, "bad dedup map row");
    out.push_back(static_cast<ImageId>(std::stoul(f[1])));
  }
  return out;
}

}  // namespace mgd
