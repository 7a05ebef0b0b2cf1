#include "doctest.h"

#include <random>
#include <set>
#include <sstream>

#include "mgd/corpus.hpp"
#include "mgd/csv.hpp"
#include "mgd/error.hpp"
#include "mgd/image.hpp"
#include "mgd/synth.hpp"
#include "support/support.hpp"

using namespace mgd;
using mgd::test::TempDir;
using mgd::test::write_file;

namespace {

void write_image(const std::filesystem::path& p, std::uint64_t seed, int w = 40, int h = 30) {
  std::mt19937_64 rng(seed);
  write_png(p, synth::noise_image(rng, w, h));
}

}  // namespace

TEST_SUITE("corpus") {
  TEST_CASE("dense ids for decodable files") {
    TempDir dir;
    for (int i = 0; i < 3; ++i) write_image(dir / ("a" + std::to_string(i) + ".png"), i);
    write_file(dir / "m.csv", "path,source_tag\na0.png,x\na1.png,y\na2.png,\"z,w\"\n");
    auto r = ingest_manifest(dir / "m.csv", dir.path());
    REQUIRE(r.snapshot.size() == 3);
    for (ImageId i = 0; i < 3; ++i) CHECK(r.snapshot.records[i].image_id == i);
    CHECK(r.snapshot.records[2].source_tag == "z,w");
    CHECK(r.snapshot.records[0].width == 40);
    CHECK(r.snapshot.records[0].height == 30);
    CHECK(r.skipped.empty());
    CHECK(r.manifest_rows == 3);
  }

  TEST_CASE("corrupt file is skipped and reported") {
    TempDir dir;
    write_image(dir / "a.png", 1);
    write_image(dir / "b.png", 2);
    write_file(dir / "bad.png", "not an image");
    write_file(dir / "m.csv", "path,source_tag\na.png,s\nbad.png,s\nb.png,s\nmissing.png,s\n");
    auto r = ingest_manifest(dir / "m.csv", dir.path());
    CHECK(r.snapshot.size() == 2);
    REQUIRE(r.skipped.size() == 2);
    CHECK(r.skipped[0].manifest_row == 2);
    CHECK(r.skipped[1].path == "missing.png");
    CHECK(r.snapshot.size() + r.skipped.size() == r.manifest_rows);
  }

  TEST_CASE("empty manifest and missing manifest are fatal") {
    TempDir dir;
    write_file(dir / "m.csv", "path,source_tag\n");
    try {
      ingest_manifest(dir / "m.csv", dir.path());
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kEmptyCorpus);
      CHECK(std::string(e.what()).find("empty corpus") != std::string::npos);
    }
    CHECK_THROWS_AS(ingest_manifest(dir / "nope.csv", dir.path()), Error);
    write_file(dir / "bad.csv", "path,source_tag\nx.png,a\n");
    CHECK_THROWS_AS(ingest_manifest(dir / "bad.csv", dir.path()), Error);
  }

  TEST_CASE("dedup keeps first occurrence and re-densifies") {
    TempDir dir;
    for (int i = 0; i < 4; ++i) write_image(dir / ("u" + std::to_string(i) + ".png"), 10 + i);
    std::filesystem::copy_file(dir / "u1.png", dir / "dup.png");
    write_file(dir / "m.csv", "path,source_tag\nu0.png,a\nu1.png,a\nu2.png,a\ndup.png,b\nu3.png,a\n");
    auto r = ingest_manifest(dir / "m.csv", dir.path());
    auto d = dedup_exact(r.snapshot);
    CHECK(d.snapshot.size() == 4);
    CHECK(d.removed == 1);
    CHECK(d.old_to_new == std::vector<ImageId>{0, 1, 2, 1, 3});
    CHECK(d.snapshot.records[3].path.filename() == "u3.png");
    std::set<std::string> hashes;
    for (const auto& rec : d.snapshot.records) hashes.insert(to_hex(rec.content_hash));
    CHECK(hashes.size() == d.snapshot.size());
    CHECK(r.snapshot.size() == d.snapshot.size() + d.removed);
  }

  TEST_CASE("dedup of distinct input is the identity") {
    TempDir dir;
    for (int i = 0; i < 3; ++i) write_image(dir / ("u" + std::to_string(i) + ".png"), 20 + i);
    write_file(dir / "m.csv", "path,source_tag\nu0.png,a\nu1.png,a\nu2.png,a\n");
    auto r = ingest_manifest(dir / "m.csv", dir.path());
    auto d = dedup_exact(r.snapshot);
    CHECK(d.snapshot.records == r.snapshot.records);
    CHECK(d.removed == 0);
  }

  TEST_CASE("three copies collapse to one record") {
    TempDir dir;
    write_image(dir / "a.png", 5);
    write_file(dir / "m.csv", "path,source_tag\na.png,x\na.png,y\na.png,z\n");
    auto d = dedup_exact(ingest_manifest(dir / "m.csv", dir.path()).snapshot);
    CHECK(d.snapshot.size() == 1);
    CHECK(d.old_to_new == std::vector<ImageId>{0, 0, 0});
    save_dedup_map(dir / "map.csv", d.old_to_new);
    CHECK(load_dedup_map(dir / "map.csv") == d.old_to_new);
  }

  TEST_CASE("snapshot round trip and deterministic ingest") {
    TempDir dir;
    for (int i = 0; i < 3; ++i) write_image(dir / ("u" + std::to_string(i) + ".png"), 30 + i);
    write_file(dir / "m.csv", "path,source_tag\nu0.png,a\nu1.png,\"q\"\"uote\"\nu2.png,\n");
    auto a = ingest_manifest(dir / "m.csv", dir.path());
    auto b = ingest_manifest(dir / "m.csv", dir.path());
    CHECK(a.snapshot.records == b.snapshot.records);
    CHECK(a.snapshot.manifest_digest == b.snapshot.manifest_digest);
    save_snapshot(dir / "s.snapshot", a.snapshot);
    auto back = load_snapshot(dir / "s.snapshot");
    CHECK(back.records == a.snapshot.records);
    CHECK(back.created_at == a.snapshot.created_at);
    CHECK(back.manifest_digest == a.snapshot.manifest_digest);
  }

  TEST_CASE("large images are limited before feature extraction") {
    GrayImage big(3000, 1500, 128);
    auto small = limit_size(big);
    CHECK(small.width == 1024);
    CHECK(small.height == 512);
    GrayImage ok(800, 600, 1);
    CHECK(limit_size(ok).pixels == ok.pixels);
  }

  TEST_CASE("sha256 of a known string") {
    std::string s = "abc";
    auto d = sha256({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
    CHECK(to_hex(d) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(digest_from_hex(to_hex(d)) == d);
  }

  TEST_CASE("csv quoting round trip") {
    std::string row = csv::quote("a,b") + "," + csv::quote("say \"hi\"") + ",plain\n";
    std::istringstream in(row);
    std::vector<std::string> f;
    REQUIRE(csv::read_row(in, f));
    CHECK(f == std::vector<std::string>{"a,b", "say \"hi\"", "plain"});
    CHECK_FALSE(csv::read_row(in, f));
  }
}
