#include "doctest.h"
#include "test_support.hpp"

#include "fsadapt/embedding_store.hpp"
#include "fsadapt/error.hpp"

#include <cmath>
#include <fstream>
#include <limits>

using namespace fsadapt;
using fsadapt::testing::scratch_dir;

namespace {

LabeledDataset small_dataset() {
  Matrix m(2, 3);
  m << 0.5, -1.25, 2.0, 3.0, 0.0, -0.75;
  return LabeledDataset{EmbeddingMatrix(m), {0, 1}, {"a", "b"}};
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an fsadapt::Error");
  return ErrorCode::ConfigError;
}

}  // namespace

TEST_CASE("FSEB round trip keeps rows, labels and order") {
  const auto dir = scratch_dir("store_roundtrip");
  const auto ds = small_dataset();
  save_dataset(ds, dir / "a.fseb");
  const auto back = load_dataset(dir / "a.fseb");
  CHECK(back.size() == 2);
  CHECK(back.dim() == 3);
  CHECK(back.labels == Labels{0, 1});
  CHECK(back.embeddings.values() == ds.embeddings.values());
}

TEST_CASE("FSEB header layout is little-endian and fixed") {
  const auto dir = scratch_dir("store_layout");
  save_dataset(small_dataset(), dir / "a.fseb");
  const std::string bytes = read_bytes(dir / "a.fseb");
  REQUIRE(bytes.size() == 24 + 2 * 3 * 4 + 2 * 4);
  CHECK(bytes.substr(0, 4) == "FSEB");
  CHECK(bytes[4] == 1);  // version
  CHECK(bytes[8] == 2);  // N
  CHECK(bytes[16] == 3);  // D
  CHECK(bytes[20] == 2);  // K
  // 0.5f = 0x3F000000 stored LE
  CHECK(static_cast<unsigned char>(bytes[24 + 3]) == 0x3F);
}

TEST_CASE("random datasets survive save/load at float precision") {
  const auto dir = scratch_dir("store_property");
  Pcg64 rng(3, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 1 + static_cast<Index>(rng.bounded(30));
    const Index d = 1 + static_cast<Index>(rng.bounded(9));
    const int k = 1 + static_cast<int>(rng.bounded(static_cast<std::uint64_t>(std::min<Index>(n, 5))));
    Matrix m = fsadapt::testing::random_matrix(rng, n, d, 3.0);
    m = m.cast<float>().cast<double>();
    LabeledDataset ds{EmbeddingMatrix(m), fsadapt::testing::cyclic_labels(n, k), {}};
    for (int c = 0; c < k; ++c) ds.class_names.push_back("c" + std::to_string(c));
    save_dataset(ds, dir / "p.fseb");
    const auto back = load_dataset(dir / "p.fseb");
    CHECK(back.embeddings.values() == m);
    CHECK(back.labels == ds.labels);
  }
}

TEST_CASE("loader rejects each corruption with its own error") {
  const auto dir = scratch_dir("store_corrupt");
  save_dataset(small_dataset(), dir / "ok.fseb");
  const std::string good = read_bytes(dir / "ok.fseb");

  SUBCASE("bad magic") {
    std::string b = good;
    b[0] = 'X';
    write_bytes(dir / "x.fseb", b);
    CHECK(code_of([&] { load_dataset(dir / "x.fseb"); }) == ErrorCode::BadMagic);
  }
  SUBCASE("unsupported version") {
    std::string b = good;
    b[4] = 2;
    write_bytes(dir / "x.fseb", b);
    CHECK(code_of([&] { load_dataset(dir / "x.fseb"); }) == ErrorCode::VersionUnsupported);
  }
  SUBCASE("N=5, D=4 with 19 floats") {
    std::string b = good.substr(0, 24);
    b[8] = 5;
    b[16] = 4;
    b[20] = 1;
    b += std::string(19 * 4, '\0');
    write_bytes(dir / "x.fseb", b);
    CHECK(code_of([&] { load_dataset(dir / "x.fseb"); }) == ErrorCode::DimMismatch);
  }
  SUBCASE("NaN payload") {
    std::string b = good;
    const std::uint32_t nan_bits = 0x7FC00000u;
    for (int i = 0; i < 4; ++i) b[24 + i] = static_cast<char>((nan_bits >> (8 * i)) & 0xFF);
    write_bytes(dir / "x.fseb", b);
    CHECK(code_of([&] { load_dataset(dir / "x.fseb"); }) == ErrorCode::NonFiniteValue);
  }
  SUBCASE("label beyond K") {
    std::string b = good;
    b[b.size() - 4] = 7;
    write_bytes(dir / "x.fseb", b);
    CHECK(code_of([&] { load_dataset(dir / "x.fseb"); }) == ErrorCode::LabelOutOfRange);
  }
  SUBCASE("missing file") {
    CHECK(code_of([&] { load_dataset(dir / "nope.fseb"); }) == ErrorCode::IoFailure);
  }
}

TEST_CASE("save to an unwritable location fails with IoFailure") {
  const auto dir = scratch_dir("store_io");
  CHECK(code_of([&] { save_dataset(small_dataset(), dir / "no_such_dir" / "a.fseb"); }) == ErrorCode::IoFailure);
}

TEST_CASE("l2_normalize") {
  Matrix m(1, 2);
  m << 3.0, 4.0;
  const auto n = l2_normalize(EmbeddingMatrix(m));
  CHECK(n.values()(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(n.values()(0, 1) == doctest::Approx(0.8).epsilon(1e-15));

  Matrix unit(1, 3);
  unit << 1.0, 0.0, 0.0;
  CHECK(l2_normalize_rows(unit) == unit);

  Matrix zero = Matrix::Zero(2, 3);
  zero(0, 0) = 1.0;
  CHECK(code_of([&] { l2_normalize_rows(zero); }) == ErrorCode::ZeroNormRow);
}

TEST_CASE("l2_normalize is idempotent and yields unit rows") {
  Pcg64 rng(5, 0);
  for (int t = 0; t < 50; ++t) {
    const Matrix m = fsadapt::testing::random_matrix(rng, 7, 5, 10.0);
    const Matrix once = l2_normalize_rows(m);
    const Matrix twice = l2_normalize_rows(once);
    CHECK((once - twice).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(rows_unit_norm(once, 1e-6));
  }
}

TEST_CASE("embedding matrix rejects non-finite values") {
  Matrix m = Matrix::Zero(2, 2);
  m(1, 1) = std::numeric_limits<double>::infinity();
  CHECK(code_of([&] { EmbeddingMatrix{m}; }) == ErrorCode::NonFiniteValue);
}

TEST_CASE("manifest JSON round trip and validation") {
  DatasetManifest m;
  m.name = "demo";
  m.num_classes = 2;
  m.num_samples = 6;
  m.dim = 4;
  m.class_names = {"x", "y"};
  m.prompts = {"an image of a x", "an image of a y"};
  m.temperature_hint = 50.0;
  const auto back = DatasetManifest::from_json(m.to_json());
  CHECK(back.name == "demo");
  CHECK(back.class_names == m.class_names);
  CHECK(back.prompts == m.prompts);
  CHECK(back.temperature_hint.value() == 50.0);
  CHECK(back.normalized);
  CHECK(code_of([] { DatasetManifest::from_json(R"({"name":"a","K":3,"N":1,"D":1,"class_names":["a"]})"); }) ==
        ErrorCode::SchemaError);
}

TEST_CASE("CSV ingestion") {
  const auto dir = scratch_dir("store_csv");
  {
    std::ofstream out(dir / "ok.csv");
    out << "label,f0,f1,f2,f3\n";
    for (int i = 0; i < 6; ++i) out << (i % 2) << "," << i + 1 << ",0.5,-1," << i * 0.25 << "\n";
  }
  const auto ds = read_csv_dataset(dir / "ok.csv");
  CHECK(ds.size() == 6);
  CHECK(ds.dim() == 4);
  CHECK(ds.num_classes() == 2);

  {
    std::ofstream out(dir / "bad_label.csv");
    out << "label,f0\n0,1\n5,2\n";
  }
  try {
    read_csv_dataset(dir / "bad_label.csv", 3);
    FAIL("expected LabelOutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LabelOutOfRange);
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);  // line context
  }
}
