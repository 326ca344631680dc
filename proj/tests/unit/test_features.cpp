/* Copyright 2026 The avsec Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <doctest.h>

#include <cmath>
#include <limits>

#include "avsec/error.hpp"
#include "avsec/features.hpp"
#include "support/synthetic.hpp"

using namespace avsec;

namespace {

FeatureVector vec(std::string id, FeatureKind kind, std::vector<double> v) {
  FeatureVector f{std::move(id), std::move(kind), Eigen::VectorXd(static_cast<Eigen::Index>(v.size()))};
  for (std::size_t i = 0; i < v.size(); ++i) f.values[static_cast<Eigen::Index>(i)] = v[i];
  return f;
}

}  // namespace

TEST_CASE("l2 normalization") {
  const auto n = l2_normalize(Eigen::Vector2d(3, 4));
  CHECK_FALSE(n.degenerate);
  CHECK(n.values[0] == doctest::Approx(0.6));
  CHECK(n.values[1] == doctest::Approx(0.8));
  const auto z = l2_normalize(Eigen::VectorXd::Zero(5));
  CHECK(z.degenerate);
  CHECK(z.values.isZero());
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    Eigen::VectorXd v(7);
    for (auto& x : v) x = normal01(rng) * 50;
    CHECK(l2_normalize(v).values.norm() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("feature kind tags round trip") {
  for (const FeatureKind& k : {FeatureKind::logmel(), FeatureKind::embedding(6144), FeatureKind::action_vector()}) {
    CHECK(FeatureKind::parse(k.tag()) == k);
  }
  CHECK(FeatureKind::logmel().tag() == "logmel:128");
  CHECK(FeatureKind::action_vector().tag() == "av:20");
  const FeatureKind fused = FeatureKind::parse("fused[av:20{std}+embedding:6144{l2,std}+logmel:128{none}]");
  CHECK(fused.dim == 6292);
  REQUIRE(fused.parts.size() == 3);
  CHECK(fused.parts[1].recipe == PartRecipe{true, true});
  CHECK(fused.parts[2].recipe == PartRecipe{false, false});
  CHECK(FeatureKind::parse(fused.tag()) == fused);
  CHECK_THROWS_AS(FeatureKind::parse("logmel"), ParseError);
  CHECK_THROWS_AS(FeatureKind::parse("mfcc:13"), ParseError);
  CHECK_THROWS_AS(FeatureKind::parse("fused[av:20{bogus}]"), ParseError);
  CHECK_THROWS_AS(FeatureKind::parse("fused[av:20"), ParseError);
}

TEST_CASE("fusion concatenates in order and normalizes per part") {
  const auto av = vec("c", FeatureKind::action_vector(), std::vector<double>(20, 3.0));
  const auto ae = vec("c", FeatureKind::embedding(6144), std::vector<double>(6144, 0.5));
  const auto lm = vec("c", FeatureKind::logmel(), std::vector<double>(128, -40.0));

  const FusionInput two[] = {{&av, {false, true}}, {&ae, {false, true}}};
  const FeatureVector f = fuse(two);
  CHECK(f.values.size() == 6164);
  CHECK(f.kind.dim == 6164);
  CHECK(f.kind.tag() == "fused[av:20{std}+embedding:6144{std}]");
  CHECK(f.values[0] == 3.0);
  CHECK(f.values[20] == 0.5);
  CHECK_NOTHROW(validate(f));

  const FusionInput three[] = {{&av, {true, true}}, {&ae, {true, true}}, {&lm, {true, true}}};
  const FeatureVector g = fuse(three);
  CHECK(g.values.size() == 6292);
  CHECK(g.values.segment(0, 20).norm() == doctest::Approx(1.0));
  CHECK(g.values.segment(20, 6144).norm() == doctest::Approx(1.0));
  CHECK(g.values.segment(6164, 128).norm() == doctest::Approx(1.0));

  const auto other = vec("d", FeatureKind::logmel(), std::vector<double>(128, 0.0));
  const FusionInput bad[] = {{&av, {}}, {&other, {}}};
  CHECK_THROWS_AS(fuse(bad), DataError);
}

TEST_CASE("validate rejects bad vectors") {
  auto v = vec("c", FeatureKind::logmel(4), {1, 2, 3});
  CHECK_THROWS_AS(validate(v), DataError);
  v = vec("c", FeatureKind::logmel(3), {1, std::numeric_limits<double>::quiet_NaN(), 3});
  CHECK_THROWS_AS(validate(v), DataError);
}

TEST_CASE("standardizer") {
  const std::vector<std::string> ids = {"a", "b"};
  SUBCASE("two-point oracle") {
    Eigen::MatrixXd x(2, 2);
    x << 0, 0, 2, 2;
    const Standardizer s = Standardizer::fit(x, ids, {1, 2});
    CHECK(s.means() == Eigen::Vector2d(1, 1));
    CHECK(s.scales() == Eigen::Vector2d(1, 1));
    CHECK(s.apply(Eigen::Vector2d(2, 2)) == Eigen::Vector2d(1, 1));
    CHECK(s.fitted_folds() == std::set<int>{1, 2});
  }
  SUBCASE("constant column keeps scale 1") {
    Eigen::MatrixXd x(2, 2);
    x << 5, 1, 5, 3;
    const Standardizer s = Standardizer::fit(x, ids, {1});
    CHECK(s.scales()[0] == 1.0);
    CHECK(s.degenerate()[0]);
    CHECK_FALSE(s.degenerate()[1]);
    CHECK(s.apply_rows(x).col(0).isZero());
  }
  SUBCASE("masked dims pass through") {
    Eigen::MatrixXd x(2, 2);
    x << 0, 10, 2, 30;
    const Standardizer s = Standardizer::fit(x, ids, {1}, {true, false});
    CHECK(s.apply(Eigen::Vector2d(2, 30)) == Eigen::Vector2d(1, 30));
  }
  SUBCASE("fitted rows have zero mean and unit variance") {
    Rng rng(11);
    Eigen::MatrixXd x(60, 9);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = normal01(rng) * (j + 1) + 10.0 * j;
    std::vector<std::string> many;
    for (int i = 0; i < 60; ++i) many.push_back("c" + std::to_string(i));
    const Eigen::MatrixXd z = Standardizer::fit(x, many, {1}).apply_rows(x);
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      CHECK(std::abs(z.col(j).mean()) < 1e-9);
      CHECK(z.col(j).squaredNorm() / 60.0 == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
  SUBCASE("leakage guard names the clip") {
    Eigen::MatrixXd x(2, 1);
    x << 1, 2;
    const Standardizer s = Standardizer::fit(x, ids, {1});
    const std::vector<std::string> clean = {"c", "d"};
    CHECK_NOTHROW(s.check_disjoint(clean));
    const std::vector<std::string> dirty = {"c", "b"};
    try {
      s.check_disjoint(dirty);
      FAIL("expected LeakageError");
    } catch (const LeakageError& e) {
      CHECK(std::string(e.what()).find("'b'") != std::string::npos);
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(Standardizer::fit(Eigen::MatrixXd(0, 3), {}, {}), DataError);
    Eigen::MatrixXd x(2, 2);
    x << 0, 0, 2, 2;
    CHECK_THROWS_AS(Standardizer::fit(x, ids, {1}).apply(Eigen::Vector3d(1, 2, 3)), DataError);
    CHECK_THROWS_AS(Standardizer::from_parameters(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 0), {}), DataError);
  }
}

TEST_CASE("feature containers") {
  testing::TempDir dir;
  FeatureFile f;
  f.dim = 3;
  f.ids = {"1-100-A-0", "1-101-A-1"};
  f.rows = {{0.5f, -1.25f, 3.0f}, {1e-7f, 2.0f, -0.0f}};

  SUBCASE("AVSEC1") {
    write_feature_file(dir / "p.bin", f);
    CHECK(testing::read_text(dir / "p.bin").substr(0, 6) == "AVSEC1");
    const FeatureFile g = read_feature_file(dir / "p.bin");
    CHECK(g.kind_tag.empty());
    CHECK(g.ids == f.ids);
    CHECK(g.rows == f.rows);
  }
  SUBCASE("AVSEC2 carries its kind") {
    f.kind_tag = "embedding:3";
    write_feature_file(dir / "t.bin", f);
    CHECK(testing::read_text(dir / "t.bin").substr(0, 6) == "AVSEC2");
    const FeatureFile g = read_feature_file(dir / "t.bin");
    CHECK(g.kind_tag == "embedding:3");
    CHECK(g.rows == f.rows);
  }
  SUBCASE("truncated and trailing bytes") {
    write_feature_file(dir / "p.bin", f);
    std::string bytes = testing::read_text(dir / "p.bin");
    testing::write_text(dir / "short.bin", bytes.substr(0, bytes.size() - 2));
    CHECK_THROWS_AS(read_feature_file(dir / "short.bin"), ParseError);
    testing::write_text(dir / "long.bin", bytes + "x");
    CHECK_THROWS_AS(read_feature_file(dir / "long.bin"), ParseError);
  }
  SUBCASE("CSV fallback") {
    testing::write_text(dir / "e.csv", "clip_id,e1,e2,e3\n1-100-A-0,0.5,-1.25,3\n1-101-A-1,0,2,0\n");
    const FeatureFile g = read_feature_file(dir / "e.csv");
    CHECK(g.dim == 3);
    CHECK(g.ids == f.ids);
    CHECK(g.rows[0] == f.rows[0]);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(read_feature_file(dir / "nope.bin"), DataError);
  }
}

TEST_CASE("embedding loading") {
  testing::TempDir dir;
  const FoldedDataset ds = testing::synthetic_dataset(2, 5);
  FeatureFile f;
  f.dim = 4;
  for (const auto& c : ds.clips()) {
    f.ids.push_back(c.clip_id);
    f.rows.push_back({1, 2, 3, 4});
  }
  write_feature_file(dir / "e.bin", f);

  const FeatureMap m = load_embeddings(dir / "e.bin", 4, &ds);
  CHECK(m.size() == ds.size());
  CHECK(m.begin()->second.kind == FeatureKind::embedding(4));
  CHECK_THROWS_AS(load_embeddings(dir / "e.bin", 6144, &ds), DataError);

  FeatureFile dup = f;
  dup.ids[1] = dup.ids[0];
  write_feature_file(dir / "dup.bin", dup);
  CHECK_THROWS_WITH_AS(load_embeddings(dir / "dup.bin", 4), doctest::Contains("duplicate"), DataError);

  FeatureFile nan = f;
  nan.rows[3][2] = std::numeric_limits<float>::infinity();
  write_feature_file(dir / "nan.bin", nan);
  CHECK_THROWS_WITH_AS(load_embeddings(dir / "nan.bin", 4), doctest::Contains("non-finite"), DataError);

  FeatureFile missing = f;
  missing.ids.pop_back();
  missing.rows.pop_back();
  write_feature_file(dir / "missing.bin", missing);
  CHECK_THROWS_WITH_AS(load_embeddings(dir / "missing.bin", 4, &ds), doctest::Contains("missing clip"), DataError);
}

TEST_CASE("log-mel cache round trip") {
  testing::TempDir dir;
  FeatureMap m;
  for (int i = 0; i < 3; ++i) {
    std::vector<double> v(128);
    for (int j = 0; j < 128; ++j) v[static_cast<std::size_t>(j)] = -80.0 + i + 0.25 * j;
    m.emplace("c" + std::to_string(i), vec("c" + std::to_string(i), FeatureKind::logmel(), v));
  }
  save_feature_cache(dir / "lm.bin", m, FeatureKind::logmel());
  const FeatureMap back = load_feature_cache(dir / "lm.bin");
  REQUIRE(back.size() == 3);
  for (const auto& [id, v] : m) CHECK(back.at(id).values.isApprox(v.values, 1e-6));
}
