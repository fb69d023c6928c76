#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "deixis/evaluation.hpp"

using namespace deixis;

namespace {

PatchGrid unit_grid(double width, double height, std::size_t rows,
                    std::size_t cols) {
  return {{0.0, 0.0, width, height}, cols, rows};
}

Sample scored_sample(std::vector<std::size_t> targets, std::size_t n_objects) {
  Sample s;
  s.dims = {1000, 1000};
  std::array<Vec2, HandPose::kLandmarkCount> lms{};
  for (std::size_t i = 0; i < lms.size(); ++i)
    lms[i] = {100.0 + double(i), 200.0};
  s.hand = HandPose(lms);
  std::vector<Vec2> centroids;
  for (std::size_t i = 0; i < n_objects; ++i)
    centroids.push_back({500.0 + 30.0 * double(i), 700.0});
  s.objects = build_object_sequence(centroids);
  s.targets = std::move(targets);
  s.recompute_relations();
  return s;
}

Prediction ranked_with_top(std::size_t top, std::size_t count) {
  Prediction p;
  p.top = top;
  p.ranked.push_back(top);
  for (std::size_t i = 0; i < count; ++i)
    if (i != top) p.ranked.push_back(i);
  return p;
}

}  // namespace

TEST_CASE("patch assignment floors region-relative coordinates") {
  const PatchGrid grid = unit_grid(160, 80, 4, 4);  // patches 40 x 20
  CHECK(patch_assign(Vec2{0, 0}, grid) == 0);
  CHECK(patch_assign(Vec2{85, 0}, grid) == 2);  // floor(85/40) = 2
  CHECK(patch_assign(Vec2{85, 25}, grid) == 4 + 2);
  // the far edges clamp into the last patch
  CHECK(patch_assign(Vec2{160, 80}, grid) == 15);
  // sentinel routes to the non-object class
  CHECK(patch_assign(std::nullopt, grid) == grid.non_object_class());
  CHECK_THROWS_AS(patch_assign(Vec2{161, 10}, grid), std::invalid_argument);
}

TEST_CASE("patch grid over the table region") {
  const ImageDims dims{1280, 720};
  const PatchGrid grid = PatchGrid::over_table(dims, 4, 16);
  CHECK(grid.region.y == doctest::Approx(288.0));
  CHECK(grid.patch_w() == doctest::Approx(80.0));
  CHECK(grid.patch_h() == doctest::Approx(108.0));
  CHECK(grid.patch_count() == 64);
  // boundary membership: a point on an interior edge joins the higher patch
  CHECK(patch_assign(Vec2{80, 288}, grid) == 1);
}

TEST_CASE("pcm counts conserve mass and normalize rows") {
  const PatchGrid grid = unit_grid(100, 100, 2, 2);
  PatchConfusionMatrix pcm(grid);
  pcm.add(0, 0);
  pcm.add(0, 1);
  pcm.add(0, 1);
  pcm.add(3, 3);
  pcm.add(grid.non_object_class(), 2);
  CHECK(pcm.total() == 5);
  CHECK(pcm.count(0, 1) == 2);
  CHECK(pcm.normalized(0, 0) == doctest::Approx(1.0 / 3.0));
  CHECK(pcm.normalized(0, 1) == doctest::Approx(2.0 / 3.0));
  CHECK(pcm.normalized(3, 3) == doctest::Approx(1.0));
  CHECK(pcm.normalized(1, 0) == 0.0);  // empty row

  double row_sum = 0.0;
  for (std::size_t c = 0; c <= grid.patch_count(); ++c)
    row_sum += pcm.normalized(0, c);
  CHECK(row_sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("all-correct predictions produce a strictly diagonal matrix") {
  const PatchGrid grid = unit_grid(100, 100, 2, 2);
  PatchConfusionMatrix pcm(grid);
  for (std::size_t cls = 0; cls <= grid.patch_count(); ++cls)
    for (int k = 0; k < 3; ++k) pcm.add(cls, cls);
  for (std::size_t t = 0; t <= grid.patch_count(); ++t)
    for (std::size_t p = 0; p <= grid.patch_count(); ++p)
      CHECK(pcm.normalized(t, p) == (t == p ? 1.0 : 0.0));
}

TEST_CASE("single pair puts full row mass on its cell") {
  const PatchGrid grid = unit_grid(100, 100, 2, 2);
  PatchConfusionMatrix pcm(grid);
  pcm.add_pair(Vec2{10, 10}, Vec2{80, 80});  // patch 0 -> patch 3
  CHECK(pcm.normalized(0, 3) == 1.0);
  CHECK(pcm.total() == 1);
}

TEST_CASE("render ordering puts non-object first row and last column") {
  const PatchGrid grid = unit_grid(100, 100, 1, 2);
  PatchConfusionMatrix pcm(grid);
  CHECK(pcm.row_order().front() == grid.non_object_class());
  CHECK(pcm.col_order().back() == grid.non_object_class());
  CHECK(pcm.class_label(grid.non_object_class()) == "non-object");
  CHECK(pcm.class_label(1) == "(0,1)");
}

TEST_CASE("csv render filters empty classes and reparses at 4 decimals") {
  const PatchGrid grid = unit_grid(100, 100, 2, 2);  // 4 patches + non-object
  PatchConfusionMatrix pcm(grid);
  pcm.add(0, 0);
  pcm.add(0, 1);
  pcm.add(1, 1);
  // only rows {0,1} and cols {0,1} carry mass -> 3x3 CSV including headers
  const std::string path = "pcm_test.csv";
  pcm.write_csv(path);
  std::ifstream in(path);
  std::vector<std::vector<std::string>> cells;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(cell);
    cells.push_back(row);
  }
  REQUIRE(cells.size() == 3);
  REQUIRE(cells[1].size() == 3);
  CHECK(cells[0][1] == "(0,0)");
  CHECK(cells[0][2] == "(0,1)");
  CHECK(cells[1][0] == "(0,0)");
  CHECK(std::stod(cells[1][1]) == doctest::Approx(0.5));
  CHECK(std::stod(cells[1][2]) == doctest::Approx(0.5));
  CHECK(std::stod(cells[2][2]) == doctest::Approx(1.0));
  std::remove(path.c_str());
}

TEST_CASE("svg render uses the heat ramp endpoints") {
  CHECK(heat_color(0.0) == "rgb(255,255,255)");
  CHECK(heat_color(1.0) == "rgb(26,16,80)");

  const PatchGrid grid = unit_grid(100, 100, 1, 2);
  PatchConfusionMatrix pcm(grid);
  pcm.add(0, 0);
  const std::string path = "pcm_test.svg";
  pcm.write_svg(path);
  std::ifstream in(path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string svg = buffer.str();
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find(heat_color(1.0)) != std::string::npos);  // the 1.0 cell
  CHECK(svg.find("1.00") != std::string::npos);           // its annotation
  std::remove(path.c_str());
}

TEST_CASE("metrics on perfect and rank-separated predictions") {
  std::vector<Sample> samples;
  std::vector<Prediction> predictions;
  for (std::size_t i = 0; i < 4; ++i) {
    samples.push_back(scored_sample({i % 3}, 3));
    predictions.push_back(ranked_with_top(i % 3, 4));
  }
  const Metrics perfect = compute_metrics(predictions, samples);
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.top2 == 1.0);
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);

  // top wrong everywhere but the true target always ranked second
  std::vector<Prediction> second_place;
  for (std::size_t i = 0; i < 4; ++i) {
    Prediction p;
    const std::size_t truth = i % 3;
    const std::size_t wrong = (truth + 1) % 3;
    p.top = wrong;
    p.ranked = {wrong, truth};
    for (std::size_t t = 0; t < 4; ++t)
      if (t != wrong && t != truth) p.ranked.push_back(t);
    second_place.push_back(p);
  }
  const Metrics ranked = compute_metrics(second_place, samples);
  CHECK(ranked.accuracy == 0.0);
  CHECK(ranked.top2 == 1.0);
}

TEST_CASE("metrics bounds and f1 harmonic-mean identity hold") {
  Rng rng(3);
  std::vector<Sample> samples;
  std::vector<Prediction> predictions;
  for (std::size_t i = 0; i < 40; ++i) {
    const std::size_t n = 2 + rng.below(4);
    samples.push_back(scored_sample({rng.below(n + 1)}, n));
    Prediction p = ranked_with_top(rng.below(n + 1), n + 1);
    predictions.push_back(p);
  }
  const Metrics m = compute_metrics(predictions, samples);
  for (const double v : {m.accuracy, m.precision, m.recall, m.f1, m.top2}) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(m.top2 >= m.accuracy);
  if (m.precision + m.recall > 0) {
    CHECK(m.f1 == doctest::Approx(2 * m.precision * m.recall /
                                  (m.precision + m.recall)));
  }
  CHECK_THROWS_AS(compute_metrics({}, samples), std::invalid_argument);
}

TEST_CASE("kfold split matches the 30-scene protocol") {
  std::vector<std::int64_t> scenes;
  for (std::int64_t i = 0; i < 30; ++i) scenes.push_back(i * 10);
  Rng rng(17);
  const KFoldPlan plan = kfold_split(scenes, 8, 6, rng);
  CHECK(plan.test_scenes.size() == 6);
  REQUIRE(plan.folds.size() == 8);

  std::set<std::int64_t> all_validation;
  for (const auto& fold : plan.folds) {
    CHECK(fold.train_scenes.size() == 21);
    CHECK(fold.val_scenes.size() == 3);
    for (const std::int64_t s : fold.val_scenes) {
      CHECK(all_validation.insert(s).second);  // triples are disjoint
      // validation never overlaps the common test set
      CHECK(std::find(plan.test_scenes.begin(), plan.test_scenes.end(), s) ==
            plan.test_scenes.end());
    }
    // train and val partition the 24 non-test scenes
    for (const std::int64_t s : fold.train_scenes)
      CHECK(std::find(fold.val_scenes.begin(), fold.val_scenes.end(), s) ==
            fold.val_scenes.end());
  }
  CHECK(all_validation.size() == 24);

  CHECK_THROWS_AS(kfold_split({1, 2, 3}, 8, 6, rng), std::invalid_argument);
}

TEST_CASE("kfold split keeps every sample of a scene on one side") {
  std::vector<std::int64_t> scenes;
  for (std::int64_t i = 0; i < 30; ++i) scenes.push_back(i);
  Rng rng(21);
  const KFoldPlan plan = kfold_split(scenes, 8, 6, rng);
  // scene-level membership is exclusive by construction; verify exhaustively
  for (const auto& fold : plan.folds) {
    for (const std::int64_t s : scenes) {
      const bool in_train =
          std::find(fold.train_scenes.begin(), fold.train_scenes.end(), s) !=
          fold.train_scenes.end();
      const bool in_val = std::find(fold.val_scenes.begin(),
                                    fold.val_scenes.end(),
                                    s) != fold.val_scenes.end();
      const bool in_test = std::find(plan.test_scenes.begin(),
                                     plan.test_scenes.end(),
                                     s) != plan.test_scenes.end();
      CHECK((in_train ? 1 : 0) + (in_val ? 1 : 0) + (in_test ? 1 : 0) == 1);
    }
  }
}
