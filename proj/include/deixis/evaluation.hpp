#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deixis/dataset.hpp"
#include "deixis/model.hpp"
#include "deixis/rng.hpp"
#include "deixis/synthetic.hpp"

namespace deixis {

// Evenly sized, non-overlapping patches exactly tiling a region of image
// space. Patch classes are row-major (row, col) pairs; class id
// rows*cols is the non-object class.
struct PatchGrid {
  Rect region;
  std::size_t cols = 16;
  std::size_t rows = 4;

  double patch_w() const { return region.width / static_cast<double>(cols); }
  double patch_h() const { return region.height / static_cast<double>(rows); }
  std::size_t patch_count() const { return rows * cols; }
  std::size_t non_object_class() const { return patch_count(); }

  static PatchGrid over_table(const ImageDims& dims, std::size_t rows = 4,
                              std::size_t cols = 16);
};

// Floor of the region-relative coordinates over the patch size, clamped at
// the far edges; the sentinel (nullopt) routes to the non-object class.
// Throws for a non-sentinel point outside the region.
std::size_t patch_assign(const std::optional<Vec2>& point,
                         const PatchGrid& grid);

// Counts of (target patch, predicted patch) pairs with the non-object class
// first on the row axis and last on the column axis. Rendering filters out
// classes with no mass on the respective axis and row-normalizes.
class PatchConfusionMatrix {
 public:
  explicit PatchConfusionMatrix(const PatchGrid& grid);

  void add(std::size_t target_class, std::size_t predicted_class);
  void add_pair(const std::optional<Vec2>& target,
                const std::optional<Vec2>& predicted);

  std::uint64_t total() const { return total_; }
  std::uint64_t count(std::size_t target_class,
                      std::size_t predicted_class) const;
  std::uint64_t row_total(std::size_t target_class) const;
  // Row-stochastic value; 0 for empty rows.
  double normalized(std::size_t target_class,
                    std::size_t predicted_class) const;

  const PatchGrid& grid() const { return grid_; }
  std::string class_label(std::size_t cls) const;
  // Render-order class lists (unfiltered): rows lead with the non-object
  // class, columns end with it.
  std::vector<std::size_t> row_order() const;
  std::vector<std::size_t> col_order() const;

  void write_csv(const std::string& path) const;
  void write_svg(const std::string& path) const;

 private:
  PatchGrid grid_;
  std::vector<std::uint64_t> counts_;  // (P+1) x (P+1), class-id indexed
  std::uint64_t total_ = 0;
};

// Linear white-to-dark heat ramp over [0, 1].
std::string heat_color(double value);

struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double top2 = 0.0;
};

// Accuracy and top-2 are per-sample hit rates of the ranked prediction;
// precision/recall/F1 are micro-averaged over (sample, token) pairs where a
// token is predicted positive iff it is the top choice.
Metrics compute_metrics(std::span<const Prediction> predictions,
                        std::span<const Sample> samples);

// Scene-level split: `holdout` scenes form a common test set; the remaining
// scenes partition into k disjoint validation groups of (n-holdout)/k
// scenes; each fold trains on everything else. No sample of a scene ever
// crosses a split boundary.
struct SceneFold {
  std::vector<std::int64_t> train_scenes;
  std::vector<std::int64_t> val_scenes;
};

struct KFoldPlan {
  std::vector<std::int64_t> test_scenes;
  std::vector<SceneFold> folds;
};

KFoldPlan kfold_split(std::vector<std::int64_t> scenes, std::size_t k,
                      std::size_t holdout, Rng& rng);

}  // namespace deixis
