#include "deixis/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace deixis {

PatchGrid PatchGrid::over_table(const ImageDims& dims, std::size_t rows,
                                std::size_t cols) {
  if (rows == 0 || cols == 0)
    throw std::invalid_argument("PatchGrid: rows and cols must be positive");
  return {table_region(dims), cols, rows};
}

std::size_t patch_assign(const std::optional<Vec2>& point,
                         const PatchGrid& grid) {
  if (!point) return grid.non_object_class();
  if (!grid.region.contains(*point))
    throw std::invalid_argument("patch_assign: point outside patch region");
  auto clamp_index = [](double v, std::size_t limit) {
    const auto idx = static_cast<std::size_t>(
        std::max(0.0, std::floor(v)));
    return std::min(idx, limit - 1);
  };
  const std::size_t col =
      clamp_index((point->x - grid.region.x) / grid.patch_w(), grid.cols);
  const std::size_t row =
      clamp_index((point->y - grid.region.y) / grid.patch_h(), grid.rows);
  return row * grid.cols + col;
}

PatchConfusionMatrix::PatchConfusionMatrix(const PatchGrid& grid)
    : grid_(grid), counts_((grid.patch_count() + 1) * (grid.patch_count() + 1),
                           0) {}

void PatchConfusionMatrix::add(std::size_t target_class,
                               std::size_t predicted_class) {
  const std::size_t n = grid_.patch_count() + 1;
  if (target_class >= n || predicted_class >= n)
    throw std::invalid_argument("pcm: class id out of range");
  ++counts_[target_class * n + predicted_class];
  ++total_;
}

void PatchConfusionMatrix::add_pair(const std::optional<Vec2>& target,
                                    const std::optional<Vec2>& predicted) {
  add(patch_assign(target, grid_), patch_assign(predicted, grid_));
}

std::uint64_t PatchConfusionMatrix::count(std::size_t target_class,
                                          std::size_t predicted_class) const {
  const std::size_t n = grid_.patch_count() + 1;
  return counts_.at(target_class * n + predicted_class);
}

std::uint64_t PatchConfusionMatrix::row_total(std::size_t target_class) const {
  const std::size_t n = grid_.patch_count() + 1;
  std::uint64_t total = 0;
  for (std::size_t p = 0; p < n; ++p) total += counts_.at(target_class * n + p);
  return total;
}

double PatchConfusionMatrix::normalized(std::size_t target_class,
                                        std::size_t predicted_class) const {
  const std::uint64_t row = row_total(target_class);
  if (row == 0) return 0.0;
  return static_cast<double>(count(target_class, predicted_class)) /
         static_cast<double>(row);
}

std::string PatchConfusionMatrix::class_label(std::size_t cls) const {
  if (cls == grid_.non_object_class()) return "non-object";
  return "(" + std::to_string(cls / grid_.cols) + "," +
         std::to_string(cls % grid_.cols) + ")";
}

std::vector<std::size_t> PatchConfusionMatrix::row_order() const {
  std::vector<std::size_t> order;
  order.reserve(grid_.patch_count() + 1);
  order.push_back(grid_.non_object_class());
  for (std::size_t p = 0; p < grid_.patch_count(); ++p) order.push_back(p);
  return order;
}

std::vector<std::size_t> PatchConfusionMatrix::col_order() const {
  std::vector<std::size_t> order;
  order.reserve(grid_.patch_count() + 1);
  for (std::size_t p = 0; p < grid_.patch_count(); ++p) order.push_back(p);
  order.push_back(grid_.non_object_class());
  return order;
}

namespace {

// Classes with no mass on the respective axis are dropped from the render.
std::vector<std::size_t> filter_rows(const PatchConfusionMatrix& pcm) {
  std::vector<std::size_t> rows;
  for (std::size_t cls : pcm.row_order()) {
    if (pcm.row_total(cls) > 0) rows.push_back(cls);
  }
  return rows;
}

std::vector<std::size_t> filter_cols(const PatchConfusionMatrix& pcm) {
  std::vector<std::size_t> cols;
  for (std::size_t cls : pcm.col_order()) {
    std::uint64_t col_total = 0;
    for (std::size_t row : pcm.row_order()) col_total += pcm.count(row, cls);
    if (col_total > 0) cols.push_back(cls);
  }
  return cols;
}

std::string format_value(double v, int decimals) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(decimals) << v;
  return out.str();
}

}  // namespace

void PatchConfusionMatrix::write_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("pcm: cannot open '" + path + "'");
  const std::vector<std::size_t> rows = filter_rows(*this);
  const std::vector<std::size_t> cols = filter_cols(*this);
  out << "";
  for (std::size_t c : cols) out << ',' << class_label(c);
  out << '\n';
  for (std::size_t r : rows) {
    out << class_label(r);
    for (std::size_t c : cols) out << ',' << format_value(normalized(r, c), 4);
    out << '\n';
  }
  if (!out) throw std::runtime_error("pcm: write failed for '" + path + "'");
}

std::string heat_color(double value) {
  const double v = std::clamp(value, 0.0, 1.0);
  // white (255,255,255) -> dark indigo (26,16,80)
  const int r = static_cast<int>(std::lround(255.0 + (26.0 - 255.0) * v));
  const int g = static_cast<int>(std::lround(255.0 + (16.0 - 255.0) * v));
  const int b = static_cast<int>(std::lround(255.0 + (80.0 - 255.0) * v));
  std::ostringstream out;
  out << "rgb(" << r << ',' << g << ',' << b << ')';
  return out.str();
}

void PatchConfusionMatrix::write_svg(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("pcm: cannot open '" + path + "'");
  const std::vector<std::size_t> rows = filter_rows(*this);
  const std::vector<std::size_t> cols = filter_cols(*this);

  constexpr double kCell = 34.0;
  constexpr double kMarginLeft = 86.0;
  constexpr double kMarginTop = 64.0;
  const double width = kMarginLeft + kCell * static_cast<double>(cols.size()) + 12.0;
  const double height = kMarginTop + kCell * static_cast<double>(rows.size()) + 12.0;

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" font-family=\"sans-serif\">\n";
  for (std::size_t ci = 0; ci < cols.size(); ++ci) {
    const double x = kMarginLeft + kCell * (static_cast<double>(ci) + 0.5);
    out << "  <text x=\"" << x << "\" y=\"" << kMarginTop - 8.0
        << "\" font-size=\"9\" text-anchor=\"middle\" transform=\"rotate(-45 "
        << x << ' ' << kMarginTop - 8.0 << ")\">" << class_label(cols[ci])
        << "</text>\n";
  }
  for (std::size_t ri = 0; ri < rows.size(); ++ri) {
    const double y = kMarginTop + kCell * (static_cast<double>(ri) + 0.65);
    out << "  <text x=\"" << kMarginLeft - 6.0 << "\" y=\"" << y
        << "\" font-size=\"9\" text-anchor=\"end\">" << class_label(rows[ri])
        << "</text>\n";
    for (std::size_t ci = 0; ci < cols.size(); ++ci) {
      const double v = normalized(rows[ri], cols[ci]);
      const double x = kMarginLeft + kCell * static_cast<double>(ci);
      const double cy = kMarginTop + kCell * static_cast<double>(ri);
      out << "  <rect x=\"" << x << "\" y=\"" << cy << "\" width=\"" << kCell
          << "\" height=\"" << kCell << "\" fill=\"" << heat_color(v)
          << "\" stroke=\"#ccc\"/>\n";
      if (v >= 0.01) {
        const char* text_color = v > 0.55 ? "#ffffff" : "#000000";
        out << "  <text x=\"" << x + kCell * 0.5 << "\" y=\""
            << cy + kCell * 0.62 << "\" font-size=\"8\" text-anchor=\"middle\""
            << " fill=\"" << text_color << "\">" << format_value(v, 2)
            << "</text>\n";
      }
    }
  }
  out << "</svg>\n";
  if (!out) throw std::runtime_error("pcm: write failed for '" + path + "'");
}

Metrics compute_metrics(std::span<const Prediction> predictions,
                        std::span<const Sample> samples) {
  if (predictions.size() != samples.size())
    throw std::invalid_argument("metrics: prediction/sample count mismatch");
  if (samples.empty()) return {};

  std::uint64_t hits1 = 0, hits2 = 0;
  std::uint64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& sample = samples[i];
    const Prediction& pred = predictions[i];
    auto is_target = [&](std::size_t token) {
      return std::binary_search(sample.targets.begin(), sample.targets.end(),
                                token);
    };
    if (!pred.ranked.empty() && is_target(pred.ranked[0])) ++hits1;
    for (std::size_t r = 0; r < std::min<std::size_t>(2, pred.ranked.size());
         ++r) {
      if (is_target(pred.ranked[r])) {
        ++hits2;
        break;
      }
    }
    for (std::size_t token = 0; token < sample.objects.token_count();
         ++token) {
      const bool positive = is_target(token);
      const bool predicted = token == pred.top;
      if (positive && predicted) ++tp;
      if (!positive && predicted) ++fp;
      if (positive && !predicted) ++fn;
    }
  }

  Metrics m;
  const double n = static_cast<double>(samples.size());
  m.accuracy = static_cast<double>(hits1) / n;
  m.top2 = static_cast<double>(hits2) / n;
  m.precision = tp + fp > 0
                    ? static_cast<double>(tp) / static_cast<double>(tp + fp)
                    : 0.0;
  m.recall = tp + fn > 0
                 ? static_cast<double>(tp) / static_cast<double>(tp + fn)
                 : 0.0;
  m.f1 = m.precision + m.recall > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

KFoldPlan kfold_split(std::vector<std::int64_t> scenes, std::size_t k,
                      std::size_t holdout, Rng& rng) {
  if (k == 0) throw std::invalid_argument("kfold_split: k must be positive");
  if (scenes.size() < k * 3 + holdout)
    throw std::invalid_argument(
        "kfold_split: insufficient scenes (need at least " +
        std::to_string(k * 3 + holdout) + ", got " +
        std::to_string(scenes.size()) + ")");

  std::sort(scenes.begin(), scenes.end());
  for (std::size_t i = scenes.size(); i > 1; --i)
    std::swap(scenes[i - 1], scenes[rng.below(i)]);

  KFoldPlan plan;
  plan.test_scenes.assign(scenes.begin(),
                          scenes.begin() + static_cast<std::ptrdiff_t>(holdout));
  const std::vector<std::int64_t> pool(
      scenes.begin() + static_cast<std::ptrdiff_t>(holdout), scenes.end());
  const std::size_t val_size = pool.size() / k;
  // scenes beyond k * val_size stay in every fold's training set
  plan.folds.resize(k);
  for (std::size_t f = 0; f < k; ++f) {
    auto& fold = plan.folds[f];
    const std::size_t begin = f * val_size;
    const std::size_t end = begin + val_size;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (i >= begin && i < end)
        fold.val_scenes.push_back(pool[i]);
      else
        fold.train_scenes.push_back(pool[i]);
    }
    std::sort(fold.val_scenes.begin(), fold.val_scenes.end());
    std::sort(fold.train_scenes.begin(), fold.train_scenes.end());
  }
  std::sort(plan.test_scenes.begin(), plan.test_scenes.end());
  return plan;
}

}  // namespace deixis
