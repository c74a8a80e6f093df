// SPDX-License-Identifier: Apache-2.0
// WDBC ingestion, the 2-d projection and grid, plaintext oracles, leave-one-out
// evaluation and benchmark sweeps.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kish/classifier.hpp"
#include "kish/metering.hpp"

namespace kish {

/// Receives non-fatal warnings (degenerate axes, ridge fallback, ...).
/// The default handler prints "warning: <msg>" to stderr. Passing an empty
/// function restores it.
using WarningHandler = std::function<void(std::string_view)>;
void set_warning_handler(WarningHandler handler);
void warn(std::string_view message);

inline constexpr std::size_t kWdbcFeatures = 30;

struct RawRecord {
  std::uint64_t id = 0;
  bool malignant = false;
  std::array<double, kWdbcFeatures> features{};
};

struct RawDataset {
  std::vector<RawRecord> rows;

  std::size_t malignant_count() const noexcept;
  std::size_t benign_count() const noexcept { return rows.size() - malignant_count(); }
  /// Malignant = 1.
  std::vector<std::uint8_t> labels() const;
};

/// Comma-separated id, M|B, 30 decimals per line. Blank lines are skipped.
/// Throws ParseError (1-based line) on a malformed row, and on a file with
/// fewer than two rows or only one class.
RawDataset load_wdbc(const std::filesystem::path& path);
RawDataset parse_wdbc(std::istream& in);

using Point2 = std::array<double, 2>;

struct Projection {
  std::vector<Point2> points;
  std::vector<double> axis1;     // unit vector in standardized feature space
  std::vector<double> axis2;
  double ridge_epsilon = 0;      // > 0 when the within-class scatter was regularized
  bool discriminant_degenerate = false;  // class means coincide; axis 1 fell back to the top PC
};

/// Standardizes features, takes the Fisher direction S_w^-1 (m1 - m0) as
/// axis 1 and the top principal component of the residual orthogonal to it as
/// axis 2. Each axis is normalized with its first nonzero coefficient
/// positive. Throws ParameterError unless both classes are present.
Projection project_2d(const RawDataset& raw);

/// Per-axis affine map x -> (x - lo) * scale onto [0, grid - 1].
struct QuantMeta {
  std::uint64_t grid = 0;
  std::array<double, 2> lo{};
  std::array<double, 2> scale{};  // 0 for a degenerate axis

  /// Nearest cell, ties to even, clamped to the grid.
  std::vector<std::uint64_t> cell_of(const Point2& p) const;
  Point2 center_of(std::span<const std::uint64_t> cell) const;
};

struct GridDataset {
  LabeledDatabase data;
  QuantMeta meta;

  std::size_t size() const noexcept { return data.size(); }
};

/// Min-max quantization with round-half-to-even. A degenerate axis maps to 0
/// and raises a warning. Throws ParameterError if grid < 2 or sizes differ.
GridDataset quantize(std::span<const Point2> points, std::span<const std::uint8_t> labels, std::uint64_t grid);
Point2 dequantize(const QuantMeta& meta, std::span<const std::uint64_t> cell);

std::uint64_t l1_distance(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b);

/// Exact L1 kNN: stable order by (distance, index), majority of the first k
/// labels, tie to 0. Throws ParameterError unless 1 <= k <= n.
std::uint8_t plain_knn(const LabeledDatabase& db, std::span<const std::uint64_t> query, std::uint64_t k);

/// 2|X & Y| / (|X| + |Y|) over the positive (label 1) sets; 0 when both are empty.
double f1_score(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth);

enum class EvalMode { plain, secure };

struct EvalConfig {
  EvalMode mode = EvalMode::plain;
  std::uint64_t k = 13;
  std::uint32_t repetitions = 5;
  std::uint64_t seed = 0;
};

struct EvalReport {
  double f1 = 0;
  std::vector<std::uint8_t> predictions;
  /// Secure mode: kappa of every repetition of every point, recovered by the
  /// key holder from the decrypted threshold. Plain mode: kappa of the exact
  /// plaintext threshold mu + z_k sigma, one per point.
  std::vector<std::uint64_t> kappa_samples;
  EvalMetrics metrics;
  /// Mean over points of gaussian_sd_diagnostic on the left-out query.
  double sd_gaussian = 0;
};

/// Removes each point in turn and classifies it against the other n - 1.
/// Points run in parallel; point i draws from derive_seed(seed, "point", i),
/// so the report does not depend on the thread count. Secure mode uses the
/// mock backend over select_ring_params(grid, 2, n - 1).
EvalReport leave_one_out_f1(const GridDataset& ds, const EvalConfig& cfg);

/// Statistical distance between the distance distribution {d_i} and the
/// Gaussian with the same mean and (population) deviation, discretized to
/// integer bins. sigma = 0 warns and returns 1.
double gaussian_sd_diagnostic(std::span<const std::uint64_t> distances);
double gaussian_sd_diagnostic(const LabeledDatabase& db, std::span<const std::uint64_t> query);

std::vector<std::uint64_t> distances_to(const LabeledDatabase& db, std::span<const std::uint64_t> query);

/// (distance, count) for every distance that occurs, ascending.
std::vector<std::pair<std::uint64_t, std::uint64_t>> distance_histogram(std::span<const std::uint64_t> distances);

struct BenchRow {
  std::uint64_t grid = 0;
  std::uint64_t n = 0;
  std::uint64_t mult_gates = 0;
  std::uint32_t max_depth = 0;
  double wall_time = 0;  // seconds
  std::uint64_t peak_ciphers = 0;
};

struct BenchConfig {
  std::vector<std::uint64_t> grid_sweep;  // at fixed_n
  std::vector<std::uint64_t> n_sweep;     // at fixed_grid
  std::uint64_t fixed_grid = 100;
  std::uint64_t fixed_n = 0;  // 0 = dataset size
  std::uint64_t k = 13;
  std::uint64_t seed = 0;
};

/// Upper estimate of simultaneously live ciphertexts in one server run: the
/// distances and comparison bits plus one power basis.
std::uint64_t peak_cipher_estimate(const RingParams& ring);

/// One metered server_classify per row. Databases of size n reuse the
/// projected points cyclically (duplicates when n exceeds the data), and the
/// query is the first point. Throws ParameterError if both sweeps are empty.
std::vector<BenchRow> sweep_benchmarks(std::span<const Point2> points, std::span<const std::uint8_t> labels,
                                       const BenchConfig& cfg);

inline constexpr std::string_view kBenchHeader = "grid,n,mult_gates,max_depth,wall_time,peak_ciphers";
void write_bench_csv(std::ostream& out, std::span<const BenchRow> rows);

}  // namespace kish
