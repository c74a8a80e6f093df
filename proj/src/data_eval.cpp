// SPDX-License-Identifier: Apache-2.0
#include "kish/data_eval.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>

#include "kish/errors.hpp"
#include "kish/he.hpp"
#include "kish/seed.hpp"

namespace kish {

namespace {

std::mutex warn_mutex;
WarningHandler warn_handler;

}  // namespace

void set_warning_handler(WarningHandler handler) {
  std::lock_guard lock(warn_mutex);
  warn_handler = std::move(handler);
}

void warn(std::string_view message) {
  std::lock_guard lock(warn_mutex);
  if (warn_handler) {
    warn_handler(message);
  } else {
    std::cerr << "warning: " << message << '\n';
  }
}

// ---------------------------------------------------------------- loading

std::size_t RawDataset::malignant_count() const noexcept {
  return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const RawRecord& r) { return r.malignant; }));
}

std::vector<std::uint8_t> RawDataset::labels() const {
  std::vector<std::uint8_t> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.malignant ? 1 : 0);
  return out;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) return out;
    start = comma + 1;
  }
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

}  // namespace

RawDataset parse_wdbc(std::istream& in) {
  RawDataset ds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cols = split_commas(line);
    if (cols.size() != 2 + kWdbcFeatures) {
      throw ParseError("expected 32 columns, found " + std::to_string(cols.size()), line_no);
    }
    RawRecord rec;
    if (!parse_number(cols[0], rec.id)) throw ParseError("bad id '" + std::string(cols[0]) + "'", line_no);
    if (cols[1] == "M") {
      rec.malignant = true;
    } else if (cols[1] != "B") {
      throw ParseError("diagnosis must be M or B, found '" + std::string(cols[1]) + "'", line_no);
    }
    for (std::size_t j = 0; j < kWdbcFeatures; ++j) {
      if (!parse_number(cols[2 + j], rec.features[j]) || !std::isfinite(rec.features[j])) {
        throw ParseError("bad feature value '" + std::string(cols[2 + j]) + "'", line_no);
      }
    }
    ds.rows.push_back(rec);
  }
  if (ds.rows.size() < 2) throw ParseError("dataset needs at least two rows", line_no);
  const std::size_t m = ds.malignant_count();
  if (m == 0 || m == ds.rows.size()) throw ParseError("dataset needs both classes", line_no);
  return ds;
}

RawDataset load_wdbc(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return parse_wdbc(in);
}

// ------------------------------------------------------------- projection

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void fix_sign(VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > 1e-12) {
      if (v[i] < 0) v = -v;
      return;
    }
  }
}

// Unit eigenvector of the largest eigenvalue of the sample scatter of x.
VectorXd top_component(const MatrixXd& x) {
  const MatrixXd centered = x.rowwise() - x.colwise().mean();
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(centered.transpose() * centered);
  VectorXd v = eig.eigenvectors().col(eig.eigenvectors().cols() - 1);
  v.normalize();
  fix_sign(v);
  return v;
}

}  // namespace

Projection project_2d(const RawDataset& raw) {
  const auto n = static_cast<Eigen::Index>(raw.rows.size());
  const auto d = static_cast<Eigen::Index>(kWdbcFeatures);
  const std::size_t n1 = raw.malignant_count();
  if (n1 == 0 || n1 == raw.rows.size()) throw ParameterError("projection needs both classes");

  MatrixXd z(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) z(i, j) = raw.rows[static_cast<std::size_t>(i)].features[static_cast<std::size_t>(j)];
  }
  const VectorXd mean = z.colwise().mean();
  z.rowwise() -= mean.transpose();
  for (Eigen::Index j = 0; j < d; ++j) {
    const double sd = std::sqrt(z.col(j).squaredNorm() / static_cast<double>(n));
    if (sd > 0) {
      z.col(j) /= sd;
    } else {
      z.col(j).setZero();
    }
  }

  VectorXd m[2] = {VectorXd::Zero(d), VectorXd::Zero(d)};
  double count[2] = {0, 0};
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = raw.rows[static_cast<std::size_t>(i)].malignant ? 1 : 0;
    m[c] += z.row(i).transpose();
    count[c] += 1;
  }
  m[0] /= count[0];
  m[1] /= count[1];
  MatrixXd sw = MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = raw.rows[static_cast<std::size_t>(i)].malignant ? 1 : 0;
    const VectorXd dev = z.row(i).transpose() - m[c];
    sw.noalias() += dev * dev.transpose();
  }

  Projection out;
  Eigen::SelfAdjointEigenSolver<MatrixXd> sw_eig(sw, Eigen::EigenvaluesOnly);
  const double lo = sw_eig.eigenvalues().minCoeff();
  const double hi = sw_eig.eigenvalues().maxCoeff();
  if (hi <= 0 || lo <= 1e-12 * hi) {
    const double trace = sw.trace();
    out.ridge_epsilon = trace > 0 ? 1e-6 * trace / static_cast<double>(d) : 1e-6;
    sw.diagonal().array() += out.ridge_epsilon;
    warn("within-class scatter is singular; ridge epsilon " + std::to_string(out.ridge_epsilon));
  }
  const VectorXd diff = m[1] - m[0];
  VectorXd w = sw.ldlt().solve(diff);
  if (diff.norm() <= 1e-12 || !w.allFinite() || w.norm() <= 1e-12) {
    out.discriminant_degenerate = true;
    warn("class means coincide; using the top principal component as axis 1");
    w = top_component(z);
  } else {
    w.normalize();
    fix_sign(w);
  }

  const VectorXd a1 = z * w;
  const MatrixXd residual = z - a1 * w.transpose();
  const VectorXd v = top_component(residual);
  const VectorXd a2 = z * v;

  out.points.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) out.points[static_cast<std::size_t>(i)] = {a1[i], a2[i]};
  out.axis1.assign(w.data(), w.data() + d);
  out.axis2.assign(v.data(), v.data() + d);
  return out;
}

// ----------------------------------------------------------- quantization

std::vector<std::uint64_t> QuantMeta::cell_of(const Point2& p) const {
  std::vector<std::uint64_t> cell(2);
  const double top = static_cast<double>(grid - 1);
  for (std::size_t a = 0; a < 2; ++a) {
    // nearbyint under the default rounding mode is round-half-to-even
    const double r = std::nearbyint((p[a] - lo[a]) * scale[a]);
    cell[a] = static_cast<std::uint64_t>(std::clamp(r, 0.0, top));
  }
  return cell;
}

Point2 QuantMeta::center_of(std::span<const std::uint64_t> cell) const { return dequantize(*this, cell); }

Point2 dequantize(const QuantMeta& meta, std::span<const std::uint64_t> cell) {
  if (cell.size() != 2) throw ParameterError("grid cell must be 2-dimensional");
  Point2 p{};
  for (std::size_t a = 0; a < 2; ++a) {
    p[a] = meta.scale[a] > 0 ? meta.lo[a] + static_cast<double>(cell[a]) / meta.scale[a] : meta.lo[a];
  }
  return p;
}

GridDataset quantize(std::span<const Point2> points, std::span<const std::uint8_t> labels, std::uint64_t grid) {
  if (grid < 2) throw ParameterError("grid must be at least 2");
  if (points.size() != labels.size()) throw ParameterError("points and labels differ in length");
  GridDataset out;
  out.meta.grid = grid;
  for (std::size_t a = 0; a < 2; ++a) {
    double lo = 0;
    double hi = 0;
    if (!points.empty()) {
      const auto [mn, mx] = std::minmax_element(points.begin(), points.end(),
                                                [a](const Point2& x, const Point2& y) { return x[a] < y[a]; });
      lo = (*mn)[a];
      hi = (*mx)[a];
    }
    out.meta.lo[a] = lo;
    if (hi > lo) {
      out.meta.scale[a] = static_cast<double>(grid - 1) / (hi - lo);
    } else {
      out.meta.scale[a] = 0;
      if (!points.empty()) warn("axis " + std::to_string(a + 1) + " is constant; all points map to 0");
    }
  }
  out.data.points.reserve(points.size());
  for (const auto& p : points) out.data.points.push_back(out.meta.cell_of(p));
  out.data.labels.assign(labels.begin(), labels.end());
  return out;
}

// ------------------------------------------------------------ plain oracles

std::uint64_t l1_distance(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
  if (a.size() != b.size()) throw ParameterError("points differ in dimension");
  std::uint64_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] > b[i] ? a[i] - b[i] : b[i] - a[i];
  return d;
}

std::vector<std::uint64_t> distances_to(const LabeledDatabase& db, std::span<const std::uint64_t> query) {
  std::vector<std::uint64_t> out;
  out.reserve(db.size());
  for (const auto& p : db.points) out.push_back(l1_distance(p, query));
  return out;
}

std::uint8_t plain_knn(const LabeledDatabase& db, std::span<const std::uint64_t> query, std::uint64_t k) {
  if (db.points.size() != db.labels.size()) throw ParameterError("points and labels differ in length");
  if (k == 0 || k > db.size()) throw ParameterError("k must satisfy 1 <= k <= n");
  const auto dist = distances_to(db, query);
  std::vector<std::size_t> order(db.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
  std::uint64_t ones = 0;
  for (std::uint64_t j = 0; j < k; ++j) ones += db.labels[order[j]] == 1 ? 1 : 0;
  return 2 * ones > k ? 1 : 0;
}

double f1_score(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth) {
  if (predicted.size() != truth.size()) throw ParameterError("prediction and truth differ in length");
  std::size_t both = 0;
  std::size_t p = 0;
  std::size_t t = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    p += predicted[i] == 1 ? 1 : 0;
    t += truth[i] == 1 ? 1 : 0;
    both += predicted[i] == 1 && truth[i] == 1 ? 1 : 0;
  }
  if (p + t == 0) return 0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + t);
}

// ------------------------------------------------------------ diagnostics

double gaussian_sd_diagnostic(std::span<const std::uint64_t> distances) {
  if (distances.empty()) throw ParameterError("no distances");
  const double n = static_cast<double>(distances.size());
  double mu = 0;
  for (auto d : distances) mu += static_cast<double>(d);
  mu /= n;
  double var = 0;
  for (auto d : distances) var += (static_cast<double>(d) - mu) * (static_cast<double>(d) - mu);
  const double sigma = std::sqrt(var / n);
  if (!(sigma > 0)) {
    warn("distance distribution has zero deviation; statistical distance reported as 1");
    return 1.0;
  }

  const auto hist = distance_histogram(distances);
  std::map<std::int64_t, double> empirical;
  for (const auto& [d, c] : hist) empirical[static_cast<std::int64_t>(d)] = static_cast<double>(c) / n;

  // Gaussian mass outside +-10 sigma is below 1e-20.
  const auto lo = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(mu - 10 * sigma)), hist.front().first);
  const auto hi = std::max<std::int64_t>(static_cast<std::int64_t>(std::ceil(mu + 10 * sigma)),
                                         static_cast<std::int64_t>(hist.back().first));
  double worst = 0;
  for (std::int64_t u = lo; u <= hi; ++u) {
    const double x = static_cast<double>(u);
    const double g = phi((x + 0.5 - mu) / sigma) - phi((x - 0.5 - mu) / sigma);
    const auto it = empirical.find(u);
    const double e = it == empirical.end() ? 0.0 : it->second;
    worst = std::max(worst, std::abs(e - g));
  }
  return worst;
}

double gaussian_sd_diagnostic(const LabeledDatabase& db, std::span<const std::uint64_t> query) {
  return gaussian_sd_diagnostic(distances_to(db, query));
}

std::vector<std::pair<std::uint64_t, std::uint64_t>> distance_histogram(std::span<const std::uint64_t> distances) {
  std::map<std::uint64_t, std::uint64_t> counts;
  for (auto d : distances) ++counts[d];
  return {counts.begin(), counts.end()};
}

// ------------------------------------------------------- leave-one-out F1

namespace {

LabeledDatabase without(const LabeledDatabase& db, std::size_t skip) {
  LabeledDatabase out;
  out.points.reserve(db.size() - 1);
  out.labels.reserve(db.size() - 1);
  for (std::size_t i = 0; i < db.size(); ++i) {
    if (i == skip) continue;
    out.points.push_back(db.points[i]);
    out.labels.push_back(db.labels[i]);
  }
  return out;
}

// |{d < t}| with t read as a signed ring element and clamped at 0, matching
// the server's comparison against max(T*, 0).
std::uint64_t kappa_below(std::span<const std::uint64_t> dist, std::uint64_t t, std::uint64_t modulus) {
  if (2 * t > modulus) return 0;
  return static_cast<std::uint64_t>(std::count_if(dist.begin(), dist.end(), [t](std::uint64_t d) { return d < t; }));
}

std::uint64_t exact_kappa(std::span<const std::uint64_t> dist, std::int64_t z_k) {
  const double n = static_cast<double>(dist.size());
  double mu = 0;
  for (auto d : dist) mu += static_cast<double>(d);
  mu /= n;
  double var = 0;
  for (auto d : dist) var += (static_cast<double>(d) - mu) * (static_cast<double>(d) - mu);
  const double t = mu + static_cast<double>(z_k) * std::sqrt(var / n);
  return static_cast<std::uint64_t>(
      std::count_if(dist.begin(), dist.end(), [t](std::uint64_t d) { return static_cast<double>(d) < t; }));
}

struct PointResult {
  std::uint8_t prediction = 0;
  std::vector<std::uint64_t> kappas;
  double sd = 0;
};

PointResult secure_point(const LabeledDatabase& rest, std::span<const std::uint64_t> query,
                         const ProtocolParams& pp) {
  PointResult r;
  const he::KeyPair keys = he::keygen(pp.ring, derive_seed(pp.rng_seed, "client_key", 0));
  const he::MockBackend backend(keys.pk);
  const auto dist = distances_to(rest, query);
  std::vector<std::uint64_t> bits;
  for (std::uint32_t rep = 0; rep < pp.repetitions; ++rep) {
    std::vector<he::Cipher> enc_q;
    for (std::uint64_t c : query) enc_q.push_back(he::encrypt(keys.pk, c));
    ServerTrace trace;
    const he::Cipher bit = server_classify(backend, enc_q, rest, repetition_params(pp, rep), &trace);
    bits.push_back(he::decrypt(keys.sk, bit));
    r.kappas.push_back(kappa_below(dist, he::decrypt(keys.sk, trace.threshold), pp.ring.modulus));
  }
  r.prediction = static_cast<std::uint8_t>(majority(bits));
  r.sd = gaussian_sd_diagnostic(dist);
  return r;
}

}  // namespace

EvalReport leave_one_out_f1(const GridDataset& ds, const EvalConfig& cfg) {
  const std::size_t n = ds.size();
  if (n < 3) throw ParameterError("leave-one-out needs at least 3 points");
  if (ds.data.labels.size() != n) throw ParameterError("points and labels differ in length");
  if (cfg.k == 0 || cfg.k >= n - 1) throw ParameterError("k must satisfy 1 <= k < n - 1");

  std::vector<PointResult> results(n);
  RingParams ring{};
  std::int64_t z_k = std::lround(phi_inverse(static_cast<double>(cfg.k) / static_cast<double>(n - 1)));
  if (cfg.mode == EvalMode::secure) {
    ring = select_ring_params(ds.meta.grid, 2, n - 1);
    z_k = make_protocol_params(ring, cfg.k, cfg.repetitions, 0).z_k;
  }

  auto metered = metered_scope([&] {
    parallel_for(n, [&](std::size_t i) {
      const LabeledDatabase rest = without(ds.data, i);
      const auto& q = ds.data.points[i];
      if (cfg.mode == EvalMode::secure) {
        const auto pp = make_protocol_params(ring, cfg.k, cfg.repetitions, derive_seed(cfg.seed, "point", i));
        results[i] = secure_point(rest, q, pp);
      } else {
        const auto dist = distances_to(rest, q);
        results[i].prediction = plain_knn(rest, q, cfg.k);
        results[i].kappas = {exact_kappa(dist, z_k)};
        results[i].sd = gaussian_sd_diagnostic(dist);
      }
    });
  });

  EvalReport report;
  report.metrics = metered.metrics;
  double sd_sum = 0;
  for (const auto& r : results) {
    report.predictions.push_back(r.prediction);
    report.kappa_samples.insert(report.kappa_samples.end(), r.kappas.begin(), r.kappas.end());
    sd_sum += r.sd;
  }
  report.sd_gaussian = sd_sum / static_cast<double>(n);
  report.f1 = f1_score(report.predictions, ds.data.labels);
  return report;
}

// ------------------------------------------------------------- benchmarks

std::uint64_t peak_cipher_estimate(const RingParams& ring) {
  const std::uint64_t b = static_cast<std::uint64_t>(std::ceil(std::sqrt(static_cast<double>(ring.modulus))));
  const std::uint64_t g = (ring.modulus + b - 1) / b;
  return 2 * ring.n + b + g;
}

namespace {

BenchRow bench_one(std::span<const Point2> points, std::span<const std::uint8_t> labels, std::uint64_t grid,
                   std::uint64_t n, const BenchConfig& cfg) {
  const GridDataset full = quantize(points, labels, grid);
  LabeledDatabase db;
  for (std::uint64_t i = 0; i < n; ++i) {
    db.points.push_back(full.data.points[i % full.size()]);
    db.labels.push_back(full.data.labels[i % full.size()]);
  }
  const RingParams ring = select_ring_params(grid, 2, n);
  const ProtocolParams pp = make_protocol_params(ring, cfg.k, 1, derive_seed(cfg.seed, "bench", grid * 1000003 + n));
  const he::KeyPair keys = he::keygen(ring, derive_seed(pp.rng_seed, "client_key", 0));
  const he::MockBackend backend(keys.pk);
  std::vector<he::Cipher> enc_q;
  for (std::uint64_t c : db.points.front()) enc_q.push_back(he::encrypt(keys.pk, c));

  const auto run = metered_scope([&] { return server_classify(backend, enc_q, db, pp); });
  BenchRow row;
  row.grid = grid;
  row.n = n;
  row.mult_gates = run.metrics.mult_gates;
  row.max_depth = run.metrics.max_depth;
  row.wall_time = std::chrono::duration<double>(run.metrics.wall_time).count();
  row.peak_ciphers = peak_cipher_estimate(ring);
  return row;
}

}  // namespace

std::vector<BenchRow> sweep_benchmarks(std::span<const Point2> points, std::span<const std::uint8_t> labels,
                                       const BenchConfig& cfg) {
  if (cfg.grid_sweep.empty() && cfg.n_sweep.empty()) throw ParameterError("benchmark sweep is empty");
  if (points.empty() || points.size() != labels.size()) throw ParameterError("benchmark needs labelled points");
  const std::uint64_t fixed_n = cfg.fixed_n == 0 ? points.size() : cfg.fixed_n;
  std::vector<BenchRow> rows;
  for (std::uint64_t g : cfg.grid_sweep) rows.push_back(bench_one(points, labels, g, fixed_n, cfg));
  for (std::uint64_t n : cfg.n_sweep) rows.push_back(bench_one(points, labels, cfg.fixed_grid, n, cfg));
  return rows;
}

void write_bench_csv(std::ostream& out, std::span<const BenchRow> rows) {
  out << kBenchHeader << '\n';
  for (const auto& r : rows) {
    out << r.grid << ',' << r.n << ',' << r.mult_gates << ',' << r.max_depth << ',' << r.wall_time << ','
        << r.peak_ciphers << '\n';
  }
}

}  // namespace kish
