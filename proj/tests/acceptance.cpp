// SPDX-License-Identifier: Apache-2.0
// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
// failure. Pass criterion numbers as arguments to run a subset.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <future>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kish/classifier.hpp"
#include "kish/data_eval.hpp"
#include "kish/interp.hpp"
#include "kish/protocol_io.hpp"
#include "kish/seed.hpp"
#include "synthetic.hpp"

namespace {

using namespace kish;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const RawDataset& wdbc() {
  static const RawDataset raw = load_wdbc(std::string(KISH_DATA_DIR) + "/wdbc.data");
  return raw;
}

const Projection& wdbc_projection() {
  static const Projection proj = project_2d(wdbc());
  return proj;
}

GridDataset wdbc_grid(std::uint64_t grid) { return quantize(wdbc_projection().points, wdbc().labels(), grid); }

// Ring with a given prime modulus and the largest distance bound it supports
// in one dimension.
RingParams ring_with_modulus(std::uint64_t modulus) {
  RingParams r;
  r.modulus = modulus;
  r.dim = 1;
  r.dist_bound = (modulus - 1) / 2;
  r.coord_bound = r.dist_bound + 1;
  r.n = 1;
  return r;
}

std::vector<he::Cipher> encrypt_all(const he::Backend& be, std::span<const std::uint64_t> xs) {
  std::vector<he::Cipher> out;
  for (auto x : xs) out.push_back(be.encrypt(x));
  return out;
}

// 1. Plain kNN leave-one-out F1 on WDBC, grid 100..250, k = 13.
Outcome plain_baseline() {
  Outcome o{true, ""};
  for (std::uint64_t g : {100, 150, 200, 250}) {
    const auto t0 = Clock::now();
    const auto r = leave_one_out_f1(wdbc_grid(g), {EvalMode::plain, 13, 1, 0});
    const double secs = seconds_since(t0);
    const bool ok = std::abs(r.f1 - 0.98) <= 0.015 && secs <= 60;
    o.pass = o.pass && ok;
    o.detail += fmt("grid %llu F1=%.4f (%.1fs) ", static_cast<unsigned long long>(g), r.f1, secs);
  }
  o.detail += "target 0.98 +- 0.015, <= 60s each";
  return o;
}

// 2. Secure leave-one-out F1, grid 250, k = 13, 5 repetitions, fixed seed.
Outcome secure_accuracy() {
  const auto ds = wdbc_grid(250);
  const double plain = leave_one_out_f1(ds, {EvalMode::plain, 13, 1, 0}).f1;
  const auto t0 = Clock::now();
  const auto r = leave_one_out_f1(ds, {EvalMode::secure, 13, 5, 2024});
  const double secs = seconds_since(t0);
  std::uint64_t in_band = 0;
  std::uint64_t zero = 0;
  for (auto kappa : r.kappa_samples) {
    in_band += kappa > 6 && kappa < 20 ? 1 : 0;
    zero += kappa == 0 ? 1 : 0;
  }
  const double n = static_cast<double>(r.kappa_samples.size());
  const bool pass = r.f1 >= 0.93 && r.f1 >= 0.97 * plain && secs <= 1800;
  return {pass, fmt("secure F1=%.4f plain F1=%.4f (need >= 0.93 and >= %.4f), %.0fs; kappa in (6,20) %.1f%%, "
                    "kappa = 0 %.1f%%, mean SD to Gaussian %.3f",
                    r.f1, plain, 0.97 * plain, secs, 100.0 * static_cast<double>(in_band) / n,
                    100.0 * static_cast<double>(zero) / n, r.sd_gaussian)};
}

std::vector<BenchRow> n_sweep(const std::vector<std::uint64_t>& ns, std::uint64_t grid) {
  BenchConfig cfg;
  cfg.n_sweep = ns;
  cfg.fixed_grid = grid;
  cfg.seed = 3;
  return sweep_benchmarks(wdbc_projection().points, wdbc().labels(), cfg);
}

// 3. max_depth of server_classify identical across n.
Outcome depth_constancy() {
  const auto rows = n_sweep({50, 100, 569}, 100);
  std::string d;
  for (const auto& r : rows) d += fmt("n=%llu depth=%u ", static_cast<unsigned long long>(r.n), r.max_depth);
  const bool same = std::all_of(rows.begin(), rows.end(), [&](const BenchRow& r) { return r.max_depth == rows[0].max_depth; });
  return {same, d + "(grid 100)"};
}

// 4. mult_gates linear in n: least-squares fit, worst relative residual.
Outcome gate_linearity() {
  const auto rows = n_sweep({50, 100, 200, 400, 569}, 100);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double m = static_cast<double>(rows.size());
  for (const auto& r : rows) {
    const double x = static_cast<double>(r.n);
    const double y = static_cast<double>(r.mult_gates);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  const double icept = (sy - slope * sx) / m;
  double worst = 0;
  std::string d;
  for (const auto& r : rows) {
    const double y = static_cast<double>(r.mult_gates);
    worst = std::max(worst, std::abs(y - (icept + slope * static_cast<double>(r.n))) / y);
    d += fmt("n=%llu gates=%llu ", static_cast<unsigned long long>(r.n), static_cast<unsigned long long>(r.mult_gates));
  }
  return {worst <= 0.05, d + fmt("slope %.1f/point, worst relative residual %.2e (<= 5%%)", slope, worst)};
}

// 5. Paterson-Stockmeyer size and depth bounds on dense tables.
Outcome interpolation_size() {
  Outcome o{true, ""};
  for (std::uint64_t p : {97, 397, 1201}) {
    const RingParams ring = ring_with_modulus(p);
    const auto kp = he::keygen(ring, p);
    const he::MockBackend be(kp.pk);
    std::mt19937_64 rng(p);
    std::vector<std::int64_t> values(p);
    for (auto& v : values) v = static_cast<std::int64_t>(rng() % p);
    const PolyTable dense = lagrange_table(p, [&](std::uint64_t x) { return values[x]; }, "dense");
    const PolyTable neg = lagrange_table(p, [p](std::uint64_t x) { return 2 * x > p ? 1 : 0; }, "is_neg");
    const std::uint64_t gate_cap = 3 * static_cast<std::uint64_t>(std::ceil(std::sqrt(static_cast<double>(p))));
    const auto depth_cap = static_cast<std::uint32_t>(std::ceil(std::log2(static_cast<double>(p)))) + 4;
    for (const PolyTable* t : {&dense, &neg}) {
      const std::uint64_t x = rng() % p;
      const he::Cipher cx = be.encrypt(x);
      const auto run = metered_scope([&] { return eval_poly_ps(be, *t, cx); });
      const bool ok = run.metrics.mult_gates <= gate_cap && run.metrics.max_depth <= depth_cap &&
                      he::decrypt(kp.sk, run.result) == t->eval(x);
      o.pass = o.pass && ok;
      o.detail += fmt("p=%llu %s gates=%llu/%llu depth=%u/%u; ", static_cast<unsigned long long>(p), t->name.c_str(),
                      static_cast<unsigned long long>(run.metrics.mult_gates),
                      static_cast<unsigned long long>(gate_cap), run.metrics.max_depth, depth_cap);
    }
  }
  return o;
}

// 6. Coin toss frequency over 100k tosses for 20 (x, f, m) with f(x) <= m.
Outcome coin_unbiased() {
  const RingParams ring = select_ring_params(100, 2, 569);
  const auto kp = he::keygen(ring, 6);
  const he::MockBackend be(kp.pk);
  const auto tables = named_tables(ring);
  struct Combo {
    std::uint64_t x;
    CoinFunction f;
    std::uint64_t m;
  };
  const std::vector<Combo> combos = {
      {0, CoinFunction::identity, 569},     {1, CoinFunction::identity, 569},
      {57, CoinFunction::identity, 569},    {120, CoinFunction::identity, 569},
      {198, CoinFunction::identity, 569},   {13, CoinFunction::identity, 13},
      {5, CoinFunction::identity, 7},       {30, CoinFunction::identity, 96},
      {99, CoinFunction::identity, 200},    {150, CoinFunction::identity, 151},
      {0, CoinFunction::square, 569},       {3, CoinFunction::square, 569},
      {12, CoinFunction::square, 569},      {23, CoinFunction::square, 569},
      {17, CoinFunction::square, 1000},     {100, CoinFunction::square, 56900},
      {198, CoinFunction::square, 56900},   {150, CoinFunction::square, 22501},
      {40, CoinFunction::square, 1601},     {7, CoinFunction::square, 50},
  };
  const int tosses = 100000;
  Outcome o{true, ""};
  double worst = 0;
  for (std::size_t c = 0; c < combos.size(); ++c) {
    const auto& k = combos[c];
    const CoinSpec spec{k.f, k.m, 0};
    const double p = static_cast<double>(apply(k.f, k.x)) / static_cast<double>(k.m);
    std::mt19937_64 rng(derive_seed(6, "coin", c));
    const he::Cipher x = be.encrypt(k.x);
    std::uint64_t ones = 0;
    for (int i = 0; i < tosses; ++i) ones += he::decrypt(kp.sk, coin_toss(be, *tables, x, spec, rng));
    const double freq = static_cast<double>(ones) / tosses;
    const double se = std::sqrt(p * (1 - p) / tosses);
    const bool ok = se > 0 ? std::abs(freq - p) <= 3 * se : freq == p;
    if (se > 0) worst = std::max(worst, std::abs(freq - p) / se);
    if (!ok) {
      o.pass = false;
      o.detail += fmt("x=%llu m=%llu freq %.5f vs %.5f; ", static_cast<unsigned long long>(k.x),
                      static_cast<unsigned long long>(k.m), freq, p);
    }
  }
  o.detail += fmt("20 combinations x 100k tosses, worst deviation %.2f standard errors (<= 3)", worst);
  return o;
}

// 7. ProbAvg tail: fraction of 1000 runs off by more than chi/2.
Outcome probavg_concentration() {
  const std::uint64_t n = 569;
  const RingParams ring = select_ring_params(100, 2, n);
  const auto kp = he::keygen(ring, 7);
  const he::MockBackend be(kp.pk);
  const auto tables = named_tables(ring);
  struct Case {
    double mean, sd;
    CoinFunction f;
    std::uint64_t m;
  };
  const std::vector<Case> cases = {
      {40, 12, CoinFunction::identity, n},
      {100, 30, CoinFunction::identity, n},
      {150, 20, CoinFunction::identity, n},
      {110, 30, CoinFunction::square, n * ring.coord_bound},
  };
  Outcome o{true, ""};
  for (std::size_t c = 0; c < cases.size(); ++c) {
    std::mt19937_64 rng(derive_seed(7, "distances", c));
    const auto xs = testing::discretized_gaussian(rng, n, cases[c].mean, cases[c].sd, ring.dist_bound);
    double chi = 0;
    for (auto x : xs) chi += static_cast<double>(apply(cases[c].f, x));
    chi /= static_cast<double>(cases[c].m);
    const auto enc = encrypt_all(be, xs);
    int off = 0;
    for (std::uint64_t run = 0; run < 1000; ++run) {
      const CoinSpec spec{cases[c].f, cases[c].m, derive_seed(7, "run", c * 1000 + run)};
      const double est = static_cast<double>(he::decrypt(kp.sk, prob_avg(be, *tables, enc, spec)));
      off += std::abs(est - chi) > 0.5 * chi ? 1 : 0;
    }
    const double bound = 2 * std::exp(-chi / 12) + 0.01;
    const double frac = off / 1000.0;
    const bool ok = chi >= 30 && frac <= bound;
    o.pass = o.pass && ok;
    o.detail += fmt("chi=%.1f tail %.3f <= %.3f; ", chi, frac, bound);
  }
  return o;
}

// 8. sigma* within [sigma/sqrt2, 3 sigma/sqrt2] on 500 digit instances.
Outcome sigma_sandwich() {
  const RingParams ring = select_ring_params(100, 2, 569);
  const auto kp = he::keygen(ring, 8);
  const he::MockBackend be(kp.pk);
  const auto tables = named_tables(ring);
  const std::uint64_t p = ring.coord_bound;
  std::mt19937_64 rng(derive_seed(8, "sandwich", 0));
  int violations = 0;
  for (int i = 0; i < 500; ++i) {
    const std::uint64_t mu = rng() % p;
    const std::uint64_t musq = mu * mu;
    const std::uint64_t mu2 = musq + rng() % (p * p - musq);
    const std::uint64_t var = mu2 - musq;
    const DigitPair a = base_p_decompose(mu2, ring);
    const DigitPair b = base_p_decompose(musq, ring);
    const SigmaDigits sd{be.encrypt(a.low), be.encrypt(a.high), be.encrypt(b.low), be.encrypt(b.high)};
    const std::uint64_t s = he::decrypt(kp.sk, estimate_sigma(be, *tables, sd));
    // sigma^2 / 2 <= s^2 <= 9 sigma^2 / 2, exact in integers
    violations += var <= 2 * s * s && 2 * s * s <= 9 * var ? 0 : 1;
  }
  return {violations == 0, fmt("%d violations in 500 instances (grid 100)", violations)};
}

// 9. kappa in (k/2, 3k/2) on exactly discretized Gaussian distances.
Outcome kappa_concentration() {
  const std::uint64_t n = 569;
  const RingParams ring = select_ring_params(100, 2, n);
  const ProtocolParams pp = make_protocol_params(ring, 13, 5, 9);
  // Quantile placement: the empirical distribution is the discretized Gaussian.
  const double mean = 100;
  const double sd = 30;
  std::vector<std::uint64_t> dists(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = phi_inverse((static_cast<double>(i) + 0.5) / static_cast<double>(n));
    dists[i] = static_cast<std::uint64_t>(std::clamp(std::round(mean + sd * z), 0.0, double(ring.dist_bound)));
  }
  std::vector<std::uint8_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i % 2;
  const auto db = testing::database_from_distances(dists, labels);
  const std::vector<std::uint64_t> q{0, 0};
  std::vector<std::uint64_t> kappas(200);
  parallel_for(kappas.size(), [&](std::size_t run) { kappas[run] = trapdoor::kappa_of_run(db, q, pp, derive_seed(9, "run", run)); });
  const auto in_band = std::count_if(kappas.begin(), kappas.end(), [](std::uint64_t k) { return k > 6 && k < 20; });
  std::vector<std::uint64_t> sorted = kappas;
  std::sort(sorted.begin(), sorted.end());
  const double frac = static_cast<double>(in_band) / 200.0;
  return {frac >= 0.85, fmt("kappa in (6,20) in %.1f%% of 200 runs (need >= 85%%); kappa quartiles %llu/%llu/%llu, "
                            "exact kappa %llu, SD to Gaussian %.4f",
                            100 * frac, static_cast<unsigned long long>(sorted[50]),
                            static_cast<unsigned long long>(sorted[100]), static_cast<unsigned long long>(sorted[150]),
                            static_cast<unsigned long long>(std::count_if(dists.begin(), dists.end(), [&](std::uint64_t d) {
                              return static_cast<double>(d) < mean + static_cast<double>(pp.z_k) * sd;
                            })),
                            gaussian_sd_diagnostic(dists))};
}

// 10. is_smaller against plaintext < on every in-range pair for p = 23.
Outcome comparator_oracle() {
  const RingParams ring = ring_with_modulus(23);
  const auto kp = he::keygen(ring, 10);
  const he::MockBackend be(kp.pk);
  const auto tables = named_tables(ring);
  int checked = 0;
  int wrong = 0;
  for (std::uint64_t x = 0; x <= ring.dist_bound; ++x) {
    for (std::uint64_t y = 0; y <= ring.dist_bound; ++y) {
      const std::uint64_t want = x < y ? 1 : 0;
      const he::Cipher cx = be.encrypt(x);
      const he::Cipher cy = be.encrypt(y);
      wrong += he::decrypt(kp.sk, is_smaller(be, *tables, cx, cy)) == want ? 0 : 1;
      wrong += he::decrypt(kp.sk, is_smaller(be, *tables, cx, y)) == want ? 0 : 1;
      wrong += he::decrypt(kp.sk, is_smaller(be, *tables, x, cy)) == want ? 0 : 1;
      checked += 3;
    }
  }
  return {wrong == 0, fmt("%d mismatches over %d comparisons on [0, %llu]^2", wrong, checked,
                          static_cast<unsigned long long>(ring.dist_bound))};
}

// Counts messages and bytes on the client side of a transport.
class CountingTransport final : public io::Transport {
 public:
  explicit CountingTransport(io::Transport& inner) : inner_(inner) {}
  void send(std::span<const std::uint8_t> m) override {
    ++sent;
    sent_bytes += m.size();
    inner_.send(m);
  }
  std::optional<std::vector<std::uint8_t>> receive() override {
    auto m = inner_.receive();
    if (m) {
      ++received;
      received_bytes += m->size();
    }
    return m;
  }
  void close() override { inner_.close(); }

  std::size_t sent = 0, received = 0, sent_bytes = 0, received_bytes = 0;

 private:
  io::Transport& inner_;
};

struct RoundTrip {
  std::size_t sent, received, sent_bytes, received_bytes;
};

RoundTrip one_query(std::uint64_t n) {
  const GridDataset full = wdbc_grid(100);
  LabeledDatabase db;
  for (std::uint64_t i = 0; i < n; ++i) {
    db.points.push_back(full.data.points[i]);
    db.labels.push_back(full.data.labels[i]);
  }
  const ProtocolParams pp = make_protocol_params(select_ring_params(100, 2, n), 13, 5, 11);
  auto [client, server] = io::make_loopback_pair();
  auto served = std::async(std::launch::async, [&, s = server.get()] { return io::run_server(*s, db, pp); });
  CountingTransport counted(*client);
  const auto& q = full.data.points[n % full.size()];
  try {
    (void)io::run_client(counted, q, pp);
  } catch (...) {
    client->close();
    served.wait();
    throw;
  }
  client->close();
  served.get();
  return {counted.sent, counted.received, counted.sent_bytes, counted.received_bytes};
}

// 11. One message each way, sizes independent of n, codec round trip.
Outcome protocol_round_trip() {
  const RoundTrip a = one_query(50);
  const RoundTrip b = one_query(569);
  const bool shape = a.sent == 1 && a.received == 1 && b.sent == 1 && b.received == 1 &&
                     a.sent_bytes == b.sent_bytes && a.received_bytes == b.received_bytes;

  std::mt19937_64 rng(derive_seed(11, "codec", 0));
  int mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const RingParams ring = select_ring_params(2 + rng() % 400, 1 + static_cast<std::uint32_t>(rng() % 4), 1 + rng() % 1000);
    const he::KeyPair kp = he::keygen(ring, rng());
    const he::MockBackend be(kp.pk);
    auto cipher = [&] {
      he::Cipher c = be.encrypt(rng() % ring.modulus);
      for (std::uint64_t d = rng() % 4; d > 0; --d) c = be.mul(c, be.encrypt(rng() % ring.modulus));
      return c;
    };
    io::Message msg;
    switch (rng() % 3) {
      case 0: {
        io::QueryMessage qm;
        qm.ring = ring;
        qm.security_bits = static_cast<std::uint16_t>(rng());
        qm.pk = kp.pk.key_id;
        for (std::uint32_t d = 0; d < ring.dim; ++d) qm.enc_q.push_back(cipher());
        msg = qm;
        break;
      }
      case 1: {
        io::ResponseMessage rm;
        for (std::uint64_t k = 0; k < 1 + 2 * (rng() % 5); ++k) rm.enc_class.push_back(cipher());
        msg = rm;
        break;
      }
      default: {
        std::string text(rng() % 40, ' ');
        for (auto& ch : text) ch = static_cast<char>(rng() % 256);
        msg = io::ErrorMessage{static_cast<std::uint16_t>(rng()), text};
      }
    }
    mismatches += io::decode_message(io::encode_message(msg)) == msg ? 0 : 1;
  }
  return {shape && mismatches == 0,
          fmt("n=50: %zu/%zu msgs %zu/%zu bytes; n=569: %zu/%zu msgs %zu/%zu bytes; codec %d/1000 mismatches", a.sent,
              a.received, a.sent_bytes, a.received_bytes, b.sent, b.received, b.sent_bytes, b.received_bytes,
              mismatches)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::pair<const char*, std::function<Outcome()>>> criteria = {
      {1, {"plaintext kNN baseline", plain_baseline}},
      {2, {"secure-path accuracy", secure_accuracy}},
      {3, {"depth constancy in n", depth_constancy}},
      {4, {"gate linearity in n", gate_linearity}},
      {5, {"interpolation size bound", interpolation_size}},
      {6, {"coin toss unbiasedness", coin_unbiased}},
      {7, {"ProbAvg concentration", probavg_concentration}},
      {8, {"sigma sandwich", sigma_sandwich}},
      {9, {"kappa concentration", kappa_concentration}},
      {10, {"exhaustive comparator", comparator_oracle}},
      {11, {"protocol round trip", protocol_round_trip}},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& [id, c] : criteria) {
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = c.second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s criterion %d (%s): %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, c.first, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
