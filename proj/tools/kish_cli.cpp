// SPDX-License-Identifier: Apache-2.0
// kish: serve, query, evaluate, bench and diagnose from the command line.
#include <csignal>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include "CLI11.hpp"
#include "kish/data_eval.hpp"
#include "kish/errors.hpp"
#include "kish/protocol_io.hpp"
#include "kish/seed.hpp"

namespace {

using namespace kish;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string dataset = std::string(KISH_DATA_DIR) + "/wdbc.data";
  std::uint64_t grid = 100;
  std::uint64_t k = 13;
  std::uint32_t reps = 5;
  std::uint64_t seed = 1;
  std::string mode = "plain";
  std::string transport = "tcp";
  std::string listen = "127.0.0.1:7070";
  std::string connect = "127.0.0.1:7070";
  std::string out;
  unsigned threads = 0;
  std::string query;  // "x,y" grid cell
  std::vector<std::uint64_t> n_sweep;
  std::vector<std::uint64_t> grid_sweep;
};

struct Prepared {
  GridDataset grid;
  std::vector<Point2> projected;
  std::vector<std::uint8_t> labels;
};

Prepared prepare(const RunConfig& cfg) {
  const RawDataset raw = load_wdbc(cfg.dataset);
  Prepared p;
  p.projected = project_2d(raw).points;
  p.labels = raw.labels();
  p.grid = quantize(p.projected, p.labels, cfg.grid);
  std::cerr << "dataset: " << raw.rows.size() << " rows, " << raw.malignant_count() << " malignant, "
            << raw.benign_count() << " benign\n";
  return p;
}

ProtocolParams protocol_for(const RunConfig& cfg, std::uint64_t n) {
  return make_protocol_params(select_ring_params(cfg.grid, 2, n), cfg.k, cfg.reps, cfg.seed);
}

std::vector<std::uint64_t> parse_cell(const std::string& text, std::uint64_t grid) {
  std::vector<std::uint64_t> cell;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    std::size_t used = 0;
    std::uint64_t v = 0;
    try {
      v = std::stoull(part, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != part.size() || part.front() == '-') throw UsageError("query must be 'x,y' with integers");
    cell.push_back(v);
  }
  if (cell.size() != 2) throw UsageError("query must be 'x,y' with integers");
  for (auto c : cell) {
    if (c >= grid) throw UsageError("query coordinate outside [0, grid)");
  }
  return cell;
}

// Output stream for --out, or stdout when it is empty or "-".
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw Error("cannot write " + path);
    }
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

int cmd_serve(const RunConfig& cfg) {
  const Prepared p = prepare(cfg);
  const ProtocolParams pp = protocol_for(cfg, p.grid.size());
  if (cfg.transport == "stdio") {
    auto t = io::make_fd_transport(STDIN_FILENO, STDOUT_FILENO, false);
    const auto served = io::run_server(*t, p.grid.data, pp);
    std::cerr << "served " << served << " queries\n";
    return kExitOk;
  }
  if (cfg.transport != "tcp") throw UsageError("serve supports --transport tcp or stdio");
  io::TcpListener listener(cfg.listen);
  std::cerr << "listening on port " << listener.port() << '\n';
  for (;;) {
    auto t = listener.accept();
    try {
      const auto served = io::run_server(*t, p.grid.data, pp);
      std::cerr << "connection closed after " << served << " queries\n";
    } catch (const ProtocolError& e) {
      std::cerr << "connection dropped: " << e.what() << '\n';
    }
  }
}

int cmd_query(const RunConfig& cfg) {
  if (cfg.query.empty()) throw UsageError("query needs a grid cell 'x,y'");
  const auto cell = parse_cell(cfg.query, cfg.grid);
  // The client sizes its ring from the dataset row count; it reads nothing else.
  const RawDataset raw = load_wdbc(cfg.dataset);
  const ProtocolParams pp = protocol_for(cfg, raw.rows.size());

  std::uint64_t label = 0;
  if (cfg.transport == "loopback") {
    const Prepared p = prepare(cfg);
    auto [client, server] = io::make_loopback_pair();
    std::thread worker([&, s = std::move(server)] { io::run_server(*s, p.grid.data, pp); });
    try {
      label = io::run_client(*client, cell, pp);
    } catch (...) {
      client->close();
      worker.join();
      throw;
    }
    client->close();
    worker.join();
  } else if (cfg.transport == "stdio") {
    auto t = io::make_fd_transport(STDIN_FILENO, STDOUT_FILENO, false);
    label = io::run_client(*t, cell, pp);
    std::cerr << label << '\n';
    return kExitOk;
  } else if (cfg.transport == "tcp") {
    auto t = io::tcp_connect(cfg.connect);
    label = io::run_client(*t, cell, pp);
  } else {
    throw UsageError("unknown transport " + cfg.transport);
  }
  std::cout << label << '\n';
  return kExitOk;
}

int cmd_evaluate(const RunConfig& cfg) {
  EvalConfig ec;
  if (cfg.mode == "plain") {
    ec.mode = EvalMode::plain;
  } else if (cfg.mode == "secure") {
    ec.mode = EvalMode::secure;
  } else {
    throw UsageError("--mode must be plain or secure");
  }
  ec.k = cfg.k;
  ec.repetitions = cfg.reps;
  ec.seed = cfg.seed;
  const Prepared p = prepare(cfg);
  const EvalReport r = leave_one_out_f1(p.grid, ec);

  if (!cfg.out.empty()) {
    Output out(cfg.out);
    out.stream() << "index,label,prediction\n";
    for (std::size_t i = 0; i < r.predictions.size(); ++i) {
      out.stream() << i << ',' << int(p.grid.data.labels[i]) << ',' << int(r.predictions[i]) << '\n';
    }
  }
  std::uint64_t in_band = 0;
  for (auto kappa : r.kappa_samples) in_band += 2 * kappa > cfg.k && 2 * kappa < 3 * cfg.k ? 1 : 0;
  std::cout << "mode=" << cfg.mode << " grid=" << cfg.grid << " k=" << cfg.k << " F1=" << r.f1
            << " kappa_in_band=" << static_cast<double>(in_band) / static_cast<double>(r.kappa_samples.size())
            << " sd_gaussian=" << r.sd_gaussian << " mult_gates=" << r.metrics.mult_gates
            << " max_depth=" << r.metrics.max_depth << '\n';
  return kExitOk;
}

int cmd_bench(const RunConfig& cfg) {
  if (cfg.n_sweep.empty() && cfg.grid_sweep.empty()) throw UsageError("bench needs --n-sweep or --grid-sweep");
  const Prepared p = prepare(cfg);
  BenchConfig bc;
  bc.n_sweep = cfg.n_sweep;
  bc.grid_sweep = cfg.grid_sweep;
  bc.fixed_grid = cfg.grid;
  bc.k = cfg.k;
  bc.seed = cfg.seed;
  const auto rows = sweep_benchmarks(p.projected, p.labels, bc);
  Output out(cfg.out);
  write_bench_csv(out.stream(), rows);
  return kExitOk;
}

int cmd_diagnose(const RunConfig& cfg) {
  const Prepared p = prepare(cfg);
  std::vector<std::uint64_t> q;
  if (!cfg.query.empty()) {
    q = parse_cell(cfg.query, cfg.grid);
  } else {
    std::mt19937_64 rng(derive_seed(cfg.seed, "diagnose_query", 0));
    q = p.grid.data.points[std::uniform_int_distribution<std::size_t>(0, p.grid.size() - 1)(rng)];
  }
  const auto dist = distances_to(p.grid.data, q);
  Output out(cfg.out);
  out.stream() << "distance,count\n";
  for (const auto& [d, c] : distance_histogram(dist)) out.stream() << d << ',' << c << '\n';
  std::cerr << "query=" << q[0] << ',' << q[1] << " sd_gaussian=" << gaussian_sd_diagnostic(dist) << '\n';
  return kExitOk;
}

void add_common(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--dataset", cfg.dataset, "WDBC file")->capture_default_str();
  cmd->add_option("--grid", cfg.grid, "grid size g")->capture_default_str()->check(CLI::Range(2, 1 << 20));
  cmd->add_option("--k", cfg.k, "neighbours")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--reps", cfg.reps, "odd number of repetitions")->capture_default_str();
  cmd->add_option("--seed", cfg.seed, "base seed")->capture_default_str();
  cmd->add_option("--threads", cfg.threads, "worker cap, 0 = all cores")->capture_default_str();
  cmd->add_option("--out", cfg.out, "output file (default stdout)");
}

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGPIPE, SIG_IGN);

  RunConfig cfg;
  CLI::App app{"k-ish nearest neighbour classification over a mock HE backend"};
  app.require_subcommand(1);

  auto* serve = app.add_subcommand("serve", "answer encrypted queries");
  auto* query = app.add_subcommand("query", "classify one grid cell");
  auto* evaluate = app.add_subcommand("evaluate", "leave-one-out F1");
  auto* bench = app.add_subcommand("bench", "gate and depth sweeps as CSV");
  auto* diagnose = app.add_subcommand("diagnose", "distance histogram and Gaussian distance");
  for (auto* cmd : {serve, query, evaluate, bench, diagnose}) add_common(cmd, cfg);

  for (auto* cmd : {serve, query}) {
    cmd->add_option("--transport", cfg.transport, "tcp | stdio | loopback")
        ->capture_default_str()
        ->check(CLI::IsMember({"tcp", "stdio", "loopback"}));
  }
  serve->add_option("--listen", cfg.listen, "host:port")->capture_default_str();
  query->add_option("--connect", cfg.connect, "host:port")->capture_default_str();
  query->add_option("cell", cfg.query, "grid cell x,y")->required();
  evaluate->add_option("--mode", cfg.mode, "plain | secure")->capture_default_str()->check(CLI::IsMember({"plain", "secure"}));
  bench->add_option("--n-sweep", cfg.n_sweep, "database sizes at --grid")->delimiter(',');
  bench->add_option("--grid-sweep", cfg.grid_sweep, "grid sizes at full n")->delimiter(',');
  diagnose->add_option("cell", cfg.query, "grid cell x,y (default: a seeded dataset point)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }
  set_thread_limit(cfg.threads);

  try {
    if (*serve) return cmd_serve(cfg);
    if (*query) return cmd_query(cfg);
    if (*evaluate) return cmd_evaluate(cfg);
    if (*bench) return cmd_bench(cfg);
    return cmd_diagnose(cfg);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParameterError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
