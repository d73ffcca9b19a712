// swarmchain: run scenarios, fit density models, measure hash rates.
//
// Exit codes: 0 success, 1 runtime failure, 2 bad input.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "swarmchain/swarmchain.hpp"

namespace sc = swarmchain;
namespace fs = std::filesystem;

namespace {

int cmd_run(const std::string& scenario_path, std::optional<std::uint64_t> seed, std::optional<std::uint64_t> epochs,
            std::string out_dir) {
  auto scenario = sc::load_scenario(scenario_path);
  const auto run_seed = seed.value_or(scenario.seed);
  const auto run_epochs = epochs.value_or(scenario.epochs);
  if (out_dir.empty()) {
    const char* env = std::getenv("SWARMCHAIN_OUT");
    out_dir = env && *env ? env : "out";
  }

  sc::World world(scenario, run_seed);
  const auto traces = world.run(run_epochs);
  const auto files = sc::io::write_run(out_dir, world, traces);

  std::cout << "scenario " << scenario.name << " seed " << run_seed << " epochs " << run_epochs << '\n';
  std::cout << "tip " << sc::to_hex(world.state().tip) << " height " << world.state().height
            << (world.destroyed() ? " (destroyed)" : "") << '\n';
  if (!traces.empty()) {
    std::cout << "node  q  confirmed  spendable\n";
    for (const auto& q : traces.back().quality)
      std::cout << q.node.value << "  " << sc::io::num(q.q) << "  " << q.confirmed << "  " << q.spendable << '\n';
  }
  for (const auto& f : files) std::cout << "wrote " << f.string() << '\n';
  return 0;
}

int cmd_calibrate(const std::vector<std::string>& inputs, const std::string& out_path) {
  std::vector<sc::CalibrationPoint> points;
  for (const auto& p : inputs)
    for (const auto& c : sc::io::read_calibration_csv(p)) points.push_back(c);
  const auto model = sc::fit_density_models(points);

  nlohmann::json j;
  auto fit_json = [](const sc::LinearFit& f) {
    return nlohmann::json{{"intercept", f.intercept}, {"slope", f.slope}, {"r_squared", f.r_squared}};
  };
  if (model.planar) j["planar"] = fit_json(*model.planar);
  if (model.revolute) j["revolute"] = fit_json(*model.revolute);
  for (const auto& [ch, knots] : model.composite) {
    auto& arr = j["composite"][std::to_string(ch)];
    for (const auto& k : knots) arr.push_back({k.distance_m, k.points});
  }
  j["reference_channels"] = model.reference_channels;

  std::cout << "class,channels,x,points,model,rel_error\n";
  for (const auto& p : points) {
    sc::DataStamp s;
    s.data_type = sc::DataType::PointCloud;
    s.feature_class = p.feature_class;
    s.channels = p.channels;
    s.distance_m = p.x;
    if (p.feature_class == sc::FeatureClass::Planar) s.extent_m = p.x;
    const double fitted = sc::expected_point_count(model, s);
    std::cout << sc::to_string(p.feature_class) << ',' << p.channels << ',' << sc::io::num(p.x) << ','
              << sc::io::num(p.points) << ',' << sc::io::num(fitted) << ','
              << sc::io::num((fitted - p.points) / p.points) << '\n';
  }
  if (!out_path.empty()) {
    auto out = sc::io::open_out(out_path);
    out << j.dump(2) << '\n';
    std::cout << "wrote " << out_path << '\n';
  } else {
    std::cout << j.dump(2) << '\n';
  }
  return 0;
}

int cmd_bench(std::uint32_t difficulty, double duration, unsigned lanes, const std::string& latencies) {
  if (!latencies.empty()) {
    const auto rows = sc::analyze_latencies(sc::io::read_latency_csv(latencies));
    std::cout << "node_id,task,hash_rate,latency,ratio,sigma,outlier\n";
    for (const auto& r : rows) {
      std::cout << r.node_id << ',' << r.task << ',' << sc::io::num(r.hash_rate) << ',' << sc::io::num(r.latency)
                << ',' << sc::io::num(r.ratio) << ',' << (r.sigma ? sc::io::num(*r.sigma) : "") << ','
                << (r.outlier ? 1 : 0) << '\n';
    }
  }
  if (duration > 0.0) {
    const auto m = sc::measure_hash_rate(difficulty, duration, lanes);
    std::cout << "hash_rate " << sc::io::num(m.rate) << " h/s (" << m.hashes << " hashes in " << sc::io::num(m.seconds)
              << " s, " << m.lanes << " lane(s), best " << m.best_bits << " bits)\n";
    const double expected = std::ldexp(1.0, static_cast<int>(difficulty)) / std::max(m.rate, 1.0);
    std::cout << "expected time to a " << difficulty << "-bit proof: " << sc::io::num(expected) << " s\n";
  }
  return 0;
}

int cmd_fees(const std::vector<std::uint64_t>& sizes) {
  sc::io::write_fee_table(std::cout, sizes, sc::ChainConfig{});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"swarmchain: sensor-data sharing ledger for robot swarms"};
  app.require_subcommand(1);

  std::string scenario_path, out_dir;
  std::optional<std::uint64_t> seed, epochs;
  auto* run = app.add_subcommand("run", "simulate a scenario and write traces");
  run->add_option("--scenario", scenario_path, "scenario JSON file")->required();
  run->add_option("--seed", seed, "seed (default: the scenario's)");
  run->add_option("--epochs", epochs, "epochs to run (default: the scenario's)");
  run->add_option("--out", out_dir, "output directory (default: $SWARMCHAIN_OUT or ./out)");

  std::vector<std::string> cal_inputs;
  std::string cal_out;
  auto* cal = app.add_subcommand("calibrate", "fit density models from calibration CSV files");
  cal->add_option("--points", cal_inputs, "calibration CSV (feature_class,channels,x,points)")->required();
  cal->add_option("--out", cal_out, "write the model as JSON");

  std::uint32_t difficulty = 20;
  double duration = 2.0;
  unsigned lanes = 1;
  std::string latencies;
  auto* bench = app.add_subcommand("bench", "measure host hash rate and check latency consistency");
  bench->add_option("--difficulty", difficulty, "difficulty in leading zero bits")->check(CLI::Range(0, 256));
  bench->add_option("--duration", duration, "seconds of hashing (0 skips the measurement)")->check(CLI::NonNegativeNumber);
  bench->add_option("--lanes", lanes, "hashing threads")->check(CLI::PositiveNumber);
  bench->add_option("--latencies", latencies, "latency CSV (node_id,hash_rate,task,latency[,latency_std])");

  std::vector<std::uint64_t> sizes;
  auto* fees = app.add_subcommand("fees", "print the fee schedule");
  fees->add_option("sizes", sizes, "payload sizes in bytes")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run) return cmd_run(scenario_path, seed, epochs, out_dir);
    if (*cal) return cmd_calibrate(cal_inputs, cal_out);
    if (*bench) return cmd_bench(difficulty, duration, lanes, latencies);
    if (*fees) return cmd_fees(sizes);
  } catch (const sc::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    switch (e.code()) {
      case sc::Errc::ParseError:
      case sc::Errc::InsufficientCalibration:
      case sc::Errc::UnknownChannelCount:
        return 2;
      default:
        return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
