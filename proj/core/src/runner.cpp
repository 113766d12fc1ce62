#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "fedsim/config.hpp"
#include "fedsim/errors.hpp"

namespace fedsim {

using nlohmann::json;

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << content;
}

json null_or(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

json run_summary_entry(const RunPlan& plan, const RunResult& result,
                       const std::string& csv_name) {
  json e;
  e["id"] = plan.run_id;
  e["label"] = plan.label;
  e["csv"] = csv_name;
  e["algorithm"] = algorithm_name(plan.config.algorithm);
  e["seed"] = plan.seed;
  e["local_steps"] = plan.config.algo.local_steps;
  e["participants"] = plan.config.participants;
  e["blocks"] = plan.config.algo.blocks;
  if (plan.config.c_percent) e["c_percent"] = *plan.config.c_percent;
  const double target = plan.config.accuracy_target.value_or(0.85);
  const auto rounds = rounds_to_target(result.trace, target);
  e["accuracy_target"] = target;
  e["rounds_to_target"] = rounds ? json(*rounds) : json(nullptr);
  const MetricRecord& last = result.trace.records.back();
  json fin;
  fin["round"] = last.round;
  fin["train_loss"] = null_or(last.train_loss);
  fin["test_loss"] = null_or(last.test_loss);
  fin["test_acc"] = null_or(last.test_acc);
  fin["recovery_err"] = null_or(last.recovery_err);
  fin["recovered_rank"] = null_or(last.recovered_rank);
  e["final"] = fin;
  return e;
}

// Table-2-style cells: one per distinct config (seed excluded), with the
// median rounds-to-target and mean final metrics across seeds.
json build_table(const std::vector<json>& entries) {
  std::map<std::string, std::vector<const json*>> groups;
  std::vector<std::string> order;
  for (const auto& e : entries) {
    std::string key = e["label"].get<std::string>();
    const auto pos = key.rfind("_seed");
    if (pos != std::string::npos) key.resize(pos);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(&e);
  }
  json cells = json::array();
  for (const auto& key : order) {
    const auto& members = groups[key];
    json cell;
    cell["config"] = key;
    cell["algorithm"] = (*members.front())["algorithm"];
    cell["local_steps"] = (*members.front())["local_steps"];
    cell["seeds"] = members.size();

    std::vector<double> rounds;
    double loss_sum = 0.0, acc_sum = 0.0;
    std::size_t loss_n = 0, acc_n = 0;
    for (const json* m : members) {
      const json& r = (*m)["rounds_to_target"];
      rounds.push_back(r.is_null() ? std::numeric_limits<double>::infinity()
                                   : r.get<double>());
      const json& fin = (*m)["final"];
      if (!fin["train_loss"].is_null()) {
        loss_sum += fin["train_loss"].get<double>();
        ++loss_n;
      }
      if (!fin["test_acc"].is_null()) {
        acc_sum += fin["test_acc"].get<double>();
        ++acc_n;
      }
    }
    std::sort(rounds.begin(), rounds.end());
    const double median = rounds[(rounds.size() - 1) / 2];  // lower median
    cell["median_rounds_to_target"] =
        std::isinf(median) ? json(nullptr) : json(median);
    cell["mean_final_train_loss"] =
        loss_n ? json(loss_sum / double(loss_n)) : json(nullptr);
    cell["mean_final_test_acc"] =
        acc_n ? json(acc_sum / double(acc_n)) : json(nullptr);
    cells.push_back(cell);
  }
  return cells;
}

int run_dlg(const RunManifest& manifest) {
  const DlgPlan& plan = *manifest.dlg;
  const ExposedRound exposed =
      run_exposure(plan.config, plan.seed, plan.attack_round, plan.victim);
  const ParamVector observed =
      expose_observed(plan.attack.target_kind, exposed);

  Simulation probe(plan.config, plan.seed);  // fresh sim just for data access
  const LocalDataset& victim_data = probe.data().clients[plan.victim];
  Rng rng = Rng::derive(plan.seed, 0xD16, plan.victim);
  const DlgResult result = dlg_attack(probe.model(), exposed.x_broadcast,
                                      observed, victim_data, plan.attack, rng);

  std::string csv = "step,objective,recon_error\n";
  char buf[128];
  for (std::size_t i = 0; i < result.objective_trace.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.6g,%.6g\n", i + 1,
                  result.objective_trace[i], result.error_trace[i]);
    csv += buf;
  }
  const std::string csv_name =
      "dlg_" + plan.algorithm_label + "_" + plan.run_id.substr(0, 8) + ".csv";
  write_file(std::filesystem::path(manifest.out_dir) / csv_name, csv);

  double data_norm = 0.0;
  for (const auto& row : victim_data.features) {
    for (double v : row) data_norm += v * v;
  }
  data_norm = std::sqrt(data_norm);

  json summary;
  summary["config"] = manifest.config_path;
  summary["mode"] = "dlg";
  json e;
  e["id"] = plan.run_id;
  e["algorithm"] = plan.algorithm_label;
  e["target"] = plan.attack.target_kind == DlgTarget::RawGradient
                    ? "raw_gradient"
                    : "averaged_delta";
  e["attack_steps"] = plan.attack.attack_steps;
  e["eta_d"] = plan.attack.eta_d;
  e["attack_round"] = plan.attack_round;
  e["victim"] = plan.victim;
  e["csv"] = csv_name;
  e["data_norm"] = data_norm;
  e["final_error"] = result.error_trace.back();
  e["final_relative_error"] =
      data_norm > 0.0 ? result.error_trace.back() / data_norm : 0.0;
  summary["runs"] = json::array({e});
  write_file(std::filesystem::path(manifest.out_dir) / "summary.json",
             summary.dump(2) + "\n");
  std::cout << "dlg " << plan.algorithm_label
            << ": final relative error " << e["final_relative_error"]
            << " -> " << csv_name << "\n";
  return 0;
}

}  // namespace

int run_manifest(const RunManifest& manifest, int parallel) {
  std::filesystem::create_directories(manifest.out_dir);

  try {
    if (manifest.dlg) return run_dlg(manifest);

    const std::size_t n = manifest.runs.size();
    std::vector<RunResult> results(n);
    std::vector<std::string> failures(n);

    // A sweep spreads whole runs across workers; a single run threads the
    // engine instead. Output bytes are identical either way.
    const bool across_runs = n > 1 && parallel > 1;
    const int engine_threads = across_runs ? 1 : std::max(1, parallel);

    std::atomic<std::size_t> next{0};
    const auto worker = [&]() {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        const RunPlan& plan = manifest.runs[i];
        try {
          results[i] = run_experiment(plan.config, plan.seed, engine_threads);
        } catch (const NumericalDivergence& e) {
          char buf[256];
          std::snprintf(buf, sizeof(buf),
                        "run %s diverged: %s (round %zu, client %zu, step %zu)",
                        plan.run_id.c_str(), e.what(), e.round(), e.client(),
                        e.step());
          failures[i] = buf;
        }
      }
    };
    if (across_runs) {
      std::vector<std::thread> pool;
      const std::size_t workers =
          std::min<std::size_t>(static_cast<std::size_t>(parallel), n);
      for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    } else {
      worker();
    }

    bool any_failed = false;
    std::vector<json> entries;
    for (std::size_t i = 0; i < n; ++i) {
      const RunPlan& plan = manifest.runs[i];
      if (!failures[i].empty()) {
        std::cerr << failures[i] << "\n";
        any_failed = true;
        continue;
      }
      const std::string csv_name =
          plan.label + "_" + plan.run_id.substr(0, 8) + ".csv";
      write_file(std::filesystem::path(manifest.out_dir) / csv_name,
                 trace_to_csv(results[i].trace));
      entries.push_back(run_summary_entry(plan, results[i], csv_name));
      const MetricRecord& last = results[i].trace.records.back();
      std::printf("%-40s final round %zu  train_loss %.6g  wall %.1fs\n",
                  plan.label.c_str(), last.round, last.train_loss,
                  last.wall_seconds);
    }

    if (!entries.empty()) {
      json summary;
      summary["config"] = manifest.config_path;
      summary["runs"] = entries;
      summary["table"] = build_table(entries);
      write_file(std::filesystem::path(manifest.out_dir) / "summary.json",
                 summary.dump(2) + "\n");
    }
    return any_failed ? 1 : 0;
  } catch (const NumericalDivergence& e) {
    std::cerr << "diverged: " << e.what() << " (round " << e.round()
              << ", client " << e.client() << ", step " << e.step() << ")\n";
    return 1;
  }
}

}  // namespace fedsim
