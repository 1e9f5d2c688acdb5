// Copyright 2026 The danas Authors
// SPDX-License-Identifier: Apache-2.0

#include <fmt/format.h>

#include "json.hpp"

#include "danas/cli/commands.hpp"
#include "danas/common/error.hpp"
#include "danas/dataspace/gamma.hpp"
#include "danas/engine/rundir.hpp"

namespace danas::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<fs::path> write_report(const fs::path& run_dir, const fs::path& out_dir) {
  std::vector<std::string> missing;
  for (const char* f : {engine::kConfigFile, engine::kGenotypeFile, engine::kGammaFile, engine::kMetricsFile}) {
    if (!fs::is_regular_file(run_dir / f)) missing.push_back(f);
  }
  const bool have_metrics = fs::is_regular_file(run_dir / engine::kMetricsFile);
  const json metrics = have_metrics ? engine::read_metrics(run_dir) : json::object();
  if (have_metrics) {
    if (!metrics.contains("search")) missing.push_back("metrics.json:search");
    if (!metrics.contains("evaluation")) missing.push_back("metrics.json:evaluation (run `danas train`)");
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw ConfigError("incomplete run in " + run_dir.string() + "; missing: " + list);
  }

  const json& search = metrics.at("search");
  const json& eval = metrics.at("evaluation");
  const bool data_aware = metrics.value("data_aware", true);
  const json sel = eval.at("data_config");
  const std::string config = fmt::format("{}/{}/{}", sel[0].get<int>(), sel[1].get<int>(), sel[2].get<int>());
  const std::string early = search.at("early_stop_epoch").is_null() ? "" : search.at("early_stop_epoch").dump();
  std::string model = fs::absolute(run_dir).lexically_normal().filename().string();
  if (model.empty()) model = fs::absolute(run_dir).lexically_normal().parent_path().filename().string();
  const auto params = eval.at("parameter_count").get<std::size_t>();
  const double accuracy = eval.at("accuracy").get<double>();
  const std::size_t epochs = search.at("train_loss").size();

  fs::create_directories(out_dir);
  std::vector<fs::path> written;

  const fs::path csv = out_dir / "report.csv";
  engine::write_file(csv, fmt::format("model,data_aware,data_config,parameters,accuracy,search_epochs,early_stop_epoch\n"
                                      "{},{},{},{},{},{},{}\n",
                                      model, data_aware, config, params, accuracy, epochs, early));
  written.push_back(csv);

  std::string md = "| Model | Data aware | Data config | Parameters | Accuracy |\n|---|---|---|---:|---:|\n";
  md += fmt::format("| {} | {} | {} | {} | {:.2f}% |\n", model, data_aware, config, params, 100.0 * accuracy);
  md += "\n| Class | Clips | Accuracy |\n|---|---:|---:|\n";
  std::string per_class = "class,count,correct,accuracy\n";
  for (const json& c : eval.at("per_class")) {
    md += fmt::format("| {} | {} | {:.2f}% |\n", c.at("class").get<std::string>(), c.at("count").get<std::size_t>(),
                      100.0 * c.at("accuracy").get<double>());
    per_class += fmt::format("{},{},{},{}\n", c.at("class").get<std::string>(), c.at("count").get<std::size_t>(),
                             c.at("correct").get<std::size_t>(), c.at("accuracy").get<double>());
  }
  const fs::path md_path = out_dir / "report.md";
  engine::write_file(md_path, md);
  written.push_back(md_path);
  const fs::path pc_path = out_dir / "per_class.csv";
  engine::write_file(pc_path, per_class);
  written.push_back(pc_path);

  // Long form for plotting: one row per config per epoch.
  std::string traj = "epoch,window,hop,mels,weight\n";
  for (const data::GammaRow& r : data::read_gamma_csv(run_dir / engine::kGammaFile)) {
    traj += fmt::format("{},{},{},{},{}\n", r.epoch, r.config.window, r.config.hop, r.config.mels, r.weight);
  }
  const fs::path traj_path = out_dir / "gamma_trajectory.csv";
  engine::write_file(traj_path, traj);
  written.push_back(traj_path);
  return written;
}

}  // namespace danas::cli
