#pragma once
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "dice/encoder.hpp"
#include "dice/nuisance.hpp"
#include "dice/simulate.hpp"
#include "dice/skintone.hpp"
#include "json.hpp"

namespace dice::cli {

struct GlobalFlags {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<uint64_t> seed;
  std::optional<int> threads;
  std::string format = "json";
};

struct RunConfig {
  uint64_t seed = 0;
  int threads = 1;
  SimConfig simulation;
  EncoderConfig encoder;
  LearnerSpec learner;
  std::vector<Method> methods{Method::naive_ols, Method::dml_original, Method::dml_dice};
  int folds = 5;
  int tstat_reps = 100;
  int ablation_reps = 3;
  double ablation_tau = 0.0;
  nlohmann::json inputs = nlohmann::json::object();  // named file paths
  ShiftOptions shift;
  ExtendOptions extend;

  nlohmann::json to_json() const;
};

RunConfig desk_defaults();
RunConfig load_run_config(const GlobalFlags& g);

// command-specific extras
struct FileArgs {
  std::string orig, cf, table, features, manifest, image, bbox, encoder, method = "dml";
  bool extended = false;
};

// records per-stage timings; the current stage name is attached to failures
class Report {
 public:
  explicit Report(std::string command);
  template <class F>
  auto stage(const std::string& name, F&& f) {
    current_ = name;
    auto t0 = std::chrono::steady_clock::now();
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      finish(name, t0);
    } else {
      auto r = f();
      finish(name, t0);
      return r;
    }
  }
  const std::string& current_stage() const { return current_; }
  nlohmann::json json;

 private:
  void finish(const std::string& name, std::chrono::steady_clock::time_point t0);
  std::string current_;
};

// files are written under a staging directory and moved on commit
class Output {
 public:
  explicit Output(const std::string& dir);
  ~Output();
  std::string path(const std::string& name) const;  // staging path
  std::string final_path(const std::string& name) const;
  void write(const std::string& name, const std::string& content);
  void commit();
  std::vector<std::string> files;

 private:
  std::string dir_, stage_;
  bool committed_ = false;
};

std::string git_blob_sha1(const std::string& content);

int cmd_simulate(const GlobalFlags& g, Report& rep);
int cmd_tstats(const GlobalFlags& g, Report& rep);
int cmd_generate(const GlobalFlags& g, Report& rep, double tau, int rep_index);
int cmd_train_encoder(const GlobalFlags& g, const FileArgs& a, Report& rep);
int cmd_estimate(const GlobalFlags& g, const FileArgs& a, Report& rep);
int cmd_ablate(const GlobalFlags& g, Report& rep);
int cmd_pairs(const GlobalFlags& g, const FileArgs& a, Report& rep);
int cmd_ita(const GlobalFlags& g, const FileArgs& a, Report& rep);

}  // namespace dice::cli
