#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "dice/dml.hpp"
#include "dice/encoder.hpp"
#include "dice/matrix.hpp"
#include "dice/nuisance.hpp"
#include "json.hpp"

namespace dice {

struct SimConfig {
  size_t n = 5000;
  size_t feature_dim = 256;
  size_t latent_dim = 8;
  std::vector<double> tau_grid{-0.30, -0.20, -0.10, 0.0, 0.10, 0.20, 0.30};
  int reps_per_tau = 10;
  double leakage_strength = 0.5;
  double snr = 1.0;
  double treated_frac_target = 0.19;
  double artifact_noise_std = 0.05;
  // structural knobs of the synthetic features
  size_t leak_dim = 5;
  double leak_mix_norm = 3.5;        // scale of the per-sample mixing weights
  double leak_mix_spread = 0.3;      // confounder dependence of the mixing weights
  double confounding_strength = 2.0; // slope of the propensity index in u
  double base_noise_std = 0.1;
  uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const SimConfig& c);
SimConfig sim_config_from_json(const nlohmann::json& j, const std::string& path = "$");

struct SimDataset {
  FeatureMatrix z_leaky, z_cf, z_base;
  FeatureMatrix u;     // latent confounders, oracle only
  FeatureMatrix leak;  // per-sample leakage vector U w_mix, before the strength factor
  std::vector<double> t, y;
  std::vector<double> propensity;  // true p_i
  double tau_true = 0.0;
};

SimDataset generate(const SimConfig& config, double tau, uint64_t rep_seed);

enum class Method { naive_ols, dml_original, dml_dice, dml_oracle };
std::string method_name(Method m);
Method method_from_name(const std::string& s);

struct GridOptions {
  std::vector<Method> methods{Method::naive_ols, Method::dml_original, Method::dml_dice};
  EncoderConfig encoder;
  LearnerSpec learner;
  int folds = 5;
};

struct CellRecord {
  double tau = 0.0;
  int rep = 0;
  std::string method;
  double tau_hat = 0.0, se = 0.0, bias = 0.0, y_r2 = 0.0, t_r2 = 0.0;
  double delta_norm = 0.0;  // dice only: eval clean difference norm
  bool ok = true;
  std::string error;
};

struct MethodAggregate {
  std::string method;
  std::vector<double> tau;
  std::vector<double> mean_bias, rmse, var;  // per tau
  std::vector<int> count;
  double avg_abs_bias = 0.0, avg_rmse = 0.0;
  double rmse_reduction_pct = 0.0;  // vs dml_original
  int failed = 0;
};

struct SimulationReport {
  std::vector<CellRecord> records;
  std::vector<MethodAggregate> aggregates;
  const MethodAggregate* find(const std::string& method) const;
  std::string to_csv() const;
  nlohmann::json aggregate_json() const;
};

// one estimate on one dataset
CellRecord estimate_cell(const SimDataset& data, Method m, const GridOptions& opt, uint64_t seed);

SimulationReport run_grid(const SimConfig& config, const GridOptions& opt);
std::vector<MethodAggregate> aggregate(const std::vector<CellRecord>& records,
                                       const std::vector<Method>& methods);

struct TstatSummary {
  std::string method;
  std::vector<double> tstats;
  double std = 0.0;
  double frac_within_196 = 0.0;
  int invalid = 0;
};

struct TstatReport {
  std::vector<CellRecord> records;
  std::vector<TstatSummary> summaries;
  const TstatSummary* find(const std::string& method) const;
  std::string samples_csv() const;
  nlohmann::json summary_json() const;
};

TstatSummary summarize_tstats(const std::string& method, const std::vector<CellRecord>& recs);
TstatReport tstat_study(const SimConfig& config, int reps, const GridOptions& opt);

struct AblationRow {
  std::string configuration;
  double rmse = 0.0, y_r2 = 0.0, t_r2 = 0.0, mean_delta_norm = 0.0, raw_delta_norm = 0.0;
  int reps = 0;
};

struct AblationOptions {
  EncoderConfig encoder;
  LearnerSpec learner;
  int folds = 5;
  int reps = 3;
  double tau = 0.0;
};

std::vector<AblationRow> ablation(const SimConfig& config, const AblationOptions& opt);
std::string ablation_csv(const std::vector<AblationRow>& rows);
nlohmann::json ablation_json(const std::vector<AblationRow>& rows);

}  // namespace dice
