#pragma once
#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "dice/matrix.hpp"
#include "dice/rng.hpp"
#include "json.hpp"

namespace dice {

struct LossWeights {
  double y = 10.0;
  double adv = 5.0;
  double cons = 0.5;
  double var = 5.0;
  double ctr = 3.0;
};

struct EncoderConfig {
  size_t input_dim = 0;
  std::vector<size_t> hidden_dims{128, 64};
  double dropout_rate = 0.1;
  bool batch_norm = true;
  double alpha_proj = 0.95;
  double epsilon_norm = 1e-8;
  LossWeights loss_weights;
  double gamma_var = 1.0;
  double margin_ctr = 0.5;
  int epochs = 30;
  size_t batch_size = 256;
  double lr = 1e-4;
  double grl_max = 1.0;
  double grl_warmup_epochs = 3.0;
  std::string label_mode = "treatment";  // or "constant"
  bool log_eval = true;                  // eval-mode delta norms every epoch
  uint64_t seed = 0;

  size_t embed_dim() const { return hidden_dims.empty() ? input_dim : hidden_dims.back(); }
  void validate() const;
};

nlohmann::json to_json(const EncoderConfig& c);
EncoderConfig encoder_config_from_json(const nlohmann::json& j, const std::string& path = "$");

struct PairedDataset {
  FeatureMatrix z_orig, z_cf;
  std::vector<double> t, y;
  void validate() const;
};

// offsets into the flat parameter vector
struct LinearSlot {
  size_t w = 0, b = 0, in = 0, out = 0;
};
struct NormSlot {
  size_t gamma = 0, beta = 0, dim = 0;
  size_t run_mean = 0, run_var = 0;  // into running
};
struct Layout {
  std::vector<LinearSlot> enc;
  std::vector<NormSlot> norm;  // empty when batch_norm is off
  LinearSlot d1, d2, d3, dlin, h1, h2;
  size_t n_theta = 0, n_running = 0;
  size_t disc_begin = 0, disc_end = 0;  // discriminator parameter range
};
Layout make_layout(const EncoderConfig& c);

struct EncoderState {
  EncoderConfig config;
  Layout layout;
  Eigen::VectorXd theta;
  Eigen::VectorXd running;
  Eigen::VectorXd adam_m, adam_v;
  long adam_t = 0;
  int epoch = 0;
  double y_mean = 0.0, y_std = 1.0;

  static EncoderState init(const EncoderConfig& c);
};

enum class Mode { train, eval };

// train mode requires rows >= 2 and draws dropout masks from rng
FeatureMatrix forward(const EncoderState& s, const FeatureMatrix& x, Mode mode,
                      SeededRng* rng = nullptr);
Eigen::MatrixXd forward_d(const EncoderState& s, const Eigen::MatrixXd& x, Mode mode,
                          SeededRng* rng = nullptr);

struct Projected {
  Eigen::VectorXd z_clean, z_cf_clean;
};
Projected project_out(const Eigen::VectorXd& z, const Eigen::VectorXd& z_cf, double alpha,
                      double eps);

double variance_loss(const Eigen::MatrixXd& z, double gamma);
double grl_strength(const EncoderConfig& c, double fractional_epoch);
double cosine_lr(const EncoderConfig& c, int epoch);
// Sattolo: single-cycle permutation, so perm[i] != i
std::vector<size_t> derangement(size_t m, SeededRng& rng);

struct LossTerms {
  double adv = 0.0, cons = 0.0, var = 0.0, y = 0.0, ctr = 0.0;
  double total = 0.0;
  double mean_delta = 0.0, mean_clean_delta = 0.0;
};

struct BatchStats {
  std::vector<Eigen::VectorXd> mean, var;  // per norm layer, biased var
  size_t rows = 0;
};

struct PairedBatch {
  Eigen::MatrixXd z_orig, z_cf;
  Eigen::VectorXd t, y;  // y standardized
};

// One pass: losses and gradient of the composite objective. Encoder and
// head receive -grl * dL_adv on the adversarial path; discriminators the
// plain gradient. grad may be null.
LossTerms loss_and_grad(const EncoderState& s, const PairedBatch& b, const LossWeights& w,
                        double grl, SeededRng rng, Eigen::VectorXd* grad,
                        BatchStats* stats = nullptr);

struct TrainingRow {
  int epoch = 0;
  LossTerms loss;
  double mean_delta_norm = 0.0;   // eval-mode raw ||z - z'||
  double clean_delta_norm = 0.0;  // eval-mode ||z_clean - z'_clean||
  double grl = 0.0, lr = 0.0;
};

struct TrainingLog {
  std::vector<TrainingRow> rows;  // row 0 is the untrained snapshot
  double y_mean = 0.0, y_std = 1.0;
  nlohmann::json metadata;
  std::string to_csv() const;
};

struct TrainResult {
  EncoderState state;
  TrainingLog log;
};

TrainResult train(const EncoderConfig& config, const PairedDataset& data);

// per-sample project_out over eval-mode embeddings; returns z_clean
FeatureMatrix extract_clean(const EncoderState& s, const FeatureMatrix& z_orig,
                            const FeatureMatrix& z_cf, double alpha);

struct DeltaNorms {
  double raw = 0.0, clean = 0.0, embed_std = 0.0;
};
DeltaNorms delta_norms(const EncoderState& s, const FeatureMatrix& z_orig,
                       const FeatureMatrix& z_cf, double alpha);

// sets running norm statistics from one full pass over both arms
void calibrate_norm_stats(EncoderState& s, const FeatureMatrix& z_orig,
                          const FeatureMatrix& z_cf);

void save_encoder(const std::string& path, const EncoderState& s);
EncoderState load_encoder(const std::string& path);

}  // namespace dice
