#include <cstring>

#include "dice/encoder.hpp"
#include "dice/errors.hpp"
#include "dice/io.hpp"

namespace dice {

nlohmann::json to_json(const EncoderConfig& c) {
  const auto& w = c.loss_weights;
  return {{"input_dim", c.input_dim},
          {"hidden_dims", c.hidden_dims},
          {"dropout_rate", c.dropout_rate},
          {"batch_norm", c.batch_norm},
          {"alpha_proj", c.alpha_proj},
          {"epsilon_norm", c.epsilon_norm},
          {"loss_weights",
           {{"lambda_y", w.y}, {"lambda_adv", w.adv}, {"lambda_cons", w.cons},
            {"lambda_var", w.var}, {"lambda_ctr", w.ctr}}},
          {"gamma_var", c.gamma_var},
          {"margin_ctr", c.margin_ctr},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"grl_max", c.grl_max},
          {"grl_warmup_epochs", c.grl_warmup_epochs},
          {"label_mode", c.label_mode},
          {"log_eval", c.log_eval},
          {"seed", c.seed}};
}

namespace {

template <class T>
T typed(const nlohmann::json& v, const std::string& path) {
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(path + ": wrong type");
  }
}

}  // namespace

EncoderConfig encoder_config_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + ": expected object");
  EncoderConfig c;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const std::string p = path + "." + k;
    const auto& v = it.value();
    if (k == "input_dim") c.input_dim = typed<size_t>(v, p);
    else if (k == "hidden_dims") c.hidden_dims = typed<std::vector<size_t>>(v, p);
    else if (k == "dropout_rate") c.dropout_rate = typed<double>(v, p);
    else if (k == "batch_norm") c.batch_norm = typed<bool>(v, p);
    else if (k == "alpha_proj") c.alpha_proj = typed<double>(v, p);
    else if (k == "epsilon_norm") c.epsilon_norm = typed<double>(v, p);
    else if (k == "gamma_var") c.gamma_var = typed<double>(v, p);
    else if (k == "margin_ctr") c.margin_ctr = typed<double>(v, p);
    else if (k == "epochs") c.epochs = typed<int>(v, p);
    else if (k == "batch_size") c.batch_size = typed<size_t>(v, p);
    else if (k == "lr") c.lr = typed<double>(v, p);
    else if (k == "grl_max") c.grl_max = typed<double>(v, p);
    else if (k == "grl_warmup_epochs") c.grl_warmup_epochs = typed<double>(v, p);
    else if (k == "label_mode") c.label_mode = typed<std::string>(v, p);
    else if (k == "log_eval") c.log_eval = typed<bool>(v, p);
    else if (k == "seed") c.seed = typed<uint64_t>(v, p);
    else if (k == "loss_weights") {
      if (!v.is_object()) throw ConfigError(p + ": expected object");
      for (auto w = v.begin(); w != v.end(); ++w) {
        const std::string q = p + "." + w.key();
        double x = typed<double>(w.value(), q);
        if (!(x >= 0.0)) throw ConfigError(q + ": must be >= 0");
        if (w.key() == "lambda_y") c.loss_weights.y = x;
        else if (w.key() == "lambda_adv") c.loss_weights.adv = x;
        else if (w.key() == "lambda_cons") c.loss_weights.cons = x;
        else if (w.key() == "lambda_var") c.loss_weights.var = x;
        else if (w.key() == "lambda_ctr") c.loss_weights.ctr = x;
        else throw ConfigError(q + ": unknown field");
      }
    } else {
      throw ConfigError(p + ": unknown field");
    }
  }
  try {
    EncoderConfig probe = c;
    if (probe.input_dim == 0) probe.input_dim = 1;  // filled from data later
    probe.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return c;
}

namespace {

template <class T>
void put(std::string& s, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  s.append(b, sizeof(T));
}

template <class T>
T get(const std::string& s, size_t& off) {
  if (off + sizeof(T) > s.size()) throw DataError("truncated encoder file");
  T v;
  std::memcpy(&v, s.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

void put_vec(std::string& s, const Eigen::VectorXd& v) {
  put<uint64_t>(s, static_cast<uint64_t>(v.size()));
  s.append(reinterpret_cast<const char*>(v.data()), static_cast<size_t>(v.size()) * sizeof(double));
}

Eigen::VectorXd get_vec(const std::string& s, size_t& off, size_t expect, const char* what) {
  auto n = get<uint64_t>(s, off);
  if (n != expect)
    throw DataError(std::string("encoder file: ") + what + " length " + std::to_string(n) +
                    " != expected " + std::to_string(expect));
  if (off + n * sizeof(double) > s.size()) throw DataError("truncated encoder file");
  Eigen::VectorXd v(n);
  std::memcpy(v.data(), s.data() + off, n * sizeof(double));
  off += n * sizeof(double);
  return v;
}

}  // namespace

// "DCEE" | u32 version | u64 json length | config json | theta | running | y scale
void save_encoder(const std::string& path, const EncoderState& st) {
  std::string s("DCEE", 4);
  put<uint32_t>(s, 1);
  std::string cfg = to_json(st.config).dump();
  put<uint64_t>(s, cfg.size());
  s += cfg;
  put<int32_t>(s, st.epoch);
  put<double>(s, st.y_mean);
  put<double>(s, st.y_std);
  put_vec(s, st.theta);
  put_vec(s, st.running);
  write_file_atomic(path, s);
}

EncoderState load_encoder(const std::string& path) {
  std::string s = read_text_file(path);
  if (s.size() < 4 || s.compare(0, 4, "DCEE") != 0) throw DataError(path + ": bad magic, expected DCEE");
  size_t off = 4;
  auto ver = get<uint32_t>(s, off);
  if (ver != 1) throw DataError(path + ": unsupported encoder version " + std::to_string(ver));
  auto len = get<uint64_t>(s, off);
  if (off + len > s.size()) throw DataError(path + ": truncated config block");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(s.substr(off, len));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": corrupt config block");
  }
  off += len;
  EncoderState st = EncoderState::init(encoder_config_from_json(j, "$.encoder"));
  st.epoch = get<int32_t>(s, off);
  st.y_mean = get<double>(s, off);
  st.y_std = get<double>(s, off);
  st.theta = get_vec(s, off, st.layout.n_theta, "parameter");
  st.running = get_vec(s, off, st.layout.n_running, "running-stat");
  if (!st.theta.allFinite() || !st.running.allFinite()) throw DataError(path + ": non-finite parameters");
  return st;
}

}  // namespace dice
