#include "commands.hpp"

#include <openssl/evp.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "dice/dml.hpp"
#include "dice/errors.hpp"
#include "dice/io.hpp"
#include "dice/parallel.hpp"
#include "dice/stats.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dice::cli {

namespace {

template <class T>
T typed(const json& v, const std::string& path) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(path + ": wrong type");
  }
}

ShiftOptions shift_from_json(const json& j, const std::string& path, ShiftOptions s) {
  if (!j.is_object()) throw ConfigError(path + ": expected object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string p = path + "." + it.key();
    const auto& k = it.key();
    const auto& v = it.value();
    if (k == "b_scale_lighter") s.b_scale_lighter = typed<double>(v, p);
    else if (k == "b_scale_darker") s.b_scale_darker = typed<double>(v, p);
    else if (k == "scales") {
      s.scales = typed<std::vector<double>>(v, p);
      if (s.scales.empty()) throw ConfigError(p + ": must not be empty");
    } else if (k == "base_gain") s.base_gain = typed<double>(v, p);
    else if (k == "use_mean") s.use_mean = typed<bool>(v, p);
    else throw ConfigError(p + ": unknown field");
  }
  return s;
}

ExtendOptions extend_from_json(const json& j, const std::string& path, ExtendOptions e) {
  if (!j.is_object()) throw ConfigError(path + ": expected object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string p = path + "." + it.key();
    const auto& k = it.key();
    const auto& v = it.value();
    if (k == "widen") e.widen = typed<double>(v, p);
    else if (k == "extend_down") e.extend_down = typed<double>(v, p);
    else if (k == "kernel") {
      e.kernel = typed<int>(v, p);
      if (e.kernel < 1 || e.kernel % 2 == 0) throw ConfigError(p + ": must be odd and >= 1");
    } else if (k == "sigma") {
      e.sigma = typed<double>(v, p);
      if (!(e.sigma > 0)) throw ConfigError(p + ": must be > 0");
    } else throw ConfigError(p + ": unknown field");
  }
  return e;
}

std::string num(double v) {
  if (!std::isfinite(v)) return "nan";
  char b[40];
  std::snprintf(b, sizeof b, "%.10g", v);
  return b;
}

std::string hash_file(const std::string& path) { return git_blob_sha1(read_text_file(path)); }

void echo(Report& rep, const RunConfig& c) { rep.json["config"] = c.to_json(); }

std::string input(const RunConfig& c, const std::string& flag, const std::string& key) {
  if (!flag.empty()) return flag;
  if (c.inputs.contains(key)) return c.inputs[key].get<std::string>();
  throw ConfigError("missing input '" + key + "' (flag --" + key + " or inputs." + key + ")");
}

struct Table {
  std::vector<double> t, y;
};

Table read_ty(const std::string& path) {
  CsvTable tab = read_csv_table(path);
  int ct = tab.column("t"), cy = tab.column("y");
  if (ct < 0 || cy < 0) throw DataError(path + ": needs columns 't' and 'y'");
  Table out;
  for (size_t i = 0; i < tab.rows.size(); ++i) {
    auto parse = [&](int c) {
      const std::string& f = tab.rows[i][c];
      try {
        size_t used = 0;
        double v = std::stod(f, &used);
        if (used != f.size() || !std::isfinite(v)) throw std::invalid_argument(f);
        return v;
      } catch (const std::exception&) {
        throw DataError(path + ": row " + std::to_string(i + 1) + ": bad number '" + f + "'");
      }
    };
    double t = parse(ct);
    if (t != 0.0 && t != 1.0)
      throw DataError(path + ": row " + std::to_string(i + 1) + ": treatment must be 0 or 1");
    out.t.push_back(t);
    out.y.push_back(parse(cy));
  }
  return out;
}

void track(Report& rep, const std::string& key, const std::string& path) {
  rep.json["inputs"][key] = {{"path", path}, {"sha1", hash_file(path)}};
}

}  // namespace

nlohmann::json RunConfig::to_json() const {
  json m = json::array();
  for (auto x : methods) m.push_back(method_name(x));
  return {{"seed", seed},
          {"threads", threads},
          {"simulation", dice::to_json(simulation)},
          {"encoder", dice::to_json(encoder)},
          {"learner", dice::to_json(learner)},
          {"methods", m},
          {"folds", folds},
          {"tstats", {{"reps", tstat_reps}}},
          {"ablation", {{"reps", ablation_reps}, {"tau", ablation_tau}}},
          {"inputs", inputs},
          {"skintone",
           {{"shift",
             {{"b_scale_lighter", shift.b_scale_lighter},
              {"b_scale_darker", shift.b_scale_darker},
              {"scales", shift.scales},
              {"base_gain", shift.base_gain},
              {"use_mean", shift.use_mean}}},
            {"extend",
             {{"widen", extend.widen},
              {"extend_down", extend.extend_down},
              {"kernel", extend.kernel},
              {"sigma", extend.sigma}}}}}};
}

RunConfig desk_defaults() {
  RunConfig c;
  c.encoder.epochs = 10;
  c.encoder.lr = 1e-3;
  c.encoder.log_eval = false;
  c.learner = learner_preset("rf");
  return c;
}

RunConfig load_run_config(const GlobalFlags& g) {
  RunConfig c = desk_defaults();
  if (!g.config_path.empty()) {
    json j;
    try {
      j = json::parse(read_text_file(g.config_path));
    } catch (const json::parse_error& e) {
      throw ConfigError(g.config_path + ": invalid JSON: " + e.what());
    } catch (const DataError& e) {
      throw ConfigError(e.what());
    }
    if (!j.is_object()) throw ConfigError("$: expected object");
    // seed first so nested blocks may still override their own
    if (j.contains("seed")) {
      c.seed = typed<uint64_t>(j["seed"], "$.seed");
      c.simulation.seed = c.encoder.seed = c.learner.seed = c.seed;
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      const std::string p = "$." + k;
      const auto& v = it.value();
      if (k == "seed") continue;
      if (k == "threads") c.threads = typed<int>(v, p);
      else if (k == "simulation") {
        json merged = dice::to_json(c.simulation);
        if (!v.is_object()) throw ConfigError(p + ": expected object");
        for (auto f = v.begin(); f != v.end(); ++f) merged[f.key()] = f.value();
        c.simulation = sim_config_from_json(merged, p);
      } else if (k == "encoder") {
        if (!v.is_object()) throw ConfigError(p + ": expected object");
        json merged = dice::to_json(c.encoder);
        for (auto f = v.begin(); f != v.end(); ++f) {
          if (!merged.contains(f.key())) throw ConfigError(p + "." + f.key() + ": unknown field");
          if (f.key() == "loss_weights" && f.value().is_object())
            for (auto w = f.value().begin(); w != f.value().end(); ++w)
              merged["loss_weights"][w.key()] = w.value();
          else
            merged[f.key()] = f.value();
        }
        c.encoder = encoder_config_from_json(merged, p);
      } else if (k == "learner") {
        uint64_t s = c.learner.seed;
        c.learner = learner_from_json(v, p);
        if (!(v.is_object() && v.contains("seed"))) c.learner.seed = s;
      } else if (k == "methods") {
        auto names = typed<std::vector<std::string>>(v, p);
        if (names.empty()) throw ConfigError(p + ": must not be empty");
        c.methods.clear();
        for (size_t i = 0; i < names.size(); ++i) {
          try {
            c.methods.push_back(method_from_name(names[i]));
          } catch (const ConfigError& e) {
            throw ConfigError(p + "[" + std::to_string(i) + "]: " + e.what());
          }
        }
      } else if (k == "folds") {
        c.folds = typed<int>(v, p);
        if (c.folds < 2) throw ConfigError(p + ": must be >= 2");
      } else if (k == "tstats") {
        if (!v.is_object()) throw ConfigError(p + ": expected object");
        for (auto f = v.begin(); f != v.end(); ++f) {
          if (f.key() == "reps") c.tstat_reps = typed<int>(f.value(), p + ".reps");
          else throw ConfigError(p + "." + f.key() + ": unknown field");
        }
      } else if (k == "ablation") {
        if (!v.is_object()) throw ConfigError(p + ": expected object");
        for (auto f = v.begin(); f != v.end(); ++f) {
          if (f.key() == "reps") {
            c.ablation_reps = typed<int>(f.value(), p + ".reps");
            if (c.ablation_reps < 1) throw ConfigError(p + ".reps: must be >= 1");
          } else if (f.key() == "tau") c.ablation_tau = typed<double>(f.value(), p + ".tau");
          else throw ConfigError(p + "." + f.key() + ": unknown field");
        }
      } else if (k == "inputs") {
        if (!v.is_object()) throw ConfigError(p + ": expected object");
        for (auto f = v.begin(); f != v.end(); ++f) {
          if (!f.value().is_string()) throw ConfigError(p + "." + f.key() + ": expected string");
          fs::path fp(f.value().get<std::string>());
          // relative to the config file
          if (fp.is_relative()) fp = fs::path(g.config_path).parent_path() / fp;
          c.inputs[f.key()] = fp.string();
        }
      } else if (k == "skintone") {
        if (!v.is_object()) throw ConfigError(p + ": expected object");
        for (auto f = v.begin(); f != v.end(); ++f) {
          if (f.key() == "shift") c.shift = shift_from_json(f.value(), p + ".shift", c.shift);
          else if (f.key() == "extend") c.extend = extend_from_json(f.value(), p + ".extend", c.extend);
          else throw ConfigError(p + "." + f.key() + ": unknown field");
        }
      } else {
        throw ConfigError(p + ": unknown field");
      }
    }
  }
  if (g.seed) {
    c.seed = *g.seed;
    c.simulation.seed = c.encoder.seed = c.learner.seed = c.seed;
  }
  if (g.threads) c.threads = *g.threads;
  if (c.threads < 0) throw ConfigError("$.threads: must be >= 0");
  set_num_threads(c.threads);
  return c;
}

Report::Report(std::string command) {
  json["command"] = std::move(command);
  json["timings_s"] = json::object();
  json["inputs"] = json::object();
}

void Report::finish(const std::string& name, std::chrono::steady_clock::time_point t0) {
  double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json["timings_s"][name] = s;
}

Output::Output(const std::string& dir) : dir_(dir) {
  stage_ = (fs::path(dir) / (".staging-" + std::to_string(::getpid()))).string();
  std::error_code ec;
  fs::remove_all(stage_, ec);
  fs::create_directories(stage_, ec);
  if (ec) throw DataError("cannot create output directory " + dir + ": " + ec.message());
}

Output::~Output() {
  std::error_code ec;
  fs::remove_all(stage_, ec);
  if (!committed_) {
    // leave no empty directory behind
    if (fs::is_empty(dir_, ec)) fs::remove(dir_, ec);
  }
}

std::string Output::path(const std::string& name) const { return (fs::path(stage_) / name).string(); }
std::string Output::final_path(const std::string& name) const {
  return (fs::path(dir_) / name).string();
}

void Output::write(const std::string& name, const std::string& content) {
  write_file_atomic(path(name), content);
  files.push_back(name);
}

void Output::commit() {
  for (const auto& f : files) {
    fs::path dst = fs::path(dir_) / f;
    if (dst.has_parent_path()) fs::create_directories(dst.parent_path());
    std::error_code ec;
    fs::remove_all(dst, ec);
    fs::rename(fs::path(stage_) / f, dst);
  }
  committed_ = true;
}

std::string git_blob_sha1(const std::string& content) {
  std::string head = "blob " + std::to_string(content.size());
  head.push_back('\0');
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, head.data(), head.size());
  EVP_DigestUpdate(ctx, content.data(), content.size());
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (unsigned i = 0; i < len; ++i) {
    s += hex[md[i] >> 4];
    s += hex[md[i] & 15];
  }
  return s;
}

namespace {

RunConfig start(const GlobalFlags& g, Report& rep) {
  RunConfig c = rep.stage("config", [&] { return load_run_config(g); });
  if (!g.config_path.empty()) track(rep, "config", g.config_path);
  echo(rep, c);
  return c;
}

void finish(Output& out, Report& rep) {
  rep.json["outputs"] = out.files;
  out.write("run_report.json", rep.json.dump(2) + "\n");
  out.commit();
}

GridOptions grid_options(const RunConfig& c) {
  GridOptions o;
  o.methods = c.methods;
  o.encoder = c.encoder;
  o.learner = c.learner;
  o.folds = c.folds;
  return o;
}

}  // namespace

int cmd_simulate(const GlobalFlags& g, Report& rep) {
  RunConfig c = start(g, rep);
  Output out(g.out_dir);
  SimulationReport r = rep.stage("grid", [&] { return run_grid(c.simulation, grid_options(c)); });
  json agg = r.aggregate_json();
  rep.stage("write", [&] {
    out.write("grid.csv", r.to_csv());
    out.write("aggregate.json", agg.dump(2) + "\n");
  });
  rep.json["result"] = agg;
  finish(out, rep);
  if (g.format == "json") std::cout << agg.dump(2) << "\n";
  else std::cout << r.to_csv();
  return 0;
}

int cmd_tstats(const GlobalFlags& g, Report& rep) {
  RunConfig c = start(g, rep);
  if (c.tstat_reps < 100) throw ConfigError("$.tstats.reps: must be >= 100");
  Output out(g.out_dir);
  TstatReport r =
      rep.stage("tstats", [&] { return tstat_study(c.simulation, c.tstat_reps, grid_options(c)); });
  json s = r.summary_json();
  rep.stage("write", [&] {
    out.write("tstats.csv", r.samples_csv());
    out.write("tstats_summary.json", s.dump(2) + "\n");
  });
  rep.json["result"] = s;
  finish(out, rep);
  if (g.format == "json") std::cout << s.dump(2) << "\n";
  else std::cout << r.samples_csv();
  return 0;
}

int cmd_generate(const GlobalFlags& g, Report& rep, double tau, int rep_index) {
  RunConfig c = start(g, rep);
  Output out(g.out_dir);
  SeededRng root(c.simulation.seed);
  SimDataset d = rep.stage("generate", [&] {
    return generate(c.simulation, tau, root.derive("dataset", static_cast<uint64_t>(rep_index)).next_u64());
  });
  rep.stage("write", [&] {
    write_dcef(out.path("z_leaky.dcef"), d.z_leaky);
    write_dcef(out.path("z_cf.dcef"), d.z_cf);
    write_dcef(out.path("z_base.dcef"), d.z_base);
    out.files.insert(out.files.end(), {"z_leaky.dcef", "z_cf.dcef", "z_base.dcef"});
    std::string csv = "t,y,propensity\n";
    for (size_t i = 0; i < d.t.size(); ++i)
      csv += num(d.t[i]) + "," + num(d.y[i]) + "," + num(d.propensity[i]) + "\n";
    out.write("data.csv", csv);
  });
  rep.json["result"] = {{"n", d.t.size()}, {"tau_true", d.tau_true}, {"treated", mean(d.t)}};
  finish(out, rep);
  std::cout << rep.json["result"].dump(2) << "\n";
  return 0;
}

int cmd_train_encoder(const GlobalFlags& g, const FileArgs& a, Report& rep) {
  RunConfig c = start(g, rep);
  std::string po = input(c, a.orig, "orig"), pc = input(c, a.cf, "cf"), pt = input(c, a.table, "table");
  PairedDataset data = rep.stage("load", [&] {
    track(rep, "orig", po);
    track(rep, "cf", pc);
    track(rep, "table", pt);
    PairedDataset d;
    d.z_orig = read_features(po);
    d.z_cf = read_features(pc);
    Table t = read_ty(pt);
    d.t = t.t;
    d.y = t.y;
    d.validate();
    return d;
  });
  Output out(g.out_dir);
  TrainResult r = rep.stage("train", [&] { return train(c.encoder, data); });
  FeatureMatrix clean = rep.stage("extract", [&] {
    return extract_clean(r.state, data.z_orig, data.z_cf, r.state.config.alpha_proj);
  });
  rep.stage("write", [&] {
    save_encoder(out.path("encoder.dcee"), r.state);
    out.files.push_back("encoder.dcee");
    out.write("training_log.csv", r.log.to_csv());
    write_dcef(out.path("z_clean.dcef"), clean);
    out.files.push_back("z_clean.dcef");
  });
  const auto& last = r.log.rows.back();
  rep.json["result"] = {{"epochs", r.state.epoch},
                        {"initial_clean_delta_norm", r.log.rows.front().clean_delta_norm},
                        {"final_clean_delta_norm", last.clean_delta_norm},
                        {"final_raw_delta_norm", last.mean_delta_norm},
                        {"metadata", r.log.metadata}};
  finish(out, rep);
  std::cout << rep.json["result"].dump(2) << "\n";
  return 0;
}

int cmd_estimate(const GlobalFlags& g, const FileArgs& a, Report& rep) {
  RunConfig c = start(g, rep);
  if (a.method != "dml" && a.method != "naive")
    throw ConfigError("--method must be 'dml' or 'naive'");
  std::string pt = input(c, a.table, "table");
  Table t = rep.stage("load", [&] {
    track(rep, "table", pt);
    return read_ty(pt);
  });
  DmlEstimate e;
  if (a.method == "naive") {
    e = rep.stage("estimate", [&] { return naive_ols(t.t, t.y); });
  } else {
    std::string pf = input(c, a.features, "features");
    FeatureMatrix x = rep.stage("load_features", [&] {
      track(rep, "features", pf);
      return read_features(pf);
    });
    if (x.rows() != t.t.size())
      throw DataError("features have " + std::to_string(x.rows()) + " rows but table has " +
                      std::to_string(t.t.size()));
    e = rep.stage("estimate", [&] { return run_dml(x, t.t, t.y, c.learner, c.folds, c.seed); });
  }
  Output out(g.out_dir);
  json j = to_json(e);
  rep.stage("write", [&] {
    if (g.format == "csv") {
      std::string s = "tau_hat,se,ci_lo,ci_hi,p_value,y_r2,t_r2,n,folds,learner\n";
      s += num(e.tau_hat) + "," + num(e.se) + "," + num(e.ci_lo) + "," + num(e.ci_hi) + "," +
           num(e.p_value) + "," + num(e.y_r2) + "," + num(e.t_r2) + "," + std::to_string(e.n) + "," +
           std::to_string(e.folds) + "," + e.learner + "\n";
      out.write("estimate.csv", s);
    } else {
      out.write("estimate.json", j.dump(2) + "\n");
    }
  });
  rep.json["result"] = j;
  finish(out, rep);
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_ablate(const GlobalFlags& g, Report& rep) {
  RunConfig c = start(g, rep);
  Output out(g.out_dir);
  AblationOptions o;
  o.encoder = c.encoder;
  o.learner = c.learner;
  o.folds = c.folds;
  o.reps = c.ablation_reps;
  o.tau = c.ablation_tau;
  auto rows = rep.stage("ablation", [&] { return ablation(c.simulation, o); });
  json j = ablation_json(rows);
  rep.stage("write", [&] {
    out.write("ablation.csv", ablation_csv(rows));
    out.write("ablation.json", j.dump(2) + "\n");
  });
  rep.json["result"] = j;
  finish(out, rep);
  if (g.format == "json") std::cout << j.dump(2) << "\n";
  else std::cout << ablation_csv(rows);
  return 0;
}

int cmd_pairs(const GlobalFlags& g, const FileArgs& a, Report& rep) {
  RunConfig c = start(g, rep);
  std::string pm = input(c, a.manifest, "manifest");
  auto manifest = rep.stage("load", [&] {
    track(rep, "manifest", pm);
    return read_manifest(pm);
  });
  Output out(g.out_dir);
  auto rows = rep.stage("shift", [&] { return generate_pairs(manifest, out.path("cf"), c.shift, c.extend); });
  size_t ok = 0;
  for (auto& r : rows) {
    if (r.status != "ok") continue;
    ++ok;
    std::string name = "cf/" + fs::path(r.cf_path).filename().string();
    out.files.push_back(name);
    r.cf_path = out.final_path(name);
  }
  rep.stage("write", [&] { out.write("pairs.csv", pairs_csv(rows)); });
  rep.json["result"] = {{"images", rows.size()}, {"ok", ok}, {"failed", rows.size() - ok},
                        {"metadata", {{"ita_after_region", "extended"}, {"blur_border", "reflect101"}}}};
  finish(out, rep);
  std::cout << rep.json["result"].dump(2) << "\n";
  return 0;
}

int cmd_ita(const GlobalFlags& g, const FileArgs& a, Report& rep) {
  RunConfig c = start(g, rep);
  std::string pi = input(c, a.image, "image");
  RgbImage img = rep.stage("load", [&] {
    track(rep, "image", pi);
    return read_png(pi);
  });
  BBox b{0, 0, static_cast<long>(img.width), static_cast<long>(img.height)};
  if (!a.bbox.empty()) {
    auto parts = split_csv_line(a.bbox);
    if (parts.size() != 4) throw ConfigError("--bbox expects x,y,w,h");
    long* dst[4] = {&b.x, &b.y, &b.w, &b.h};
    for (int k = 0; k < 4; ++k) {
      try {
        size_t used = 0;
        *dst[k] = std::stol(parts[k], &used);
        if (used != parts[k].size()) throw std::invalid_argument(parts[k]);
      } catch (const std::exception&) {
        throw ConfigError("--bbox: bad integer '" + parts[k] + "'");
      }
    }
  }
  ItaMeasurement m = rep.stage("measure", [&] {
    if (a.extended) {
      SkinRegion r = extend_region(b, img.width, img.height, c.extend);
      return ita_degrees(region_lab(img, r), c.shift.use_mean);
    }
    return ita_degrees(bbox_lab(img, b), c.shift.use_mean);
  });
  json j = {{"image", pi},
            {"bbox", {b.x, b.y, b.w, b.h}},
            {"region", a.extended ? "extended" : "bbox"},
            {"ita_degrees", m.ita_degrees},
            {"treatment", m.treatment},
            {"L", m.L_med},
            {"b", m.b_med},
            {"pixels", m.pixel_count}};
  Output out(g.out_dir);
  rep.stage("write", [&] {
    if (g.format == "csv") {
      std::string s = "image,bbox_x,bbox_y,bbox_w,bbox_h,ita_degrees,treatment,L,b,pixels\n";
      s += pi + "," + std::to_string(b.x) + "," + std::to_string(b.y) + "," + std::to_string(b.w) +
           "," + std::to_string(b.h) + "," + num(m.ita_degrees) + "," + std::to_string(m.treatment) +
           "," + num(m.L_med) + "," + num(m.b_med) + "," + std::to_string(m.pixel_count) + "\n";
      out.write("ita.csv", s);
    } else {
      out.write("ita.json", j.dump(2) + "\n");
    }
  });
  rep.json["result"] = j;
  finish(out, rep);
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace dice::cli
