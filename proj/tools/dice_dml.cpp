#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "dice/errors.hpp"

using namespace dice;
using namespace dice::cli;

namespace {

const char* kind_of(int code) {
  switch (code) {
    case 2: return "config";
    case 3: return "data";
    case 4: return "numerical";
    default: return "error";
  }
}

int fail(int code, const std::string& stage, const std::string& msg) {
  nlohmann::json j = {{"error", {{"kind", kind_of(code)}, {"stage", stage}, {"message", msg}}}};
  std::cerr << j.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DICE-DML: debiased treatment effects from leaky image embeddings"};
  app.require_subcommand(1);
  GlobalFlags g;
  FileArgs a;
  double tau = 0.0;
  int rep_index = 0;

  auto common = [&](CLI::App* s) {
    s->add_option("--config", g.config_path, "JSON run configuration")->check(CLI::ExistingFile);
    s->add_option("--out", g.out_dir, "output directory")->capture_default_str();
    s->add_option_function<uint64_t>("--seed", [&](const uint64_t& v) { g.seed = v; }, "global seed");
    s->add_option_function<int>("--threads", [&](const int& v) { g.threads = v; }, "worker threads");
    s->add_option("--format", g.format, "stdout / result format")
        ->check(CLI::IsMember({"json", "csv"}))
        ->capture_default_str();
  };

  auto* sim = app.add_subcommand("simulate", "Monte Carlo grid over the tau grid");
  auto* tst = app.add_subcommand("tstats", "t-statistic study at tau = 0");
  auto* gen = app.add_subcommand("generate", "write one simulated dataset");
  gen->add_option("--tau", tau, "true effect");
  gen->add_option("--rep", rep_index, "replicate index");
  auto* tr = app.add_subcommand("train-encoder", "train the paired encoder and extract embeddings");
  tr->add_option("--orig", a.orig, "original features (DCEF or CSV)");
  tr->add_option("--cf", a.cf, "counterfactual features");
  tr->add_option("--table", a.table, "CSV with columns t,y");
  auto* est = app.add_subcommand("estimate", "cross-fitted ATE on a feature file");
  est->add_option("--features", a.features, "control features (DCEF or CSV)");
  est->add_option("--table", a.table, "CSV with columns t,y");
  est->add_option("--method", a.method, "dml or naive")->capture_default_str();
  auto* abl = app.add_subcommand("ablate", "component ablation table");
  auto* prs = app.add_subcommand("pairs", "skin-tone counterfactual images from a manifest");
  prs->add_option("--manifest", a.manifest, "CSV: path,bbox_x,bbox_y,bbox_w,bbox_h");
  auto* ita = app.add_subcommand("ita", "ITA of a PNG region");
  ita->add_option("--image", a.image, "PNG image");
  ita->add_option("--bbox", a.bbox, "x,y,w,h (default: full frame)");
  ita->add_flag("--extended", a.extended, "measure over the extended skin region");
  for (auto* s : {sim, tst, gen, tr, est, abl, prs, ita}) common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(2, "args", e.what());
  }

  Report rep(app.get_subcommands().front()->get_name());
  try {
    if (sim->parsed()) return cmd_simulate(g, rep);
    if (tst->parsed()) return cmd_tstats(g, rep);
    if (gen->parsed()) return cmd_generate(g, rep, tau, rep_index);
    if (tr->parsed()) return cmd_train_encoder(g, a, rep);
    if (est->parsed()) return cmd_estimate(g, a, rep);
    if (abl->parsed()) return cmd_ablate(g, rep);
    if (prs->parsed()) return cmd_pairs(g, a, rep);
    if (ita->parsed()) return cmd_ita(g, a, rep);
  } catch (const dice::Error& e) {
    return fail(e.exit_code(), rep.current_stage(), e.what());
  } catch (const std::exception& e) {
    return fail(1, rep.current_stage(), e.what());
  }
  return 1;
}
