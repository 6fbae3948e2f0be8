#include "rff/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>

#include "rff/checkpoint.hpp"
#include "rff/config.hpp"
#include "rff/embed.hpp"
#include "rff/eval.hpp"
#include "rff/gen.hpp"
#include "rff/gradchecks.hpp"
#include "rff/io.hpp"

namespace fs = std::filesystem;

namespace rff {

namespace {

constexpr double kGradTol32 = 1e-3;
constexpr double kGradTol64 = 1e-5;

struct Flags {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::string ablate;
  bool paper_scale = false;
  std::vector<std::string> sets;
  std::string data;
  std::string model;
  int count = -1;
  std::string run_id;
  std::vector<std::string> inputs;  // report
};

RunConfig resolve(const std::string& command, const Flags& f) {
  RunConfig cfg;
  cfg.command = command;
  if (f.paper_scale) cfg.apply_paper_scale();
  if (!f.config.empty()) load_config_file(f.config, cfg);
  cfg.command = command;
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(io::trim(kv.substr(0, eq)), kv.substr(eq + 1));
  }
  if (!f.data.empty()) cfg.data_dir = f.data;
  if (!f.run_id.empty()) cfg.run_id = f.run_id;
  if (f.seed) cfg.seed = *f.seed;
  const std::string ablation = f.ablate.empty() ? cfg.ablate : f.ablate;
  cfg.apply_ablation(ablation);
  cfg.finalize();
  return cfg;
}

DatasetBundle load_bundle(const RunConfig& cfg) {
  if (!cfg.data_dir.empty()) return load_dataset(cfg.data_dir);
  return split_gzsl(make_synthetic(cfg.synth), cfg.train_fraction, cfg.seed);
}

// Writes the resolved config; `--config manifest.txt` reproduces the run.
std::string write_manifest(const fs::path& dir, const RunConfig& cfg) {
  fs::create_directories(dir);
  const std::string body = cfg.to_text();
  const std::string hash = config_hash(body);
  io::write_text(dir / "manifest.txt", "# rffgzsl manifest, config hash " + hash + "\n" + body);
  return hash;
}

std::string metrics_row(const RunConfig& cfg, const std::string& mode, const GzslMetrics& m) {
  return cfg.run_id + "," + mode + "," + io::format_real(m.unseen) + "," + io::format_real(m.seen) +
         "," + io::format_real(m.harmonic) + "," + std::to_string(cfg.seed) + "\n";
}

void write_metrics(const fs::path& dir, const std::string& rows) {
  io::write_text(dir / "metrics.csv", "run_id,mode,U,S,H,seed\n" + rows);
}

void write_predictions(const fs::path& path, const DatasetBundle& b, const Evaluation& ev) {
  std::ostringstream s;
  s << "index,label,prediction\n";
  for (std::size_t i = 0; i < b.test_index.size(); ++i)
    s << b.test_index[i] << ',' << b.labels[b.test_index[i]] << ',' << ev.predictions[i] << '\n';
  io::write_text(path, s.str());
}

SoftmaxTrainConfig final_cfg(const GenConfig& g) {
  return {.epochs = g.final_epochs, .lr = g.final_lr, .seed = g.seed};
}

std::string show(const GzslMetrics& m) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "U %.2f  S %.2f  H %.2f", m.unseen, m.seen, m.harmonic);
  return buf;
}

int cmd_synth_data(const Flags& f, std::ostream& out) {
  RunConfig cfg = resolve("synth-data", f);
  const fs::path dir = f.out;
  write_manifest(dir, cfg);
  save_dataset(load_bundle(cfg), dir);
  out << "synth-data: wrote " << dir.string() << '\n';
  return 0;
}

int cmd_train_embed(const Flags& f, std::ostream& out) {
  RunConfig cfg = resolve("train-embed", f);
  const fs::path dir = f.out;
  const std::string hash = write_manifest(dir, cfg);
  const DatasetBundle b = load_bundle(cfg);
  EmbedResult r = train_embed(b, cfg.embed);
  io::write_text(dir / "train_log.csv", embed_log_csv(r.epochs));
  Evaluation ev = evaluate_embedding(b, r.mapper);
  write_metrics(dir, metrics_row(cfg, "embed", ev.metrics));
  write_predictions(dir / "predictions.csv", b, ev);
  Checkpoint ck{"embed", cfg.seed, hash, {}, {}};
  ck.meta["final_beta"] = io::format_real(r.dual.beta);
  store_mapper(ck, r.mapper);
  save_checkpoint(dir / "model.ckpt", ck);
  out << "train-embed: " << show(ev.metrics) << "  beta " << r.dual.beta << '\n';
  return 0;
}

int cmd_train_gen(const Flags& f, std::ostream& out) {
  RunConfig cfg = resolve("train-gen", f);
  const fs::path dir = f.out;
  const std::string hash = write_manifest(dir, cfg);
  const DatasetBundle b = load_bundle(cfg);
  GenResult r = train_gen(b, cfg.gen);
  io::write_text(dir / "train_log.csv", gen_log_csv(r.steps));
  io::write_text(dir / "epochs.csv", gen_log_csv(gen_epoch_means(r.steps)));
  fit_final(b, r.model, cfg.gen.synth_count, cfg.seed, final_cfg(cfg.gen));
  Evaluation ev = evaluate_generation(b, r.model.mapper, r.model.final_model);
  write_metrics(dir, metrics_row(cfg, "gen", ev.metrics));
  write_predictions(dir / "predictions.csv", b, ev);
  Checkpoint ck{"gen", cfg.seed, hash, {}, {}};
  ck.meta["final_beta_real"] = io::format_real(r.final_beta_real);
  ck.meta["final_beta_fake"] = io::format_real(r.final_beta_fake);
  store_gen_model(ck, r.model);
  save_checkpoint(dir / "model.ckpt", ck);
  out << "train-gen: " << show(ev.metrics) << "  beta_real " << r.final_beta_real
      << "  beta_fake " << r.final_beta_fake << '\n';
  return 0;
}

Checkpoint need_model(const Flags& f) {
  if (f.model.empty()) throw ConfigError("--model is required");
  return load_checkpoint(f.model);
}

int cmd_synth_features(const Flags& f, std::ostream& out) {
  RunConfig cfg = resolve("synth-features", f);
  const Checkpoint ck = need_model(f);
  if (ck.kind != "gen") throw LoadError(f.model + ": expected a train-gen checkpoint, got '" + ck.kind + "'");
  GenModel m = restore_gen_model(ck);
  const DatasetBundle b = load_bundle(cfg);
  const int count = f.count >= 0 ? f.count : cfg.gen.synth_count;
  if (count < 1) throw ConfigError("--count must be >= 1");
  std::map<int, int> counts;
  for (int c : b.unseen_classes) counts[c] = count;
  const fs::path dir = f.out;
  write_manifest(dir, cfg);
  LabeledFeatures feats = synthesize_unseen(m.gen, m.mapper, b.attributes, counts, cfg.seed);
  io::write_matrix_csv(dir / "features.csv", feats.z);
  std::string labels;
  for (int y : feats.labels) labels += std::to_string(y) + "\n";
  io::write_text(dir / "labels.csv", labels);
  out << "synth-features: " << feats.labels.size() << " features for " << counts.size()
      << " unseen classes\n";
  return 0;
}

int cmd_eval(const Flags& f, std::ostream& out) {
  RunConfig cfg = resolve("eval", f);
  const Checkpoint ck = need_model(f);
  const DatasetBundle b = load_bundle(cfg);
  Evaluation ev;
  std::string mode;
  if (ck.kind == "embed") {
    Mapper m = restore_mapper(ck);
    ev = evaluate_embedding(b, m);
    mode = "embed";
  } else if (ck.kind == "gen") {
    GenModel m = restore_gen_model(ck);
    // A --count different from the training run refits the final softmax.
    if (!m.has_final || f.count >= 0)
      fit_final(b, m, f.count >= 0 ? f.count : cfg.gen.synth_count, cfg.seed, final_cfg(cfg.gen));
    ev = evaluate_generation(b, m.mapper, m.final_model);
    mode = "gen";
  } else {
    throw LoadError(f.model + ": unknown checkpoint kind '" + ck.kind + "'");
  }
  const fs::path dir = f.out;
  write_manifest(dir, cfg);
  write_metrics(dir, metrics_row(cfg, mode, ev.metrics));
  write_predictions(dir / "predictions.csv", b, ev);
  out << "eval: " << show(ev.metrics) << '\n';
  return 0;
}

int cmd_gradcheck(const Flags& f, std::ostream& out) {
  RunConfig cfg = resolve("gradcheck", f);
  const fs::path dir = f.out;
  write_manifest(dir, cfg);
  std::string csv = "loss,seeds,max_rel_error32,max_rel_error64,checked,excluded,pass\n";
  bool all = true;
  char line[256];
  for (const auto& name : gradcheck_losses()) {
    const auto r = run_gradcheck(name, cfg.gradcheck_seeds, cfg.gradcheck_h, cfg.gradcheck_h64);
    const bool ok = r.max_rel_error32 < kGradTol32 && r.max_rel_error64 < kGradTol64;
    all = all && ok;
    std::snprintf(line, sizeof line, "%-18s 32-bit %.3e  64-bit %.3e  %s", name.c_str(),
                  r.max_rel_error32, r.max_rel_error64, ok ? "ok" : "FAIL");
    out << line;
    if (!ok) out << "  (worst " << r.worst32 << " / " << r.worst64 << ")";
    out << '\n';
    csv += name + "," + std::to_string(r.seeds) + "," + io::format_real(r.max_rel_error32) + "," +
           io::format_real(r.max_rel_error64) + "," + std::to_string(r.checked) + "," +
           std::to_string(r.excluded) + "," + (ok ? "1" : "0") + "\n";
  }
  io::write_text(dir / "gradcheck.csv", csv);
  return all ? 0 : 2;
}

struct MetricRow {
  std::string run_id, mode;
  double u, s, h;
  std::string seed;
};

std::vector<MetricRow> read_metrics(const fs::path& path) {
  const auto lines = io::read_lines(path);
  if (lines.empty() || io::trim(lines[0]) != "run_id,mode,U,S,H,seed")
    throw LoadError(path.string() + ": not a metrics file");
  std::vector<MetricRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (io::trim(lines[i]).empty()) continue;
    const std::string ctx = path.string() + ":" + std::to_string(i + 1);
    auto c = io::split(lines[i], ',');
    if (c.size() != 6) throw LoadError(ctx + ": expected 6 fields");
    rows.push_back({c[0], c[1], io::parse_real(c[2], ctx), io::parse_real(c[3], ctx),
                    io::parse_real(c[4], ctx), c[5]});
  }
  return rows;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int cmd_report(const Flags& f, std::ostream& out) {
  if (f.inputs.empty()) throw ConfigError("report: no metric files or run directories given");
  std::vector<fs::path> files;
  for (const auto& in : f.inputs) {
    const fs::path p = in;
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::recursive_directory_iterator(p))
        if (e.is_regular_file() && e.path().filename() == "metrics.csv") found.push_back(e.path());
      std::sort(found.begin(), found.end());
      if (found.empty()) throw LoadError(p.string() + ": no metrics.csv below this directory");
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.push_back(p);
    }
  }
  // Groups keep first-seen order so the table follows the inputs.
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::vector<MetricRow>> groups;
  for (const auto& file : files)
    for (auto& r : read_metrics(file)) {
      auto key = std::make_pair(r.run_id, r.mode);
      if (!groups.count(key)) order.push_back(key);
      groups[key].push_back(r);
    }
  std::ostringstream table, csv;
  csv << "run_id,mode,runs,U_median,S_median,H_median,H_mean\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-24s %-6s %4s %8s %8s %8s %8s\n", "run", "mode", "n", "U", "S",
                "H", "H mean");
  table << line;
  for (const auto& key : order) {
    const auto& rows = groups[key];
    std::vector<double> u, s, h;
    double hsum = 0.0;
    for (const auto& r : rows) {
      u.push_back(r.u);
      s.push_back(r.s);
      h.push_back(r.h);
      hsum += r.h;
    }
    const double hmean = hsum / static_cast<double>(rows.size());
    std::snprintf(line, sizeof line, "%-24s %-6s %4zu %8.2f %8.2f %8.2f %8.2f\n", key.first.c_str(),
                  key.second.c_str(), rows.size(), median(u), median(s), median(h), hmean);
    table << line;
    csv << key.first << ',' << key.second << ',' << rows.size() << ',' << io::format_real(median(u))
        << ',' << io::format_real(median(s)) << ',' << io::format_real(median(h)) << ','
        << io::format_real(hmean) << '\n';
  }
  const fs::path dir = f.out;
  fs::create_directories(dir);
  io::write_text(dir / "table.txt", table.str());
  io::write_text(dir / "report.csv", csv.str());
  out << table.str();
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Redundancy-free feature learning for generalized zero-shot learning"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&f](CLI::App* sub) {
    sub->add_option("--config", f.config, "key = value config file (a manifest works)");
    sub->add_option("--out", f.out, "output directory")->capture_default_str();
    sub->add_option("--seed", f.seed, "run seed");
    sub->add_option("--ablate", f.ablate, "ablation")
        ->check(CLI::IsMember({"no-mi", "no-center", "minimax"}));
    sub->add_flag("--paper-scale", f.paper_scale, "full-size network dimensions");
    sub->add_option("--set", f.sets, "override a config key (key=value), repeatable");
    sub->add_option("--data", f.data, "dataset directory (default: synthesize)");
    sub->add_option("--run-id", f.run_id, "label for metric rows");
  };
  std::map<std::string, std::function<int(const Flags&, std::ostream&)>> handlers = {
      {"synth-data", cmd_synth_data},   {"train-embed", cmd_train_embed},
      {"train-gen", cmd_train_gen},     {"synth-features", cmd_synth_features},
      {"eval", cmd_eval},               {"gradcheck", cmd_gradcheck},
      {"report", cmd_report}};
  const std::map<std::string, std::string> help = {
      {"synth-data", "write the synthetic benchmark to --out"},
      {"train-embed", "train the embedding framework"},
      {"train-gen", "train the generation framework and its final classifier"},
      {"synth-features", "synthesize unseen-class features from a generation checkpoint"},
      {"eval", "evaluate a checkpoint on the test partition"},
      {"gradcheck", "finite-difference check of every training loss"},
      {"report", "aggregate metrics.csv files into one table"}};
  for (const auto& [name, text] : help) {
    CLI::App* sub = app.add_subcommand(name, text);
    if (name == "report") {
      sub->add_option("inputs", f.inputs, "metrics.csv files or run directories")->required();
      sub->add_option("--out", f.out, "output directory")->capture_default_str();
      continue;
    }
    common(sub);
    if (name == "synth-features" || name == "eval") {
      sub->add_option("--model", f.model, "checkpoint written by a training run")->required();
      sub->add_option("--count", f.count, "synthetic features per unseen class");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n\n" << app.help();
    return 1;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    return handlers.at(name)(f, out);
  } catch (const ValidationError& e) {
    err << name << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << name << ": " << e.what() << '\n';
    return 2;
  }
}

}  // namespace rff
