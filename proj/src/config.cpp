#include "rff/config.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include "rff/io.hpp"

namespace rff {

namespace {

struct Field {
  std::function<std::string(RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <typename Acc>
Field real_field(Acc acc) {
  return {[acc](RunConfig& c) { return io::format_exact(acc(c)); },
          [acc](RunConfig& c, const std::string& v) { acc(c) = io::parse_real(v, "value"); }};
}

template <typename Acc>
Field int_field(Acc acc) {
  return {[acc](RunConfig& c) { return std::to_string(acc(c)); },
          [acc](RunConfig& c, const std::string& v) {
            using T = std::remove_reference_t<decltype(acc(c))>;
            const long x = io::parse_int(v, "value");
            if (std::is_unsigned_v<T> && x < 0) throw ConfigError("value must be >= 0");
            acc(c) = static_cast<T>(x);
          }};
}

template <typename Acc>
Field bool_field(Acc acc) {
  return {[acc](RunConfig& c) { return std::string(acc(c) ? "true" : "false"); },
          [acc](RunConfig& c, const std::string& v) {
            if (v == "true" || v == "1") acc(c) = true;
            else if (v == "false" || v == "0") acc(c) = false;
            else throw ConfigError("expected true or false, got '" + v + "'");
          }};
}

template <typename Acc>
Field string_field(Acc acc) {
  return {[acc](RunConfig& c) { return acc(c); },
          [acc](RunConfig& c, const std::string& v) { acc(c) = v; }};
}

#define ACC(expr) [](RunConfig& c) -> auto& { return c.expr; }

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"run.command", string_field(ACC(command))},
      {"run.id", string_field(ACC(run_id))},
      {"run.seed", int_field(ACC(seed))},
      {"run.ablate", string_field(ACC(ablate))},
      {"run.paper_scale", bool_field(ACC(paper_scale))},
      {"data.dir", string_field(ACC(data_dir))},
      {"data.train_fraction", real_field(ACC(train_fraction))},

      {"synth.seen_classes", int_field(ACC(synth.seen_classes))},
      {"synth.unseen_classes", int_field(ACC(synth.unseen_classes))},
      {"synth.per_class", int_field(ACC(synth.per_class))},
      {"synth.signal_dim", int_field(ACC(synth.signal_dim))},
      {"synth.redundancy_dim", int_field(ACC(synth.redundancy_dim))},
      {"synth.attribute_dim", int_field(ACC(synth.attribute_dim))},
      {"synth.clusters", int_field(ACC(synth.clusters))},
      {"synth.noise", real_field(ACC(synth.noise))},

      {"embed.margin", real_field(ACC(embed.margin))},
      {"embed.bound", real_field(ACC(embed.bound))},
      {"embed.dual_step", real_field(ACC(embed.dual_step))},
      {"embed.dual_init", real_field(ACC(embed.dual_init))},
      {"embed.pin_dual", bool_field(ACC(embed.pin_dual))},
      {"embed.lr", real_field(ACC(embed.lr))},
      {"embed.epochs", int_field(ACC(embed.epochs))},
      {"embed.batch", int_field(ACC(embed.batch))},
      {"embed.hidden", int_field(ACC(embed.hidden))},
      {"embed.samples", int_field(ACC(embed.samples))},
      {"embed.eval_every", int_field(ACC(embed.eval_every))},
      {"embed.variance",
       {[](RunConfig& c) { return to_string(c.embed.variance); },
        [](RunConfig& c, const std::string& v) { c.embed.variance = parse_variance_mode(v); }}},

      {"gen.lambda_r", real_field(ACC(gen.lambda_r))},
      {"gen.lambda_c", real_field(ACC(gen.lambda_c))},
      {"gen.bound", real_field(ACC(gen.bound))},
      {"gen.center_margin", real_field(ACC(gen.center_margin))},
      {"gen.n_critic", int_field(ACC(gen.n_critic))},
      {"gen.clip", real_field(ACC(gen.clip))},
      {"gen.mode",
       {[](RunConfig& c) { return to_string(c.gen.mode); },
        [](RunConfig& c, const std::string& v) { c.gen.mode = parse_adversarial_mode(v); }}},
      {"gen.lr", real_field(ACC(gen.lr))},
      {"gen.lr_critic", real_field(ACC(gen.lr_critic))},
      {"gen.dual_step", real_field(ACC(gen.dual_step))},
      {"gen.dual_init", real_field(ACC(gen.dual_init))},
      {"gen.pin_duals", bool_field(ACC(gen.pin_duals))},
      {"gen.kl_fake_to_gen", bool_field(ACC(gen.kl_fake_to_gen))},
      {"gen.batch", int_field(ACC(gen.batch))},
      {"gen.z_dim", int_field(ACC(gen.z_dim))},
      {"gen.noise_dim", int_field(ACC(gen.noise_dim))},
      {"gen.gen_hidden", int_field(ACC(gen.gen_hidden))},
      {"gen.critic_hidden", int_field(ACC(gen.critic_hidden))},
      {"gen.mapper_hidden", int_field(ACC(gen.mapper_hidden))},
      {"gen.epochs", int_field(ACC(gen.epochs))},
      {"gen.warmup_epochs", int_field(ACC(gen.warmup_epochs))},
      {"gen.synth_count", int_field(ACC(gen.synth_count))},
      {"gen.cls_epochs", int_field(ACC(gen.cls_epochs))},
      {"gen.cls_lr", real_field(ACC(gen.cls_lr))},
      {"gen.final_epochs", int_field(ACC(gen.final_epochs))},
      {"gen.final_lr", real_field(ACC(gen.final_lr))},

      {"gradcheck.seeds", int_field(ACC(gradcheck_seeds))},
      {"gradcheck.h", real_field(ACC(gradcheck_h))},
      {"gradcheck.h64", real_field(ACC(gradcheck_h64))},
  };
  return table;
}

#undef ACC

const Field& field(const std::string& key) {
  auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  const Field& f = field(key);
  try {
    f.set(*this, io::trim(value));
  } catch (const ValidationError& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

std::string RunConfig::get(const std::string& key) const {
  return field(key).get(const_cast<RunConfig&>(*this));
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& [name, f] : fields()) out.push_back(name);
    return out;
  }();
  return k;
}

void RunConfig::finalize() {
  synth.seed = seed;
  embed.seed = seed;
  gen.seed = seed;
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("data.train_fraction must lie in (0, 1)");
  if (gradcheck_seeds < 1) throw ConfigError("gradcheck.seeds must be >= 1");
  if (!(gradcheck_h > 0.0) || !(gradcheck_h64 > 0.0))
    throw ConfigError("gradcheck step sizes must be > 0");
  if (!ablate.empty() && ablate != "no-mi" && ablate != "no-center" && ablate != "minimax")
    throw ConfigError("unknown ablation '" + ablate + "' (no-mi|no-center|minimax)");
  if (data_dir.empty()) synth.validate();
  embed.validate();
  gen.validate();
}

void RunConfig::apply_paper_scale() {
  paper_scale = true;
  gen.z_dim = 1024;
  gen.gen_hidden = 4096;
  gen.batch = 512;
  gen.mapper_hidden = 2048;
  gen.critic_hidden = 1024;
  embed.hidden = 2048;
  embed.batch = 512;
}

void RunConfig::apply_ablation(const std::string& name) {
  ablate = name;
  if (name == "no-mi") {
    // Only the framework being run changes, so the manifest diff against the
    // default run is exactly the ablation.
    if (command != "train-embed") gen.pin_duals = true;
    if (command.empty() || command == "train-embed") {
      embed.bound = std::numeric_limits<double>::infinity();
      embed.variance = VarianceMode::kZero;
    }
  } else if (name == "no-center") {
    gen.lambda_r = 0.0;
  } else if (name == "minimax") {
    gen.mode = AdversarialMode::kMinimax;
  } else if (!name.empty()) {
    throw ConfigError("unknown ablation '" + name + "' (no-mi|no-center|minimax)");
  }
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  for (const auto& k : keys()) out << k << " = " << get(k) << '\n';
  return out.str();
}

void parse_config_text(const std::string& text, RunConfig& cfg, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = io::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    const std::string where = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = io::trim(t.substr(0, eq));
    try {
      cfg.set(key, t.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
}

void load_config_file(const std::filesystem::path& path, RunConfig& cfg) {
  std::string text;
  for (const auto& l : io::read_lines(path)) text += l + '\n';
  parse_config_text(text, cfg, path.string());
}

std::string config_hash(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace rff
