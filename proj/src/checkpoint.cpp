#include "rff/checkpoint.hpp"

#include <sstream>

#include "rff/io.hpp"

namespace rff {

namespace {

constexpr const char* kMagic = "# rff checkpoint v1";

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<int> parse_ints(const std::string& s, const std::string& ctx) {
  std::vector<int> out;
  if (io::trim(s).empty()) return out;
  for (const auto& f : io::split(s, ',')) out.push_back(static_cast<int>(io::parse_int(f, ctx)));
  return out;
}

void store_softmax(Checkpoint& ckpt, SoftmaxModel& m, const std::string& prefix) {
  store_params(ckpt, m.layer.params(), prefix);
  ckpt.meta[prefix + "classes"] = join_ints(m.classes);
  ckpt.meta[prefix + "input_scale"] = io::format_real(m.input_scale);
}

SoftmaxModel restore_softmax(const Checkpoint& ckpt, const std::string& prefix) {
  SoftmaxModel m;
  const Tensor& w = ckpt.tensor(prefix + "softmax.weight");
  m.layer = Linear("softmax", w.rows(), w.cols());
  restore_params(ckpt, m.layer.params(), prefix);
  m.classes = parse_ints(ckpt.get_meta(prefix + "classes"), prefix + "classes");
  m.input_scale = static_cast<float>(io::parse_real(ckpt.get_meta(prefix + "input_scale"), prefix));
  if (m.classes.size() != w.cols())
    throw LoadError("checkpoint: " + prefix + "classes lists " + std::to_string(m.classes.size()) +
                    " classes for " + std::to_string(w.cols()) + " columns");
  return m;
}

}  // namespace

const Tensor& Checkpoint::tensor(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw LoadError("checkpoint has no tensor '" + name + "'");
  return it->second;
}

const std::string& Checkpoint::get_meta(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw LoadError("checkpoint has no metadata '" + key + "'");
  return it->second;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ostringstream out;
  out << kMagic << '\n';
  out << "kind: " << ckpt.kind << '\n';
  out << "seed: " << ckpt.seed << '\n';
  out << "config_hash: " << ckpt.config_hash << '\n';
  for (const auto& [k, v] : ckpt.meta) out << "meta " << k << ": " << v << '\n';
  for (const auto& [name, t] : ckpt.tensors) {
    out << "tensor " << name << ' ' << t.rows() << ' ' << t.cols() << '\n';
    for (std::size_t r = 0; r < t.rows(); ++r) {
      for (std::size_t c = 0; c < t.cols(); ++c) out << (c ? "," : "") << io::format_real(t(r, c));
      out << '\n';
    }
  }
  out << "end\n";
  io::write_text(path, out.str());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto lines = io::read_lines(path);
  const std::string file = path.string();
  if (lines.empty() || lines[0] != kMagic) throw LoadError(file + ": not a checkpoint");
  Checkpoint ckpt;
  std::size_t i = 1;
  auto ctx = [&](std::size_t line) { return file + ":" + std::to_string(line + 1); };
  auto value_after = [](const std::string& l, std::size_t colon) { return io::trim(l.substr(colon + 1)); };
  bool ended = false;
  while (i < lines.size()) {
    const std::string& l = lines[i];
    if (l == "end") {
      ended = true;
      break;
    }
    if (l.rfind("kind:", 0) == 0) {
      ckpt.kind = value_after(l, 4);
    } else if (l.rfind("seed:", 0) == 0) {
      ckpt.seed = static_cast<std::uint64_t>(io::parse_int(value_after(l, 4), ctx(i)));
    } else if (l.rfind("config_hash:", 0) == 0) {
      ckpt.config_hash = value_after(l, 11);
    } else if (l.rfind("meta ", 0) == 0) {
      const auto colon = l.find(':');
      if (colon == std::string::npos) throw LoadError(ctx(i) + ": malformed metadata line");
      ckpt.meta[io::trim(l.substr(5, colon - 5))] = value_after(l, colon);
    } else if (l.rfind("tensor ", 0) == 0) {
      std::istringstream head(l.substr(7));
      std::string name;
      long rows = -1, cols = -1;
      head >> name >> rows >> cols;
      if (name.empty() || rows < 0 || cols < 0) throw LoadError(ctx(i) + ": malformed tensor header");
      if (i + static_cast<std::size_t>(rows) >= lines.size())
        throw LoadError(ctx(i) + ": tensor " + name + " is truncated");
      std::vector<float> data;
      data.reserve(static_cast<std::size_t>(rows * cols));
      for (long r = 0; r < rows; ++r) {
        ++i;
        auto fields = io::split(lines[i], ',');
        if (static_cast<long>(fields.size()) != cols)
          throw LoadError(ctx(i) + ": dimension mismatch in tensor " + name + " (expected " +
                          std::to_string(cols) + " columns, found " +
                          std::to_string(fields.size()) + ")");
        for (const auto& f : fields) data.push_back(static_cast<float>(io::parse_real(f, ctx(i))));
      }
      ckpt.tensors[name] = Tensor(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols),
                                  std::move(data));
    } else if (!io::trim(l).empty()) {
      throw LoadError(ctx(i) + ": unexpected line in checkpoint");
    }
    ++i;
  }
  if (!ended) throw LoadError(file + ": checkpoint is truncated (no end marker)");
  return ckpt;
}

void store_params(Checkpoint& ckpt, const ParamList<float>& params, const std::string& prefix) {
  for (const auto* p : params) ckpt.tensors[prefix + p->name] = p->value;
}

void restore_params(const Checkpoint& ckpt, const ParamList<float>& params,
                    const std::string& prefix) {
  for (auto* p : params) {
    const Tensor& t = ckpt.tensor(prefix + p->name);
    if (!t.same_shape(p->value))
      throw LoadError("checkpoint: dimension mismatch for " + prefix + p->name + ": file has " +
                      t.shape() + ", model expects " + p->value.shape());
    p->value = t;
  }
}

void store_mapper(Checkpoint& ckpt, Mapper& m) { store_params(ckpt, m.params()); }

Mapper restore_mapper(const Checkpoint& ckpt) {
  const Tensor& trunk = ckpt.tensor("mapper.trunk.weight");
  const Tensor& mu = ckpt.tensor("mapper.mu.weight");
  Mapper m(trunk.rows(), trunk.cols(), mu.cols());
  restore_params(ckpt, m.params());
  return m;
}

void store_gen_model(Checkpoint& ckpt, GenModel& m) {
  store_mapper(ckpt, m.mapper);
  store_params(ckpt, m.gen.params());
  store_params(ckpt, m.critic.params());
  store_params(ckpt, {&m.centers.centers});
  ckpt.meta["centers.classes"] = join_ints(m.centers.classes);
  store_softmax(ckpt, m.q, "q.");
  if (m.has_final) store_softmax(ckpt, m.final_model, "final.");
}

GenModel restore_gen_model(const Checkpoint& ckpt) {
  GenModel m;
  m.mapper = restore_mapper(ckpt);
  const Tensor& ga = ckpt.tensor("gen.hidden.weight");
  const Tensor& gn = ckpt.tensor("gen.hidden.noise");
  const Tensor& go = ckpt.tensor("gen.out.weight");
  m.gen = Generator(ga.rows(), gn.rows(), ga.cols(), go.cols());
  restore_params(ckpt, m.gen.params());
  const Tensor& ch = ckpt.tensor("critic.hidden.weight");
  m.critic = Critic(ch.rows(), ch.cols());
  restore_params(ckpt, m.critic.params());
  m.centers.centers = Parameter("centers", ckpt.tensor("centers"));
  m.centers.classes = parse_ints(ckpt.get_meta("centers.classes"), "centers.classes");
  m.q = restore_softmax(ckpt, "q.");
  if (ckpt.tensors.count("final.softmax.weight")) {
    m.final_model = restore_softmax(ckpt, "final.");
    m.has_final = true;
  }
  if (m.gen.x_dim() != m.mapper.in_dim() || m.critic.hidden.in_dim() != m.mapper.z_dim())
    throw LoadError("checkpoint: generator, mapper and critic dimensions disagree");
  return m;
}

}  // namespace rff
