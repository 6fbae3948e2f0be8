// End-to-end acceptance run: one PASS/FAIL line per criterion, exit 0 only if
// all pass. Tolerances are fixed here and never tuned to the outcome.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "rff/cli.hpp"
#include "rff/config.hpp"
#include "rff/embed.hpp"
#include "rff/eval.hpp"
#include "rff/gen.hpp"
#include "rff/gradchecks.hpp"
#include "rff/io.hpp"
#include "rff/mapper.hpp"
#include "rff/rng.hpp"

using namespace rff;
namespace fs = std::filesystem;

namespace {

constexpr int kSeeds = 5;
const std::vector<int> kCounts = {10, 50, 200, 400};

struct Verdict {
  bool pass;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Verdict& v, double seconds) {
  std::printf("criterion %d %-28s %s  (%s; %.1fs)\n", id, name.c_str(), v.pass ? "PASS" : "FAIL",
              v.detail.c_str(), seconds);
  std::fflush(stdout);
  if (!v.pass) ++failures;
}

void timed(int id, const std::string& name, const std::function<Verdict()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("threw: ") + e.what()};
  }
  report(id, name, v,
         std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (double w : v) less += w < v[i], equal += w == v[i];
    r[i] = less + (equal + 1) / 2;  // average rank for ties
  }
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += ra[i] / n, mb += rb[i] / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return saa > 0 && sbb > 0 ? sab / std::sqrt(saa * sbb) : 0.0;
}

RunConfig config_for(const std::string& command, int seed, const std::string& ablation) {
  RunConfig c;
  c.command = command;
  c.seed = static_cast<std::uint64_t>(seed);
  c.apply_ablation(ablation);
  c.finalize();
  return c;
}

DatasetBundle bundle_for(const RunConfig& c) {
  return split_gzsl(make_synthetic(c.synth), c.train_fraction, c.seed);
}

SoftmaxTrainConfig final_cfg(const GenConfig& g) {
  return {.epochs = g.final_epochs, .lr = g.final_lr, .seed = g.seed};
}

struct GenRun {
  GenResult result;
  GzslMetrics metrics;
};

GenRun run_gen(int seed, const std::string& ablation) {
  const RunConfig c = config_for("train-gen", seed, ablation);
  const DatasetBundle b = bundle_for(c);
  GenRun r{train_gen(b, c.gen), {}};
  fit_final(b, r.result.model, c.gen.synth_count, c.seed, final_cfg(c.gen));
  r.metrics = evaluate_generation(b, r.result.model.mapper, r.result.model.final_model).metrics;
  return r;
}

// Criterion 8 helper: run, rerun from the manifest, compare every CSV.
bool rerun_identical(const std::vector<std::string>& args, const fs::path& a, const fs::path& b,
                     std::string& why) {
  auto call = [](std::vector<std::string> v) {
    v.insert(v.begin(), "rffgzsl");
    std::vector<const char*> argv;
    for (const auto& s : v) argv.push_back(s.c_str());
    std::ostringstream out, err;
    const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
    if (code != 0 && code != 2) throw std::runtime_error(v[1] + ": " + err.str());
    return code;
  };
  fs::remove_all(a);
  fs::remove_all(b);
  auto first = args;
  first.insert(first.end(), {"--out", a.string()});
  const int c1 = call(first);
  std::vector<std::string> second = {args[0], "--config", (a / "manifest.txt").string(), "--out",
                                     b.string()};
  for (std::size_t i = 1; i + 1 < args.size(); ++i)
    if (args[i] == "--model" || args[i] == "--count")
      second.insert(second.end(), {args[i], args[i + 1]});
  const int c2 = call(second);
  if (c1 != c2) {
    why = args[0] + ": exit codes differ";
    return false;
  }
  int compared = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    if (e.path().extension() != ".csv") continue;
    ++compared;
    const auto other = b / e.path().filename();
    if (!fs::exists(other) || io::read_lines(e.path()) != io::read_lines(other)) {
      why = args[0] + ": " + e.path().filename().string() + " differs";
      return false;
    }
  }
  if (compared == 0) {
    why = args[0] + ": wrote no CSV";
    return false;
  }
  return true;
}

}  // namespace

int main() {
  timed(1, "harmonic-mean reproduction", [] {
    const double rows[4][3] = {
        {59.8, 75.1, 66.5}, {52.6, 56.6, 54.6}, {45.7, 38.6, 41.9}, {65.2, 78.2, 71.1}};
    double worst = 0.0;
    for (const auto& r : rows) worst = std::max(worst, std::abs(harmonic_mean(r[0], r[1]) - r[2]));
    return Verdict{worst <= 0.2, fmt("max |H - reference| = %.3f, tol 0.2", worst)};
  });

  timed(2, "gradient suite (32-bit)", [] {
    const RunConfig c;
    double worst = 0.0;
    std::string worst_name, failing;
    for (const auto& name : gradcheck_losses()) {
      const auto r = run_gradcheck(name, 20, c.gradcheck_h, c.gradcheck_h64);
      if (r.max_rel_error32 >= 1e-3) failing += (failing.empty() ? "" : ",") + name;
      if (r.max_rel_error32 > worst) worst = r.max_rel_error32, worst_name = name;
    }
    return Verdict{failing.empty(), "20 seeds, worst " + worst_name + fmt(" %.2e", worst) +
                                        ", tol 1e-3" +
                                        (failing.empty() ? "" : "; failing: " + failing)};
  });

  timed(3, "closed-form KL vs Monte Carlo", [] {
    Rng rng(2024);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      GaussianPosterior p;
      p.mu = rng.normal_tensor(1, 8);
      p.log_var = rng.uniform_tensor(1, 8, -1.5, 1.5);
      const double exact = kl_to_marginal(p);
      double acc = 0.0;
      const int draws = 1000000;
      for (int s = 0; s < draws; ++s) {
        double lr = 0.0;
        for (std::size_t j = 0; j < 8; ++j) {
          const double mu = p.mu(0, j), lv = p.log_var(0, j), e = rng.normal();
          const double z = mu + std::exp(0.5 * lv) * e;
          lr += -0.5 * lv - 0.5 * e * e + 0.5 * z * z;
        }
        acc += lr;
      }
      worst = std::max(worst, std::abs(acc / draws - exact) / exact);
    }
    return Verdict{worst <= 0.01, fmt("20 posteriors x 1e6 draws, max rel diff %.2e, tol 1e-2", worst)};
  });

  // Default and no-mi generation runs, shared by criteria 4, 5 and 7.
  std::vector<GenRun> base, ablated;
  timed(4, "constraint satisfaction", [&] {
    const RunConfig c = config_for("train-gen", 1, "");
    base.push_back(run_gen(1, ""));
    const auto& steps = base[0].result.steps;
    const int last_epoch = c.gen.epochs;
    double kr = 0, kf = 0;
    int n = 0;
    bool duals_ok = true;
    for (const auto& s : steps) {
      duals_ok = duals_ok && s.beta_real >= 0.0 && s.beta_fake >= 0.0;
      if (s.epoch > last_epoch - 10) kr += s.kl_real, kf += s.kl_fake, ++n;
    }
    duals_ok = duals_ok && base[0].result.final_beta_real >= 0 && base[0].result.final_beta_fake >= 0;
    kr /= n;
    kf /= n;
    const double lim = 1.05 * c.gen.bound;
    return Verdict{kr <= lim && kf <= lim && duals_ok,
                   fmt("final-10-epoch KL real %.4f fake %.4f, limit %.4f, duals >= 0: ", kr, kf, lim) +
                       (duals_ok ? "yes" : "no")};
  });

  timed(5, "redundancy removal A/B", [&] {
    for (int s = static_cast<int>(base.size()) + 1; s <= kSeeds; ++s) base.push_back(run_gen(s, ""));
    for (int s = 1; s <= kSeeds; ++s) ablated.push_back(run_gen(s, "no-mi"));
    int wins = 0;
    std::vector<double> bu, bh, au, ah;
    for (int i = 0; i < kSeeds; ++i) {
      const auto& x = base[i].metrics;
      const auto& y = ablated[i].metrics;
      wins += x.unseen > y.unseen && x.harmonic > y.harmonic;
      bu.push_back(x.unseen), bh.push_back(x.harmonic);
      au.push_back(y.unseen), ah.push_back(y.harmonic);
    }
    const bool medians = median(bu) > median(au) && median(bh) > median(ah);
    return Verdict{wins >= 4 && medians,
                   fmt("wins %.0f/5; median U %.1f vs %.1f", wins, median(bu), median(au)) +
                       fmt(", median H %.1f vs %.1f (default vs no-mi)", median(bh), median(ah))};
  });

  timed(6, "embedding A/B", [] {
    int wins = 0;
    std::vector<double> hb, ha;
    for (int s = 1; s <= kSeeds; ++s) {
      RunConfig on = config_for("train-embed", s, ""), off = config_for("train-embed", s, "no-mi");
      on.embed.eval_every = off.embed.eval_every = 0;
      const DatasetBundle b = bundle_for(on);
      auto r_on = train_embed(b, on.embed);
      auto r_off = train_embed(b, off.embed);
      const double h_on = evaluate_embedding(b, r_on.mapper).metrics.harmonic;
      const double h_off = evaluate_embedding(b, r_off.mapper).metrics.harmonic;
      wins += h_on > h_off;
      hb.push_back(h_on), ha.push_back(h_off);
    }
    return Verdict{wins >= 4, fmt("wins %.0f/5; median H %.1f bounded vs %.1f plain", wins,
                                  median(hb), median(ha))};
  });

  timed(7, "data-imbalance curve", [&] {
    for (int s = static_cast<int>(base.size()) + 1; s <= kSeeds; ++s) base.push_back(run_gen(s, ""));
    std::vector<double> med_u, med_h, counts;
    for (int count : kCounts) {
      std::vector<double> u, h;
      for (int s = 1; s <= kSeeds; ++s) {
        const RunConfig c = config_for("train-gen", s, "");
        const DatasetBundle b = bundle_for(c);
        GenModel& m = base[s - 1].result.model;
        fit_final(b, m, count, c.seed, final_cfg(c.gen));
        const auto metrics = evaluate_generation(b, m.mapper, m.final_model).metrics;
        u.push_back(metrics.unseen);
        h.push_back(metrics.harmonic);
      }
      med_u.push_back(median(u));
      med_h.push_back(median(h));
      counts.push_back(count);
    }
    const double rho = spearman(counts, med_u);
    std::string curve;
    for (std::size_t i = 0; i < counts.size(); ++i)
      curve += fmt("%.0f:U%.1f/H%.1f ", counts[i], med_u[i], med_h[i]);
    return Verdict{rho > 0, fmt("spearman(count, median U) = %.2f; ", rho) + curve};
  });

  timed(8, "determinism from manifest", [] {
    const fs::path root = fs::temp_directory_path() / "rff_acceptance";
    const std::vector<std::string> small = {"--set", "gen.epochs=5", "--set", "gradcheck.seeds=2"};
    auto with = [&](std::vector<std::string> v) {
      v.insert(v.end(), small.begin(), small.end());
      return v;
    };
    std::string why;
    const auto gen_dir = root / "train-gen.a";
    const auto embed_dir = root / "train-embed.a";
    bool ok = rerun_identical(with({"synth-data"}), root / "synth-data.a", root / "synth-data.b", why) &&
              rerun_identical(with({"train-embed"}), embed_dir, root / "train-embed.b", why) &&
              rerun_identical(with({"train-gen"}), gen_dir, root / "train-gen.b", why) &&
              rerun_identical(with({"synth-features", "--model", (gen_dir / "model.ckpt").string(),
                                    "--count", "50"}),
                              root / "synth-features.a", root / "synth-features.b", why) &&
              rerun_identical(with({"eval", "--model", (embed_dir / "model.ckpt").string()}),
                              root / "eval-embed.a", root / "eval-embed.b", why) &&
              rerun_identical(with({"eval", "--model", (gen_dir / "model.ckpt").string(),
                                    "--count", "100"}),
                              root / "eval-gen.a", root / "eval-gen.b", why) &&
              rerun_identical(with({"gradcheck"}), root / "gradcheck.a", root / "gradcheck.b", why);
    return Verdict{ok, ok ? "synth-data, train-embed, train-gen, synth-features, eval x2, gradcheck"
                          : why};
  });

  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
