#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "safecert/cert_tree.hpp"
#include "safecert/config.hpp"
#include "safecert/eval.hpp"
#include "safecert/train.hpp"

namespace fs = std::filesystem;
using namespace safecert;

namespace {

struct CliOverrides {
  std::string config_path;
  std::string out;
  std::string checkpoint_g;
  std::string checkpoint_q;
  std::string norm;
  long long seed = -1;
  int tv = -1;
  long budget = -1;
  bool timing = false;
};

void add_common(CLI::App* cmd, CliOverrides& o) {
  cmd->add_option("--config", o.config_path, "run configuration file")->required();
  cmd->add_option("--seed", o.seed, "restrict the run to one seed");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--checkpoint-g", o.checkpoint_g, "feature predictor weights");
  cmd->add_option("--checkpoint-q", o.checkpoint_q, "Q network weights");
  cmd->add_option("--norm", o.norm, "perturbation norm (linf|l2)");
  cmd->add_option("--tv", o.tv, "verification horizon");
  cmd->add_option("--budget", o.budget, "node budget");
  cmd->add_flag("--timing", o.timing, "include wall time in certificate files");
}

RunConfig load_config(const CliOverrides& o) {
  RunConfig cfg = parse_config_file(o.config_path);
  if (!o.out.empty()) cfg.out_dir = o.out;
  if (o.seed >= 0) cfg.seeds = {static_cast<std::uint64_t>(o.seed)};
  if (!o.norm.empty()) {
    cfg.norm = norm_from_name(o.norm);
    cfg.train.norm = cfg.norm;
    cfg.attack.norm = cfg.norm;
  }
  if (o.tv > 0) cfg.t_v = o.tv;
  if (o.budget > 0) cfg.node_budget = o.budget;
  return cfg;
}

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

fs::path g_path(const RunConfig& cfg, std::uint64_t seed) {
  return fs::path(cfg.out_dir) /
         ("g_" + variant_name(cfg.train.variant) + "_seed" + std::to_string(seed) + ".mlp");
}

fs::path q_path(const RunConfig& cfg, std::uint64_t seed) {
  return fs::path(cfg.out_dir) /
         ("q_" + variant_name(cfg.train.variant) + "_seed" + std::to_string(seed) + ".mlp");
}

fs::path cert_path(const RunConfig& cfg, std::uint64_t seed) {
  return fs::path(cfg.out_dir) / ("cert_" + variant_name(cfg.train.variant) + "_seed" +
                                  std::to_string(seed) + ".txt");
}

CompositePolicy load_policy(const RunConfig& cfg, std::uint64_t seed,
                            const CliOverrides& o) {
  CompositePolicy p;
  p.g = load_params(o.checkpoint_g.empty() ? g_path(cfg, seed).string() : o.checkpoint_g);
  p.q = load_params(o.checkpoint_q.empty() ? q_path(cfg, seed).string() : o.checkpoint_q);
  p.action_count = cfg.scenario.action_count;
  p.validate();
  return p;
}

template <typename T>
T lower_median(std::vector<T> v) {
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

int cmd_train(const CliOverrides& o) {
  RunConfig cfg = load_config(o);
  for (std::uint64_t seed : cfg.seeds) {
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    std::vector<TrainLogRow> log;
    MlpParams q = train_q_ddqn(cfg.scenario, tc, &log);
    MlpParams g = train_g_supervised(q, cfg.scenario, tc, &log);
    if (tc.variant != Variant::Vanilla) {
      auto [g2, q2] = adv_train(g, q, cfg.scenario, tc, &log);
      g = std::move(g2);
      q = std::move(q2);
    }
    save_params(g, g_path(cfg, seed).string());
    save_params(q, q_path(cfg, seed).string());
    write_file(fs::path(cfg.out_dir) / ("train_" + variant_name(tc.variant) + "_seed" +
                                        std::to_string(seed) + ".csv"),
               train_log_csv(log));
    std::cout << "trained " << variant_name(tc.variant) << " seed " << seed
              << " -> " << g_path(cfg, seed).string() << "\n";
  }
  return 0;
}

int cmd_certify(const CliOverrides& o) {
  RunConfig cfg = load_config(o);
  CertifyOptions opt;
  opt.t_v = cfg.t_v;
  opt.node_budget = cfg.node_budget;
  opt.grid = cfg.effective_grid();
  opt.cert = cfg.cert_settings();

  std::vector<int> eps_indices;
  std::vector<long> node_counts;
  for (std::uint64_t seed : cfg.seeds) {
    const CompositePolicy p = load_policy(cfg, seed, o);
    const SemState s0 = reset(cfg.scenario, seed);
    const CertifyResult res = certify(p, s0, opt);
    write_file(cert_path(cfg, seed),
               certificate_report(res.certificate, opt.grid, o.timing));
    eps_indices.push_back(res.certificate.eps_idx);
    node_counts.push_back(res.certificate.nodes_explored);
    std::cout << "seed " << seed << ": eps_safety = " << res.certificate.eps_idx << "/"
              << opt.grid.denom << (res.certificate.truncated ? " (truncated)" : "")
              << ", nodes " << res.certificate.nodes_explored << ", "
              << res.certificate.wall_seconds << " s\n";
  }
  std::string agg = "median_eps_safety = " +
                    std::to_string(lower_median(eps_indices)) + "/" +
                    std::to_string(opt.grid.denom) + "\n";
  agg += "median_nodes_explored = " + std::to_string(lower_median(node_counts)) + "\n";
  agg += "seeds = " + std::to_string(cfg.seeds.size()) + "\n";
  write_file(fs::path(cfg.out_dir) /
                 ("cert_" + variant_name(cfg.train.variant) + "_summary.txt"),
             agg);
  return 0;
}

int cmd_eval(const CliOverrides& o) {
  RunConfig cfg = load_config(o);
  std::string csv = "model_seed," + EvalReport::csv_header() + "\n";
  for (std::uint64_t seed : cfg.seeds) {
    const CompositePolicy p = load_policy(cfg, seed, o);
    std::vector<std::uint64_t> episode_seeds;
    for (int e = 0; e < 10; ++e)
      episode_seeds.push_back(mix_seed(fnv1a("eval-episodes"), e));
    const EvalReport rep = evaluate(p, cfg.scenario, episode_seeds, cfg.eval_eps_mse);
    csv += std::to_string(seed) + "," + rep.csv_row() + "\n";
    std::cout << "seed " << seed << ":\n" << rep.summary();
  }
  write_file(fs::path(cfg.out_dir) /
                 ("eval_" + variant_name(cfg.train.variant) + ".csv"),
             csv);
  return 0;
}

int cmd_attack(const CliOverrides& o) {
  RunConfig cfg = load_config(o);
  const EpsGrid grid = cfg.effective_grid();
  std::string csv = "eps,episodes,success_rate\n";
  for (int k = 0; k <= grid.max_idx; ++k) {
    AttackConfig ac = cfg.attack;
    ac.eps = grid.value(k);
    int unsafe = 0, episodes = 0;
    for (std::uint64_t seed : cfg.seeds) {
      const CompositePolicy p = load_policy(cfg, seed, o);
      const RolloutResult r = attacked_rollout(p, cfg.scenario, seed, ac, cfg.t_v);
      unsafe += r.unsafe_reached ? 1 : 0;
      episodes += 1;
    }
    char buf[80];
    std::snprintf(buf, sizeof buf, "%d/%d,%d,%.17g\n", k, grid.denom, episodes,
                  static_cast<double>(unsafe) / episodes);
    csv += buf;
  }
  write_file(fs::path(cfg.out_dir) /
                 ("attack_" + variant_name(cfg.train.variant) + ".csv"),
             csv);
  return 0;
}

int cmd_report(const CliOverrides& o) {
  RunConfig cfg = load_config(o);
  const EpsGrid grid = cfg.effective_grid();
  std::vector<int> eps_indices;
  std::vector<long> node_counts;
  for (std::uint64_t seed : cfg.seeds) {
    const Certificate c = certificate_from_report(read_file(cert_path(cfg, seed)));
    eps_indices.push_back(c.eps_idx);
    node_counts.push_back(c.nodes_explored);
  }
  std::string agg = "median_eps_safety = " +
                    std::to_string(lower_median(eps_indices)) + "/" +
                    std::to_string(grid.denom) + "\n";
  agg += "median_nodes_explored = " + std::to_string(lower_median(node_counts)) + "\n";
  agg += "seeds = " + std::to_string(cfg.seeds.size()) + "\n";
  write_file(fs::path(cfg.out_dir) /
                 ("cert_" + variant_name(cfg.train.variant) + "_summary.txt"),
             agg);
  std::cout << agg;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"safecert: train, certify and attack lane-world policies"};
  app.require_subcommand(1);
  CliOverrides o;

  CLI::App* train = app.add_subcommand("train", "train q, g and the adversarial variant");
  CLI::App* certify = app.add_subcommand("certify", "certify safety per seed");
  CLI::App* eval = app.add_subcommand("eval", "nominal metrics");
  CLI::App* attack = app.add_subcommand("attack", "PGD falsification sweep");
  CLI::App* report = app.add_subcommand("report", "recompute the certification summary");
  for (CLI::App* cmd : {train, certify, eval, attack, report}) add_common(cmd, o);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(o);
    if (certify->parsed()) return cmd_certify(o);
    if (eval->parsed()) return cmd_eval(o);
    if (attack->parsed()) return cmd_attack(o);
    if (report->parsed()) return cmd_report(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
