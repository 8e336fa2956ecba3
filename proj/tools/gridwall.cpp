// gridwall: command-line front end for training, matches, the arena and the console server.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "gridwall/baselines.hpp"
#include "gridwall/config.hpp"
#include "gridwall/server.hpp"

namespace fs = std::filesystem;
using namespace gridwall;

namespace {

RunConfig load_or_default(const std::string& path) { return path.empty() ? RunConfig{} : load_run_config(path); }

std::shared_ptr<const Policy> load_agent(const std::string& path_or_id, const std::string& agents_dir) {
  fs::path p(path_or_id);
  if (!fs::exists(p) && !agents_dir.empty()) p = fs::path(agents_dir) / (path_or_id + kCheckpointExt);
  return std::make_shared<const Policy>(load_checkpoint(p));
}

std::string agent_id(const std::string& path_or_id) { return fs::path(path_or_id).stem().string(); }

LogSink open_log(const std::string& path) {
  if (path.empty()) return {};
  auto os = std::make_shared<std::ofstream>(path, std::ios::trunc);
  if (!*os) throw Error("cannot open log file " + path);
  return csv_log_sink(os);
}

void print_ranking(const EloTable& t) {
  int pos = 1;
  for (const auto& [id, r] : t.ranking()) {
    const auto& rec = t.record(id);
    std::printf("%2d  %-24s %9.2f  %d-%d-%d\n", pos++, id.c_str(), r, rec.wins, rec.draws, rec.losses);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gridwall: two-car race strategy via self-play"};
  app.require_subcommand(1);

  // config init
  auto* config = app.add_subcommand("config", "configuration files");
  config->require_subcommand(1);
  auto* init = config->add_subcommand("init", "write the default configuration");
  std::string init_out = "gridwall.json";
  bool force = false;
  init->add_option("--out", init_out, "destination file");
  init->add_flag("--force", force, "overwrite an existing file");

  // pretrain
  auto* pretrain = app.add_subcommand("pretrain", "train the single-car backbone");
  std::string cfg_path, out_path = "backbone.gwc", log_path;
  std::uint64_t seed = 1;
  long steps = 0;
  pretrain->add_option("--config", cfg_path, "run configuration JSON");
  pretrain->add_option("--seed", seed);
  pretrain->add_option("--out", out_path, "checkpoint to write");
  pretrain->add_option("--log", log_path, "training log CSV");
  pretrain->add_option("--steps", steps, "override pretraining env steps");

  // selfplay
  auto* selfplay = app.add_subcommand("selfplay", "train interaction modules against the opponent pool");
  int iters = 0;
  std::string backbone_path = "backbone.gwc", out_dir = "agents";
  selfplay->add_option("--iters", iters, "self-play iterations (default from config)");
  selfplay->add_option("--seed", seed);
  selfplay->add_option("--config", cfg_path, "run configuration JSON");
  selfplay->add_option("--backbone", backbone_path, "pretrained checkpoint");
  selfplay->add_option("--out", out_dir, "directory receiving the pool checkpoints");
  selfplay->add_option("--log", log_path, "training log CSV");
  selfplay->add_option("--steps", steps, "override env steps per iteration");

  // arena
  auto* arena = app.add_subcommand("arena", "round-robin Elo tournament");
  std::string agents_dir = "agents", trace_dir;
  int rounds = 100;
  double gap = 0.5, epsilon = 1.0;
  unsigned threads = 1;
  arena->add_option("--agents", agents_dir, "directory of checkpoints");
  arena->add_option("--rounds", rounds, "maximum rounds");
  arena->add_option("--seed", seed);
  arena->add_option("--gap", gap, "initial gap magnitude");
  arena->add_option("--epsilon", epsilon, "stop once no rating moves more than this in a round");
  arena->add_option("--traces", trace_dir, "directory for match traces (default AGENTS/traces)");
  arena->add_option("--threads", threads, "matches run in parallel within a round");
  arena->add_option("--config", cfg_path, "run configuration JSON");

  // match
  auto* match = app.add_subcommand("match", "one deterministic race, A as car 1");
  std::string a_path, b_path, trace_out;
  match->add_option("A", a_path, "checkpoint path or id")->required();
  match->add_option("B", b_path, "checkpoint path or id")->required();
  match->add_option("--gap", gap, "A's initial gap (positive: A behind)");
  match->add_option("--seed", seed);
  match->add_option("--trace", trace_out, "trace CSV to write");
  match->add_option("--agents", agents_dir, "directory used to resolve ids");
  match->add_option("--config", cfg_path, "run configuration JSON");

  // rank
  auto* rank = app.add_subcommand("rank", "print the persisted leaderboard");
  rank->add_option("--agents", agents_dir, "directory holding arena.json");

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP + WebSocket console");
  unsigned short port = 8080;
  std::string address = "127.0.0.1";
  serve->add_option("--port", port)->envname("GRIDWALL_PORT");
  serve->add_option("--agents", agents_dir, "directory of checkpoints")->envname("GRIDWALL_AGENTS");
  serve->add_option("--address", address, "bind address");
  serve->add_option("--config", cfg_path, "run configuration JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (init->parsed()) {
      if (fs::exists(init_out) && !force) throw ConfigError(init_out + " exists; pass --force to overwrite");
      RunConfig c;
      std::ofstream(init_out, std::ios::trunc) << to_json(c).dump(2) << '\n';
      std::cout << "wrote " << init_out << " (track hash " << config_hash(c.track) << ")\n";
    } else if (pretrain->parsed()) {
      RunConfig c = load_or_default(cfg_path);
      if (steps > 0) c.train.pretrain_steps = steps;
      const auto r = pretrain_backbone(c.train, c.track, c.reward, seed, open_log(log_path));
      save_checkpoint(r.policy, out_path);
      const BaselineResult base = best_one_stop(c.track);
      std::printf("backbone: %.3f s (%.2f min), compound rule %s\n", r.best.race_time, r.best.race_time / 60.0,
                  r.best.b_cpd ? "met" : "VIOLATED");
      std::printf("one-stop baseline: %.3f s; margin %.3f s\n", base.race_time, base.race_time - r.best.race_time);
      std::cout << "wrote " << out_path << '\n';
    } else if (selfplay->parsed()) {
      RunConfig c = load_or_default(cfg_path);
      if (iters > 0) c.train.iterations = iters;
      if (steps > 0) c.train.env_steps = steps;
      const Policy backbone = load_checkpoint(backbone_path);
      if (backbone.track_hash() != config_hash(c.track)) throw ConfigError("backbone was trained on a different track config");
      fs::create_directories(out_dir);
      save_checkpoint(backbone, fs::path(out_dir) / (std::string("backbone") + kCheckpointExt));
      std::vector<IterationReport> reports;
      const OpponentPool pool = self_play(backbone, c.train, c.track, c.reward, seed, open_log(log_path), &reports);
      json summary = json::array();
      for (const auto& e : pool.entries) {
        if (e.backbone_only) continue;
        save_checkpoint(*e.policy, fs::path(out_dir) / (e.id + kCheckpointExt));
      }
      for (const auto& r : reports) {
        summary.push_back({{"iteration", r.iteration}, {"best", r.best_id}, {"elo", r.best_elo},
                           {"win_rate_vs_backbone", r.best_win_rate}, {"diverged", r.diverged},
                           {"below_floor", r.below_floor}});
        std::printf("iteration %d: best %s  elo %.1f  win rate vs backbone %.2f%s%s\n", r.iteration,
                    r.best_id.c_str(), r.best_elo, r.best_win_rate, r.diverged ? "  [diverged]" : "",
                    r.below_floor ? "  [below 40% floor]" : "");
      }
      std::ofstream(fs::path(out_dir) / "selfplay.json", std::ios::trunc) << summary.dump(2) << '\n';
    } else if (arena->parsed()) {
      const RunConfig c = load_or_default(cfg_path);
      const AgentRegistry reg(agents_dir);
      const fs::path state = fs::path(agents_dir) / kArenaStateFile;
      EloTable table = fs::exists(state) ? EloTable::load(state) : EloTable{};
      ArenaConfig ac;
      ac.rounds = rounds;
      ac.epsilon = epsilon;
      ac.gaps = fixed_gap(gap);
      ac.seed = seed;
      ac.threads = threads;
      ac.trace_dir = trace_dir.empty() ? fs::path(agents_dir) / "traces" : fs::path(trace_dir);
      ac.state_file = state;
      table = run_arena(reg.contestants(c.track), ac, c.track, c.reward, std::move(table));
      print_ranking(table);
    } else if (match->parsed()) {
      const RunConfig c = load_or_default(cfg_path);
      const auto pa = load_agent(a_path, agents_dir);
      const auto pb = load_agent(b_path, agents_dir);
      const MatchResult m = play_match(policy_contestant(agent_id(a_path), pa, c.track),
                                       policy_contestant(agent_id(b_path), pb, c.track), seed, gap, c.track, c.reward);
      if (!trace_out.empty()) {
        std::ofstream out(trace_out, std::ios::trunc | std::ios::binary);
        write_trace_csv(out, m.trace);
      }
      std::cout << to_json(m).dump(2) << '\n';
    } else if (rank->parsed()) {
      print_ranking(EloTable::load(fs::path(agents_dir) / kArenaStateFile));
    } else if (serve->parsed()) {
      const RunConfig c = load_or_default(cfg_path);
      auto console = std::make_shared<Console>(AgentRegistry(agents_dir), c.track, c.reward);
      Server server(console, port, address);
      std::cout << "serving " << console->agents().all().size() << " agents on http://" << address << ':'
                << server.port() << std::endl;
      server.run();
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
