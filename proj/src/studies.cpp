#include "v2xmeta/studies.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "v2xmeta/csv.hpp"
#include "v2xmeta/parallel.hpp"

namespace v2xmeta::studies {

namespace fs = std::filesystem;

namespace {

void say(const Log& log, const std::string& msg) {
  if (log) log(msg);
}

nn::Checkpoint require_checkpoint(const RunConfig& cfg) {
  if (cfg.checkpoint.empty())
    throw ConfigError("mode '" + cfg.mode + "' needs a checkpoint (set checkpoint = <path>)");
  return nn::load_checkpoint(cfg.checkpoint);
}

std::uint64_t u64(std::size_t v) { return static_cast<std::uint64_t>(v); }

struct Rows {
  std::vector<std::vector<std::string>> rows;
  template <class... Cells>
  void add(const Cells&... cells) {
    std::vector<std::string> r;
    (r.push_back(cell(cells)), ...);
    rows.push_back(std::move(r));
  }
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  static std::string cell(double v) { return format_number(v); }
  template <class Int>
    requires std::is_integral_v<Int>
  static std::string cell(Int v) {
    return std::to_string(v);
  }
};

void write_rows(CsvWriter& w, const Rows& r) {
  for (const auto& row : r.rows) w.write(row);
}

// Mean over seeds of per-episode adaptation curves, as fig67 rows.
void curve_rows(Rows& out, const std::string& variant,
                const std::vector<eval::AdaptationCurve>& curves) {
  if (curves.empty()) return;
  const std::size_t n = curves.front().reward.size();
  const std::vector<std::pair<const char*, std::vector<double> eval::AdaptationCurve::*>> metrics{
      {"cumulative_reward", &eval::AdaptationCurve::reward},
      {"v2i_sum_rate_bps", &eval::AdaptationCurve::v2i_sum_rate_bps},
      {"v2v_success_prob", &eval::AdaptationCurve::success_probability}};
  for (std::size_t e = 0; e < n; ++e)
    for (const auto& [name, member] : metrics) {
      double s = 0.0;
      for (const auto& c : curves) s += (c.*member)[e];
      out.add(static_cast<int>(e + 1), variant, name, s / static_cast<double>(curves.size()));
    }
}

}  // namespace

std::optional<meta::FactorGrid> checkpoint_grid(const nn::Checkpoint& ckpt) {
  if (!ckpt.metadata.contains("task_set")) return std::nullopt;
  const auto& t = ckpt.metadata.at("task_set");
  meta::FactorGrid g;
  g.name = t.value("provenance", "checkpoint");
  g.links = t.at("links").get<std::vector<int>>();
  g.speeds_kmh = t.at("speed_kmh").get<std::vector<double>>();
  g.payload_multiples = t.at("payload_multiple").get<std::vector<double>>();
  g.k_v2i = t.at("k_v2i").get<std::vector<double>>();
  g.k_v2v = t.at("k_v2v").get<std::vector<double>>();
  return g;
}

std::unique_ptr<eval::Policy> build_policy(eval::PolicyKind kind, const RunConfig& cfg,
                                           const TaskConfig& task, std::uint64_t seed,
                                           const nn::Checkpoint* meta_init,
                                           const meta::FactorGrid& grid) {
  const auto ppo = ppo_from(cfg);
  const SeedTree tree(seed);
  switch (kind) {
    case eval::PolicyKind::MetaInit: {
      if (!meta_init) throw ConfigError("policy meta-init needs a meta checkpoint");
      auto r = eval::adapt(*meta_init, task, cfg.adapt_loops, ppo, tree.derive("adapt"));
      return std::make_unique<eval::GreedyPolicy>("meta-init", std::move(r.actor));
    }
    case eval::PolicyKind::RandInit: {
      const auto init = eval::random_init(task, tree.derive(streams::kInit), cfg.hidden);
      auto r = eval::adapt(init, task, cfg.adapt_loops, ppo, tree.derive("adapt"));
      return std::make_unique<eval::GreedyPolicy>("rand-init", std::move(r.actor));
    }
    case eval::PolicyKind::Matched: {
      auto c = eval::train_policy(task, cfg.matched_episodes, ppo, tree.derive("train"), cfg.hidden);
      return std::make_unique<eval::GreedyPolicy>("matched", std::move(c.actor));
    }
    case eval::PolicyKind::Mismatched: {
      const auto other = eval::mismatched_task(task, grid);
      auto c = eval::train_policy(other, cfg.matched_episodes, ppo, tree.derive("train"), cfg.hidden);
      return std::make_unique<eval::GreedyPolicy>("mismatched", std::move(c.actor));
    }
    case eval::PolicyKind::Random:
      return std::make_unique<eval::RandomPolicy>();
    case eval::PolicyKind::MaxV2V:
      return std::make_unique<eval::MaxV2VPolicy>(cfg.maxv2v_budget);
  }
  throw ConfigError("unhandled policy kind");
}

// ------------------------------------------------------------------ meta-train

RunOutputs run_meta_train(const RunConfig& cfg, const Log& log) {
  const fs::path out(cfg.out);
  const SeedTree tree(cfg.seed);
  const auto base = task_from(cfg);
  const auto set = meta::generate_task_set(grid_from(cfg), base);
  const auto held = meta::generate_task_set(meta::held_out_grid(), base);
  const auto schedule = schedule_from(cfg);
  const auto ppo = ppo_from(cfg);

  CsvWriter fig2(out / "fig2.csv", {"outer_loop", "eval_mean_cumulative_reward"});
  CsvWriter curve(out / "training_curve.csv", {"outer_loop", "task_id", "mean_cumulative_reward",
                                               "v2i_sum_rate", "v2v_success_prob"});

  auto evaluate_state = [&](const meta::MetaState& s) -> meta::EvalSnapshot {
    Rng pick = tree.stream("eval-tasks", {u64(static_cast<std::size_t>(s.outer_loop))});
    const int n = std::min<int>(cfg.eval_tasks, static_cast<int>(held.size()));
    const auto idx = meta::sample_tasks(held, n, pick);
    std::vector<eval::EvalReport> reports(idx.size());
    nn::Checkpoint init{"meta", s.actor, s.critic, {}};
    parallel_for(idx.size(), cfg.jobs, [&](std::size_t i) {
      const auto seed = tree.derive("eval", {u64(static_cast<std::size_t>(s.outer_loop)), idx[i]});
      const SeedTree st(seed);
      auto r = eval::adapt(init, held.tasks[idx[i]], cfg.adapt_loops, ppo, st.derive("adapt"));
      eval::GreedyPolicy policy("meta-init", std::move(r.actor));
      reports[i] = eval::evaluate(policy, held.tasks[idx[i]], cfg.eval_episodes, st.derive("test"));
    });
    meta::EvalSnapshot snap;
    snap.outer_loop = s.outer_loop;
    for (const auto& r : reports) {
      snap.mean_cumulative_reward += r.reward.mean / reports.size();
      snap.v2i_sum_rate_bps += r.v2i_sum_rate.mean / reports.size();
      snap.v2v_success_probability += r.success_probability / reports.size();
    }
    fig2.row(s.outer_loop, snap.mean_cumulative_reward);
    fig2.flush();
    say(log, "outer loop " + std::to_string(s.outer_loop) + ": eval reward " +
                 format_number(snap.mean_cumulative_reward) + ", success " +
                 format_number(snap.v2v_success_probability));
    return snap;
  };

  auto state = meta::initial_state(base, tree.derive("meta-init"), schedule);
  if (cfg.eval_every > 0) state.history.push_back(evaluate_state(state));

  meta::MetaHooks hooks;
  hooks.training_row = [&](const meta::TrainingRow& r) {
    curve.row(r.outer_loop, r.task_id, r.mean_cumulative_reward, r.v2i_sum_rate_bps,
              r.v2v_success_probability);
  };
  hooks.evaluate = [&](const meta::MetaState& s) -> std::optional<meta::EvalSnapshot> {
    if (cfg.eval_every > 0 && s.outer_loop % cfg.eval_every == 0) return evaluate_state(s);
    return std::nullopt;
  };
  hooks.progress = [&](const meta::MetaState& s) {
    curve.flush();
    say(log, "outer loop " + std::to_string(s.outer_loop) + "/" +
                 std::to_string(cfg.outer_loops) + " done");
  };
  state = meta::meta_train(set, schedule, tree.derive("meta"), std::move(state), hooks);
  nn::save_checkpoint(meta::to_checkpoint(state, set, schedule, cfg.seed),
                      out / "meta_checkpoint.json");
  return {{"meta_checkpoint.json", "fig2.csv", "training_curve.csv"}};
}

// ------------------------------------------------------------------ adapt

RunOutputs run_adapt(const RunConfig& cfg, const Log& log) {
  const fs::path out(cfg.out);
  const auto init = require_checkpoint(cfg);
  const auto task = task_from(cfg);
  const SeedTree tree(cfg.seed);
  CsvWriter curve(out / "training_curve.csv", {"episode", "task_id", "mean_cumulative_reward",
                                               "v2i_sum_rate", "v2v_success_prob"});
  int episode = 0;
  auto r = eval::adapt(init, task, cfg.adapt_loops, ppo_from(cfg), tree.derive("adapt"),
                       [&](int round, const ppo::Learner&, std::span<const ppo::EpisodeStats> eps) {
                         for (const auto& e : eps)
                           curve.row(++episode, task.label(), e.cumulative_reward,
                                     e.v2i_sum_rate_bps, e.success_probability());
                         say(log, "adaptation round " + std::to_string(round) + "/" +
                                      std::to_string(cfg.adapt_loops));
                       });
  nn::Checkpoint adapted = init;
  if (cfg.adapt_loops > 0) {
    adapted.kind = "adapted";
    adapted.actor = std::move(r.actor);
    adapted.critic = std::move(r.critic);
    adapted.metadata["adaptation"] = {
        {"task", task.label()}, {"rounds", cfg.adapt_loops}, {"seed", cfg.seed}};
  }
  nn::save_checkpoint(adapted, out / "adapted_checkpoint.json");
  return {{"adapted_checkpoint.json", "training_curve.csv"}};
}

// ------------------------------------------------------------------ evaluate

RunOutputs run_evaluate(const RunConfig& cfg, const Log& log) {
  const fs::path out(cfg.out);
  const auto task = task_from(cfg);
  const auto grid = grid_from(cfg);
  std::optional<nn::Checkpoint> ckpt;
  if (!cfg.checkpoint.empty()) ckpt = nn::load_checkpoint(cfg.checkpoint);
  const SeedTree tree(cfg.seed);

  struct Cell {
    std::size_t policy;
    int seed;
    std::optional<eval::EvalReport> report;
    std::string log_text;
    std::string refusal;
  };
  std::vector<Cell> cells;
  for (std::size_t p = 0; p < cfg.policies.size(); ++p)
    for (int s = 0; s < cfg.study_seeds; ++s) cells.push_back({p, s, {}, {}, {}});

  parallel_for(cells.size(), cfg.jobs, [&](std::size_t i) {
    auto& c = cells[i];
    const auto kind = eval::parse_policy_kind(cfg.policies[c.policy]);
    const auto seed = tree.derive("evaluate", {u64(c.policy), u64(static_cast<std::size_t>(c.seed))});
    const SeedTree st(seed);
    try {
      auto policy = build_policy(kind, cfg, task, st.derive("policy"), ckpt ? &*ckpt : nullptr, grid);
      std::ostringstream episode_log;
      c.report = eval::evaluate(*policy, task, cfg.eval_episodes,
                                tree.derive("test", {u64(static_cast<std::size_t>(c.seed))}),
                                c.seed == 0 ? &episode_log : nullptr);
      c.log_text = episode_log.str();
    } catch (const eval::BudgetExceeded& e) {
      c.refusal = e.what();
    }
  });

  RunOutputs outputs;
  CsvWriter summary(out / "evaluation.csv", {"policy", "metric", "mean", "ci95"});
  CsvWriter episodes(out / "episodes.csv", {"policy", "seed", "episode", "v2i_sum_rate_bps",
                                            "cumulative_reward", "v2v_success_prob"});
  outputs.files = {"evaluation.csv", "episodes.csv"};
  for (std::size_t p = 0; p < cfg.policies.size(); ++p) {
    const auto& name = cfg.policies[p];
    std::vector<eval::EvalReport> reports;
    for (const auto& c : cells) {
      if (c.policy != p) continue;
      if (!c.refusal.empty()) {
        say(log, name + " refused: " + c.refusal);
        break;
      }
      for (const auto& row : c.report->rows) {
        const double frac = row.success.empty()
                                ? 0.0
                                : static_cast<double>(std::count(row.success.begin(),
                                                                 row.success.end(), 1)) /
                                      row.success.size();
        episodes.row(name, c.seed, row.episode, row.v2i_sum_rate_bps, row.cumulative_reward, frac);
      }
      if (c.seed == 0) {
        const std::string file = "episode_log_" + name + ".csv";
        std::ofstream f(out / file, std::ios::binary);
        write_episode_log_header(f, task.bands);
        f << c.log_text;
        outputs.files.push_back(file);
      }
      reports.push_back(*c.report);
    }
    if (reports.empty()) continue;
    const auto m = eval::merge(reports);
    summary.row(name, "v2i_sum_rate_bps", m.v2i_sum_rate.mean, m.v2i_sum_rate.ci95);
    summary.row(name, "v2v_success_prob", m.success_probability, m.success.ci95);
    summary.row(name, "cumulative_reward", m.reward.mean, m.reward.ci95);
    say(log, name + ": V2I " + format_number(m.v2i_sum_rate.mean) + " bps, success " +
                 format_number(m.success_probability));
  }
  return outputs;
}

// ------------------------------------------------------------------ calibrate

RunOutputs run_calibrate(const RunConfig& cfg, const Log& log) {
  const fs::path out(cfg.out);
  std::vector<TaskConfig> tasks{task_from(cfg)};
  for (auto& t : meta::generate_task_set(grid_from(cfg), task_from(cfg)).tasks)
    tasks.push_back(std::move(t));
  std::vector<double> upsilon(tasks.size());
  parallel_for(tasks.size(), cfg.jobs, [&](std::size_t i) {
    upsilon[i] = std::isnan(tasks[i].upsilon) ? calibrate_upsilon(tasks[i]) : tasks[i].upsilon;
  });
  CsvWriter w(out / "calibration.csv", {"task", "upsilon"});
  for (std::size_t i = 0; i < tasks.size(); ++i) w.row(tasks[i].label(), upsilon[i]);
  say(log, tasks.front().label() + ": upsilon = " + format_number(upsilon.front()));
  return {{"calibration.csv"}};
}

// ------------------------------------------------------------------ studies

namespace {

RunOutputs study_fig3(const RunConfig& cfg, const Log& log) {
  const auto init = require_checkpoint(cfg);
  const auto task = task_from(cfg);
  const SeedTree tree(cfg.seed);
  std::vector<Rows> per_seed(static_cast<std::size_t>(cfg.study_seeds));
  parallel_for(per_seed.size(), cfg.jobs, [&](std::size_t s) {
    const auto test_seed = tree.derive("fig3-test", {u64(s)});
    auto& rows = per_seed[s];
    auto record = [&](int step, const nn::ParameterSet& actor) {
      eval::GreedyPolicy policy("meta-init", actor);
      const auto r = eval::evaluate(policy, task, cfg.eval_episodes, test_seed);
      rows.add(step, "v2i_sum_rate_bps", r.v2i_sum_rate.mean, u64(s));
      rows.add(step, "v2v_success_prob", r.success_probability, u64(s));
    };
    record(0, init.actor);
    int step = 0;
    eval::adapt(init, task, cfg.adapt_loops, ppo_from(cfg), tree.derive("fig3-adapt", {u64(s)}),
                {}, [&](int, const ppo::Learner& l) { record(++step, l.actor); });
  });
  CsvWriter w(fs::path(cfg.out) / "fig3.csv", {"gradient_step", "metric", "value", "seed"});
  for (const auto& r : per_seed) write_rows(w, r);
  say(log, "fig3: " + std::to_string(cfg.study_seeds) + " seeds");
  return {{"fig3.csv"}};
}

RunOutputs study_fig45(const RunConfig& cfg, const Log& log) {
  const auto base = task_from(cfg);
  const auto grid = grid_from(cfg);
  std::optional<nn::Checkpoint> ckpt;
  if (!cfg.checkpoint.empty()) ckpt = nn::load_checkpoint(cfg.checkpoint);
  const SeedTree tree(cfg.seed);

  struct Cell {
    std::size_t payload, policy;
    int seed;
    std::optional<eval::EvalReport> report;
    std::string refusal;
  };
  std::vector<Cell> cells;
  for (std::size_t m = 0; m < cfg.payload_multiples.size(); ++m)
    for (std::size_t p = 0; p < cfg.policies.size(); ++p)
      for (int s = 0; s < cfg.study_seeds; ++s) cells.push_back({m, p, s, {}, {}});

  parallel_for(cells.size(), cfg.jobs, [&](std::size_t i) {
    auto& c = cells[i];
    auto task = base;
    task.payload_bits = cfg.payload_multiples[c.payload] * kBitsPerPayloadUnit;
    const auto kind = eval::parse_policy_kind(cfg.policies[c.policy]);
    const SeedTree st(tree.derive("fig45", {u64(c.payload), u64(c.policy), u64(static_cast<std::size_t>(c.seed))}));
    try {
      auto policy = build_policy(kind, cfg, task, st.derive("policy"), ckpt ? &*ckpt : nullptr, grid);
      c.report = eval::evaluate(*policy, task, cfg.eval_episodes,
                                tree.derive("fig45-test", {u64(c.payload), u64(static_cast<std::size_t>(c.seed))}));
    } catch (const eval::BudgetExceeded& e) {
      c.refusal = e.what();
    }
  });

  CsvWriter w(fs::path(cfg.out) / "fig45.csv",
              {"payload_multiple", "policy", "metric", "mean", "ci95"});
  for (std::size_t m = 0; m < cfg.payload_multiples.size(); ++m)
    for (std::size_t p = 0; p < cfg.policies.size(); ++p) {
      std::vector<eval::EvalReport> reports;
      std::string refusal;
      for (const auto& c : cells)
        if (c.payload == m && c.policy == p) {
          if (c.report) reports.push_back(*c.report);
          else refusal = c.refusal;
        }
      if (!refusal.empty()) {
        say(log, cfg.policies[p] + " refused: " + refusal);
        continue;
      }
      const auto r = eval::merge(reports);
      w.row(cfg.payload_multiples[m], cfg.policies[p], "v2i_sum_rate_bps", r.v2i_sum_rate.mean,
            r.v2i_sum_rate.ci95);
      w.row(cfg.payload_multiples[m], cfg.policies[p], "v2v_success_prob", r.success_probability,
            r.success.ci95);
    }
  say(log, "fig45: " + std::to_string(cells.size()) + " cells");
  return {{"fig45.csv"}};
}

struct Variant {
  std::string name;
  nn::Checkpoint init;
  TaskConfig task;
};

RunOutputs study_fig67(const RunConfig& cfg, const std::vector<Variant>& variants,
                       const Log& log) {
  const SeedTree tree(cfg.seed);
  const auto ppo = ppo_from(cfg);
  const auto S = static_cast<std::size_t>(cfg.study_seeds);
  std::vector<std::vector<eval::AdaptationCurve>> curves(variants.size(),
                                                         std::vector<eval::AdaptationCurve>(S));
  parallel_for(variants.size() * S, cfg.jobs, [&](std::size_t i) {
    const auto v = i / S, s = i % S;
    curves[v][s] = eval::adaptation_curve(variants[v].init, variants[v].task, cfg.adapt_loops, ppo,
                                          tree.derive("fig67", {u64(s)}));
  });
  CsvWriter w(fs::path(cfg.out) / "fig67.csv", {"episode", "variant", "metric", "mean"});
  for (std::size_t v = 0; v < variants.size(); ++v) {
    Rows rows;
    curve_rows(rows, variants[v].name, curves[v]);
    write_rows(w, rows);
  }
  say(log, cfg.study + ": " + std::to_string(variants.size()) + " variants x " +
               std::to_string(S) + " seeds");
  return {{"fig67.csv"}};
}

RunOutputs study_fig6(const RunConfig& cfg, const Log& log) {
  if (cfg.compare_checkpoints.empty())
    throw ConfigError("study fig6 needs compare_checkpoints = <meta checkpoint>,...");
  std::vector<Variant> variants;
  for (const auto& path : cfg.compare_checkpoints) {
    auto c = nn::load_checkpoint(path);
    std::string name = fs::path(path).stem().string();
    if (auto g = checkpoint_grid(c)) name = g->name;
    variants.push_back({name, std::move(c), task_from(cfg)});
  }
  return study_fig67(cfg, variants, log);
}

RunOutputs study_fig7(const RunConfig& cfg, const Log& log) {
  const auto init = require_checkpoint(cfg);
  const auto grid = checkpoint_grid(init).value_or(grid_from(cfg));
  std::vector<Variant> variants;
  for (int k : cfg.distance_factors)
    variants.push_back({std::to_string(k) + "-factor", init, eval::distance_task(grid, k, task_from(cfg))});
  return study_fig67(cfg, variants, log);
}

}  // namespace

RunOutputs run_study(const RunConfig& cfg, const Log& log) {
  if (cfg.study == "fig3") return study_fig3(cfg, log);
  if (cfg.study == "fig45") return study_fig45(cfg, log);
  if (cfg.study == "fig6") return study_fig6(cfg, log);
  if (cfg.study == "fig7") return study_fig7(cfg, log);
  throw ConfigError("unknown study '" + cfg.study + "'");
}

RunOutputs run(const RunConfig& cfg, const Log& log) {
  validate(cfg);
  fs::create_directories(cfg.out);
  RunOutputs outputs;
  if (cfg.mode == "meta-train") outputs = run_meta_train(cfg, log);
  else if (cfg.mode == "adapt") outputs = run_adapt(cfg, log);
  else if (cfg.mode == "evaluate") outputs = run_evaluate(cfg, log);
  else if (cfg.mode == "calibrate") outputs = run_calibrate(cfg, log);
  else if (cfg.mode == "study") outputs = run_study(cfg, log);
  else throw ConfigError("unknown mode '" + cfg.mode + "'");

  std::ofstream(fs::path(cfg.out) / "resolved_config.txt", std::ios::binary) << emit_config(cfg);
  outputs.files.push_back("resolved_config.txt");
  outputs.files.push_back("manifest.json");
  std::ofstream(fs::path(cfg.out) / "manifest.json", std::ios::binary)
      << make_manifest(cfg, outputs.files).dump(2) << '\n';
  return outputs;
}

}  // namespace v2xmeta::studies
