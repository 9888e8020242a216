#include "negguide/cli/commands.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "negguide/errors.hpp"
#include "negguide/eval.hpp"
#include "negguide/parallel.hpp"
#include "negguide/trace_io.hpp"

namespace negguide::cli {

std::string metadata_line(const std::string& config_hash, const std::string& command) {
  return std::string("# negguide ") + kEngineVersion + " config_hash=" + config_hash +
         " command=" + command;
}

namespace {

/// World, schedule and denoiser resolved from a config.
struct Setup {
  ConceptWorld world;
  VarianceSchedule sched;
  std::unique_ptr<Denoiser> denoiser;
  std::size_t positive;
  std::optional<Condition> negative;
  std::string hash;

  ExperimentContext context(int workers) const { return {world, sched, *denoiser, workers}; }
};

Setup make_setup(const ExperimentConfig& c) {
  ConceptWorld world = load_world(c.world_path);
  VarianceSchedule sched = [&] {
    try {
      return build_schedule(c.schedule_kind, c.total_steps, c.beta_min, c.beta_max);
    } catch (const ParameterError& e) {
      throw ConfigError(std::string("schedule: ") + e.what());
    }
  }();
  std::size_t positive;
  std::optional<Condition> negative;
  try {
    positive = world.index_of(c.positive);
  } catch (const ParameterError&) {
    throw ConfigError("positive: unknown concept '" + c.positive + "'");
  }
  if (c.negative) {
    try {
      negative = world.condition(*c.negative);
    } catch (const ParameterError&) {
      throw ConfigError("negative: unknown concept '" + *c.negative + "'");
    }
  }
  std::unique_ptr<Denoiser> denoiser;
  if (c.denoiser.kind == DenoiserSpec::Kind::kTrained) {
    std::ifstream in(c.denoiser.model_path);
    if (!in) throw IoError("cannot open model file " + c.denoiser.model_path.string());
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(c.denoiser.model_path.string() + ": " + e.what());
    }
    auto model = std::make_unique<TrainableDenoiser>(TrainableDenoiser::from_json(doc));
    if (model->dimension() != world.dimension() ||
        model->num_concepts() != static_cast<int>(world.size()) ||
        model->total_steps() != sched.total_steps()) {
      throw ConfigError("denoiser.path: model does not match the world or schedule");
    }
    denoiser = std::move(model);
  } else {
    denoiser = std::make_unique<AnalyticDenoiser>(world, sched);
  }
  std::string hash = c.hash();
  return {std::move(world), std::move(sched), std::move(denoiser), positive, negative, hash};
}

std::ofstream open_output(const ExperimentConfig& c, const std::string& name) {
  std::error_code ec;
  std::filesystem::create_directories(c.out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + c.out_dir.string() + ": " + ec.message());
  const auto path = c.out_dir / name;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  return f;
}

void close_output(std::ofstream& f, const std::string& name) {
  f.close();
  if (!f) throw IoError("failed writing " + name);
}

const char* kReportHeader =
    "label,strategy,samples,compliance_rate,mean_log_odds,mean_positive_posterior,"
    "distance_to_target,denoiser_calls";

void write_report_row(std::ostream& f, const MetricsReport& r, Strategy strategy) {
  f << r.label << ',' << to_string(strategy) << ',' << r.samples << ','
    << format_real(r.compliance_rate) << ',' << format_real(r.mean_log_odds) << ','
    << format_real(r.mean_positive_posterior) << ',' << format_real(r.distance_to_target) << ','
    << r.denoiser_calls << '\n';
}

nlohmann::json report_json(const MetricsReport& r) {
  return {{"label", r.label},
          {"samples", r.samples},
          {"compliance_rate", r.compliance_rate},
          {"mean_log_odds", r.mean_log_odds},
          {"mean_positive_posterior", r.mean_positive_posterior},
          {"distance_to_target", r.distance_to_target},
          {"denoiser_calls", r.denoiser_calls}};
}

// Console figures; files keep full precision.
std::string brief(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

void warn_cnp(const GuidanceConfig& g, int total_steps, std::ostream& err) {
  if (g.strategy != Strategy::kCnp) return;
  if (auto w = cnp_cost_warning(total_steps)) err << *w << '\n';
}

}  // namespace

int cmd_sample(const ExperimentConfig& c, std::ostream& out, std::ostream& err) {
  const Setup setup = make_setup(c);
  warn_cnp(c.guidance, setup.sched.total_steps(), err);
  if (c.guidance.strategy == Strategy::kNp && !setup.negative) {
    throw ConfigError("negative: required for strategy NP");
  }
  const ExperimentContext ctx = setup.context(c.workers);
  const Quantizer quantize = ctx.quantizer();
  const Condition cond = Condition::concept_at(setup.positive);
  std::vector<ChainTrace> traces(c.n_samples);
  parallel_for(c.n_samples, c.workers, [&](std::size_t i) {
    GuidanceConfig g = c.guidance;
    g.seed = c.guidance.seed + i;
    traces[i] = run_chain(*setup.denoiser, quantize, cond, g, setup.sched, setup.negative);
  });

  auto f = open_output(c, "samples.csv");
  f << metadata_line(setup.hash, "sample") << '\n';
  f << "index,seed";
  for (int d = 0; d < setup.world.dimension(); ++d) f << ",z" << d;
  f << ",label,positive_posterior,log_odds,denoiser_calls\n";
  std::vector<Vec> samples;
  double log_odds_sum = 0.0;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const Vec& z = traces[i].final_sample;
    samples.push_back(z);
    const double lo = positive_log_odds(setup.world, setup.sched, z, setup.positive);
    log_odds_sum += lo;
    f << i << ',' << traces[i].config.seed;
    for (Eigen::Index d = 0; d < z.size(); ++d) f << ',' << format_real(z[d]);
    f << ',' << setup.world.concept_at(quantize(z)).id << ','
      << format_real(concept_posterior(setup.world, setup.sched, z, 0)[setup.positive]) << ','
      << format_real(lo) << ',' << traces[i].total_denoiser_calls << '\n';
  }
  close_output(f, "samples.csv");
  if (c.save_traces) {
    auto tf = open_output(c, "traces.jsonl");
    for (const ChainTrace& t : traces) write_trace(tf, t, setup.world, setup.hash);
    close_output(tf, "traces.jsonl");
  }
  out << "compliance_rate " << brief(compliance_rate(samples, setup.world, setup.sched, setup.positive))
      << "\nmean_log_odds " << brief(log_odds_sum / static_cast<double>(samples.size())) << '\n';
  return kExitOk;
}

int cmd_compare(const ExperimentConfig& c, std::ostream& out, std::ostream& err) {
  const Setup setup = make_setup(c);
  const std::vector<StrategyEntry> entries = c.strategies();
  std::vector<StrategySpec> specs;
  for (const StrategyEntry& e : entries) {
    warn_cnp(e.guidance, setup.sched.total_steps(), err);
    if (e.guidance.strategy == Strategy::kNp && !setup.negative) {
      throw ConfigError("negative: required for strategy NP");
    }
    specs.push_back({e.label, e.guidance, setup.negative});
  }
  const Comparison cmp =
      compare_strategies(setup.context(c.workers), specs, setup.positive, c.n_seeds);

  auto f = open_output(c, "compare.csv");
  f << metadata_line(setup.hash, "compare") << '\n' << kReportHeader << '\n';
  for (std::size_t i = 0; i < cmp.reports.size(); ++i) {
    write_report_row(f, cmp.reports[i], specs[i].config.strategy);
  }
  close_output(f, "compare.csv");

  nlohmann::json summary;
  summary["engine"] = std::string("negguide ") + kEngineVersion;
  summary["config_hash"] = setup.hash;
  summary["positive"] = c.positive;
  summary["n_seeds"] = c.n_seeds;
  summary["labels"] = nlohmann::json::array();
  summary["reports"] = nlohmann::json::array();
  nlohmann::json wins = nlohmann::json::array(), pvals = nlohmann::json::array();
  for (std::size_t a = 0; a < cmp.reports.size(); ++a) {
    summary["labels"].push_back(cmp.reports[a].label);
    summary["reports"].push_back(report_json(cmp.reports[a]));
    nlohmann::json wrow = nlohmann::json::array(), prow = nlohmann::json::array();
    for (std::size_t b = 0; b < cmp.reports.size(); ++b) {
      wrow.push_back(cmp.pairwise[a][b].win_rate);
      prow.push_back(cmp.pairwise[a][b].p_value);
    }
    wins.push_back(wrow);
    pvals.push_back(prow);
  }
  summary["win_matrix"] = wins;
  summary["p_values"] = pvals;
  auto jf = open_output(c, "compare.json");
  jf << summary.dump(2) << '\n';
  close_output(jf, "compare.json");

  for (std::size_t a = 0; a < cmp.reports.size(); ++a) {
    const MetricsReport& r = cmp.reports[a];
    out << std::left << std::setw(16) << r.label << " compliance " << brief(r.compliance_rate)
        << "  mean_posterior " << brief(r.mean_positive_posterior) << "  calls/chain "
        << r.denoiser_calls << "  wall " << r.wall_time << "s\n";
  }
  for (std::size_t a = 0; a < cmp.reports.size(); ++a) {
    for (std::size_t b = 0; b < cmp.reports.size(); ++b) {
      if (a == b) continue;
      out << cmp.reports[a].label << " vs " << cmp.reports[b].label << ": win rate "
          << brief(cmp.pairwise[a][b].win_rate) << " p " << brief(cmp.pairwise[a][b].p_value)
          << '\n';
    }
  }
  return kExitOk;
}

int cmd_sweep_k(const ExperimentConfig& c, std::ostream& out, std::ostream&) {
  if (c.k_values.empty()) throw ConfigError("k_values: need at least one K");
  const Setup setup = make_setup(c);
  const std::vector<SweepRow> rows =
      sweep_k(setup.context(c.workers), c.guidance, setup.positive, c.k_values, c.n_seeds);

  auto f = open_output(c, "sweep_k.csv");
  f << metadata_line(setup.hash, "sweep-k") << '\n'
    << "K,compliance_rate,mean_log_odds,mean_positive_posterior,distance_to_target,"
       "denoiser_calls,expected_calls\n";
  auto timing = open_output(c, "sweep_k_timing.csv");
  timing << metadata_line(setup.hash, "sweep-k") << '\n' << "K,denoiser_calls,seconds\n";
  int status = kExitOk;
  for (const SweepRow& r : rows) {
    const MetricsReport& m = r.metrics;
    f << r.k << ',' << format_real(m.compliance_rate) << ',' << format_real(m.mean_log_odds) << ','
      << format_real(m.mean_positive_posterior) << ',' << format_real(m.distance_to_target) << ','
      << m.denoiser_calls << ',' << r.expected_calls << '\n';
    timing << r.k << ',' << m.denoiser_calls << ',' << m.wall_time << '\n';
    out << "K=" << r.k << " compliance " << brief(m.compliance_rate) << " calls/chain "
        << m.denoiser_calls << " (closed form " << r.expected_calls << ") " << m.wall_time << "s\n";
    if (m.denoiser_calls != r.expected_calls || m.total_calls != r.expected_calls * m.samples) {
      status = kExitMismatch;
    }
  }
  close_output(f, "sweep_k.csv");
  close_output(timing, "sweep_k_timing.csv");
  return status;
}

int cmd_hypothesis(const ExperimentConfig& c, std::ostream& out, std::ostream&) {
  const Setup setup = make_setup(c);
  std::vector<int> grid = c.t_grid;
  const int T = setup.sched.total_steps();
  if (grid.empty()) grid = {T, 3 * T / 4, T / 2 + 1};
  for (int t : grid) {
    if (t < 1 || t > T) throw ConfigError("t_grid: step " + std::to_string(t) + " outside [1, T]");
  }
  const DriftTable table =
      negative_drift_experiment(setup.context(c.workers), c.guidance, setup.positive, grid, c.n_seeds);

  auto f = open_output(c, "hypothesis_labels.csv");
  f << metadata_line(setup.hash, "hypothesis") << '\n' << "seed";
  for (int t : grid) f << ",t" << t;
  f << ",nonconstant\n";
  for (std::size_t i = 0; i < table.labels.size(); ++i) {
    const auto& row = table.labels[i];
    f << table.seeds[i];
    for (std::size_t lbl : row) f << ',' << setup.world.concept_at(lbl).id;
    const bool changed = std::adjacent_find(row.begin(), row.end(), std::not_equal_to<>()) != row.end();
    f << ',' << (changed ? 1 : 0) << '\n';
  }
  close_output(f, "hypothesis_labels.csv");
  auto jf = open_output(c, "hypothesis.json");
  jf << nlohmann::json{{"engine", std::string("negguide ") + kEngineVersion},
                       {"config_hash", setup.hash},
                       {"t_grid", grid},
                       {"n_seeds", c.n_seeds},
                       {"nonconstant_fraction", table.nonconstant_fraction}}
            .dump(2)
     << '\n';
  close_output(jf, "hypothesis.json");
  out << "nonconstant_fraction " << brief(table.nonconstant_fraction) << '\n';
  return kExitOk;
}

int cmd_train(const ExperimentConfig& c, std::ostream& out, std::ostream&) {
  const ConceptWorld world = load_world(c.world_path);
  const VarianceSchedule sched = build_schedule(c.schedule_kind, c.total_steps, c.beta_min, c.beta_max);
  TrainableDenoiser model(c.train, world.dimension(), static_cast<int>(world.size()),
                          sched.total_steps(), c.train_seed);
  std::vector<double> losses;
  model = train_denoiser(std::move(model), world, sched, c.train_seed + 1, &losses);

  nlohmann::json doc = model.to_json();
  const std::string hash = c.hash();
  doc["config_hash"] = hash;
  doc["engine"] = std::string("negguide ") + kEngineVersion;
  const std::filesystem::path path = c.model_out.empty() ? c.out_dir / "model.json" : c.model_out;
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << doc.dump() << '\n';
  f.close();
  if (!f) throw IoError("failed writing " + path.string());

  out << "parameters " << model.parameter_count() << "\nmodel " << path.string() << '\n';
  if (losses.empty()) return kExitOk;
  const std::size_t window = std::max<std::size_t>(1, losses.size() / 10);
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < window; ++i) {
    first += losses[i];
    last += losses[losses.size() - window + i];
  }
  first /= static_cast<double>(window);
  last /= static_cast<double>(window);
  out << "loss first_window " << brief(first) << " final_window " << brief(last) << '\n';
  return last < first ? kExitOk : kExitMismatch;
}

int report_call_counts(const std::vector<CallCountRow>& rows, std::ostream& out) {
  int status = kExitOk;
  out << "strategy closed_form instrumented\n";
  for (const CallCountRow& r : rows) {
    const bool ok = r.closed_form == r.instrumented;
    out << r.label << ' ' << r.closed_form << ' ' << r.instrumented << (ok ? "" : "  MISMATCH") << '\n';
    if (!ok) status = kExitMismatch;
  }
  return status;
}

int cmd_count_calls(const ExperimentConfig& c, std::ostream& out, std::ostream& err) {
  const Setup setup = make_setup(c);
  const ExperimentContext ctx = setup.context(1);
  const Condition cond = Condition::concept_at(setup.positive);
  std::vector<CallCountRow> rows;
  std::vector<Strategy> strategies = {Strategy::kCfg, Strategy::kDns, Strategy::kDnp,
                                      Strategy::kCnp, Strategy::kAnswer};
  if (setup.negative) strategies.insert(strategies.begin() + 1, Strategy::kNp);
  for (Strategy s : strategies) {
    GuidanceConfig g = c.guidance;
    g.strategy = s;
    warn_cnp(g, setup.sched.total_steps(), err);
    const ChainTrace trace = run_chain(*setup.denoiser, ctx.quantizer(), cond, g, setup.sched, setup.negative);
    std::string label(to_string(s));
    if (s == Strategy::kAnswer) label += "(K=" + std::to_string(g.k) + ")";
    rows.push_back({label, expected_denoiser_calls(g, setup.sched.total_steps()),
                    trace.total_denoiser_calls});
  }
  return report_call_counts(rows, out);
}

namespace {

void add_common(CLI::App* app, std::string& config_path, Overrides& o) {
  app->add_option("--config", config_path, "experiment config (JSON)")->required();
  app->add_option("--out", o.out_dir, "output directory");
  app->add_option("--seed", o.seed, "base seed");
  app->add_option("--workers", o.workers, "parallel workers (across seeds)");
  app->add_option("--strategy", o.strategy, "CFG | NP | DNS | DNP | CNP | ANSWER");
  app->add_option("--s", o.s, "guidance scale");
  app->add_option("--sn", o.s_n, "negative guidance scale");
  app->add_option("--k", o.k, "DNS budget K");
  app->add_option("--t", o.total_steps, "number of diffusion steps T");
  app->add_option("--sampler", o.sampler, "ddpm | ddim");
  app->add_flag("--no-normalize", o.no_normalize, "disable negative-noise normalization");
  app->add_option("--window", o.window, "window fraction (ANSWER runs for t > T * fraction)");
  app->add_option("--n", o.n, "samples / seeds");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"negguide: guidance strategies over analytic concept worlds"};
  app.require_subcommand(1);
  struct Sub {
    const char* name;
    const char* help;
    int (*fn)(const ExperimentConfig&, std::ostream&, std::ostream&);
  };
  const Sub subs[] = {
      {"sample", "draw samples with one strategy", cmd_sample},
      {"compare", "paired-seed comparison of strategies", cmd_compare},
      {"sweep-k", "ANSWER quality and cost across K", cmd_sweep_k},
      {"hypothesis", "negative-label drift along CFG chains", cmd_hypothesis},
      {"train", "train the small neural denoiser", cmd_train},
      {"count-calls", "closed-form vs instrumented denoiser calls", cmd_count_calls},
  };
  std::string config_path;
  Overrides overrides;
  std::vector<std::pair<CLI::App*, const Sub*>> apps;
  for (const Sub& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    add_common(sub, config_path, overrides);
    apps.emplace_back(sub, &s);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    return kExitConfig;
  }
  try {
    ExperimentConfig config = load_config(config_path);
    apply_overrides(config, overrides);
    for (const auto& [sub, s] : apps) {
      if (sub->parsed()) return s->fn(config, out, err);
    }
    return kExitConfig;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParameterError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitMismatch;
  }
}

}  // namespace negguide::cli
