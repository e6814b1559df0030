#pragma once

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "starkstrip/classical.hpp"
#include "starkstrip/dynamics.hpp"
#include "starkstrip/io.hpp"
#include "starkstrip/landau_stark.hpp"
#include "starkstrip/spectral_stats.hpp"

namespace starkstrip::cli {

struct Recipe {
  std::string name;
  std::string description;
  std::map<std::string, std::string> params;
};

/// Canned parameter sets matching the figure captions.
inline std::vector<Recipe> figure_recipes() {
  return {
      {"fig1",
       "F = 0 strip spectrum, periodic and Dirichlet panels",
       {{"alpha", "1/10"}, {"J", "1"}, {"Lx", "40"}, {"F", "0"},
        {"subcommand", "strip"}}},
      {"fig2",
       "classical trajectory with edge-mediated Bloch oscillations",
       {{"alpha", "1/10"}, {"J", "1"}, {"F", "0.02"}, {"Lx", "40"},
        {"EK", "-2J+wc/2"}, {"tfinal", "400Tc"}, {"subcommand", "classical"}}},
      {"fig3",
       "Landau-Stark states and their spatial density",
       {{"alpha", "1/10"}, {"J", "1"}, {"F", "0.02"}, {"Lx", "40"},
        {"subcommand", "lss"}}},
      {"fig4",
       "eigenphase flow versus F with spacing statistics",
       {{"alpha", "1/10"}, {"J", "1"}, {"Lx", "10"},
        {"subcommand", "levelflow"}}},
      {"fig5",
       "wave-packet evolution snapshots at Bloch-period checkpoints",
       {{"alpha", "1/10"}, {"J", "1"}, {"F", "0.02"}, {"Lx", "40"},
        {"checkpoints", "0,200TB,400TB"}, {"subcommand", "evolve"}}},
  };
}

inline const Recipe& find_recipe(const std::string& name) {
  static const std::vector<Recipe> recipes = figure_recipes();
  for (const auto& r : recipes)
    if (r.name == name) return r;
  throw ConfigError("unknown recipe '" + name + "'");
}

namespace detail_cli {

struct CommonOpts {
  std::string out_dir = ".";
  int threads = 0;
  std::uint64_t seed = 1;
  std::string config_path;
  std::string alpha_text = "1/10";
  double J = 1.0;
  double F = 0.0;
  int Lx = 40;
  std::string bc = "dirichlet";
  int y_min = 0, y_max = 0;
  bool window_set = false;

  void add_lattice_flags(CLI::App* app, bool with_field = true) {
    app->add_option("--alpha", alpha_text, "Peierls phase r/q");
    app->add_option("--J", J, "hopping energy");
    if (with_field) app->add_option("--F", F, "electric field");
    app->add_option("--Lx", Lx, "strip width (sites)");
    app->add_option("--bc", bc, "x boundary: dirichlet|periodic");
    auto* ymin = app->add_option("--ymin", y_min, "y-window lower edge");
    auto* ymax = app->add_option("--ymax", y_max, "y-window upper edge");
    ymin->needs(ymax);
    ymax->needs(ymin);
    app->add_option("--config", config_path,
                    "key-value config file; explicit flags override it");
    app->callback([this, ymin]() { window_set = ymin->count() > 0; });
  }

  void add_common_flags(CLI::App* app) {
    app->add_option("--out", out_dir, "output directory");
    app->add_option("--threads", threads, "worker threads (HS_THREADS)");
    app->add_option("--seed", seed, "seed for sampled initial conditions");
  }

  BoundaryX boundary() const {
    if (bc == "periodic") return BoundaryX::Periodic;
    if (bc == "dirichlet") return BoundaryX::Dirichlet;
    throw ConfigError("bc must be periodic or dirichlet");
  }

  LatticeConfig lattice(const CLI::App* app) const {
    LatticeConfig cfg;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw ConfigError("cannot read config file " + config_path);
      std::stringstream ss;
      ss << in.rdbuf();
      cfg = parse_config(ss.str());
    }
    auto overridden = [&](const std::string& flag) {
      return config_path.empty() || app->count(flag) > 0;
    };
    if (overridden("--alpha")) {
      auto [r, q] = parse_alpha(alpha_text);
      cfg.alpha_num = r;
      cfg.alpha_den = q;
      cfg.normalize_alpha();
    }
    if (overridden("--J")) cfg.J = J;
    if (app->get_option_no_throw("--F") && overridden("--F")) cfg.F = F;
    if (overridden("--Lx")) cfg.Lx = Lx;
    if (overridden("--bc")) cfg.bc_x = boundary();
    if (window_set) {
      cfg.m_min = y_min;
      cfg.m_max = y_max;
    } else if (config_path.empty()) {
      if (cfg.F > 0.0) {
        int half = static_cast<int>(std::ceil(4.0 * cfg.J / cfg.F)) +
                   LatticeConfig::default_buffer;
        cfg.m_min = -half;
        cfg.m_max = half;
      }
    }
    cfg.validate();
    return cfg;
  }

  ExprContext expr_context(const LatticeConfig& cfg) const {
    ExprContext ctx;
    ctx.J = cfg.J;
    ctx.alpha = cfg.alpha();
    ctx.F = cfg.F;
    return ctx;
  }

  void apply_threads() const {
    if (threads > 0)
      setenv("HS_THREADS", std::to_string(threads).c_str(), 1);
  }

  std::string path(const std::string& file) const {
    std::filesystem::create_directories(out_dir);
    return (std::filesystem::path(out_dir) / file).string();
  }
};

inline std::string label_name(StateLabel l) {
  switch (l) {
    case StateLabel::EdgeLeft: return "edge_left";
    case StateLabel::EdgeRight: return "edge_right";
    default: return "bulk";
  }
}

inline std::string band_csv(const BandStructure& bs) {
  CsvWriter csv({"kappa", "band_index", "energy", "label"});
  for (int k = 0; k < bs.kappa_grid.size(); ++k)
    for (int nu = 0; nu < bs.band_count(); ++nu)
      csv.row({fmt_g17(bs.kappa_grid[k]), fmt_int(nu),
               fmt_g17(bs.energies(nu, k)), label_name(bs.labels[k][nu])});
  return csv.str();
}

}  // namespace detail_cli

/// Entry point shared by the binary and the tests. Returns the process
/// exit code: 0 success, 2 configuration error, 3 convergence failure,
/// 64 usage error.
inline int run_cli(int argc, const char* const* argv) {
  using detail_cli::CommonOpts;
  CLI::App app{"Quantum and classical dynamics of a magnetic strip lattice "
               "in an electric field"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  CommonOpts opts;

  // ---- bands ----
  int kappa_count = 256;
  auto* bands_cmd =
      app.add_subcommand("bands", "magnetic bands of the infinite lattice");
  opts.add_lattice_flags(bands_cmd, false);
  opts.add_common_flags(bands_cmd);
  bands_cmd->add_option("--kappas", kappa_count, "kappa grid points");

  // ---- strip ----
  auto* strip_cmd =
      app.add_subcommand("strip", "F = 0 strip spectrum with edge labels");
  opts.add_lattice_flags(strip_cmd, false);
  opts.add_common_flags(strip_cmd);
  strip_cmd->add_option("--kappas", kappa_count, "kappa grid points");

  // ---- ladder ----
  double ladder_kappa = 0.0, ladder_center = 0.0, ladder_halfwidth = -1.0;
  std::string ladder_center_expr;
  auto* ladder_cmd = app.add_subcommand(
      "ladder", "1D Stark ladder at fixed longitudinal quasimomentum");
  opts.add_lattice_flags(ladder_cmd);
  opts.add_common_flags(ladder_cmd);
  ladder_cmd->add_option("--kappa", ladder_kappa, "quasimomentum");
  ladder_cmd->add_option("--center", ladder_center_expr,
                         "energy window center (expression)");
  ladder_cmd->add_option("--halfwidth", ladder_halfwidth,
                         "energy window half-width");

  // ---- lss ----
  std::string route = "both";
  int lss_kappas = 256;
  auto* lss_cmd = app.add_subcommand(
      "lss", "Landau-Stark states of the strip (direct and Floquet routes)");
  opts.add_lattice_flags(lss_cmd);
  opts.add_common_flags(lss_cmd);
  lss_cmd->add_option("--route", route, "direct|floquet|both");
  lss_cmd->add_option("--kappas", lss_kappas, "Fourier grid of the assembly");

  // ---- floquet ----
  int floq_kappas = 64;
  auto* floq_cmd = app.add_subcommand(
      "floquet", "one-period Floquet spectrum of the driven chain");
  opts.add_lattice_flags(floq_cmd);
  opts.add_common_flags(floq_cmd);
  floq_cmd->add_option("--kappas", floq_kappas, "kappa grid points");

  // ---- evolve ----
  std::string tfinal_expr = "10TB", packet = "transporting";
  std::string checkpoints_expr;
  double packet_width = 5.0;
  int center_l = 0, center_m = 0, per_tb = 1;
  auto* evolve_cmd =
      app.add_subcommand("evolve", "wave-packet propagation with observables");
  opts.add_lattice_flags(evolve_cmd);
  opts.add_common_flags(evolve_cmd);
  evolve_cmd->add_option("--tfinal", tfinal_expr, "final time (expression)");
  evolve_cmd->add_option("--packet", packet, "transporting|gaussian");
  evolve_cmd->add_option("--width", packet_width, "packet width (sites)");
  evolve_cmd->add_option("--center-l", center_l, "packet center, x");
  evolve_cmd->add_option("--center-m", center_m, "packet center, y");
  evolve_cmd->add_option("--per-tb", per_tb, "checkpoints per Bloch period");
  evolve_cmd->add_option("--checkpoints", checkpoints_expr,
                         "comma list of snapshot times (expressions)");

  // ---- depletion ----
  std::string dep_tfinal = "1.2*TB*Lxq";  // placeholder, resolved below
  bool contrast = true;
  auto* dep_cmd = app.add_subcommand(
      "depletion", "ground-band depletion rate via the driven chain");
  opts.add_lattice_flags(dep_cmd);
  opts.add_common_flags(dep_cmd);
  dep_cmd->add_option("--tfinal", dep_tfinal, "final time (expression)");
  dep_cmd->add_flag("!--no-contrast", contrast,
                    "skip the periodic-boundary contrast run");

  // ---- classical ----
  std::string ek_expr = "-2J+wc/2", cl_tfinal = "400Tc", wall = "hard";
  std::string sample_dt_expr = "Tc/50";
  double x0 = 0.0, y0 = 0.0;
  auto* cl_cmd =
      app.add_subcommand("classical", "classical trajectory in the box");
  opts.add_lattice_flags(cl_cmd);
  opts.add_common_flags(cl_cmd);
  cl_cmd->add_option("--EK", ek_expr, "initial kinetic energy (expression)");
  cl_cmd->add_option("--tfinal", cl_tfinal, "final time (expression)");
  cl_cmd->add_option("--sample-dt", sample_dt_expr, "sampling step");
  cl_cmd->add_option("--wall", wall, "hard|smooth|none");
  cl_cmd->add_option("--x0", x0, "initial x");
  cl_cmd->add_option("--y0", y0, "initial y");

  // ---- sensitivity ----
  double delta = 1e-8;
  std::string sens_tfinal = "600Tc";
  auto* sens_cmd = app.add_subcommand(
      "sensitivity", "twin-trajectory divergence (chaos probe)");
  opts.add_lattice_flags(sens_cmd);
  opts.add_common_flags(sens_cmd);
  sens_cmd->add_option("--EK", ek_expr, "initial kinetic energy (expression)");
  sens_cmd->add_option("--delta", delta, "initial y perturbation");
  sens_cmd->add_option("--tfinal", sens_tfinal, "final time (expression)");
  sens_cmd->add_option("--wall", wall, "hard|smooth|none");

  // ---- levelflow ----
  double f_lo = 0.0, f_hi = 0.0;
  int f_count = 100;
  auto* flow_cmd = app.add_subcommand(
      "levelflow", "fundamental-interval energies versus F");
  opts.add_lattice_flags(flow_cmd, false);
  opts.add_common_flags(flow_cmd);
  flow_cmd->add_option("--Fmin", f_lo, "lowest field (0 = 0.1 F_cr)");
  flow_cmd->add_option("--Fmax", f_hi, "highest field (0 = 0.6 F_cr)");
  flow_cmd->add_option("--count", f_count, "number of field values");

  // ---- spacings ----
  auto* spac_cmd = app.add_subcommand(
      "spacings", "pooled level-spacing statistics against Wigner-Dyson");
  opts.add_lattice_flags(spac_cmd, false);
  opts.add_common_flags(spac_cmd);
  spac_cmd->add_option("--Fmin", f_lo, "lowest field (0 = 0.1 F_cr)");
  spac_cmd->add_option("--Fmax", f_hi, "highest field (0 = 0.6 F_cr)");
  spac_cmd->add_option("--count", f_count, "number of field values");

  // ---- recipes ----
  std::string recipe_name;
  auto* rec_cmd = app.add_subcommand(
      "recipes", "print the canned figure parameter sets");
  rec_cmd->add_option("name", recipe_name, "recipe to print (default: all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 64;
  }

  try {
    opts.apply_threads();

    if (rec_cmd->parsed()) {
      nlohmann::json out = nlohmann::json::array();
      if (!recipe_name.empty()) {
        const Recipe& r = find_recipe(recipe_name);
        nlohmann::json j{{"name", r.name}, {"description", r.description},
                         {"params", r.params}};
        out.push_back(j);
      } else {
        for (const auto& r : figure_recipes())
          out.push_back(nlohmann::json{{"name", r.name},
                                       {"description", r.description},
                                       {"params", r.params}});
      }
      std::printf("%s\n", out.dump(2).c_str());
      return 0;
    }

    if (bands_cmd->parsed()) {
      auto [r, q] = parse_alpha(opts.alpha_text);
      auto bs = harper_bands(r, q, opts.J, kappa_count);
      RunManifest man("bands", opts.seed);
      man.set_param("alpha", opts.alpha_text);
      man.set_param("J", opts.J);
      man.set_param("kappas", static_cast<long>(kappa_count));
      man.write_file(opts.path("bands.csv"), detail_cli::band_csv(bs));
      CsvWriter iv({"band_index", "lo", "hi"});
      for (int nu = 0; nu < bs.band_count(); ++nu)
        iv.row({fmt_int(nu), fmt_g17(bs.band_intervals[nu].first),
                fmt_g17(bs.band_intervals[nu].second)});
      man.write_file(opts.path("band_intervals.csv"), iv.str());
      man.write(opts.path("manifest.json"));
      return 0;
    }

    if (strip_cmd->parsed()) {
      auto [r, q] = parse_alpha(opts.alpha_text);
      auto bs = strip_spectrum(r, q, opts.J, opts.Lx, kappa_count,
                               opts.boundary());
      RunManifest man("strip", opts.seed);
      man.set_param("alpha", opts.alpha_text);
      man.set_param("J", opts.J);
      man.set_param("Lx", static_cast<long>(opts.Lx));
      man.set_param("bc_x", opts.bc);
      man.write_file(opts.path("strip.csv"), detail_cli::band_csv(bs));
      man.write(opts.path("manifest.json"));
      return 0;
    }

    if (ladder_cmd->parsed()) {
      auto cfg = opts.lattice(ladder_cmd);
      ExprContext ctx = opts.expr_context(cfg);
      if (!ladder_center_expr.empty())
        ladder_center = eval_expression(ladder_center_expr, ctx);
      if (ladder_halfwidth <= 0.0) ladder_halfwidth = 2.0 * cfg.F;
      auto lad = stark_harper_ladder(cfg.alpha_num, cfg.alpha_den, cfg.J,
                                     cfg.F, ladder_kappa, ladder_center,
                                     ladder_halfwidth);
      CsvWriter csv({"kappa", "energy", "slope", "transporting", "residual"});
      for (const auto& st : lad.states)
        csv.row({fmt_g17(lad.kappa), fmt_g17(st.energy), fmt_g17(st.slope),
                 st.transporting ? "1" : "0", fmt_g17(st.residual)});
      RunManifest man("ladder", opts.seed);
      man.set_param("alpha", opts.alpha_text);
      man.set_param("J", cfg.J);
      man.set_param("F", cfg.F);
      man.set_param("kappa", ladder_kappa);
      man.write_file(opts.path("ladder.csv"), csv.str());
      man.write(opts.path("manifest.json"));
      return 0;
    }

    if (lss_cmd->parsed()) {
      auto cfg = opts.lattice(lss_cmd);
      RunManifest man("lss", opts.seed);
      man.set_param("alpha", opts.alpha_text);
      man.set_param("J", cfg.J);
      man.set_param("F", cfg.F);
      man.set_param("Lx", static_cast<long>(cfg.Lx));
      man.set_param("route", route);

      std::vector<LandauStarkState> direct, floq;
      if (route == "direct" || route == "both") {
        direct = diagonalize_strip(cfg);
        std::ostringstream nd;
        for (const auto& st : direct) nd << state_record(st) << "\n";
        man.write_file(opts.path("states_direct.ndjson"), nd.str());
        auto rho = spatial_density(direct);
        CsvWriter csv({"l", "m", "rho"});
        for (int li = 0; li < cfg.Lx; ++li)
          for (int mj = 0; mj < cfg.ny(); ++mj)
            csv.row({fmt_int(cfg.l_min() + li), fmt_int(cfg.m_min + mj),
                     fmt_g17(rho(mj, li))});
        man.write_file(opts.path("density.csv"), csv.str());
      }
      if (route == "floquet" || route == "both") {
        auto fam = build_floquet_family(cfg, lss_kappas);
        floq = floquet_landau_stark(fam, 0);
        std::ostringstream nd;
        for (const auto& st : floq) nd << state_record(st) << "\n";
        man.write_file(opts.path("states_floquet.ndjson"), nd.str());
      }
      if (route == "both") {
        auto match = match_routes(direct, floq, cfg.F);
        nlohmann::json j;
        j["min_overlap"] = match.overlaps.minCoeff();
        j["max_phase_error"] = match.phase_err.maxCoeff();
        man.write_file(opts.path("route_match.json"), j.dump(2) + "\n");
      }
      man.write(opts.path("manifest.json"));
      return 0;
    }

    if (floq_cmd->parsed()) {
      auto cfg = opts.lattice(floq_cmd);
      auto fam = build_floquet_family(cfg, floq_kappas);
      CsvWriter csv({"nu", "eigenphase", "energy"});
      for (int nu = 0; nu < cfg.Lx; ++nu)
        csv.row({fmt_int(nu + 1), fmt_g17(fam.eigenphases[nu]),
                 fmt_g17(fam.energies[nu])});
      RunManifest man("floquet", opts.seed);
      man.set_param("alpha", opts.alpha_text);
      man.set_param("J", cfg.J);
      man.set_param("F", cfg.F);
      man.set_param("kappas", static_cast<long>(floq_kappas));
      man.set_param("steps_per_period",
                    static_cast<long>(fam.steps_per_period));
      man.write_file(opts.path("floquet.csv"), csv.str());
      man.write(opts.path("manifest.json"));
      return 0;
    }

    if (evolve_cmd->parsed()) {
      auto cfg = opts.lattice(evolve_cmd);
      ExprContext ctx = opts.expr_context(cfg);
      double t_final = eval_expression(tfinal_expr, ctx);
      double T_B = bloch_period(cfg.F);

      WaveFunction psi0(cfg);
      if (packet == "transporting") {
        TransportingPacketOptions popt;
        popt.width = packet_width;
        popt.center_l = center_l;
        popt.center_m = center_m;
        psi0 = make_transporting_packet(cfg, popt);
      } else if (packet == "gaussian") {
        for (int l = cfg.l_min(); l <= cfg.l_max(); ++l)
          for (int m = cfg.m_min; m <= cfg.m_max; ++m) {
            double dx = l - center_l, dy = m - center_m;
            psi0.at(l, m) = std::exp(-(dx * dx + dy * dy) /
                                     (4.0 * packet_width * packet_width));
          }
        psi0.normalize();
      } else {
        throw ConfigError("packet must be transporting or gaussian");
      }

      auto bands = harper_bands(cfg.alpha_num, cfg.alpha_den, cfg.J, 64);
      BandProjector proj(cfg, bands);
      PropagateOptions popt;
      popt.track_bands = true;
      popt.projector = &proj;
      popt.track_clusters = true;
      if (!checkpoints_expr.empty()) {
        std::stringstream ss(checkpoints_expr);
        std::string item;
        while (std::getline(ss, item, ','))
          popt.snapshot_times.push_back(eval_expression(item, ctx));
      } else {
        popt.snapshot_times = {0.0, 0.5 * t_final, t_final};
      }

      int n_checkpoints =
          std::max(1, static_cast<int>(std::round(t_final / T_B * per_tb)));
      std::vector<double> ts;
      for (int i = 0; i <= n_checkpoints; ++i)
        ts.push_back(t_final * i / n_checkpoints);
      auto run = propagate(psi0, ts, popt);

      int q = bands.band_count();
      std::vector<std::string> cols = {"t",     "t_over_TB", "mean_x",
                                       "mean_y", "var_x",    "var_y",
                                       "norm"};
      for (int b = 0; b < q; ++b) cols.push_back("P_band_" + std::to_string(b));
      cols.push_back("P_gap");
      cols.push_back("n_clusters");
      CsvWriter csv(cols);
      for (const auto& o : run.observables) {
        std::vector<std::string> row = {
            fmt_g17(o.t),      fmt_g17(o.t / T_B), fmt_g17(o.mean_x),
            fmt_g17(o.mean_y), fmt_g17(o.var_x),   fmt_g17(o.var_y),
            fmt_g17(o.norm)};
        for (int b = 0; b <= q; ++b)
          row.push_back(fmt_g17(o.band_populations.size() > b
                                    ? o.band_populations[b]
                                    : 0.0));
        row.push_back(fmt_int(o.n_clusters));
        csv.row(row);
      }
      RunManifest man("evolve", opts.seed);
      man.set_param("alpha", opts.alpha_text);
      man.set_param("J", cfg.J);
      man.set_param("F", cfg.F);
      man.set_param("Lx", static_cast<long>(cfg.Lx));
      man.set_param("bc_x", to_string(cfg.bc_x));
      man.set_param("tfinal", t_final);
      man.set_param("packet", packet);
      man.write_file(opts.path("observables.csv"), csv.str());
      std::ostringstream nd;
      for (size_t i = 0; i < run.snapshots.size(); ++i)
        nd << snapshot_record(run.snapshots[i], run.snapshot_times[i]) << "\n";
      man.write_file(opts.path("snapshots.ndjson"), nd.str());
      man.write(opts.path("manifest.json"));
      return 0;
    }

    if (dep_cmd->parsed()) {
      auto cfg = opts.lattice(dep_cmd);
      double vstar = drift_velocity(cfg.alpha(), cfg.F);
      double t_final = 1.2 * cfg.Lx / vstar;
      if (dep_cmd->count("--tfinal") > 0)
        t_final = eval_expression(dep_tfinal, opts.expr_context(cfg));
      auto res = band_depletion(cfg, t_final);
      CsvWriter csv({"t", "t_over_TB", "P_ground"});
      double T_B = bloch_period(cfg.F);
      for (size_t i = 0; i < res.times.size(); ++i)
        csv.row({fmt_g17(res.times[i]), fmt_g17(res.times[i] / T_B),
                 fmt_g17(res.ground_population[i])});
      nlohmann::json j;
      j["beta"] = res.beta;
      j["beta_expected"] = vstar / cfg.Lx;
      j["fit_r2"] = res.fit.r2;
      j["ensemble_size"] = res.ensemble_size;
      if (contrast) {
        auto cfg_p = cfg;
        cfg_p.bc_x = cfg.bc_x == BoundaryX::Periodic ? BoundaryX::Dirichlet
                                                     : BoundaryX::Periodic;
        auto res_p = band_depletion(cfg_p, t_final);
        j["beta_contrast"] = res_p.beta;
        j["contrast_bc"] = to_string(cfg_p.bc_x);
      }
      RunManifest man("depletion", opts.seed);
      man.set_param("alpha", opts.alpha_text);
      man.set_param("J", cfg.J);
      man.set_param("F", cfg.F);
      man.set_param("Lx", static_cast<long>(cfg.Lx));
      man.set_param("bc_x", to_string(cfg.bc_x));
      man.write_file(opts.path("depletion.csv"), csv.str());
      man.write_file(opts.path("depletion_fit.json"), j.dump(2) + "\n");
      man.write(opts.path("manifest.json"));
      return 0;
    }

    if (cl_cmd->parsed() || sens_cmd->parsed()) {
      bool is_sens = sens_cmd->parsed();
      const CLI::App* cmd = is_sens ? sens_cmd : cl_cmd;
      auto [r, q] = parse_alpha(opts.alpha_text);
      ClassicalParams p;
      p.alpha = static_cast<double>(r) / q;
      p.J = opts.J;
      p.F = opts.F;
      p.Lx = opts.Lx;
      if (wall == "hard")
        p.wall = ClassicalParams::Wall::Hard;
      else if (wall == "smooth")
        p.wall = ClassicalParams::Wall::Smooth;
      else if (wall == "none")
        p.wall = ClassicalParams::Wall::None;
      else
        throw ConfigError("wall must be hard, smooth or none");

      ExprContext ctx;
      ctx.J = p.J;
      ctx.alpha = p.alpha;
      ctx.F = p.F;
      double ek = eval_expression(ek_expr, ctx);
      double c = -ek / p.J - 1.0;
      if (c < -1.0 || c > 1.0)
        throw ConfigError("EK outside the reachable kinetic band");
      PhaseSpacePoint s0;
      s0.x = x0;
      s0.y = y0;
      s0.px = std::acos(c) + 2.0 * pi * p.alpha * y0;
      s0.py = 0.0;
      (void)cmd;

      RunManifest man(is_sens ? "sensitivity" : "classical", opts.seed);
      man.set_param("alpha", opts.alpha_text);
      man.set_param("J", p.J);
      man.set_param("F", p.F);
      man.set_param("Lx", static_cast<long>(opts.Lx));
      man.set_param("EK", ek);
      man.set_param("wall", wall);

      if (is_sens) {
        double t_final = eval_expression(sens_tfinal, ctx);
        auto rep = sensitivity_probe(s0, delta, p, t_final, 0.5);
        CsvWriter csv({"t", "distance"});
        for (size_t i = 0; i < rep.times.size(); ++i)
          csv.row({fmt_g17(rep.times[i]), fmt_g17(rep.distance[i])});
        nlohmann::json j;
        j["rate"] = rep.rate;
        j["r2"] = rep.r2;
        j["fit_t_begin"] = rep.fit_t_begin;
        j["fit_t_end"] = rep.fit_t_end;
        j["delta"] = delta;
        man.set_param("tfinal", t_final);
        man.write_file(opts.path("divergence.csv"), csv.str());
        man.write_file(opts.path("divergence_fit.json"), j.dump(2) + "\n");
      } else {
        double t_final = eval_expression(cl_tfinal, ctx);
        double dt = eval_expression(sample_dt_expr, ctx);
        auto traj = integrate(s0, p, t_final, dt);
        double tc = 2.0 * pi / (2.0 * pi * p.alpha * p.J);
        CycleReport rep;
        bool have_cycles = false;
        if (p.wall != ClassicalParams::Wall::None) {
          try {
            rep = bloch_cycle_analysis(traj, p);
            have_cycles = true;
          } catch (const DimensionError&) {
          }
        }
        auto regime_at = [&](double t) -> std::string {
          if (!have_cycles) return "bulk";
          for (const auto& sg : rep.segments)
            if (t >= sg.t_begin && t <= sg.t_end)
              return sg.edge ? (sg.side > 0 ? "edge_right" : "edge_left")
                             : "bulk";
          return "bulk";
        };
        CsvWriter csv({"t", "t_over_Tc", "x", "y", "px", "py", "E_K",
                       "regime_label"});
        for (const auto& s : traj.samples)
          csv.row({fmt_g17(s.t), fmt_g17(s.t / tc), fmt_g17(s.x),
                   fmt_g17(s.y), fmt_g17(s.px), fmt_g17(s.py), fmt_g17(s.ek),
                   regime_at(s.t)});
        nlohmann::json j;
        j["energy_drift"] = traj.energy_drift;
        j["wall_events"] = traj.wall_events.size();
        if (have_cycles) {
          j["mean_drift_crossing"] = rep.mean_drift_crossing;
          j["drift_crossings"] = rep.drift_crossings;
          j["return_crossings"] = rep.return_crossings;
          j["detachments"] = rep.detachments;
        }
        man.set_param("tfinal", t_final);
        man.write_file(opts.path("trajectory.csv"), csv.str());
        man.write_file(opts.path("cycles.json"), j.dump(2) + "\n");
      }
      man.write(opts.path("manifest.json"));
      return 0;
    }

    if (flow_cmd->parsed() || spac_cmd->parsed()) {
      auto [r, q] = parse_alpha(opts.alpha_text);
      double alpha = static_cast<double>(r) / q;
      double fcr = critical_field(alpha, opts.J);
      if (f_lo <= 0.0) f_lo = 0.1 * fcr;
      if (f_hi <= 0.0) f_hi = 0.6 * fcr;
      auto grid = uniform_grid(f_lo, f_hi, f_count);

      RunManifest man(flow_cmd->parsed() ? "levelflow" : "spacings",
                      opts.seed);
      man.set_param("alpha", opts.alpha_text);
      man.set_param("J", opts.J);
      man.set_param("Lx", static_cast<long>(opts.Lx));
      man.set_param("Fmin", f_lo);
      man.set_param("Fmax", f_hi);
      man.set_param("count", static_cast<long>(f_count));

      if (flow_cmd->parsed()) {
        auto flow =
            spectrum_flow(r, q, opts.J, opts.Lx, opts.boundary(), grid);
        CsvWriter csv({"F", "nu", "energy", "energy_over_F"});
        for (int i = 0; i < flow.F_grid.size(); ++i)
          for (int nu = 0; nu < opts.Lx; ++nu)
            csv.row({fmt_g17(flow.F_grid[i]), fmt_int(nu + 1),
                     fmt_g17(flow.energies(i, nu)),
                     fmt_g17(flow.energies(i, nu) / flow.F_grid[i])});
        man.write_file(opts.path("levelflow.csv"), csv.str());
      } else {
        auto st = strip_spacing_statistics(r, q, opts.J, opts.Lx,
                                           opts.boundary(), grid);
        CsvWriter csv({"s"});
        for (double s : st.spacings) csv.row({fmt_g17(s)});
        nlohmann::json j;
        j["bins"] = std::vector<double>(
            st.hist_centers.data(), st.hist_centers.data() + st.hist_centers.size());
        j["counts"] = std::vector<double>(
            st.hist_density.data(), st.hist_density.data() + st.hist_density.size());
        j["ks_wd"] = st.ks_wigner_dyson;
        j["ks_poisson"] = st.ks_poisson;
        j["mean_r"] = st.mean_gap_ratio;
        j["n_spacings"] = st.n_spacings;
        man.write_file(opts.path("spacings.csv"), csv.str());
        man.write_file(opts.path("spacings_stats.json"), j.dump(2) + "\n");
      }
      man.write(opts.path("manifest.json"));
      return 0;
    }

    throw ConfigError("no subcommand dispatched");
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const TruncationError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const ConvergenceError& e) {
    std::fprintf(stderr, "convergence failure: %s\n", e.what());
    return 3;
  } catch (const WindowEscapeError& e) {
    std::fprintf(stderr, "convergence failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace starkstrip::cli
