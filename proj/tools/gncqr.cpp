// gncqr: data preparation, single fits, alpha tuning, backtests and exports
// driven by a JSON run configuration.

#include "gncqr/gncqr.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace gncqr;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string config;
    std::optional<std::string> horizon;
    std::optional<std::string> model;
    std::optional<double> alpha;
    std::optional<int> jobs;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    bool dry_run = false;
};

struct Context {
    RunConfig rc;
    fs::path out;
    std::shared_ptr<spdlog::logger> log;
};

std::shared_ptr<spdlog::logger> make_logger(const std::string& config_level) {
    auto log = spdlog::stderr_color_mt("gncqr");
    std::string level = config_level;
    if (const char* env = std::getenv("GNCQR_LOG")) level = env;
    if (level == "debug") log->set_level(spdlog::level::debug);
    else if (level == "error") log->set_level(spdlog::level::err);
    else log->set_level(spdlog::level::info);
    log->set_pattern("[%l] %v");
    return log;
}

Context load_context(const Options& o) {
    Context ctx;
    try {
        ctx.rc = load_run_config(o.config);
        BacktestConfig& bt = ctx.rc.backtest;
        if (o.seed) ctx.rc.seed = *o.seed;
        if (o.jobs) {
            if (*o.jobs < 0) throw InvalidInput("--jobs must be non-negative");
            bt.jobs = *o.jobs == 0 ? default_jobs() : *o.jobs;
        }
        if (o.horizon) bt.horizons = {Horizon::parse(*o.horizon)};
        if (o.alpha && !(*o.alpha >= 0.0)) throw InvalidInput("--alpha must be non-negative");
        if (o.model) (void)parse_model(*o.model);
        bt.validate();
    } catch (const InvalidInput& e) {
        throw UsageError(e.what());
    }
    ctx.out = o.out ? fs::path(*o.out) : ctx.rc.output_dir;
    ctx.log = make_logger(ctx.rc.log_level);
    return ctx;
}

/// Runs `body` against a staging directory and swaps it into `dir` on success.
void write_tree(const fs::path& dir, const std::function<void(const fs::path&)>& body) {
    const fs::path staging = dir.string() + ".partial";
    fs::remove_all(staging);
    fs::create_directories(staging);
    try {
        body(staging);
        fs::remove_all(dir);
        fs::rename(staging, dir);
    } catch (...) {
        std::error_code ec;
        fs::remove_all(staging, ec);
        throw;
    }
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write " + path.string());
    body(os);
    if (!os) throw DataError("write failed for " + path.string());
}

int cmd_prepare(const Options& o) {
    Context ctx = load_context(o);
    const RunInputs in = load_inputs(ctx.rc);
    if (o.dry_run) {
        for (const Horizon& h : ctx.rc.backtest.horizons) std::cout << "panel_" << h.label() << ".csv\n";
        return kExitOk;
    }
    write_tree(ctx.out, [&](const fs::path& dir) {
        for (std::size_t i = 0; i < in.raw.size(); ++i)
            if (ctx.rc.high_freq[i].frequency == Frequency::weekly)
                write_file(dir / ("weeks_" + in.raw[i].id + ".csv"),
                           [&](std::ostream& os) { write_calendar_weeks_csv(os, in.weeks[i]); });
        for (const Horizon& h : ctx.rc.backtest.horizons) {
            const MixedFrequencyDataset panel = build_panel(in.data.target, in.data.regressors, h, ctx.rc.backtest.ar_lags);
            write_file(dir / ("panel_" + h.label() + ".csv"), [&](std::ostream& os) { write_panel_csv(os, panel); });
            ctx.log->info("h={}: {} panel rows ({} to {})", h.label(), panel.rows(), panel.quarter(0),
                          panel.quarter(panel.rows() - 1));
        }
    });
    return kExitOk;
}

AlphaSelection tune_on_panel(const Context& ctx, const MixedFrequencyDataset& panel, Horizon h) {
    const BacktestConfig& bt = ctx.rc.backtest;
    const HvBlockPlan plan = make_plan(panel.rows(), bt.cv_folds, h);
    return select_alpha(panel, lag_maps(ModelKind::gncqr, bt.regressors), bt.grid, bt.alpha_grid, plan, bt.cv_loss,
                        bt.solver, bt.jobs);
}

int cmd_fit(const Options& o) {
    Context ctx = load_context(o);
    const BacktestConfig& bt = ctx.rc.backtest;
    const Horizon h = bt.horizons.front();
    const ModelKind model = o.model ? parse_model(*o.model) : ModelKind::gncqr;
    if (o.alpha && !uses_alpha(model)) ctx.log->warn("--alpha is ignored for model {}", to_string(model));
    const RunInputs in = load_inputs(ctx.rc);
    const MixedFrequencyDataset panel = build_panel(in.data.target, in.data.regressors, h, bt.ar_lags);
    if (o.dry_run) {
        std::cout << "fit " << to_string(model) << " h=" << h.label() << " on " << panel.rows() << " rows\n";
        return kExitOk;
    }

    double alpha = bt.alpha;
    std::optional<AlphaSelection> cv;
    if (uses_alpha(model)) {
        if (o.alpha) alpha = *o.alpha;
        else if (bt.alpha_mode != AlphaMode::fixed) {
            cv = tune_on_panel(ctx, panel, h);
            alpha = cv->chosen_alpha;
            ctx.log->info("cross-validated alpha {}", format_double(alpha));
        }
    }
    const QuantilePanelFit fit = fit_joint(panel, lag_maps(model, bt.regressors), bt.grid, model_constraints(model, alpha), bt.solver);
    ctx.log->info("{} h={}: status {}, objective {}, {} iterations", to_string(model), h.label(), lp::to_string(fit.status),
                  format_double(fit.objective_value), fit.iterations);

    const std::vector<ModelExport> exports{{to_string(model), model, fit}};
    write_tree(ctx.out, [&](const fs::path& dir) {
        write_file(dir / "coefficients.csv", [&](std::ostream& os) {
            os << "model,term,tau,scaled,raw\n";
            for (Index q = 0; q < bt.grid.size(); ++q) {
                const Vector raw = fit.raw_coefficients(q);
                for (Index j = 0; j < fit.delta.rows(); ++j)
                    os << to_string(model) << ',' << fit.layout.terms[static_cast<std::size_t>(j)] << ','
                       << format_double(bt.grid[q]) << ',' << format_double(fit.delta(j, q)) << ','
                       << format_double(raw[j]) << '\n';
            }
        });
        for (const auto& reg : bt.regressors) {
            const SurfaceExport s = export_surface(exports, reg.id, h);
            write_file(dir / ("surface_" + reg.id + "_" + h.label() + ".csv"), [&](std::ostream& os) { write_surface_csv(os, s); });
            write_file(dir / ("overall_" + reg.id + "_" + h.label() + ".csv"), [&](std::ostream& os) { write_overall_csv(os, s); });
        }
        const Matrix fitted = predict(fit, panel);
        write_file(dir / "fitted.csv", [&](std::ostream& os) {
            os << "quarter,y";
            for (double tau : bt.grid.taus) os << ",q_" << format_double(tau);
            os << '\n';
            for (Index t = 0; t < panel.rows(); ++t) {
                os << panel.quarter(t) << ',' << format_double(panel.target[t]);
                for (Index q = 0; q < fitted.cols(); ++q) os << ',' << format_double(fitted(t, q));
                os << '\n';
            }
        });
        if (cv) write_file(dir / ("cv_audit_" + h.label() + ".csv"), [&](std::ostream& os) { write_cv_audit_csv(os, *cv); });
        nlohmann::ordered_json m;
        m["model"] = to_string(model);
        m["horizon"] = h.label();
        m["rows"] = panel.rows();
        m["constraints"] = to_string(fit.constraints.mode);
        if (uses_alpha(model)) m["alpha"] = alpha;
        m["status"] = lp::to_string(fit.status);
        m["objective"] = fit.objective_value;
        m["iterations"] = fit.iterations;
        write_file(dir / "fit_manifest.json", [&](std::ostream& os) { os << m.dump(2) << '\n'; });
    });
    return fit.optimal() ? kExitOk : kExitFailure;
}

int cmd_tune(const Options& o) {
    Context ctx = load_context(o);
    const BacktestConfig& bt = ctx.rc.backtest;
    const RunInputs in = load_inputs(ctx.rc);
    std::vector<std::pair<Horizon, MixedFrequencyDataset>> panels;
    for (const Horizon& h : bt.horizons) panels.emplace_back(h, build_panel(in.data.target, in.data.regressors, h, bt.ar_lags));
    if (o.dry_run) {
        for (const auto& [h, p] : panels)
            std::cout << "tune h=" << h.label() << ": " << p.rows() << " rows, " << bt.cv_folds << " folds x "
                      << bt.alpha_grid.size() << " alphas\n";
        return kExitOk;
    }
    nlohmann::ordered_json summary = nlohmann::ordered_json::object();
    std::vector<AlphaSelection> selections;
    for (const auto& [h, p] : panels) {
        selections.push_back(tune_on_panel(ctx, p, h));
        summary[h.label()] = selections.back().chosen_alpha;
        std::cout << "h=" << h.label() << " alpha=" << format_double(selections.back().chosen_alpha) << '\n';
    }
    write_tree(ctx.out, [&](const fs::path& dir) {
        for (std::size_t i = 0; i < panels.size(); ++i)
            write_file(dir / ("cv_audit_" + panels[i].first.label() + ".csv"),
                       [&](std::ostream& os) { write_cv_audit_csv(os, selections[i]); });
        write_file(dir / "alpha.json", [&](std::ostream& os) { os << summary.dump(2) << '\n'; });
    });
    return kExitOk;
}

int cmd_backtest(const Options& o) {
    Context ctx = load_context(o);
    BacktestConfig bt = ctx.rc.backtest;
    if (o.model) bt.models = {parse_model(*o.model)};
    if (o.alpha) {
        bt.alpha_mode = AlphaMode::fixed;
        bt.alpha = *o.alpha;
    }
    const RunInputs in = load_inputs(ctx.rc);
    if (o.dry_run) {
        bt.validate();
        for (const Horizon& h : bt.horizons) {
            const MixedFrequencyDataset panel = build_panel(in.data.target, in.data.regressors, h, bt.ar_lags);
            Index evals = 0;
            for (Index i = 0; i < panel.rows(); ++i) {
                Index n = 0;
                while (n < panel.rows() && 12 * (panel.target_quarter[static_cast<std::size_t>(n)] + 1) <= panel.cutoff_week[static_cast<std::size_t>(i)]) ++n;
                evals += n >= bt.start_size ? 1 : 0;
            }
            const Index refits = (evals + bt.refit_every - 1) / bt.refit_every;
            std::cout << "h=" << h.label() << ": " << panel.rows() << " panel rows, " << evals << " evaluation quarters, "
                      << refits << " refits x " << bt.models.size() << " models";
            if (bt.alpha_mode != AlphaMode::fixed)
                std::cout << ", CV " << bt.cv_folds << " folds x " << bt.alpha_grid.size() << " alphas ("
                          << to_string(bt.alpha_mode) << ")";
            std::cout << '\n';
        }
        return kExitOk;
    }
    const BacktestResult res = run_backtest(bt, in.data, [&](const std::string& msg) { ctx.log->info("{}", msg); });
    nlohmann::ordered_json extra;
    extra["seed"] = ctx.rc.seed;
    extra["data"] = ctx.rc.synthetic ? "synthetic" : "csv";
    write_backtest_outputs(ctx.out, res, bt, extra);
    print_summary(std::cout, res);
    if (!res.all_optimal()) {
        ctx.log->error("some fits did not reach an optimal solver status");
        return kExitFailure;
    }
    return kExitOk;
}

int cmd_export(const Options& o) {
    Context ctx = load_context(o);
    BacktestConfig bt = ctx.rc.backtest;
    if (o.model) bt.models = {parse_model(*o.model)};
    const RunInputs in = load_inputs(ctx.rc);
    if (o.dry_run) {
        for (const Horizon& h : bt.horizons)
            for (const auto& reg : bt.regressors) std::cout << "surface_" << reg.id << "_" << h.label() << ".csv\n";
        return kExitOk;
    }
    const double alpha = o.alpha.value_or(bt.alpha);
    bool optimal = true;
    write_tree(ctx.out, [&](const fs::path& dir) {
        for (const Horizon& h : bt.horizons) {
            const MixedFrequencyDataset panel = build_panel(in.data.target, in.data.regressors, h, bt.ar_lags);
            const std::vector<std::string> labels = model_labels(bt.models);
            std::vector<ModelExport> exports(bt.models.size());
            parallel_for(bt.models.size(), bt.jobs, [&](std::size_t m) {
                exports[m] = {labels[m], bt.models[m],
                              fit_joint(panel, lag_maps(bt.models[m], bt.regressors), bt.grid, model_constraints(bt.models[m], alpha), bt.solver)};
            });
            for (std::size_t m = 0; m < exports.size(); ++m) {
                optimal = optimal && exports[m].fit.optimal();
                // The assembled program in CPLEX LP format, for cross-checking with other solvers.
                const DesignLayout layout = make_layout(panel, lag_maps(bt.models[m], bt.regressors));
                auto [scaled, scaling] = minmax_fit_apply(build_design(panel, layout));
                const QuantileLp qlp = assemble_lp(scaled, panel.target, bt.grid, model_constraints(bt.models[m], alpha), scaling);
                write_file(dir / ("lp_" + labels[m] + "_" + h.label() + ".lp"), [&](std::ostream& os) { lp::write_cplex_lp(os, qlp.problem); });
            }
            for (const auto& reg : bt.regressors) {
                const SurfaceExport s = export_surface(exports, reg.id, h);
                write_file(dir / ("surface_" + reg.id + "_" + h.label() + ".csv"), [&](std::ostream& os) { write_surface_csv(os, s); });
                write_file(dir / ("overall_" + reg.id + "_" + h.label() + ".csv"), [&](std::ostream& os) { write_overall_csv(os, s); });
            }
        }
    });
    return optimal ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Non-crossing mixed-frequency quantile regression"};
    app.require_subcommand(1);
    Options o;
    auto add_common = [&](CLI::App* sub) {
        sub->set_help_flag("--help", "Print this help message and exit");  // -h would clash with --h
        sub->add_option("--config", o.config, "Run configuration (JSON)")->required();
        sub->add_option("--h", o.horizon, "Horizon in quarters, e.g. 4 or 1/12");
        sub->add_option("--model", o.model, "Model")->check(CLI::IsMember({"qr", "midas-qr", "gncqr", "umidas"}));
        sub->add_option("--alpha", o.alpha, "Fixed constraint tightness");
        sub->add_option("--jobs", o.jobs, "Worker threads (0 = all cores)");
        sub->add_option("--seed", o.seed, "Seed for synthetic data");
        sub->add_option("--out", o.out, "Output directory");
        sub->add_flag("--dry-run", o.dry_run, "Validate and print the plan without solving");
    };
    std::function<int(const Options&)> command;
    const std::vector<std::pair<std::string, std::pair<std::string, int (*)(const Options&)>>> subs = {
        {"prepare", {"Write calendar weeks and aligned panels", cmd_prepare}},
        {"fit", {"Fit one model on the full panel of one horizon", cmd_fit}},
        {"tune", {"Cross-validate alpha per horizon", cmd_tune}},
        {"backtest", {"Run the pseudo out-of-sample exercise", cmd_backtest}},
        {"export", {"Write coefficient surfaces and LP files from full-sample fits", cmd_export}},
    };
    for (const auto& [name, info] : subs) {
        CLI::App* sub = app.add_subcommand(name, info.first);
        add_common(sub);
        auto fn = info.second;
        sub->callback([&command, fn] { command = fn; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }
    try {
        return command(o);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}
