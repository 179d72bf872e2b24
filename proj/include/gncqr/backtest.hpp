#pragma once

// Expanding-window pseudo out-of-sample exercise over several horizons and
// models, with score tables, coefficient surfaces, densities and CV audits.

#include "gncqr/almon.hpp"
#include "gncqr/common.hpp"
#include "gncqr/dataset.hpp"
#include "gncqr/evaluation.hpp"
#include "gncqr/parallel.hpp"
#include "gncqr/solver.hpp"
#include "gncqr/tuning.hpp"

#include <json.hpp>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gncqr {

enum class ModelKind { gncqr, midas_qr, qr, umidas };

inline const char* to_string(ModelKind m) {
    switch (m) {
    case ModelKind::gncqr: return "gncqr";
    case ModelKind::midas_qr: return "midas-qr";
    case ModelKind::qr: return "qr";
    case ModelKind::umidas: return "umidas";
    }
    return "?";
}

inline const char* display_name(ModelKind m) {
    switch (m) {
    case ModelKind::gncqr: return "MIDAS-GNCQR";
    case ModelKind::midas_qr: return "MIDAS-QR";
    case ModelKind::qr: return "QR";
    case ModelKind::umidas: return "UMIDAS-QR";
    }
    return "?";
}

inline ModelKind parse_model(std::string_view s) {
    for (ModelKind m : {ModelKind::gncqr, ModelKind::midas_qr, ModelKind::qr, ModelKind::umidas})
        if (s == to_string(m)) return m;
    throw InvalidInput("unknown model '" + std::string(s) + "' (expected qr, midas-qr, gncqr or umidas)");
}

/// UMIDAS fits are exported as surfaces but never scored.
inline bool is_scored(ModelKind m) { return m != ModelKind::umidas; }

inline bool uses_alpha(ModelKind m) { return m == ModelKind::gncqr; }

/// One high-frequency regressor in the model: lag count and lag polynomial.
struct RegressorSpec {
    std::string id;
    int lags = 12;
    int poly_order = 3;
    bool restricted = true;
};

/// Lag treatment per model: Almon maps for the MIDAS models, a flat average
/// (order-0 polynomial) for plain QR, raw lags for UMIDAS.
inline std::vector<std::optional<AlmonMap>> lag_maps(ModelKind m, const std::vector<RegressorSpec>& regs) {
    std::vector<std::optional<AlmonMap>> maps;
    for (const auto& r : regs) {
        switch (m) {
        case ModelKind::gncqr:
        case ModelKind::midas_qr: maps.emplace_back(make_almon_map(r.lags, r.poly_order, r.restricted)); break;
        case ModelKind::qr: maps.emplace_back(make_almon_map(r.lags, 0, false)); break;
        case ModelKind::umidas: maps.emplace_back(std::nullopt); break;
        }
    }
    return maps;
}

inline Constraints model_constraints(ModelKind m, double alpha) {
    return uses_alpha(m) ? Constraints::adaptive(alpha) : Constraints::plain();
}

enum class AlphaMode { fixed, cv_once, cv_per_origin };

inline const char* to_string(AlphaMode m) {
    switch (m) {
    case AlphaMode::fixed: return "fixed";
    case AlphaMode::cv_once: return "cv-once";
    case AlphaMode::cv_per_origin: return "cv-per-origin";
    }
    return "?";
}

inline AlphaMode parse_alpha_mode(std::string_view s) {
    for (AlphaMode m : {AlphaMode::fixed, AlphaMode::cv_once, AlphaMode::cv_per_origin})
        if (s == to_string(m)) return m;
    throw InvalidInput("unknown alpha mode '" + std::string(s) + "' (expected fixed, cv-once or cv-per-origin)");
}

inline std::vector<Horizon> default_horizons() {
    std::vector<Horizon> h;
    for (int w = 1; w <= 11; ++w) h.push_back(Horizon::from_weeks(w));
    h.push_back(Horizon::quarters(1));
    h.push_back(Horizon::quarters(4));
    return h;
}

struct BacktestConfig {
    std::vector<Horizon> horizons = default_horizons();
    int start_size = 40;   // training rows required at the first origin
    int refit_every = 1;   // origins between refits; predictions in between reuse the last fit
    int ar_lags = 1;
    std::vector<RegressorSpec> regressors;
    std::vector<ModelKind> models = {ModelKind::gncqr, ModelKind::midas_qr, ModelKind::qr};
    QuantileGrid grid = QuantileGrid::standard();
    AlphaMode alpha_mode = AlphaMode::cv_once;
    double alpha = 1.0;  // used when alpha_mode is fixed
    std::vector<double> alpha_grid = default_alpha_grid();
    int cv_folds = 10;
    Weighting cv_loss = Weighting::equal;
    Date pre_cutoff{2019, 12, 31};
    std::vector<int> density_quarters = {2008 * 4 + 1};  // 2008Q2
    DensityOptions density;
    lp::SolverOptions solver;
    int jobs = 1;

    void validate() const {
        if (horizons.empty()) throw InvalidInput("at least one horizon is required");
        for (const Horizon& h : horizons)
            if (h.weeks() <= 0) throw InvalidInput("horizons must be positive");
        if (start_size < 1) throw InvalidInput("start_size must be positive");
        if (refit_every < 1) throw InvalidInput("refit_every must be positive");
        if (ar_lags < 0) throw InvalidInput("ar_lags must be non-negative");
        if (models.empty()) throw InvalidInput("at least one model is required");
        grid.validate();
        if (!(alpha >= 0.0)) throw InvalidInput("alpha must be non-negative");
        if (alpha_mode != AlphaMode::fixed) {
            if (alpha_grid.empty()) throw InvalidInput("alpha grid is empty");
            if (cv_folds < 2) throw InvalidInput("cv_folds must be at least 2");
        }
        for (const auto& r : regressors) {
            if (r.lags < 1) throw InvalidInput(r.id + ": lag count must be positive");
            if (r.poly_order < 0) throw InvalidInput(r.id + ": polynomial order must be non-negative");
        }
        if (density.points < 3) throw InvalidInput("density points must be at least 3");
    }
};

/// Low-frequency target plus high-frequency regressors on their native grids.
struct BacktestData {
    RawSeries target;
    std::vector<HighFrequencySeries> regressors;  // same order as BacktestConfig::regressors
};

struct ScoredModel {
    std::string label;  // unique within the run
    ModelKind model = ModelKind::gncqr;
    Matrix predictions;                // eval rows x Q
    Matrix qs;                         // eval rows x Q
    std::array<Vector, 4> qwcrps;      // per weighting, per eval row
};

struct ScoreCell {
    Index n = 0;
    double mean = std::numeric_limits<double>::quiet_NaN();
    std::optional<DmResult> dm;  // against the reference model; none for the reference itself
};

struct ModelExport {
    std::string label;
    ModelKind model = ModelKind::gncqr;
    QuantilePanelFit fit;  // full-sample fit
};

struct DensityExport {
    int quarter = 0;
    std::string label;
    DensityCurve curve;
};

struct CvRecord {
    int origin_quarter = 0;
    AlphaSelection selection;
};

struct HorizonResult {
    Horizon horizon;
    Index panel_rows = 0;
    std::vector<int> eval_quarters;
    std::vector<bool> pre_cutoff;  // per eval row
    Vector realized;
    std::vector<double> origin_alpha;  // alpha used per eval row (fixed or CV)
    double full_sample_alpha = 0.0;
    std::vector<CvRecord> cv;
    std::vector<ScoredModel> scored;
    std::vector<ModelExport> exports;
    std::vector<DensityExport> densities;
    // [weighting][model] for the full evaluation sample and the pre-cutoff subsample
    std::array<std::vector<ScoreCell>, 4> full, pre;
    int hac_lags = 1;
    long fits = 0;
    long non_optimal = 0;
};

struct BacktestResult {
    std::vector<HorizonResult> horizons;
    bool all_optimal() const {
        for (const auto& h : horizons)
            if (h.non_optimal > 0) return false;
        return true;
    }
};

using ProgressFn = std::function<void(const std::string&)>;

/// Mean in storage order; shared by the reporter and by recomputation from
/// per-observation files so the two agree exactly.
inline double sample_mean(const std::vector<double>& v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline int default_hac_lags(Horizon h) { return std::max(1, h.ceil_quarters()); }

/// Labels models by name, suffixing repeats ("qr", "qr#2").
inline std::vector<std::string> model_labels(const std::vector<ModelKind>& models) {
    std::vector<std::string> out;
    std::map<std::string, int> seen;
    for (ModelKind m : models) {
        const std::string base = to_string(m);
        const int n = ++seen[base];
        out.push_back(n == 1 ? base : base + "#" + std::to_string(n));
    }
    return out;
}

namespace detail {

/// Rows of `panel` whose target is realized by week `cutoff`. Panel rows are in
/// quarter order, so this is a prefix.
inline Index realized_prefix(const MixedFrequencyDataset& panel, int cutoff) {
    Index n = 0;
    while (n < panel.rows() && 12 * (panel.target_quarter[static_cast<std::size_t>(n)] + 1) <= cutoff) ++n;
    return n;
}

inline void assert_no_lookahead(const MixedFrequencyDataset& train, int cutoff, int origin_quarter) {
    for (Index r = 0; r < train.rows(); ++r) {
        const auto i = static_cast<std::size_t>(r);
        if (12 * (train.target_quarter[i] + 1) > cutoff || train.latest_input_week[i] > cutoff)
            throw std::logic_error("look-ahead: training row " + train.quarter(r) + " uses data after the cutoff of origin " +
                                   quarter_label(origin_quarter));
    }
}

inline std::vector<ScoreCell> score_cells(const std::vector<ScoredModel>& scored, std::size_t w,
                                          const std::vector<bool>& keep, int hac) {
    std::vector<ScoreCell> cells;
    std::vector<std::vector<double>> series;
    for (const auto& m : scored) {
        std::vector<double> v;
        for (Index t = 0; t < m.qwcrps[w].size(); ++t)
            if (keep[static_cast<std::size_t>(t)]) v.push_back(m.qwcrps[w][t]);
        series.push_back(std::move(v));
    }
    for (std::size_t k = 0; k < scored.size(); ++k) {
        ScoreCell c;
        c.n = static_cast<Index>(series[k].size());
        c.mean = sample_mean(series[k]);
        if (k > 0 && c.n >= 10) {
            const Vector ref = Eigen::Map<const Vector>(series[0].data(), c.n);
            const Vector other = Eigen::Map<const Vector>(series[k].data(), c.n);
            c.dm = dm_test(ref, other, hac);
        }
        cells.push_back(c);
    }
    return cells;
}

}  // namespace detail

inline HorizonResult run_horizon(const BacktestConfig& cfg, const BacktestData& data, Horizon h,
                                 const ProgressFn& progress = {}) {
    const MixedFrequencyDataset panel = build_panel(data.target, data.regressors, h, cfg.ar_lags);
    HorizonResult res;
    res.horizon = h;
    res.panel_rows = panel.rows();
    res.hac_lags = default_hac_lags(h);

    std::vector<Index> eval_rows, train_size;
    for (Index i = 0; i < panel.rows(); ++i) {
        const Index n = detail::realized_prefix(panel, panel.cutoff_week[static_cast<std::size_t>(i)]);
        if (n >= cfg.start_size) {
            eval_rows.push_back(i);
            train_size.push_back(n);
        }
    }
    if (eval_rows.empty())
        throw DataError("insufficient data for the first origin at horizon " + h.label() + ": start_size " +
                        std::to_string(cfg.start_size) + " needs a panel of at least " +
                        std::to_string(cfg.start_size + h.ceil_quarters()) + " quarters, got " +
                        std::to_string(panel.rows()));

    const std::size_t n_eval = eval_rows.size();
    std::vector<std::size_t> refits;  // positions in eval_rows where models are re-estimated
    for (std::size_t k = 0; k < n_eval; k += static_cast<std::size_t>(cfg.refit_every)) refits.push_back(k);

    std::vector<std::size_t> scored_idx;
    const std::vector<std::string> labels = model_labels(cfg.models);
    for (std::size_t m = 0; m < cfg.models.size(); ++m)
        if (is_scored(cfg.models[m])) scored_idx.push_back(m);
    bool need_alpha = false;
    for (ModelKind m : cfg.models) need_alpha = need_alpha || uses_alpha(m);

    auto training_set = [&](std::size_t k) { return panel.head(train_size[k]); };
    auto cv_select = [&](std::size_t k) {
        const MixedFrequencyDataset train = training_set(k);
        const HvBlockPlan plan = make_plan(train.rows(), cfg.cv_folds, h);
        return select_alpha(train, lag_maps(ModelKind::gncqr, cfg.regressors), cfg.grid, cfg.alpha_grid, plan,
                            cfg.cv_loss, cfg.solver, cfg.jobs);
    };

    std::vector<double> refit_alpha(refits.size(), cfg.alpha);
    if (need_alpha && cfg.alpha_mode != AlphaMode::fixed) {
        const std::size_t n_cv = cfg.alpha_mode == AlphaMode::cv_once ? 1 : refits.size();
        for (std::size_t r = 0; r < n_cv; ++r) {
            const std::size_t k = refits[r];
            CvRecord rec{panel.target_quarter[static_cast<std::size_t>(eval_rows[k])], cv_select(k)};
            if (progress)
                progress("h=" + h.label() + " origin " + quarter_label(rec.origin_quarter) + ": alpha " +
                         format_double(rec.selection.chosen_alpha));
            res.cv.push_back(std::move(rec));
        }
        for (std::size_t r = 0; r < refits.size(); ++r)
            refit_alpha[r] = res.cv[std::min(r, res.cv.size() - 1)].selection.chosen_alpha;
    }

    // Fit every (refit origin, scored model) pair.
    const std::size_t n_models = scored_idx.size();
    std::vector<QuantilePanelFit> fits(refits.size() * n_models);
    parallel_for(fits.size(), cfg.jobs, [&](std::size_t task) {
        const std::size_t r = task / n_models, mi = scored_idx[task % n_models];
        const std::size_t k = refits[r];
        const Index row = eval_rows[k];
        const int origin_q = panel.target_quarter[static_cast<std::size_t>(row)];
        const MixedFrequencyDataset train = training_set(k);
        detail::assert_no_lookahead(train, panel.cutoff_week[static_cast<std::size_t>(row)], origin_q);
        try {
            fits[task] = fit_joint(train, lag_maps(cfg.models[mi], cfg.regressors), cfg.grid,
                                   model_constraints(cfg.models[mi], refit_alpha[r]), cfg.solver);
        } catch (const std::exception& e) {
            throw DataError("model " + labels[mi] + " failed at origin " + quarter_label(origin_q) + " (horizon " +
                            h.label() + "): " + e.what());
        }
    });
    res.fits += static_cast<long>(fits.size());
    for (const auto& f : fits) res.non_optimal += f.optimal() ? 0 : 1;

    const MixedFrequencyDataset eval = panel.subset(eval_rows);
    res.realized = eval.target;
    for (std::size_t k = 0; k < n_eval; ++k) {
        const int q = eval.target_quarter[k];
        res.eval_quarters.push_back(q);
        res.pre_cutoff.push_back(quarter_start(q).serial() <= cfg.pre_cutoff.serial());
        res.origin_alpha.push_back(refit_alpha[k / static_cast<std::size_t>(cfg.refit_every)]);
    }

    for (std::size_t s = 0; s < n_models; ++s) {
        ScoredModel sm;
        sm.label = labels[scored_idx[s]];
        sm.model = cfg.models[scored_idx[s]];
        sm.predictions.resize(static_cast<Index>(n_eval), cfg.grid.size());
        for (std::size_t k = 0; k < n_eval; ++k) {
            const std::size_t r = k / static_cast<std::size_t>(cfg.refit_every);
            sm.predictions.row(static_cast<Index>(k)) = predict(fits[r * n_models + s], eval.subset({static_cast<Index>(k)}));
        }
        sm.qs = quantile_score_panel(eval.target, sm.predictions, cfg.grid);
        for (std::size_t w = 0; w < 4; ++w) sm.qwcrps[w] = qwcrps_rows(sm.qs, cfg.grid, kAllWeightings[w]);
        res.scored.push_back(std::move(sm));
    }
    const std::vector<bool> everything(n_eval, true);
    for (std::size_t w = 0; w < 4; ++w) {
        res.full[w] = detail::score_cells(res.scored, w, everything, res.hac_lags);
        res.pre[w] = detail::score_cells(res.scored, w, res.pre_cutoff, res.hac_lags);
    }

    // Full-sample fits for surfaces and overall effects.
    res.full_sample_alpha = refit_alpha.back();
    res.exports.resize(cfg.models.size());
    parallel_for(cfg.models.size(), cfg.jobs, [&](std::size_t m) {
        res.exports[m].label = labels[m];
        res.exports[m].model = cfg.models[m];
        try {
            res.exports[m].fit = fit_joint(panel, lag_maps(cfg.models[m], cfg.regressors), cfg.grid,
                                           model_constraints(cfg.models[m], res.full_sample_alpha), cfg.solver);
        } catch (const std::exception& e) {
            throw DataError("model " + labels[m] + " failed on the full sample (horizon " + h.label() + "): " + e.what());
        }
    });
    res.fits += static_cast<long>(res.exports.size());
    for (const auto& e : res.exports) res.non_optimal += e.fit.optimal() ? 0 : 1;

    for (int dq : cfg.density_quarters) {
        for (std::size_t k = 0; k < n_eval; ++k) {
            if (res.eval_quarters[k] != dq) continue;
            for (const auto& sm : res.scored)
                res.densities.push_back(
                    {dq, sm.label, density_from_quantiles(sm.predictions.row(static_cast<Index>(k)).transpose(), cfg.grid, cfg.density)});
        }
    }
    if (progress)
        progress("h=" + h.label() + ": " + std::to_string(n_eval) + " evaluation quarters, " + std::to_string(res.fits) +
                 " fits");
    return res;
}

inline BacktestResult run_backtest(const BacktestConfig& cfg, const BacktestData& data, const ProgressFn& progress = {}) {
    cfg.validate();
    if (data.regressors.size() != cfg.regressors.size())
        throw InvalidInput("config lists " + std::to_string(cfg.regressors.size()) + " regressors, data has " +
                           std::to_string(data.regressors.size()));
    for (std::size_t b = 0; b < data.regressors.size(); ++b)
        if (data.regressors[b].id != cfg.regressors[b].id || data.regressors[b].lags != cfg.regressors[b].lags)
            throw InvalidInput("regressor " + data.regressors[b].id + " does not match config entry " + cfg.regressors[b].id);
    BacktestResult out;
    for (const Horizon& h : cfg.horizons) out.horizons.push_back(run_horizon(cfg, data, h, progress));
    return out;
}

// ---------------------------------------------------------------------------
// Surfaces

struct SurfacePoint {
    std::string model;
    double tau = 0.0;
    int lag = 0;
    double gamma = 0.0;
};

struct SurfaceExport {
    std::string variable;
    Horizon horizon;
    std::vector<SurfacePoint> points;  // model-major, then tau, then lag
};

/// gamma_{q,m} of one regressor for every fitted model.
inline SurfaceExport export_surface(const std::vector<ModelExport>& models, const std::string& variable, Horizon h) {
    SurfaceExport s;
    s.variable = variable;
    s.horizon = h;
    for (const auto& me : models) {
        const auto& blocks = me.fit.layout.blocks;
        std::size_t b = 0;
        while (b < blocks.size() && blocks[b].id != variable) ++b;
        if (b == blocks.size()) throw InvalidInput("model " + me.label + " has no regressor " + variable);
        for (Index q = 0; q < me.fit.grid.size(); ++q) {
            const Vector g = me.fit.lag_profile(b, q);
            for (Index m = 0; m < g.size(); ++m) s.points.push_back({me.label, me.fit.grid[q], static_cast<int>(m + 1), g[m]});
        }
    }
    return s;
}

inline void write_surface_csv(std::ostream& os, const SurfaceExport& s) {
    os << "model,variable,tau,lag,gamma\n";
    for (const auto& p : s.points)
        os << p.model << ',' << s.variable << ',' << format_double(p.tau) << ',' << p.lag << ',' << format_double(p.gamma)
           << '\n';
}

/// Overall effect sum_m gamma_{q,m} per model and quantile.
inline void write_overall_csv(std::ostream& os, const SurfaceExport& s) {
    os << "model,variable,tau,effect\n";
    std::size_t i = 0;
    while (i < s.points.size()) {
        std::size_t j = i;
        double total = 0.0;
        while (j < s.points.size() && s.points[j].model == s.points[i].model && s.points[j].tau == s.points[i].tau)
            total += s.points[j++].gamma;
        os << s.points[i].model << ',' << s.variable << ',' << format_double(s.points[i].tau) << ','
           << format_double(total) << '\n';
        i = j;
    }
}

// ---------------------------------------------------------------------------
// Reporting

inline const char* weighting_label(Weighting w) {
    switch (w) {
    case Weighting::equal: return "w1";
    case Weighting::center: return "w2";
    case Weighting::left_tail: return "w3";
    case Weighting::right_tail: return "w4";
    }
    return "?";
}

inline std::string na_or(double v) { return std::isfinite(v) ? format_double(v) : "NA"; }

inline void write_scores_csv(std::ostream& os, const BacktestResult& r) {
    os << "horizon,model,weighting,sample,n,mean,dm_stat,p_value,stars\n";
    for (const auto& h : r.horizons)
        for (std::size_t m = 0; m < h.scored.size(); ++m)
            for (std::size_t w = 0; w < 4; ++w)
                for (int s = 0; s < 2; ++s) {
                    const ScoreCell& c = (s == 0 ? h.full : h.pre)[w][m];
                    os << h.horizon.label() << ',' << h.scored[m].label << ',' << weighting_label(kAllWeightings[w]) << ','
                       << (s == 0 ? "full" : "pre") << ',' << c.n << ',' << na_or(c.mean) << ',';
                    if (c.dm)
                        os << format_double(c.dm->statistic) << ',' << format_double(c.dm->p_value) << ','
                           << significance_stars(c.dm->p_value);
                    else
                        os << "NA,NA,";
                    os << '\n';
                }
}

inline void write_scores_per_obs_csv(std::ostream& os, const BacktestResult& r) {
    os << "horizon,model,quarter,pre_cutoff,y";
    for (Weighting w : kAllWeightings) os << ',' << weighting_label(w);
    os << '\n';
    for (const auto& h : r.horizons)
        for (const auto& m : h.scored)
            for (std::size_t t = 0; t < h.eval_quarters.size(); ++t) {
                os << h.horizon.label() << ',' << m.label << ',' << quarter_label(h.eval_quarters[t]) << ','
                   << (h.pre_cutoff[t] ? 1 : 0) << ',' << format_double(h.realized[static_cast<Index>(t)]);
                for (std::size_t w = 0; w < 4; ++w) os << ',' << format_double(m.qwcrps[w][static_cast<Index>(t)]);
                os << '\n';
            }
}

inline void write_density_csv(std::ostream& os, const std::vector<const DensityExport*>& ds) {
    os << "model,x,pdf,cdf\n";
    for (const DensityExport* d : ds)
        for (std::size_t i = 0; i < d->curve.support.size(); ++i)
            os << d->label << ',' << format_double(d->curve.support[i]) << ',' << format_double(d->curve.pdf[i]) << ','
               << format_double(d->curve.cdf[i]) << '\n';
}

inline void write_cv_audit_csv(std::ostream& os, const std::vector<CvRecord>& cv) {
    os << "origin,fold,alpha,loss,chosen\n";
    for (const auto& rec : cv) {
        const AlphaSelection& s = rec.selection;
        for (Index f = 0; f < s.per_fold.rows(); ++f)
            for (std::size_t a = 0; a < s.grid.size(); ++a)
                os << quarter_label(rec.origin_quarter) << ',' << f << ',' << format_double(s.grid[a]) << ','
                   << format_double(s.per_fold(f, static_cast<Index>(a))) << ',' << (s.grid[a] == s.chosen_alpha ? 1 : 0)
                   << '\n';
    }
}

/// Table with one row per (horizon, model): w1..w4 means for both samples with
/// DM stars against the first model.
inline void print_summary(std::ostream& os, const BacktestResult& r) {
    auto cell = [](const ScoreCell& c) {
        std::ostringstream s;
        s.setf(std::ios::fixed);
        s.precision(3);
        if (std::isfinite(c.mean)) s << c.mean;
        else s << "NA";
        if (c.dm) s << significance_stars(c.dm->p_value);
        return s.str();
    };
    auto pad = [](std::string s, std::size_t w) {
        if (s.size() < w) s.append(w - s.size(), ' ');
        return s;
    };
    os << pad("h", 7) << pad("model", 14);
    for (const char* sample : {"full", "pre"})
        for (Weighting w : kAllWeightings) os << pad(std::string(weighting_label(w)) + "/" + sample, 11);
    os << '\n';
    for (const auto& h : r.horizons)
        for (std::size_t m = 0; m < h.scored.size(); ++m) {
            os << pad(h.horizon.label(), 7) << pad(h.scored[m].label, 14);
            for (const auto* sample : {&h.full, &h.pre})
                for (std::size_t w = 0; w < 4; ++w) os << pad(cell((*sample)[w][m]), 11);
            os << '\n';
        }
    os << "DM stars against the first model: * 10%, ** 5%, *** 1%\n";
}

inline nlohmann::ordered_json config_json(const BacktestConfig& c) {
    nlohmann::ordered_json j;
    std::vector<std::string> hs;
    for (const Horizon& h : c.horizons) hs.push_back(h.label());
    j["horizons"] = hs;
    j["start_size"] = c.start_size;
    j["refit_every"] = c.refit_every;
    j["ar_lags"] = c.ar_lags;
    j["regressors"] = nlohmann::ordered_json::array();
    for (const auto& r : c.regressors)
        j["regressors"].push_back({{"id", r.id}, {"lags", r.lags}, {"poly_order", r.poly_order}, {"restricted", r.restricted}});
    std::vector<std::string> models;
    for (ModelKind m : c.models) models.push_back(to_string(m));
    j["models"] = models;
    j["quantiles"] = c.grid.taus;
    j["alpha"] = {{"mode", to_string(c.alpha_mode)}, {"value", c.alpha}, {"grid", c.alpha_grid},
                  {"folds", c.cv_folds}, {"loss", weighting_label(c.cv_loss)}};
    j["pre_cutoff"] = c.pre_cutoff.to_string();
    std::vector<std::string> dq;
    for (int q : c.density_quarters) dq.push_back(quarter_label(q));
    j["density_quarters"] = dq;
    j["density"] = {{"points", c.density.points}, {"iqr_extension", c.density.iqr_extension}};
    j["solver"] = {{"tol", c.solver.tol}, {"max_iter", c.solver.max_iter}};
    return j;
}

/// Writes every output file into `dir`. Files are produced in a sibling staging
/// directory first and moved into place only when all of them were written.
inline std::vector<std::string> write_backtest_outputs(const std::filesystem::path& dir, const BacktestResult& r,
                                                       const BacktestConfig& cfg,
                                                       const nlohmann::ordered_json& extra_manifest = {}) {
    namespace fs = std::filesystem;
    const fs::path staging = dir.string() + ".partial";
    fs::remove_all(staging);
    fs::create_directories(staging);
    std::vector<std::string> written;
    try {
        auto emit = [&](const std::string& name, const std::function<void(std::ostream&)>& body) {
            std::ofstream os(staging / name, std::ios::binary);
            if (!os) throw DataError("cannot write " + (staging / name).string());
            body(os);
            if (!os) throw DataError("write failed for " + (staging / name).string());
            written.push_back(name);
        };
        emit("scores.csv", [&](std::ostream& os) { write_scores_csv(os, r); });
        emit("scores_per_obs.csv", [&](std::ostream& os) { write_scores_per_obs_csv(os, r); });
        for (const auto& h : r.horizons) {
            for (const auto& reg : cfg.regressors) {
                const SurfaceExport s = export_surface(h.exports, reg.id, h.horizon);
                emit("surface_" + reg.id + "_" + h.horizon.label() + ".csv", [&](std::ostream& os) { write_surface_csv(os, s); });
                emit("overall_" + reg.id + "_" + h.horizon.label() + ".csv", [&](std::ostream& os) { write_overall_csv(os, s); });
            }
            std::map<int, std::vector<const DensityExport*>> by_quarter;
            for (const auto& d : h.densities) by_quarter[d.quarter].push_back(&d);
            for (const auto& [q, ds] : by_quarter)
                emit("density_" + quarter_label(q) + "_" + h.horizon.label() + ".csv",
                     [&](std::ostream& os) { write_density_csv(os, ds); });
            if (!h.cv.empty())
                emit("cv_audit_" + h.horizon.label() + ".csv", [&](std::ostream& os) { write_cv_audit_csv(os, h.cv); });
        }
        nlohmann::ordered_json manifest;
        manifest["config"] = config_json(cfg);
        manifest["config_hash"] = format_hash(fnv1a(manifest["config"].dump()));
        for (const auto& [k, v] : extra_manifest.items()) manifest[k] = v;
        manifest["solver"] = {{"backend", "bounded-variable primal simplex on the dual"},
                              {"tol", cfg.solver.tol},
                              {"max_iter", cfg.solver.max_iter}};
        nlohmann::ordered_json hs = nlohmann::ordered_json::array();
        for (const auto& h : r.horizons)
            hs.push_back({{"horizon", h.horizon.label()},
                          {"panel_rows", h.panel_rows},
                          {"evaluation_quarters", h.eval_quarters.size()},
                          {"first_evaluation", quarter_label(h.eval_quarters.front())},
                          {"full_sample_alpha", h.full_sample_alpha},
                          {"fits", h.fits},
                          {"non_optimal_fits", h.non_optimal}});
        manifest["horizons"] = hs;
        manifest["all_optimal"] = r.all_optimal();
        written.push_back("run_manifest.json");
        manifest["files"] = written;
        {
            std::ofstream os(staging / "run_manifest.json", std::ios::binary);
            os << manifest.dump(2) << '\n';
            if (!os) throw DataError("write failed for run_manifest.json");
        }
        fs::remove_all(dir);
        fs::rename(staging, dir);
    } catch (...) {
        std::error_code ec;
        fs::remove_all(staging, ec);
        throw;
    }
    return written;
}

// ---------------------------------------------------------------------------
// Reading outputs back

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw DataError("missing column '" + std::string(name) + "'");
    }
};

/// Plain comma-separated file without quoting, as written by this library.
inline CsvTable read_csv_table(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path.string() + ": cannot open");
    auto split = [](const std::string& line) {
        std::vector<std::string> out;
        std::string cell;
        std::istringstream ss(line);
        while (std::getline(ss, cell, ',')) out.push_back(cell);
        if (!line.empty() && line.back() == ',') out.emplace_back();
        return out;
    };
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
    t.header = split(line);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto row = split(line);
        if (row.size() != t.header.size())
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(t.header.size()) + " fields, got " + std::to_string(row.size()));
        t.rows.push_back(std::move(row));
    }
    return t;
}

/// Means keyed by "horizon,model,weighting,sample" recomputed from scores_per_obs.csv.
inline std::map<std::string, double> recompute_score_means(const std::filesystem::path& per_obs) {
    const CsvTable t = read_csv_table(per_obs);
    const std::size_t ch = t.column("horizon"), cm = t.column("model"), cp = t.column("pre_cutoff");
    std::map<std::string, std::vector<double>> values;
    for (const auto& row : t.rows)
        for (Weighting w : kAllWeightings) {
            const std::string key = row[ch] + "," + row[cm] + "," + weighting_label(w);
            const double v = parse_double(row[t.column(weighting_label(w))]);
            values[key + ",full"].push_back(v);
            if (row[cp] == "1") values[key + ",pre"].push_back(v);
            else values[key + ",pre"];
        }
    std::map<std::string, double> out;
    for (const auto& [k, v] : values) out[k] = sample_mean(v);
    return out;
}

}  // namespace gncqr
