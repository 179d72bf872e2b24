#pragma once

// JSON run configuration: data sources (CSV files or the synthetic generator)
// plus every backtest setting. Unknown keys are rejected at every level and
// relative paths resolve against the config file's directory.

#include "gncqr/backtest.hpp"
#include "gncqr/common.hpp"
#include "gncqr/dataset.hpp"
#include "gncqr/synthetic.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace gncqr {

struct SeriesSource {
    RegressorSpec spec;
    Frequency frequency = Frequency::weekly;
    std::optional<std::filesystem::path> path;  // none: taken from the synthetic generator
};

struct RunConfig {
    std::filesystem::path source;  // the config file itself
    std::string target_id = "GDP";
    std::optional<std::filesystem::path> target_path;
    std::vector<SeriesSource> high_freq;
    std::optional<SyntheticSpec> synthetic;
    BacktestConfig backtest;
    std::filesystem::path output_dir = "out";
    std::uint64_t seed = 1;
    std::string log_level = "info";
};

namespace detail {

using Json = nlohmann::json;

inline void check_keys(const Json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
    if (!obj.is_object()) throw InvalidInput(where + ": expected an object");
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (auto a : allowed) ok = ok || key == a;
        if (!ok) throw InvalidInput(where + ": unknown key '" + key + "'");
    }
}

template <class T>
T get_as(const Json& obj, const std::string& key, const std::string& where) {
    try {
        return obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw InvalidInput(where + ": key '" + key + "' is missing or has the wrong type");
    }
}

template <class T>
void read_opt(const Json& obj, const std::string& key, const std::string& where, T& out) {
    if (obj.contains(key)) out = get_as<T>(obj, key, where);
}

inline Horizon horizon_from_json(const Json& v, const std::string& where) {
    if (v.is_string()) return Horizon::parse(v.get<std::string>());
    if (v.is_number()) return Horizon::from_value(v.get<double>());
    throw InvalidInput(where + ": horizons must be numbers or strings like \"1/12\"");
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& source) {
    using detail::get_as;
    using detail::read_opt;
    const std::string where = source.string();
    const std::filesystem::path base = source.has_parent_path() ? source.parent_path() : std::filesystem::path(".");
    detail::check_keys(j,
                       {"target", "high_freq", "synthetic", "ar_lags", "horizons", "models", "quantiles", "start_size",
                        "refit_every", "alpha", "pre_cutoff", "density_quarters", "density", "solver", "output_dir",
                        "seed", "log_level", "jobs"},
                       where);
    RunConfig rc;
    rc.source = source;
    BacktestConfig& bt = rc.backtest;

    read_opt(j, "seed", where, rc.seed);
    if (j.contains("synthetic")) {
        const auto& s = j.at("synthetic");
        const std::string w = where + ": synthetic";
        detail::check_keys(s,
                           {"quarters", "start_year", "intercept", "ar", "stress_location", "stress_scale", "base_scale",
                            "activity_location", "weekly_persistence", "monthly_persistence"},
                           w);
        SyntheticSpec spec;
        read_opt(s, "quarters", w, spec.quarters);
        read_opt(s, "start_year", w, spec.start_year);
        read_opt(s, "intercept", w, spec.intercept);
        read_opt(s, "ar", w, spec.ar);
        read_opt(s, "stress_location", w, spec.stress_location);
        read_opt(s, "stress_scale", w, spec.stress_scale);
        read_opt(s, "base_scale", w, spec.base_scale);
        read_opt(s, "activity_location", w, spec.activity_location);
        read_opt(s, "weekly_persistence", w, spec.weekly_persistence);
        read_opt(s, "monthly_persistence", w, spec.monthly_persistence);
        rc.synthetic = spec;
    }
    if (j.contains("target")) {
        const auto& t = j.at("target");
        const std::string w = where + ": target";
        detail::check_keys(t, {"id", "path"}, w);
        read_opt(t, "id", w, rc.target_id);
        rc.target_path = detail::resolve(base, get_as<std::string>(t, "path", w));
    }
    if (rc.synthetic.has_value() == rc.target_path.has_value())
        throw InvalidInput(where + ": give exactly one of 'target' (CSV input) or 'synthetic'");

    if (!j.contains("high_freq") || !j.at("high_freq").is_array() || j.at("high_freq").empty())
        throw InvalidInput(where + ": 'high_freq' must be a non-empty array");
    std::set<std::string> ids;
    for (const auto& e : j.at("high_freq")) {
        const std::string w = where + ": high_freq";
        detail::check_keys(e, {"id", "frequency", "path", "lags", "poly_order", "restricted"}, w);
        SeriesSource src;
        src.spec.id = get_as<std::string>(e, "id", w);
        src.frequency = parse_frequency(get_as<std::string>(e, "frequency", w));
        if (src.frequency == Frequency::quarterly) throw InvalidInput(w + ": " + src.spec.id + " must be weekly or monthly");
        src.spec.lags = get_as<int>(e, "lags", w);
        read_opt(e, "poly_order", w, src.spec.poly_order);
        read_opt(e, "restricted", w, src.spec.restricted);
        if (e.contains("path")) src.path = detail::resolve(base, get_as<std::string>(e, "path", w));
        if (!src.path && !rc.synthetic) throw InvalidInput(w + ": " + src.spec.id + " needs a 'path'");
        if (src.path && rc.synthetic) throw InvalidInput(w + ": " + src.spec.id + " has a path but data is synthetic");
        if (!ids.insert(src.spec.id).second) throw InvalidInput(w + ": duplicate id " + src.spec.id);
        if (rc.synthetic) {
            if (src.frequency == Frequency::weekly) rc.synthetic->weekly_id = src.spec.id;
            else rc.synthetic->monthly_id = src.spec.id;
        }
        rc.high_freq.push_back(src);
        bt.regressors.push_back(src.spec);
    }
    if (rc.synthetic) {
        int weekly = 0, monthly = 0;
        for (const auto& s : rc.high_freq) (s.frequency == Frequency::weekly ? weekly : monthly)++;
        if (weekly > 1 || monthly > 1)
            throw InvalidInput(where + ": synthetic data provides one weekly and one monthly regressor");
    }

    read_opt(j, "ar_lags", where, bt.ar_lags);
    if (j.contains("horizons")) {
        if (!j.at("horizons").is_array()) throw InvalidInput(where + ": 'horizons' must be an array");
        bt.horizons.clear();
        for (const auto& h : j.at("horizons")) bt.horizons.push_back(detail::horizon_from_json(h, where));
    }
    if (j.contains("models")) {
        bt.models.clear();
        for (const auto& m : get_as<std::vector<std::string>>(j, "models", where)) bt.models.push_back(parse_model(m));
    }
    if (j.contains("quantiles")) bt.grid = QuantileGrid{get_as<std::vector<double>>(j, "quantiles", where)};
    read_opt(j, "start_size", where, bt.start_size);
    read_opt(j, "refit_every", where, bt.refit_every);
    if (j.contains("alpha")) {
        const auto& a = j.at("alpha");
        const std::string w = where + ": alpha";
        detail::check_keys(a, {"mode", "value", "grid", "folds", "loss"}, w);
        if (a.contains("mode")) bt.alpha_mode = parse_alpha_mode(get_as<std::string>(a, "mode", w));
        read_opt(a, "value", w, bt.alpha);
        read_opt(a, "grid", w, bt.alpha_grid);
        read_opt(a, "folds", w, bt.cv_folds);
        if (a.contains("loss")) bt.cv_loss = parse_weighting(get_as<std::string>(a, "loss", w));
    }
    if (j.contains("pre_cutoff")) bt.pre_cutoff = Date::parse(get_as<std::string>(j, "pre_cutoff", where));
    if (j.contains("density_quarters")) {
        bt.density_quarters.clear();
        for (const auto& q : get_as<std::vector<std::string>>(j, "density_quarters", where))
            bt.density_quarters.push_back(parse_quarter_label(q));
    }
    if (j.contains("density")) {
        const auto& d = j.at("density");
        const std::string w = where + ": density";
        detail::check_keys(d, {"points", "iqr_extension"}, w);
        read_opt(d, "points", w, bt.density.points);
        read_opt(d, "iqr_extension", w, bt.density.iqr_extension);
    }
    if (j.contains("solver")) {
        const auto& s = j.at("solver");
        const std::string w = where + ": solver";
        detail::check_keys(s, {"tol", "max_iter"}, w);
        read_opt(s, "tol", w, bt.solver.tol);
        read_opt(s, "max_iter", w, bt.solver.max_iter);
    }
    if (j.contains("output_dir")) rc.output_dir = detail::resolve(base, get_as<std::string>(j, "output_dir", where));
    else rc.output_dir = base / "out";
    read_opt(j, "log_level", where, rc.log_level);
    if (rc.log_level != "error" && rc.log_level != "info" && rc.log_level != "debug")
        throw InvalidInput(where + ": log_level must be error, info or debug");
    int jobs = 0;
    read_opt(j, "jobs", where, jobs);
    if (jobs < 0) throw InvalidInput(where + ": jobs must be non-negative");
    bt.jobs = jobs == 0 ? default_jobs() : jobs;

    try {
        bt.validate();
    } catch (const InvalidInput& e) {
        throw InvalidInput(where + ": " + e.what());
    }
    return rc;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput(path.string() + ": cannot open config file");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw InvalidInput(path.string() + ": invalid JSON: " + e.what());
    }
    return parse_run_config(j, path);
}

/// Raw inputs as read (or generated), before lag alignment.
struct RunInputs {
    RawSeries target;
    std::vector<RawSeries> raw;                    // per high_freq entry
    std::vector<CalendarWeeklySeries> weeks;       // calendar weeks for weekly entries, empty otherwise
    BacktestData data;
};

inline RunInputs load_inputs(const RunConfig& rc) {
    RunInputs in;
    std::optional<SyntheticData> syn;
    if (rc.synthetic) {
        SyntheticSpec spec = *rc.synthetic;
        spec.seed = rc.seed;
        syn = generate_synthetic(spec);
        in.target = syn->target;
    } else {
        in.target = read_series_csv(*rc.target_path, rc.target_id, Frequency::quarterly);
    }
    for (const auto& src : rc.high_freq) {
        RawSeries raw;
        if (src.path) raw = read_series_csv(*src.path, src.spec.id, src.frequency);
        else raw = src.frequency == Frequency::weekly ? syn->weekly : syn->monthly;
        if (src.frequency == Frequency::weekly) {
            CalendarWeeklySeries w = to_calendar_weeks(raw);
            in.data.regressors.push_back(HighFrequencySeries::from_weeks(w, src.spec.lags));
            in.weeks.push_back(std::move(w));
        } else {
            in.data.regressors.push_back(HighFrequencySeries::from_monthly(raw, src.spec.lags));
            in.weeks.emplace_back();
        }
        in.raw.push_back(std::move(raw));
    }
    in.data.target = in.target;
    return in;
}

}  // namespace gncqr
