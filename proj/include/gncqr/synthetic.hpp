#pragma once

// Synthetic mixed-frequency growth-at-risk data.
//
// A weekly stress index (native reports every 7 days), a monthly activity
// index and quarterly growth y. At the one-quarter horizon the true
// conditional quantiles are linear in the regressors:
//   Q_tau(y_s) = a + b y_{s-1} + sum_m (g_m + c w_m Phi^{-1}(tau)) x_m + sum_m v_m ip_m + s0 Phi^{-1}(tau)
// where x_m are the 12 calendar-week lags of the stress index in quarter s-1
// and ip_m the 6 latest monthly values. Stress lag effects vary smoothly in m
// and across quantiles; activity effects do not vary across quantiles.

#include "gncqr/common.hpp"
#include "gncqr/dataset.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace gncqr {

struct SyntheticSpec {
    int quarters = 160;
    int start_year = 1980;
    std::uint64_t seed = 1;
    double intercept = 2.0;
    double ar = 0.3;
    double stress_location = -4.0;  // total location effect of the stress lags
    double stress_scale = 1.6;      // total scale loading of the stress lags
    double base_scale = 2.0;
    double activity_location = 1.5;
    double weekly_persistence = 0.3;
    double monthly_persistence = 0.3;
    std::string weekly_id = "NFCI";
    std::string monthly_id = "IP";
};

struct SyntheticData {
    RawSeries target;
    RawSeries weekly;
    RawSeries monthly;
};

/// Weights proportional to (M - m)^2 for m = 1..M, normalized to sum to one.
inline std::vector<double> tail_off_weights(int lags) {
    std::vector<double> w(static_cast<std::size_t>(lags));
    double total = 0.0;
    for (int m = 1; m <= lags; ++m) total += w[static_cast<std::size_t>(m - 1)] = double(lags - m) * double(lags - m);
    for (double& v : w) v /= total;
    return w;
}

inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    if (spec.quarters < 8) throw InvalidInput("synthetic data needs at least 8 quarters");
    if (spec.base_scale <= spec.stress_scale)
        throw InvalidInput("base_scale must exceed stress_scale to keep quantiles ordered");
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> n01(0.0, 1.0);

    SyntheticData out;
    out.target.id = "GDP";
    out.target.frequency = Frequency::quarterly;
    out.weekly.id = spec.weekly_id;
    out.weekly.frequency = Frequency::weekly;
    out.monthly.id = spec.monthly_id;
    out.monthly.frequency = Frequency::monthly;

    // High-frequency history starts a year before the first target quarter.
    const Date hf_start{spec.start_year - 1, 1, 1};
    const int first_q = spec.start_year * 4;
    const int last_q = first_q + spec.quarters - 1;
    const Date hf_end = quarter_start(last_q + 1);

    // Weekly reports on Fridays; the latent AR(1) is squashed into (-1, 1).
    long day = hf_start.serial();
    while (((day % 7) + 7) % 7 != 1) ++day;  // serial 0 (1970-01-01) was a Thursday
    double z = 0.0;
    for (int burn = 0; burn < 50; ++burn) z = spec.weekly_persistence * z + std::sqrt(1 - spec.weekly_persistence * spec.weekly_persistence) * n01(rng);
    for (; day < hf_end.serial() + 7; day += 7) {
        z = spec.weekly_persistence * z + std::sqrt(1 - spec.weekly_persistence * spec.weekly_persistence) * n01(rng);
        out.weekly.observations.push_back({Date::from_serial(day), std::tanh(0.8 * z)});
    }

    double ip = 0.0;
    for (int mo = hf_start.month_index(); mo < hf_end.month_index(); ++mo) {
        ip = spec.monthly_persistence * ip + n01(rng);
        out.monthly.observations.push_back({Date{floor_div(mo, 12), mo - 12 * floor_div(mo, 12) + 1, 1}, ip});
    }

    const CalendarWeeklySeries weeks = to_calendar_weeks(out.weekly);
    std::map<int, double> week_value;
    for (const auto& w : weeks.observations) week_value[w.week_index()] = w.value;
    std::map<int, double> month_value;
    for (const auto& o : out.monthly.observations) month_value[o.date.month_index()] = o.value;

    const std::vector<double> ws = tail_off_weights(12);
    const std::vector<double> wm = tail_off_weights(6);
    double y_prev = spec.intercept / (1.0 - spec.ar);
    for (int s = first_q; s <= last_q; ++s) {
        double stress = 0.0;
        for (int m = 1; m <= 12; ++m) stress += ws[static_cast<std::size_t>(m - 1)] * week_value.at(12 * s - m);
        double activity = 0.0;
        for (int m = 1; m <= 6; ++m) activity += wm[static_cast<std::size_t>(m - 1)] * month_value.at(3 * s - m);
        const double loc = spec.intercept + spec.ar * y_prev + spec.stress_location * stress + spec.activity_location * activity;
        const double scale = spec.base_scale + spec.stress_scale * stress;
        const double y = loc + scale * n01(rng);
        out.target.observations.push_back({quarter_start(s), y});
        y_prev = y;
    }
    return out;
}

}  // namespace gncqr
