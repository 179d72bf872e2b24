#pragma once

// Raw series ingestion, calendar-week alignment and MIDAS panel construction.
//
// Time is tracked on three integer grids that nest exactly:
//   quarter q  = year * 4 + (month - 1) / 3
//   month   mo = year * 12 + (month - 1)          (quarter q holds months 3q .. 3q+2)
//   week    w  = mo * 4 + (week_of_month - 1)     (quarter q holds weeks 12q .. 12q+11)
// A horizon of h quarters is h*12 weeks, so the information cutoff for target
// quarter s is the week position 12(s+1) - 12h.

#include "gncqr/common.hpp"
#include "gncqr/scaling.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <numeric>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace gncqr {

struct Date {
    int year = 1970;
    int month = 1;
    int day = 1;

    friend auto operator<=>(const Date&, const Date&) = default;

    static bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }
    static int days_in_month(int y, int m) {
        static constexpr int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
        return m == 2 && is_leap(y) ? 29 : kDays[m - 1];
    }

    /// Parses ISO-8601 YYYY-MM-DD.
    static Date parse(std::string_view s) {
        auto bad = [&] { return InvalidInput("invalid date '" + std::string(s) + "' (expected YYYY-MM-DD)"); };
        if (s.size() != 10 || s[4] != '-' || s[7] != '-') throw bad();
        auto num = [&](std::size_t pos, std::size_t len) {
            int v = 0;
            for (std::size_t i = pos; i < pos + len; ++i) {
                if (s[i] < '0' || s[i] > '9') throw bad();
                v = v * 10 + (s[i] - '0');
            }
            return v;
        };
        Date d{num(0, 4), num(5, 2), num(8, 2)};
        if (d.month < 1 || d.month > 12 || d.day < 1 || d.day > days_in_month(d.year, d.month)) throw bad();
        return d;
    }

    /// Days since 1970-01-01 (proleptic Gregorian).
    long serial() const {
        const int y = year - (month <= 2);
        const long era = (y >= 0 ? y : y - 399) / 400;
        const unsigned yoe = static_cast<unsigned>(y - era * 400);
        const unsigned doy = (153 * (month + (month > 2 ? -3 : 9)) + 2) / 5 + day - 1;
        const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
        return era * 146097 + static_cast<long>(doe) - 719468;
    }

    static Date from_serial(long z) {
        z += 719468;
        const long era = (z >= 0 ? z : z - 146096) / 146097;
        const unsigned doe = static_cast<unsigned>(z - era * 146097);
        const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
        const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
        const unsigned mp = (5 * doy + 2) / 153;
        const unsigned d = doy - (153 * mp + 2) / 5 + 1;
        const unsigned m = mp < 10 ? mp + 3 : mp - 9;
        const long y = static_cast<long>(yoe) + era * 400 + (m <= 2);
        return Date{static_cast<int>(y), static_cast<int>(m), static_cast<int>(d)};
    }

    std::string to_string() const {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
        return buf;
    }

    int month_index() const { return year * 12 + (month - 1); }
    int quarter_index() const { return year * 4 + (month - 1) / 3; }
};

inline int floor_div(int a, int b) { return a / b - ((a % b != 0) && ((a < 0) != (b < 0))); }

inline std::string quarter_label(int quarter_index) {
    return std::to_string(floor_div(quarter_index, 4)) + "Q" + std::to_string(quarter_index - 4 * floor_div(quarter_index, 4) + 1);
}

inline int parse_quarter_label(std::string_view s) {
    const auto q = s.find('Q');
    if (q == std::string_view::npos || q + 2 != s.size() || s[q + 1] < '1' || s[q + 1] > '4')
        throw InvalidInput("invalid quarter label '" + std::string(s) + "' (expected YYYYQn)");
    const int year = static_cast<int>(parse_double(s.substr(0, q)));
    return year * 4 + (s[q + 1] - '1');
}

/// First calendar day of a quarter.
inline Date quarter_start(int quarter_index) {
    const int y = floor_div(quarter_index, 4);
    return Date{y, (quarter_index - 4 * y) * 3 + 1, 1};
}

enum class Frequency { quarterly, monthly, weekly };

inline Frequency parse_frequency(std::string_view s) {
    if (s == "quarterly") return Frequency::quarterly;
    if (s == "monthly") return Frequency::monthly;
    if (s == "weekly") return Frequency::weekly;
    throw InvalidInput("unknown frequency '" + std::string(s) + "'");
}

inline const char* to_string(Frequency f) {
    switch (f) {
    case Frequency::quarterly: return "quarterly";
    case Frequency::monthly: return "monthly";
    case Frequency::weekly: return "weekly";
    }
    return "?";
}

struct Observation {
    Date date;
    double value = 0.0;
};

struct RawSeries {
    std::string id;
    Frequency frequency = Frequency::quarterly;
    std::vector<Observation> observations;

    /// Sorts by date and checks for duplicates and non-finite values.
    void normalize() {
        std::stable_sort(observations.begin(), observations.end(),
                         [](const Observation& a, const Observation& b) { return a.date < b.date; });
        for (std::size_t i = 0; i < observations.size(); ++i) {
            if (!std::isfinite(observations[i].value))
                throw DataError(id + ": non-finite value on " + observations[i].date.to_string());
            if (i > 0 && observations[i].date == observations[i - 1].date)
                throw DataError(id + ": duplicate date " + observations[i].date.to_string());
        }
    }
};

/// Parses the `date,value` CSV layout; rows may be in any order.
inline RawSeries parse_series_csv(std::istream& in, const std::string& source, std::string id, Frequency freq) {
    RawSeries s;
    s.id = std::move(id);
    s.frequency = freq;
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& what) {
        return InvalidInput(source + ":" + std::to_string(lineno) + ": " + what);
    };
    if (!std::getline(in, line)) {
        lineno = 1;
        throw fail("missing header 'date,value'");
    }
    ++lineno;
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF && static_cast<unsigned char>(line[1]) == 0xBB &&
        static_cast<unsigned char>(line[2]) == 0xBF)
        line.erase(0, 3);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "date,value") throw fail("missing header 'date,value'");
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
            throw fail("expected two fields");
        try {
            s.observations.push_back({Date::parse(line.substr(0, comma)), parse_double(line.substr(comma + 1))});
        } catch (const InvalidInput& e) {
            throw fail(e.what());
        }
    }
    try {
        s.normalize();
    } catch (const DataError& e) {
        throw InvalidInput(source + ": " + e.what());
    }
    return s;
}

inline RawSeries read_series_csv(const std::filesystem::path& path, std::string id, Frequency freq) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open " + path.string());
    return parse_series_csv(in, path.string(), std::move(id), freq);
}

inline void write_series_csv(std::ostream& os, const RawSeries& s) {
    os << "date,value\n";
    for (const auto& o : s.observations) os << o.date.to_string() << ',' << format_double(o.value) << '\n';
}

struct CalendarWeek {
    int year = 0;
    int month = 1;
    int week = 1;  // 1..4
    double value = 0.0;

    int week_index() const { return (year * 12 + month - 1) * 4 + week - 1; }
};

struct CalendarWeeklySeries {
    std::string id;
    std::vector<CalendarWeek> observations;
};

/// Window of week k (1..4) within a month: days [first, last].
inline std::pair<int, int> calendar_week_window(int year, int month, int week) {
    const int first = 7 * (week - 1) + 1;
    const int last = week == 4 ? Date::days_in_month(year, month) : 7 * week;
    return {first, last};
}

/// Converts native weekly reports to four calendar weeks per month.
///
/// Each report is carried forward daily until the next report; the final
/// report runs to the end of its month. Week k averages the daily values in
/// days 1-7, 8-14, 15-21 and 22-end. Only months whose every day is covered
/// are emitted.
inline CalendarWeeklySeries to_calendar_weeks(const RawSeries& weekly) {
    if (weekly.observations.empty()) throw DataError(weekly.id + ": empty input");
    if (weekly.frequency != Frequency::weekly) throw InvalidInput(weekly.id + ": expected a weekly series");
    RawSeries s = weekly;
    s.normalize();
    const auto& obs = s.observations;
    for (std::size_t i = 1; i < obs.size(); ++i) {
        if (obs[i].date.serial() - obs[i - 1].date.serial() > 28)
            throw DataError(s.id + ": coverage gap between " + obs[i - 1].date.to_string() + " and " +
                            obs[i].date.to_string());
    }
    const long first_day = obs.front().date.serial();
    const Date last = obs.back().date;
    const long last_day = Date{last.year, last.month, Date::days_in_month(last.year, last.month)}.serial();

    std::vector<double> daily(static_cast<std::size_t>(last_day - first_day + 1));
    std::size_t k = 0;
    for (long d = first_day; d <= last_day; ++d) {
        while (k + 1 < obs.size() && obs[k + 1].date.serial() <= d) ++k;
        daily[static_cast<std::size_t>(d - first_day)] = obs[k].value;
    }

    CalendarWeeklySeries out;
    out.id = s.id;
    const Date first = obs.front().date;
    int y = first.year, m = first.month;
    if (first.day != 1) {
        if (++m > 12) {
            m = 1;
            ++y;
        }
    }
    while (Date{y, m, 1}.serial() <= last_day) {
        for (int w = 1; w <= 4; ++w) {
            const auto [lo, hi] = calendar_week_window(y, m, w);
            double sum = 0.0;
            for (int d = lo; d <= hi; ++d) sum += daily[static_cast<std::size_t>(Date{y, m, d}.serial() - first_day)];
            out.observations.push_back({y, m, w, sum / (hi - lo + 1)});
        }
        if (++m > 12) {
            m = 1;
            ++y;
        }
    }
    return out;
}

/// A high-frequency regressor on its integer time grid (week or month index).
struct HighFrequencySeries {
    std::string id;
    Frequency frequency = Frequency::weekly;  // weekly (calendar weeks) or monthly
    std::map<int, double> values;
    int lags = 1;

    static HighFrequencySeries from_weeks(const CalendarWeeklySeries& s, int lags) {
        HighFrequencySeries h;
        h.id = s.id;
        h.frequency = Frequency::weekly;
        h.lags = lags;
        for (const auto& w : s.observations) h.values[w.week_index()] = w.value;
        return h;
    }

    static HighFrequencySeries from_monthly(const RawSeries& s, int lags) {
        if (s.frequency != Frequency::monthly) throw InvalidInput(s.id + ": expected a monthly series");
        HighFrequencySeries h;
        h.id = s.id;
        h.frequency = Frequency::monthly;
        h.lags = lags;
        for (const auto& o : s.observations) {
            if (!h.values.emplace(o.date.month_index(), o.value).second)
                throw DataError(s.id + ": two observations in month " + o.date.to_string().substr(0, 7));
        }
        return h;
    }

    /// Weeks per grid step (1 for weekly, 4 for monthly).
    int step_weeks() const { return frequency == Frequency::weekly ? 1 : 4; }
};

struct HighFrequencyBlock {
    std::string id;
    Frequency frequency = Frequency::weekly;
    int lags = 0;
    Matrix values;  // T x lags, column 0 is the most recent lag
};

struct MixedFrequencyDataset {
    Horizon horizon;
    int ar_lags = 1;
    Vector target;                          // y_{t+h}
    Matrix low_freq;                        // T x (1 + ar_lags): constant, y lags
    std::vector<HighFrequencyBlock> blocks;
    std::vector<int> target_quarter;        // quarter index of y_{t+h}
    std::vector<int> cutoff_week;           // information-set end (exclusive week position)
    std::vector<int> latest_input_week;     // end position of the latest value used by the row

    Index rows() const { return target.size(); }

    std::string quarter(Index i) const { return quarter_label(target_quarter[static_cast<std::size_t>(i)]); }

    /// Rows `idx` in the given order.
    MixedFrequencyDataset subset(const std::vector<Index>& idx) const {
        MixedFrequencyDataset d;
        d.horizon = horizon;
        d.ar_lags = ar_lags;
        const Index n = static_cast<Index>(idx.size());
        d.target.resize(n);
        d.low_freq.resize(n, low_freq.cols());
        d.blocks = blocks;
        for (auto& b : d.blocks) b.values.resize(n, b.lags);
        for (Index r = 0; r < n; ++r) {
            const Index i = idx[static_cast<std::size_t>(r)];
            d.target[r] = target[i];
            d.low_freq.row(r) = low_freq.row(i);
            for (std::size_t b = 0; b < blocks.size(); ++b) d.blocks[b].values.row(r) = blocks[b].values.row(i);
            d.target_quarter.push_back(target_quarter[static_cast<std::size_t>(i)]);
            d.cutoff_week.push_back(cutoff_week[static_cast<std::size_t>(i)]);
            d.latest_input_week.push_back(latest_input_week[static_cast<std::size_t>(i)]);
        }
        return d;
    }

    MixedFrequencyDataset head(Index n) const {
        std::vector<Index> idx(static_cast<std::size_t>(n));
        std::iota(idx.begin(), idx.end(), Index{0});
        return subset(idx);
    }
};

/// Aligns y_{t+h} with its low-frequency lags and high-frequency lag windows.
///
/// For target quarter s the information cutoff is week position c = 12(s+1) - 12h.
/// Weekly lag k (k = 1..M) is week c-k; monthly lag k is month floor(c/4) - k
/// (last complete month); y lag k is quarter floor(c/12) - k. Rows with any
/// unavailable value are dropped.
inline MixedFrequencyDataset build_panel(const RawSeries& target, const std::vector<HighFrequencySeries>& hf,
                                         Horizon horizon, int ar_lags) {
    if (target.frequency != Frequency::quarterly) throw InvalidInput(target.id + ": target must be quarterly");
    if (ar_lags < 0) throw InvalidInput("ar_lags must be non-negative");
    if (target.observations.empty()) throw DataError(target.id + ": empty input");
    std::map<int, double> y;
    for (const auto& o : target.observations) {
        if (!y.emplace(o.date.quarter_index(), o.value).second)
            throw DataError(target.id + ": two observations in quarter " + quarter_label(o.date.quarter_index()));
    }
    for (const auto& s : hf) {
        if (s.lags < 1) throw InvalidInput(s.id + ": lag count must be positive");
        if (static_cast<std::size_t>(s.lags) > s.values.size())
            throw DataError(s.id + ": requested " + std::to_string(s.lags) + " lags but only " +
                            std::to_string(s.values.size()) + " observations are available");
    }

    const int hw = horizon.weeks();
    struct Row {
        int quarter, cutoff, latest;
        double y;
        std::vector<double> lowf;
        std::vector<std::vector<double>> blocks;
    };
    std::vector<Row> rows;

    auto try_row = [&](int s, bool need_target, Row* out) {
        const int c = 12 * (s + 1) - hw;
        Row r;
        r.quarter = s;
        r.cutoff = c;
        r.latest = std::numeric_limits<int>::min();
        if (need_target) {
            auto it = y.find(s);
            if (it == y.end()) return false;
            r.y = it->second;
        }
        r.lowf.push_back(1.0);
        const int last_q = floor_div(c, 12) - 1;
        for (int k = 0; k < ar_lags; ++k) {
            auto it = y.find(last_q - k);
            if (it == y.end()) return false;
            r.lowf.push_back(it->second);
            r.latest = std::max(r.latest, 12 * (last_q - k + 1));
        }
        for (const auto& s_hf : hf) {
            std::vector<double> lagv;
            const int step = s_hf.step_weeks();
            const int last = floor_div(c, step) - 1;
            for (int k = 0; k < s_hf.lags; ++k) {
                auto it = s_hf.values.find(last - k);
                if (it == s_hf.values.end()) return false;
                lagv.push_back(it->second);
            }
            r.latest = std::max(r.latest, step * (last + 1));
            r.blocks.push_back(std::move(lagv));
        }
        if (out) *out = std::move(r);
        return true;
    };

    for (const auto& [s, val] : y) {
        Row r;
        if (try_row(s, true, &r)) rows.push_back(std::move(r));
    }
    if (rows.empty()) {
        // Report the first target quarter whose regressors would all exist.
        const int from = y.begin()->first;
        std::string first = "none within 400 quarters";
        for (int s = from; s < from + 400; ++s) {
            if (try_row(s, false, nullptr)) {
                first = quarter_label(s);
                break;
            }
        }
        throw DataError("insufficient history for horizon " + horizon.label() + ": first feasible target quarter is " +
                        first + ", target data covers " + quarter_label(y.begin()->first) + " to " +
                        quarter_label(y.rbegin()->first));
    }

    MixedFrequencyDataset d;
    d.horizon = horizon;
    d.ar_lags = ar_lags;
    const Index n = static_cast<Index>(rows.size());
    d.target.resize(n);
    d.low_freq.resize(n, 1 + ar_lags);
    for (const auto& s_hf : hf) d.blocks.push_back({s_hf.id, s_hf.frequency, s_hf.lags, Matrix(n, s_hf.lags)});
    for (Index i = 0; i < n; ++i) {
        const Row& r = rows[static_cast<std::size_t>(i)];
        d.target[i] = r.y;
        for (int k = 0; k <= ar_lags; ++k) d.low_freq(i, k) = r.lowf[static_cast<std::size_t>(k)];
        for (std::size_t b = 0; b < hf.size(); ++b)
            for (int k = 0; k < hf[b].lags; ++k) d.blocks[b].values(i, k) = r.blocks[b][static_cast<std::size_t>(k)];
        d.target_quarter.push_back(r.quarter);
        d.cutoff_week.push_back(r.cutoff);
        d.latest_input_week.push_back(r.latest);
    }
    return d;
}

/// Panel as CSV: quarter, cutoff week, target, low-frequency columns, then each lag block.
inline void write_panel_csv(std::ostream& os, const MixedFrequencyDataset& d) {
    os << "quarter,cutoff_week,y";
    for (Index k = 1; k < d.low_freq.cols(); ++k) os << ",y_lag" << k;
    for (const auto& b : d.blocks)
        for (int k = 1; k <= b.lags; ++k) os << ',' << b.id << "_lag" << k;
    os << '\n';
    for (Index i = 0; i < d.rows(); ++i) {
        os << d.quarter(i) << ',' << d.cutoff_week[static_cast<std::size_t>(i)] << ',' << format_double(d.target[i]);
        for (Index k = 1; k < d.low_freq.cols(); ++k) os << ',' << format_double(d.low_freq(i, k));
        for (const auto& b : d.blocks)
            for (int k = 0; k < b.lags; ++k) os << ',' << format_double(b.values(i, k));
        os << '\n';
    }
}

inline void write_calendar_weeks_csv(std::ostream& os, const CalendarWeeklySeries& s) {
    os << "year,month,week,value\n";
    for (const auto& w : s.observations)
        os << w.year << ',' << w.month << ',' << w.week << ',' << format_double(w.value) << '\n';
}

}  // namespace gncqr
