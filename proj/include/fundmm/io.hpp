#pragma once

// CSV ingestion and emission for the three market-data files:
//   funding: timestamp,funding_rate      (hourly, ISO-8601 UTC)
//   panel:   timestamp,mid               (minute, ISO-8601 UTC)
//   tape:    minute_ts,distance,crossed_volume  (long format)
// Columns are located by header name, so extra columns and any column order
// are accepted. Every malformed record raises ParseError with its line number.

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "fundmm/errors.hpp"
#include "fundmm/fill_calib.hpp"
#include "fundmm/funding_calib.hpp"
#include "fundmm/simulator.hpp"

namespace fundmm {

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline bool parse_int(std::string_view s, std::int64_t& out) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

inline bool parse_fixed(std::string_view s, std::size_t n, int& out) {
    if (s.size() < n) return false;
    out = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (s[i] < '0' || s[i] > '9') return false;
        out = out * 10 + (s[i] - '0');
    }
    return true;
}

}  // namespace detail

// Accepts YYYY-MM-DD[(T| )HH:MM[:SS[.fff]]][Z|+HH:MM|-HH:MM] or integer epoch
// seconds. Returns epoch seconds; fractional seconds must be zero.
inline bool try_parse_timestamp(std::string_view s, std::int64_t& out) {
    s = detail::trim(s);
    if (s.empty()) return false;
    if (s.find('-', 1) == std::string_view::npos) return detail::parse_int(s, out);

    int y, mo, d, h = 0, mi = 0, se = 0;
    if (s.size() < 10 || !detail::parse_fixed(s, 4, y) || s[4] != '-' || !detail::parse_fixed(s.substr(5), 2, mo) ||
        s[7] != '-' || !detail::parse_fixed(s.substr(8), 2, d))
        return false;
    s.remove_prefix(10);
    if (!s.empty() && (s.front() == 'T' || s.front() == ' ')) {
        s.remove_prefix(1);
        if (s.size() < 5 || !detail::parse_fixed(s, 2, h) || s[2] != ':' || !detail::parse_fixed(s.substr(3), 2, mi))
            return false;
        s.remove_prefix(5);
        if (!s.empty() && s.front() == ':') {
            if (!detail::parse_fixed(s.substr(1), 2, se)) return false;
            s.remove_prefix(3);
            if (!s.empty() && s.front() == '.') {
                s.remove_prefix(1);
                std::size_t n = 0;
                while (n < s.size() && s[n] >= '0' && s[n] <= '9') {
                    if (s[n] != '0') return false;
                    ++n;
                }
                if (n == 0) return false;
                s.remove_prefix(n);
            }
        }
    }
    std::int64_t offset = 0;
    if (s == "Z" || s.empty()) {
    } else if (s.size() == 6 && (s[0] == '+' || s[0] == '-') && s[3] == ':') {
        int oh, om;
        if (!detail::parse_fixed(s.substr(1), 2, oh) || !detail::parse_fixed(s.substr(4), 2, om)) return false;
        offset = (s[0] == '+' ? 1 : -1) * (oh * 3600 + om * 60);
    } else {
        return false;
    }
    using namespace std::chrono;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || se > 60) return false;
    const auto days = sys_days{ymd}.time_since_epoch().count();
    out = static_cast<std::int64_t>(days) * 86400 + h * 3600 + mi * 60 + se - offset;
    return true;
}

inline std::int64_t parse_timestamp(std::string_view s) {
    std::int64_t out = 0;
    if (!try_parse_timestamp(s, out)) throw InvalidInput("invalid timestamp '" + std::string(s) + "'");
    return out;
}

// YYYY-MM-DDTHH:MM:SSZ
inline std::string format_timestamp(std::int64_t epoch_seconds) {
    using namespace std::chrono;
    std::int64_t days = epoch_seconds / 86400, rem = epoch_seconds % 86400;
    if (rem < 0) {
        rem += 86400;
        --days;
    }
    const year_month_day ymd{sys_days{std::chrono::days{days}}};
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(rem / 3600),
                  static_cast<int>(rem / 60 % 60), static_cast<int>(rem % 60));
    return buf;
}

// Shortest representation that round-trips.
inline std::string format_double(double x) {
    char buf[32];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    return ec == std::errc{} ? std::string(buf, p) : std::string("nan");
}

// Header-indexed CSV reader.
class CsvFile {
public:
    struct Row {
        std::size_t line;
        std::vector<std::string_view> cells;
    };

    static CsvFile read(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw InvalidInput("cannot open '" + path + "'");
        std::ostringstream ss;
        ss << in.rdbuf();
        return parse(ss.str(), path);
    }

    static CsvFile parse(std::string text, std::string name) {
        CsvFile f;
        f.name_ = std::move(name);
        f.text_ = std::make_unique<const std::string>(std::move(text));  // cells view into this buffer
        std::string_view all = *f.text_;
        if (all.substr(0, 3) == "\xEF\xBB\xBF") all.remove_prefix(3);
        std::size_t line = 0;
        bool have_header = false;
        while (!all.empty()) {
            const auto nl = all.find('\n');
            std::string_view ln = all.substr(0, nl);
            all = nl == std::string_view::npos ? std::string_view{} : all.substr(nl + 1);
            ++line;
            ln = trim(ln);
            if (ln.empty() || ln.front() == '#') continue;
            std::vector<std::string_view> cells;
            std::size_t pos = 0;
            while (true) {
                const auto c = ln.find(',', pos);
                cells.push_back(trim(ln.substr(pos, c == std::string_view::npos ? ln.npos : c - pos)));
                if (c == std::string_view::npos) break;
                pos = c + 1;
            }
            if (!have_header) {
                for (std::size_t i = 0; i < cells.size(); ++i) f.header_.emplace(std::string(cells[i]), i);
                f.header_line_ = line;
                have_header = true;
                continue;
            }
            f.rows_.push_back({line, std::move(cells)});
        }
        if (!have_header) throw ParseError(f.name_, 1, "empty file (no header)");
        return f;
    }

    const std::string& name() const { return name_; }
    const std::vector<Row>& rows() const { return rows_; }

    std::size_t column(const std::string& col) const {
        const auto it = header_.find(col);
        if (it == header_.end()) throw ParseError(name_, header_line_, "missing column '" + col + "'");
        return it->second;
    }

    std::string_view cell(const Row& r, std::size_t col) const {
        if (col >= r.cells.size())
            throw ParseError(name_, r.line, "expected at least " + std::to_string(col + 1) + " fields, found " +
                                                std::to_string(r.cells.size()));
        return r.cells[col];
    }

    double number(const Row& r, std::size_t col, const char* what) const {
        const auto s = cell(r, col);
        double v = 0.0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v))
            throw ParseError(name_, r.line, std::string("invalid ") + what + " '" + std::string(s) + "'");
        return v;
    }

    std::int64_t timestamp(const Row& r, std::size_t col, const char* what) const {
        const auto s = cell(r, col);
        std::int64_t v = 0;
        if (!try_parse_timestamp(s, v))
            throw ParseError(name_, r.line, std::string("invalid ") + what + " '" + std::string(s) + "'");
        return v;
    }

private:
    static std::string_view trim(std::string_view s) { return detail::trim(s); }

    std::string name_;
    std::unique_ptr<const std::string> text_;
    std::map<std::string, std::size_t> header_;
    std::size_t header_line_ = 1;
    std::vector<Row> rows_;
};

struct TimeSeries {
    std::vector<std::int64_t> ts;  // epoch seconds
    std::vector<double> values;

    std::size_t size() const { return ts.size(); }
};

namespace detail {

inline TimeSeries read_series(const CsvFile& f, const std::string& value_col, bool positive) {
    const auto ct = f.column("timestamp");
    const auto cv = f.column(value_col);
    TimeSeries out;
    for (const auto& r : f.rows()) {
        const auto ts = f.timestamp(r, ct, "timestamp");
        const double v = f.number(r, cv, value_col.c_str());
        if (positive && !(v > 0.0)) throw ParseError(f.name(), r.line, value_col + " must be > 0");
        if (!out.ts.empty() && ts <= out.ts.back())
            throw ParseError(f.name(), r.line, "timestamps must be strictly increasing");
        out.ts.push_back(ts);
        out.values.push_back(v);
    }
    if (out.ts.empty()) throw ParseError(f.name(), 2, "no data rows");
    return out;
}

}  // namespace detail

inline TimeSeries read_funding_csv(const std::string& path) {
    return detail::read_series(CsvFile::read(path), "funding_rate", false);
}

inline TimeSeries read_mid_csv(const std::string& path) {
    return detail::read_series(CsvFile::read(path), "mid", true);
}

// Rows sharing a minute_ts must be contiguous; minutes must be ascending.
inline std::vector<MinuteTrades> read_tape_csv(const std::string& path) {
    const auto f = CsvFile::read(path);
    const auto cm = f.column("minute_ts"), cd = f.column("distance"), cv = f.column("crossed_volume");
    std::vector<MinuteTrades> out;
    for (const auto& r : f.rows()) {
        const auto ts = f.timestamp(r, cm, "minute_ts");
        const double d = f.number(r, cd, "distance");
        const double v = f.number(r, cv, "crossed_volume");
        if (d < 0.0) throw ParseError(f.name(), r.line, "distance must be >= 0");
        if (v < 0.0) throw ParseError(f.name(), r.line, "crossed_volume must be >= 0");
        if (ts % 60 != 0) throw ParseError(f.name(), r.line, "minute_ts is not on a minute boundary");
        if (out.empty() || ts > out.back().minute_ts) {
            out.push_back({ts, {}});
        } else if (ts < out.back().minute_ts) {
            throw ParseError(f.name(), r.line, "minute_ts must be non-decreasing");
        }
        out.back().crossings.push_back({d, v});
    }
    return out;
}

inline FundingSeries to_funding_series(const TimeSeries& s) {
    FundingSeries out;
    out.timestamps.reserve(s.size());
    for (auto t : s.ts) out.timestamps.push_back(static_cast<double>(t) / 3600.0);
    out.values = s.values;
    return out;
}

// Funding observations before the first minute collapse into
// initial_funding (zero when there are none); observations after the last
// minute are dropped.
inline MarketPanel build_panel(const TimeSeries& mid, const TimeSeries& funding) {
    MarketPanel p;
    p.minute_ts = mid.ts;
    p.mid = mid.values;
    if (p.minute_ts.empty()) throw InvalidInput("panel: no minutes");
    for (std::size_t i = 0; i < funding.size(); ++i) {
        if (funding.ts[i] < p.minute_ts.front()) {
            p.initial_funding = funding.values[i];
        } else if (funding.ts[i] <= p.minute_ts.back()) {
            p.funding_ts.push_back(funding.ts[i]);
            p.funding.push_back(funding.values[i]);
        }
    }
    return p;
}

// Writers. Timestamps are written as ISO-8601 UTC, numbers in shortest
// round-trip form so files are byte-stable across runs.
inline void write_text(const std::string& path, const std::string& content) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeFailure("cannot write '" + path + "'");
    out << content;
    if (!out) throw RuntimeFailure("write failed for '" + path + "'");
}

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string series_csv(const std::vector<std::int64_t>& ts, const std::vector<double>& v,
                              const char* value_col) {
    std::string out = std::string("timestamp,") + value_col + "\n";
    for (std::size_t i = 0; i < ts.size(); ++i) out += format_timestamp(ts[i]) + "," + format_double(v[i]) + "\n";
    return out;
}

inline std::string tape_csv(const std::vector<MinuteTrades>& tape) {
    std::string out = "minute_ts,distance,crossed_volume\n";
    for (const auto& m : tape) {
        const auto ts = format_timestamp(m.minute_ts);
        for (const auto& c : m.crossings) out += ts + "," + format_double(c.distance) + "," + format_double(c.volume) + "\n";
    }
    return out;
}

}  // namespace fundmm
