#include "mixboost/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>

#include "mixboost/climatology.hpp"
#include "mixboost/error.hpp"

namespace mixboost {

namespace {

bool parse_int(std::string_view s, int& out) {
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

[[noreturn]] void fail(const std::string& file, std::size_t line, const std::string& what) {
    throw DataError(file + ":" + std::to_string(line) + ": " + what);
}

double parse_value(std::string_view s, const std::string& file, std::size_t line) {
    if (s == "NA" || s.empty()) return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
        fail(file, line, "bad number '" + std::string(s) + "'");
    }
    return v;
}

// 0 for the control, k for pk.
int parse_member(std::string_view s, const std::string& file, std::size_t line) {
    if (s == "ctrl") return 0;
    int k = 0;
    if (s.size() >= 2 && s[0] == 'p' && parse_int(s.substr(1), k) && k >= 1) return k;
    fail(file, line, "bad member '" + std::string(s) + "' (expected ctrl or pNN)");
}

struct RawDay {
    std::map<std::string, std::map<int, double>> values;  // variable -> member -> value
};

struct RawStation {
    std::vector<std::string> variables;
    std::map<Date, RawDay> days;
};

bool read_line(std::istream& in, std::string& line) {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

}  // namespace

Date Date::parse(std::string_view text) {
    Date d;
    if (text.size() != 10 || text[4] != '-' || text[7] != '-' || !parse_int(text.substr(0, 4), d.year) ||
        !parse_int(text.substr(5, 2), d.month) || !parse_int(text.substr(8, 2), d.day)) {
        throw DataError("bad date '" + std::string(text) + "' (expected YYYY-MM-DD)");
    }
    try {
        (void)day_of_year(d.year, d.month, d.day);
    } catch (const DomainError&) {
        throw DataError("invalid calendar date '" + std::string(text) + "'");
    }
    return d;
}

std::string Date::str() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", year, month, day);
    return buf;
}

int Date::doy() const {
    return day_of_year(year, month, day);
}

Date Date::plus_days(int n) const {
    using namespace std::chrono;
    const sys_days start{std::chrono::year{year} / std::chrono::month{static_cast<unsigned>(month)} /
                         std::chrono::day{static_cast<unsigned>(day)}};
    const year_month_day ymd{start + std::chrono::days{n}};
    return {static_cast<int>(ymd.year()), static_cast<int>(static_cast<unsigned>(ymd.month())),
            static_cast<int>(static_cast<unsigned>(ymd.day()))};
}

std::size_t StationDataset::members(const std::string& variable) const {
    if (days.empty()) return 0;
    const auto it = days.front().forecasts.find(variable);
    return it == days.front().forecasts.end() ? 0 : it->second.perturbed.size();
}

std::vector<StationDataset> ingest_streams(std::istream& forecasts, const std::string& forecast_name,
                                           std::istream* observations, const std::string& obs_name,
                                           IngestStats* stats) {
    IngestStats local;
    std::string line;
    std::size_t line_no = 0;
    if (!read_line(forecasts, line)) fail(forecast_name, 0, "file is empty");
    ++line_no;
    if (line != "station_id,date,variable,member,value") {
        fail(forecast_name, line_no, "expected header 'station_id,date,variable,member,value'");
    }
    std::map<std::string, RawStation> raw;
    while (read_line(forecasts, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 5) fail(forecast_name, line_no, "expected 5 fields, got " + std::to_string(f.size()));
        if (f[0].empty()) fail(forecast_name, line_no, "empty station_id");
        Date date;
        try {
            date = Date::parse(f[1]);
        } catch (const DataError& e) {
            fail(forecast_name, line_no, e.what());
        }
        const std::string variable(f[2]);
        if (variable.empty()) fail(forecast_name, line_no, "empty variable");
        const int member = parse_member(f[3], forecast_name, line_no);
        const double value = parse_value(f[4], forecast_name, line_no);
        auto& st = raw[std::string(f[0])];
        if (std::find(st.variables.begin(), st.variables.end(), variable) == st.variables.end()) {
            st.variables.push_back(variable);
        }
        auto& slot = st.days[date].values[variable];
        if (!slot.emplace(member, value).second) {
            fail(forecast_name, line_no,
                 "duplicate entry for station " + std::string(f[0]) + ", " + date.str() + ", " + variable + ", " +
                     std::string(f[3]));
        }
        ++local.forecast_rows;
    }
    if (local.forecast_rows == 0) fail(forecast_name, line_no, "no forecast rows");

    std::map<std::string, std::map<Date, double>> obs;
    if (observations) {
        line_no = 0;
        if (!read_line(*observations, line)) fail(obs_name, 0, "file is empty");
        ++line_no;
        if (line != "station_id,date,value") fail(obs_name, line_no, "expected header 'station_id,date,value'");
        while (read_line(*observations, line)) {
            ++line_no;
            if (line.empty()) continue;
            const auto f = split_csv(line);
            if (f.size() != 3) fail(obs_name, line_no, "expected 3 fields, got " + std::to_string(f.size()));
            Date date;
            try {
                date = Date::parse(f[1]);
            } catch (const DataError& e) {
                fail(obs_name, line_no, e.what());
            }
            if (!obs[std::string(f[0])].emplace(date, parse_value(f[2], obs_name, line_no)).second) {
                fail(obs_name, line_no, "duplicate observation for station " + std::string(f[0]) + ", " + date.str());
            }
            ++local.observation_rows;
        }
    }

    std::vector<StationDataset> out;
    for (auto& [station_id, st] : raw) {
        StationDataset ds;
        ds.station_id = station_id;
        ds.variables = st.variables;
        std::map<std::string, int> member_count;
        for (const auto& [date, day] : st.days) {
            for (const auto& [variable, members] : day.values) {
                member_count[variable] = std::max(member_count[variable], members.rbegin()->first);
            }
        }
        const auto obs_it = obs.find(station_id);
        for (auto& [date, day] : st.days) {
            DayRecord rec;
            rec.date = date;
            for (const auto& variable : ds.variables) {
                const auto vit = day.values.find(variable);
                const int n = member_count[variable];
                const std::string where = "station " + station_id + ", date " + date.str() + ", variable " + variable;
                if (vit == day.values.end()) throw DataError(forecast_name + ": no forecasts for " + where);
                MemberValues mv;
                const auto& members = vit->second;
                const auto ctrl = members.find(0);
                if (ctrl == members.end()) throw DataError(forecast_name + ": missing member ctrl for " + where);
                mv.ctrl = ctrl->second;
                for (int k = 1; k <= n; ++k) {
                    const auto m = members.find(k);
                    if (m == members.end()) {
                        char label[16];
                        std::snprintf(label, sizeof label, "p%02d", k);
                        throw DataError(forecast_name + ": missing member " + label + " for " + where);
                    }
                    mv.perturbed.push_back(m->second);
                }
                rec.forecasts.emplace(variable, std::move(mv));
            }
            if (observations) {
                double y = std::numeric_limits<double>::quiet_NaN();
                if (obs_it != obs.end()) {
                    const auto d = obs_it->second.find(date);
                    if (d != obs_it->second.end()) y = d->second;
                }
                if (std::isnan(y)) {
                    ++local.dropped_missing_observation;
                    continue;
                }
                rec.observation = y;
            } else {
                rec.observation = std::numeric_limits<double>::quiet_NaN();
            }
            ds.days.push_back(std::move(rec));
        }
        out.push_back(std::move(ds));
    }
    if (stats) *stats = local;
    return out;
}

std::vector<StationDataset> ingest(const std::string& forecast_path, const std::optional<std::string>& obs_path,
                                   IngestStats* stats) {
    std::ifstream forecasts(forecast_path);
    if (!forecasts) throw DataError("cannot open forecast file '" + forecast_path + "'");
    if (!obs_path) return ingest_streams(forecasts, forecast_path, nullptr, "", stats);
    std::ifstream observations(*obs_path);
    if (!observations) throw DataError("cannot open observation file '" + *obs_path + "'");
    return ingest_streams(forecasts, forecast_path, &observations, *obs_path, stats);
}

std::string format_shortest(double value) {
    if (std::isnan(value)) return "NA";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

void export_forecasts(std::ostream& out, const std::vector<StationDataset>& data) {
    out << "station_id,date,variable,member,value\n";
    char label[16];
    for (const auto& st : data) {
        for (const auto& day : st.days) {
            const std::string prefix = st.station_id + "," + day.date.str() + ",";
            for (const auto& variable : st.variables) {
                const auto& mv = day.forecasts.at(variable);
                out << prefix << variable << ",ctrl," << format_shortest(mv.ctrl) << "\n";
                for (std::size_t k = 0; k < mv.perturbed.size(); ++k) {
                    std::snprintf(label, sizeof label, "p%02zu", k + 1);
                    out << prefix << variable << "," << label << "," << format_shortest(mv.perturbed[k]) << "\n";
                }
            }
        }
    }
}

void export_observations(std::ostream& out, const std::vector<StationDataset>& data) {
    out << "station_id,date,value\n";
    for (const auto& st : data) {
        for (const auto& day : st.days) {
            out << st.station_id << "," << day.date.str() << "," << format_shortest(day.observation) << "\n";
        }
    }
}

EnsembleSummary summarize_ensemble(std::span<const double> members) {
    const std::size_t n = members.size();
    if (n < 2) throw DomainError("ensemble summary needs at least 2 members, got " + std::to_string(n));
    std::vector<double> sorted(members.begin(), members.end());
    std::sort(sorted.begin(), sorted.end());
    double sum = 0.0;
    for (double v : sorted) sum += v;
    const double mean = sum / static_cast<double>(n);
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) sq[i] = (sorted[i] - mean) * (sorted[i] - mean);
    std::sort(sq.begin(), sq.end());
    double ss = 0.0;
    for (double v : sq) ss += v;
    return {mean, std::sqrt(ss / static_cast<double>(n - 1))};
}

RawRows summary_rows(const StationDataset& station, const std::vector<std::size_t>& day_indices,
                     const CovariateCatalog& catalog) {
    RawRows rows;
    rows.columns = catalog.all();
    rows.x.resize(static_cast<Eigen::Index>(day_indices.size()), static_cast<Eigen::Index>(rows.columns.size()));
    rows.doys.reserve(day_indices.size());
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t r = 0; r < day_indices.size(); ++r) {
        const DayRecord& day = station.days.at(day_indices[r]);
        rows.doys.push_back(day.date.doy());
        const auto ri = static_cast<Eigen::Index>(r);
        for (std::size_t v = 0; v < catalog.variables.size(); ++v) {
            const auto col = static_cast<Eigen::Index>(3 * v);
            const auto it = day.forecasts.find(catalog.variables[v]);
            if (it == day.forecasts.end()) {
                throw DataError("station " + station.station_id + " has no forecasts for variable '" +
                                catalog.variables[v] + "'");
            }
            const MemberValues& mv = it->second;
            const bool complete = std::none_of(mv.perturbed.begin(), mv.perturbed.end(),
                                               [](double x) { return std::isnan(x); });
            if (complete) {
                const EnsembleSummary s = summarize_ensemble(mv.perturbed);
                rows.x(ri, col) = s.mean;
                rows.x(ri, col + 2) = std::max(s.sd, kMinEnsembleSd);
            } else {
                rows.x(ri, col) = nan;
                rows.x(ri, col + 2) = nan;
            }
            rows.x(ri, col + 1) = mv.ctrl;
        }
    }
    return rows;
}

}  // namespace mixboost
