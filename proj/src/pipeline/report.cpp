#include "reglearn/pipeline/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

namespace reglearn {

namespace {

constexpr const char* kSummaryFormat = "reglearn-report";
constexpr int kSummaryVersion = 1;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_double(const std::string& s, const std::string& where) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) throw std::invalid_argument(where + ": not a number: '" + s + "'");
    return v;
}

Json stats_json(const SummaryStats& s) {
    auto num = [](double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); };
    return {{"count", s.count}, {"mean", num(s.mean)}, {"median", num(s.median)}, {"q05", num(s.q05)},
            {"q25", num(s.q25)}, {"q75", num(s.q75)},       {"q95", num(s.q95)},       {"min", num(s.min)},
            {"max", num(s.max)}};
}

}  // namespace

const std::vector<std::string>& method_order() {
    static const std::vector<std::string> order{"opt", "dnn", "elm", "gcv", "upre", "dp", "oed"};
    return order;
}

std::size_t EvaluationReport::method_index(std::string_view m) const {
    for (std::size_t i = 0; i < methods.size(); ++i)
        if (methods[i] == m) return i;
    throw std::out_of_range("report has no method '" + std::string(m) + "'");
}

Vector EvaluationReport::parameter_column(std::string_view m) const {
    const std::size_t k = method_index(m);
    Vector out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r.parameter[k]);
    return out;
}

Vector EvaluationReport::error_column(std::string_view m, bool l1) const {
    if (l1 && !has_l1) throw std::out_of_range("report has no l1 errors");
    const std::size_t k = method_index(m);
    Vector out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(l1 ? r.error_l1[k] : r.error_l2[k]);
    return out;
}

std::vector<std::string> report_header(const EvaluationReport& r) {
    std::vector<std::string> h{"sample", "noise"};
    for (const auto& m : r.methods) h.push_back("param_" + m);
    for (const auto& m : r.methods) h.push_back("err_" + m);
    if (r.has_l1)
        for (const auto& m : r.methods) h.push_back("l1err_" + m);
    if (r.has_gamma) {
        h.emplace_back("gamma_true");
        h.emplace_back("gamma_dnn");
    }
    h.emplace_back("dp_failed");
    h.emplace_back("oracle_suboptimal");
    return h;
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---- statistics ---------------------------------------------------------------

double quantile(std::vector<double> v, double p) {
    if (v.empty()) return kNaN;
    std::sort(v.begin(), v.end());
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return v[lo] + frac * (v[hi] - v[lo]);
}

SummaryStats summarize(std::span<const double> values) {
    std::vector<double> v;
    for (double x : values)
        if (std::isfinite(x)) v.push_back(x);
    SummaryStats s;
    s.count = v.size();
    if (v.empty()) {
        s.mean = s.median = s.q05 = s.q25 = s.q75 = s.q95 = s.min = s.max = kNaN;
        return s;
    }
    std::sort(v.begin(), v.end());
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean = sum / static_cast<double>(v.size());
    s.median = quantile(v, 0.5);
    s.q05 = quantile(v, 0.05);
    s.q25 = quantile(v, 0.25);
    s.q75 = quantile(v, 0.75);
    s.q95 = quantile(v, 0.95);
    s.min = v.front();
    s.max = v.back();
    return s;
}

double pearson_correlation(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("pearson_correlation: need two equal series");
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

Json summary_json(const EvaluationReport& r) {
    Json methods = Json::object();
    for (const auto& m : r.methods) {
        Json e{{"parameter", stats_json(summarize(r.parameter_column(m)))},
               {"error_l2", stats_json(summarize(r.error_column(m)))}};
        if (r.has_l1) e["error_l1"] = stats_json(summarize(r.error_column(m, true)));
        methods[m] = e;
    }
    std::size_t dp_failed = 0, suboptimal = 0;
    for (const auto& row : r.rows) {
        dp_failed += row.dp_failed ? 1 : 0;
        suboptimal += row.oracle_suboptimal ? 1 : 0;
    }
    Json j{{"format", kSummaryFormat},
           {"version", kSummaryVersion},
           {"experiment", std::string(to_string(r.experiment))},
           {"config_hash", r.config_hash},
           {"count", r.rows.size()},
           {"excluded", r.excluded},
           {"methods", methods},
           {"dp_failed", dp_failed},
           {"oracle_suboptimal", suboptimal}};
    if (r.has_gamma && r.rows.size() >= 2) {
        Vector gt, gd;
        for (const auto& row : r.rows) {
            gt.push_back(row.gamma_true);
            gd.push_back(row.gamma_dnn);
        }
        const double c = pearson_correlation(gt, gd);
        j["gamma_correlation"] = std::isfinite(c) ? Json(c) : Json(nullptr);
    }
    return j;
}

// ---- files --------------------------------------------------------------------

void write_report(const EvaluationReport& r, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / "rows.csv", std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + (dir / "rows.csv").string());
    const auto header = report_header(r);
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    for (const auto& row : r.rows) {
        out << row.sample << ',' << format_double(row.noise);
        for (double v : row.parameter) out << ',' << format_double(v);
        for (double v : row.error_l2) out << ',' << format_double(v);
        if (r.has_l1)
            for (double v : row.error_l1) out << ',' << format_double(v);
        if (r.has_gamma) out << ',' << format_double(row.gamma_true) << ',' << format_double(row.gamma_dnn);
        out << ',' << (row.dp_failed ? 1 : 0) << ',' << (row.oracle_suboptimal ? 1 : 0) << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + (dir / "rows.csv").string());
    out.close();
    write_json_file(summary_json(r), dir / "summary.json");
}

EvaluationReport read_report(const std::filesystem::path& dir) {
    const Json summary = read_json_file(dir / "summary.json");
    if (summary.value("format", "") != kSummaryFormat) throw std::invalid_argument("not a report summary");
    EvaluationReport r;
    r.experiment = experiment_kind_from_string(summary.at("experiment").get<std::string>());
    r.config_hash = summary.at("config_hash").get<std::string>();
    r.excluded = summary.at("excluded").get<std::vector<std::uint64_t>>();

    const std::string path = (dir / "rows.csv").string();
    std::ifstream in(dir / "rows.csv");
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument(path + ": empty file");
    const auto header = split_csv_line(line);
    for (const auto& h : header) {
        if (h.rfind("param_", 0) == 0) r.methods.push_back(h.substr(6));
        if (h.rfind("l1err_", 0) == 0) r.has_l1 = true;
        if (h == "gamma_true") r.has_gamma = true;
    }
    if (header != report_header(r)) throw std::invalid_argument(path + ": unexpected header");

    const std::size_t k = r.methods.size();
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        const std::string where = path + ":" + std::to_string(line_no);
        if (f.size() != header.size()) throw std::invalid_argument(where + ": wrong number of fields");
        ReportRow row;
        std::size_t c = 0;
        row.sample = std::stoull(f[c++]);
        row.noise = parse_double(f[c++], where);
        for (std::size_t i = 0; i < k; ++i) row.parameter.push_back(parse_double(f[c++], where));
        for (std::size_t i = 0; i < k; ++i) row.error_l2.push_back(parse_double(f[c++], where));
        if (r.has_l1)
            for (std::size_t i = 0; i < k; ++i) row.error_l1.push_back(parse_double(f[c++], where));
        if (r.has_gamma) {
            row.gamma_true = parse_double(f[c++], where);
            row.gamma_dnn = parse_double(f[c++], where);
        }
        row.dp_failed = f[c++] == "1";
        row.oracle_suboptimal = f[c++] == "1";
        r.rows.push_back(std::move(row));
    }
    return r;
}

}  // namespace reglearn
