#include "debias/fairness.hpp"

#include "debias/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace debias {

namespace {

using nlohmann::json;

void require_nonempty(std::span<const double> values, const char* what) {
    if (values.empty()) {
        throw Error(std::string(what) + " needs at least one accuracy");
    }
}

std::vector<double> values_of(const std::map<std::string, double>& m) {
    std::vector<double> out;
    for (const auto& [k, v] : m) {
        out.push_back(v);
    }
    return out;
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

void PredictionLog::validate() const {
    for (const auto& r : records) {
        if (r.probabilities.empty()) {
            continue;
        }
        const double total = std::accumulate(r.probabilities.begin(), r.probabilities.end(), 0.0);
        if (std::abs(total - 1.0) > 1e-6) {
            throw Error("probabilities for " + r.id + " are not normalized");
        }
        const auto argmax = static_cast<std::size_t>(
            std::max_element(r.probabilities.begin(), r.probabilities.end()) - r.probabilities.begin());
        if (argmax != r.predicted) {
            throw Error("predicted label for " + r.id + " is not the argmax of its probabilities");
        }
    }
}

std::map<std::string, double> group_accuracies(const PredictionLog& log) {
    if (log.records.empty()) {
        throw Error("prediction log is empty");
    }
    std::map<std::string, std::pair<std::size_t, std::size_t>> tally;
    for (const auto& r : log.records) {
        auto& [correct, total] = tally[r.group];
        correct += r.truth == r.predicted ? 1 : 0;
        ++total;
    }
    std::map<std::string, double> out;
    for (const auto& [group, ct] : tally) {
        out[group] = 100.0 * static_cast<double>(ct.first) / static_cast<double>(ct.second);
    }
    return out;
}

double degree_of_bias(std::span<const double> accuracies) {
    require_nonempty(accuracies, "degree_of_bias");
    const double mean = macro_accuracy(accuracies);
    double sq = 0.0;
    for (double a : accuracies) {
        sq += (a - mean) * (a - mean);
    }
    return std::sqrt(sq / static_cast<double>(accuracies.size()));
}

double max_min_ratio(std::span<const double> accuracies) {
    require_nonempty(accuracies, "max_min_ratio");
    const auto [lo, hi] = std::minmax_element(accuracies.begin(), accuracies.end());
    if (!(*lo > 0.0)) {
        throw Error("max_min_ratio requires positive accuracies");
    }
    return *hi / *lo;
}

double macro_accuracy(std::span<const double> accuracies) {
    require_nonempty(accuracies, "macro_accuracy");
    return std::accumulate(accuracies.begin(), accuracies.end(), 0.0) / static_cast<double>(accuracies.size());
}

OverallAccuracy overall_accuracy(const PredictionLog& log) {
    const auto groups = values_of(group_accuracies(log));
    std::size_t correct = 0;
    for (const auto& r : log.records) {
        correct += r.truth == r.predicted ? 1 : 0;
    }
    return {macro_accuracy(groups), 100.0 * static_cast<double>(correct) / static_cast<double>(log.records.size())};
}

FairnessReport make_report(const PredictionLog& log) {
    log.validate();
    FairnessReport report;
    report.groups = group_accuracies(log);
    const auto accs = values_of(report.groups);
    report.dob = degree_of_bias(accs);
    report.max_min = accs.empty() || *std::min_element(accs.begin(), accs.end()) <= 0.0
                         ? std::numeric_limits<double>::infinity()
                         : max_min_ratio(accs);
    const auto overall = overall_accuracy(log);
    report.macro_overall = overall.macro;
    report.micro_overall = overall.micro;
    std::size_t classes = 0;
    for (const auto& r : log.records) {
        classes = std::max({classes, r.truth + 1, r.predicted + 1, r.probabilities.size()});
    }
    for (const auto& r : log.records) {
        ++report.counts[r.group];
        auto& matrix = report.confusion[r.group];
        if (matrix.empty()) {
            matrix.assign(classes, std::vector<std::size_t>(classes, 0));
        }
        ++matrix[r.truth][r.predicted];
    }
    return report;
}

FairnessReport report_from_accuracies(const std::map<std::string, double>& accuracies) {
    FairnessReport report;
    report.groups = accuracies;
    const auto accs = values_of(accuracies);
    report.dob = degree_of_bias(accs);
    report.max_min = max_min_ratio(accs);
    report.macro_overall = macro_accuracy(accs);
    report.micro_overall = report.macro_overall;
    return report;
}

std::string report_to_json(const FairnessReport& report) {
    json j;
    j["groups"] = report.groups;
    j["dob"] = report.dob;
    // JSON has no infinity; a zero-accuracy group is reported as null.
    j["max_min"] = std::isfinite(report.max_min) ? json(report.max_min) : json(nullptr);
    j["macro_overall"] = report.macro_overall;
    j["micro_overall"] = report.micro_overall;
    j["counts"] = report.counts;
    j["confusion"] = report.confusion;
    return j.dump(2);
}

FairnessReport report_from_json(const std::string& text) {
    try {
        const auto j = json::parse(text);
        FairnessReport report;
        report.groups = j.at("groups").get<std::map<std::string, double>>();
        report.dob = j.at("dob").get<double>();
        report.max_min = j.at("max_min").is_null() ? std::numeric_limits<double>::infinity()
                                                   : j.at("max_min").get<double>();
        report.macro_overall = j.at("macro_overall").get<double>();
        report.micro_overall = j.at("micro_overall").get<double>();
        report.counts = j.at("counts").get<std::map<std::string, std::size_t>>();
        if (j.contains("confusion")) {
            report.confusion = j.at("confusion").get<std::map<std::string, ConfusionMatrix>>();
        }
        return report;
    } catch (const json::exception& e) {
        throw Error(std::string("malformed fairness report: ") + e.what());
    }
}

void write_report(const FairnessReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out << report_to_json(report) << '\n';
}

FairnessReport read_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot read " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return report_from_json(buffer.str());
}

std::vector<CurveRow> bias_accuracy_curve(const std::vector<std::pair<std::string, FairnessReport>>& reports) {
    if (reports.empty()) {
        throw Error("bias_accuracy_curve needs at least one report");
    }
    std::vector<std::size_t> order(reports.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return reports[a].second.dob < reports[b].second.dob; });
    std::vector<CurveRow> rows;
    for (auto i : order) {
        const auto& [method, report] = reports[i];
        for (const auto& [group, acc] : report.groups) {
            rows.push_back({method, group, acc, report.dob});
        }
    }
    return rows;
}

std::string format_curve_csv(const std::vector<CurveRow>& rows) {
    std::string out = "method,group,accuracy,dob\n";
    for (const auto& r : rows) {
        out += r.method + "," + r.group + "," + fixed(r.accuracy, 2) + "," + fixed(r.dob, 2) + "\n";
    }
    return out;
}

void write_predictions(const PredictionLog& log, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out << "id,group,true,pred,probs\n";
    for (const auto& r : log.records) {
        out << r.id << ',' << r.group << ',' << r.truth << ',' << r.predicted << ',';
        for (std::size_t k = 0; k < r.probabilities.size(); ++k) {
            out << (k > 0 ? ";" : "") << format_double(r.probabilities[k]);
        }
        out << '\n';
    }
    if (!out) {
        throw Error("failed writing " + path.string());
    }
}

PredictionLog read_predictions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot read " + path.string());
    }
    std::string line;
    std::getline(in, line);
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    if (line != "id,group,true,pred,probs") {
        throw Error("unexpected predictions header in " + path.string());
    }
    PredictionLog log;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) {
            fields.push_back(field);
        }
        if (fields.size() != 5) {
            throw Error("row " + std::to_string(row) + " of " + path.string() + " does not have 5 fields");
        }
        PredictionRecord r;
        r.id = fields[0];
        r.group = fields[1];
        try {
            r.truth = std::stoul(fields[2]);
            r.predicted = std::stoul(fields[3]);
            std::stringstream ps(fields[4]);
            std::string p;
            while (std::getline(ps, p, ';')) {
                r.probabilities.push_back(std::stod(p));
            }
        } catch (const std::exception&) {
            throw Error("unparseable numbers on row " + std::to_string(row) + " of " + path.string());
        }
        log.records.push_back(std::move(r));
    }
    return log;
}

} // namespace debias
