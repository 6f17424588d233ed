#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace debias {

struct PredictionRecord {
    std::string id;
    std::string group;
    std::size_t truth = 0;
    std::size_t predicted = 0;
    std::vector<double> probabilities;

    friend bool operator==(const PredictionRecord&, const PredictionRecord&) = default;
};

struct PredictionLog {
    std::vector<PredictionRecord> records;

    /// Probabilities normalized and predicted == argmax for every record.
    void validate() const;
    friend bool operator==(const PredictionLog&, const PredictionLog&) = default;
};

/// Percent correct per group key.
std::map<std::string, double> group_accuracies(const PredictionLog& log);

/// Population standard deviation of the group accuracies.
double degree_of_bias(std::span<const double> accuracies);

double max_min_ratio(std::span<const double> accuracies);

/// Unweighted mean of the group accuracies.
double macro_accuracy(std::span<const double> accuracies);

struct OverallAccuracy {
    double macro = 0.0;
    double micro = 0.0;
};

OverallAccuracy overall_accuracy(const PredictionLog& log);

using ConfusionMatrix = std::vector<std::vector<std::size_t>>;  // [truth][predicted]

struct FairnessReport {
    std::map<std::string, double> groups;  // accuracy percent
    double dob = 0.0;
    double max_min = 1.0;
    double macro_overall = 0.0;
    double micro_overall = 0.0;
    std::map<std::string, std::size_t> counts;
    std::map<std::string, ConfusionMatrix> confusion;
};

FairnessReport make_report(const PredictionLog& log);

/// Report built from published group accuracies alone; micro equals macro
/// and counts stay empty.
FairnessReport report_from_accuracies(const std::map<std::string, double>& accuracies);

std::string report_to_json(const FairnessReport& report);
FairnessReport report_from_json(const std::string& text);
void write_report(const FairnessReport& report, const std::filesystem::path& path);
FairnessReport read_report(const std::filesystem::path& path);

struct CurveRow {
    std::string method;
    std::string group;
    double accuracy = 0.0;
    double dob = 0.0;
};

/// Long-format (method, group, accuracy, DoB) rows, methods ordered by DoB.
std::vector<CurveRow> bias_accuracy_curve(const std::vector<std::pair<std::string, FairnessReport>>& reports);

/// CSV with header method,group,accuracy,dob; values rendered to two decimals.
std::string format_curve_csv(const std::vector<CurveRow>& rows);

/// predictions.csv with header id,group,true,pred,probs (probs ';'-separated).
void write_predictions(const PredictionLog& log, const std::filesystem::path& path);
PredictionLog read_predictions(const std::filesystem::path& path);

} // namespace debias
