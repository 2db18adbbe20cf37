#pragma once
// Evaluation metrics (RMSE on the MMSE scale, confusion matrix, macro-F1)
// and report emission. Reports always juxtapose this run's numbers with
// the published reference scores for the same tracks; those constants are
// metadata, not claims of reproduction.

#include <Eigen/Core>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace cogspeech {

// Published reference scores carried into every report.
namespace reference {
inline constexpr double kRegressionBaselineTestRmse = 2.9850;
inline constexpr double kRegressionReportedDevRmse = 2.4869;
inline constexpr double kRegressionReportedTestRmse = 2.6911;
inline constexpr double kClassificationBaselineTestF1 = 0.5500;
inline constexpr double kClassificationReportedDevF1 = 0.397;
inline constexpr double kClassificationReportedTestF1 = 0.5193;
inline constexpr double kEnsembleReportedDevF1 = 0.61;
inline constexpr double kEnsembleReportedTestF1 = 0.3998;
}  // namespace reference

enum class ReportTask { Regression, Classification };

struct EvaluationReport {
    ReportTask task = ReportTask::Regression;
    std::string model_name;
    std::optional<double> dev_metric;   // RMSE or macro-F1 on the dev split
    std::optional<double> test_metric;  // absent at desk scale

    // Regression only.
    double rmse = 0.0;

    // Classification only.
    double macro_f1 = 0.0;
    Eigen::MatrixXi confusion;  // true x predicted
    std::vector<std::string> class_order;

    struct Row {
        std::string subject_id;
        std::string y_true;  // empty when unknown
        std::string y_pred;
    };
    std::vector<Row> rows;
};

// sqrt(mean squared error), computed on denormalized (MMSE-scale) values.
double rmse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets);

// matrix[i][j] = count(true == i, predicted == j); per-class F1 with the
// 0/0 -> 0 convention; macro-F1 is the unweighted mean over classes.
std::pair<Eigen::MatrixXi, double> confusion_and_f1(
    const std::vector<int>& predicted, const std::vector<int>& truth,
    int n_classes);

// Writes report.json and report.md (byte-deterministic).
void emit_report(const EvaluationReport& report,
                 const std::filesystem::path& out_dir);

void emit_reports(std::span<const EvaluationReport> reports,
                  const std::filesystem::path& out_dir);

}  // namespace cogspeech
