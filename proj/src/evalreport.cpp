#include "cogspeech/evalreport.hpp"

#include <cmath>
#include <cstdio>

#include "cogspeech/core/errors.hpp"
#include "cogspeech/core/fileio.hpp"
#include "cogspeech/core/jsonw.hpp"

namespace cogspeech {
namespace {

std::string fixed4(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

void write_confusion_md(std::string& md, const EvaluationReport& r) {
    md += "\nConfusion matrix (rows = true, columns = predicted):\n\n";
    md += "| true \\ pred |";
    for (const auto& c : r.class_order) {
        md += " " + c + " |";
    }
    md += "\n|---|";
    for (std::size_t i = 0; i < r.class_order.size(); ++i) {
        md += "---|";
    }
    md += "\n";
    for (Eigen::Index i = 0; i < r.confusion.rows(); ++i) {
        md += "| " + r.class_order[static_cast<std::size_t>(i)] + " |";
        for (Eigen::Index j = 0; j < r.confusion.cols(); ++j) {
            md += " " + std::to_string(r.confusion(i, j)) + " |";
        }
        md += "\n";
    }
}

void write_report_json(JsonWriter& w, const EvaluationReport& r) {
    w.begin_object();
    w.kv("task", r.task == ReportTask::Regression ? "regression"
                                                  : "classification");
    w.kv("model", r.model_name);
    if (r.dev_metric) {
        w.kv("dev_metric", *r.dev_metric);
    } else {
        w.key("dev_metric");
        w.null();
    }
    if (r.test_metric) {
        w.kv("test_metric", *r.test_metric);
    } else {
        w.key("test_metric");
        w.null();
    }
    if (r.task == ReportTask::Regression) {
        w.kv("rmse", r.rmse);
        w.key("reference");
        w.begin_object();
        w.kv("baseline_test_rmse", reference::kRegressionBaselineTestRmse);
        w.kv("reported_dev_rmse", reference::kRegressionReportedDevRmse);
        w.kv("reported_test_rmse", reference::kRegressionReportedTestRmse);
        w.end_object();
    } else {
        w.kv("macro_f1", r.macro_f1);
        w.key("class_order");
        w.begin_array();
        for (const auto& c : r.class_order) {
            w.value(c);
        }
        w.end_array();
        w.key("confusion");
        w.begin_array();
        for (Eigen::Index i = 0; i < r.confusion.rows(); ++i) {
            w.begin_array();
            for (Eigen::Index j = 0; j < r.confusion.cols(); ++j) {
                w.value(r.confusion(i, j));
            }
            w.end_array();
        }
        w.end_array();
        w.key("reference");
        w.begin_object();
        w.kv("baseline_test_f1", reference::kClassificationBaselineTestF1);
        w.kv("reported_dev_f1", reference::kClassificationReportedDevF1);
        w.kv("reported_test_f1", reference::kClassificationReportedTestF1);
        w.kv("ensemble_dev_f1", reference::kEnsembleReportedDevF1);
        w.kv("ensemble_test_f1", reference::kEnsembleReportedTestF1);
        w.end_object();
    }
    w.key("predictions");
    w.begin_array();
    for (const auto& row : r.rows) {
        w.begin_object();
        w.kv("subject_id", row.subject_id);
        w.kv("y_true", row.y_true);
        w.kv("y_pred", row.y_pred);
        w.end_object();
    }
    w.end_array();
    w.end_object();
}

void write_report_md(std::string& md, const EvaluationReport& r) {
    if (r.task == ReportTask::Regression) {
        md += "## Regression (MMSE)\n\n";
        md += "| Model | Dev RMSE | Test RMSE |\n|---|---|---|\n";
        md += "| " + r.model_name + " | " +
              (r.dev_metric ? fixed4(*r.dev_metric) : std::string("-")) +
              " | " +
              (r.test_metric ? fixed4(*r.test_metric) : std::string("-")) +
              " |\n";
        md += "| Reference (published) | 2.4869 | 2.6911 |\n";
        md += "| Baseline (paper) | - | 2.9850 |\n";
        md +=
            "\nReference scores come from the published evaluation on the "
            "original private dataset and are shown for context only. (One "
            "prose passage cites 2.26911 for the reference model; the "
            "tabulated value 2.6911 is used here.)\n";
    } else {
        md += "## Classification (diagnostic class)\n\n";
        md += "| Model | Dev F1 | Test F1 |\n|---|---|---|\n";
        md += "| " + r.model_name + " | " +
              (r.dev_metric ? fixed4(*r.dev_metric) : std::string("-")) +
              " | " +
              (r.test_metric ? fixed4(*r.test_metric) : std::string("-")) +
              " |\n";
        md += "| Reference (published SVM) | 0.3970 | 0.5193 |\n";
        md += "| Reference (published ensemble) | 0.6100 | 0.3998 |\n";
        md += "| Baseline (paper) | - | 0.5500 |\n";
        write_confusion_md(md, r);
    }
    md += "\n";
}

}  // namespace

double rmse(const Eigen::VectorXd& predictions,
            const Eigen::VectorXd& targets) {
    if (predictions.size() != targets.size()) {
        throw ArgumentError("rmse: length mismatch (" +
                            std::to_string(predictions.size()) + " vs " +
                            std::to_string(targets.size()) + ")");
    }
    if (predictions.size() == 0) {
        throw ArgumentError("rmse: empty input");
    }
    return std::sqrt((predictions - targets).squaredNorm() /
                     static_cast<double>(predictions.size()));
}

std::pair<Eigen::MatrixXi, double> confusion_and_f1(
    const std::vector<int>& predicted, const std::vector<int>& truth,
    int n_classes) {
    if (predicted.size() != truth.size() || predicted.empty()) {
        throw ArgumentError("confusion_and_f1: need equal, non-empty labels");
    }
    if (n_classes < 1) {
        throw ArgumentError("confusion_and_f1: n_classes must be positive");
    }
    Eigen::MatrixXi m = Eigen::MatrixXi::Zero(n_classes, n_classes);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const int t = truth[i];
        const int p = predicted[i];
        if (t < 0 || t >= n_classes || p < 0 || p >= n_classes) {
            throw ArgumentError("confusion_and_f1: label outside class order");
        }
        m(t, p) += 1;
    }

    double f1_sum = 0.0;
    for (int c = 0; c < n_classes; ++c) {
        const double tp = m(c, c);
        const double pred_c = m.col(c).sum();
        const double true_c = m.row(c).sum();
        const double precision = pred_c > 0 ? tp / pred_c : 0.0;
        const double recall = true_c > 0 ? tp / true_c : 0.0;
        const double f1 = (precision + recall) > 0.0
                              ? 2.0 * precision * recall / (precision + recall)
                              : 0.0;
        f1_sum += f1;
    }
    return {m, f1_sum / n_classes};
}

void emit_reports(std::span<const EvaluationReport> reports,
                  const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);

    JsonWriter w;
    w.begin_object();
    w.kv("version", 1);
    w.key("reports");
    w.begin_array();
    for (const auto& r : reports) {
        write_report_json(w, r);
    }
    w.end_array();
    w.end_object();
    try {
        atomic_write_file(out_dir / "report.json", w.str());
    } catch (const IoError& e) {
        throw IoError(std::string("emit_report(report.json): ") + e.what());
    }

    std::string md = "# Evaluation report\n\n";
    for (const auto& r : reports) {
        write_report_md(md, r);
    }
    try {
        atomic_write_file(out_dir / "report.md", md);
    } catch (const IoError& e) {
        throw IoError(std::string("emit_report(report.md): ") + e.what());
    }
}

void emit_report(const EvaluationReport& report,
                 const std::filesystem::path& out_dir) {
    emit_reports(std::span<const EvaluationReport>(&report, 1), out_dir);
}

}  // namespace cogspeech
