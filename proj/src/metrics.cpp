#include "fedload/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fedload::metrics {

std::string scale_name(Scale scale) {
    return scale == Scale::Normalized ? "normalized" : "watts";
}

namespace {

void check_lengths(const std::vector<double>& y_true, const std::vector<double>& y_pred,
                   const char* op) {
    if (y_true.size() != y_pred.size()) {
        throw std::invalid_argument(std::string(op) + ": length mismatch, " +
                                    std::to_string(y_true.size()) + " vs " +
                                    std::to_string(y_pred.size()));
    }
    if (y_true.empty()) throw std::invalid_argument(std::string(op) + ": empty input");
}

}  // namespace

double mae(const std::vector<double>& y_true, const std::vector<double>& y_pred) {
    check_lengths(y_true, y_pred, "mae");
    double sum = 0.0;
    for (std::size_t i = 0; i < y_true.size(); ++i) sum += std::fabs(y_true[i] - y_pred[i]);
    return sum / static_cast<double>(y_true.size());
}

double rmse(const std::vector<double>& y_true, const std::vector<double>& y_pred) {
    check_lengths(y_true, y_pred, "rmse");
    double sum = 0.0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const double d = y_true[i] - y_pred[i];
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(y_true.size()));
}

MetricsReport compute_metrics(const std::vector<double>& y_true,
                              const std::vector<double>& y_pred, Scale scale) {
    MetricsReport report;
    report.mae = mae(y_true, y_pred);
    report.rmse = rmse(y_true, y_pred);
    report.scale = scale;
    report.n_points = y_true.size();
    return report;
}

}  // namespace fedload::metrics
