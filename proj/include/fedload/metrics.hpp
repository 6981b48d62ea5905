#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace fedload::metrics {

enum class Scale { Normalized, Watts };

std::string scale_name(Scale scale);

struct MetricsReport {
    double mae = 0.0;
    double rmse = 0.0;
    Scale scale = Scale::Normalized;
    std::size_t n_points = 0;
};

// (1/n) sum |y_true - y_pred|
double mae(const std::vector<double>& y_true, const std::vector<double>& y_pred);
// sqrt((1/n) sum (y_true - y_pred)^2)
double rmse(const std::vector<double>& y_true, const std::vector<double>& y_pred);

MetricsReport compute_metrics(const std::vector<double>& y_true,
                              const std::vector<double>& y_pred, Scale scale);

}  // namespace fedload::metrics
