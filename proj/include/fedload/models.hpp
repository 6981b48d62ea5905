#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fedload/adam.hpp"
#include "fedload/data.hpp"
#include "fedload/param_tree.hpp"
#include "fedload/rng.hpp"
#include "fedload/tensor.hpp"

namespace fedload::models {

enum class ModelKind { BilstmAttention, Lstm };

std::string model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(const std::string& name);

// Desk-scale defaults; published_scale() restores the published layer sizes,
// which are much slower without hardware acceleration.
struct ForecastConfig {
    std::size_t window_len = 32;
    std::size_t layer1_hidden = 16;
    std::size_t layer2_hidden = 8;  // per direction
    double lr = 0.001;
    std::size_t batch_size = 32;
    std::size_t horizon = 1;
    ModelKind kind = ModelKind::BilstmAttention;
    std::uint64_t seed = 0;

    void validate() const;  // ConfigError naming the offending field
    static ForecastConfig published_scale();
};

// Architecture (BilstmAttention): window -> BiLSTM(layer1) -> BiLSTM(layer2)
// -> attention over time steps -> dense+sigmoid scalar head.
// Architecture (Lstm): window -> LSTM(layer1) -> LSTM(layer2) -> last hidden
// -> dense+sigmoid scalar head.
struct ForecastModel {
    ForecastConfig config;
    ParamTree params;
};

ForecastModel build_forecaster(const ForecastConfig& config, Rng& rng);
ForecastModel build_forecaster(const ForecastConfig& config);  // seeds from config.seed

// One-step-ahead normalized prediction in (0,1). Window must be length W.
double forecast_forward(const ForecastModel& model, const Tensor& window);

// Mean squared error over a batch plus its analytic parameter gradient.
struct BatchEval {
    double mean_loss = 0.0;
    ParamTree grads;
};
BatchEval forecast_loss_and_grads(const ForecastModel& model,
                                  const std::vector<data::Sample>& batch);

struct TrainOptions {
    std::size_t epochs = 1;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    // Shifts the per-epoch shuffle schedule so a federated client resuming at
    // global epoch k draws the same permutations a centralized run would.
    std::size_t epoch_offset = 0;
    AdamConfig adam;  // carries the learning rate
};

struct TrainResult {
    ForecastModel model;
    std::vector<double> loss_history;  // mean MSE per epoch
};

// Minibatch Adam training; deterministic given (seed, data, options). If
// adam_state is supplied the optimizer moments persist across calls.
TrainResult train_supervised(const ForecastModel& model,
                             const std::vector<data::Sample>& samples,
                             const TrainOptions& options, AdamState* adam_state = nullptr);
TrainResult train_supervised(const ForecastModel& model,
                             const std::vector<data::Sample>& samples, std::size_t epochs,
                             std::size_t batch_size, double lr);

double evaluate_mse(const ForecastModel& model, const std::vector<data::Sample>& samples);

void save_forecaster(const ForecastModel& model, const std::string& path);
ForecastModel load_forecaster(const std::string& path);

// ---------------------------------------------------------------------------
// Seq2point NILM disaggregator: CNN branch and LSTM branch over the same
// aggregate window, each mapped to mapping_dim, concatenated, dense head
// predicting the appliance's normalized power at the window midpoint.

struct DisaggConfig {
    std::size_t window_len = 64;
    std::size_t conv_filters = 16;
    std::size_t conv_kernel = 5;
    std::size_t pool_width = 2;
    std::size_t pool_stride = 2;
    std::size_t lstm_hidden = 32;
    std::size_t mapping_dim = 32;
    double lr = 0.001;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;

    void validate() const;
    // Length after conv/pool/conv/pool applied to window_len.
    std::size_t conv_out_len() const;
};

struct DisaggModel {
    DisaggConfig config;
    std::string appliance;
    ParamTree params;
    data::NormStats input_stats;   // aggregate channel, training data
    data::NormStats target_stats;  // appliance channel, training data
};

DisaggModel build_disaggregator(const DisaggConfig& config, Rng& rng);
DisaggModel build_disaggregator(const DisaggConfig& config);

// Raw network output on a normalized window (may be negative; disaggregate
// clamps after denormalizing).
double disagg_forward(const DisaggModel& model, const Tensor& window);

// Seq2point training on aligned aggregate/appliance traces. Also fixes the
// model's normalization stats from these traces, even when epochs == 0.
DisaggModel train_disaggregator(const DisaggModel& model, const data::PowerTrace& aggregate,
                                const data::PowerTrace& appliance_truth, std::size_t epochs);

// Applies each model over the aggregate; outputs cover the valid midpoint
// range, denormalized to watts and clamped at zero.
std::map<std::string, data::PowerTrace> disaggregate(
    const std::map<std::string, DisaggModel>& models, const data::PowerTrace& aggregate);

void save_disaggregator(const DisaggModel& model, const std::string& path);
DisaggModel load_disaggregator(const std::string& path);

// ---------------------------------------------------------------------------
// Integrated forecasting: one forecaster per appliance, each with the
// normalization stats of its own channel.

struct ApplianceForecaster {
    ForecastModel model;
    data::NormStats stats;
};

// histories hold raw-watt windows; the total is the sum of denormalized
// per-appliance predictions, accumulated in lexicographic name order.
double integrated_forecast(const std::map<std::string, ApplianceForecaster>& forecasters,
                           const std::map<std::string, Tensor>& histories);

}  // namespace fedload::models
