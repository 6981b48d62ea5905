#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedload/data.hpp"
#include "fedload/federated.hpp"
#include "fedload/metrics.hpp"
#include "fedload/models.hpp"

namespace fedload::experiment {

enum class Mode { Integrated, Direct };
enum class Training { Centralized, Federated };

std::string mode_name(Mode mode);
Mode mode_from_name(const std::string& name);
std::string training_name(Training training);
Training training_from_name(const std::string& name);

struct ExperimentSpec {
    Mode mode = Mode::Direct;
    Training training = Training::Centralized;
    models::ForecastConfig forecaster;
    federated::FederatedConfig federated;  // consulted when training == Federated
    data::SplitSpec split;
    std::size_t centralized_epochs = 20;
    std::string out_dir = ".";
};

struct ExperimentResult {
    metrics::MetricsReport normalized;
    metrics::MetricsReport watts;
    double final_train_loss = 0.0;
    std::vector<std::string> csv_paths;
};

// One channel of one household: split windows normalized by the training
// split's stats, plus the watt-scale truth for the test windows.
struct PreparedChannel {
    data::NormStats stats;
    std::vector<data::Sample> train_windows;
    std::vector<data::Sample> test_windows;
    std::vector<std::int64_t> test_timestamps;
    std::vector<double> test_true_watts;
};

PreparedChannel prepare_channel(const data::PowerTrace& train_trace,
                                const data::PowerTrace& test_trace, std::size_t window_len,
                                std::size_t horizon);

// Trains one forecaster over per-client window sets: pooled for centralized
// training, one federated client per set otherwise.
struct TrainOutcome {
    models::ForecastModel model;
    double final_train_loss = 0.0;
    double initial_val_loss = 0.0;              // federated only
    std::vector<federated::RoundLog> rounds;    // empty for centralized
};

TrainOutcome train_forecaster(Training training, const models::ForecastConfig& forecaster,
                              const federated::FederatedConfig& federated_base,
                              std::size_t centralized_epochs,
                              const std::vector<std::string>& client_ids,
                              const std::vector<const std::vector<data::Sample>*>& client_train,
                              const std::vector<data::Sample>& validation);

// Direct mode: one forecaster on the aggregate channel. Integrated mode: one
// forecaster per appliance channel, predictions summed per step. Emits one
// predicted-vs-true CSV per trained channel per household, plus the total in
// integrated mode; metrics are reported on the total against the aggregate.
ExperimentResult run_experiment(const ExperimentSpec& spec,
                                const std::vector<data::HouseholdDataset>& households);

// ---------------------------------------------------------------------------
// Multi-model, multi-household comparison. Buildable models: "feddl"
// (federated BiLSTM-Attention across the households), "bilstm_attention" and
// "lstm" (both centralized per household). All run integrated over the same
// appliance channels.

struct CompareSpec {
    std::vector<std::string> model_names = {"feddl", "bilstm_attention", "lstm"};
    models::ForecastConfig forecaster;
    federated::FederatedConfig federated;
    data::SplitSpec split;
    std::size_t centralized_epochs = 20;
};

struct CompareRow {
    std::string household;
    std::string model;
    std::string training;
    std::optional<double> mae_norm, rmse_norm, mae_watts, rmse_watts;
    // Final-epoch training MSE, the stand-in reported where a loss comparison
    // is wanted; labeled as such in its own CSV.
    std::optional<double> final_train_mse;
};

std::vector<CompareRow> compare_models(const std::vector<data::HouseholdDataset>& households,
                                       const CompareSpec& spec);

// Rows annotating published reference values plus reserved rows for baseline
// models this toolkit does not build (arima, svm, ann, ffann).
std::vector<CompareRow> reference_rows();

// ---------------------------------------------------------------------------
// CSV emission. All writers are atomic (temp + rename) and deterministic.

std::string write_prediction_csv(const std::string& out_dir, const std::string& stem,
                                 const std::vector<std::int64_t>& timestamps,
                                 const std::vector<double>& true_watts,
                                 const std::vector<double>& pred_watts);

void write_comparison_csv(const std::vector<CompareRow>& rows, const std::string& path);
void write_comparison_loss_csv(const std::vector<CompareRow>& rows, const std::string& path);

// Schema: round,client_count,mean_local_loss,global_val_loss
void write_round_log_csv(const std::vector<federated::RoundLog>& rounds,
                         const std::string& path);

// One file per cell named sweep_E{E}_C{C}.csv with schema round,global_val_loss.
std::vector<std::string> write_sweep_csvs(const std::vector<federated::SweepCell>& cells,
                                          const std::string& out_dir);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};
CsvTable read_csv(const std::string& path);

std::string format_fraction(double fraction);  // 0.5 -> "0.5", 1.0 -> "1"
std::string sanitize_name(const std::string& name);

}  // namespace fedload::experiment
