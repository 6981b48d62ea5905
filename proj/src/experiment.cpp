#include "fedload/experiment.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include "fedload/errors.hpp"

namespace fedload::experiment {

std::string mode_name(Mode mode) {
    return mode == Mode::Integrated ? "integrated" : "direct";
}

Mode mode_from_name(const std::string& name) {
    if (name == "integrated") return Mode::Integrated;
    if (name == "direct") return Mode::Direct;
    throw ConfigError("unknown experiment mode '" + name + "'");
}

std::string training_name(Training training) {
    return training == Training::Centralized ? "centralized" : "federated";
}

Training training_from_name(const std::string& name) {
    if (name == "centralized") return Training::Centralized;
    if (name == "federated") return Training::Federated;
    throw ConfigError("unknown training mode '" + name + "'");
}

namespace {

// Shortest decimal form that parses back to the same double.
std::string format_double(double value) {
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    return std::string(buf.data(), res.ptr);
}

std::string cell(const std::optional<double>& value) {
    return value ? format_double(*value) : std::string();
}

using ChannelSplit = PreparedChannel;

ChannelSplit make_channel_split(const data::PowerTrace& train_trace,
                                const data::PowerTrace& test_trace, std::size_t window_len,
                                std::size_t horizon) {
    return prepare_channel(train_trace, test_trace, window_len, horizon);
}

std::vector<double> predict_normalized(const models::ForecastModel& model,
                                       const std::vector<data::Sample>& windows) {
    std::vector<double> out;
    out.reserve(windows.size());
    for (const auto& sample : windows) {
        out.push_back(models::forecast_forward(model, sample.window));
    }
    return out;
}

std::vector<double> normalize_by(const std::vector<double>& values,
                                 const data::NormStats& stats) {
    return data::minmax_normalize(values, stats);
}

using TrainedChannel = TrainOutcome;

TrainedChannel train_channel(Training training, const models::ForecastConfig& forecaster,
                             const federated::FederatedConfig& federated_base,
                             std::size_t centralized_epochs,
                             const std::vector<std::string>& client_ids,
                             const std::vector<const std::vector<data::Sample>*>& client_train,
                             const std::vector<data::Sample>& validation) {
    return train_forecaster(training, forecaster, federated_base, centralized_epochs,
                            client_ids, client_train, validation);
}

struct HouseholdSplit {
    std::string id;
    data::HouseholdDataset train;
    data::HouseholdDataset test;
};

std::vector<HouseholdSplit> split_households(const std::vector<data::HouseholdDataset>& households,
                                             const data::SplitSpec& split) {
    std::vector<HouseholdSplit> out;
    out.reserve(households.size());
    for (const auto& household : households) {
        auto [train, test] = data::split_train_test(household, split);
        out.push_back({household.household_id, std::move(train), std::move(test)});
    }
    return out;
}

std::vector<std::string> shared_appliance_names(const std::vector<HouseholdSplit>& splits) {
    std::vector<std::string> names;
    for (const auto& [name, trace] : splits.front().train.appliances) names.push_back(name);
    if (names.empty()) {
        throw ConfigError("integrated mode requires appliance channels in household '" +
                          splits.front().id + "'");
    }
    for (const auto& split : splits) {
        std::vector<std::string> other;
        for (const auto& [name, trace] : split.train.appliances) other.push_back(name);
        if (other != names) {
            throw ConfigError("household '" + split.id +
                              "' does not share the appliance set of household '" +
                              splits.front().id + "'");
        }
    }
    return names;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec,
                                const std::vector<data::HouseholdDataset>& households) {
    spec.forecaster.validate();
    if (households.empty()) throw ConfigError("run_experiment: no households given");
    std::filesystem::create_directories(spec.out_dir);

    const std::size_t w = spec.forecaster.window_len;
    const std::size_t h = spec.forecaster.horizon;
    const auto splits = split_households(households, spec.split);

    ExperimentResult result;
    std::vector<double> true_norm, pred_norm, true_watts, pred_watts;

    if (spec.mode == Mode::Direct) {
        std::vector<ChannelSplit> channels;
        channels.reserve(splits.size());
        std::vector<std::string> ids;
        std::vector<const std::vector<data::Sample>*> train_sets;
        std::vector<data::Sample> validation;
        for (const auto& split : splits) {
            channels.push_back(make_channel_split(split.train.aggregate, split.test.aggregate,
                                                  w, h));
            ids.push_back(split.id);
        }
        for (const auto& channel : channels) {
            train_sets.push_back(&channel.train_windows);
            validation.insert(validation.end(), channel.test_windows.begin(),
                              channel.test_windows.end());
        }
        const auto trained =
            train_channel(spec.training, spec.forecaster, spec.federated,
                          spec.centralized_epochs, ids, train_sets, validation);
        result.final_train_loss = trained.final_train_loss;
        for (std::size_t i = 0; i < splits.size(); ++i) {
            const auto preds_n = predict_normalized(trained.model, channels[i].test_windows);
            const auto preds_w = data::denormalize(preds_n, channels[i].stats);
            result.csv_paths.push_back(write_prediction_csv(
                spec.out_dir, sanitize_name(splits[i].id) + "_direct_total",
                channels[i].test_timestamps, channels[i].test_true_watts, preds_w));
            for (std::size_t j = 0; j < preds_n.size(); ++j) {
                true_norm.push_back(channels[i].test_windows[j].target);
                pred_norm.push_back(preds_n[j]);
                true_watts.push_back(channels[i].test_true_watts[j]);
                pred_watts.push_back(preds_w[j]);
            }
        }
    } else {
        const auto appliances = shared_appliance_names(splits);
        // channel splits: [household][appliance]
        std::vector<std::vector<ChannelSplit>> channels(splits.size());
        for (std::size_t i = 0; i < splits.size(); ++i) {
            for (const auto& name : appliances) {
                channels[i].push_back(make_channel_split(splits[i].train.appliances.at(name),
                                                         splits[i].test.appliances.at(name), w,
                                                         h));
            }
        }
        std::vector<TrainedChannel> trained;
        trained.reserve(appliances.size());
        for (std::size_t a = 0; a < appliances.size(); ++a) {
            std::vector<std::string> ids;
            std::vector<const std::vector<data::Sample>*> train_sets;
            std::vector<data::Sample> validation;
            for (std::size_t i = 0; i < splits.size(); ++i) {
                ids.push_back(splits[i].id);
                train_sets.push_back(&channels[i][a].train_windows);
                validation.insert(validation.end(), channels[i][a].test_windows.begin(),
                                  channels[i][a].test_windows.end());
            }
            models::ForecastConfig forecaster = spec.forecaster;
            forecaster.seed = Rng::mix(spec.forecaster.seed, a);
            trained.push_back(train_channel(spec.training, forecaster, spec.federated,
                                            spec.centralized_epochs, ids, train_sets,
                                            validation));
            result.final_train_loss += trained.back().final_train_loss;
        }
        result.final_train_loss /= static_cast<double>(appliances.size());

        for (std::size_t i = 0; i < splits.size(); ++i) {
            const auto agg_stats = data::compute_stats(splits[i].train.aggregate.values);
            const std::size_t points = channels[i].front().test_windows.size();
            std::vector<double> total_pred(points, 0.0);
            std::vector<double> total_true(points);
            std::vector<std::int64_t> timestamps(points);
            for (std::size_t j = 0; j < points; ++j) {
                const std::size_t target = j + w + h - 1;
                total_true[j] = splits[i].test.aggregate.values[target];
                timestamps[j] = splits[i].test.aggregate.timestamp_at(target);
            }
            for (std::size_t a = 0; a < appliances.size(); ++a) {
                const auto preds_n =
                    predict_normalized(trained[a].model, channels[i][a].test_windows);
                const auto preds_w = data::denormalize(preds_n, channels[i][a].stats);
                result.csv_paths.push_back(write_prediction_csv(
                    spec.out_dir,
                    sanitize_name(splits[i].id) + "_integrated_" + sanitize_name(appliances[a]),
                    channels[i][a].test_timestamps, channels[i][a].test_true_watts, preds_w));
                for (std::size_t j = 0; j < points; ++j) total_pred[j] += preds_w[j];
            }
            result.csv_paths.push_back(
                write_prediction_csv(spec.out_dir, sanitize_name(splits[i].id) +
                                     "_integrated_total", timestamps, total_true, total_pred));
            const auto tn = normalize_by(total_true, agg_stats);
            const auto pn = normalize_by(total_pred, agg_stats);
            true_norm.insert(true_norm.end(), tn.begin(), tn.end());
            pred_norm.insert(pred_norm.end(), pn.begin(), pn.end());
            true_watts.insert(true_watts.end(), total_true.begin(), total_true.end());
            pred_watts.insert(pred_watts.end(), total_pred.begin(), total_pred.end());
        }
    }

    result.normalized =
        metrics::compute_metrics(true_norm, pred_norm, metrics::Scale::Normalized);
    result.watts = metrics::compute_metrics(true_watts, pred_watts, metrics::Scale::Watts);
    return result;
}

// ---------------------------------------------------------------------------

namespace {

struct IntegratedMetrics {
    double mae_norm, rmse_norm, mae_watts, rmse_watts;
};

// Integrated total of per-appliance predictions vs the household aggregate.
IntegratedMetrics evaluate_integrated(const HouseholdSplit& split,
                                      const std::vector<ChannelSplit>& channels,
                                      const std::vector<const models::ForecastModel*>& models_,
                                      std::size_t window_len, std::size_t horizon) {
    const auto agg_stats = data::compute_stats(split.train.aggregate.values);
    const std::size_t points = channels.front().test_windows.size();
    std::vector<double> total_pred(points, 0.0);
    std::vector<double> total_true(points);
    for (std::size_t j = 0; j < points; ++j) {
        total_true[j] = split.test.aggregate.values[j + window_len + horizon - 1];
    }
    for (std::size_t a = 0; a < channels.size(); ++a) {
        const auto preds_n = predict_normalized(*models_[a], channels[a].test_windows);
        const auto preds_w = data::denormalize(preds_n, channels[a].stats);
        for (std::size_t j = 0; j < points; ++j) total_pred[j] += preds_w[j];
    }
    const auto tn = normalize_by(total_true, agg_stats);
    const auto pn = normalize_by(total_pred, agg_stats);
    return {metrics::mae(tn, pn), metrics::rmse(tn, pn), metrics::mae(total_true, total_pred),
            metrics::rmse(total_true, total_pred)};
}

}  // namespace

std::vector<CompareRow> compare_models(const std::vector<data::HouseholdDataset>& households,
                                       const CompareSpec& spec) {
    if (households.empty()) throw ConfigError("compare_models: no households given");
    for (const auto& name : spec.model_names) {
        if (name != "feddl" && name != "bilstm_attention" && name != "lstm") {
            throw ConfigError("unknown model name '" + name + "'");
        }
    }
    spec.forecaster.validate();
    const std::size_t w = spec.forecaster.window_len;
    const std::size_t h = spec.forecaster.horizon;
    const auto splits = split_households(households, spec.split);
    const auto appliances = shared_appliance_names(splits);

    std::vector<std::vector<ChannelSplit>> channels(splits.size());
    for (std::size_t i = 0; i < splits.size(); ++i) {
        for (const auto& name : appliances) {
            channels[i].push_back(make_channel_split(splits[i].train.appliances.at(name),
                                                     splits[i].test.appliances.at(name), w, h));
        }
    }

    std::vector<CompareRow> rows;
    for (const auto& model_name : spec.model_names) {
        if (model_name == "feddl") {
            std::vector<models::ForecastModel> globals;
            double loss_sum = 0.0;
            for (std::size_t a = 0; a < appliances.size(); ++a) {
                std::vector<std::string> ids;
                std::vector<const std::vector<data::Sample>*> train_sets;
                std::vector<data::Sample> validation;
                for (std::size_t i = 0; i < splits.size(); ++i) {
                    ids.push_back(splits[i].id);
                    train_sets.push_back(&channels[i][a].train_windows);
                    validation.insert(validation.end(), channels[i][a].test_windows.begin(),
                                      channels[i][a].test_windows.end());
                }
                models::ForecastConfig forecaster = spec.forecaster;
                forecaster.kind = models::ModelKind::BilstmAttention;
                forecaster.seed = Rng::mix(spec.forecaster.seed, a);
                auto trained = train_channel(Training::Federated, forecaster, spec.federated,
                                             spec.centralized_epochs, ids, train_sets,
                                             validation);
                loss_sum += trained.final_train_loss;
                globals.push_back(std::move(trained.model));
            }
            for (std::size_t i = 0; i < splits.size(); ++i) {
                std::vector<const models::ForecastModel*> per_appliance;
                for (const auto& model : globals) per_appliance.push_back(&model);
                const auto m = evaluate_integrated(splits[i], channels[i], per_appliance, w, h);
                rows.push_back({splits[i].id, "feddl", "federated", m.mae_norm, m.rmse_norm,
                                m.mae_watts, m.rmse_watts,
                                loss_sum / static_cast<double>(appliances.size())});
            }
        } else {
            const models::ModelKind kind = models::model_kind_from_name(model_name);
            for (std::size_t i = 0; i < splits.size(); ++i) {
                std::vector<models::ForecastModel> trained_models;
                double loss_sum = 0.0;
                for (std::size_t a = 0; a < appliances.size(); ++a) {
                    models::ForecastConfig forecaster = spec.forecaster;
                    forecaster.kind = kind;
                    forecaster.seed = Rng::mix(Rng::mix(spec.forecaster.seed, i), a);
                    auto trained = train_channel(Training::Centralized, forecaster,
                                                 spec.federated, spec.centralized_epochs,
                                                 {splits[i].id}, {&channels[i][a].train_windows},
                                                 channels[i][a].test_windows);
                    loss_sum += trained.final_train_loss;
                    trained_models.push_back(std::move(trained.model));
                }
                std::vector<const models::ForecastModel*> per_appliance;
                for (const auto& model : trained_models) per_appliance.push_back(&model);
                const auto m = evaluate_integrated(splits[i], channels[i], per_appliance, w, h);
                rows.push_back({splits[i].id, model_name, "centralized", m.mae_norm,
                                m.rmse_norm, m.mae_watts, m.rmse_watts,
                                loss_sum / static_cast<double>(appliances.size())});
            }
        }
    }
    return rows;
}

std::vector<CompareRow> reference_rows() {
    std::vector<CompareRow> rows;
    rows.push_back({"published", "feddl", "reference", 0.08141, 0.16739, std::nullopt,
                    std::nullopt, std::nullopt});
    rows.push_back({"published", "bilstm_attention", "reference", 0.07825, 0.15956,
                    std::nullopt, std::nullopt, std::nullopt});
    rows.push_back({"published", "lstm", "reference", 0.10956, 0.18266, std::nullopt,
                    std::nullopt, std::nullopt});
    for (const char* name : {"arima", "svm", "ann", "ffann"}) {
        rows.push_back({"reserved", name, "reference", std::nullopt, std::nullopt, std::nullopt,
                        std::nullopt, std::nullopt});
    }
    return rows;
}

// ---------------------------------------------------------------------------

PreparedChannel prepare_channel(const data::PowerTrace& train_trace,
                                const data::PowerTrace& test_trace, std::size_t window_len,
                                std::size_t horizon) {
    PreparedChannel channel;
    channel.stats = data::compute_stats(train_trace.values);
    channel.train_windows = data::make_windows(
        data::minmax_normalize(train_trace.values, channel.stats), window_len, horizon);
    channel.test_windows = data::make_windows(
        data::minmax_normalize(test_trace.values, channel.stats), window_len, horizon);
    channel.test_timestamps.reserve(channel.test_windows.size());
    channel.test_true_watts.reserve(channel.test_windows.size());
    for (std::size_t i = 0; i < channel.test_windows.size(); ++i) {
        const std::size_t target = i + window_len + horizon - 1;
        channel.test_timestamps.push_back(test_trace.timestamp_at(target));
        channel.test_true_watts.push_back(test_trace.values[target]);
    }
    return channel;
}

TrainOutcome train_forecaster(Training training, const models::ForecastConfig& forecaster,
                              const federated::FederatedConfig& federated_base,
                              std::size_t centralized_epochs,
                              const std::vector<std::string>& client_ids,
                              const std::vector<const std::vector<data::Sample>*>& client_train,
                              const std::vector<data::Sample>& validation) {
    if (client_ids.size() != client_train.size()) {
        throw std::invalid_argument("train_forecaster: id/sample-set count mismatch");
    }
    TrainOutcome outcome;
    if (training == Training::Centralized) {
        std::vector<data::Sample> pooled;
        for (const auto* samples : client_train) {
            pooled.insert(pooled.end(), samples->begin(), samples->end());
        }
        auto model = models::build_forecaster(forecaster);
        auto result = models::train_supervised(model, pooled, centralized_epochs,
                                               forecaster.batch_size, forecaster.lr);
        outcome.final_train_loss = result.loss_history.empty()
                                       ? models::evaluate_mse(result.model, pooled)
                                       : result.loss_history.back();
        outcome.model = std::move(result.model);
        return outcome;
    }
    federated::FederatedConfig config = federated_base;
    config.forecaster = forecaster;
    std::vector<std::shared_ptr<federated::FederatedClient>> clients;
    clients.reserve(client_train.size());
    for (std::size_t i = 0; i < client_train.size(); ++i) {
        clients.push_back(std::make_shared<federated::SimulatedClient>(
            client_ids[i], forecaster, *client_train[i], Rng::mix(config.seed, i)));
    }
    auto result = federated::run_federated(clients, config, validation);
    outcome.final_train_loss =
        result.rounds.empty() ? result.initial_val_loss : result.rounds.back().mean_local_loss;
    outcome.initial_val_loss = result.initial_val_loss;
    outcome.rounds = std::move(result.rounds);
    outcome.model = std::move(result.global_model);
    return outcome;
}

std::string write_prediction_csv(const std::string& out_dir, const std::string& stem,
                                 const std::vector<std::int64_t>& timestamps,
                                 const std::vector<double>& true_watts,
                                 const std::vector<double>& pred_watts) {
    if (timestamps.size() != true_watts.size() || true_watts.size() != pred_watts.size()) {
        throw std::invalid_argument("write_prediction_csv: column length mismatch");
    }
    std::filesystem::create_directories(out_dir);
    const auto path = (std::filesystem::path(out_dir) / (stem + ".csv")).string();
    std::ostringstream out;
    out << "timestamp,true_watts,pred_watts\n";
    for (std::size_t i = 0; i < timestamps.size(); ++i) {
        out << timestamps[i] << "," << format_double(true_watts[i]) << ","
            << format_double(pred_watts[i]) << "\n";
    }
    data::write_file_atomic(path, out.str());
    return path;
}

void write_comparison_csv(const std::vector<CompareRow>& rows, const std::string& path) {
    std::ostringstream out;
    out << "household,model,training,mae_norm,rmse_norm,mae_watts,rmse_watts\n";
    for (const auto& row : rows) {
        out << row.household << "," << row.model << "," << row.training << ","
            << cell(row.mae_norm) << "," << cell(row.rmse_norm) << "," << cell(row.mae_watts)
            << "," << cell(row.rmse_watts) << "\n";
    }
    data::write_file_atomic(path, out.str());
}

void write_comparison_loss_csv(const std::vector<CompareRow>& rows, const std::string& path) {
    std::ostringstream out;
    out << "household,model,training,final_train_mse\n";
    for (const auto& row : rows) {
        if (!row.final_train_mse) continue;
        out << row.household << "," << row.model << "," << row.training << ","
            << format_double(*row.final_train_mse) << "\n";
    }
    data::write_file_atomic(path, out.str());
}

void write_round_log_csv(const std::vector<federated::RoundLog>& rounds,
                         const std::string& path) {
    std::ostringstream out;
    out << "round,client_count,mean_local_loss,global_val_loss\n";
    for (const auto& log : rounds) {
        out << log.round << "," << log.selected_clients.size() << ","
            << format_double(log.mean_local_loss) << "," << format_double(log.global_val_loss)
            << "\n";
    }
    data::write_file_atomic(path, out.str());
}

std::vector<std::string> write_sweep_csvs(const std::vector<federated::SweepCell>& cells,
                                          const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::vector<std::string> paths;
    paths.reserve(cells.size());
    for (const auto& cell_ : cells) {
        const auto path =
            (std::filesystem::path(out_dir) /
             ("sweep_E" + std::to_string(cell_.local_epochs) + "_C" +
              format_fraction(cell_.client_fraction) + ".csv"))
                .string();
        std::ostringstream out;
        out << "round,global_val_loss\n";
        for (std::size_t r = 0; r < cell_.val_losses.size(); ++r) {
            out << (r + 1) << "," << format_double(cell_.val_losses[r]) << "\n";
        }
        data::write_file_atomic(path, out.str());
        paths.push_back(path);
    }
    return paths;
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open csv file '" + path + "'");
    CsvTable table;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::istringstream stream(line);
        std::string field;
        while (std::getline(stream, field, ',')) fields.push_back(field);
        if (line.back() == ',') fields.push_back("");
        if (first) {
            table.header = std::move(fields);
            first = false;
        } else {
            if (fields.size() != table.header.size()) {
                throw ParseError(path + ": row with " + std::to_string(fields.size()) +
                                 " fields, header has " + std::to_string(table.header.size()));
            }
            table.rows.push_back(std::move(fields));
        }
    }
    if (first) throw ParseError(path + ": empty csv file");
    return table;
}

std::string format_fraction(double fraction) {
    std::ostringstream out;
    out << fraction;
    return out.str();
}

std::string sanitize_name(const std::string& name) {
    std::string out;
    out.reserve(name.size());
    for (const char c : name) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                        (c >= '0' && c <= '9') || c == '-' || c == '_' || c == '.';
        out.push_back(ok ? c : '_');
    }
    return out;
}

}  // namespace fedload::experiment
