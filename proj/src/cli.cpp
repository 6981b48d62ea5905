#include "fedload/cli.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedload/data.hpp"
#include "fedload/errors.hpp"
#include "fedload/experiment.hpp"
#include "fedload/federated.hpp"
#include "fedload/metrics.hpp"
#include "fedload/models.hpp"
#include "fedload/rng.hpp"

namespace fedload::cli {
namespace {

using nlohmann::json;

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("config: cannot open '" + path + "'");
    }
    json parsed;
    try {
        in >> parsed;
    } catch (const json::parse_error& e) {
        throw ParseError("config '" + path + "': " + e.what());
    }
    if (!parsed.is_object()) {
        throw ConfigError("config '" + path + "': top level must be an object");
    }
    return parsed;
}

template <typename T>
T jget(const json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) {
        return fallback;
    }
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + key + "' has the wrong type");
    }
}

json jsection(const json& j, const std::string& key) {
    if (!j.contains(key)) {
        return json::object();
    }
    if (!j.at(key).is_object()) {
        throw ConfigError("config key '" + key + "' must be an object");
    }
    return j.at(key);
}

// Flags shared by every subcommand; each has a config twin and the flag wins.
struct CommonOpts {
    std::string config_path;
    std::uint64_t seed = 0;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "JSON config file (flags override its values)");
    cmd->add_option("--seed", opts.seed, "Seed for every RNG in the run");
    cmd->add_option("--out-dir", opts.out_dir, "Directory for output artifacts");
}

struct Resolved {
    json cfg = json::object();
    std::uint64_t seed = 0;
    std::string out_dir = ".";
};

Resolved resolve_common(const CLI::App* cmd, const CommonOpts& opts) {
    Resolved r;
    if (!opts.config_path.empty()) {
        r.cfg = load_json(opts.config_path);
    }
    r.seed = jget<std::uint64_t>(r.cfg, "seed", 0);
    if (cmd->count("--seed") > 0) {
        r.seed = opts.seed;
    }
    r.out_dir = jget<std::string>(r.cfg, "out_dir", ".");
    if (cmd->count("--out-dir") > 0) {
        r.out_dir = opts.out_dir;
    }
    std::filesystem::create_directories(r.out_dir);
    return r;
}

std::string join_path(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

std::string path_stem(const std::string& path) {
    return std::filesystem::path(path).stem().string();
}

models::ForecastConfig forecaster_from_json(const json& j, std::uint64_t default_seed) {
    models::ForecastConfig fc;
    if (jget(j, "published_scale", false)) {
        fc = models::ForecastConfig::published_scale();
    }
    fc.window_len = jget<std::size_t>(j, "window_len", fc.window_len);
    fc.layer1_hidden = jget<std::size_t>(j, "layer1_hidden", fc.layer1_hidden);
    fc.layer2_hidden = jget<std::size_t>(j, "layer2_hidden", fc.layer2_hidden);
    fc.lr = jget<double>(j, "lr", fc.lr);
    fc.batch_size = jget<std::size_t>(j, "batch_size", fc.batch_size);
    fc.horizon = jget<std::size_t>(j, "horizon", fc.horizon);
    fc.kind = models::model_kind_from_name(
        jget<std::string>(j, "kind", models::model_kind_name(fc.kind)));
    fc.seed = jget<std::uint64_t>(j, "seed", default_seed);
    fc.validate();
    return fc;
}

federated::FederatedConfig federated_from_json(const json& j, std::uint64_t default_seed,
                                               const models::ForecastConfig& forecaster) {
    federated::FederatedConfig fed;
    fed.rounds = jget<std::size_t>(j, "rounds", fed.rounds);
    fed.local_epochs = jget<std::size_t>(j, "local_epochs", fed.local_epochs);
    fed.client_fraction = jget<double>(j, "client_fraction", fed.client_fraction);
    fed.seed = jget<std::uint64_t>(j, "seed", default_seed);
    fed.parallel_clients = jget<bool>(j, "parallel_clients", fed.parallel_clients);
    const std::string weighting = jget<std::string>(j, "weighting", "uniform");
    if (weighting == "uniform") {
        fed.weighting = federated::WeightingMode::Uniform;
    } else if (weighting == "sample_size") {
        fed.weighting = federated::WeightingMode::SampleSize;
    } else {
        throw ConfigError("config key 'weighting' must be 'uniform' or 'sample_size'");
    }
    fed.forecaster = forecaster;
    fed.adam.lr = forecaster.lr;
    fed.validate();
    return fed;
}

models::DisaggConfig disagg_from_json(const json& j, std::uint64_t default_seed) {
    models::DisaggConfig dc;
    dc.window_len = jget<std::size_t>(j, "window_len", dc.window_len);
    dc.conv_filters = jget<std::size_t>(j, "conv_filters", dc.conv_filters);
    dc.conv_kernel = jget<std::size_t>(j, "conv_kernel", dc.conv_kernel);
    dc.pool_width = jget<std::size_t>(j, "pool_width", dc.pool_width);
    dc.pool_stride = jget<std::size_t>(j, "pool_stride", dc.pool_stride);
    dc.lstm_hidden = jget<std::size_t>(j, "lstm_hidden", dc.lstm_hidden);
    dc.mapping_dim = jget<std::size_t>(j, "mapping_dim", dc.mapping_dim);
    dc.lr = jget<double>(j, "lr", dc.lr);
    dc.batch_size = jget<std::size_t>(j, "batch_size", dc.batch_size);
    dc.seed = jget<std::uint64_t>(j, "seed", default_seed);
    dc.validate();
    return dc;
}

data::SplitSpec split_from_json(const json& j) {
    const json section = jsection(j, "split");
    data::SplitSpec split;
    split.train_minutes = jget<double>(section, "train_minutes", split.train_minutes);
    split.test_minutes = jget<double>(section, "test_minutes", split.test_minutes);
    return split;
}

data::SynthAppliance appliance_from_json(const json& j) {
    data::SynthAppliance app;
    app.name = jget<std::string>(j, "name", "");
    if (app.name.empty()) {
        throw ConfigError("synth appliance: missing 'name'");
    }
    app.rated_power = jget<double>(j, "rated_power", app.rated_power);
    app.p_on_to_off = jget<double>(j, "p_on_to_off", app.p_on_to_off);
    app.p_off_to_on = jget<double>(j, "p_off_to_on", app.p_off_to_on);
    app.noise_std = jget<double>(j, "noise_std", app.noise_std);
    if (j.contains("cycle")) {
        const json c = jsection(j, "cycle");
        data::SynthAppliance::Cycle cycle;
        cycle.period_steps = jget<std::size_t>(c, "period_steps", cycle.period_steps);
        cycle.duty = jget<double>(c, "duty", cycle.duty);
        cycle.phase = jget<std::size_t>(c, "phase", cycle.phase);
        app.cycle = cycle;
    }
    return app;
}

// Three appliances with disjoint duty windows plus one long-period load,
// so the per-appliance channels are individually easy to forecast.
std::vector<data::SynthAppliance> default_appliances() {
    std::vector<data::SynthAppliance> apps(4);
    apps[0].name = "fridge";
    apps[0].rated_power = 120.0;
    apps[0].noise_std = 2.0;
    apps[0].cycle = data::SynthAppliance::Cycle{100, 0.3, 0};
    apps[1].name = "dishwasher";
    apps[1].rated_power = 350.0;
    apps[1].noise_std = 2.0;
    apps[1].cycle = data::SynthAppliance::Cycle{100, 0.3, 70};
    apps[2].name = "washer";
    apps[2].rated_power = 500.0;
    apps[2].noise_std = 2.0;
    apps[2].cycle = data::SynthAppliance::Cycle{100, 0.3, 35};
    apps[3].name = "heater";
    apps[3].rated_power = 800.0;
    apps[3].noise_std = 5.0;
    apps[3].cycle = data::SynthAppliance::Cycle{600, 0.5, 0};
    return apps;
}

data::SynthConfig synth_from_json(const json& j, const std::string& fallback_id,
                                  std::uint64_t fallback_seed, std::size_t fallback_length) {
    data::SynthConfig sc;
    sc.household_id = jget<std::string>(j, "id", fallback_id);
    sc.length = jget<std::size_t>(j, "length", fallback_length);
    sc.period = jget<double>(j, "period", sc.period);
    sc.start_time = jget<std::int64_t>(j, "start_time", sc.start_time);
    sc.seed = jget<std::uint64_t>(j, "seed", fallback_seed);
    if (j.contains("appliances")) {
        if (!j.at("appliances").is_array()) {
            throw ConfigError("config key 'appliances' must be an array");
        }
        for (const json& app : j.at("appliances")) {
            sc.appliances.push_back(appliance_from_json(app));
        }
    } else {
        sc.appliances = default_appliances();
    }
    return sc;
}

std::vector<data::HouseholdDataset> load_inputs(const json& cfg,
                                                const std::vector<std::string>& flag_inputs) {
    std::vector<std::string> paths = flag_inputs;
    if (paths.empty()) {
        paths = jget<std::vector<std::string>>(cfg, "inputs", {});
    }
    if (paths.empty()) {
        const std::string single = jget<std::string>(cfg, "input", "");
        if (!single.empty()) {
            paths.push_back(single);
        }
    }
    if (paths.empty()) {
        throw ConfigError("no input datasets: pass --input or set 'inputs' in the config");
    }
    std::vector<data::HouseholdDataset> households;
    households.reserve(paths.size());
    for (const std::string& path : paths) {
        households.push_back(data::dataset_from_csv(path, path_stem(path)));
    }
    return households;
}

const data::PowerTrace& channel_trace(const data::HouseholdDataset& household,
                                      const std::string& channel) {
    if (channel == "aggregate") {
        return household.aggregate;
    }
    const auto it = household.appliances.find(channel);
    if (it == household.appliances.end()) {
        throw ConfigError("household '" + household.household_id + "' has no channel '" +
                          channel + "'");
    }
    return it->second;
}

// Per-household training windows for one channel plus the pooled validation
// set, shared by the train and sweep subcommands.
struct ChannelSets {
    std::vector<std::string> ids;
    std::vector<std::vector<data::Sample>> train_sets;
    std::vector<data::Sample> validation;
};

ChannelSets prepare_channel_sets(const std::vector<data::HouseholdDataset>& households,
                                 const std::string& channel, const data::SplitSpec& split,
                                 std::size_t window_len, std::size_t horizon) {
    ChannelSets sets;
    for (const data::HouseholdDataset& household : households) {
        const auto parts = data::split_train_test(household, split);
        auto prepared =
            experiment::prepare_channel(channel_trace(parts.first, channel),
                                        channel_trace(parts.second, channel), window_len, horizon);
        sets.ids.push_back(household.household_id);
        sets.train_sets.push_back(std::move(prepared.train_windows));
        sets.validation.insert(sets.validation.end(), prepared.test_windows.begin(),
                               prepared.test_windows.end());
    }
    return sets;
}

void print_metrics(const metrics::MetricsReport& report) {
    std::cout << metrics::scale_name(report.scale) << " mae=" << report.mae
              << " rmse=" << report.rmse << " n=" << report.n_points << "\n";
}

// ---------------------------------------------------------------------------
// Subcommand bodies. Each throws on failure; dispatch turns that into exit 1.

void run_synth(const CLI::App* cmd, const CommonOpts& common, std::size_t flag_count,
               std::size_t flag_length) {
    const Resolved r = resolve_common(cmd, common);
    std::size_t count = jget<std::size_t>(r.cfg, "count", 1);
    if (cmd->count("--count") > 0) {
        count = flag_count;
    }
    std::size_t length = jget<std::size_t>(r.cfg, "length", 5000);
    if (cmd->count("--length") > 0) {
        length = flag_length;
    }
    std::vector<json> households;
    if (r.cfg.contains("households")) {
        if (!r.cfg.at("households").is_array()) {
            throw ConfigError("config key 'households' must be an array");
        }
        for (const json& h : r.cfg.at("households")) {
            households.push_back(h);
        }
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            households.push_back(json::object());
        }
    }
    if (households.empty()) {
        throw ConfigError("synth: no households requested");
    }
    for (std::size_t i = 0; i < households.size(); ++i) {
        const data::SynthConfig sc =
            synth_from_json(households[i], "house_" + std::to_string(i + 1),
                            Rng::mix(r.seed, i), length);
        const data::HouseholdDataset dataset = data::synth_household(sc);
        const std::string path = join_path(r.out_dir, sc.household_id + ".csv");
        data::dataset_to_csv(dataset, path);
        std::cout << "wrote " << path << "\n";
    }
}

void run_ingest(const CLI::App* cmd, const CommonOpts& common, const std::string& flag_id,
                const std::string& flag_house_dir, const std::vector<std::string>& flag_channels,
                double flag_period, double flag_gap_limit) {
    const Resolved r = resolve_common(cmd, common);
    std::string household_id = jget<std::string>(r.cfg, "household_id", "house_1");
    if (cmd->count("--id") > 0) {
        household_id = flag_id;
    }
    double period = jget<double>(r.cfg, "period", 6.0);
    if (cmd->count("--period") > 0) {
        period = flag_period;
    }
    double gap_limit = jget<double>(r.cfg, "gap_fill_limit", 180.0);
    if (cmd->count("--gap-limit") > 0) {
        gap_limit = flag_gap_limit;
    }
    std::string house_dir = jget<std::string>(r.cfg, "house_dir", "");
    if (cmd->count("--house-dir") > 0) {
        house_dir = flag_house_dir;
    }
    std::map<std::string, std::string> channel_paths;
    const json section = jsection(r.cfg, "channels");
    for (const auto& [name, value] : section.items()) {
        if (!value.is_string()) {
            throw ConfigError("config key 'channels." + name + "' must be a file path");
        }
        channel_paths[name] = value.get<std::string>();
    }
    for (const std::string& spec : flag_channels) {
        const std::size_t eq = spec.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
            throw ConfigError("--channel expects name=path, got '" + spec + "'");
        }
        channel_paths[spec.substr(0, eq)] = spec.substr(eq + 1);
    }
    if (house_dir.empty() && channel_paths.empty()) {
        throw ConfigError(
            "ingest: no channels given (use 'house_dir' with a labels.dat, config 'channels', "
            "or --channel name=path)");
    }
    data::HouseholdDataset dataset;
    if (!house_dir.empty()) {
        if (!channel_paths.empty()) {
            throw ConfigError("ingest: give either 'house_dir' or explicit channels, not both");
        }
        dataset = data::ingest_house(house_dir, household_id, period, gap_limit);
    } else {
        std::vector<std::pair<std::string, data::RawChannel>> channels;
        channels.reserve(channel_paths.size());
        for (const auto& [name, path] : channel_paths) {
            channels.emplace_back(name, data::ingest_channel(path));
        }
        dataset = data::align_and_fill(channels, household_id, period, gap_limit);
    }
    const std::string path = join_path(r.out_dir, household_id + ".csv");
    data::dataset_to_csv(dataset, path);
    std::cout << "wrote " << path << " (" << dataset.aggregate.size() << " samples, "
              << dataset.appliances.size() << " appliance channels)\n";
}

void run_disaggregate(const CLI::App* cmd, const CommonOpts& common,
                      const std::vector<std::string>& flag_inputs, std::size_t flag_epochs) {
    const Resolved r = resolve_common(cmd, common);
    const std::vector<data::HouseholdDataset> households = load_inputs(r.cfg, flag_inputs);
    if (households.size() != 1) {
        throw ConfigError("disaggregate: expects exactly one input dataset");
    }
    const data::HouseholdDataset& household = households.front();
    if (household.appliances.empty()) {
        throw ConfigError("disaggregate: input has no appliance channels to learn from");
    }
    std::size_t epochs = jget<std::size_t>(r.cfg, "epochs", 2);
    if (cmd->count("--epochs") > 0) {
        epochs = flag_epochs;
    }
    std::vector<std::string> appliances =
        jget<std::vector<std::string>>(r.cfg, "appliances", {});
    if (appliances.empty()) {
        for (const auto& [name, trace] : household.appliances) {
            appliances.push_back(name);
        }
    }
    const data::SplitSpec split = split_from_json(r.cfg);
    const models::DisaggConfig base = disagg_from_json(jsection(r.cfg, "disagg"), r.seed);
    const auto parts = data::split_train_test(household, split);
    const std::size_t train_len = parts.first.aggregate.size();

    std::map<std::string, models::DisaggModel> trained;
    for (std::size_t i = 0; i < appliances.size(); ++i) {
        const std::string& name = appliances[i];
        const auto it = household.appliances.find(name);
        if (it == household.appliances.end()) {
            throw ConfigError("disaggregate: input has no appliance channel '" + name + "'");
        }
        models::DisaggConfig dc = base;
        dc.seed = Rng::mix(base.seed, i);
        models::DisaggModel model = models::build_disaggregator(dc);
        model.appliance = name;
        model = models::train_disaggregator(model, parts.first.aggregate,
                                            parts.first.appliances.at(name), epochs);
        const std::string model_path =
            join_path(r.out_dir, "disagg_" + experiment::sanitize_name(name) + ".model");
        models::save_disaggregator(model, model_path);
        std::cout << "wrote " << model_path << "\n";
        trained.emplace(name, std::move(model));
    }

    const auto estimated = models::disaggregate(trained, household.aggregate);
    const std::size_t offset = base.window_len / 2;
    data::HouseholdDataset decomposed;
    decomposed.household_id = household.household_id;
    decomposed.aggregate.period = household.aggregate.period;
    decomposed.aggregate.start_time = household.aggregate.timestamp_at(offset);
    const std::size_t est_len = estimated.begin()->second.size();
    decomposed.aggregate.values.assign(
        household.aggregate.values.begin() + static_cast<std::ptrdiff_t>(offset),
        household.aggregate.values.begin() + static_cast<std::ptrdiff_t>(offset + est_len));
    decomposed.appliances = estimated;
    const std::string csv_path =
        join_path(r.out_dir, household.household_id + "_disagg.csv");
    data::dataset_to_csv(decomposed, csv_path);
    std::cout << "wrote " << csv_path << "\n";

    // Held-out fit of each estimate against the metered channel.
    for (const auto& [name, estimate] : estimated) {
        std::vector<double> truth_test, estimate_test;
        const auto& truth = household.appliances.at(name);
        for (std::size_t j = 0; j < estimate.size(); ++j) {
            const std::size_t global_index = offset + j;
            if (global_index >= train_len && global_index < truth.size()) {
                truth_test.push_back(truth.values[global_index]);
                estimate_test.push_back(estimate.values[j]);
            }
        }
        if (!truth_test.empty()) {
            const auto report =
                metrics::compute_metrics(truth_test, estimate_test, metrics::Scale::Watts);
            std::cout << name << " test ";
            print_metrics(report);
        }
    }
}

void run_train(const CLI::App* cmd, const CommonOpts& common,
               const std::vector<std::string>& flag_inputs, const std::string& flag_channel,
               const std::string& flag_training, std::size_t flag_epochs) {
    const Resolved r = resolve_common(cmd, common);
    const std::vector<data::HouseholdDataset> households = load_inputs(r.cfg, flag_inputs);
    std::string channel = jget<std::string>(r.cfg, "channel", "aggregate");
    if (cmd->count("--channel") > 0) {
        channel = flag_channel;
    }
    std::string training_name = jget<std::string>(r.cfg, "training", "centralized");
    if (cmd->count("--training") > 0) {
        training_name = flag_training;
    }
    const experiment::Training training = experiment::training_from_name(training_name);
    std::size_t epochs = jget<std::size_t>(r.cfg, "epochs", 20);
    if (cmd->count("--epochs") > 0) {
        epochs = flag_epochs;
    }
    const models::ForecastConfig fc = forecaster_from_json(jsection(r.cfg, "forecaster"), r.seed);
    const federated::FederatedConfig fed =
        federated_from_json(jsection(r.cfg, "federated"), r.seed, fc);
    const data::SplitSpec split = split_from_json(r.cfg);

    ChannelSets sets =
        prepare_channel_sets(households, channel, split, fc.window_len, fc.horizon);
    std::vector<const std::vector<data::Sample>*> train_ptrs;
    train_ptrs.reserve(sets.train_sets.size());
    for (const auto& samples : sets.train_sets) {
        train_ptrs.push_back(&samples);
    }
    const experiment::TrainOutcome outcome = experiment::train_forecaster(
        training, fc, fed, epochs, sets.ids, train_ptrs, sets.validation);

    const std::string model_name = jget<std::string>(r.cfg, "model_out", "forecaster.model");
    const std::string model_path = join_path(r.out_dir, model_name);
    models::save_forecaster(outcome.model, model_path);
    std::cout << "wrote " << model_path << "\n";
    if (training == experiment::Training::Federated) {
        const std::string rounds_path = join_path(r.out_dir, "rounds.csv");
        experiment::write_round_log_csv(outcome.rounds, rounds_path);
        std::cout << "wrote " << rounds_path << "\n";
        std::cout << "initial val loss " << outcome.initial_val_loss << ", final val loss "
                  << (outcome.rounds.empty() ? outcome.initial_val_loss
                                             : outcome.rounds.back().global_val_loss)
                  << "\n";
    }
    std::cout << "final train loss " << outcome.final_train_loss << "\n";
}

void run_forecast(const CLI::App* cmd, const CommonOpts& common, const std::string& flag_model,
                  const std::vector<std::string>& flag_inputs, const std::string& flag_channel) {
    const Resolved r = resolve_common(cmd, common);
    std::string model_path = jget<std::string>(r.cfg, "model", "");
    if (cmd->count("--model") > 0) {
        model_path = flag_model;
    }
    if (model_path.empty()) {
        throw ConfigError("forecast: missing 'model' (path to a saved forecaster)");
    }
    const models::ForecastModel model = models::load_forecaster(model_path);
    const std::vector<data::HouseholdDataset> households = load_inputs(r.cfg, flag_inputs);
    if (households.size() != 1) {
        throw ConfigError("forecast: expects exactly one input dataset");
    }
    std::string channel = jget<std::string>(r.cfg, "channel", "aggregate");
    if (cmd->count("--channel") > 0) {
        channel = flag_channel;
    }
    const data::SplitSpec split = split_from_json(r.cfg);
    const auto parts = data::split_train_test(households.front(), split);
    const experiment::PreparedChannel prepared = experiment::prepare_channel(
        channel_trace(parts.first, channel), channel_trace(parts.second, channel),
        model.config.window_len, model.config.horizon);

    std::vector<double> pred_norm, true_norm, pred_watts;
    pred_norm.reserve(prepared.test_windows.size());
    for (const data::Sample& sample : prepared.test_windows) {
        const double p = models::forecast_forward(model, sample.window);
        pred_norm.push_back(p);
        true_norm.push_back(sample.target);
        pred_watts.push_back(data::denormalize_value(p, prepared.stats));
    }
    const std::string stem = jget<std::string>(
        r.cfg, "stem", households.front().household_id + "_" + experiment::sanitize_name(channel));
    const std::string path = experiment::write_prediction_csv(
        r.out_dir, stem, prepared.test_timestamps, prepared.test_true_watts, pred_watts);
    std::cout << "wrote " << path << "\n";
    print_metrics(metrics::compute_metrics(true_norm, pred_norm, metrics::Scale::Normalized));
    print_metrics(
        metrics::compute_metrics(prepared.test_true_watts, pred_watts, metrics::Scale::Watts));
}

void run_evaluate(const CLI::App* cmd, const CommonOpts& common,
                  const std::vector<std::string>& flag_inputs, const std::string& flag_mode,
                  const std::string& flag_training, std::size_t flag_epochs) {
    const Resolved r = resolve_common(cmd, common);
    const std::vector<data::HouseholdDataset> households = load_inputs(r.cfg, flag_inputs);
    std::string mode_name = jget<std::string>(r.cfg, "mode", "");
    if (cmd->count("--mode") > 0) {
        mode_name = flag_mode;
    }
    if (mode_name.empty()) {
        throw ConfigError("evaluate: missing 'mode' (integrated or direct)");
    }
    std::string training_name = jget<std::string>(r.cfg, "training", "centralized");
    if (cmd->count("--training") > 0) {
        training_name = flag_training;
    }
    experiment::ExperimentSpec spec;
    spec.mode = experiment::mode_from_name(mode_name);
    spec.training = experiment::training_from_name(training_name);
    spec.forecaster = forecaster_from_json(jsection(r.cfg, "forecaster"), r.seed);
    spec.federated = federated_from_json(jsection(r.cfg, "federated"), r.seed, spec.forecaster);
    spec.split = split_from_json(r.cfg);
    spec.centralized_epochs = jget<std::size_t>(r.cfg, "epochs", spec.centralized_epochs);
    if (cmd->count("--epochs") > 0) {
        spec.centralized_epochs = flag_epochs;
    }
    spec.out_dir = r.out_dir;

    const experiment::ExperimentResult result = experiment::run_experiment(spec, households);
    for (const std::string& path : result.csv_paths) {
        std::cout << "wrote " << path << "\n";
    }
    print_metrics(result.normalized);
    print_metrics(result.watts);
    std::cout << "final train loss " << result.final_train_loss << "\n";
}

void run_compare(const CLI::App* cmd, const CommonOpts& common,
                 const std::vector<std::string>& flag_inputs,
                 const std::vector<std::string>& flag_models, std::size_t flag_epochs) {
    const Resolved r = resolve_common(cmd, common);
    const std::vector<data::HouseholdDataset> households = load_inputs(r.cfg, flag_inputs);
    experiment::CompareSpec spec;
    const std::vector<std::string> cfg_models =
        jget<std::vector<std::string>>(r.cfg, "models", {});
    if (!cfg_models.empty()) {
        spec.model_names = cfg_models;
    }
    if (!flag_models.empty()) {
        spec.model_names = flag_models;
    }
    spec.forecaster = forecaster_from_json(jsection(r.cfg, "forecaster"), r.seed);
    spec.federated = federated_from_json(jsection(r.cfg, "federated"), r.seed, spec.forecaster);
    spec.split = split_from_json(r.cfg);
    spec.centralized_epochs = jget<std::size_t>(r.cfg, "epochs", spec.centralized_epochs);
    if (cmd->count("--epochs") > 0) {
        spec.centralized_epochs = flag_epochs;
    }

    std::vector<experiment::CompareRow> rows = experiment::compare_models(households, spec);
    if (jget(r.cfg, "include_reference", true)) {
        const auto reference = experiment::reference_rows();
        rows.insert(rows.end(), reference.begin(), reference.end());
    }
    const std::string table_path = join_path(r.out_dir, "comparison.csv");
    experiment::write_comparison_csv(rows, table_path);
    std::cout << "wrote " << table_path << "\n";
    const std::string loss_path = join_path(r.out_dir, "comparison_loss.csv");
    experiment::write_comparison_loss_csv(rows, loss_path);
    std::cout << "wrote " << loss_path << "\n";
}

void run_sweep(const CLI::App* cmd, const CommonOpts& common,
               const std::vector<std::string>& flag_inputs, const std::string& flag_channel) {
    const Resolved r = resolve_common(cmd, common);
    const std::vector<data::HouseholdDataset> households = load_inputs(r.cfg, flag_inputs);
    std::string channel = jget<std::string>(r.cfg, "channel", "aggregate");
    if (cmd->count("--channel") > 0) {
        channel = flag_channel;
    }
    const models::ForecastConfig fc = forecaster_from_json(jsection(r.cfg, "forecaster"), r.seed);
    const federated::FederatedConfig fed =
        federated_from_json(jsection(r.cfg, "federated"), r.seed, fc);
    const data::SplitSpec split = split_from_json(r.cfg);
    const std::vector<std::size_t> epoch_grid =
        jget<std::vector<std::size_t>>(r.cfg, "local_epochs", {5, 50, 80});
    const std::vector<double> fraction_grid =
        jget<std::vector<double>>(r.cfg, "client_fractions", {0.5, 1.0});

    const ChannelSets sets =
        prepare_channel_sets(households, channel, split, fc.window_len, fc.horizon);
    const federated::ClientFactory factory = [&sets, &fc, &fed]() {
        std::vector<std::shared_ptr<federated::FederatedClient>> clients;
        clients.reserve(sets.ids.size());
        for (std::size_t i = 0; i < sets.ids.size(); ++i) {
            clients.push_back(std::make_shared<federated::SimulatedClient>(
                sets.ids[i], fc, sets.train_sets[i], Rng::mix(fed.seed, i)));
        }
        return clients;
    };
    const auto cells =
        federated::robustness_sweep(factory, fed, epoch_grid, fraction_grid, sets.validation);
    const auto paths = experiment::write_sweep_csvs(cells, r.out_dir);
    for (const std::string& path : paths) {
        std::cout << "wrote " << path << "\n";
    }
}

}  // namespace

int dispatch(int argc, const char* const* argv) {
    CLI::App app{"fedload: federated per-appliance load forecasting toolkit"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    CommonOpts synth_common;
    std::size_t synth_count = 1;
    std::size_t synth_length = 5000;
    CLI::App* synth = app.add_subcommand("synth", "Generate synthetic household datasets");
    add_common(synth, synth_common);
    synth->add_option("--count", synth_count, "Number of households when no config lists them");
    synth->add_option("--length", synth_length, "Samples per household");
    synth->callback(
        [&]() { run_synth(synth, synth_common, synth_count, synth_length); });

    CommonOpts ingest_common;
    std::string ingest_id;
    std::string ingest_house_dir;
    std::vector<std::string> ingest_channels;
    double ingest_period = 6.0;
    double ingest_gap_limit = 180.0;
    CLI::App* ingest =
        app.add_subcommand("ingest", "Align raw meter channels onto one dataset grid");
    add_common(ingest, ingest_common);
    ingest->add_option("--id", ingest_id, "Household id for the output dataset");
    ingest->add_option("--house-dir", ingest_house_dir,
                       "Directory with labels.dat and channel_<n>.dat files");
    ingest->add_option("--channel", ingest_channels, "Channel as name=path (repeatable)");
    ingest->add_option("--period", ingest_period, "Grid period in seconds");
    ingest->add_option("--gap-limit", ingest_gap_limit, "Forward-fill limit in seconds");
    ingest->callback([&]() {
        run_ingest(ingest, ingest_common, ingest_id, ingest_house_dir, ingest_channels,
                   ingest_period, ingest_gap_limit);
    });

    CommonOpts disagg_common;
    std::vector<std::string> disagg_inputs;
    std::size_t disagg_epochs = 2;
    CLI::App* disagg = app.add_subcommand(
        "disaggregate", "Train seq2point models and decompose the aggregate signal");
    add_common(disagg, disagg_common);
    disagg->add_option("--input", disagg_inputs, "Dataset CSV with metered appliance channels");
    disagg->add_option("--epochs", disagg_epochs, "Training epochs per appliance");
    disagg->callback(
        [&]() { run_disaggregate(disagg, disagg_common, disagg_inputs, disagg_epochs); });

    CommonOpts train_common;
    std::vector<std::string> train_inputs;
    std::string train_channel = "aggregate";
    std::string train_training = "centralized";
    std::size_t train_epochs = 20;
    CLI::App* train = app.add_subcommand("train", "Train a forecaster on one channel");
    add_common(train, train_common);
    train->add_option("--input", train_inputs, "Dataset CSV, one per client household");
    train->add_option("--channel", train_channel, "Channel name or 'aggregate'");
    train->add_option("--training", train_training, "centralized or federated");
    train->add_option("--epochs", train_epochs, "Centralized training epochs");
    train->callback([&]() {
        run_train(train, train_common, train_inputs, train_channel, train_training, train_epochs);
    });

    CommonOpts forecast_common;
    std::string forecast_model;
    std::vector<std::string> forecast_inputs;
    std::string forecast_channel = "aggregate";
    CLI::App* forecast =
        app.add_subcommand("forecast", "Run a saved forecaster over a dataset's test split");
    add_common(forecast, forecast_common);
    forecast->add_option("--model", forecast_model, "Saved forecaster checkpoint");
    forecast->add_option("--input", forecast_inputs, "Dataset CSV");
    forecast->add_option("--channel", forecast_channel, "Channel name or 'aggregate'");
    forecast->callback([&]() {
        run_forecast(forecast, forecast_common, forecast_model, forecast_inputs,
                     forecast_channel);
    });

    CommonOpts eval_common;
    std::vector<std::string> eval_inputs;
    std::string eval_mode;
    std::string eval_training = "centralized";
    std::size_t eval_epochs = 20;
    CLI::App* evaluate =
        app.add_subcommand("evaluate", "Integrated or direct forecasting experiment");
    add_common(evaluate, eval_common);
    evaluate->add_option("--input", eval_inputs, "Dataset CSV, one per household");
    evaluate->add_option("--mode", eval_mode, "integrated or direct");
    evaluate->add_option("--training", eval_training, "centralized or federated");
    evaluate->add_option("--epochs", eval_epochs, "Centralized training epochs");
    evaluate->callback([&]() {
        run_evaluate(evaluate, eval_common, eval_inputs, eval_mode, eval_training, eval_epochs);
    });

    CommonOpts compare_common;
    std::vector<std::string> compare_inputs;
    std::vector<std::string> compare_model_names;
    std::size_t compare_epochs = 20;
    CLI::App* compare =
        app.add_subcommand("compare", "Multi-model, multi-household comparison table");
    add_common(compare, compare_common);
    compare->add_option("--input", compare_inputs, "Dataset CSV, one per household");
    compare->add_option("--model", compare_model_names,
                        "Model to include: feddl, bilstm_attention, lstm (repeatable)");
    compare->add_option("--epochs", compare_epochs, "Centralized training epochs");
    compare->callback([&]() {
        run_compare(compare, compare_common, compare_inputs, compare_model_names, compare_epochs);
    });

    CommonOpts sweep_common;
    std::vector<std::string> sweep_inputs;
    std::string sweep_channel = "aggregate";
    CLI::App* sweep =
        app.add_subcommand("sweep", "Federated robustness sweep over (E, C) grid");
    add_common(sweep, sweep_common);
    sweep->add_option("--input", sweep_inputs, "Dataset CSV, one per client household");
    sweep->add_option("--channel", sweep_channel, "Channel name or 'aggregate'");
    sweep->callback([&]() { run_sweep(sweep, sweep_common, sweep_inputs, sweep_channel); });

    try {
        app.parse(argc, argv);
        return 0;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "fedload: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace fedload::cli
