#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fedload/cli.hpp"
#include "fedload/data.hpp"
#include "fedload/experiment.hpp"
#include "fedload/federated.hpp"
#include "fedload/metrics.hpp"
#include "fedload/models.hpp"
#include "fedload/rng.hpp"
#include "fedload/tensor.hpp"

namespace py = pybind11;

namespace {

using namespace fedload;

Tensor to_window(const std::vector<double>& values) {
    return Tensor({values.size()}, values);
}

// Forecaster plus the normalization stats it was fitted with, so Python
// callers can stay on the watts scale end to end.
struct PyForecaster {
    models::ForecastModel model;
    data::NormStats stats{0.0, 1.0};

    explicit PyForecaster(const models::ForecastConfig& config)
        : model(models::build_forecaster(config)) {}
    explicit PyForecaster(models::ForecastModel trained) : model(std::move(trained)) {}

    std::vector<double> fit(const std::vector<double>& values, std::size_t epochs) {
        stats = data::compute_stats(values);
        const auto samples = data::make_windows(data::minmax_normalize(values, stats),
                                                model.config.window_len, model.config.horizon);
        auto result = models::train_supervised(model, samples, epochs, model.config.batch_size,
                                               model.config.lr);
        model = std::move(result.model);
        return result.loss_history;
    }

    std::vector<std::tuple<std::size_t, double, double>> fit_federated(
        const std::vector<std::vector<double>>& client_series,
        const std::vector<double>& validation_series, std::size_t rounds,
        std::size_t local_epochs, double client_fraction, std::uint64_t seed) {
        std::vector<double> pooled;
        for (const auto& series : client_series) {
            pooled.insert(pooled.end(), series.begin(), series.end());
        }
        stats = data::compute_stats(pooled);

        federated::FederatedConfig config;
        config.rounds = rounds;
        config.local_epochs = local_epochs;
        config.client_fraction = client_fraction;
        config.seed = seed;
        config.forecaster = model.config;
        config.adam.lr = model.config.lr;
        std::vector<std::shared_ptr<federated::FederatedClient>> clients;
        for (std::size_t i = 0; i < client_series.size(); ++i) {
            auto samples =
                data::make_windows(data::minmax_normalize(client_series[i], stats),
                                   model.config.window_len, model.config.horizon);
            clients.push_back(std::make_shared<federated::SimulatedClient>(
                "client_" + std::to_string(i + 1), model.config, std::move(samples),
                Rng::mix(seed, i)));
        }
        const auto validation =
            data::make_windows(data::minmax_normalize(validation_series, stats),
                               model.config.window_len, model.config.horizon);
        auto result = federated::run_federated(clients, config, validation);
        model = std::move(result.global_model);
        std::vector<std::tuple<std::size_t, double, double>> log;
        log.reserve(result.rounds.size());
        for (const auto& round : result.rounds) {
            log.emplace_back(round.round, round.mean_local_loss, round.global_val_loss);
        }
        return log;
    }

    double predict_window(const std::vector<double>& window_watts) const {
        const auto normalized = data::minmax_normalize(window_watts, stats);
        return data::denormalize_value(models::forecast_forward(model, to_window(normalized)),
                                       stats);
    }

    std::vector<double> forecast_series(const std::vector<double>& values) const {
        const auto samples = data::make_windows(data::minmax_normalize(values, stats),
                                                model.config.window_len, model.config.horizon);
        std::vector<double> out;
        out.reserve(samples.size());
        for (const auto& sample : samples) {
            out.push_back(
                data::denormalize_value(models::forecast_forward(model, sample.window), stats));
        }
        return out;
    }
};

struct PyDisaggregator {
    models::DisaggModel model;

    explicit PyDisaggregator(const models::DisaggConfig& config)
        : model(models::build_disaggregator(config)) {}
    explicit PyDisaggregator(models::DisaggModel trained) : model(std::move(trained)) {}

    void fit(const std::vector<double>& aggregate_watts,
             const std::vector<double>& appliance_watts, std::size_t epochs) {
        data::PowerTrace aggregate;
        aggregate.values = aggregate_watts;
        data::PowerTrace truth;
        truth.values = appliance_watts;
        model = models::train_disaggregator(model, aggregate, truth, epochs);
    }

    std::vector<double> disaggregate(const std::vector<double>& aggregate_watts) const {
        data::PowerTrace aggregate;
        aggregate.values = aggregate_watts;
        std::map<std::string, models::DisaggModel> one;
        one.emplace(model.appliance.empty() ? "appliance" : model.appliance, model);
        const auto traces = models::disaggregate(one, aggregate);
        return traces.begin()->second.values;
    }
};

py::dict household_to_dict(const data::HouseholdDataset& dataset) {
    py::dict out;
    out["household_id"] = dataset.household_id;
    std::vector<std::int64_t> timestamps;
    timestamps.reserve(dataset.aggregate.size());
    for (std::size_t i = 0; i < dataset.aggregate.size(); ++i) {
        timestamps.push_back(dataset.aggregate.timestamp_at(i));
    }
    out["timestamps"] = timestamps;
    out["aggregate"] = dataset.aggregate.values;
    py::dict appliances;
    for (const auto& [name, trace] : dataset.appliances) {
        appliances[py::str(name)] = trace.values;
    }
    out["appliances"] = appliances;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Federated per-appliance load forecasting core";
    m.attr("__version__") = "1.0.0";

    m.def(
        "sigmoid", [](double x) { return sigmoid(Tensor({1}, {x})).data()[0]; },
        "Logistic function 1 / (1 + exp(-x))", py::arg("x"));
    m.def(
        "softmax", [](const std::vector<double>& xs) { return softmax(to_window(xs)).data(); },
        "Stable softmax over a vector", py::arg("xs"));

    m.def("mae", &metrics::mae, "Mean absolute error", py::arg("y_true"), py::arg("y_pred"));
    m.def("rmse", &metrics::rmse, "Root mean square error", py::arg("y_true"),
          py::arg("y_pred"));

    m.def(
        "make_windows",
        [](const std::vector<double>& values, std::size_t window_len, std::size_t horizon) {
            const auto samples = data::make_windows(values, window_len, horizon);
            std::vector<std::pair<std::vector<double>, double>> out;
            out.reserve(samples.size());
            for (const auto& sample : samples) {
                out.emplace_back(sample.window.data(), sample.target);
            }
            return out;
        },
        "Sliding windows with a horizon-step-ahead target", py::arg("values"),
        py::arg("window_len"), py::arg("horizon") = 1);

    m.def(
        "normalize",
        [](const std::vector<double>& values) {
            const auto stats = data::compute_stats(values);
            return py::make_tuple(data::minmax_normalize(values, stats), stats.min, stats.max);
        },
        "Min-max normalize; returns (normalized, min, max)", py::arg("values"));
    m.def(
        "denormalize",
        [](const std::vector<double>& values, double min, double max) {
            return data::denormalize(values, data::NormStats{min, max});
        },
        py::arg("values"), py::arg("min"), py::arg("max"));

    m.def(
        "synth_household",
        [](const std::string& household_id, std::size_t length, std::uint64_t seed,
           double period, std::int64_t start_time) {
            data::SynthConfig config;
            config.household_id = household_id;
            config.length = length;
            config.seed = seed;
            config.period = period;
            config.start_time = start_time;
            data::SynthAppliance fridge;
            fridge.name = "fridge";
            fridge.rated_power = 120.0;
            fridge.noise_std = 2.0;
            fridge.cycle = data::SynthAppliance::Cycle{100, 0.3, 0};
            data::SynthAppliance washer;
            washer.name = "washer";
            washer.rated_power = 500.0;
            washer.noise_std = 2.0;
            washer.cycle = data::SynthAppliance::Cycle{100, 0.3, 35};
            data::SynthAppliance heater;
            heater.name = "heater";
            heater.rated_power = 800.0;
            heater.noise_std = 5.0;
            heater.cycle = data::SynthAppliance::Cycle{600, 0.5, 0};
            config.appliances = {fridge, washer, heater};
            return household_to_dict(data::synth_household(config));
        },
        "Deterministic synthetic household (aggregate = exact appliance sum)",
        py::arg("household_id") = "synth", py::arg("length") = 1000, py::arg("seed") = 0,
        py::arg("period") = 6.0, py::arg("start_time") = 0);

    py::class_<models::ForecastConfig>(m, "ForecastConfig")
        .def(py::init<>())
        .def_readwrite("window_len", &models::ForecastConfig::window_len)
        .def_readwrite("layer1_hidden", &models::ForecastConfig::layer1_hidden)
        .def_readwrite("layer2_hidden", &models::ForecastConfig::layer2_hidden)
        .def_readwrite("lr", &models::ForecastConfig::lr)
        .def_readwrite("batch_size", &models::ForecastConfig::batch_size)
        .def_readwrite("horizon", &models::ForecastConfig::horizon)
        .def_readwrite("seed", &models::ForecastConfig::seed)
        .def_property(
            "kind",
            [](const models::ForecastConfig& c) { return models::model_kind_name(c.kind); },
            [](models::ForecastConfig& c, const std::string& name) {
                c.kind = models::model_kind_from_name(name);
            })
        .def_static("published_scale", &models::ForecastConfig::published_scale);

    py::class_<PyForecaster>(m, "Forecaster")
        .def(py::init<const models::ForecastConfig&>(), py::arg("config"))
        .def_property_readonly("config",
                               [](const PyForecaster& f) { return f.model.config; })
        .def_property_readonly(
            "stats",
            [](const PyForecaster& f) { return py::make_tuple(f.stats.min, f.stats.max); })
        .def(
            "set_stats",
            [](PyForecaster& f, double min, double max) {
                f.stats = data::NormStats{min, max};
            },
            py::arg("min"), py::arg("max"))
        .def("param_count",
             [](const PyForecaster& f) { return f.model.params.flatten().size(); })
        .def("fit", &PyForecaster::fit, py::arg("values"), py::arg("epochs"),
             "Centralized training on a raw watts series; returns per-epoch mean MSE")
        .def("fit_federated", &PyForecaster::fit_federated, py::arg("client_series"),
             py::arg("validation_series"), py::arg("rounds"), py::arg("local_epochs") = 5,
             py::arg("client_fraction") = 1.0, py::arg("seed") = 0,
             "FedAvg across client series; returns (round, mean_local_loss, val_loss) rows")
        .def("predict_window", &PyForecaster::predict_window, py::arg("window_watts"))
        .def("forecast_series", &PyForecaster::forecast_series, py::arg("values"))
        .def(
            "save",
            [](const PyForecaster& f, const std::string& path) {
                models::save_forecaster(f.model, path);
            },
            py::arg("path"))
        .def_static(
            "load",
            [](const std::string& path) { return PyForecaster(models::load_forecaster(path)); },
            py::arg("path"), "Load a checkpoint; call set_stats before watts-scale use");

    py::class_<models::DisaggConfig>(m, "DisaggConfig")
        .def(py::init<>())
        .def_readwrite("window_len", &models::DisaggConfig::window_len)
        .def_readwrite("conv_filters", &models::DisaggConfig::conv_filters)
        .def_readwrite("conv_kernel", &models::DisaggConfig::conv_kernel)
        .def_readwrite("pool_width", &models::DisaggConfig::pool_width)
        .def_readwrite("pool_stride", &models::DisaggConfig::pool_stride)
        .def_readwrite("lstm_hidden", &models::DisaggConfig::lstm_hidden)
        .def_readwrite("mapping_dim", &models::DisaggConfig::mapping_dim)
        .def_readwrite("lr", &models::DisaggConfig::lr)
        .def_readwrite("batch_size", &models::DisaggConfig::batch_size)
        .def_readwrite("seed", &models::DisaggConfig::seed);

    py::class_<PyDisaggregator>(m, "Disaggregator")
        .def(py::init<const models::DisaggConfig&>(), py::arg("config"))
        .def_property(
            "appliance", [](const PyDisaggregator& d) { return d.model.appliance; },
            [](PyDisaggregator& d, const std::string& name) { d.model.appliance = name; })
        .def("fit", &PyDisaggregator::fit, py::arg("aggregate_watts"),
             py::arg("appliance_watts"), py::arg("epochs"),
             "Seq2point training; fixes normalization stats from these traces")
        .def("disaggregate", &PyDisaggregator::disaggregate, py::arg("aggregate_watts"),
             "Watts estimate per window midpoint (length n - window_len + 1)")
        .def(
            "save",
            [](const PyDisaggregator& d, const std::string& path) {
                models::save_disaggregator(d.model, path);
            },
            py::arg("path"))
        .def_static("load", [](const std::string& path) {
            return PyDisaggregator(models::load_disaggregator(path));
        });

    m.def(
        "cli_main",
        [](const std::vector<std::string>& args) {
            std::vector<const char*> argv;
            argv.push_back("fedload");
            for (const auto& arg : args) {
                argv.push_back(arg.c_str());
            }
            return fedload::cli::dispatch(static_cast<int>(argv.size()), argv.data());
        },
        "Run the command-line interface; returns its exit code", py::arg("args"));
}
