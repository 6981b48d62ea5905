#include <cmath>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <doctest.h>

#include "fedload/data.hpp"
#include "fedload/errors.hpp"
#include "fedload/gradcheck.hpp"
#include "fedload/models.hpp"
#include "fedload/param_tree.hpp"
#include "fedload/tensor.hpp"

using namespace fedload;
using namespace fedload::models;
namespace fs = std::filesystem;

namespace {

ForecastConfig small_config() {
    ForecastConfig config;
    config.window_len = 8;
    config.layer1_hidden = 4;
    config.layer2_hidden = 3;
    config.lr = 0.01;
    config.batch_size = 16;
    config.seed = 7;
    return config;
}

std::vector<data::Sample> sine_samples(std::size_t count, std::size_t window_len) {
    std::vector<double> values(count + window_len + 1);
    for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] = 0.5 + 0.4 * std::sin(static_cast<double>(i) * 0.3);
    }
    auto samples = data::make_windows(values, window_len, 1);
    samples.resize(count);
    return samples;
}

// Parameter-count closed forms, written out independently of the builder.
std::size_t cell_params(std::size_t hidden, std::size_t input) {
    return 4 * hidden * (hidden + input) + 4 * hidden;
}
std::size_t bilstm_block_params(std::size_t out, std::size_t hidden, std::size_t input) {
    return 2 * cell_params(hidden, input) + 2 * out * hidden;
}
std::size_t bilstm_forecaster_params(std::size_t h1, std::size_t h2) {
    return bilstm_block_params(h1, h1, 1) + bilstm_block_params(h2, h2, h1) + (h2 + 1) +
           (h2 + 1);
}
std::size_t lstm_forecaster_params(std::size_t h1, std::size_t h2) {
    return cell_params(h1, 1) + cell_params(h2, h1) + (h2 + 1);
}

struct TempFile {
    fs::path path;
    explicit TempFile(const std::string& name) {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("fedload_model_" + std::to_string(++counter) + "_" + name);
        fs::remove(path);
    }
    ~TempFile() { fs::remove(path); }
};

data::PowerTrace square_wave(std::size_t length, double high, std::size_t period) {
    data::PowerTrace trace;
    trace.values.resize(length);
    for (std::size_t i = 0; i < length; ++i) {
        trace.values[i] = (i % period) < period / 2 ? high : 0.0;
    }
    return trace;
}

}  // namespace

TEST_CASE("model kind names round trip and reject unknowns") {
    CHECK(model_kind_name(ModelKind::BilstmAttention) == "bilstm_attention");
    CHECK(model_kind_name(ModelKind::Lstm) == "lstm");
    CHECK(model_kind_from_name("bilstm_attention") == ModelKind::BilstmAttention);
    CHECK(model_kind_from_name("feddl") == ModelKind::BilstmAttention);
    CHECK(model_kind_from_name("lstm") == ModelKind::Lstm);
    CHECK_THROWS_AS(model_kind_from_name("transformer"), ConfigError);
}

TEST_CASE("forecaster parameter count matches the closed form") {
    ForecastConfig config;
    config.window_len = 4;
    config.layer1_hidden = 2;
    config.layer2_hidden = 2;
    const ForecastModel model = build_forecaster(config);
    CHECK(model.params.value_count() == bilstm_forecaster_params(2, 2));
    CHECK(model.params.value_count() == 166);

    config.kind = ModelKind::Lstm;
    const ForecastModel lstm = build_forecaster(config);
    CHECK(lstm.params.value_count() == lstm_forecaster_params(2, 2));
    CHECK(lstm.params.value_count() == 75);

    const ForecastConfig published = ForecastConfig::published_scale();
    CHECK(published.layer1_hidden == 128);
    CHECK(published.layer2_hidden == 68);
    CHECK(published.batch_size == 512);
    const ForecastModel big = build_forecaster(published);
    CHECK(big.params.value_count() == bilstm_forecaster_params(128, 68));
}

TEST_CASE("build_forecaster is deterministic in the seed") {
    const ForecastConfig config = small_config();
    const ForecastModel a = build_forecaster(config);
    const ForecastModel b = build_forecaster(config);
    CHECK(a.params == b.params);

    ForecastConfig other = config;
    other.seed = config.seed + 1;
    CHECK_FALSE(build_forecaster(other).params == a.params);
}

TEST_CASE("invalid forecaster configs are rejected by name") {
    ForecastConfig config = small_config();
    config.window_len = 1;
    CHECK_THROWS_AS(build_forecaster(config), ConfigError);
    config = small_config();
    config.lr = 0.0;
    CHECK_THROWS_AS(config.validate(), ConfigError);
    config = small_config();
    config.layer2_hidden = 0;
    CHECK_THROWS_AS(config.validate(), ConfigError);
}

TEST_CASE("forecast_forward stays in (0,1) and does not mutate the model") {
    for (const ModelKind kind : {ModelKind::BilstmAttention, ModelKind::Lstm}) {
        ForecastConfig config = small_config();
        config.kind = kind;
        const ForecastModel model = build_forecaster(config);
        const ParamTree before = model.params;
        Tensor window({8}, {0.1, 0.9, 0.4, 0.2, 0.8, 0.3, 0.6, 0.5});
        const double first = forecast_forward(model, window);
        const double second = forecast_forward(model, window);
        CHECK(first > 0.0);
        CHECK(first < 1.0);
        CHECK(first == second);
        CHECK(model.params == before);
        CHECK_THROWS_AS(forecast_forward(model, Tensor({4})), ShapeError);
    }
}

TEST_CASE("full forecaster gradients match finite differences") {
    for (const ModelKind kind : {ModelKind::BilstmAttention, ModelKind::Lstm}) {
        ForecastConfig config;
        config.window_len = 4;
        config.layer1_hidden = 3;
        config.layer2_hidden = 2;
        config.kind = kind;
        config.seed = 31;
        ForecastModel model = build_forecaster(config);

        const std::vector<data::Sample> batch = {
            {Tensor({4}, {0.2, 0.7, 0.4, 0.9}), 0.6},
            {Tensor({4}, {0.8, 0.1, 0.5, 0.3}), 0.2},
            {Tensor({4}, {0.4, 0.4, 0.6, 0.5}), 0.5},
        };
        const BatchEval eval = forecast_loss_and_grads(model, batch);
        CHECK(eval.mean_loss >= 0.0);

        const ParamTree fd = finite_difference_gradient(
            [&](const ParamTree& t) {
                ForecastModel probe = model;
                probe.params = t;
                return evaluate_mse(probe, batch);
            },
            model.params);
        CHECK(max_relative_error(eval.grads, fd) < 1e-4);
    }
    CHECK_THROWS_AS(
        forecast_loss_and_grads(build_forecaster(small_config()), {}),
        std::invalid_argument);
}

TEST_CASE("training reduces loss and is deterministic") {
    const ForecastConfig config = small_config();
    const ForecastModel model = build_forecaster(config);
    const auto samples = sine_samples(80, config.window_len);

    const TrainResult a = train_supervised(model, samples, 4, 16, 0.01);
    REQUIRE(a.loss_history.size() == 4);
    for (const double loss : a.loss_history) {
        CHECK(loss >= 0.0);
        CHECK(std::isfinite(loss));
    }
    CHECK(a.loss_history.back() < a.loss_history.front());

    const TrainResult b = train_supervised(model, samples, 4, 16, 0.01);
    CHECK(a.model.params == b.model.params);
    CHECK(a.loss_history == b.loss_history);
}

TEST_CASE("training with zero epochs or zero lr leaves params untouched") {
    const ForecastModel model = build_forecaster(small_config());
    const auto samples = sine_samples(40, 8);

    TrainOptions none;
    none.epochs = 0;
    const TrainResult skipped = train_supervised(model, samples, none);
    CHECK(skipped.model.params == model.params);
    CHECK(skipped.loss_history.empty());

    TrainOptions frozen;
    frozen.epochs = 2;
    frozen.batch_size = 16;
    frozen.adam.lr = 0.0;
    const TrainResult still = train_supervised(model, samples, frozen);
    CHECK(still.model.params == model.params);

    CHECK_THROWS_AS(train_supervised(model, {}, none), std::invalid_argument);
}

TEST_CASE("epoch_offset plus a persistent Adam state resumes training exactly") {
    const ForecastConfig config = small_config();
    const ForecastModel model = build_forecaster(config);
    const auto samples = sine_samples(60, config.window_len);

    TrainOptions full;
    full.epochs = 4;
    full.batch_size = 16;
    full.seed = 123;
    full.adam.lr = 0.005;
    const TrainResult whole = train_supervised(model, samples, full);

    TrainOptions first = full;
    first.epochs = 2;
    TrainOptions second = full;
    second.epochs = 2;
    second.epoch_offset = 2;
    AdamState state;
    const TrainResult half = train_supervised(model, samples, first, &state);
    const TrainResult rest = train_supervised(half.model, samples, second, &state);

    CHECK(rest.model.params == whole.model.params);  // bitwise
    CHECK(half.loss_history[0] == whole.loss_history[0]);
    CHECK(rest.loss_history[1] == whole.loss_history[3]);
}

TEST_CASE("forecaster checkpoints round trip bit-exactly") {
    ForecastConfig config = small_config();
    config.lr = 0.0017;
    config.horizon = 3;
    const ForecastModel model = build_forecaster(config);
    TempFile file("forecaster.model");
    save_forecaster(model, file.path.string());
    const ForecastModel back = load_forecaster(file.path.string());
    CHECK(back.params == model.params);
    CHECK(back.config.window_len == config.window_len);
    CHECK(back.config.layer1_hidden == config.layer1_hidden);
    CHECK(back.config.layer2_hidden == config.layer2_hidden);
    CHECK(back.config.lr == config.lr);  // hexfloat survives exactly
    CHECK(back.config.batch_size == config.batch_size);
    CHECK(back.config.horizon == config.horizon);
    CHECK(back.config.seed == config.seed);
    CHECK(back.config.kind == config.kind);

    CHECK_THROWS_AS(load_forecaster((file.path / "missing").string()), ParseError);
}

TEST_CASE("checkpoint loaders reject the wrong model type") {
    DisaggConfig dc;
    dc.window_len = 16;
    dc.conv_kernel = 3;
    dc.conv_filters = 2;
    dc.lstm_hidden = 3;
    dc.mapping_dim = 3;
    DisaggModel disagg = build_disaggregator(dc);
    disagg.appliance = "fridge";
    TempFile file("wrong.model");
    save_disaggregator(disagg, file.path.string());
    CHECK_THROWS_AS(load_forecaster(file.path.string()), ParseError);

    const ForecastModel fore = build_forecaster(small_config());
    TempFile file2("wrong2.model");
    save_forecaster(fore, file2.path.string());
    CHECK_THROWS_AS(load_disaggregator(file2.path.string()), ParseError);
}

TEST_CASE("disagg conv stack length is computed per stage") {
    DisaggConfig config;  // 64, k5, pool 2/2
    CHECK(config.conv_out_len() == 13);

    config.window_len = 24;
    CHECK(config.conv_out_len() == 3);

    config.window_len = 6;
    CHECK_THROWS_AS(config.conv_out_len(), ConfigError);
    CHECK_THROWS_AS(config.validate(), ConfigError);

    config = DisaggConfig{};
    config.conv_filters = 0;
    CHECK_THROWS_AS(config.validate(), ConfigError);
    config = DisaggConfig{};
    config.lr = -1.0;
    CHECK_THROWS_AS(config.validate(), ConfigError);
}

TEST_CASE("disaggregator checkpoints round trip including stats") {
    DisaggConfig config;
    config.window_len = 16;
    config.conv_kernel = 3;
    config.conv_filters = 2;
    config.lstm_hidden = 4;
    config.mapping_dim = 4;
    config.seed = 5;
    DisaggModel model = build_disaggregator(config);
    model.appliance = "kettle";
    model.input_stats = {1.25, 993.5};
    model.target_stats = {0.0, 120.75};
    TempFile file("disagg.model");
    save_disaggregator(model, file.path.string());
    const DisaggModel back = load_disaggregator(file.path.string());
    CHECK(back.params == model.params);
    CHECK(back.appliance == "kettle");
    CHECK(back.input_stats.min == model.input_stats.min);
    CHECK(back.input_stats.max == model.input_stats.max);
    CHECK(back.target_stats.min == model.target_stats.min);
    CHECK(back.target_stats.max == model.target_stats.max);
    CHECK(back.config.window_len == 16);
    CHECK(back.config.conv_kernel == 3);
}

TEST_CASE("train_disaggregator fixes stats and validates alignment") {
    DisaggConfig config;
    config.window_len = 16;
    config.conv_kernel = 3;
    config.conv_filters = 2;
    config.lstm_hidden = 3;
    config.mapping_dim = 3;
    const DisaggModel model = build_disaggregator(config);

    data::PowerTrace aggregate = square_wave(60, 100.0, 20);
    data::PowerTrace appliance = square_wave(60, 40.0, 20);
    const DisaggModel fitted = train_disaggregator(model, aggregate, appliance, 0);
    CHECK(fitted.input_stats.min == 0.0);
    CHECK(fitted.input_stats.max == 100.0);
    CHECK(fitted.target_stats.max == 40.0);
    CHECK(fitted.params == model.params);  // zero epochs: stats only

    data::PowerTrace short_trace = square_wave(50, 40.0, 20);
    CHECK_THROWS_AS(train_disaggregator(model, aggregate, short_trace, 1), AlignmentError);
    data::PowerTrace shifted = appliance;
    shifted.start_time = 600;
    CHECK_THROWS_AS(train_disaggregator(model, aggregate, shifted, 1), AlignmentError);

    data::PowerTrace tiny = square_wave(8, 10.0, 4);
    CHECK_THROWS_AS(train_disaggregator(model, tiny, tiny, 1), ShapeError);
}

TEST_CASE("all-zero training traces produce all-zero estimates") {
    DisaggConfig config;
    config.window_len = 16;
    config.conv_kernel = 3;
    config.conv_filters = 2;
    config.lstm_hidden = 3;
    config.mapping_dim = 3;
    data::PowerTrace zeros;
    zeros.values.assign(80, 0.0);
    DisaggModel model = build_disaggregator(config);
    model.appliance = "idle";
    model = train_disaggregator(model, zeros, zeros, 0);

    const auto estimates = disaggregate({{"idle", model}}, zeros);
    REQUIRE(estimates.count("idle") == 1);
    const data::PowerTrace& est = estimates.at("idle");
    CHECK(est.size() == zeros.size() - config.window_len + 1);
    CHECK(est.start_time == zeros.timestamp_at(config.window_len / 2));
    for (const double v : est.values) CHECK(v == 0.0);
}

TEST_CASE("disaggregator learns a single-appliance square wave") {
    DisaggConfig config;
    config.window_len = 24;
    config.conv_kernel = 5;
    config.conv_filters = 4;
    config.lstm_hidden = 8;
    config.mapping_dim = 8;
    config.lr = 0.005;
    config.batch_size = 32;
    config.seed = 3;

    const data::PowerTrace truth = square_wave(400, 100.0, 40);
    DisaggModel model = build_disaggregator(config);
    model.appliance = "heater";

    const DisaggModel baseline = train_disaggregator(model, truth, truth, 0);
    const DisaggModel trained = train_disaggregator(model, truth, truth, 6);

    auto mae_watts = [&](const DisaggModel& m) {
        const auto est = disaggregate({{"heater", m}}, truth).at("heater");
        const std::size_t mid = config.window_len / 2;
        double total = 0.0;
        for (std::size_t i = 0; i < est.size(); ++i) {
            total += std::fabs(est.values[i] - truth.values[i + mid]);
        }
        return total / static_cast<double>(est.size());
    };
    const double before = mae_watts(baseline);
    const double after = mae_watts(trained);
    CHECK(after < before);
    CHECK(after <= 20.0);  // within 20% of the 100 W rated power
}

TEST_CASE("disaggregate keeps model names and clamps at zero") {
    DisaggConfig config;
    config.window_len = 16;
    config.conv_kernel = 3;
    config.conv_filters = 2;
    config.lstm_hidden = 3;
    config.mapping_dim = 3;
    data::PowerTrace aggregate = square_wave(64, 250.0, 16);
    std::map<std::string, DisaggModel> models;
    for (const std::string name : {"fridge", "kettle"}) {
        DisaggConfig c = config;
        c.seed = name.size();
        DisaggModel m = build_disaggregator(c);
        m.appliance = name;
        models.emplace(name, train_disaggregator(m, aggregate, aggregate, 1));
    }
    const auto out = disaggregate(models, aggregate);
    REQUIRE(out.size() == 2);
    for (const auto& [name, trace] : out) {
        CHECK(models.count(name) == 1);
        CHECK(trace.size() == aggregate.size() - config.window_len + 1);
        for (const double v : trace.values) CHECK(v >= 0.0);
    }
    data::PowerTrace shorty = square_wave(8, 1.0, 4);
    CHECK_THROWS_AS(disaggregate(models, shorty), ShapeError);
}

TEST_CASE("integrated forecast sums denormalized per-appliance predictions") {
    ForecastConfig config;
    config.window_len = 4;
    config.layer1_hidden = 2;
    config.layer2_hidden = 2;
    config.seed = 9;
    const ForecastModel model = build_forecaster(config);

    const data::NormStats stats{10.0, 250.0};
    const Tensor history({4}, {30.0, 120.0, 80.0, 200.0});
    const double got =
        integrated_forecast({{"fridge", {model, stats}}}, {{"fridge", history}});

    const auto norm = data::minmax_normalize(history.data(), stats);
    const double expected = data::denormalize_value(
        forecast_forward(model, Tensor({4}, norm)), stats);
    CHECK(got == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("constant-stats forecasters pin the integrated total") {
    // With min == max, normalization zeroes the window and denormalization
    // returns the constant, so the prediction is forced per appliance.
    ForecastConfig config;
    config.window_len = 4;
    config.layer1_hidden = 2;
    config.layer2_hidden = 2;
    const ForecastModel model = build_forecaster(config);
    const Tensor history({4}, {1.0, 2.0, 3.0, 4.0});

    std::map<std::string, ApplianceForecaster> forecasters;
    forecasters.emplace("a", ApplianceForecaster{model, {100.0, 100.0}});
    forecasters.emplace("b", ApplianceForecaster{model, {50.0, 50.0}});
    forecasters.emplace("c", ApplianceForecaster{model, {0.0, 0.0}});
    const std::map<std::string, Tensor> histories = {
        {"a", history}, {"b", history}, {"c", history}};
    CHECK(integrated_forecast(forecasters, histories) == 150.0);

    // Assembling the maps in a different insertion order changes nothing.
    std::map<std::string, ApplianceForecaster> reordered;
    reordered.emplace("c", ApplianceForecaster{model, {0.0, 0.0}});
    reordered.emplace("a", ApplianceForecaster{model, {100.0, 100.0}});
    reordered.emplace("b", ApplianceForecaster{model, {50.0, 50.0}});
    CHECK(std::fabs(integrated_forecast(reordered, histories) -
                    integrated_forecast(forecasters, histories)) < 1e-9);
}

TEST_CASE("integrated forecast rejects mismatched appliance sets") {
    ForecastConfig config;
    config.window_len = 4;
    config.layer1_hidden = 2;
    config.layer2_hidden = 2;
    const ForecastModel model = build_forecaster(config);
    const Tensor history({4}, {1.0, 2.0, 3.0, 4.0});
    std::map<std::string, ApplianceForecaster> forecasters;
    forecasters.emplace("a", ApplianceForecaster{model, {0.0, 1.0}});
    forecasters.emplace("b", ApplianceForecaster{model, {0.0, 1.0}});

    CHECK_THROWS_AS(integrated_forecast(forecasters, {{"a", history}}), std::out_of_range);
    CHECK_THROWS_AS(integrated_forecast(forecasters,
                                        {{"a", history}, {"zz", history}}),
                    std::out_of_range);
    CHECK_THROWS_AS(integrated_forecast({}, {}), std::invalid_argument);
}
