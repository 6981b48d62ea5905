#include "fedload/models.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <ios>
#include <map>
#include <numeric>
#include <sstream>

#include "fedload/errors.hpp"
#include "fedload/layers.hpp"

namespace fedload::models {

std::string model_kind_name(ModelKind kind) {
    return kind == ModelKind::BilstmAttention ? "bilstm_attention" : "lstm";
}

ModelKind model_kind_from_name(const std::string& name) {
    if (name == "bilstm_attention" || name == "feddl") return ModelKind::BilstmAttention;
    if (name == "lstm") return ModelKind::Lstm;
    throw ConfigError("unknown model kind '" + name + "'");
}

void ForecastConfig::validate() const {
    if (window_len < 2) throw ConfigError("forecast config: window_len must be >= 2");
    if (layer1_hidden < 1) throw ConfigError("forecast config: layer1_hidden must be >= 1");
    if (layer2_hidden < 1) throw ConfigError("forecast config: layer2_hidden must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("forecast config: lr must be positive");
    if (batch_size < 1) throw ConfigError("forecast config: batch_size must be >= 1");
    if (horizon < 1) throw ConfigError("forecast config: horizon must be >= 1");
}

ForecastConfig ForecastConfig::published_scale() {
    ForecastConfig config;
    config.layer1_hidden = 128;
    config.layer2_hidden = 68;
    config.batch_size = 512;
    return config;
}

// ---------------------------------------------------------------------------
// ParamTree packing. Paths are the stable wire/checkpoint layout; ParamTree
// keeps them sorted, so flattening order is a pure function of the config.

namespace {

void pack_cell(ParamTree& tree, const std::string& prefix, const layers::LstmCellParams& p) {
    tree.set(prefix + "/w_in", p.w_in);
    tree.set(prefix + "/w_forget", p.w_forget);
    tree.set(prefix + "/w_out", p.w_out);
    tree.set(prefix + "/w_cell", p.w_cell);
    tree.set(prefix + "/b_in", p.b_in);
    tree.set(prefix + "/b_forget", p.b_forget);
    tree.set(prefix + "/b_out", p.b_out);
    tree.set(prefix + "/b_cell", p.b_cell);
}

layers::LstmCellParams unpack_cell(const ParamTree& tree, const std::string& prefix) {
    layers::LstmCellParams p;
    p.w_in = tree.at(prefix + "/w_in");
    p.w_forget = tree.at(prefix + "/w_forget");
    p.w_out = tree.at(prefix + "/w_out");
    p.w_cell = tree.at(prefix + "/w_cell");
    p.b_in = tree.at(prefix + "/b_in");
    p.b_forget = tree.at(prefix + "/b_forget");
    p.b_out = tree.at(prefix + "/b_out");
    p.b_cell = tree.at(prefix + "/b_cell");
    return p;
}

void pack_bilstm(ParamTree& tree, const std::string& prefix, const layers::BiLstmParams& p) {
    pack_cell(tree, prefix + "/fwd", p.forward_cell);
    pack_cell(tree, prefix + "/bwd", p.backward_cell);
    tree.set(prefix + "/comb_fwd", p.w_out_fwd);
    tree.set(prefix + "/comb_bwd", p.w_out_bwd);
}

layers::BiLstmParams unpack_bilstm(const ParamTree& tree, const std::string& prefix) {
    layers::BiLstmParams p;
    p.forward_cell = unpack_cell(tree, prefix + "/fwd");
    p.backward_cell = unpack_cell(tree, prefix + "/bwd");
    p.w_out_fwd = tree.at(prefix + "/comb_fwd");
    p.w_out_bwd = tree.at(prefix + "/comb_bwd");
    return p;
}

struct BilstmWeights {
    layers::BiLstmParams layer1, layer2;
    layers::AttentionParams attention;
    Tensor head_w, head_b;
};

ParamTree pack_bilstm_weights(const BilstmWeights& w) {
    ParamTree tree;
    pack_bilstm(tree, "layer1", w.layer1);
    pack_bilstm(tree, "layer2", w.layer2);
    tree.set("attention/w_score", w.attention.w_score);
    tree.set("attention/b_score", w.attention.b_score);
    tree.set("head/w", w.head_w);
    tree.set("head/b", w.head_b);
    return tree;
}

BilstmWeights unpack_bilstm_weights(const ParamTree& tree) {
    BilstmWeights w;
    w.layer1 = unpack_bilstm(tree, "layer1");
    w.layer2 = unpack_bilstm(tree, "layer2");
    w.attention.w_score = tree.at("attention/w_score");
    w.attention.b_score = tree.at("attention/b_score");
    w.head_w = tree.at("head/w");
    w.head_b = tree.at("head/b");
    return w;
}

BilstmWeights bilstm_weights_zeros(const BilstmWeights& like) {
    BilstmWeights z;
    z.layer1 = layers::bilstm_params_zeros(like.layer1.output_size(), like.layer1.hidden_size(),
                                           like.layer1.forward_cell.input_size());
    z.layer2 = layers::bilstm_params_zeros(like.layer2.output_size(), like.layer2.hidden_size(),
                                           like.layer2.forward_cell.input_size());
    z.attention = layers::attention_params_zeros(like.attention.w_score.dim(1));
    z.head_w = Tensor(like.head_w.shape());
    z.head_b = Tensor(like.head_b.shape());
    return z;
}

struct LstmWeights {
    layers::LstmCellParams layer1, layer2;
    Tensor head_w, head_b;
};

ParamTree pack_lstm_weights(const LstmWeights& w) {
    ParamTree tree;
    pack_cell(tree, "layer1/cell", w.layer1);
    pack_cell(tree, "layer2/cell", w.layer2);
    tree.set("head/w", w.head_w);
    tree.set("head/b", w.head_b);
    return tree;
}

LstmWeights unpack_lstm_weights(const ParamTree& tree) {
    LstmWeights w;
    w.layer1 = unpack_cell(tree, "layer1/cell");
    w.layer2 = unpack_cell(tree, "layer2/cell");
    w.head_w = tree.at("head/w");
    w.head_b = tree.at("head/b");
    return w;
}

LstmWeights lstm_weights_zeros(const LstmWeights& like) {
    LstmWeights z;
    z.layer1 = layers::lstm_params_zeros(like.layer1.hidden_size(), like.layer1.input_size());
    z.layer2 = layers::lstm_params_zeros(like.layer2.hidden_size(), like.layer2.input_size());
    z.head_w = Tensor(like.head_w.shape());
    z.head_b = Tensor(like.head_b.shape());
    return z;
}

std::vector<Tensor> window_to_sequence(const Tensor& window) {
    std::vector<Tensor> xs;
    xs.reserve(window.size());
    for (std::size_t t = 0; t < window.size(); ++t) xs.push_back(Tensor({1}, {window[t]}));
    return xs;
}

// ---------------------------------------------------------------------------
// BiLSTM-Attention forward/backward for one sample

struct BilstmSampleCache {
    layers::BiLstmCache c1, c2;
    layers::AttentionCache att;
    layers::DenseCache head;
};

double bilstm_sample_forward(const BilstmWeights& w, const Tensor& window,
                             BilstmSampleCache* cache) {
    const auto xs = window_to_sequence(window);
    const auto out1 = layers::bilstm_forward(xs, w.layer1, cache ? &cache->c1 : nullptr);
    const auto out2 = layers::bilstm_forward(out1, w.layer2, cache ? &cache->c2 : nullptr);
    const auto att =
        layers::attention_forward(out2, w.attention, cache ? &cache->att : nullptr);
    const Tensor y = layers::dense_forward(att.context, w.head_w, w.head_b,
                                           layers::Activation::Sigmoid,
                                           cache ? &cache->head : nullptr);
    return y[0];
}

void bilstm_sample_backward(const BilstmWeights& w, const BilstmSampleCache& cache,
                            double upstream, BilstmWeights& grads) {
    const auto head =
        layers::dense_backward(cache.head, w.head_w, Tensor({1}, {upstream}));
    add_in_place(grads.head_w, head.w);
    add_in_place(grads.head_b, head.b);
    const auto att = layers::attention_backward(cache.att, w.attention, head.input);
    layers::attention_params_add(grads.attention, att.params);
    const auto l2 = layers::bilstm_backward(cache.c2, w.layer2, att.states);
    layers::bilstm_params_add(grads.layer2, l2.params);
    const auto l1 = layers::bilstm_backward(cache.c1, w.layer1, l2.inputs);
    layers::bilstm_params_add(grads.layer1, l1.params);
}

// ---------------------------------------------------------------------------
// Stacked-LSTM forward/backward for one sample

struct LstmSampleCache {
    layers::LstmSequenceCache s1, s2;
    layers::DenseCache head;
    std::size_t steps = 0;
};

double lstm_sample_forward(const LstmWeights& w, const Tensor& window,
                           LstmSampleCache* cache) {
    const auto xs = window_to_sequence(window);
    const auto h1 = layers::lstm_sequence_forward(xs, w.layer1, cache ? &cache->s1 : nullptr);
    const auto h2 = layers::lstm_sequence_forward(h1, w.layer2, cache ? &cache->s2 : nullptr);
    const Tensor y = layers::dense_forward(h2.back(), w.head_w, w.head_b,
                                           layers::Activation::Sigmoid,
                                           cache ? &cache->head : nullptr);
    if (cache) cache->steps = xs.size();
    return y[0];
}

void lstm_sample_backward(const LstmWeights& w, const LstmSampleCache& cache, double upstream,
                          LstmWeights& grads) {
    const auto head =
        layers::dense_backward(cache.head, w.head_w, Tensor({1}, {upstream}));
    add_in_place(grads.head_w, head.w);
    add_in_place(grads.head_b, head.b);
    std::vector<Tensor> d_h2(cache.steps, Tensor({w.layer2.hidden_size()}));
    d_h2.back() = head.input;
    const auto g2 = layers::lstm_sequence_backward(cache.s2, w.layer2, d_h2);
    layers::lstm_params_add(grads.layer2, g2.params);
    const auto g1 = layers::lstm_sequence_backward(cache.s1, w.layer1, g2.inputs);
    layers::lstm_params_add(grads.layer1, g1.params);
}

void check_window(const ForecastConfig& config, const Tensor& window) {
    if (window.size() != config.window_len) {
        throw ShapeError("forecast window has " + std::to_string(window.size()) +
                         " values, model expects " + std::to_string(config.window_len));
    }
}

// Sum of squared errors over the batch plus the gradient of the batch-mean
// squared error.
std::pair<double, ParamTree> forecaster_batch_eval(const ForecastConfig& config,
                                                   const ParamTree& params,
                                                   const std::vector<data::Sample>& samples,
                                                   const std::vector<std::size_t>& batch) {
    double squared_sum = 0.0;
    const double upstream_scale = 2.0 / static_cast<double>(batch.size());
    if (config.kind == ModelKind::BilstmAttention) {
        const BilstmWeights w = unpack_bilstm_weights(params);
        BilstmWeights g = bilstm_weights_zeros(w);
        for (std::size_t i : batch) {
            check_window(config, samples[i].window);
            BilstmSampleCache cache;
            const double pred = bilstm_sample_forward(w, samples[i].window, &cache);
            const double err = pred - samples[i].target;
            squared_sum += err * err;
            bilstm_sample_backward(w, cache, upstream_scale * err, g);
        }
        return {squared_sum, pack_bilstm_weights(g)};
    }
    const LstmWeights w = unpack_lstm_weights(params);
    LstmWeights g = lstm_weights_zeros(w);
    for (std::size_t i : batch) {
        check_window(config, samples[i].window);
        LstmSampleCache cache;
        const double pred = lstm_sample_forward(w, samples[i].window, &cache);
        const double err = pred - samples[i].target;
        squared_sum += err * err;
        lstm_sample_backward(w, cache, upstream_scale * err, g);
    }
    return {squared_sum, pack_lstm_weights(g)};
}

// Shared minibatch Adam loop. eval_batch(params, indices) returns the sum of
// squared errors over the batch and the gradient of the batch-mean loss.
template <typename EvalBatchFn>
std::vector<double> run_minibatch_training(ParamTree& params, std::size_t sample_count,
                                           std::size_t epochs, std::size_t batch_size,
                                           std::uint64_t seed, std::size_t epoch_offset,
                                           const AdamConfig& adam, AdamState& state,
                                           const EvalBatchFn& eval_batch) {
    if (batch_size < 1) throw std::invalid_argument("training batch_size must be >= 1");
    std::vector<double> history;
    history.reserve(epochs);
    std::vector<std::size_t> order(sample_count);
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(Rng::mix(seed, epoch_offset + epoch));
        rng.shuffle(order);
        double squared_sum = 0.0;
        for (std::size_t start = 0; start < sample_count; start += batch_size) {
            const std::size_t stop = std::min(sample_count, start + batch_size);
            const std::vector<std::size_t> batch(order.begin() + start, order.begin() + stop);
            auto [batch_squared, grads] = eval_batch(params, batch);
            squared_sum += batch_squared;
            adam_step(params, grads, state, adam);
        }
        history.push_back(squared_sum / static_cast<double>(sample_count));
    }
    return history;
}

}  // namespace

ForecastModel build_forecaster(const ForecastConfig& config, Rng& rng) {
    config.validate();
    ForecastModel model;
    model.config = config;
    if (config.kind == ModelKind::BilstmAttention) {
        BilstmWeights w;
        w.layer1 =
            layers::bilstm_params_init(config.layer1_hidden, config.layer1_hidden, 1, rng);
        w.layer2 = layers::bilstm_params_init(config.layer2_hidden, config.layer2_hidden,
                                              config.layer1_hidden, rng);
        w.attention = layers::attention_params_init(config.layer2_hidden, rng);
        w.head_w = layers::glorot_uniform(1, config.layer2_hidden, config.layer2_hidden, 1, rng);
        w.head_b = Tensor({1});
        model.params = pack_bilstm_weights(w);
    } else {
        LstmWeights w;
        w.layer1 = layers::lstm_params_init(config.layer1_hidden, 1, rng);
        w.layer2 = layers::lstm_params_init(config.layer2_hidden, config.layer1_hidden, rng);
        w.head_w = layers::glorot_uniform(1, config.layer2_hidden, config.layer2_hidden, 1, rng);
        w.head_b = Tensor({1});
        model.params = pack_lstm_weights(w);
    }
    return model;
}

ForecastModel build_forecaster(const ForecastConfig& config) {
    Rng rng(config.seed);
    return build_forecaster(config, rng);
}

double forecast_forward(const ForecastModel& model, const Tensor& window) {
    check_window(model.config, window);
    if (model.config.kind == ModelKind::BilstmAttention) {
        return bilstm_sample_forward(unpack_bilstm_weights(model.params), window, nullptr);
    }
    return lstm_sample_forward(unpack_lstm_weights(model.params), window, nullptr);
}

BatchEval forecast_loss_and_grads(const ForecastModel& model,
                                  const std::vector<data::Sample>& batch) {
    if (batch.empty()) throw std::invalid_argument("forecast_loss_and_grads: empty batch");
    std::vector<std::size_t> indices(batch.size());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    auto [squared_sum, grads] =
        forecaster_batch_eval(model.config, model.params, batch, indices);
    return {squared_sum / static_cast<double>(batch.size()), std::move(grads)};
}

TrainResult train_supervised(const ForecastModel& model,
                             const std::vector<data::Sample>& samples,
                             const TrainOptions& options, AdamState* adam_state) {
    model.config.validate();
    if (samples.empty()) throw std::invalid_argument("train_supervised: no samples");
    TrainResult result{model, {}};
    if (options.epochs == 0) return result;
    AdamState local_state;
    AdamState& state = adam_state ? *adam_state : local_state;
    result.loss_history = run_minibatch_training(
        result.model.params, samples.size(), options.epochs, options.batch_size, options.seed,
        options.epoch_offset, options.adam, state,
        [&](const ParamTree& params, const std::vector<std::size_t>& batch) {
            return forecaster_batch_eval(model.config, params, samples, batch);
        });
    return result;
}

TrainResult train_supervised(const ForecastModel& model,
                             const std::vector<data::Sample>& samples, std::size_t epochs,
                             std::size_t batch_size, double lr) {
    TrainOptions options;
    options.epochs = epochs;
    options.batch_size = batch_size;
    options.seed = model.config.seed;
    options.adam.lr = lr;
    return train_supervised(model, samples, options);
}

double evaluate_mse(const ForecastModel& model, const std::vector<data::Sample>& samples) {
    if (samples.empty()) throw std::invalid_argument("evaluate_mse: no samples");
    double squared_sum = 0.0;
    if (model.config.kind == ModelKind::BilstmAttention) {
        const BilstmWeights w = unpack_bilstm_weights(model.params);
        for (const auto& sample : samples) {
            check_window(model.config, sample.window);
            const double err = bilstm_sample_forward(w, sample.window, nullptr) - sample.target;
            squared_sum += err * err;
        }
    } else {
        const LstmWeights w = unpack_lstm_weights(model.params);
        for (const auto& sample : samples) {
            check_window(model.config, sample.window);
            const double err = lstm_sample_forward(w, sample.window, nullptr) - sample.target;
            squared_sum += err * err;
        }
    }
    return squared_sum / static_cast<double>(samples.size());
}

// ---------------------------------------------------------------------------
// Checkpoints: versioned line-oriented text, hexfloat values for bit-exact
// round trips.

namespace {

double parse_hex_double(const std::string& token, const std::string& path) {
    char* end = nullptr;
    const double value = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0') {
        throw ParseError(path + ": malformed float token '" + token + "'");
    }
    return value;
}

void write_param_tree(std::ostream& out, const ParamTree& tree) {
    out << "params " << tree.size() << "\n";
    out << std::hexfloat;
    for (const auto& [path, tensor] : tree) {
        out << path << " " << tensor.rank();
        for (const std::size_t d : tensor.shape()) out << " " << d;
        for (const double v : tensor.data()) out << " " << v;
        out << "\n";
    }
    out << std::defaultfloat;
}

ParamTree read_param_tree(std::istream& in, std::size_t count, const std::string& path) {
    ParamTree tree;
    std::string line;
    for (std::size_t i = 0; i < count; ++i) {
        if (!std::getline(in, line)) throw ParseError(path + ": truncated parameter block");
        std::istringstream fields(line);
        std::string entry_path;
        std::size_t rank = 0;
        if (!(fields >> entry_path >> rank)) {
            throw ParseError(path + ": malformed parameter entry '" + line + "'");
        }
        std::vector<std::size_t> shape(rank);
        std::size_t total = 1;
        for (std::size_t d = 0; d < rank; ++d) {
            if (!(fields >> shape[d])) throw ParseError(path + ": truncated shape");
            total *= shape[d];
        }
        std::vector<double> values(total);
        std::string token;
        for (std::size_t v = 0; v < total; ++v) {
            if (!(fields >> token)) throw ParseError(path + ": truncated values");
            values[v] = parse_hex_double(token, path);
        }
        tree.set(entry_path, Tensor(std::move(shape), std::move(values)));
    }
    return tree;
}

// Header lines are "key value..." pairs, terminated by the "params N" line.
std::map<std::string, std::string> read_header(std::istream& in, std::size_t& param_count,
                                               const std::string& path) {
    std::map<std::string, std::string> header;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string key;
        fields >> key;
        std::string rest;
        std::getline(fields, rest);
        if (!rest.empty() && rest.front() == ' ') rest.erase(0, 1);
        if (key == "params") {
            param_count = std::stoull(rest);
            return header;
        }
        header[key] = rest;
    }
    throw ParseError(path + ": missing parameter block");
}

const std::string& header_at(const std::map<std::string, std::string>& header,
                             const std::string& key, const std::string& path) {
    const auto it = header.find(key);
    if (it == header.end()) throw ParseError(path + ": missing checkpoint field '" + key + "'");
    return it->second;
}

std::string format_hex(double value) {
    std::ostringstream out;
    out << std::hexfloat << value;
    return out.str();
}

void check_magic(const std::map<std::string, std::string>& header, const std::string& expect_type,
                 const std::string& path) {
    if (header_at(header, "fedload-model", path) != "v1") {
        throw ParseError(path + ": unsupported checkpoint version");
    }
    if (header_at(header, "type", path) != expect_type) {
        throw ParseError(path + ": checkpoint is not a " + expect_type);
    }
}

}  // namespace

void save_forecaster(const ForecastModel& model, const std::string& path) {
    std::ostringstream out;
    out << "fedload-model v1\n";
    out << "type forecaster\n";
    out << "kind " << model_kind_name(model.config.kind) << "\n";
    out << "window_len " << model.config.window_len << "\n";
    out << "layer1_hidden " << model.config.layer1_hidden << "\n";
    out << "layer2_hidden " << model.config.layer2_hidden << "\n";
    out << "lr " << format_hex(model.config.lr) << "\n";
    out << "batch_size " << model.config.batch_size << "\n";
    out << "horizon " << model.config.horizon << "\n";
    out << "seed " << model.config.seed << "\n";
    write_param_tree(out, model.params);
    out << "end\n";
    data::write_file_atomic(path, out.str());
}

ForecastModel load_forecaster(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open checkpoint '" + path + "'");
    std::size_t param_count = 0;
    const auto header = read_header(in, param_count, path);
    check_magic(header, "forecaster", path);
    ForecastModel model;
    model.config.kind = model_kind_from_name(header_at(header, "kind", path));
    model.config.window_len = std::stoull(header_at(header, "window_len", path));
    model.config.layer1_hidden = std::stoull(header_at(header, "layer1_hidden", path));
    model.config.layer2_hidden = std::stoull(header_at(header, "layer2_hidden", path));
    model.config.lr = parse_hex_double(header_at(header, "lr", path), path);
    model.config.batch_size = std::stoull(header_at(header, "batch_size", path));
    model.config.horizon = std::stoull(header_at(header, "horizon", path));
    model.config.seed = std::stoull(header_at(header, "seed", path));
    model.config.validate();
    model.params = read_param_tree(in, param_count, path);
    return model;
}

// ---------------------------------------------------------------------------
// Disaggregator

void DisaggConfig::validate() const {
    if (conv_filters < 1) throw ConfigError("disagg config: conv_filters must be >= 1");
    if (conv_kernel < 1) throw ConfigError("disagg config: conv_kernel must be >= 1");
    if (pool_width < 1) throw ConfigError("disagg config: pool_width must be >= 1");
    if (pool_stride < 1) throw ConfigError("disagg config: pool_stride must be >= 1");
    if (lstm_hidden < 1) throw ConfigError("disagg config: lstm_hidden must be >= 1");
    if (mapping_dim < 1) throw ConfigError("disagg config: mapping_dim must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("disagg config: lr must be positive");
    if (batch_size < 1) throw ConfigError("disagg config: batch_size must be >= 1");
    conv_out_len();  // throws if window_len cannot pass the conv/pool stack
}

std::size_t DisaggConfig::conv_out_len() const {
    std::size_t len = window_len;
    for (int stage = 0; stage < 2; ++stage) {
        if (len < conv_kernel) {
            throw ConfigError("disagg config: window_len too small for the conv/pool stack");
        }
        len = len - conv_kernel + 1;
        if (len < pool_width) {
            throw ConfigError("disagg config: window_len too small for the conv/pool stack");
        }
        len = (len - pool_width) / pool_stride + 1;
    }
    return len;
}

namespace {

struct DisaggWeights {
    layers::Conv1dParams conv1, conv2;
    Tensor cnn_map_w, cnn_map_b;
    layers::LstmCellParams lstm;
    Tensor lstm_map_w, lstm_map_b;
    Tensor head_w, head_b;
};

ParamTree pack_disagg_weights(const DisaggWeights& w) {
    ParamTree tree;
    tree.set("cnn/conv1/kernels", w.conv1.kernels);
    tree.set("cnn/conv1/bias", w.conv1.bias);
    tree.set("cnn/conv2/kernels", w.conv2.kernels);
    tree.set("cnn/conv2/bias", w.conv2.bias);
    tree.set("cnn/map/w", w.cnn_map_w);
    tree.set("cnn/map/b", w.cnn_map_b);
    pack_cell(tree, "lstm/cell", w.lstm);
    tree.set("lstm/map/w", w.lstm_map_w);
    tree.set("lstm/map/b", w.lstm_map_b);
    tree.set("head/w", w.head_w);
    tree.set("head/b", w.head_b);
    return tree;
}

DisaggWeights unpack_disagg_weights(const ParamTree& tree) {
    DisaggWeights w;
    w.conv1.kernels = tree.at("cnn/conv1/kernels");
    w.conv1.bias = tree.at("cnn/conv1/bias");
    w.conv2.kernels = tree.at("cnn/conv2/kernels");
    w.conv2.bias = tree.at("cnn/conv2/bias");
    w.cnn_map_w = tree.at("cnn/map/w");
    w.cnn_map_b = tree.at("cnn/map/b");
    w.lstm = unpack_cell(tree, "lstm/cell");
    w.lstm_map_w = tree.at("lstm/map/w");
    w.lstm_map_b = tree.at("lstm/map/b");
    w.head_w = tree.at("head/w");
    w.head_b = tree.at("head/b");
    return w;
}

DisaggWeights disagg_weights_zeros(const DisaggWeights& like) {
    DisaggWeights z;
    z.conv1.kernels = Tensor(like.conv1.kernels.shape());
    z.conv1.bias = Tensor(like.conv1.bias.shape());
    z.conv2.kernels = Tensor(like.conv2.kernels.shape());
    z.conv2.bias = Tensor(like.conv2.bias.shape());
    z.cnn_map_w = Tensor(like.cnn_map_w.shape());
    z.cnn_map_b = Tensor(like.cnn_map_b.shape());
    z.lstm = layers::lstm_params_zeros(like.lstm.hidden_size(), like.lstm.input_size());
    z.lstm_map_w = Tensor(like.lstm_map_w.shape());
    z.lstm_map_b = Tensor(like.lstm_map_b.shape());
    z.head_w = Tensor(like.head_w.shape());
    z.head_b = Tensor(like.head_b.shape());
    return z;
}

struct DisaggSampleCache {
    layers::Conv1dCache conv1, conv2;
    layers::MaxPool1dCache pool1, pool2;
    layers::DenseCache cnn_map, lstm_map, head;
    layers::LstmSequenceCache lstm;
    std::size_t steps = 0;
    std::size_t pool2_channels = 0;
    std::size_t pool2_len = 0;
};

double disagg_sample_forward(const DisaggWeights& w, const DisaggConfig& config,
                             const Tensor& window, DisaggSampleCache* cache) {
    // CNN branch
    const Tensor x({1, window.size()}, window.data());
    const Tensor a1 = layers::conv1d_forward(x, w.conv1, layers::Activation::Relu,
                                             cache ? &cache->conv1 : nullptr);
    const Tensor p1 = layers::max_pool1d(a1, config.pool_width, config.pool_stride,
                                         cache ? &cache->pool1 : nullptr);
    const Tensor a2 = layers::conv1d_forward(p1, w.conv2, layers::Activation::Relu,
                                             cache ? &cache->conv2 : nullptr);
    const Tensor p2 = layers::max_pool1d(a2, config.pool_width, config.pool_stride,
                                         cache ? &cache->pool2 : nullptr);
    const Tensor flat({p2.size()}, p2.data());
    const Tensor m1 = layers::dense_forward(flat, w.cnn_map_w, w.cnn_map_b,
                                            layers::Activation::Tanh,
                                            cache ? &cache->cnn_map : nullptr);
    // LSTM branch
    const auto xs = window_to_sequence(window);
    const auto hidden =
        layers::lstm_sequence_forward(xs, w.lstm, cache ? &cache->lstm : nullptr);
    const Tensor m2 = layers::dense_forward(hidden.back(), w.lstm_map_w, w.lstm_map_b,
                                            layers::Activation::Tanh,
                                            cache ? &cache->lstm_map : nullptr);
    // Concatenate and map to the point estimate
    Tensor cat({m1.size() + m2.size()});
    for (std::size_t i = 0; i < m1.size(); ++i) cat[i] = m1[i];
    for (std::size_t i = 0; i < m2.size(); ++i) cat[m1.size() + i] = m2[i];
    const Tensor y = layers::dense_forward(cat, w.head_w, w.head_b,
                                           layers::Activation::Identity,
                                           cache ? &cache->head : nullptr);
    if (cache) {
        cache->steps = xs.size();
        cache->pool2_channels = p2.dim(0);
        cache->pool2_len = p2.dim(1);
    }
    return y[0];
}

void disagg_sample_backward(const DisaggWeights& w, const DisaggSampleCache& cache,
                            double upstream, DisaggWeights& grads) {
    const auto head =
        layers::dense_backward(cache.head, w.head_w, Tensor({1}, {upstream}));
    add_in_place(grads.head_w, head.w);
    add_in_place(grads.head_b, head.b);

    const std::size_t m = w.cnn_map_b.size();
    Tensor d_m1({m});
    Tensor d_m2({w.lstm_map_b.size()});
    for (std::size_t i = 0; i < d_m1.size(); ++i) d_m1[i] = head.input[i];
    for (std::size_t i = 0; i < d_m2.size(); ++i) d_m2[i] = head.input[m + i];

    // CNN branch
    const auto cnn_map = layers::dense_backward(cache.cnn_map, w.cnn_map_w, d_m1);
    add_in_place(grads.cnn_map_w, cnn_map.w);
    add_in_place(grads.cnn_map_b, cnn_map.b);
    const Tensor d_p2({cache.pool2_channels, cache.pool2_len}, cnn_map.input.data());
    const Tensor d_a2 = layers::max_pool1d_backward(cache.pool2, d_p2);
    const auto conv2 = layers::conv1d_backward(cache.conv2, w.conv2, d_a2);
    add_in_place(grads.conv2.kernels, conv2.params.kernels);
    add_in_place(grads.conv2.bias, conv2.params.bias);
    const Tensor d_a1 = layers::max_pool1d_backward(cache.pool1, conv2.input);
    const auto conv1 = layers::conv1d_backward(cache.conv1, w.conv1, d_a1);
    add_in_place(grads.conv1.kernels, conv1.params.kernels);
    add_in_place(grads.conv1.bias, conv1.params.bias);

    // LSTM branch
    const auto lstm_map = layers::dense_backward(cache.lstm_map, w.lstm_map_w, d_m2);
    add_in_place(grads.lstm_map_w, lstm_map.w);
    add_in_place(grads.lstm_map_b, lstm_map.b);
    std::vector<Tensor> d_hidden(cache.steps, Tensor({w.lstm.hidden_size()}));
    d_hidden.back() = lstm_map.input;
    const auto lstm = layers::lstm_sequence_backward(cache.lstm, w.lstm, d_hidden);
    layers::lstm_params_add(grads.lstm, lstm.params);
}

std::pair<double, ParamTree> disagg_batch_eval(const DisaggConfig& config,
                                               const ParamTree& params,
                                               const std::vector<data::Sample>& samples,
                                               const std::vector<std::size_t>& batch) {
    const DisaggWeights w = unpack_disagg_weights(params);
    DisaggWeights g = disagg_weights_zeros(w);
    double squared_sum = 0.0;
    const double upstream_scale = 2.0 / static_cast<double>(batch.size());
    for (std::size_t i : batch) {
        DisaggSampleCache cache;
        const double pred = disagg_sample_forward(w, config, samples[i].window, &cache);
        const double err = pred - samples[i].target;
        squared_sum += err * err;
        disagg_sample_backward(w, cache, upstream_scale * err, g);
    }
    return {squared_sum, pack_disagg_weights(g)};
}

}  // namespace

DisaggModel build_disaggregator(const DisaggConfig& config, Rng& rng) {
    config.validate();
    DisaggWeights w;
    const std::size_t k = config.conv_kernel;
    const std::size_t f = config.conv_filters;
    w.conv1.kernels = layers::glorot_uniform(f, k, k, f, rng);
    w.conv1.kernels = Tensor({f, 1, k}, w.conv1.kernels.data());
    w.conv1.bias = Tensor({f});
    w.conv2.kernels = layers::glorot_uniform(f, f * k, f * k, f, rng);
    w.conv2.kernels = Tensor({f, f, k}, w.conv2.kernels.data());
    w.conv2.bias = Tensor({f});
    const std::size_t flat = f * config.conv_out_len();
    w.cnn_map_w = layers::glorot_uniform(config.mapping_dim, flat, flat, config.mapping_dim, rng);
    w.cnn_map_b = Tensor({config.mapping_dim});
    w.lstm = layers::lstm_params_init(config.lstm_hidden, 1, rng);
    w.lstm_map_w = layers::glorot_uniform(config.mapping_dim, config.lstm_hidden,
                                          config.lstm_hidden, config.mapping_dim, rng);
    w.lstm_map_b = Tensor({config.mapping_dim});
    w.head_w = layers::glorot_uniform(1, 2 * config.mapping_dim, 2 * config.mapping_dim, 1, rng);
    w.head_b = Tensor({1});
    DisaggModel model;
    model.config = config;
    model.params = pack_disagg_weights(w);
    return model;
}

DisaggModel build_disaggregator(const DisaggConfig& config) {
    Rng rng(config.seed);
    return build_disaggregator(config, rng);
}

double disagg_forward(const DisaggModel& model, const Tensor& window) {
    if (window.size() != model.config.window_len) {
        throw ShapeError("disaggregation window has " + std::to_string(window.size()) +
                         " values, model expects " + std::to_string(model.config.window_len));
    }
    return disagg_sample_forward(unpack_disagg_weights(model.params), model.config, window,
                                 nullptr);
}

DisaggModel train_disaggregator(const DisaggModel& model, const data::PowerTrace& aggregate,
                                const data::PowerTrace& appliance_truth, std::size_t epochs) {
    model.config.validate();
    if (aggregate.size() != appliance_truth.size() ||
        aggregate.start_time != appliance_truth.start_time ||
        aggregate.period != appliance_truth.period) {
        throw AlignmentError("train_disaggregator: aggregate and appliance traces are not "
                             "aligned");
    }
    const std::size_t w = model.config.window_len;
    if (aggregate.size() < w) {
        throw ShapeError("train_disaggregator: trace length " +
                         std::to_string(aggregate.size()) + " < window " + std::to_string(w));
    }
    DisaggModel out = model;
    out.input_stats = data::compute_stats(aggregate.values);
    out.target_stats = data::compute_stats(appliance_truth.values);
    if (epochs == 0) return out;

    const auto agg = data::minmax_normalize(aggregate.values, out.input_stats);
    const auto tgt = data::minmax_normalize(appliance_truth.values, out.target_stats);
    const std::size_t mid = w / 2;
    std::vector<data::Sample> samples;
    samples.reserve(agg.size() - w + 1);
    for (std::size_t i = 0; i + w <= agg.size(); ++i) {
        std::vector<double> window(agg.begin() + i, agg.begin() + i + w);
        samples.push_back({Tensor({w}, std::move(window)), tgt[i + mid]});
    }

    AdamConfig adam;
    adam.lr = model.config.lr;
    AdamState state;
    run_minibatch_training(out.params, samples.size(), epochs, model.config.batch_size,
                           model.config.seed, 0, adam, state,
                           [&](const ParamTree& params, const std::vector<std::size_t>& batch) {
                               return disagg_batch_eval(model.config, params, samples, batch);
                           });
    return out;
}

std::map<std::string, data::PowerTrace> disaggregate(
    const std::map<std::string, DisaggModel>& models, const data::PowerTrace& aggregate) {
    std::map<std::string, data::PowerTrace> out;
    for (const auto& [name, model] : models) {
        const std::size_t w = model.config.window_len;
        if (aggregate.size() < w) {
            throw ShapeError("disaggregate: trace length " + std::to_string(aggregate.size()) +
                             " < window " + std::to_string(w) + " for appliance '" + name + "'");
        }
        const auto norm = data::minmax_normalize(aggregate.values, model.input_stats);
        const DisaggWeights weights = unpack_disagg_weights(model.params);
        data::PowerTrace trace;
        trace.period = aggregate.period;
        trace.start_time = aggregate.timestamp_at(w / 2);
        trace.values.resize(aggregate.size() - w + 1);
        for (std::size_t i = 0; i + w <= norm.size(); ++i) {
            std::vector<double> window(norm.begin() + i, norm.begin() + i + w);
            const double pred = disagg_sample_forward(weights, model.config,
                                                      Tensor({w}, std::move(window)), nullptr);
            trace.values[i] =
                std::max(0.0, data::denormalize_value(pred, model.target_stats));
        }
        out.emplace(name, std::move(trace));
    }
    return out;
}

void save_disaggregator(const DisaggModel& model, const std::string& path) {
    std::ostringstream out;
    out << "fedload-model v1\n";
    out << "type disaggregator\n";
    out << "appliance " << model.appliance << "\n";
    out << "window_len " << model.config.window_len << "\n";
    out << "conv_filters " << model.config.conv_filters << "\n";
    out << "conv_kernel " << model.config.conv_kernel << "\n";
    out << "pool_width " << model.config.pool_width << "\n";
    out << "pool_stride " << model.config.pool_stride << "\n";
    out << "lstm_hidden " << model.config.lstm_hidden << "\n";
    out << "mapping_dim " << model.config.mapping_dim << "\n";
    out << "lr " << format_hex(model.config.lr) << "\n";
    out << "batch_size " << model.config.batch_size << "\n";
    out << "seed " << model.config.seed << "\n";
    out << "input_stats " << format_hex(model.input_stats.min) << " "
        << format_hex(model.input_stats.max) << "\n";
    out << "target_stats " << format_hex(model.target_stats.min) << " "
        << format_hex(model.target_stats.max) << "\n";
    write_param_tree(out, model.params);
    out << "end\n";
    data::write_file_atomic(path, out.str());
}

DisaggModel load_disaggregator(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open checkpoint '" + path + "'");
    std::size_t param_count = 0;
    const auto header = read_header(in, param_count, path);
    check_magic(header, "disaggregator", path);
    DisaggModel model;
    model.appliance = header_at(header, "appliance", path);
    model.config.window_len = std::stoull(header_at(header, "window_len", path));
    model.config.conv_filters = std::stoull(header_at(header, "conv_filters", path));
    model.config.conv_kernel = std::stoull(header_at(header, "conv_kernel", path));
    model.config.pool_width = std::stoull(header_at(header, "pool_width", path));
    model.config.pool_stride = std::stoull(header_at(header, "pool_stride", path));
    model.config.lstm_hidden = std::stoull(header_at(header, "lstm_hidden", path));
    model.config.mapping_dim = std::stoull(header_at(header, "mapping_dim", path));
    model.config.lr = parse_hex_double(header_at(header, "lr", path), path);
    model.config.batch_size = std::stoull(header_at(header, "batch_size", path));
    model.config.seed = std::stoull(header_at(header, "seed", path));
    {
        std::istringstream fields(header_at(header, "input_stats", path));
        std::string lo, hi;
        fields >> lo >> hi;
        model.input_stats = {parse_hex_double(lo, path), parse_hex_double(hi, path)};
    }
    {
        std::istringstream fields(header_at(header, "target_stats", path));
        std::string lo, hi;
        fields >> lo >> hi;
        model.target_stats = {parse_hex_double(lo, path), parse_hex_double(hi, path)};
    }
    model.config.validate();
    model.params = read_param_tree(in, param_count, path);
    return model;
}

// ---------------------------------------------------------------------------

double integrated_forecast(const std::map<std::string, ApplianceForecaster>& forecasters,
                           const std::map<std::string, Tensor>& histories) {
    if (forecasters.empty()) throw std::invalid_argument("integrated_forecast: no forecasters");
    if (forecasters.size() != histories.size()) {
        throw std::out_of_range("integrated_forecast: forecaster and history appliance sets "
                                "differ");
    }
    double total = 0.0;
    for (const auto& [name, forecaster] : forecasters) {
        const auto it = histories.find(name);
        if (it == histories.end()) {
            throw std::out_of_range("integrated_forecast: no history for appliance '" + name +
                                    "'");
        }
        const auto norm = data::minmax_normalize(it->second.data(), forecaster.stats);
        const double pred =
            forecast_forward(forecaster.model, Tensor({norm.size()}, norm));
        total += data::denormalize_value(pred, forecaster.stats);
    }
    return total;
}

}  // namespace fedload::models
