#include "fedload/layers.hpp"

#include <cmath>

#include "fedload/errors.hpp"

namespace fedload::layers {

double apply_activation(Activation act, double x) {
    switch (act) {
        case Activation::Identity: return x;
        case Activation::Relu: return x > 0.0 ? x : 0.0;
        case Activation::Tanh: return std::tanh(x);
        case Activation::Sigmoid:
            return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                            : std::exp(x) / (1.0 + std::exp(x));
    }
    return x;
}

double activation_grad(Activation act, double y) {
    switch (act) {
        case Activation::Identity: return 1.0;
        case Activation::Relu: return y > 0.0 ? 1.0 : 0.0;
        case Activation::Tanh: return 1.0 - y * y;
        case Activation::Sigmoid: return y * (1.0 - y);
    }
    return 1.0;
}

// ---------------------------------------------------------------------------
// conv1d

Tensor conv1d_forward(const Tensor& x, const Conv1dParams& p, Activation act,
                      Conv1dCache* cache) {
    if (x.rank() != 2 || p.kernels.rank() != 3) {
        throw ShapeError("conv1d: expected input [in_ch x L] and kernels [out_ch x in_ch x k], got " +
                         x.shape_str() + " and " + p.kernels.shape_str());
    }
    const std::size_t out_ch = p.kernels.dim(0);
    const std::size_t in_ch = p.kernels.dim(1);
    const std::size_t k = p.kernels.dim(2);
    const std::size_t length = x.dim(1);
    if (x.dim(0) != in_ch) {
        throw ShapeError("conv1d: input channels " + x.shape_str() + " do not match kernels " +
                         p.kernels.shape_str());
    }
    if (p.bias.size() != out_ch) {
        throw ShapeError("conv1d: bias " + p.bias.shape_str() + " does not match kernels " +
                         p.kernels.shape_str());
    }
    if (length < k) {
        throw ShapeError("conv1d: input length " + std::to_string(length) +
                         " shorter than kernel " + std::to_string(k));
    }
    const std::size_t out_len = length - k + 1;
    Tensor out({out_ch, out_len});
    for (std::size_t o = 0; o < out_ch; ++o) {
        for (std::size_t t = 0; t < out_len; ++t) {
            double acc = p.bias[o];
            for (std::size_t i = 0; i < in_ch; ++i) {
                for (std::size_t u = 0; u < k; ++u) {
                    acc += p.kernels.at(o, i, u) * x.at(i, t + u);
                }
            }
            out.at(o, t) = apply_activation(act, acc);
        }
    }
    if (cache) {
        cache->input = x;
        cache->output = out;
        cache->act = act;
    }
    return out;
}

Conv1dGrads conv1d_backward(const Conv1dCache& cache, const Conv1dParams& p,
                            const Tensor& upstream) {
    const Tensor& x = cache.input;
    const std::size_t out_ch = p.kernels.dim(0);
    const std::size_t in_ch = p.kernels.dim(1);
    const std::size_t k = p.kernels.dim(2);
    const std::size_t out_len = cache.output.dim(1);
    if (!upstream.same_shape(cache.output)) {
        throw ShapeError("conv1d backward: upstream " + upstream.shape_str() +
                         " does not match output " + cache.output.shape_str());
    }
    Conv1dGrads grads;
    grads.params.kernels = Tensor(p.kernels.shape());
    grads.params.bias = Tensor(p.bias.shape());
    grads.input = Tensor(x.shape());
    for (std::size_t o = 0; o < out_ch; ++o) {
        for (std::size_t t = 0; t < out_len; ++t) {
            const double d_pre =
                upstream.at(o, t) * activation_grad(cache.act, cache.output.at(o, t));
            if (d_pre == 0.0) continue;
            grads.params.bias[o] += d_pre;
            for (std::size_t i = 0; i < in_ch; ++i) {
                for (std::size_t u = 0; u < k; ++u) {
                    grads.params.kernels.at(o, i, u) += d_pre * x.at(i, t + u);
                    grads.input.at(i, t + u) += d_pre * p.kernels.at(o, i, u);
                }
            }
        }
    }
    return grads;
}

// ---------------------------------------------------------------------------
// max pooling

Tensor max_pool1d(const Tensor& x, std::size_t width, std::size_t stride,
                  MaxPool1dCache* cache) {
    if (x.rank() != 2) {
        throw ShapeError("max_pool1d expects [ch x L], got " + x.shape_str());
    }
    if (width == 0 || stride == 0) {
        throw std::invalid_argument("max_pool1d: width and stride must be positive");
    }
    const std::size_t channels = x.dim(0);
    const std::size_t length = x.dim(1);
    if (width > length) {
        throw ShapeError("max_pool1d: window " + std::to_string(width) +
                         " wider than input length " + std::to_string(length));
    }
    const std::size_t out_len = (length - width) / stride + 1;
    Tensor out({channels, out_len});
    if (cache) {
        cache->argmax.assign(channels * out_len, 0);
        cache->input_shape = x.shape();
    }
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t t = 0; t < out_len; ++t) {
            std::size_t best = t * stride;
            double best_val = x.at(c, best);
            for (std::size_t u = 1; u < width; ++u) {
                const double v = x.at(c, t * stride + u);
                if (v > best_val) {  // ties resolve to the first maximum
                    best_val = v;
                    best = t * stride + u;
                }
            }
            out.at(c, t) = best_val;
            if (cache) cache->argmax[c * out_len + t] = c * length + best;
        }
    }
    return out;
}

Tensor max_pool1d_backward(const MaxPool1dCache& cache, const Tensor& upstream) {
    Tensor out(cache.input_shape);
    if (upstream.size() != cache.argmax.size()) {
        throw ShapeError("max_pool1d backward: upstream size " +
                         std::to_string(upstream.size()) + " does not match cache");
    }
    for (std::size_t i = 0; i < cache.argmax.size(); ++i) {
        out[cache.argmax[i]] += upstream[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// LSTM cell

LstmState LstmState::zero(std::size_t hidden_size) {
    return {Tensor({hidden_size}), Tensor({hidden_size})};
}

namespace {

Tensor concat_vectors(const Tensor& a, const Tensor& b) {
    std::vector<double> values;
    values.reserve(a.size() + b.size());
    values.insert(values.end(), a.data().begin(), a.data().end());
    values.insert(values.end(), b.data().begin(), b.data().end());
    return Tensor({a.size() + b.size()}, std::move(values));
}

Tensor gate_preact(const Tensor& w, const Tensor& z, const Tensor& b) {
    Tensor out = matvec(w, z);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

}  // namespace

LstmState lstm_cell_forward(const LstmState& prev, const Tensor& x,
                            const LstmCellParams& p, LstmCellCache* cache) {
    const std::size_t hidden = p.hidden_size();
    if (prev.hidden.size() != hidden || prev.cell.size() != hidden) {
        throw ShapeError("lstm cell: state size " + prev.hidden.shape_str() +
                         " does not match parameters (hidden " + std::to_string(hidden) + ")");
    }
    if (prev.hidden.size() + x.size() != p.w_in.dim(1)) {
        throw ShapeError("lstm cell: input " + x.shape_str() + " incompatible with weights " +
                         p.w_in.shape_str());
    }
    const Tensor z = concat_vectors(prev.hidden, x);
    const Tensor gate_in = sigmoid(gate_preact(p.w_in, z, p.b_in));
    const Tensor gate_forget = sigmoid(gate_preact(p.w_forget, z, p.b_forget));
    const Tensor candidate = tanh_act(gate_preact(p.w_cell, z, p.b_cell));
    Tensor cell_new({hidden});
    for (std::size_t i = 0; i < hidden; ++i) {
        cell_new[i] = gate_in[i] * candidate[i] + gate_forget[i] * prev.cell[i];
    }
    const Tensor gate_out = sigmoid(gate_preact(p.w_out, z, p.b_out));
    const Tensor cell_tanh = tanh_act(cell_new);
    Tensor hidden_new({hidden});
    for (std::size_t i = 0; i < hidden; ++i) {
        hidden_new[i] = gate_out[i] * cell_tanh[i];
    }
    if (cache) {
        cache->concat = z;
        cache->gate_in = gate_in;
        cache->gate_forget = gate_forget;
        cache->gate_out = gate_out;
        cache->candidate = candidate;
        cache->cell_prev = prev.cell;
        cache->cell_new = cell_new;
        cache->cell_tanh = cell_tanh;
    }
    return {cell_new, hidden_new};
}

LstmCellGrads lstm_cell_backward(const LstmCellCache& cache, const LstmCellParams& p,
                                 const Tensor& d_hidden, const Tensor& d_cell) {
    const std::size_t hidden = p.hidden_size();
    const std::size_t input = p.input_size();

    Tensor d_gate_out({hidden}), d_cell_total({hidden});
    for (std::size_t i = 0; i < hidden; ++i) {
        d_gate_out[i] = d_hidden[i] * cache.cell_tanh[i];
        const double t = cache.cell_tanh[i];
        d_cell_total[i] = d_cell[i] + d_hidden[i] * cache.gate_out[i] * (1.0 - t * t);
    }

    Tensor d_gate_in({hidden}), d_candidate({hidden}), d_gate_forget({hidden}),
        d_cell_prev({hidden});
    for (std::size_t i = 0; i < hidden; ++i) {
        d_gate_in[i] = d_cell_total[i] * cache.candidate[i];
        d_candidate[i] = d_cell_total[i] * cache.gate_in[i];
        d_gate_forget[i] = d_cell_total[i] * cache.cell_prev[i];
        d_cell_prev[i] = d_cell_total[i] * cache.gate_forget[i];
    }

    // Back through the gate nonlinearities to pre-activations.
    Tensor d_a_in({hidden}), d_a_forget({hidden}), d_a_out({hidden}), d_a_cand({hidden});
    for (std::size_t i = 0; i < hidden; ++i) {
        d_a_in[i] = d_gate_in[i] * cache.gate_in[i] * (1.0 - cache.gate_in[i]);
        d_a_forget[i] = d_gate_forget[i] * cache.gate_forget[i] * (1.0 - cache.gate_forget[i]);
        d_a_out[i] = d_gate_out[i] * cache.gate_out[i] * (1.0 - cache.gate_out[i]);
        d_a_cand[i] = d_candidate[i] * (1.0 - cache.candidate[i] * cache.candidate[i]);
    }

    LstmCellGrads grads;
    grads.params.w_in = outer(d_a_in, cache.concat);
    grads.params.w_forget = outer(d_a_forget, cache.concat);
    grads.params.w_out = outer(d_a_out, cache.concat);
    grads.params.w_cell = outer(d_a_cand, cache.concat);
    grads.params.b_in = d_a_in;
    grads.params.b_forget = d_a_forget;
    grads.params.b_out = d_a_out;
    grads.params.b_cell = d_a_cand;

    Tensor d_concat = matvec_transposed(p.w_in, d_a_in);
    add_in_place(d_concat, matvec_transposed(p.w_forget, d_a_forget));
    add_in_place(d_concat, matvec_transposed(p.w_out, d_a_out));
    add_in_place(d_concat, matvec_transposed(p.w_cell, d_a_cand));

    Tensor d_hidden_prev({hidden});
    Tensor d_input({input});
    for (std::size_t i = 0; i < hidden; ++i) d_hidden_prev[i] = d_concat[i];
    for (std::size_t i = 0; i < input; ++i) d_input[i] = d_concat[hidden + i];

    grads.input = std::move(d_input);
    grads.prev_state = {std::move(d_cell_prev), std::move(d_hidden_prev)};
    return grads;
}

LstmCellParams lstm_params_zeros(std::size_t hidden, std::size_t input) {
    LstmCellParams p;
    const std::vector<std::size_t> w_shape{hidden, hidden + input};
    p.w_in = Tensor(w_shape);
    p.w_forget = Tensor(w_shape);
    p.w_out = Tensor(w_shape);
    p.w_cell = Tensor(w_shape);
    p.b_in = Tensor({hidden});
    p.b_forget = Tensor({hidden});
    p.b_out = Tensor({hidden});
    p.b_cell = Tensor({hidden});
    return p;
}

LstmCellParams lstm_params_init(std::size_t hidden, std::size_t input, Rng& rng) {
    LstmCellParams p = lstm_params_zeros(hidden, input);
    const std::size_t fan_in = hidden + input;
    p.w_in = glorot_uniform(hidden, fan_in, fan_in, hidden, rng);
    p.w_forget = glorot_uniform(hidden, fan_in, fan_in, hidden, rng);
    p.w_out = glorot_uniform(hidden, fan_in, fan_in, hidden, rng);
    p.w_cell = glorot_uniform(hidden, fan_in, fan_in, hidden, rng);
    return p;
}

void lstm_params_add(LstmCellParams& acc, const LstmCellParams& delta) {
    add_in_place(acc.w_in, delta.w_in);
    add_in_place(acc.w_forget, delta.w_forget);
    add_in_place(acc.w_out, delta.w_out);
    add_in_place(acc.w_cell, delta.w_cell);
    add_in_place(acc.b_in, delta.b_in);
    add_in_place(acc.b_forget, delta.b_forget);
    add_in_place(acc.b_out, delta.b_out);
    add_in_place(acc.b_cell, delta.b_cell);
}

std::vector<Tensor> lstm_sequence_forward(const std::vector<Tensor>& xs,
                                          const LstmCellParams& p,
                                          LstmSequenceCache* cache) {
    if (xs.empty()) throw std::invalid_argument("lstm sequence: empty input");
    LstmState state = LstmState::zero(p.hidden_size());
    std::vector<Tensor> hidden_seq;
    hidden_seq.reserve(xs.size());
    if (cache) cache->steps.resize(xs.size());
    for (std::size_t t = 0; t < xs.size(); ++t) {
        state = lstm_cell_forward(state, xs[t], p, cache ? &cache->steps[t] : nullptr);
        hidden_seq.push_back(state.hidden);
    }
    return hidden_seq;
}

LstmSequenceGrads lstm_sequence_backward(const LstmSequenceCache& cache,
                                         const LstmCellParams& p,
                                         const std::vector<Tensor>& d_hidden_seq) {
    const std::size_t n = cache.steps.size();
    if (d_hidden_seq.size() != n) {
        throw ShapeError("lstm sequence backward: got " + std::to_string(d_hidden_seq.size()) +
                         " upstream gradients for " + std::to_string(n) + " steps");
    }
    LstmSequenceGrads grads;
    grads.params = lstm_params_zeros(p.hidden_size(), p.input_size());
    grads.inputs.resize(n);
    Tensor d_hidden_carry({p.hidden_size()});
    Tensor d_cell_carry({p.hidden_size()});
    for (std::size_t t = n; t-- > 0;) {
        Tensor d_hidden = add(d_hidden_seq[t], d_hidden_carry);
        LstmCellGrads step = lstm_cell_backward(cache.steps[t], p, d_hidden, d_cell_carry);
        lstm_params_add(grads.params, step.params);
        grads.inputs[t] = std::move(step.input);
        d_hidden_carry = std::move(step.prev_state.hidden);
        d_cell_carry = std::move(step.prev_state.cell);
    }
    return grads;
}

// ---------------------------------------------------------------------------
// BiLSTM

std::vector<Tensor> bilstm_forward(const std::vector<Tensor>& xs, const BiLstmParams& p,
                                   BiLstmCache* cache) {
    if (xs.empty()) throw std::invalid_argument("bilstm: empty input sequence");
    const std::size_t n = xs.size();

    std::vector<Tensor> fwd = lstm_sequence_forward(xs, p.forward_cell,
                                                    cache ? &cache->fwd : nullptr);

    std::vector<Tensor> reversed(xs.rbegin(), xs.rend());
    std::vector<Tensor> bwd_rev = lstm_sequence_forward(reversed, p.backward_cell,
                                                        cache ? &cache->bwd : nullptr);
    // bwd_rev[i] is the backward state at original position n-1-i.
    std::vector<Tensor> bwd(n);
    for (std::size_t i = 0; i < n; ++i) bwd[n - 1 - i] = bwd_rev[i];

    std::vector<Tensor> outputs;
    outputs.reserve(n);
    for (std::size_t t = 0; t < n; ++t) {
        Tensor combined = matvec(p.w_out_fwd, fwd[t]);
        add_in_place(combined, matvec(p.w_out_bwd, bwd[t]));
        outputs.push_back(tanh_act(combined));
    }
    if (cache) {
        cache->fwd_states = fwd;
        cache->bwd_states = bwd;
        cache->outputs = outputs;
    }
    return outputs;
}

BiLstmGrads bilstm_backward(const BiLstmCache& cache, const BiLstmParams& p,
                            const std::vector<Tensor>& d_outputs) {
    const std::size_t n = cache.outputs.size();
    if (d_outputs.size() != n) {
        throw ShapeError("bilstm backward: got " + std::to_string(d_outputs.size()) +
                         " upstream gradients for " + std::to_string(n) + " steps");
    }
    BiLstmGrads grads;
    grads.params.w_out_fwd = Tensor(p.w_out_fwd.shape());
    grads.params.w_out_bwd = Tensor(p.w_out_bwd.shape());

    std::vector<Tensor> d_fwd(n), d_bwd_rev(n);
    for (std::size_t t = 0; t < n; ++t) {
        Tensor d_pre(d_outputs[t].shape());
        for (std::size_t i = 0; i < d_pre.size(); ++i) {
            const double y = cache.outputs[t][i];
            d_pre[i] = d_outputs[t][i] * (1.0 - y * y);
        }
        add_in_place(grads.params.w_out_fwd, outer(d_pre, cache.fwd_states[t]));
        add_in_place(grads.params.w_out_bwd, outer(d_pre, cache.bwd_states[t]));
        d_fwd[t] = matvec_transposed(p.w_out_fwd, d_pre);
        d_bwd_rev[n - 1 - t] = matvec_transposed(p.w_out_bwd, d_pre);
    }

    LstmSequenceGrads fwd_grads = lstm_sequence_backward(cache.fwd, p.forward_cell, d_fwd);
    LstmSequenceGrads bwd_grads =
        lstm_sequence_backward(cache.bwd, p.backward_cell, d_bwd_rev);

    grads.params.forward_cell = std::move(fwd_grads.params);
    grads.params.backward_cell = std::move(bwd_grads.params);
    grads.inputs.resize(n);
    for (std::size_t t = 0; t < n; ++t) {
        grads.inputs[t] = add(fwd_grads.inputs[t], bwd_grads.inputs[n - 1 - t]);
    }
    return grads;
}

BiLstmParams bilstm_params_zeros(std::size_t out, std::size_t hidden, std::size_t input) {
    BiLstmParams p;
    p.forward_cell = lstm_params_zeros(hidden, input);
    p.backward_cell = lstm_params_zeros(hidden, input);
    p.w_out_fwd = Tensor({out, hidden});
    p.w_out_bwd = Tensor({out, hidden});
    return p;
}

BiLstmParams bilstm_params_init(std::size_t out, std::size_t hidden, std::size_t input,
                                Rng& rng) {
    BiLstmParams p;
    p.forward_cell = lstm_params_init(hidden, input, rng);
    p.backward_cell = lstm_params_init(hidden, input, rng);
    p.w_out_fwd = glorot_uniform(out, hidden, hidden, out, rng);
    p.w_out_bwd = glorot_uniform(out, hidden, hidden, out, rng);
    return p;
}

void bilstm_params_add(BiLstmParams& acc, const BiLstmParams& delta) {
    lstm_params_add(acc.forward_cell, delta.forward_cell);
    lstm_params_add(acc.backward_cell, delta.backward_cell);
    add_in_place(acc.w_out_fwd, delta.w_out_fwd);
    add_in_place(acc.w_out_bwd, delta.w_out_bwd);
}

// ---------------------------------------------------------------------------
// Attention

AttentionResult attention_forward(const std::vector<Tensor>& states,
                                  const AttentionParams& p, AttentionCache* cache) {
    if (states.empty()) throw std::invalid_argument("attention: empty state sequence");
    const std::size_t n = states.size();
    const std::size_t feat = p.w_score.dim(1);
    Tensor scores({n});
    for (std::size_t t = 0; t < n; ++t) {
        if (states[t].size() != feat) {
            throw ShapeError("attention: state " + states[t].shape_str() +
                             " does not match score weights " + p.w_score.shape_str());
        }
        double a = p.b_score[0];
        for (std::size_t j = 0; j < feat; ++j) a += p.w_score.at(0, j) * states[t][j];
        scores[t] = std::tanh(a);
    }
    Tensor weights = softmax(scores);
    Tensor context({feat});
    for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t j = 0; j < feat; ++j) context[j] += weights[t] * states[t][j];
    }
    if (cache) {
        cache->states = states;
        cache->scores = scores;
        cache->weights = weights;
    }
    return {std::move(context), std::move(weights)};
}

AttentionGrads attention_backward(const AttentionCache& cache, const AttentionParams& p,
                                  const Tensor& d_context) {
    const std::size_t n = cache.states.size();
    const std::size_t feat = p.w_score.dim(1);

    AttentionGrads grads;
    grads.params.w_score = Tensor({1, feat});
    grads.params.b_score = Tensor({1});
    grads.states.assign(n, Tensor({feat}));

    // Context is a weighted sum: both the weights and the states carry gradient.
    Tensor d_weights({n});
    for (std::size_t t = 0; t < n; ++t) {
        d_weights[t] = dot(d_context, cache.states[t]);
        for (std::size_t j = 0; j < feat; ++j) {
            grads.states[t][j] += cache.weights[t] * d_context[j];
        }
    }

    // Softmax backward.
    double weighted_sum = 0.0;
    for (std::size_t t = 0; t < n; ++t) weighted_sum += cache.weights[t] * d_weights[t];
    Tensor d_scores({n});
    for (std::size_t t = 0; t < n; ++t) {
        d_scores[t] = cache.weights[t] * (d_weights[t] - weighted_sum);
    }

    for (std::size_t t = 0; t < n; ++t) {
        const double e = cache.scores[t];
        const double d_pre = d_scores[t] * (1.0 - e * e);
        grads.params.b_score[0] += d_pre;
        for (std::size_t j = 0; j < feat; ++j) {
            grads.params.w_score.at(0, j) += d_pre * cache.states[t][j];
            grads.states[t][j] += d_pre * p.w_score.at(0, j);
        }
    }
    return grads;
}

AttentionParams attention_params_zeros(std::size_t feat) {
    return {Tensor({1, feat}), Tensor({1})};
}

AttentionParams attention_params_init(std::size_t feat, Rng& rng) {
    AttentionParams p = attention_params_zeros(feat);
    p.w_score = glorot_uniform(1, feat, feat, 1, rng);
    return p;
}

void attention_params_add(AttentionParams& acc, const AttentionParams& delta) {
    add_in_place(acc.w_score, delta.w_score);
    add_in_place(acc.b_score, delta.b_score);
}

// ---------------------------------------------------------------------------
// Dense

Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b, Activation act,
                     DenseCache* cache) {
    if (w.rank() != 2 || x.rank() != 1 || w.dim(1) != x.size() || b.size() != w.dim(0)) {
        throw ShapeError("dense: incompatible shapes w=" + w.shape_str() + " x=" +
                         x.shape_str() + " b=" + b.shape_str());
    }
    Tensor out = matvec(w, x);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = apply_activation(act, out[i] + b[i]);
    }
    if (cache) {
        cache->input = x;
        cache->output = out;
        cache->act = act;
    }
    return out;
}

DenseGrads dense_backward(const DenseCache& cache, const Tensor& w, const Tensor& upstream) {
    if (!upstream.same_shape(cache.output)) {
        throw ShapeError("dense backward: upstream " + upstream.shape_str() +
                         " does not match output " + cache.output.shape_str());
    }
    Tensor d_pre(upstream.shape());
    for (std::size_t i = 0; i < d_pre.size(); ++i) {
        d_pre[i] = upstream[i] * activation_grad(cache.act, cache.output[i]);
    }
    DenseGrads grads;
    grads.w = outer(d_pre, cache.input);
    grads.b = d_pre;
    grads.input = matvec_transposed(w, d_pre);
    return grads;
}

Tensor glorot_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in,
                      std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor out({rows, cols});
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = rng.uniform(-limit, limit);
    return out;
}

}  // namespace fedload::layers
