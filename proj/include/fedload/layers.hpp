#pragma once

#include <cstddef>
#include <vector>

#include "fedload/rng.hpp"
#include "fedload/tensor.hpp"

namespace fedload::layers {

enum class Activation { Identity, Relu, Tanh, Sigmoid };

double apply_activation(Activation act, double x);
// Derivative expressed through the activation output.
double activation_grad(Activation act, double y);

// ---------------------------------------------------------------------------
// 1-D convolution (valid, stride 1)

struct Conv1dParams {
    Tensor kernels;  // [out_ch x in_ch x k]
    Tensor bias;     // [out_ch]
};

struct Conv1dCache {
    Tensor input;   // [in_ch x L]
    Tensor output;  // [out_ch x (L-k+1)], post-activation
    Activation act = Activation::Identity;
};

struct Conv1dGrads {
    Conv1dParams params;
    Tensor input;
};

Tensor conv1d_forward(const Tensor& x, const Conv1dParams& p, Activation act,
                      Conv1dCache* cache = nullptr);
Conv1dGrads conv1d_backward(const Conv1dCache& cache, const Conv1dParams& p,
                            const Tensor& upstream);

// ---------------------------------------------------------------------------
// 1-D max pooling

struct MaxPool1dCache {
    std::vector<std::size_t> argmax;  // flat input index per output element
    std::vector<std::size_t> input_shape;
};

Tensor max_pool1d(const Tensor& x, std::size_t width, std::size_t stride,
                  MaxPool1dCache* cache = nullptr);
Tensor max_pool1d_backward(const MaxPool1dCache& cache, const Tensor& upstream);

// ---------------------------------------------------------------------------
// LSTM cell
//
// Gate equations, with z = [hidden_prev ; x]:
//   input gate    r = sigmoid(W_in z + b_in)
//   forget gate   l = sigmoid(W_forget z + b_forget)
//   candidate     g = tanh(W_cell z + b_cell)
//   cell          c = r*g + l*c_prev
//   output gate   o = sigmoid(W_out z + b_out)
//   hidden        h = o * tanh(c)

struct LstmCellParams {
    Tensor w_in, w_forget, w_out, w_cell;  // [hidden x (hidden + input)]
    Tensor b_in, b_forget, b_out, b_cell;  // [hidden]

    std::size_t hidden_size() const { return b_in.size(); }
    std::size_t input_size() const { return w_in.dim(1) - b_in.size(); }
};

struct LstmState {
    Tensor cell;
    Tensor hidden;

    static LstmState zero(std::size_t hidden_size);
};

struct LstmCellCache {
    Tensor concat;  // [hidden_prev ; x]
    Tensor gate_in, gate_forget, gate_out, candidate;
    Tensor cell_prev, cell_new, cell_tanh;
};

struct LstmCellGrads {
    LstmCellParams params;
    Tensor input;
    LstmState prev_state;
};

LstmState lstm_cell_forward(const LstmState& prev, const Tensor& x,
                            const LstmCellParams& p, LstmCellCache* cache = nullptr);
LstmCellGrads lstm_cell_backward(const LstmCellCache& cache, const LstmCellParams& p,
                                 const Tensor& d_hidden, const Tensor& d_cell);

LstmCellParams lstm_params_zeros(std::size_t hidden, std::size_t input);
LstmCellParams lstm_params_init(std::size_t hidden, std::size_t input, Rng& rng);
void lstm_params_add(LstmCellParams& acc, const LstmCellParams& delta);

// Scan over a sequence from a zero initial state; returns hidden state per step.
struct LstmSequenceCache {
    std::vector<LstmCellCache> steps;
};

struct LstmSequenceGrads {
    LstmCellParams params;
    std::vector<Tensor> inputs;
};

std::vector<Tensor> lstm_sequence_forward(const std::vector<Tensor>& xs,
                                          const LstmCellParams& p,
                                          LstmSequenceCache* cache = nullptr);
LstmSequenceGrads lstm_sequence_backward(const LstmSequenceCache& cache,
                                         const LstmCellParams& p,
                                         const std::vector<Tensor>& d_hidden_seq);

// ---------------------------------------------------------------------------
// Bidirectional LSTM: one cell scans left-to-right, the other right-to-left,
// and per-step outputs are combined as tanh(W_fwd h_fwd + W_bwd h_bwd).

struct BiLstmParams {
    LstmCellParams forward_cell, backward_cell;
    Tensor w_out_fwd, w_out_bwd;  // [out x hidden]

    std::size_t hidden_size() const { return forward_cell.hidden_size(); }
    std::size_t output_size() const { return w_out_fwd.dim(0); }
};

struct BiLstmCache {
    LstmSequenceCache fwd, bwd;
    std::vector<Tensor> fwd_states, bwd_states;  // indexed by original position
    std::vector<Tensor> outputs;
};

struct BiLstmGrads {
    BiLstmParams params;
    std::vector<Tensor> inputs;
};

std::vector<Tensor> bilstm_forward(const std::vector<Tensor>& xs, const BiLstmParams& p,
                                   BiLstmCache* cache = nullptr);
BiLstmGrads bilstm_backward(const BiLstmCache& cache, const BiLstmParams& p,
                            const std::vector<Tensor>& d_outputs);

BiLstmParams bilstm_params_zeros(std::size_t out, std::size_t hidden, std::size_t input);
BiLstmParams bilstm_params_init(std::size_t out, std::size_t hidden, std::size_t input,
                                Rng& rng);
void bilstm_params_add(BiLstmParams& acc, const BiLstmParams& delta);

// ---------------------------------------------------------------------------
// Attention over a sequence of state vectors: scalar score per step through a
// tanh layer, softmax weights, weighted sum as the context vector.

struct AttentionParams {
    Tensor w_score;  // [1 x feat]
    Tensor b_score;  // [1]
};

struct AttentionResult {
    Tensor context;  // [feat]
    Tensor weights;  // [n], sums to 1
};

struct AttentionCache {
    std::vector<Tensor> states;
    Tensor scores;   // tanh outputs e_t
    Tensor weights;  // softmax(e)
};

struct AttentionGrads {
    AttentionParams params;
    std::vector<Tensor> states;
};

AttentionResult attention_forward(const std::vector<Tensor>& states,
                                  const AttentionParams& p,
                                  AttentionCache* cache = nullptr);
AttentionGrads attention_backward(const AttentionCache& cache, const AttentionParams& p,
                                  const Tensor& d_context);

AttentionParams attention_params_zeros(std::size_t feat);
AttentionParams attention_params_init(std::size_t feat, Rng& rng);
void attention_params_add(AttentionParams& acc, const AttentionParams& delta);

// ---------------------------------------------------------------------------
// Dense layer

struct DenseCache {
    Tensor input;
    Tensor output;
    Activation act = Activation::Identity;
};

struct DenseGrads {
    Tensor w, b;
    Tensor input;
};

Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b, Activation act,
                     DenseCache* cache = nullptr);
DenseGrads dense_backward(const DenseCache& cache, const Tensor& w, const Tensor& upstream);

// Glorot-uniform weight init; biases stay zero elsewhere.
Tensor glorot_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in,
                      std::size_t fan_out, Rng& rng);

}  // namespace fedload::layers
