#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mebm/data_model.hpp"
#include "mebm/matrix.hpp"
#include "mebm/rng.hpp"

namespace mebm {

// Architecture hyperparameters. The defaults are the full-size decoder:
// 204 grad channels in, feature width 128, 5 mid-term encoder blocks,
// 12 multi-scale conv blocks, a BiLSTM, depthwise-separable fusion,
// average pooling 31/15. lstm_hidden 960 puts the default parameter count
// at 10,217,160 (see count_params).
struct ModelConfig {
    size_t c_in = 204;
    size_t d = 128;
    size_t n_bm = 5;
    size_t n_ms = 12;
    std::vector<size_t> ms_kernel_sizes = {3, 5, 7, 9};  // cycled across blocks
    size_t lstm_hidden = 960;                            // per direction
    double dropout_p = 0.01;
    size_t pool_window = 31;
    size_t pool_stride = 15;
    bool bm_on = true;
    bool ms_on = true;
    bool lstm_on = true;

    size_t attn_hidden() const { return c_in / 4 > 0 ? c_in / 4 : 1; }
    size_t ms_kernel(size_t block) const { return ms_kernel_sizes[block % ms_kernel_sizes.size()]; }
    // Feature dim after concatenating the enabled branches.
    size_t fused_dim() const {
        return (bm_on ? d : 0) + (ms_on ? d : 0) + (lstm_on ? 2 * lstm_hidden : 0);
    }
};

void validate(const ModelConfig& cfg);

// One named trainable tensor. `decay` marks weight-decay eligibility
// (weights yes; biases, including recurrent biases, no).
struct Tensor {
    std::string name;
    std::vector<size_t> shape;
    std::vector<double> values;
    bool decay = true;

    size_t size() const {
        size_t n = 1;
        for (size_t s : shape) n *= s;
        return n;
    }
};

struct ModelParams {
    std::vector<Tensor> tensors;

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    const Tensor* find(const std::string& name) const;
    size_t total_size() const;
};

struct ProbabilitySequence {
    double frame_rate_hz = 0.0;
    std::vector<double> values;

    size_t size() const { return values.size(); }
};

// Deterministic initialization: per-tensor streams derived from (seed, name),
// weights uniform in +/-sqrt(6/(fan_in+fan_out)), biases zero except LSTM
// forget-gate biases at 1.0.
ModelParams init_params(const ModelConfig& cfg, uint64_t seed);

// Exact total element count from shape metadata alone.
size_t count_params(const ModelConfig& cfg);

// Zero-filled gradient buffers shaped like `params`.
ModelParams zeros_like(const ModelParams& params);

struct ForwardOptions {
    bool training = false;
    uint64_t dropout_seed = 0;  // keyed, counter-based dropout masks
    double frame_rate_hz = 100.0;
};

// --- Individual blocks (shapes: channels x time) ---

// Channel gate sigmoid(W2 gelu(W1 mean_t(x))) applied to x, then a dense
// C_in -> D projection per time step.
Mat spatial_attention_forward(const Mat& x, const ModelParams& params, const ModelConfig& cfg);

// n_bm residual blocks: h + conv_k1(kernel 3, dilation 2^(k mod 5)) -> gelu
// -> conv 1x1, all same-padded.
Mat bm_encoder_forward(const Mat& h, const ModelParams& params, const ModelConfig& cfg);

// n_ms residual blocks: same-padded conv (cycled kernel sizes), gelu,
// dropout, residual add.
Mat multiscale_conv_forward(const Mat& h, const ModelParams& params, const ModelConfig& cfg,
                            const ForwardOptions& opts = {});

// Canonical LSTM run forward and backward over time, outputs concatenated
// per time step: D x T -> 2H x T. Gate equations per direction, with zero
// initial h and c and weights stored in gate order [i, f, g, o]:
//   i_t = sigmoid(W_i x_t + U_i h_{t-1} + b_i)
//   f_t = sigmoid(W_f x_t + U_f h_{t-1} + b_f)
//   g_t = tanh   (W_g x_t + U_g h_{t-1} + b_g)
//   o_t = sigmoid(W_o x_t + U_o h_{t-1} + b_o)
//   c_t = f_t * c_{t-1} + i_t * g_t
//   h_t = o_t * tanh(c_t)
Mat bilstm_forward(const Mat& h, const ModelParams& params, const ModelConfig& cfg);

// Row-stack of the enabled branches in order (bm, ms, lstm). Pointers for
// disabled branches may be null.
Mat concat_features(const Mat* f_bm, const Mat* f_ms, const Mat* f_lstm, const ModelConfig& cfg);

// Depthwise same-padded conv (kernel 7) then pointwise F -> D, gelu.
Mat ds_fusion_forward(const Mat& f, const ModelParams& params, const ModelConfig& cfg);

// Non-padded 1-D average pooling; L = floor((T - window)/stride) + 1.
Mat avg_pool_forward(const Mat& h, size_t window, size_t stride);

// Per-frame dense D -> 1 followed by sigmoid.
ProbabilitySequence head_forward(const Mat& h, const ModelParams& params);

// Endpoint-aligned linear interpolation onto target_len points.
ProbabilitySequence upsample_linear(const ProbabilitySequence& p, size_t target_len);

// Full composition; output length equals the input T, at opts.frame_rate_hz.
ProbabilitySequence model_forward(const Mat& x, const ModelParams& params, const ModelConfig& cfg,
                                  const ForwardOptions& opts = {});
ProbabilitySequence model_forward(const Mat& x, const ModelParams& params, const ModelConfig& cfg,
                                  bool training, Rng& rng);

// --- Training objective and gradients ---

struct Sample {
    const Mat* x = nullptr;
    const LabelVector* labels = nullptr;
};
using Batch = std::vector<Sample>;

// Mean-over-batch MSE between upsampled outputs and frame labels, under
// fixed dropout masks; pure in (params, opts), used by the gradient checks.
double batch_loss(const Batch& batch, const ModelParams& params, const ModelConfig& cfg,
                  const ForwardOptions& opts);

// Reverse-mode gradients of batch_loss w.r.t. every tensor in `params`.
// Tensors not consumed under cfg's branch flags get exactly zero gradient.
ModelParams param_gradients_seeded(const Batch& batch, const ModelParams& params,
                                   const ModelConfig& cfg, const ForwardOptions& opts,
                                   double* loss_out = nullptr, unsigned n_threads = 0);

// Spec-surface wrapper: draws the dropout seed from `rng`.
ModelParams param_gradients(const Batch& batch, const ModelParams& params, const ModelConfig& cfg,
                            Rng& rng, double* loss_out = nullptr);

// --- Checkpoint container ---

struct Checkpoint {
    ModelConfig cfg;
    ModelParams params;
    uint32_t epoch = 0;
    double validation_loss = 0.0;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mebm
