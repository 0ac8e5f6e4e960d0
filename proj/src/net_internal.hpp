#pragma once

#include <cstdint>
#include <vector>

#include "mebm/net.hpp"

// Internals shared by the forward and reverse passes. Not installed.
namespace mebm::detail {

double gelu(double x);
double gelu_grad(double x);
double sigmoid(double x);

// Counter-based dropout: the mask is a pure function of (seed, tag, index),
// so a loss evaluation under a fixed seed is deterministic and finite
// differences see the same masks as the analytic gradient.
bool dropout_keep(uint64_t seed, uint64_t tag, uint64_t index, double p);

constexpr uint64_t kFusionDropoutTag = ~0ULL;

struct ResBlockCache {
    Mat input;  // block input
    Mat z;      // conv pre-activation
    Mat g;      // gelu(z); bm blocks feed this to the 1x1 conv
};

struct LstmDirCache {
    Mat gi, gf, gg, go;  // post-activation gates, H x T
    Mat c;               // cell states, H x T
    Mat h;               // hidden outputs, H x T
};

struct ModelCache {
    // spatial attention
    std::vector<double> chan_mean;  // C
    std::vector<double> a1;         // gate hidden pre-activation
    std::vector<double> g1;         // gelu(a1)
    std::vector<double> a2;         // pre-sigmoid channel scores
    std::vector<double> gate;       // sigmoid(a2)
    Mat gated;                      // C x T
    Mat hs;                         // D x T

    std::vector<ResBlockCache> bm;
    Mat f_bm;
    std::vector<ResBlockCache> ms;
    Mat f_ms;

    LstmDirCache fwd, bwd;
    Mat f_lstm;  // 2H x T

    Mat concat;   // F x T
    Mat dw_out;   // F x T, depthwise conv output
    Mat pw_pre;   // D x T, pointwise pre-gelu
    Mat fused;    // D x T, after gelu and fusion dropout
    Mat pooled;   // D x L

    std::vector<double> head_pre;  // L
    ProbabilitySequence probs_pooled;
};

// Same-padded 1-D convolution, cross-correlation orientation:
// out(o,t) = b[o] + sum_{i,k} w[o,i,k] * in(i, t + (k - (K-1)/2) * dilation).
Mat conv1d_same(const Mat& in, const Tensor& w, const Tensor& b, size_t dilation);
void conv1d_same_backward(const Mat& in, const Tensor& w, size_t dilation, const Mat& d_out,
                          Mat* d_in, Tensor* d_w, Tensor* d_b);

Mat depthwise_conv_same(const Mat& in, const Tensor& w, const Tensor& b);
void depthwise_conv_same_backward(const Mat& in, const Tensor& w, const Mat& d_out, Mat* d_in,
                                  Tensor* d_w, Tensor* d_b);

// out = w * in + b per time step, w: (out_dim, in_dim).
Mat dense_per_frame(const Mat& in, const Tensor& w, const Tensor& b);
void dense_per_frame_backward(const Mat& in, const Tensor& w, const Mat& d_out, Mat* d_in,
                              Tensor* d_w, Tensor* d_b);

// Full forward; fills `cache` when non-null (training/backward path).
ProbabilitySequence model_forward_impl(const Mat& x, const ModelParams& params,
                                       const ModelConfig& cfg, const ForwardOptions& opts,
                                       ModelCache* cache);

// Reverse pass from d(loss)/d(upsampled probs); accumulates into `grads`,
// which must be shaped like the consumed tensors (zeros_like of params).
void model_backward(const Mat& x, const ModelParams& params, const ModelConfig& cfg,
                    const ForwardOptions& opts, const ModelCache& cache,
                    const std::vector<double>& d_probs, ModelParams& grads);

}  // namespace mebm::detail
