#include <algorithm>
#include <cmath>
#include <mutex>
#include <thread>

#include "mebm/errors.hpp"
#include "net_internal.hpp"

namespace mebm {
namespace detail {

namespace {

// One LSTM direction of BPTT. d_out is the gradient w.r.t. this direction's
// hidden outputs (H x T, indexed by real time). Accumulates into d_in and
// the three gradient tensors.
void lstm_dir_backward(const Mat& in, const Tensor& w_ih, const Tensor& w_hh,
                       const LstmDirCache& cache, bool reverse, const Mat& d_out, Mat& d_in,
                       Tensor& g_w_ih, Tensor& g_w_hh, Tensor& g_b) {
    const size_t in_dim = in.rows;
    const size_t t_len = in.cols;
    const size_t hidden = cache.h.rows;
    const size_t h4 = 4 * hidden;

    std::vector<double> dh_rec(hidden, 0.0), dc_rec(hidden, 0.0), dpre(h4);
    // Walk the scan order backwards.
    for (size_t step = t_len; step-- > 0;) {
        const size_t t = reverse ? t_len - 1 - step : step;
        const bool has_prev = step > 0;
        const size_t t_prev = reverse ? t + 1 : t - 1;

        for (size_t j = 0; j < hidden; ++j) {
            const double dh = d_out(j, t) + dh_rec[j];
            const double gi = cache.gi(j, t);
            const double gf = cache.gf(j, t);
            const double gg = cache.gg(j, t);
            const double go = cache.go(j, t);
            const double tanh_c = std::tanh(cache.c(j, t));
            const double c_prev = has_prev ? cache.c(j, t_prev) : 0.0;

            const double dc = dc_rec[j] + dh * go * (1.0 - tanh_c * tanh_c);
            dpre[3 * hidden + j] = dh * tanh_c * go * (1.0 - go);  // output gate
            dpre[j] = dc * gg * gi * (1.0 - gi);                   // input gate
            dpre[hidden + j] = dc * c_prev * gf * (1.0 - gf);      // forget gate
            dpre[2 * hidden + j] = dc * gi * (1.0 - gg * gg);      // candidate
            dc_rec[j] = dc * gf;
        }

        std::fill(dh_rec.begin(), dh_rec.end(), 0.0);
        for (size_t g = 0; g < h4; ++g) {
            const double dp = dpre[g];
            if (dp == 0.0) continue;
            g_b.values[g] += dp;
            // input path
            double* gw = &g_w_ih.values[g * in_dim];
            const double* w_row = &w_ih.values[g * in_dim];
            for (size_t i = 0; i < in_dim; ++i) {
                gw[i] += dp * in(i, t);
                d_in(i, t) += w_row[i] * dp;
            }
            // recurrent path
            if (has_prev) {
                double* gwh = &g_w_hh.values[g * hidden];
                const double* wh_row = &w_hh.values[g * hidden];
                for (size_t j = 0; j < hidden; ++j) {
                    gwh[j] += dp * cache.h(j, t_prev);
                    dh_rec[j] += wh_row[j] * dp;
                }
            }
        }
    }
}

void add_scaled(std::vector<double>& acc, const std::vector<double>& src, double scale) {
    for (size_t i = 0; i < acc.size(); ++i) acc[i] += src[i] * scale;
}

}  // namespace

void model_backward(const Mat& x, const ModelParams& params, const ModelConfig& cfg,
                    const ForwardOptions& opts, const ModelCache& cache,
                    const std::vector<double>& d_probs, ModelParams& grads) {
    const size_t t_len = x.cols;
    const size_t pooled_len = cache.probs_pooled.size();

    // upsample_linear backward (endpoint-aligned grid).
    std::vector<double> d_pp(pooled_len, 0.0);
    const double scale = static_cast<double>(pooled_len - 1) / static_cast<double>(t_len - 1);
    for (size_t j = 0; j < t_len; ++j) {
        const double pos = static_cast<double>(j) * scale;
        auto i0 = static_cast<size_t>(pos);
        if (i0 >= pooled_len - 1) {
            d_pp[pooled_len - 1] += d_probs[j];
        } else {
            const double frac = pos - static_cast<double>(i0);
            d_pp[i0] += d_probs[j] * (1.0 - frac);
            d_pp[i0 + 1] += d_probs[j] * frac;
        }
    }

    // head backward: p = sigmoid(w . pooled_col + b).
    const Tensor& head_w = params.at("head.w");
    Tensor& g_head_w = grads.at("head.w");
    Tensor& g_head_b = grads.at("head.b");
    std::vector<double> dz(pooled_len);
    for (size_t k = 0; k < pooled_len; ++k) {
        const double p = cache.probs_pooled.values[k];
        dz[k] = d_pp[k] * p * (1.0 - p);
        g_head_b.values[0] += dz[k];
    }
    Mat d_pooled(cfg.d, pooled_len);
    for (size_t i = 0; i < cfg.d; ++i) {
        const double* src = cache.pooled.row(i);
        double* dst = d_pooled.row(i);
        double acc = 0.0;
        const double wv = head_w.values[i];
        for (size_t k = 0; k < pooled_len; ++k) {
            acc += dz[k] * src[k];
            dst[k] = wv * dz[k];
        }
        g_head_w.values[i] += acc;
    }

    // average pooling backward.
    Mat d_fused(cfg.d, t_len);
    const double inv_w = 1.0 / static_cast<double>(cfg.pool_window);
    for (size_t i = 0; i < cfg.d; ++i) {
        double* dst = d_fused.row(i);
        const double* dp_row = d_pooled.row(i);
        for (size_t k = 0; k < pooled_len; ++k) {
            const double g = dp_row[k] * inv_w;
            const size_t base = k * cfg.pool_stride;
            for (size_t j = 0; j < cfg.pool_window; ++j) dst[base + j] += g;
        }
    }

    // fusion dropout and gelu backward.
    if (opts.training && cfg.dropout_p > 0.0) {
        const double keep_scale = 1.0 / (1.0 - cfg.dropout_p);
        for (size_t i = 0; i < d_fused.v.size(); ++i)
            d_fused.v[i] = dropout_keep(opts.dropout_seed, kFusionDropoutTag, i, cfg.dropout_p)
                               ? d_fused.v[i] * keep_scale
                               : 0.0;
    }
    Mat d_pw_pre(cfg.d, t_len);
    for (size_t i = 0; i < d_pw_pre.v.size(); ++i)
        d_pw_pre.v[i] = d_fused.v[i] * gelu_grad(cache.pw_pre.v[i]);

    const size_t fused_dim = cfg.fused_dim();
    Mat d_dw(fused_dim, t_len);
    dense_per_frame_backward(cache.dw_out, params.at("fusion.pw.w"), d_pw_pre, &d_dw,
                             &grads.at("fusion.pw.w"), &grads.at("fusion.pw.b"));
    Mat d_concat(fused_dim, t_len);
    depthwise_conv_same_backward(cache.concat, params.at("fusion.dw.w"), d_dw, &d_concat,
                                 &grads.at("fusion.dw.w"), &grads.at("fusion.dw.b"));

    // split concat gradient by branch, in (bm, ms, lstm) order.
    Mat d_hs(cfg.d, t_len);
    size_t row = 0;
    auto slice_rows = [&](size_t rows) {
        Mat part(rows, t_len);
        std::copy(d_concat.v.begin() + static_cast<long>(row * t_len),
                  d_concat.v.begin() + static_cast<long>((row + rows) * t_len), part.v.begin());
        row += rows;
        return part;
    };

    if (cfg.bm_on) {
        Mat d_y = slice_rows(cfg.d);
        for (size_t k = cfg.n_bm; k-- > 0;) {
            const std::string base = "bm." + std::to_string(k);
            const size_t dilation = size_t{1} << (k % 5);
            const ResBlockCache& blk = cache.bm[k];
            Mat d_g(cfg.d, t_len);
            conv1d_same_backward(blk.g, params.at(base + ".conv2.w"), 1, d_y, &d_g,
                                 &grads.at(base + ".conv2.w"), &grads.at(base + ".conv2.b"));
            for (size_t i = 0; i < d_g.v.size(); ++i) d_g.v[i] *= gelu_grad(blk.z.v[i]);
            // residual: d(input) = d_y + conv1-propagated part
            conv1d_same_backward(blk.input, params.at(base + ".conv1.w"), dilation, d_g, &d_y,
                                 &grads.at(base + ".conv1.w"), &grads.at(base + ".conv1.b"));
        }
        for (size_t i = 0; i < d_hs.v.size(); ++i) d_hs.v[i] += d_y.v[i];
    }
    if (cfg.ms_on) {
        Mat d_y = slice_rows(cfg.d);
        for (size_t j = cfg.n_ms; j-- > 0;) {
            const std::string base = "ms." + std::to_string(j);
            const ResBlockCache& blk = cache.ms[j];
            Mat d_g = d_y;
            if (opts.training && cfg.dropout_p > 0.0) {
                const double keep_scale = 1.0 / (1.0 - cfg.dropout_p);
                for (size_t i = 0; i < d_g.v.size(); ++i)
                    d_g.v[i] = dropout_keep(opts.dropout_seed, j, i, cfg.dropout_p)
                                   ? d_g.v[i] * keep_scale
                                   : 0.0;
            }
            for (size_t i = 0; i < d_g.v.size(); ++i) d_g.v[i] *= gelu_grad(blk.z.v[i]);
            conv1d_same_backward(blk.input, params.at(base + ".conv.w"), 1, d_g, &d_y,
                                 &grads.at(base + ".conv.w"), &grads.at(base + ".conv.b"));
        }
        for (size_t i = 0; i < d_hs.v.size(); ++i) d_hs.v[i] += d_y.v[i];
    }
    if (cfg.lstm_on) {
        const size_t hidden = cfg.lstm_hidden;
        Mat d_fwd = slice_rows(hidden);
        Mat d_bwd = slice_rows(hidden);
        lstm_dir_backward(cache.hs, params.at("lstm.fwd.w_ih"), params.at("lstm.fwd.w_hh"),
                          cache.fwd, false, d_fwd, d_hs, grads.at("lstm.fwd.w_ih"),
                          grads.at("lstm.fwd.w_hh"), grads.at("lstm.fwd.b"));
        lstm_dir_backward(cache.hs, params.at("lstm.bwd.w_ih"), params.at("lstm.bwd.w_hh"),
                          cache.bwd, true, d_bwd, d_hs, grads.at("lstm.bwd.w_ih"),
                          grads.at("lstm.bwd.w_hh"), grads.at("lstm.bwd.b"));
    }

    // --- spatial attention backward ---
    const size_t c_in = cfg.c_in;
    const size_t ha = cfg.attn_hidden();
    Mat d_gated(c_in, t_len);
    dense_per_frame_backward(cache.gated, params.at("attn.proj.w"), d_hs, &d_gated,
                             &grads.at("attn.proj.w"), &grads.at("attn.proj.b"));

    std::vector<double> d_gate(c_in, 0.0);
    for (size_t c = 0; c < c_in; ++c) {
        const double* dg_row = d_gated.row(c);
        const double* x_row = x.row(c);
        double acc = 0.0;
        for (size_t t = 0; t < t_len; ++t) acc += dg_row[t] * x_row[t];
        d_gate[c] = acc;
    }
    // gate = sigmoid(a2)
    std::vector<double> d_a2(c_in);
    for (size_t c = 0; c < c_in; ++c) {
        const double s = cache.gate[c];
        d_a2[c] = d_gate[c] * s * (1.0 - s);
    }
    Tensor& g_w2 = grads.at("attn.gate2.w");
    Tensor& g_b2 = grads.at("attn.gate2.b");
    const Tensor& w2 = params.at("attn.gate2.w");
    std::vector<double> d_g1(ha, 0.0);
    for (size_t c = 0; c < c_in; ++c) {
        g_b2.values[c] += d_a2[c];
        for (size_t j = 0; j < ha; ++j) {
            g_w2.values[c * ha + j] += d_a2[c] * cache.g1[j];
            d_g1[j] += w2.values[c * ha + j] * d_a2[c];
        }
    }
    Tensor& g_w1 = grads.at("attn.gate1.w");
    Tensor& g_b1 = grads.at("attn.gate1.b");
    for (size_t j = 0; j < ha; ++j) {
        const double d_a1 = d_g1[j] * gelu_grad(cache.a1[j]);
        g_b1.values[j] += d_a1;
        for (size_t c = 0; c < c_in; ++c)
            g_w1.values[j * c_in + c] += d_a1 * cache.chan_mean[c];
    }
    // x itself is data; its gradient is not needed.
}

}  // namespace detail

namespace {

double window_mse(const ProbabilitySequence& probs, const LabelVector& labels) {
    if (probs.size() != labels.size())
        throw DimensionError("probability/label length mismatch in loss");
    double acc = 0.0;
    for (size_t t = 0; t < probs.size(); ++t) {
        const double d = probs.values[t] - static_cast<double>(labels.values[t]);
        acc += d * d;
    }
    return acc / static_cast<double>(probs.size());
}

ForwardOptions sample_opts(const ForwardOptions& opts, size_t sample_index) {
    ForwardOptions o = opts;
    o.dropout_seed = splitmix64(opts.dropout_seed ^ splitmix64(sample_index));
    return o;
}

void check_sample(const Sample& s, const ModelConfig& cfg) {
    if (!s.x || !s.labels) throw std::invalid_argument("batch sample missing data");
    if (s.x->rows != cfg.c_in) throw DimensionError("sample channel count mismatch");
    if (s.x->cols != s.labels->size()) throw DimensionError("sample signal/label length mismatch");
}

}  // namespace

double batch_loss(const Batch& batch, const ModelParams& params, const ModelConfig& cfg,
                  const ForwardOptions& opts) {
    if (batch.empty()) throw std::invalid_argument("batch must be non-empty");
    double total = 0.0;
    for (size_t i = 0; i < batch.size(); ++i) {
        check_sample(batch[i], cfg);
        const auto probs =
            detail::model_forward_impl(*batch[i].x, params, cfg, sample_opts(opts, i), nullptr);
        total += window_mse(probs, *batch[i].labels);
    }
    return total / static_cast<double>(batch.size());
}

ModelParams param_gradients_seeded(const Batch& batch, const ModelParams& params,
                                   const ModelConfig& cfg, const ForwardOptions& opts,
                                   double* loss_out, unsigned n_threads) {
    if (batch.empty()) throw std::invalid_argument("batch must be non-empty");
    for (const auto& s : batch) check_sample(s, cfg);

    const size_t n = batch.size();
    std::vector<ModelParams> sample_grads(n);
    std::vector<double> sample_losses(n, 0.0);

    auto run_sample = [&](size_t i) {
        detail::ModelCache cache;
        const ForwardOptions o = sample_opts(opts, i);
        const auto probs = detail::model_forward_impl(*batch[i].x, params, cfg, o, &cache);
        const auto& labels = *batch[i].labels;
        if (probs.size() != labels.size())
            throw DimensionError("probability/label length mismatch in loss");

        const size_t t_len = probs.size();
        std::vector<double> d_probs(t_len);
        double loss = 0.0;
        for (size_t t = 0; t < t_len; ++t) {
            const double diff = probs.values[t] - static_cast<double>(labels.values[t]);
            loss += diff * diff;
            d_probs[t] = 2.0 * diff / static_cast<double>(t_len);
        }
        sample_losses[i] = loss / static_cast<double>(t_len);

        sample_grads[i] = zeros_like(params);
        detail::model_backward(*batch[i].x, params, cfg, o, cache, d_probs, sample_grads[i]);
    };

    unsigned workers = n_threads ? n_threads : std::thread::hardware_concurrency();
    workers = std::min<unsigned>(std::max(1u, workers), static_cast<unsigned>(n));
    if (workers <= 1) {
        for (size_t i = 0; i < n; ++i) run_sample(i);
    } else {
        std::vector<std::thread> pool;
        std::exception_ptr first_error;
        std::mutex error_mutex;
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                try {
                    for (size_t i = w; i < n; i += workers) run_sample(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            });
        for (auto& th : pool) th.join();
        if (first_error) std::rethrow_exception(first_error);
    }

    // Fixed-order reduction: results are independent of the worker count.
    ModelParams grads = zeros_like(params);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (size_t i = 0; i < n; ++i)
        for (size_t t = 0; t < grads.tensors.size(); ++t)
            detail::add_scaled(grads.tensors[t].values, sample_grads[i].tensors[t].values, inv_n);

    if (loss_out) {
        double total = 0.0;
        for (double l : sample_losses) total += l;
        *loss_out = total * inv_n;
    }
    return grads;
}

ModelParams param_gradients(const Batch& batch, const ModelParams& params, const ModelConfig& cfg,
                            Rng& rng, double* loss_out) {
    ForwardOptions opts;
    opts.training = true;
    opts.dropout_seed = rng.next_u64();
    return param_gradients_seeded(batch, params, cfg, opts, loss_out);
}

}  // namespace mebm
