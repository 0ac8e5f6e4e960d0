#include <algorithm>
#include <cmath>

#include "mebm/errors.hpp"
#include "net_internal.hpp"

namespace mebm {
namespace detail {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
    return cdf + x * pdf;
}

double sigmoid(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

bool dropout_keep(uint64_t seed, uint64_t tag, uint64_t index, double p) {
    const uint64_t h = splitmix64(splitmix64(seed ^ splitmix64(tag)) ^ index);
    const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    return u >= p;
}

Mat conv1d_same(const Mat& in, const Tensor& w, const Tensor& b, size_t dilation) {
    const size_t out_ch = w.shape[0];
    const size_t in_ch = w.shape[1];
    const size_t k_size = w.shape[2];
    if (in.rows != in_ch) throw DimensionError("conv input channels mismatch for " + w.name);

    const auto t_len = static_cast<long>(in.cols);
    const long center = static_cast<long>(k_size - 1) / 2;
    Mat out(out_ch, in.cols);
    for (size_t o = 0; o < out_ch; ++o) {
        double* dst = out.row(o);
        const double bias = b.values[o];
        for (long t = 0; t < t_len; ++t) dst[t] = bias;
        for (size_t i = 0; i < in_ch; ++i) {
            const double* src = in.row(i);
            const double* wk = &w.values[(o * in_ch + i) * k_size];
            for (size_t k = 0; k < k_size; ++k) {
                const double wv = wk[k];
                if (wv == 0.0) continue;
                const long off = (static_cast<long>(k) - center) * static_cast<long>(dilation);
                const long lo = std::max<long>(0, -off);
                const long hi = std::min<long>(t_len, t_len - off);
                for (long t = lo; t < hi; ++t) dst[t] += wv * src[t + off];
            }
        }
    }
    return out;
}

void conv1d_same_backward(const Mat& in, const Tensor& w, size_t dilation, const Mat& d_out,
                          Mat* d_in, Tensor* d_w, Tensor* d_b) {
    const size_t out_ch = w.shape[0];
    const size_t in_ch = w.shape[1];
    const size_t k_size = w.shape[2];
    const auto t_len = static_cast<long>(in.cols);
    const long center = static_cast<long>(k_size - 1) / 2;

    for (size_t o = 0; o < out_ch; ++o) {
        const double* do_row = d_out.row(o);
        if (d_b) {
            double acc = 0.0;
            for (long t = 0; t < t_len; ++t) acc += do_row[t];
            d_b->values[o] += acc;
        }
        for (size_t i = 0; i < in_ch; ++i) {
            const double* src = in.row(i);
            double* di_row = d_in ? d_in->row(i) : nullptr;
            for (size_t k = 0; k < k_size; ++k) {
                const long off = (static_cast<long>(k) - center) * static_cast<long>(dilation);
                const long lo = std::max<long>(0, -off);
                const long hi = std::min<long>(t_len, t_len - off);
                if (d_w) {
                    double acc = 0.0;
                    for (long t = lo; t < hi; ++t) acc += do_row[t] * src[t + off];
                    d_w->values[(o * in_ch + i) * k_size + k] += acc;
                }
                if (di_row) {
                    const double wv = w.values[(o * in_ch + i) * k_size + k];
                    if (wv != 0.0)
                        for (long t = lo; t < hi; ++t) di_row[t + off] += wv * do_row[t];
                }
            }
        }
    }
}

Mat depthwise_conv_same(const Mat& in, const Tensor& w, const Tensor& b) {
    const size_t channels = w.shape[0];
    const size_t k_size = w.shape[1];
    if (in.rows != channels) throw DimensionError("depthwise conv channel mismatch");

    const auto t_len = static_cast<long>(in.cols);
    const long center = static_cast<long>(k_size - 1) / 2;
    Mat out(channels, in.cols);
    for (size_t c = 0; c < channels; ++c) {
        const double* src = in.row(c);
        double* dst = out.row(c);
        const double bias = b.values[c];
        for (long t = 0; t < t_len; ++t) dst[t] = bias;
        for (size_t k = 0; k < k_size; ++k) {
            const double wv = w.values[c * k_size + k];
            const long off = static_cast<long>(k) - center;
            const long lo = std::max<long>(0, -off);
            const long hi = std::min<long>(t_len, t_len - off);
            for (long t = lo; t < hi; ++t) dst[t] += wv * src[t + off];
        }
    }
    return out;
}

void depthwise_conv_same_backward(const Mat& in, const Tensor& w, const Mat& d_out, Mat* d_in,
                                  Tensor* d_w, Tensor* d_b) {
    const size_t channels = w.shape[0];
    const size_t k_size = w.shape[1];
    const auto t_len = static_cast<long>(in.cols);
    const long center = static_cast<long>(k_size - 1) / 2;
    for (size_t c = 0; c < channels; ++c) {
        const double* src = in.row(c);
        const double* do_row = d_out.row(c);
        if (d_b) {
            double acc = 0.0;
            for (long t = 0; t < t_len; ++t) acc += do_row[t];
            d_b->values[c] += acc;
        }
        for (size_t k = 0; k < k_size; ++k) {
            const long off = static_cast<long>(k) - center;
            const long lo = std::max<long>(0, -off);
            const long hi = std::min<long>(t_len, t_len - off);
            if (d_w) {
                double acc = 0.0;
                for (long t = lo; t < hi; ++t) acc += do_row[t] * src[t + off];
                d_w->values[c * k_size + k] += acc;
            }
            if (d_in) {
                const double wv = w.values[c * k_size + k];
                double* di_row = d_in->row(c);
                for (long t = lo; t < hi; ++t) di_row[t + off] += wv * do_row[t];
            }
        }
    }
}

Mat dense_per_frame(const Mat& in, const Tensor& w, const Tensor& b) {
    const size_t out_dim = w.shape[0];
    const size_t in_dim = w.shape[1];
    if (in.rows != in_dim) throw DimensionError("dense input dim mismatch for " + w.name);

    Mat out(out_dim, in.cols);
    for (size_t o = 0; o < out_dim; ++o) {
        double* dst = out.row(o);
        const double bias = b.values[o];
        for (size_t t = 0; t < in.cols; ++t) dst[t] = bias;
        for (size_t i = 0; i < in_dim; ++i) {
            const double wv = w.values[o * in_dim + i];
            if (wv == 0.0) continue;
            const double* src = in.row(i);
            for (size_t t = 0; t < in.cols; ++t) dst[t] += wv * src[t];
        }
    }
    return out;
}

void dense_per_frame_backward(const Mat& in, const Tensor& w, const Mat& d_out, Mat* d_in,
                              Tensor* d_w, Tensor* d_b) {
    const size_t out_dim = w.shape[0];
    const size_t in_dim = w.shape[1];
    for (size_t o = 0; o < out_dim; ++o) {
        const double* do_row = d_out.row(o);
        if (d_b) {
            double acc = 0.0;
            for (size_t t = 0; t < in.cols; ++t) acc += do_row[t];
            d_b->values[o] += acc;
        }
        for (size_t i = 0; i < in_dim; ++i) {
            if (d_w) {
                const double* src = in.row(i);
                double acc = 0.0;
                for (size_t t = 0; t < in.cols; ++t) acc += do_row[t] * src[t];
                d_w->values[o * in_dim + i] += acc;
            }
            if (d_in) {
                const double wv = w.values[o * in_dim + i];
                if (wv != 0.0) {
                    double* di_row = d_in->row(i);
                    for (size_t t = 0; t < in.cols; ++t) di_row[t] += wv * do_row[t];
                }
            }
        }
    }
}

namespace {

void ensure_finite(const Mat& m, const char* stage) {
    for (double v : m.v)
        if (!std::isfinite(v)) throw NumericError(std::string("non-finite activation in ") + stage);
}

// One LSTM direction; gate order [i, f, g, o]. Outputs are indexed by real
// time regardless of scan direction.
Mat run_lstm_dir(const Mat& in, const Tensor& w_ih, const Tensor& w_hh, const Tensor& b,
                 bool reverse, LstmDirCache* cache) {
    const size_t in_dim = in.rows;
    const size_t t_len = in.cols;
    const size_t h4 = w_ih.shape[0];
    const size_t hidden = h4 / 4;

    // Input contribution for all steps at once.
    Mat ih(h4, t_len);
    for (size_t o = 0; o < h4; ++o) {
        double* dst = ih.row(o);
        const double bias = b.values[o];
        for (size_t t = 0; t < t_len; ++t) dst[t] = bias;
        for (size_t i = 0; i < in_dim; ++i) {
            const double wv = w_ih.values[o * in_dim + i];
            if (wv == 0.0) continue;
            const double* src = in.row(i);
            for (size_t t = 0; t < t_len; ++t) dst[t] += wv * src[t];
        }
    }

    if (cache) {
        cache->gi = Mat(hidden, t_len);
        cache->gf = Mat(hidden, t_len);
        cache->gg = Mat(hidden, t_len);
        cache->go = Mat(hidden, t_len);
        cache->c = Mat(hidden, t_len);
        cache->h = Mat(hidden, t_len);
    }

    Mat out(hidden, t_len);
    std::vector<double> h_prev(hidden, 0.0), c_prev(hidden, 0.0), pre(h4);
    for (size_t step = 0; step < t_len; ++step) {
        const size_t t = reverse ? t_len - 1 - step : step;
        for (size_t g = 0; g < h4; ++g) {
            double acc = ih(g, t);
            const double* wr = &w_hh.values[g * hidden];
            for (size_t j = 0; j < hidden; ++j) acc += wr[j] * h_prev[j];
            pre[g] = acc;
        }
        for (size_t j = 0; j < hidden; ++j) {
            const double gi = sigmoid(pre[j]);
            const double gf = sigmoid(pre[hidden + j]);
            const double gg = std::tanh(pre[2 * hidden + j]);
            const double go = sigmoid(pre[3 * hidden + j]);
            const double c = gf * c_prev[j] + gi * gg;
            const double h = go * std::tanh(c);
            if (cache) {
                cache->gi(j, t) = gi;
                cache->gf(j, t) = gf;
                cache->gg(j, t) = gg;
                cache->go(j, t) = go;
                cache->c(j, t) = c;
                cache->h(j, t) = h;
            }
            out(j, t) = h;
            h_prev[j] = h;
            c_prev[j] = c;
        }
    }
    return out;
}

void apply_dropout(Mat& m, double p, uint64_t seed, uint64_t tag) {
    if (p <= 0.0) return;
    const double scale = 1.0 / (1.0 - p);
    for (size_t i = 0; i < m.v.size(); ++i)
        m.v[i] = dropout_keep(seed, tag, i, p) ? m.v[i] * scale : 0.0;
}

}  // namespace

ProbabilitySequence model_forward_impl(const Mat& x, const ModelParams& params,
                                       const ModelConfig& cfg, const ForwardOptions& opts,
                                       ModelCache* cache) {
    validate(cfg);
    if (x.rows != cfg.c_in) throw DimensionError("input channel count does not match config");
    const size_t t_len = x.cols;
    if (t_len < cfg.pool_window)
        throw DegenerateError("input shorter than the pooling window");

    // --- spatial attention ---
    const size_t c_in = cfg.c_in;
    std::vector<double> chan_mean(c_in);
    for (size_t c = 0; c < c_in; ++c) {
        double acc = 0.0;
        const double* src = x.row(c);
        for (size_t t = 0; t < t_len; ++t) acc += src[t];
        chan_mean[c] = acc / static_cast<double>(t_len);
    }
    const Tensor& w1 = params.at("attn.gate1.w");
    const Tensor& b1 = params.at("attn.gate1.b");
    const Tensor& w2 = params.at("attn.gate2.w");
    const Tensor& b2 = params.at("attn.gate2.b");
    const size_t ha = cfg.attn_hidden();
    std::vector<double> a1(ha), g1(ha), a2(c_in), gate(c_in);
    for (size_t o = 0; o < ha; ++o) {
        double acc = b1.values[o];
        const double* wr = &w1.values[o * c_in];
        for (size_t c = 0; c < c_in; ++c) acc += wr[c] * chan_mean[c];
        a1[o] = acc;
        g1[o] = gelu(acc);
    }
    for (size_t o = 0; o < c_in; ++o) {
        double acc = b2.values[o];
        const double* wr = &w2.values[o * ha];
        for (size_t j = 0; j < ha; ++j) acc += wr[j] * g1[j];
        a2[o] = acc;
        gate[o] = sigmoid(acc);
    }
    Mat gated(c_in, t_len);
    for (size_t c = 0; c < c_in; ++c) {
        const double gv = gate[c];
        const double* src = x.row(c);
        double* dst = gated.row(c);
        for (size_t t = 0; t < t_len; ++t) dst[t] = src[t] * gv;
    }
    Mat hs = dense_per_frame(gated, params.at("attn.proj.w"), params.at("attn.proj.b"));
    if (cache) {
        ensure_finite(hs, "spatial attention");
        cache->chan_mean = chan_mean;
        cache->a1 = std::move(a1);
        cache->g1 = std::move(g1);
        cache->a2 = std::move(a2);
        cache->gate = gate;
        cache->gated = gated;
        cache->hs = hs;
    }

    // --- branches ---
    Mat f_bm, f_ms, f_lstm;
    if (cfg.bm_on) {
        Mat h = hs;
        if (cache) cache->bm.resize(cfg.n_bm);
        for (size_t k = 0; k < cfg.n_bm; ++k) {
            const std::string base = "bm." + std::to_string(k);
            const size_t dilation = size_t{1} << (k % 5);
            Mat z = conv1d_same(h, params.at(base + ".conv1.w"), params.at(base + ".conv1.b"),
                                dilation);
            Mat g(z.rows, z.cols);
            for (size_t i = 0; i < z.v.size(); ++i) g.v[i] = gelu(z.v[i]);
            Mat r = conv1d_same(g, params.at(base + ".conv2.w"), params.at(base + ".conv2.b"), 1);
            if (cache) {
                cache->bm[k].input = std::move(h);
                cache->bm[k].z = std::move(z);
                cache->bm[k].g = std::move(g);
                h = cache->bm[k].input;  // residual source
            }
            for (size_t i = 0; i < h.v.size(); ++i) h.v[i] += r.v[i];
        }
        if (cache) ensure_finite(h, "bm encoder");
        f_bm = std::move(h);
    }
    if (cfg.ms_on) {
        Mat h = hs;
        if (cache) cache->ms.resize(cfg.n_ms);
        for (size_t j = 0; j < cfg.n_ms; ++j) {
            const std::string base = "ms." + std::to_string(j);
            Mat z = conv1d_same(h, params.at(base + ".conv.w"), params.at(base + ".conv.b"), 1);
            Mat g(z.rows, z.cols);
            for (size_t i = 0; i < z.v.size(); ++i) g.v[i] = gelu(z.v[i]);
            if (opts.training) apply_dropout(g, cfg.dropout_p, opts.dropout_seed, j);
            if (cache) {
                cache->ms[j].input = std::move(h);
                cache->ms[j].z = std::move(z);
                h = cache->ms[j].input;
            }
            for (size_t i = 0; i < h.v.size(); ++i) h.v[i] += g.v[i];
        }
        if (cache) ensure_finite(h, "multi-scale conv");
        f_ms = std::move(h);
    }
    if (cfg.lstm_on) {
        Mat fwd = run_lstm_dir(hs, params.at("lstm.fwd.w_ih"), params.at("lstm.fwd.w_hh"),
                               params.at("lstm.fwd.b"), false, cache ? &cache->fwd : nullptr);
        Mat bwd = run_lstm_dir(hs, params.at("lstm.bwd.w_ih"), params.at("lstm.bwd.w_hh"),
                               params.at("lstm.bwd.b"), true, cache ? &cache->bwd : nullptr);
        f_lstm = Mat(2 * cfg.lstm_hidden, t_len);
        for (size_t j = 0; j < cfg.lstm_hidden; ++j) {
            std::copy(fwd.row(j), fwd.row(j) + t_len, f_lstm.row(j));
            std::copy(bwd.row(j), bwd.row(j) + t_len, f_lstm.row(cfg.lstm_hidden + j));
        }
        if (cache) ensure_finite(f_lstm, "bilstm");
    }

    Mat concat = concat_features(cfg.bm_on ? &f_bm : nullptr, cfg.ms_on ? &f_ms : nullptr,
                                 cfg.lstm_on ? &f_lstm : nullptr, cfg);
    if (cache) {
        cache->f_bm = std::move(f_bm);
        cache->f_ms = std::move(f_ms);
        cache->f_lstm = std::move(f_lstm);
    }

    // --- depthwise separable fusion ---
    Mat dw_out = depthwise_conv_same(concat, params.at("fusion.dw.w"), params.at("fusion.dw.b"));
    Mat pw_pre = dense_per_frame(dw_out, params.at("fusion.pw.w"), params.at("fusion.pw.b"));
    Mat fused(pw_pre.rows, pw_pre.cols);
    for (size_t i = 0; i < pw_pre.v.size(); ++i) fused.v[i] = gelu(pw_pre.v[i]);
    if (opts.training) apply_dropout(fused, cfg.dropout_p, opts.dropout_seed, kFusionDropoutTag);
    if (cache) {
        ensure_finite(fused, "fusion");
        cache->concat = std::move(concat);
        cache->dw_out = std::move(dw_out);
        cache->pw_pre = std::move(pw_pre);
        cache->fused = fused;
    }

    // --- pool, head, upsample ---
    Mat pooled = avg_pool_forward(fused, cfg.pool_window, cfg.pool_stride);
    const Tensor& head_w = params.at("head.w");
    const Tensor& head_b = params.at("head.b");
    const size_t pooled_len = pooled.cols;
    std::vector<double> head_pre(pooled_len, head_b.values[0]);
    for (size_t i = 0; i < cfg.d; ++i) {
        const double wv = head_w.values[i];
        const double* src = pooled.row(i);
        for (size_t k = 0; k < pooled_len; ++k) head_pre[k] += wv * src[k];
    }
    ProbabilitySequence probs_pooled;
    probs_pooled.values.resize(pooled_len);
    for (size_t k = 0; k < pooled_len; ++k) probs_pooled.values[k] = sigmoid(head_pre[k]);

    if (pooled_len < 2)
        throw DegenerateError("pooled sequence too short to upsample; use a longer window");
    ProbabilitySequence probs = upsample_linear(probs_pooled, t_len);
    probs.frame_rate_hz = opts.frame_rate_hz;
    if (cache) {
        cache->pooled = std::move(pooled);
        cache->head_pre = std::move(head_pre);
        cache->probs_pooled = std::move(probs_pooled);
    }
    return probs;
}

}  // namespace detail

// --- public surface ---

Mat spatial_attention_forward(const Mat& x, const ModelParams& params, const ModelConfig& cfg) {
    validate(cfg);
    if (x.rows != cfg.c_in) throw DimensionError("input channel count does not match config");
    const size_t t_len = x.cols;
    std::vector<double> chan_mean(cfg.c_in);
    for (size_t c = 0; c < cfg.c_in; ++c) {
        double acc = 0.0;
        for (size_t t = 0; t < t_len; ++t) acc += x(c, t);
        chan_mean[c] = t_len ? acc / static_cast<double>(t_len) : 0.0;
    }
    const Tensor& w1 = params.at("attn.gate1.w");
    const Tensor& b1 = params.at("attn.gate1.b");
    const Tensor& w2 = params.at("attn.gate2.w");
    const Tensor& b2 = params.at("attn.gate2.b");
    const size_t ha = cfg.attn_hidden();
    std::vector<double> g1(ha);
    for (size_t o = 0; o < ha; ++o) {
        double acc = b1.values[o];
        for (size_t c = 0; c < cfg.c_in; ++c) acc += w1.values[o * cfg.c_in + c] * chan_mean[c];
        g1[o] = detail::gelu(acc);
    }
    Mat gated(cfg.c_in, t_len);
    for (size_t c = 0; c < cfg.c_in; ++c) {
        double acc = b2.values[c];
        for (size_t j = 0; j < ha; ++j) acc += w2.values[c * ha + j] * g1[j];
        const double gv = detail::sigmoid(acc);
        for (size_t t = 0; t < t_len; ++t) gated(c, t) = x(c, t) * gv;
    }
    return detail::dense_per_frame(gated, params.at("attn.proj.w"), params.at("attn.proj.b"));
}

Mat bm_encoder_forward(const Mat& h, const ModelParams& params, const ModelConfig& cfg) {
    validate(cfg);
    if (h.rows != cfg.d) throw DimensionError("bm encoder expects D rows");
    Mat out = h;
    for (size_t k = 0; k < cfg.n_bm; ++k) {
        const std::string base = "bm." + std::to_string(k);
        const size_t dilation = size_t{1} << (k % 5);
        Mat z = detail::conv1d_same(out, params.at(base + ".conv1.w"),
                                    params.at(base + ".conv1.b"), dilation);
        for (auto& v : z.v) v = detail::gelu(v);
        Mat r = detail::conv1d_same(z, params.at(base + ".conv2.w"), params.at(base + ".conv2.b"),
                                    1);
        for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += r.v[i];
    }
    return out;
}

Mat multiscale_conv_forward(const Mat& h, const ModelParams& params, const ModelConfig& cfg,
                            const ForwardOptions& opts) {
    validate(cfg);
    if (h.rows != cfg.d) throw DimensionError("multi-scale conv expects D rows");
    Mat out = h;
    for (size_t j = 0; j < cfg.n_ms; ++j) {
        const std::string base = "ms." + std::to_string(j);
        Mat z = detail::conv1d_same(out, params.at(base + ".conv.w"), params.at(base + ".conv.b"),
                                    1);
        for (auto& v : z.v) v = detail::gelu(v);
        if (opts.training && cfg.dropout_p > 0.0) {
            const double scale = 1.0 / (1.0 - cfg.dropout_p);
            for (size_t i = 0; i < z.v.size(); ++i)
                z.v[i] = detail::dropout_keep(opts.dropout_seed, j, i, cfg.dropout_p)
                             ? z.v[i] * scale
                             : 0.0;
        }
        for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += z.v[i];
    }
    return out;
}

Mat bilstm_forward(const Mat& h, const ModelParams& params, const ModelConfig& cfg) {
    validate(cfg);
    if (h.rows != cfg.d) throw DimensionError("bilstm expects D rows");
    Mat fwd = detail::run_lstm_dir(h, params.at("lstm.fwd.w_ih"), params.at("lstm.fwd.w_hh"),
                                   params.at("lstm.fwd.b"), false, nullptr);
    Mat bwd = detail::run_lstm_dir(h, params.at("lstm.bwd.w_ih"), params.at("lstm.bwd.w_hh"),
                                   params.at("lstm.bwd.b"), true, nullptr);
    Mat out(2 * cfg.lstm_hidden, h.cols);
    for (size_t j = 0; j < cfg.lstm_hidden; ++j) {
        std::copy(fwd.row(j), fwd.row(j) + h.cols, out.row(j));
        std::copy(bwd.row(j), bwd.row(j) + h.cols, out.row(cfg.lstm_hidden + j));
    }
    return out;
}

Mat concat_features(const Mat* f_bm, const Mat* f_ms, const Mat* f_lstm, const ModelConfig& cfg) {
    validate(cfg);  // rejects all-branches-off
    std::vector<const Mat*> parts;
    if (cfg.bm_on) {
        if (!f_bm) throw DimensionError("bm branch enabled but missing");
        parts.push_back(f_bm);
    }
    if (cfg.ms_on) {
        if (!f_ms) throw DimensionError("ms branch enabled but missing");
        parts.push_back(f_ms);
    }
    if (cfg.lstm_on) {
        if (!f_lstm) throw DimensionError("lstm branch enabled but missing");
        parts.push_back(f_lstm);
    }
    const size_t t_len = parts.front()->cols;
    size_t rows = 0;
    for (const Mat* p : parts) {
        if (p->cols != t_len) throw DimensionError("branch outputs disagree on length");
        rows += p->rows;
    }
    Mat out(rows, t_len);
    size_t r = 0;
    for (const Mat* p : parts) {
        std::copy(p->v.begin(), p->v.end(), out.v.begin() + static_cast<long>(r * t_len));
        r += p->rows;
    }
    return out;
}

Mat ds_fusion_forward(const Mat& f, const ModelParams& params, const ModelConfig& cfg) {
    validate(cfg);
    if (f.rows != cfg.fused_dim()) throw DimensionError("fusion expects the concatenated dim");
    Mat dw = detail::depthwise_conv_same(f, params.at("fusion.dw.w"), params.at("fusion.dw.b"));
    Mat out = detail::dense_per_frame(dw, params.at("fusion.pw.w"), params.at("fusion.pw.b"));
    for (auto& v : out.v) v = detail::gelu(v);
    return out;
}

Mat avg_pool_forward(const Mat& h, size_t window, size_t stride) {
    if (window < 1 || stride < 1 || stride > window)
        throw std::invalid_argument("pooling requires 1 <= stride <= window");
    if (h.cols < window) throw DegenerateError("input shorter than the pooling window");
    const size_t out_len = (h.cols - window) / stride + 1;
    Mat out(h.rows, out_len);
    const double inv = 1.0 / static_cast<double>(window);
    for (size_t r = 0; r < h.rows; ++r) {
        const double* src = h.row(r);
        double* dst = out.row(r);
        for (size_t k = 0; k < out_len; ++k) {
            double acc = 0.0;
            const size_t base = k * stride;
            for (size_t j = 0; j < window; ++j) acc += src[base + j];
            dst[k] = acc * inv;
        }
    }
    return out;
}

ProbabilitySequence head_forward(const Mat& h, const ModelParams& params) {
    const Tensor& w = params.at("head.w");
    const Tensor& b = params.at("head.b");
    if (h.rows != w.shape[1]) throw DimensionError("head expects D rows");
    ProbabilitySequence p;
    p.values.resize(h.cols);
    for (size_t k = 0; k < h.cols; ++k) {
        double acc = b.values[0];
        for (size_t i = 0; i < h.rows; ++i) acc += w.values[i] * h(i, k);
        p.values[k] = detail::sigmoid(acc);
    }
    return p;
}

ProbabilitySequence upsample_linear(const ProbabilitySequence& p, size_t target_len) {
    const size_t n = p.values.size();
    if (n < 2) throw DegenerateError("need at least two points to interpolate");
    if (target_len < 2) throw DegenerateError("target length must be at least two");

    ProbabilitySequence out;
    if (p.frame_rate_hz > 0.0)
        out.frame_rate_hz = p.frame_rate_hz * static_cast<double>(target_len - 1) /
                            static_cast<double>(n - 1);
    out.values.resize(target_len);
    const double scale = static_cast<double>(n - 1) / static_cast<double>(target_len - 1);
    for (size_t j = 0; j < target_len; ++j) {
        const double pos = static_cast<double>(j) * scale;
        auto i0 = static_cast<size_t>(pos);
        if (i0 >= n - 1) {
            out.values[j] = p.values[n - 1];
            continue;
        }
        const double frac = pos - static_cast<double>(i0);
        out.values[j] = p.values[i0] * (1.0 - frac) + p.values[i0 + 1] * frac;
    }
    return out;
}

ProbabilitySequence model_forward(const Mat& x, const ModelParams& params, const ModelConfig& cfg,
                                  const ForwardOptions& opts) {
    return detail::model_forward_impl(x, params, cfg, opts, nullptr);
}

ProbabilitySequence model_forward(const Mat& x, const ModelParams& params, const ModelConfig& cfg,
                                  bool training, Rng& rng) {
    ForwardOptions opts;
    opts.training = training;
    if (training) opts.dropout_seed = rng.next_u64();
    return detail::model_forward_impl(x, params, cfg, opts, nullptr);
}

}  // namespace mebm
