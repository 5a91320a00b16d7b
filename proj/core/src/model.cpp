#include "arithlab/model.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace arithlab {

void ModelConfig::validate() const {
    if (n_layers < 0 || n_heads < 1 || d_embed < 1 || context_length < 1 || vocab_size < 1)
        throw std::invalid_argument("ModelConfig: non-positive dimension");
    if (d_embed % n_heads != 0)
        throw std::invalid_argument("ModelConfig: d_embed must be divisible by n_heads");
    if (dropout < 0.0f || dropout >= 1.0f)
        throw std::invalid_argument("ModelConfig: dropout must lie in [0, 1)");
}

long long ModelConfig::parameter_count() const {
    long long d = d_embed, v = vocab_size, t = context_length;
    long long per_layer = 2 * d                     // ln1
                          + d * 3 * d + 3 * d       // qkv
                          + d * d + d               // attn proj
                          + 2 * d                   // ln2
                          + d * 4 * d + 4 * d       // fc
                          + 4 * d * d + d;          // mlp proj
    long long total = v * d + t * d + n_layers * per_layer + 2 * d;
    if (!weight_tying) total += v * d;
    return total;
}

long long ModelConfig::parameter_count_reporting() const {
    return parameter_count() - static_cast<long long>(context_length) * d_embed;
}

ModelConfig ModelConfig::nanogpt(int vocab, int context) {
    ModelConfig c;
    c.n_layers = 6;
    c.n_heads = 6;
    c.d_embed = 384;
    c.context_length = context;
    c.vocab_size = vocab;
    c.dropout = 0.2f;
    return c;
}

ModelConfig ModelConfig::gpt2(int vocab) {
    ModelConfig c;
    c.n_layers = 12;
    c.n_heads = 12;
    c.d_embed = 768;
    c.context_length = 1024;
    c.vocab_size = vocab;
    c.dropout = 0.2f;
    return c;
}

namespace {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapM = Eigen::Map<Mat<S>>;
template <typename S>
using CMapM = Eigen::Map<const Mat<S>>;

template <typename S>
S gelu(S x) {
    const S c = static_cast<S>(0.7978845608028654);  // sqrt(2/pi)
    S inner = c * (x + static_cast<S>(0.044715) * x * x * x);
    return static_cast<S>(0.5) * x * (static_cast<S>(1) + std::tanh(inner));
}

template <typename S>
S gelu_grad(S x) {
    const S c = static_cast<S>(0.7978845608028654);
    S x2 = x * x;
    S inner = c * (x + static_cast<S>(0.044715) * x * x2);
    S t = std::tanh(inner);
    S dinner = c * (static_cast<S>(1) + static_cast<S>(3 * 0.044715) * x2);
    return static_cast<S>(0.5) * (static_cast<S>(1) + t) +
           static_cast<S>(0.5) * x * (static_cast<S>(1) - t * t) * dinner;
}

}  // namespace

template <typename S>
struct GptModelT<S>::Workspace {
    struct Layer {
        std::vector<S> x_in, xhat1, rstd1;
        std::vector<S> qkv, probs, att_out;
        std::vector<S> x_mid, xhat2, rstd2;
        std::vector<S> fc, act;
        std::vector<S> drop_attn, drop_resid1, drop_resid2;  // inverted-dropout factors
    };
    std::vector<Layer> layers;
    std::vector<S> emb, drop_emb;
    std::vector<S> xf_hat, rstdf, xf;
    std::vector<S> logits, dlogits;
    // backward scratch
    std::vector<S> dx, dbranch, dqkv, datt, dwide, dx2;
};

template <typename S>
GptModelT<S>::GptModelT(const ModelConfig& cfg, uint64_t init_seed)
    : cfg_(cfg), ws_(std::make_unique<Workspace>()) {
    cfg_.validate();
    init_params(init_seed);
}

template <typename S>
GptModelT<S>::~GptModelT() = default;
template <typename S>
GptModelT<S>::GptModelT(GptModelT&&) noexcept = default;
template <typename S>
GptModelT<S>& GptModelT<S>::operator=(GptModelT&&) noexcept = default;

template <typename S>
void GptModelT<S>::init_params(uint64_t seed) {
    Rng rng(seed);
    long long d = cfg_.d_embed;
    auto add = [&](const std::string& name, long long rows, long long cols, double std,
                   bool decay) {
        Param<S> p;
        p.name = name;
        p.rows = rows;
        p.cols = cols;
        p.decayable = decay;
        p.data.resize(static_cast<size_t>(rows * cols));
        p.grad.assign(p.data.size(), S{0});
        if (std > 0)
            for (S& v : p.data) v = static_cast<S>(rng.gaussian(0.0, std));
        else
            for (S& v : p.data) v = S{0};
        params_.push_back(std::move(p));
    };
    auto ones = [&](const std::string& name, long long n) {
        add(name, 1, n, 0.0, false);
        for (S& v : params_.back().data) v = S{1};
    };

    const double base_std = 0.02;
    const double resid_std =
        cfg_.n_layers > 0 ? base_std / std::sqrt(2.0 * cfg_.n_layers) : base_std;

    add("wte", cfg_.vocab_size, d, base_std, true);
    add("wpe", cfg_.context_length, d, base_std, true);
    for (int l = 0; l < cfg_.n_layers; ++l) {
        std::string pre = "l" + std::to_string(l) + ".";
        ones(pre + "ln1.w", d);
        add(pre + "ln1.b", 1, d, 0.0, false);
        add(pre + "attn.qkv.w", d, 3 * d, base_std, true);
        add(pre + "attn.qkv.b", 1, 3 * d, 0.0, false);
        add(pre + "attn.proj.w", d, d, resid_std, true);
        add(pre + "attn.proj.b", 1, d, 0.0, false);
        ones(pre + "ln2.w", d);
        add(pre + "ln2.b", 1, d, 0.0, false);
        add(pre + "mlp.fc.w", d, 4 * d, base_std, true);
        add(pre + "mlp.fc.b", 1, 4 * d, 0.0, false);
        add(pre + "mlp.proj.w", 4 * d, d, resid_std, true);
        add(pre + "mlp.proj.b", 1, d, 0.0, false);
    }
    ones("lnf.w", d);
    add("lnf.b", 1, d, 0.0, false);
    if (!cfg_.weight_tying) add("lm_head.w", cfg_.vocab_size, d, base_std, true);
}

template <typename S>
std::vector<Param<S>*> GptModelT<S>::parameters() {
    std::vector<Param<S>*> out;
    out.reserve(params_.size());
    for (Param<S>& p : params_) out.push_back(&p);
    return out;
}

template <typename S>
Param<S>& GptModelT<S>::p(const std::string& name) {
    for (Param<S>& q : params_)
        if (q.name == name) return q;
    throw std::out_of_range("GptModel: no parameter " + name);
}

template <typename S>
const Param<S>& GptModelT<S>::p(const std::string& name) const {
    for (const Param<S>& q : params_)
        if (q.name == name) return q;
    throw std::out_of_range("GptModel: no parameter " + name);
}

template <typename S>
Param<S>& GptModelT<S>::parameter(const std::string& name) {
    return p(name);
}

template <typename S>
const Param<S>& GptModelT<S>::parameter(const std::string& name) const {
    return p(name);
}

template <typename S>
void GptModelT<S>::zero_grads() {
    for (Param<S>& q : params_) std::fill(q.grad.begin(), q.grad.end(), S{0});
}

namespace {

// y = layernorm(x) * w + b rowwise; keeps xhat and rstd for the backward.
template <typename S>
void layernorm_fwd(const S* x, const S* w, const S* b, long long rows, long long d, S* y,
                   S* xhat, S* rstd) {
    for (long long r = 0; r < rows; ++r) {
        const S* xr = x + r * d;
        double mean = 0;
        for (long long i = 0; i < d; ++i) mean += xr[i];
        mean /= d;
        double var = 0;
        for (long long i = 0; i < d; ++i) {
            double c = xr[i] - mean;
            var += c * c;
        }
        var /= d;
        S rs = static_cast<S>(1.0 / std::sqrt(var + 1e-5));
        rstd[r] = rs;
        S* xh = xhat + r * d;
        S* yr = y + r * d;
        for (long long i = 0; i < d; ++i) {
            xh[i] = static_cast<S>((xr[i] - mean) * rs);
            yr[i] = xh[i] * w[i] + b[i];
        }
    }
}

// dy -> dx (+= into dw/db); dx may alias nothing.
template <typename S>
void layernorm_bwd(const S* dy, const S* xhat, const S* rstd, const S* w, long long rows,
                   long long d, S* dx, S* dw, S* db) {
    for (long long r = 0; r < rows; ++r) {
        const S* dyr = dy + r * d;
        const S* xh = xhat + r * d;
        double sum_dxhat = 0, sum_dxhat_xhat = 0;
        for (long long i = 0; i < d; ++i) {
            double dxh = static_cast<double>(dyr[i]) * w[i];
            sum_dxhat += dxh;
            sum_dxhat_xhat += dxh * xh[i];
            dw[i] += dyr[i] * xh[i];
            db[i] += dyr[i];
        }
        double inv_d = 1.0 / d;
        S* dxr = dx + r * d;
        for (long long i = 0; i < d; ++i) {
            double dxh = static_cast<double>(dyr[i]) * w[i];
            dxr[i] = static_cast<S>(rstd[r] *
                                    (dxh - sum_dxhat * inv_d - xh[i] * sum_dxhat_xhat * inv_d));
        }
    }
}

// Inverted dropout factors: 0 with probability p, else 1/(1-p).
template <typename S>
void fill_dropout(std::vector<S>& mask, size_t n, float pdrop, Rng* rng) {
    mask.resize(n);
    if (pdrop <= 0.0f || rng == nullptr) {
        std::fill(mask.begin(), mask.end(), S{1});
        return;
    }
    S keep = static_cast<S>(1.0 / (1.0 - pdrop));
    for (size_t i = 0; i < n; ++i) mask[i] = rng->real01() < pdrop ? S{0} : keep;
}

}  // namespace

template <typename S>
double GptModelT<S>::forward_backward(const uint16_t* xs, const uint16_t* ys, int batch,
                                      int seq_len, const uint8_t* mask, bool backward,
                                      double grad_scale, Rng* dropout_rng,
                                      std::vector<S>* logits_out) {
    const long long d = cfg_.d_embed;
    const long long T = seq_len;
    const long long N = static_cast<long long>(batch) * T;
    const long long V = cfg_.vocab_size;
    const long long H = cfg_.n_heads;
    const long long dh = d / H;
    const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
    const bool training = dropout_rng != nullptr;
    const float pdrop = training ? cfg_.dropout : 0.0f;

    if (T > cfg_.context_length)
        throw std::invalid_argument("forward: sequence length exceeds context length");
    for (long long n = 0; n < N; ++n)
        if (xs[n] >= V) throw std::invalid_argument("forward: token id out of vocab range");

    Workspace& w = *ws_;
    w.layers.resize(static_cast<size_t>(cfg_.n_layers));
    auto sized = [&](std::vector<S>& v, long long n) { v.resize(static_cast<size_t>(n)); };

    // embeddings
    sized(w.emb, N * d);
    const S* wte = p("wte").data.data();
    const S* wpe = p("wpe").data.data();
    for (long long n = 0; n < N; ++n) {
        const S* te = wte + static_cast<long long>(xs[n]) * d;
        const S* pe = wpe + (n % T) * d;
        S* dst = w.emb.data() + n * d;
        for (long long i = 0; i < d; ++i) dst[i] = te[i] + pe[i];
    }
    fill_dropout(w.drop_emb, static_cast<size_t>(N * d), pdrop, training ? dropout_rng : nullptr);
    if (pdrop > 0)
        for (long long i = 0; i < N * d; ++i) w.emb[static_cast<size_t>(i)] *= w.drop_emb[static_cast<size_t>(i)];

    std::vector<S>* x_cur = &w.emb;

    for (int l = 0; l < cfg_.n_layers; ++l) {
        auto& L = w.layers[static_cast<size_t>(l)];
        std::string pre = "l" + std::to_string(l) + ".";
        L.x_in = *x_cur;
        sized(L.xhat1, N * d);
        sized(L.rstd1, N);
        std::vector<S> normed(static_cast<size_t>(N * d));
        layernorm_fwd(L.x_in.data(), p(pre + "ln1.w").data.data(), p(pre + "ln1.b").data.data(),
                      N, d, normed.data(), L.xhat1.data(), L.rstd1.data());

        sized(L.qkv, N * 3 * d);
        {
            CMapM<S> A(normed.data(), N, d);
            CMapM<S> W(p(pre + "attn.qkv.w").data.data(), d, 3 * d);
            MapM<S> Q(L.qkv.data(), N, 3 * d);
            Q.noalias() = A * W;
            const S* b = p(pre + "attn.qkv.b").data.data();
            for (long long n = 0; n < N; ++n)
                for (long long i = 0; i < 3 * d; ++i) L.qkv[static_cast<size_t>(n * 3 * d + i)] += b[i];
        }

        sized(L.probs, static_cast<long long>(batch) * H * T * T);
        std::fill(L.probs.begin(), L.probs.end(), S{0});
        fill_dropout(L.drop_attn, L.probs.size(), pdrop, training ? dropout_rng : nullptr);
        sized(L.att_out, N * d);

        for (int b = 0; b < batch; ++b) {
            for (long long h = 0; h < H; ++h) {
                CMapM<S> qkv(L.qkv.data() + static_cast<long long>(b) * T * 3 * d, T, 3 * d);
                auto Qb = qkv.block(0, h * dh, T, dh);
                auto Kb = qkv.block(0, d + h * dh, T, dh);
                auto Vb = qkv.block(0, 2 * d + h * dh, T, dh);
                S* probs = L.probs.data() + ((static_cast<long long>(b) * H + h) * T * T);
                const S* dropm = L.drop_attn.data() + ((static_cast<long long>(b) * H + h) * T * T);
                MapM<S> out(L.att_out.data() + static_cast<long long>(b) * T * d, T, d);
                for (long long t = 0; t < T; ++t) {
                    // causal: only positions <= t are ever touched
                    S maxv = std::numeric_limits<S>::lowest();
                    std::vector<S> row(static_cast<size_t>(t + 1));
                    for (long long u = 0; u <= t; ++u) {
                        S s = Qb.row(t).dot(Kb.row(u)) * scale;
                        row[static_cast<size_t>(u)] = s;
                        maxv = std::max(maxv, s);
                    }
                    double denom = 0;
                    for (long long u = 0; u <= t; ++u)
                        denom += std::exp(static_cast<double>(row[static_cast<size_t>(u)] - maxv));
                    S* prow = probs + t * T;
                    for (long long u = 0; u <= t; ++u)
                        prow[u] = static_cast<S>(
                            std::exp(static_cast<double>(row[static_cast<size_t>(u)] - maxv)) / denom);
                    // attention dropout applies to the probability row
                    for (long long i = 0; i < dh; ++i) {
                        double acc = 0;
                        for (long long u = 0; u <= t; ++u)
                            acc += static_cast<double>(prow[u]) * (pdrop > 0 ? dropm[t * T + u] : S{1}) *
                                   Vb(u, i);
                        out(t, h * dh + i) = static_cast<S>(acc);
                    }
                }
            }
        }

        // output projection + residual
        sized(L.x_mid, N * d);
        fill_dropout(L.drop_resid1, static_cast<size_t>(N * d), pdrop,
                     training ? dropout_rng : nullptr);
        {
            CMapM<S> A(L.att_out.data(), N, d);
            CMapM<S> W(p(pre + "attn.proj.w").data.data(), d, d);
            MapM<S> X(L.x_mid.data(), N, d);
            X.noalias() = A * W;
            const S* b = p(pre + "attn.proj.b").data.data();
            for (long long n = 0; n < N; ++n)
                for (long long i = 0; i < d; ++i) {
                    size_t k = static_cast<size_t>(n * d + i);
                    S v = (L.x_mid[k] + b[i]) * (pdrop > 0 ? L.drop_resid1[k] : S{1});
                    L.x_mid[k] = L.x_in[k] + v;
                }
        }

        // MLP
        sized(L.xhat2, N * d);
        sized(L.rstd2, N);
        std::vector<S> normed2(static_cast<size_t>(N * d));
        layernorm_fwd(L.x_mid.data(), p(pre + "ln2.w").data.data(), p(pre + "ln2.b").data.data(),
                      N, d, normed2.data(), L.xhat2.data(), L.rstd2.data());
        sized(L.fc, N * 4 * d);
        {
            CMapM<S> A(normed2.data(), N, d);
            CMapM<S> W(p(pre + "mlp.fc.w").data.data(), d, 4 * d);
            MapM<S> F(L.fc.data(), N, 4 * d);
            F.noalias() = A * W;
            const S* b = p(pre + "mlp.fc.b").data.data();
            for (long long n = 0; n < N; ++n)
                for (long long i = 0; i < 4 * d; ++i) L.fc[static_cast<size_t>(n * 4 * d + i)] += b[i];
        }
        sized(L.act, N * 4 * d);
        for (size_t i = 0; i < L.fc.size(); ++i) L.act[i] = gelu(L.fc[i]);

        fill_dropout(L.drop_resid2, static_cast<size_t>(N * d), pdrop,
                     training ? dropout_rng : nullptr);
        std::vector<S>& x_next = (l + 1 < cfg_.n_layers) ? w.layers[static_cast<size_t>(l + 1)].x_in
                                                         : w.xf;
        sized(x_next, N * d);
        {
            CMapM<S> A(L.act.data(), N, 4 * d);
            CMapM<S> W(p(pre + "mlp.proj.w").data.data(), 4 * d, d);
            MapM<S> X(x_next.data(), N, d);
            X.noalias() = A * W;
            const S* b = p(pre + "mlp.proj.b").data.data();
            for (long long n = 0; n < N; ++n)
                for (long long i = 0; i < d; ++i) {
                    size_t k = static_cast<size_t>(n * d + i);
                    S v = (x_next[k] + b[i]) * (pdrop > 0 ? L.drop_resid2[k] : S{1});
                    x_next[k] = L.x_mid[k] + v;
                }
        }
        x_cur = &x_next;
    }

    // final norm + logits
    if (cfg_.n_layers == 0) {
        w.xf = *x_cur;
    }
    std::vector<S>& x_last = cfg_.n_layers == 0 ? w.emb : w.xf;
    sized(w.xf_hat, N * d);
    sized(w.rstdf, N);
    std::vector<S> xfn(static_cast<size_t>(N * d));
    layernorm_fwd(x_last.data(), p("lnf.w").data.data(), p("lnf.b").data.data(), N, d, xfn.data(),
                  w.xf_hat.data(), w.rstdf.data());

    const Param<S>& head = cfg_.weight_tying ? p("wte") : p("lm_head.w");
    sized(w.logits, N * V);
    {
        CMapM<S> X(xfn.data(), N, d);
        CMapM<S> W(head.data.data(), V, d);
        MapM<S> Lg(w.logits.data(), N, V);
        Lg.noalias() = X * W.transpose();
    }
    if (logits_out) *logits_out = w.logits;
    if (ys == nullptr) return 0.0;

    // cross entropy over masked positions, double reduction
    long long counted = 0;
    for (long long n = 0; n < N; ++n) counted += (mask == nullptr || mask[n]) ? 1 : 0;
    if (counted == 0) throw std::invalid_argument("loss: every position is masked out");

    double loss = 0;
    sized(w.dlogits, N * V);
    std::fill(w.dlogits.begin(), w.dlogits.end(), S{0});
    for (long long n = 0; n < N; ++n) {
        bool active = mask == nullptr || mask[n];
        if (!active) continue;
        const S* lrow = w.logits.data() + n * V;
        double maxv = lrow[0];
        for (long long i = 1; i < V; ++i) maxv = std::max(maxv, static_cast<double>(lrow[i]));
        double denom = 0;
        for (long long i = 0; i < V; ++i) denom += std::exp(static_cast<double>(lrow[i]) - maxv);
        uint16_t target = ys[n];
        if (target >= V) throw std::invalid_argument("loss: target id out of range");
        double logp = static_cast<double>(lrow[target]) - maxv - std::log(denom);
        loss -= logp;
        if (backward) {
            S* drow = w.dlogits.data() + n * V;
            double inv = 1.0 / (denom * counted) * grad_scale;
            for (long long i = 0; i < V; ++i)
                drow[i] = static_cast<S>(std::exp(static_cast<double>(lrow[i]) - maxv) * inv);
            drow[target] -= static_cast<S>(grad_scale / counted);
        }
    }
    loss /= counted;
    if (!backward) return loss;

    // ===== backward =====
    Param<S>& head_p = cfg_.weight_tying ? p("wte") : p("lm_head.w");
    std::vector<S>& dxf = w.dx;
    sized(dxf, N * d);
    {
        CMapM<S> dL(w.dlogits.data(), N, V);
        CMapM<S> W(head_p.data.data(), V, d);
        MapM<S> dX(dxf.data(), N, d);
        dX.noalias() = dL * W;
        CMapM<S> X(xfn.data(), N, d);
        MapM<S> dW(head_p.grad.data(), V, d);
        dW.noalias() += dL.transpose() * X;
    }

    std::vector<S>& dx_post = w.dx2;  // gradient wrt pre-lnf activations
    sized(dx_post, N * d);
    layernorm_bwd(dxf.data(), w.xf_hat.data(), w.rstdf.data(), p("lnf.w").data.data(), N, d,
                  dx_post.data(), p("lnf.w").grad.data(), p("lnf.b").grad.data());

    std::vector<S> dx = dx_post;  // running gradient wrt layer output

    for (int l = cfg_.n_layers - 1; l >= 0; --l) {
        auto& L = w.layers[static_cast<size_t>(l)];
        std::string pre = "l" + std::to_string(l) + ".";

        // MLP branch
        std::vector<S>& dbranch = w.dbranch;
        sized(dbranch, N * d);
        for (long long i = 0; i < N * d; ++i) {
            size_t k = static_cast<size_t>(i);
            dbranch[k] = dx[k] * (pdrop > 0 ? L.drop_resid2[k] : S{1});
        }
        // bias grad
        {
            S* db = p(pre + "mlp.proj.b").grad.data();
            for (long long n = 0; n < N; ++n)
                for (long long i = 0; i < d; ++i) db[i] += dbranch[static_cast<size_t>(n * d + i)];
        }
        std::vector<S>& dwide = w.dwide;
        sized(dwide, N * 4 * d);
        {
            CMapM<S> dB(dbranch.data(), N, d);
            CMapM<S> W(p(pre + "mlp.proj.w").data.data(), 4 * d, d);
            MapM<S> dA(dwide.data(), N, 4 * d);
            dA.noalias() = dB * W.transpose();
            CMapM<S> A(L.act.data(), N, 4 * d);
            MapM<S> dW(p(pre + "mlp.proj.w").grad.data(), 4 * d, d);
            dW.noalias() += A.transpose() * dB;
        }
        for (size_t i = 0; i < dwide.size(); ++i) dwide[i] *= gelu_grad(L.fc[i]);
        {
            S* db = p(pre + "mlp.fc.b").grad.data();
            for (long long n = 0; n < N; ++n)
                for (long long i = 0; i < 4 * d; ++i) db[i] += dwide[static_cast<size_t>(n * 4 * d + i)];
        }
        std::vector<S> dnormed2(static_cast<size_t>(N * d));
        {
            CMapM<S> dF(dwide.data(), N, 4 * d);
            CMapM<S> W(p(pre + "mlp.fc.w").data.data(), d, 4 * d);
            MapM<S> dA(dnormed2.data(), N, d);
            dA.noalias() = dF * W.transpose();
            // recompute ln2 output for the weight gradient
            std::vector<S> normed2(static_cast<size_t>(N * d));
            const S* w2 = p(pre + "ln2.w").data.data();
            const S* b2 = p(pre + "ln2.b").data.data();
            for (long long n = 0; n < N; ++n)
                for (long long i = 0; i < d; ++i)
                    normed2[static_cast<size_t>(n * d + i)] =
                        L.xhat2[static_cast<size_t>(n * d + i)] * w2[i] + b2[i];
            CMapM<S> A(normed2.data(), N, d);
            MapM<S> dW(p(pre + "mlp.fc.w").grad.data(), d, 4 * d);
            dW.noalias() += A.transpose() * dF;
        }
        std::vector<S> dmid(static_cast<size_t>(N * d));
        layernorm_bwd(dnormed2.data(), L.xhat2.data(), L.rstd2.data(),
                      p(pre + "ln2.w").data.data(), N, d, dmid.data(),
                      p(pre + "ln2.w").grad.data(), p(pre + "ln2.b").grad.data());
        for (long long i = 0; i < N * d; ++i)
            dmid[static_cast<size_t>(i)] += dx[static_cast<size_t>(i)];  // residual path

        // attention branch
        for (long long i = 0; i < N * d; ++i) {
            size_t k = static_cast<size_t>(i);
            dbranch[k] = dmid[k] * (pdrop > 0 ? L.drop_resid1[k] : S{1});
        }
        {
            S* db = p(pre + "attn.proj.b").grad.data();
            for (long long n = 0; n < N; ++n)
                for (long long i = 0; i < d; ++i) db[i] += dbranch[static_cast<size_t>(n * d + i)];
        }
        std::vector<S>& datt = w.datt;
        sized(datt, N * d);
        {
            CMapM<S> dB(dbranch.data(), N, d);
            CMapM<S> W(p(pre + "attn.proj.w").data.data(), d, d);
            MapM<S> dA(datt.data(), N, d);
            dA.noalias() = dB * W.transpose();
            CMapM<S> A(L.att_out.data(), N, d);
            MapM<S> dW(p(pre + "attn.proj.w").grad.data(), d, d);
            dW.noalias() += A.transpose() * dB;
        }

        std::vector<S>& dqkv = w.dqkv;
        sized(dqkv, N * 3 * d);
        std::fill(dqkv.begin(), dqkv.end(), S{0});
        for (int b = 0; b < batch; ++b) {
            for (long long h = 0; h < H; ++h) {
                CMapM<S> qkv(L.qkv.data() + static_cast<long long>(b) * T * 3 * d, T, 3 * d);
                MapM<S> dqkvm(dqkv.data() + static_cast<long long>(b) * T * 3 * d, T, 3 * d);
                auto Qb = qkv.block(0, h * dh, T, dh);
                auto Kb = qkv.block(0, d + h * dh, T, dh);
                auto Vb = qkv.block(0, 2 * d + h * dh, T, dh);
                auto dQ = dqkvm.block(0, h * dh, T, dh);
                auto dK = dqkvm.block(0, d + h * dh, T, dh);
                auto dV = dqkvm.block(0, 2 * d + h * dh, T, dh);
                const S* probs = L.probs.data() + ((static_cast<long long>(b) * H + h) * T * T);
                const S* dropm = L.drop_attn.data() + ((static_cast<long long>(b) * H + h) * T * T);
                CMapM<S> dy(datt.data() + static_cast<long long>(b) * T * d, T, d);
                for (long long t = 0; t < T; ++t) {
                    const S* prow = probs + t * T;
                    // dP, then softmax backward into dscores
                    std::vector<double> dp(static_cast<size_t>(t + 1));
                    double dot = 0;
                    for (long long u = 0; u <= t; ++u) {
                        double acc = 0;
                        for (long long i = 0; i < dh; ++i)
                            acc += static_cast<double>(dy(t, h * dh + i)) * Vb(u, i);
                        acc *= (pdrop > 0 ? dropm[t * T + u] : S{1});
                        dp[static_cast<size_t>(u)] = acc;
                        dot += acc * prow[u];
                        // dV accumulation uses the dropped probability
                        double pd = static_cast<double>(prow[u]) * (pdrop > 0 ? dropm[t * T + u] : S{1});
                        for (long long i = 0; i < dh; ++i)
                            dV(u, i) += static_cast<S>(pd * dy(t, h * dh + i));
                    }
                    for (long long u = 0; u <= t; ++u) {
                        double ds = prow[u] * (dp[static_cast<size_t>(u)] - dot) *
                                    static_cast<double>(scale);
                        for (long long i = 0; i < dh; ++i) {
                            dQ(t, i) += static_cast<S>(ds * Kb(u, i));
                            dK(u, i) += static_cast<S>(ds * Qb(t, i));
                        }
                    }
                }
            }
        }
        {
            S* db = p(pre + "attn.qkv.b").grad.data();
            for (long long n = 0; n < N; ++n)
                for (long long i = 0; i < 3 * d; ++i)
                    db[i] += dqkv[static_cast<size_t>(n * 3 * d + i)];
        }
        std::vector<S> dnormed1(static_cast<size_t>(N * d));
        {
            CMapM<S> dQKV(dqkv.data(), N, 3 * d);
            CMapM<S> W(p(pre + "attn.qkv.w").data.data(), d, 3 * d);
            MapM<S> dA(dnormed1.data(), N, d);
            dA.noalias() = dQKV * W.transpose();
            std::vector<S> normed(static_cast<size_t>(N * d));
            const S* w1 = p(pre + "ln1.w").data.data();
            const S* b1 = p(pre + "ln1.b").data.data();
            for (long long n = 0; n < N; ++n)
                for (long long i = 0; i < d; ++i)
                    normed[static_cast<size_t>(n * d + i)] =
                        L.xhat1[static_cast<size_t>(n * d + i)] * w1[i] + b1[i];
            CMapM<S> A(normed.data(), N, d);
            MapM<S> dW(p(pre + "attn.qkv.w").grad.data(), d, 3 * d);
            dW.noalias() += A.transpose() * dQKV;
        }
        std::vector<S> dxin(static_cast<size_t>(N * d));
        layernorm_bwd(dnormed1.data(), L.xhat1.data(), L.rstd1.data(),
                      p(pre + "ln1.w").data.data(), N, d, dxin.data(),
                      p(pre + "ln1.w").grad.data(), p(pre + "ln1.b").grad.data());
        for (long long i = 0; i < N * d; ++i)
            dx[static_cast<size_t>(i)] = dmid[static_cast<size_t>(i)] + dxin[static_cast<size_t>(i)];
    }

    // embedding backward
    if (pdrop > 0)
        for (long long i = 0; i < N * d; ++i)
            dx[static_cast<size_t>(i)] *= w.drop_emb[static_cast<size_t>(i)];
    S* dwte = p("wte").grad.data();
    S* dwpe = p("wpe").grad.data();
    for (long long n = 0; n < N; ++n) {
        const S* src = dx.data() + n * d;
        S* te = dwte + static_cast<long long>(xs[n]) * d;
        S* pe = dwpe + (n % T) * d;
        for (long long i = 0; i < d; ++i) {
            te[i] += src[i];
            pe[i] += src[i];
        }
    }
    return loss;
}

template <typename S>
double GptModelT<S>::step_loss(const std::vector<uint16_t>& tokens_x,
                               const std::vector<uint16_t>& tokens_y, int batch, int seq_len,
                               const std::vector<uint8_t>& loss_mask, bool backward,
                               double grad_scale, Rng* dropout_rng) {
    if (tokens_x.size() != static_cast<size_t>(batch) * seq_len ||
        tokens_y.size() != tokens_x.size())
        throw std::invalid_argument("step_loss: token buffer size mismatch");
    if (!loss_mask.empty() && loss_mask.size() != tokens_x.size())
        throw std::invalid_argument("step_loss: mask size mismatch");
    return forward_backward(tokens_x.data(), tokens_y.data(), batch, seq_len,
                            loss_mask.empty() ? nullptr : loss_mask.data(), backward, grad_scale,
                            dropout_rng, nullptr);
}

template <typename S>
std::vector<S> GptModelT<S>::forward_logits(const std::vector<uint16_t>& tokens, int batch,
                                            int seq_len) {
    std::vector<S> logits;
    forward_backward(tokens.data(), nullptr, batch, seq_len, nullptr, false, 1.0, nullptr,
                     &logits);
    return logits;
}

template <typename S>
std::vector<S> GptModelT<S>::last_logits(const std::vector<uint16_t>& tokens, int batch,
                                         int seq_len) {
    std::vector<S> logits = forward_logits(tokens, batch, seq_len);
    const long long V = cfg_.vocab_size;
    std::vector<S> out(static_cast<size_t>(batch) * V);
    for (int b = 0; b < batch; ++b) {
        const S* src = logits.data() + ((static_cast<long long>(b) + 1) * seq_len - 1) * V;
        std::copy(src, src + V, out.data() + static_cast<long long>(b) * V);
    }
    return out;
}

template <typename S>
typename GptModelT<S>::GenerateResult GptModelT<S>::generate(
    const std::vector<uint16_t>& prompt, int max_new, bool greedy, double temperature, Rng* rng,
    const std::function<bool(const std::vector<uint16_t>&)>& done) {
    GenerateResult res;
    std::vector<uint16_t> ctx = prompt;
    const long long V = cfg_.vocab_size;
    for (int step = 0; step < max_new; ++step) {
        if (static_cast<int>(ctx.size()) > cfg_.context_length) {
            ctx.erase(ctx.begin(),
                      ctx.begin() + (ctx.size() - static_cast<size_t>(cfg_.context_length)));
            res.truncated_left = true;
        }
        std::vector<S> logits = last_logits(ctx, 1, static_cast<int>(ctx.size()));
        int pick = 0;
        if (greedy || temperature <= 0.0 || rng == nullptr) {
            for (long long i = 1; i < V; ++i)
                if (logits[static_cast<size_t>(i)] > logits[static_cast<size_t>(pick)])
                    pick = static_cast<int>(i);
        } else {
            double maxv = logits[0];
            for (long long i = 1; i < V; ++i)
                maxv = std::max(maxv, static_cast<double>(logits[static_cast<size_t>(i)]));
            std::vector<double> probs(static_cast<size_t>(V));
            double denom = 0;
            for (long long i = 0; i < V; ++i) {
                probs[static_cast<size_t>(i)] =
                    std::exp((static_cast<double>(logits[static_cast<size_t>(i)]) - maxv) /
                             temperature);
                denom += probs[static_cast<size_t>(i)];
            }
            double r = rng->real01() * denom, acc = 0;
            for (long long i = 0; i < V; ++i) {
                acc += probs[static_cast<size_t>(i)];
                if (r < acc) {
                    pick = static_cast<int>(i);
                    break;
                }
                pick = static_cast<int>(i);
            }
        }
        ctx.push_back(static_cast<uint16_t>(pick));
        res.ids.push_back(static_cast<uint16_t>(pick));
        if (done && done(res.ids)) return res;
    }
    res.hit_limit = true;
    return res;
}

template <typename S>
std::vector<typename GptModelT<S>::GenerateResult> GptModelT<S>::generate_batch(
    const std::vector<std::vector<uint16_t>>& prompts, int max_new,
    const std::function<bool(size_t, const std::vector<uint16_t>&)>& done) {
    std::vector<GenerateResult> res(prompts.size());
    if (prompts.empty()) return res;
    size_t plen = prompts[0].size();
    for (const auto& p : prompts)
        if (p.size() != plen)
            throw std::invalid_argument("generate_batch: prompts must share one length");

    const long long V = cfg_.vocab_size;
    int batch = static_cast<int>(prompts.size());
    std::vector<std::vector<uint16_t>> ctx = prompts;
    std::vector<uint8_t> finished(prompts.size(), 0);
    bool truncated = false;

    for (int step = 0; step < max_new; ++step) {
        size_t cur_len = ctx[0].size();
        if (static_cast<int>(cur_len) > cfg_.context_length) {
            for (auto& c : ctx)
                c.erase(c.begin(), c.begin() + (cur_len - static_cast<size_t>(cfg_.context_length)));
            cur_len = static_cast<size_t>(cfg_.context_length);
            truncated = true;
        }
        std::vector<uint16_t> flat;
        flat.reserve(prompts.size() * cur_len);
        for (const auto& c : ctx) flat.insert(flat.end(), c.begin(), c.end());
        std::vector<S> logits = last_logits(flat, batch, static_cast<int>(cur_len));
        bool all_done = true;
        for (size_t b = 0; b < ctx.size(); ++b) {
            if (finished[b]) continue;
            const S* row = logits.data() + static_cast<long long>(b) * V;
            int pick = 0;
            for (long long i = 1; i < V; ++i)
                if (row[i] > row[pick]) pick = static_cast<int>(i);
            ctx[b].push_back(static_cast<uint16_t>(pick));
            res[b].ids.push_back(static_cast<uint16_t>(pick));
            res[b].truncated_left = res[b].truncated_left || truncated;
            if (done && done(b, res[b].ids))
                finished[b] = 1;
            else
                all_done = false;
        }
        // pad finished rows so the batch keeps one shared length
        size_t target = 0;
        for (const auto& c : ctx) target = std::max(target, c.size());
        for (auto& c : ctx)
            while (c.size() < target) c.push_back(c.back());
        if (all_done) return res;
    }
    for (size_t b = 0; b < res.size(); ++b)
        if (!finished[b]) res[b].hit_limit = true;
    return res;
}

template class GptModelT<float>;
template class GptModelT<double>;

double cross_entropy(const std::vector<float>& logits, const std::vector<uint16_t>& targets,
                     int vocab, const std::vector<uint8_t>& mask) {
    if (logits.size() != targets.size() * static_cast<size_t>(vocab))
        throw std::invalid_argument("cross_entropy: size mismatch");
    double loss = 0;
    long long counted = 0;
    for (size_t n = 0; n < targets.size(); ++n) {
        if (!mask.empty() && !mask[n]) continue;
        const float* row = logits.data() + n * static_cast<size_t>(vocab);
        double maxv = row[0];
        for (int i = 1; i < vocab; ++i) maxv = std::max(maxv, static_cast<double>(row[i]));
        double denom = 0;
        for (int i = 0; i < vocab; ++i) denom += std::exp(static_cast<double>(row[i]) - maxv);
        loss -= static_cast<double>(row[targets[n]]) - maxv - std::log(denom);
        ++counted;
    }
    if (counted == 0) throw std::invalid_argument("cross_entropy: all positions masked");
    return loss / counted;
}

}  // namespace arithlab
