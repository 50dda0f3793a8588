#include "floodsr/srnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "floodsr/baselines.hpp"
#include "floodsr/rng.hpp"
#include "fpmode.hpp"

namespace floodsr {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

struct ConvRef {
    std::size_t w = 0;
    std::size_t b = 0;
    int cin = 0;
    int cout = 0;
    int k = 0;
};

struct DenseRef {
    std::size_t w = 0;
    std::size_t b = 0;
    int in = 0;
    int out = 0;
};

struct BlockRef {
    std::vector<ConvRef> convs;
    ConvRef fuse;
    DenseRef down;
    DenseRef up;
};

struct Layout {
    ConvRef sfe1;
    ConvRef sfe2;
    std::vector<BlockRef> blocks;
    ConvRef gff1;
    ConvRef gff2;
    std::vector<ConvRef> ups;
    ConvRef tail1;
    ConvRef tail2;
};

struct TensorSpec {
    std::string name;
    std::vector<int> shape;
    int fan_in = 0;  // 0 marks a bias
};

// Single source of truth for tensor order and naming.
class LayoutBuilder {
public:
    ConvRef conv(const std::string& name, int cin, int cout, int k) {
        ConvRef r{specs.size(), specs.size() + 1, cin, cout, k};
        specs.push_back({name + ".w", {cout, cin, k, k}, cin * k * k});
        specs.push_back({name + ".b", {cout}, 0});
        return r;
    }
    DenseRef dense(const std::string& name, int in, int out) {
        DenseRef r{specs.size(), specs.size() + 1, in, out};
        specs.push_back({name + ".w", {out, in}, in});
        specs.push_back({name + ".b", {out}, 0});
        return r;
    }

    std::vector<TensorSpec> specs;
};

Layout build_layout(const NetConfig& cfg, std::vector<TensorSpec>* specs_out = nullptr) {
    LayoutBuilder lb;
    Layout L;
    const int g0 = cfg.features;
    const int g = cfg.growth;
    const int k = cfg.kernel;
    L.sfe1 = lb.conv("sfe1", 1, g0, k);
    L.sfe2 = lb.conv("sfe2", g0, g0, k);
    for (int d = 0; d < cfg.blocks; ++d) {
        const std::string prefix = "rdb" + std::to_string(d);
        BlockRef block;
        for (int c = 0; c < cfg.layers; ++c) {
            block.convs.push_back(lb.conv(prefix + ".conv" + std::to_string(c), g0 + c * g, g, k));
        }
        block.fuse = lb.conv(prefix + ".lff", g0 + cfg.layers * g, g0, 1);
        if (cfg.attention) {
            block.down = lb.dense(prefix + ".ca.down", g0, g0 / cfg.reduction);
            block.up = lb.dense(prefix + ".ca.up", g0 / cfg.reduction, g0);
        }
        L.blocks.push_back(std::move(block));
    }
    L.gff1 = lb.conv("gff1", cfg.blocks * g0, g0, 1);
    L.gff2 = lb.conv("gff2", g0, g0, k);
    for (std::size_t u = 0; u < cfg.upsample.size(); ++u) {
        const int r = cfg.upsample[u];
        L.ups.push_back(lb.conv("up" + std::to_string(u), g0, g0 * r * r, k));
    }
    L.tail1 = lb.conv("tail1", g0, g0, k);
    L.tail2 = lb.conv("tail2", g0, 1, k);
    if (specs_out) *specs_out = std::move(lb.specs);
    return L;
}

template <typename T>
void im2col(const T* in, int cin, int h, int w, int k, T* col) {
    const int pad = k / 2;
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (int ci = 0; ci < cin; ++ci) {
        const T* src = in + ci * hw;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                T* dst = col + ((ci * k + ky) * k + kx) * hw;
                const int dy = ky - pad;
                const int dx = kx - pad;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + dy;
                    T* row = dst + static_cast<std::size_t>(y) * w;
                    if (sy < 0 || sy >= h) {
                        std::fill(row, row + w, T{0});
                        continue;
                    }
                    const T* srow = src + static_cast<std::size_t>(sy) * w;
                    const int x0 = std::max(0, -dx);
                    const int x1 = std::min(w, w - dx);
                    std::fill(row, row + x0, T{0});
                    for (int x = x0; x < x1; ++x) row[x] = srow[x + dx];
                    std::fill(row + std::max(x0, x1), row + w, T{0});
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* col, int cin, int h, int w, int k, T* out) {
    const int pad = k / 2;
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (int ci = 0; ci < cin; ++ci) {
        T* dst = out + ci * hw;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const T* src = col + ((ci * k + ky) * k + kx) * hw;
                const int dy = ky - pad;
                const int dx = kx - pad;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + dy;
                    if (sy < 0 || sy >= h) continue;
                    const T* row = src + static_cast<std::size_t>(y) * w;
                    T* drow = dst + static_cast<std::size_t>(sy) * w;
                    const int x0 = std::max(0, -dx);
                    const int x1 = std::min(w, w - dx);
                    for (int x = x0; x < x1; ++x) drow[x + dx] += row[x];
                }
            }
        }
    }
}

template <typename T>
struct Scratch {
    std::vector<T> col;
    std::vector<T> dcol;
};

template <typename T>
void conv_forward(const ConvRef& c, const BasicNetParams<T>& p, const T* in, int h, int w, T* out,
                  Scratch<T>& s) {
    const int hw = h * w;
    const int kk = c.cin * c.k * c.k;
    ConstMatMap<T> weights(p.tensors[c.w].values.data(), c.cout, kk);
    MatMap<T> result(out, c.cout, hw);
    if (c.cout == 1) {
        // Eigen routes a single output row to GEMV, whose summation order
        // depends on buffer alignment; keep it fixed so reruns are bit-equal.
        const T* x = in;
        if (c.k != 1) {
            s.col.resize(static_cast<std::size_t>(kk) * hw);
            im2col(in, c.cin, h, w, c.k, s.col.data());
            x = s.col.data();
        }
        const T* wt = p.tensors[c.w].values.data();
        const T b = p.tensors[c.b].values[0];
        for (int j = 0; j < hw; ++j) out[j] = T{0};
        for (int q = 0; q < kk; ++q) {
            const T wq = wt[q];
            const T* row = x + static_cast<std::size_t>(q) * hw;
            for (int j = 0; j < hw; ++j) out[j] += wq * row[j];
        }
        for (int j = 0; j < hw; ++j) out[j] += b;
        return;
    }
    if (c.k == 1) {
        result.noalias() = weights * ConstMatMap<T>(in, c.cin, hw);
    } else {
        s.col.resize(static_cast<std::size_t>(kk) * hw);
        im2col(in, c.cin, h, w, c.k, s.col.data());
        result.noalias() = weights * ConstMatMap<T>(s.col.data(), kk, hw);
    }
    const T* bias = p.tensors[c.b].values.data();
    for (int o = 0; o < c.cout; ++o) result.row(o).array() += bias[o];
}

// din (optional) is accumulated, not overwritten.
template <typename T>
void conv_backward(const ConvRef& c, const BasicNetParams<T>& p, const T* in, int h, int w, const T* dout,
                   GradSet<T>& g, T* din, Scratch<T>& s) {
    const int hw = h * w;
    const int kk = c.cin * c.k * c.k;
    ConstMatMap<T> weights(p.tensors[c.w].values.data(), c.cout, kk);
    ConstMatMap<T> dres(dout, c.cout, hw);
    MatMap<T> dweights(g[c.w].data(), c.cout, kk);
    if (c.cout == 1) {
        // Same GEMV concern as in conv_forward.
        const T* x = in;
        if (c.k != 1) {
            s.col.resize(static_cast<std::size_t>(kk) * hw);
            im2col(in, c.cin, h, w, c.k, s.col.data());
            x = s.col.data();
        }
        T* dw = g[c.w].data();
        for (int q = 0; q < kk; ++q) {
            const T* row = x + static_cast<std::size_t>(q) * hw;
            T acc{0};
            for (int j = 0; j < hw; ++j) acc += dout[j] * row[j];
            dw[q] += acc;
        }
        if (din) {
            const T* wt = p.tensors[c.w].values.data();
            s.dcol.resize(static_cast<std::size_t>(kk) * hw);
            for (int q = 0; q < kk; ++q) {
                T* row = s.dcol.data() + static_cast<std::size_t>(q) * hw;
                for (int j = 0; j < hw; ++j) row[j] = wt[q] * dout[j];
            }
            if (c.k == 1) {
                for (std::size_t i = 0; i < s.dcol.size(); ++i) din[i] += s.dcol[i];
            } else {
                col2im_add(s.dcol.data(), c.cin, h, w, c.k, din);
            }
        }
        T acc{0};
        for (int j = 0; j < hw; ++j) acc += dout[j];
        g[c.b][0] += acc;
        return;
    }
    if (c.k == 1) {
        ConstMatMap<T> x(in, c.cin, hw);
        dweights.noalias() += dres * x.transpose();
        if (din) MatMap<T>(din, c.cin, hw).noalias() += weights.transpose() * dres;
    } else {
        s.col.resize(static_cast<std::size_t>(kk) * hw);
        im2col(in, c.cin, h, w, c.k, s.col.data());
        ConstMatMap<T> x(s.col.data(), kk, hw);
        dweights.noalias() += dres * x.transpose();
        if (din) {
            s.dcol.resize(static_cast<std::size_t>(kk) * hw);
            MatMap<T> dx(s.dcol.data(), kk, hw);
            dx.noalias() = weights.transpose() * dres;
            col2im_add(s.dcol.data(), c.cin, h, w, c.k, din);
        }
    }
    T* dbias = g[c.b].data();
    for (int o = 0; o < c.cout; ++o) {
        const T* row = dout + static_cast<std::size_t>(o) * hw;
        T acc{0};
        for (int j = 0; j < hw; ++j) acc += row[j];
        dbias[o] += acc;
    }
}

template <typename T>
void relu_inplace(T* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] = x[i] > T{0} ? x[i] : T{0};
}

template <typename T>
T logistic(T z) {
    return T{1} / (T{1} + std::exp(-z));
}

template <typename T>
AttentionWeights<T> attention_weights(const BlockRef& b, const BasicNetParams<T>& p) {
    return {p.tensors[b.down.w].values, p.tensors[b.down.b].values, p.tensors[b.up.w].values,
            p.tensors[b.up.b].values};
}

// Returns dLoss/dInput and accumulates weight gradients.
template <typename T>
Tensor<T> attention_backward(const Tensor<T>& in, const AttentionCache<T>& cache, const Tensor<T>& dout,
                             const BlockRef& b, const BasicNetParams<T>& p, GradSet<T>& g) {
    const int ch = in.c;
    const int mid = b.down.out;
    const std::size_t plane = in.plane();
    const T* up_w = p.tensors[b.up.w].values.data();
    const T* down_w = p.tensors[b.down.w].values.data();

    Tensor<T> din(in.c, in.h, in.w);
    std::vector<T> dgate_pre(static_cast<std::size_t>(ch));
    for (int c = 0; c < ch; ++c) {
        const T* x = in.channel(c);
        const T* dy = dout.channel(c);
        T* dx = din.channel(c);
        T dgate{0};
        const T gate = cache.gate[static_cast<std::size_t>(c)];
        for (std::size_t i = 0; i < plane; ++i) {
            dgate += dy[i] * x[i];
            dx[i] = dy[i] * gate;
        }
        dgate_pre[static_cast<std::size_t>(c)] = dgate * gate * (T{1} - gate);
    }
    std::vector<T> dhidden(static_cast<std::size_t>(mid), T{0});
    for (int c = 0; c < ch; ++c) {
        const T d = dgate_pre[static_cast<std::size_t>(c)];
        g[b.up.b][static_cast<std::size_t>(c)] += d;
        for (int m = 0; m < mid; ++m) {
            g[b.up.w][static_cast<std::size_t>(c * mid + m)] += d * cache.hidden[static_cast<std::size_t>(m)];
            dhidden[static_cast<std::size_t>(m)] += d * up_w[c * mid + m];
        }
    }
    std::vector<T> dpooled(static_cast<std::size_t>(ch), T{0});
    for (int m = 0; m < mid; ++m) {
        const T d = cache.hidden[static_cast<std::size_t>(m)] > T{0} ? dhidden[static_cast<std::size_t>(m)] : T{0};
        g[b.down.b][static_cast<std::size_t>(m)] += d;
        for (int c = 0; c < ch; ++c) {
            g[b.down.w][static_cast<std::size_t>(m * ch + c)] += d * cache.pooled[static_cast<std::size_t>(c)];
            dpooled[static_cast<std::size_t>(c)] += d * down_w[m * ch + c];
        }
    }
    for (int c = 0; c < ch; ++c) {
        const T share = dpooled[static_cast<std::size_t>(c)] / static_cast<T>(plane);
        T* dx = din.channel(c);
        for (std::size_t i = 0; i < plane; ++i) dx[i] += share;
    }
    return din;
}

template <typename T>
void require_finite(const Tensor<T>& t, const char* where) {
    for (T v : t.data) {
        if (!std::isfinite(v)) fail(ErrorKind::NonFiniteActivation, std::string("non-finite activation in ") + where);
    }
}

template <typename T>
void check_params(const Layout& /*layout*/, const BasicNetParams<T>& params) {
    std::vector<TensorSpec> specs;
    build_layout(params.config, &specs);
    if (specs.size() != params.tensors.size()) {
        fail(ErrorKind::ShapeMismatch, "parameter set does not match its network config");
    }
    for (std::size_t i = 0; i < specs.size(); ++i) {
        std::size_t n = 1;
        for (int d : specs[i].shape) n *= static_cast<std::size_t>(d);
        if (params.tensors[i].values.size() != n || params.tensors[i].name != specs[i].name) {
            fail(ErrorKind::ShapeMismatch, "parameter tensor " + specs[i].name + " has wrong shape");
        }
    }
}

}  // namespace

int upsample_product(const NetConfig& config) {
    int p = 1;
    for (int r : config.upsample) p *= r;
    return p;
}

void validate(const NetConfig& config, ScaleFactor scale) {
    if (config.features < 1 || config.blocks < 1 || config.layers < 1 || config.growth < 1 ||
        config.reduction < 1) {
        fail(ErrorKind::InvalidConfig, "network counts must be >= 1");
    }
    if (config.kernel < 1 || config.kernel % 2 == 0) fail(ErrorKind::InvalidConfig, "kernel size must be odd");
    if (config.upsample.empty()) fail(ErrorKind::InvalidConfig, "upsample plan is empty");
    for (int r : config.upsample) {
        if (r < 1) fail(ErrorKind::InvalidConfig, "upsample factors must be >= 1");
    }
    if (upsample_product(config) != scale.f) {
        fail(ErrorKind::InvalidConfig, "upsample plan must multiply to the scale factor " + std::to_string(scale.f));
    }
    if (config.attention && config.features % config.reduction != 0) {
        fail(ErrorKind::ChannelIndivisible, "attention needs features divisible by the reduction ratio (" +
                                                std::to_string(config.features) + " % " +
                                                std::to_string(config.reduction) + ")");
    }
}

std::size_t parameter_count(const NetConfig& config) {
    std::vector<TensorSpec> specs;
    build_layout(config, &specs);
    std::size_t n = 0;
    for (const auto& s : specs) {
        std::size_t m = 1;
        for (int d : s.shape) m *= static_cast<std::size_t>(d);
        n += m;
    }
    return n;
}

template <typename T>
GradSet<T> zero_grads(const BasicNetParams<T>& params) {
    GradSet<T> g;
    g.reserve(params.tensors.size());
    for (const auto& t : params.tensors) g.emplace_back(t.values.size(), T{0});
    return g;
}

NetParams init_params(const NetConfig& config, std::uint64_t seed) {
    validate(config, ScaleFactor(upsample_product(config)));
    std::vector<TensorSpec> specs;
    build_layout(config, &specs);
    Rng rng(seed);
    NetParams params;
    params.config = config;
    params.init_seed = seed;
    for (auto& s : specs) {
        std::size_t n = 1;
        for (int d : s.shape) n *= static_cast<std::size_t>(d);
        std::vector<float> values(n, 0.0f);
        if (s.fan_in > 0) {
            const double stddev = std::sqrt(2.0 / s.fan_in);
            for (float& v : values) v = static_cast<float>(stddev * rng.normal());
        }
        params.tensors.push_back({std::move(s.name), std::move(s.shape), std::move(values)});
    }
    return params;
}

template <typename T>
Tensor<T> subpixel_rearrange(const Tensor<T>& in, int r) {
    if (r < 1 || in.c % (r * r) != 0) {
        fail(ErrorKind::ChannelIndivisible,
             "sub-pixel rearrangement needs channels divisible by " + std::to_string(r * r));
    }
    Tensor<T> out(in.c / (r * r), in.h * r, in.w * r);
    for (int c = 0; c < out.c; ++c) {
        for (int dy = 0; dy < r; ++dy) {
            for (int dx = 0; dx < r; ++dx) {
                const T* src = in.channel(c * r * r + dy * r + dx);
                for (int y = 0; y < in.h; ++y) {
                    for (int x = 0; x < in.w; ++x) out(c, r * y + dy, r * x + dx) = src[y * in.w + x];
                }
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> subpixel_gather(const Tensor<T>& out, int r) {
    if (r < 1 || out.h % r != 0 || out.w % r != 0) {
        fail(ErrorKind::ShapeMismatch, "sub-pixel gather needs spatial size divisible by " + std::to_string(r));
    }
    Tensor<T> in(out.c * r * r, out.h / r, out.w / r);
    for (int c = 0; c < out.c; ++c) {
        for (int dy = 0; dy < r; ++dy) {
            for (int dx = 0; dx < r; ++dx) {
                T* dst = in.channel(c * r * r + dy * r + dx);
                for (int y = 0; y < in.h; ++y) {
                    for (int x = 0; x < in.w; ++x) dst[y * in.w + x] = out(c, r * y + dy, r * x + dx);
                }
            }
        }
    }
    return in;
}

template <typename T>
Tensor<T> channel_attention(const Tensor<T>& in, int reduction, const AttentionWeights<T>& weights,
                            AttentionCache<T>* cache) {
    if (reduction < 1 || in.c % reduction != 0) {
        fail(ErrorKind::ChannelIndivisible, "channel attention needs channels divisible by the reduction ratio");
    }
    const int ch = in.c;
    const int mid = ch / reduction;
    if (weights.down_w.size() != static_cast<std::size_t>(mid * ch) ||
        weights.up_w.size() != static_cast<std::size_t>(mid * ch) ||
        weights.down_b.size() != static_cast<std::size_t>(mid) || weights.up_b.size() != static_cast<std::size_t>(ch)) {
        fail(ErrorKind::ShapeMismatch, "channel attention weights do not match channel count");
    }
    AttentionCache<T> local;
    AttentionCache<T>& cc = cache ? *cache : local;
    cc.pooled.assign(static_cast<std::size_t>(ch), T{0});
    cc.hidden.assign(static_cast<std::size_t>(mid), T{0});
    cc.gate.assign(static_cast<std::size_t>(ch), T{0});
    const std::size_t plane = in.plane();
    for (int c = 0; c < ch; ++c) {
        const T* x = in.channel(c);
        T acc{0};
        for (std::size_t i = 0; i < plane; ++i) acc += x[i];
        cc.pooled[static_cast<std::size_t>(c)] = acc / static_cast<T>(plane);
    }
    for (int m = 0; m < mid; ++m) {
        T acc = weights.down_b[static_cast<std::size_t>(m)];
        for (int c = 0; c < ch; ++c) {
            acc += weights.down_w[static_cast<std::size_t>(m * ch + c)] * cc.pooled[static_cast<std::size_t>(c)];
        }
        cc.hidden[static_cast<std::size_t>(m)] = acc > T{0} ? acc : T{0};
    }
    for (int c = 0; c < ch; ++c) {
        T acc = weights.up_b[static_cast<std::size_t>(c)];
        for (int m = 0; m < mid; ++m) {
            acc += weights.up_w[static_cast<std::size_t>(c * mid + m)] * cc.hidden[static_cast<std::size_t>(m)];
        }
        cc.gate[static_cast<std::size_t>(c)] = logistic(acc);
    }
    Tensor<T> out(in.c, in.h, in.w);
    for (int c = 0; c < ch; ++c) {
        const T gate = cc.gate[static_cast<std::size_t>(c)];
        const T* x = in.channel(c);
        T* y = out.channel(c);
        for (std::size_t i = 0; i < plane; ++i) y[i] = x[i] * gate;
    }
    return out;
}

template <typename T>
void forward(const FractionGrid& wfm, const BasicNetParams<T>& params, ForwardTrace<T>& tr) {
    const NetConfig& cfg = params.config;
    const Layout L = build_layout(cfg);
    check_params(L, params);
    if (wfm.empty()) fail(ErrorKind::ShapeMismatch, "empty WFM");
    const ScaleFactor scale(upsample_product(cfg));

    int h = static_cast<int>(wfm.rows());
    int w = static_cast<int>(wfm.cols());
    const int g0 = cfg.features;
    const int g = cfg.growth;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    Scratch<T> s;

    tr.input = Tensor<T>(1, h, w);
    for (std::size_t k = 0; k < plane; ++k) tr.input.data[k] = static_cast<T>(wfm[k]);
    tr.shallow1 = Tensor<T>(g0, h, w);
    conv_forward(L.sfe1, params, tr.input.data.data(), h, w, tr.shallow1.data.data(), s);
    tr.shallow2 = Tensor<T>(g0, h, w);
    conv_forward(L.sfe2, params, tr.shallow1.data.data(), h, w, tr.shallow2.data.data(), s);

    tr.block_cat.assign(static_cast<std::size_t>(cfg.blocks), Tensor<T>());
    tr.block_sum.assign(static_cast<std::size_t>(cfg.blocks), Tensor<T>());
    tr.attention.assign(cfg.attention ? static_cast<std::size_t>(cfg.blocks) : 0, AttentionCache<T>());
    tr.global_cat = Tensor<T>(cfg.blocks * g0, h, w);

    const T* block_in = tr.shallow2.data.data();
    for (int d = 0; d < cfg.blocks; ++d) {
        const BlockRef& b = L.blocks[static_cast<std::size_t>(d)];
        Tensor<T>& cat = tr.block_cat[static_cast<std::size_t>(d)];
        cat = Tensor<T>(g0 + cfg.layers * g, h, w);
        std::copy(block_in, block_in + g0 * plane, cat.data.begin());
        for (int c = 0; c < cfg.layers; ++c) {
            T* out = cat.channel(g0 + c * g);
            conv_forward(b.convs[static_cast<std::size_t>(c)], params, cat.data.data(), h, w, out, s);
            relu_inplace(out, g * plane);
        }
        Tensor<T>& sum = tr.block_sum[static_cast<std::size_t>(d)];
        sum = Tensor<T>(g0, h, w);
        conv_forward(b.fuse, params, cat.data.data(), h, w, sum.data.data(), s);
        for (std::size_t i = 0; i < sum.size(); ++i) sum.data[i] += block_in[i];

        T* slot = tr.global_cat.channel(d * g0);
        if (cfg.attention) {
            const Tensor<T> gated = channel_attention(sum, cfg.reduction, attention_weights(b, params),
                                                      &tr.attention[static_cast<std::size_t>(d)]);
            std::copy(gated.data.begin(), gated.data.end(), slot);
        } else {
            std::copy(sum.data.begin(), sum.data.end(), slot);
        }
        block_in = slot;
    }

    tr.fused1 = Tensor<T>(g0, h, w);
    conv_forward(L.gff1, params, tr.global_cat.data.data(), h, w, tr.fused1.data.data(), s);
    tr.features = Tensor<T>(g0, h, w);
    conv_forward(L.gff2, params, tr.fused1.data.data(), h, w, tr.features.data.data(), s);
    for (std::size_t i = 0; i < tr.features.size(); ++i) tr.features.data[i] += tr.shallow1.data[i];
    require_finite(tr.features, "global fusion");

    tr.up_in.clear();
    Tensor<T> cur = tr.features;
    for (std::size_t u = 0; u < L.ups.size(); ++u) {
        const int r = cfg.upsample[u];
        Tensor<T> expanded(g0 * r * r, h, w);
        conv_forward(L.ups[u], params, cur.data.data(), h, w, expanded.data.data(), s);
        tr.up_in.push_back(std::move(cur));
        cur = subpixel_rearrange(expanded, r);
        h *= r;
        w *= r;
    }
    tr.tail_in = std::move(cur);
    tr.tail1 = Tensor<T>(g0, h, w);
    conv_forward(L.tail1, params, tr.tail_in.data.data(), h, w, tr.tail1.data.data(), s);
    relu_inplace(tr.tail1.data.data(), tr.tail1.size());
    tr.logits = Tensor<T>(1, h, w);
    conv_forward(L.tail2, params, tr.tail1.data.data(), h, w, tr.logits.data.data(), s);

    const FractionGrid up = bilinear_upscale(wfm, scale);
    tr.residual = Tensor<T>(1, h, w);
    for (std::size_t i = 0; i < up.size(); ++i) tr.residual.data[i] = static_cast<T>(up[i]);
    for (std::size_t i = 0; i < tr.logits.size(); ++i) tr.logits.data[i] += tr.residual.data[i];
    require_finite(tr.logits, "output logits");

    // Keep probabilities strictly inside (0, 1) even where the logistic saturates.
    const T lo = std::numeric_limits<T>::min();
    const T hi = T{1} - std::numeric_limits<T>::epsilon() / 2;
    tr.prob = Tensor<T>(1, h, w);
    for (std::size_t i = 0; i < tr.prob.size(); ++i) {
        tr.prob.data[i] = std::clamp(logistic(tr.logits.data[i]), lo, hi);
    }
}

FractionGrid forward(const FractionGrid& wfm, const NetParams& params) {
    const detail::FlushDenormals ftz;
    ForwardTrace<float> tr;
    forward(wfm, params, tr);
    FractionGrid out(static_cast<std::size_t>(tr.prob.h), static_cast<std::size_t>(tr.prob.w));
    std::copy(tr.prob.data.begin(), tr.prob.data.end(), out.cells().begin());
    return out;
}

template <typename T>
void backward(const ForwardTrace<T>& tr, const BasicNetParams<T>& params, std::span<const T> dprob,
              GradSet<T>& grads) {
    const NetConfig& cfg = params.config;
    const Layout L = build_layout(cfg);
    if (dprob.size() != tr.prob.size()) fail(ErrorKind::ShapeMismatch, "dprob does not match the traced output");
    if (grads.size() != params.tensors.size()) fail(ErrorKind::ShapeMismatch, "gradient set does not match params");
    const int g0 = cfg.features;
    const int g = cfg.growth;
    int h = tr.logits.h;
    int w = tr.logits.w;
    Scratch<T> s;

    Tensor<T> dlogit(1, h, w);
    for (std::size_t i = 0; i < dlogit.size(); ++i) {
        // s (1 - s) evaluated from the logit to avoid cancellation near saturation.
        const double z = static_cast<double>(tr.logits.data[i]);
        const double p = 1.0 / (1.0 + std::exp(-z));
        const double q = 1.0 / (1.0 + std::exp(z));
        dlogit.data[i] = static_cast<T>(static_cast<double>(dprob[i]) * p * q);
    }

    Tensor<T> dtail1(g0, h, w);
    conv_backward(L.tail2, params, tr.tail1.data.data(), h, w, dlogit.data.data(), grads, dtail1.data.data(), s);
    for (std::size_t i = 0; i < dtail1.size(); ++i) {
        if (!(tr.tail1.data[i] > T{0})) dtail1.data[i] = T{0};
    }
    Tensor<T> dcur(g0, h, w);
    conv_backward(L.tail1, params, tr.tail_in.data.data(), h, w, dtail1.data.data(), grads, dcur.data.data(), s);

    for (std::size_t u = L.ups.size(); u-- > 0;) {
        const int r = cfg.upsample[u];
        const Tensor<T> dexp = subpixel_gather(dcur, r);
        h /= r;
        w /= r;
        Tensor<T> dprev(g0, h, w);
        conv_backward(L.ups[u], params, tr.up_in[u].data.data(), h, w, dexp.data.data(), grads, dprev.data.data(), s);
        dcur = std::move(dprev);
    }
    const std::size_t plane = static_cast<std::size_t>(h) * w;

    // features = gff2(gff1(global_cat)) + shallow1
    Tensor<T> dshallow1 = dcur;
    Tensor<T> dfused1(g0, h, w);
    conv_backward(L.gff2, params, tr.fused1.data.data(), h, w, dcur.data.data(), grads, dfused1.data.data(), s);
    Tensor<T> dglobal(cfg.blocks * g0, h, w);
    conv_backward(L.gff1, params, tr.global_cat.data.data(), h, w, dfused1.data.data(), grads, dglobal.data.data(), s);

    Tensor<T> dnext(g0, h, w);  // gradient reaching a block output from the following block
    for (int d = cfg.blocks - 1; d >= 0; --d) {
        const BlockRef& b = L.blocks[static_cast<std::size_t>(d)];
        const Tensor<T>& cat = tr.block_cat[static_cast<std::size_t>(d)];
        Tensor<T> dout(g0, h, w);
        const T* slice = dglobal.channel(d * g0);
        for (std::size_t i = 0; i < dout.size(); ++i) dout.data[i] = slice[i] + dnext.data[i];

        Tensor<T> dsum = cfg.attention
                             ? attention_backward(tr.block_sum[static_cast<std::size_t>(d)],
                                                  tr.attention[static_cast<std::size_t>(d)], dout, b, params, grads)
                             : std::move(dout);

        Tensor<T> dcat(cat.c, h, w);
        conv_backward(b.fuse, params, cat.data.data(), h, w, dsum.data.data(), grads, dcat.data.data(), s);
        for (int c = cfg.layers - 1; c >= 0; --c) {
            T* dlayer = dcat.channel(g0 + c * g);
            const T* act = cat.channel(g0 + c * g);
            for (std::size_t i = 0; i < g * plane; ++i) {
                if (!(act[i] > T{0})) dlayer[i] = T{0};
            }
            conv_backward(b.convs[static_cast<std::size_t>(c)], params, cat.data.data(), h, w, dlayer, grads,
                          dcat.data.data(), s);
        }
        for (std::size_t i = 0; i < dsum.size(); ++i) dsum.data[i] += dcat.data[i];
        dnext = std::move(dsum);
    }

    conv_backward(L.sfe2, params, tr.shallow1.data.data(), h, w, dnext.data.data(), grads, dshallow1.data.data(), s);
    conv_backward(L.sfe1, params, tr.input.data.data(), h, w, dshallow1.data.data(), grads, static_cast<T*>(nullptr), s);
}

#define FLOODSR_INSTANTIATE(T)                                                                                    \
    template GradSet<T> zero_grads<T>(const BasicNetParams<T>&);                                                  \
    template Tensor<T> subpixel_rearrange<T>(const Tensor<T>&, int);                                              \
    template Tensor<T> subpixel_gather<T>(const Tensor<T>&, int);                                                 \
    template Tensor<T> channel_attention<T>(const Tensor<T>&, int, const AttentionWeights<T>&, AttentionCache<T>*); \
    template void forward<T>(const FractionGrid&, const BasicNetParams<T>&, ForwardTrace<T>&);                    \
    template void backward<T>(const ForwardTrace<T>&, const BasicNetParams<T>&, std::span<const T>, GradSet<T>&);

FLOODSR_INSTANTIATE(float)
FLOODSR_INSTANTIATE(double)

#undef FLOODSR_INSTANTIATE

}  // namespace floodsr
