#include "wpcn/neural.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace wpcn {

using nlohmann::json;

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;

// ---------------------------------------------------------------------------
// Parameter layout
// ---------------------------------------------------------------------------

struct ParamDesc {
    int layer;
    const char* name;
    std::vector<int> shape;
};

std::size_t shape_count(const std::vector<int>& shape) {
    std::size_t c = 1;
    for (int d : shape) c *= static_cast<std::size_t>(d);
    return c;
}

int inception_branch(const InceptionSpec& s) { return s.out_ch / 4; }
int inception_reduce(const InceptionSpec& s) { return std::max(1, s.out_ch / 8); }

void append_layer_descs(const ArchSpec& arch, const std::vector<Shape>& shapes,
                        int layer, std::vector<ParamDesc>& out,
                        std::vector<ParamDesc>* buffers) {
    const Shape in = layer == 0 ? Shape{arch.in_ch, arch.in_h, arch.in_w}
                                : shapes[layer - 1];
    const LayerSpec& spec = arch.layers[layer];
    if (const auto* cv = std::get_if<ConvSpec>(&spec)) {
        out.push_back({layer, "w", {cv->out_ch, in.c, cv->kh, cv->kw}});
        out.push_back({layer, "b", {cv->out_ch}});
    } else if (const auto* dn = std::get_if<DenseSpec>(&spec)) {
        out.push_back({layer, "w", {dn->out, static_cast<int>(in.count())}});
        out.push_back({layer, "b", {dn->out}});
    } else if (std::get_if<BatchNormSpec>(&spec)) {
        out.push_back({layer, "gamma", {in.c}});
        out.push_back({layer, "beta", {in.c}});
        if (buffers) {
            buffers->push_back({layer, "running_mean", {in.c}});
            buffers->push_back({layer, "running_var", {in.c}});
        }
    } else if (const auto* ic = std::get_if<InceptionSpec>(&spec)) {
        const int br = inception_branch(*ic);
        const int rd = inception_reduce(*ic);
        out.push_back({layer, "f1.w", {br, in.c, 1, 1}});
        out.push_back({layer, "f1.b", {br}});
        out.push_back({layer, "f2r.w", {rd, in.c, 1, 1}});
        out.push_back({layer, "f2r.b", {rd}});
        out.push_back({layer, "f2.w", {br, rd, ic->k1h, ic->k1w}});
        out.push_back({layer, "f2.b", {br}});
        out.push_back({layer, "f3r.w", {rd, in.c, 1, 1}});
        out.push_back({layer, "f3r.b", {rd}});
        out.push_back({layer, "f3.w", {br, rd, ic->k2h, ic->k2w}});
        out.push_back({layer, "f3.b", {br}});
        out.push_back({layer, "f4.w", {br, in.c, 1, 1}});
        out.push_back({layer, "f4.b", {br}});
    }
}

std::vector<ParamDesc> param_descs(const ArchSpec& arch, const std::vector<Shape>& shapes,
                                   std::vector<ParamDesc>* buffers = nullptr) {
    std::vector<ParamDesc> out;
    for (int l = 0; l < static_cast<int>(arch.layers.size()); ++l)
        append_layer_descs(arch, shapes, l, out, buffers);
    return out;
}

// First param index of each layer.
std::vector<int> layer_param_offsets(const ArchSpec& arch,
                                     const std::vector<ParamDesc>& descs) {
    std::vector<int> off(arch.layers.size(), -1);
    for (int i = static_cast<int>(descs.size()) - 1; i >= 0; --i)
        off[descs[i].layer] = i;
    return off;
}

// ---------------------------------------------------------------------------
// Primitive ops
// ---------------------------------------------------------------------------

void conv2d_fwd(const Tensor& x, const double* w, const double* b, int out_ch,
                int kh, int kw, Tensor& y) {
    const int ph = (kh - 1) / 2, pw = (kw - 1) / 2;
    y = Tensor(x.n, out_ch, x.h, x.w);
    for (int in = 0; in < x.n; ++in)
        for (int oc = 0; oc < out_ch; ++oc) {
            const double* wc = w + static_cast<std::size_t>(oc) * x.c * kh * kw;
            for (int oy = 0; oy < x.h; ++oy)
                for (int ox = 0; ox < x.w; ++ox) {
                    double acc = b[oc];
                    for (int ic = 0; ic < x.c; ++ic) {
                        const double* wk = wc + static_cast<std::size_t>(ic) * kh * kw;
                        for (int ky = 0; ky < kh; ++ky) {
                            const int iy = oy + ky - ph;
                            if (iy < 0 || iy >= x.h) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ix = ox + kx - pw;
                                if (ix < 0 || ix >= x.w) continue;
                                acc += wk[ky * kw + kx] * x.at(in, ic, iy, ix);
                            }
                        }
                    }
                    y.at(in, oc, oy, ox) = acc;
                }
        }
}

void conv2d_bwd(const Tensor& x, const double* w, int out_ch, int kh, int kw,
                const Tensor& gy, Tensor& gx, double* gw, double* gb) {
    const int ph = (kh - 1) / 2, pw = (kw - 1) / 2;
    for (int in = 0; in < x.n; ++in)
        for (int oc = 0; oc < out_ch; ++oc) {
            const double* wc = w + static_cast<std::size_t>(oc) * x.c * kh * kw;
            double* gwc = gw + static_cast<std::size_t>(oc) * x.c * kh * kw;
            for (int oy = 0; oy < x.h; ++oy)
                for (int ox = 0; ox < x.w; ++ox) {
                    const double g = gy.at(in, oc, oy, ox);
                    if (g == 0.0) continue;
                    gb[oc] += g;
                    for (int ic = 0; ic < x.c; ++ic) {
                        const double* wk = wc + static_cast<std::size_t>(ic) * kh * kw;
                        double* gwk = gwc + static_cast<std::size_t>(ic) * kh * kw;
                        for (int ky = 0; ky < kh; ++ky) {
                            const int iy = oy + ky - ph;
                            if (iy < 0 || iy >= x.h) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ix = ox + kx - pw;
                                if (ix < 0 || ix >= x.w) continue;
                                gwk[ky * kw + kx] += g * x.at(in, ic, iy, ix);
                                gx.at(in, ic, iy, ix) += g * wk[ky * kw + kx];
                            }
                        }
                    }
                }
        }
}

void dense_fwd(const Tensor& x, const double* w, const double* b, int out,
               Tensor& y) {
    const int in_sz = static_cast<int>(x.per_sample());
    y = Tensor(x.n, out, 1, 1);
    for (int in = 0; in < x.n; ++in) {
        const double* xv = x.v.data() + static_cast<std::size_t>(in) * in_sz;
        for (int o = 0; o < out; ++o) {
            const double* wr = w + static_cast<std::size_t>(o) * in_sz;
            double acc = b[o];
            for (int i = 0; i < in_sz; ++i) acc += wr[i] * xv[i];
            y.v[static_cast<std::size_t>(in) * out + o] = acc;
        }
    }
}

void dense_bwd(const Tensor& x, const double* w, int out, const Tensor& gy,
               Tensor& gx, double* gw, double* gb) {
    const int in_sz = static_cast<int>(x.per_sample());
    for (int in = 0; in < x.n; ++in) {
        const double* xv = x.v.data() + static_cast<std::size_t>(in) * in_sz;
        double* gxv = gx.v.data() + static_cast<std::size_t>(in) * in_sz;
        const double* gyv = gy.v.data() + static_cast<std::size_t>(in) * out;
        for (int o = 0; o < out; ++o) {
            const double g = gyv[o];
            if (g == 0.0) continue;
            gb[o] += g;
            const double* wr = w + static_cast<std::size_t>(o) * in_sz;
            double* gwr = gw + static_cast<std::size_t>(o) * in_sz;
            for (int i = 0; i < in_sz; ++i) {
                gwr[i] += g * xv[i];
                gxv[i] += g * wr[i];
            }
        }
    }
}

void relu_fwd(const Tensor& x, Tensor& y) {
    y = x;
    for (double& v : y.v) v = v > 0.0 ? v : 0.0;
}

void relu_bwd(const Tensor& y, const Tensor& gy, Tensor& gx) {
    for (std::size_t i = 0; i < y.v.size(); ++i)
        gx.v[i] += y.v[i] > 0.0 ? gy.v[i] : 0.0;
}

// 3x3, stride 1, same padding; caches flat argmax per output cell.
void maxpool3_fwd(const Tensor& x, Tensor& y, std::vector<int>& argmax) {
    y = Tensor(x.n, x.c, x.h, x.w);
    argmax.assign(y.size(), -1);
    for (int in = 0; in < x.n; ++in)
        for (int c = 0; c < x.c; ++c)
            for (int oy = 0; oy < x.h; ++oy)
                for (int ox = 0; ox < x.w; ++ox) {
                    double best = -std::numeric_limits<double>::infinity();
                    int best_idx = -1;
                    for (int dy = -1; dy <= 1; ++dy) {
                        const int iy = oy + dy;
                        if (iy < 0 || iy >= x.h) continue;
                        for (int dx = -1; dx <= 1; ++dx) {
                            const int ix = ox + dx;
                            if (ix < 0 || ix >= x.w) continue;
                            const double v = x.at(in, c, iy, ix);
                            if (v > best) {
                                best = v;
                                best_idx = static_cast<int>(x.idx(in, c, iy, ix));
                            }
                        }
                    }
                    y.at(in, c, oy, ox) = best;
                    argmax[y.idx(in, c, oy, ox)] = best_idx;
                }
}

void maxpool3_bwd(const std::vector<int>& argmax, const Tensor& gy, Tensor& gx) {
    for (std::size_t i = 0; i < gy.v.size(); ++i) gx.v[argmax[i]] += gy.v[i];
}

void adaptive_pool_window(int out_i, int out_n, int in_n, int& lo, int& hi) {
    lo = out_i * in_n / out_n;
    hi = ((out_i + 1) * in_n + out_n - 1) / out_n;
}

void adaptive_pool_fwd(const Tensor& x, int out_h, int out_w, Tensor& y) {
    y = Tensor(x.n, 1, out_h, out_w);
    for (int in = 0; in < x.n; ++in)
        for (int r = 0; r < out_h; ++r)
            for (int c = 0; c < out_w; ++c) {
                int hs, he, ws, we;
                adaptive_pool_window(r, out_h, x.h, hs, he);
                adaptive_pool_window(c, out_w, x.w, ws, we);
                double acc = 0.0;
                for (int ic = 0; ic < x.c; ++ic)
                    for (int iy = hs; iy < he; ++iy)
                        for (int ix = ws; ix < we; ++ix) acc += x.at(in, ic, iy, ix);
                y.at(in, 0, r, c) = acc / (static_cast<double>(x.c) * (he - hs) * (we - ws));
            }
}

void adaptive_pool_bwd(const Tensor& x, int out_h, int out_w, const Tensor& gy,
                       Tensor& gx) {
    for (int in = 0; in < x.n; ++in)
        for (int r = 0; r < out_h; ++r)
            for (int c = 0; c < out_w; ++c) {
                int hs, he, ws, we;
                adaptive_pool_window(r, out_h, x.h, hs, he);
                adaptive_pool_window(c, out_w, x.w, ws, we);
                const double g = gy.at(in, 0, r, c) /
                                 (static_cast<double>(x.c) * (he - hs) * (we - ws));
                for (int ic = 0; ic < x.c; ++ic)
                    for (int iy = hs; iy < he; ++iy)
                        for (int ix = ws; ix < we; ++ix) gx.at(in, ic, iy, ix) += g;
            }
}

void concat_fwd(const Tensor& a, const Tensor& b, Tensor& y) {
    y = Tensor(a.n, a.c + b.c, a.h, a.w);
    for (int in = 0; in < a.n; ++in) {
        std::memcpy(&y.v[y.idx(in, 0, 0, 0)], &a.v[a.idx(in, 0, 0, 0)],
                    a.per_sample() * sizeof(double));
        std::memcpy(&y.v[y.idx(in, a.c, 0, 0)], &b.v[b.idx(in, 0, 0, 0)],
                    b.per_sample() * sizeof(double));
    }
}

void concat_bwd(const Tensor& gy, int a_ch, Tensor& ga, Tensor& gb) {
    for (int in = 0; in < gy.n; ++in)
        for (int c = 0; c < gy.c; ++c) {
            const std::size_t src = gy.idx(in, c, 0, 0);
            const std::size_t plane = static_cast<std::size_t>(gy.h) * gy.w;
            double* dst = c < a_ch ? &ga.v[ga.idx(in, c, 0, 0)]
                                   : &gb.v[gb.idx(in, c - a_ch, 0, 0)];
            for (std::size_t i = 0; i < plane; ++i) dst[i] += gy.v[src + i];
        }
}

}  // namespace

// ---------------------------------------------------------------------------
// Shape inference / parameter counting
// ---------------------------------------------------------------------------

std::vector<Shape> infer_shapes(const ArchSpec& arch) {
    require(arch.in_ch > 0 && arch.in_h > 0 && arch.in_w > 0,
            "infer_shapes: bad input shape");
    std::vector<Shape> shapes;
    Shape cur{arch.in_ch, arch.in_h, arch.in_w};
    for (int l = 0; l < static_cast<int>(arch.layers.size()); ++l) {
        const LayerSpec& spec = arch.layers[l];
        if (const auto* cv = std::get_if<ConvSpec>(&spec)) {
            require(cv->out_ch > 0 && cv->kh > 0 && cv->kw > 0, "conv: bad spec");
            cur = Shape{cv->out_ch, cur.h, cur.w};
        } else if (const auto* ic = std::get_if<InceptionSpec>(&spec)) {
            require(ic->out_ch > 0 && ic->out_ch % 4 == 0,
                    "inception: out_ch must be a positive multiple of 4");
            cur = Shape{ic->out_ch, cur.h, cur.w};
        } else if (const auto* dn = std::get_if<DenseSpec>(&spec)) {
            require(dn->out > 0, "dense: bad out");
            cur = Shape{dn->out, 1, 1};
        } else if (const auto* sk = std::get_if<SkipConcatSpec>(&spec)) {
            require(sk->from >= 0 && sk->from < l, "skip_concat: bad source layer");
            const Shape& src = shapes[sk->from];
            require(src.h == cur.h && src.w == cur.w,
                    "skip_concat: spatial shape mismatch");
            cur = Shape{cur.c + src.c, cur.h, cur.w};
        } else if (const auto* ap = std::get_if<AdaptiveAvgPoolSpec>(&spec)) {
            require(ap->out_h > 0 && ap->out_w > 0, "adaptive_avg_pool: bad target");
            cur = Shape{1, ap->out_h, ap->out_w};
        }
        // BatchNorm / ReLU keep the shape.
        shapes.push_back(cur);
    }
    require(!shapes.empty(), "infer_shapes: empty architecture");
    require(static_cast<std::int64_t>(shapes.back().count()) ==
                static_cast<std::int64_t>(arch.class_rows) * arch.class_cols,
            "infer_shapes: final shape does not match the class shape");
    return shapes;
}

std::int64_t param_count(const ArchSpec& arch) {
    const std::vector<Shape> shapes = infer_shapes(arch);
    std::int64_t total = 0;
    for (const ParamDesc& d : param_descs(arch, shapes))
        total += static_cast<std::int64_t>(shape_count(d.shape));
    return total;
}

// ---------------------------------------------------------------------------
// Model init
// ---------------------------------------------------------------------------

Model init_model(const ArchSpec& arch, std::uint64_t seed) {
    const std::vector<Shape> shapes = infer_shapes(arch);
    std::vector<ParamDesc> buf_descs;
    const std::vector<ParamDesc> descs = param_descs(arch, shapes, &buf_descs);

    Model m;
    m.arch = arch;
    m.init_seed = seed;
    Rng rng(seed);
    auto is_bias = [](const std::string& f) {
        return f == "b" || f == "beta" ||
               (f.size() >= 2 && f.compare(f.size() - 2, 2, ".b") == 0);
    };
    for (const ParamDesc& d : descs) {
        ParamTensor p;
        p.name = "layer" + std::to_string(d.layer) + "." + d.name;
        p.shape = d.shape;
        p.v.resize(shape_count(d.shape));
        const std::string field = d.name;
        if (field == "gamma") {
            std::fill(p.v.begin(), p.v.end(), 1.0);
        } else if (is_bias(field)) {
            std::fill(p.v.begin(), p.v.end(), 0.0);
        } else {
            // Weight tensors: fan-in is the product of all dims but the first.
            std::size_t fan_in = 1;
            for (std::size_t i = 1; i < d.shape.size(); ++i)
                fan_in *= static_cast<std::size_t>(d.shape[i]);
            const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (double& v : p.v) v = rng.uniform(-s, s);
        }
        m.params.push_back(std::move(p));
    }
    for (const ParamDesc& d : buf_descs) {
        ParamTensor p;
        p.name = "layer" + std::to_string(d.layer) + "." + d.name;
        p.shape = d.shape;
        p.v.assign(shape_count(d.shape),
                   std::string(d.name) == "running_var" ? 1.0 : 0.0);
        m.buffers.push_back(std::move(p));
    }
    return m;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

namespace {

struct LayerCache {
    Tensor y;
    std::vector<double> bn_mean, bn_var;
    Tensor bn_xhat;
    std::vector<int> argmax;
    Tensor inc_r2, inc_r3, inc_p4;  // inception intermediates (post-ReLU / pool)
    std::vector<int> inc_argmax;
};

}  // namespace

struct ForwardCache {
    Tensor input;
    std::vector<LayerCache> layers;
};

ForwardCache* new_cache() { return new ForwardCache(); }
void free_cache(ForwardCache* c) { delete c; }

namespace {

struct Runtime {
    const ArchSpec& arch;
    std::vector<Shape> shapes;
    std::vector<ParamDesc> descs;
    std::vector<int> offsets;       // first param index per layer
    std::vector<int> buf_offsets;   // first buffer index per layer

    explicit Runtime(const ArchSpec& a) : arch(a) {
        shapes = infer_shapes(a);
        std::vector<ParamDesc> buf_descs;
        descs = param_descs(a, shapes, &buf_descs);
        offsets = layer_param_offsets(a, descs);
        buf_offsets.assign(a.layers.size(), -1);
        for (int i = static_cast<int>(buf_descs.size()) - 1; i >= 0; --i)
            buf_offsets[buf_descs[i].layer] = i;
    }
};

void bn_forward(Model& model, int layer, const Runtime& rt, const Tensor& x,
                bool train, LayerCache& cache) {
    const int p0 = rt.offsets[layer];
    const int b0 = rt.buf_offsets[layer];
    const std::vector<double>& gamma = model.params[p0].v;
    const std::vector<double>& beta = model.params[p0 + 1].v;
    std::vector<double>& rmean = model.buffers[b0].v;
    std::vector<double>& rvar = model.buffers[b0 + 1].v;

    cache.y = Tensor(x.n, x.c, x.h, x.w);
    const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
    const double m = static_cast<double>(x.n) * plane;

    cache.bn_mean.assign(x.c, 0.0);
    cache.bn_var.assign(x.c, 0.0);
    if (train) cache.bn_xhat = Tensor(x.n, x.c, x.h, x.w);

    for (int c = 0; c < x.c; ++c) {
        double mean, var;
        if (train) {
            double sum = 0.0, sum2 = 0.0;
            for (int in = 0; in < x.n; ++in) {
                const double* xp = &x.v[x.idx(in, c, 0, 0)];
                for (std::size_t i = 0; i < plane; ++i) {
                    sum += xp[i];
                    sum2 += xp[i] * xp[i];
                }
            }
            mean = sum / m;
            var = std::max(0.0, sum2 / m - mean * mean);
            cache.bn_mean[c] = mean;
            cache.bn_var[c] = var;
            rmean[c] = (1.0 - kBnMomentum) * rmean[c] + kBnMomentum * mean;
            rvar[c] = (1.0 - kBnMomentum) * rvar[c] + kBnMomentum * var;
        } else {
            mean = rmean[c];
            var = rvar[c];
        }
        const double inv = 1.0 / std::sqrt(var + kBnEps);
        for (int in = 0; in < x.n; ++in) {
            const double* xp = &x.v[x.idx(in, c, 0, 0)];
            double* yp = &cache.y.v[cache.y.idx(in, c, 0, 0)];
            double* xh = train ? &cache.bn_xhat.v[cache.bn_xhat.idx(in, c, 0, 0)]
                               : nullptr;
            for (std::size_t i = 0; i < plane; ++i) {
                const double xhat = (xp[i] - mean) * inv;
                if (xh) xh[i] = xhat;
                yp[i] = gamma[c] * xhat + beta[c];
            }
        }
    }
}

void bn_backward(const Model& model, int layer, const Runtime& rt,
                 const LayerCache& cache, const Tensor& gy, Tensor& gx,
                 Gradients& grads) {
    const int p0 = rt.offsets[layer];
    const std::vector<double>& gamma = model.params[p0].v;
    std::vector<double>& ggamma = grads.g[p0];
    std::vector<double>& gbeta = grads.g[p0 + 1];

    const Tensor& xhat = cache.bn_xhat;
    const std::size_t plane = static_cast<std::size_t>(gy.h) * gy.w;
    const double m = static_cast<double>(gy.n) * plane;

    for (int c = 0; c < gy.c; ++c) {
        double sum_gy = 0.0, sum_gy_xhat = 0.0;
        for (int in = 0; in < gy.n; ++in) {
            const double* gp = &gy.v[gy.idx(in, c, 0, 0)];
            const double* xh = &xhat.v[xhat.idx(in, c, 0, 0)];
            for (std::size_t i = 0; i < plane; ++i) {
                sum_gy += gp[i];
                sum_gy_xhat += gp[i] * xh[i];
            }
        }
        ggamma[c] += sum_gy_xhat;
        gbeta[c] += sum_gy;
        const double inv = 1.0 / std::sqrt(cache.bn_var[c] + kBnEps);
        const double k = gamma[c] * inv;
        for (int in = 0; in < gy.n; ++in) {
            const double* gp = &gy.v[gy.idx(in, c, 0, 0)];
            const double* xh = &xhat.v[xhat.idx(in, c, 0, 0)];
            double* gxp = &gx.v[gx.idx(in, c, 0, 0)];
            for (std::size_t i = 0; i < plane; ++i)
                gxp[i] += k * (gp[i] - sum_gy / m - xh[i] * sum_gy_xhat / m);
        }
    }
}

void inception_fwd(Model& model, int layer, const Runtime& rt, const Tensor& x,
                   LayerCache& cache) {
    const InceptionSpec ic = std::get<InceptionSpec>(rt.arch.layers[layer]);
    const int br = inception_branch(ic);
    const int p0 = rt.offsets[layer];
    auto W = [&](int i) { return model.params[p0 + i].v.data(); };

    Tensor y1, y2, y3, y4, tmp;
    conv2d_fwd(x, W(0), W(1), br, 1, 1, y1);
    relu_fwd(y1, y1);

    conv2d_fwd(x, W(2), W(3), inception_reduce(ic), 1, 1, tmp);
    relu_fwd(tmp, cache.inc_r2);
    conv2d_fwd(cache.inc_r2, W(4), W(5), br, ic.k1h, ic.k1w, y2);
    relu_fwd(y2, y2);

    conv2d_fwd(x, W(6), W(7), inception_reduce(ic), 1, 1, tmp);
    relu_fwd(tmp, cache.inc_r3);
    conv2d_fwd(cache.inc_r3, W(8), W(9), br, ic.k2h, ic.k2w, y3);
    relu_fwd(y3, y3);

    maxpool3_fwd(x, cache.inc_p4, cache.inc_argmax);
    conv2d_fwd(cache.inc_p4, W(10), W(11), br, 1, 1, y4);
    relu_fwd(y4, y4);

    Tensor y12, y34;
    concat_fwd(y1, y2, y12);
    concat_fwd(y3, y4, y34);
    concat_fwd(y12, y34, cache.y);
}

void inception_bwd(const Model& model, int layer, const Runtime& rt, const Tensor& x,
                   const LayerCache& cache, const Tensor& gy, Tensor& gx,
                   Gradients& grads) {
    const InceptionSpec ic = std::get<InceptionSpec>(rt.arch.layers[layer]);
    const int br = inception_branch(ic);
    const int rd = inception_reduce(ic);
    const int p0 = rt.offsets[layer];
    auto W = [&](int i) { return model.params[p0 + i].v.data(); };
    auto G = [&](int i) { return grads.g[p0 + i].data(); };

    // Split the output gradient into the four branch slices, masked by the
    // branch ReLUs (branch outputs are slices of cache.y).
    auto branch_grad = [&](int b) {
        Tensor g(gy.n, br, gy.h, gy.w);
        for (int in = 0; in < gy.n; ++in)
            for (int c = 0; c < br; ++c)
                for (int iy = 0; iy < gy.h; ++iy)
                    for (int ix = 0; ix < gy.w; ++ix) {
                        const double yv = cache.y.at(in, b * br + c, iy, ix);
                        g.at(in, c, iy, ix) =
                            yv > 0.0 ? gy.at(in, b * br + c, iy, ix) : 0.0;
                    }
        return g;
    };

    // Branch 1: 1x1 conv on x.
    {
        const Tensor g1 = branch_grad(0);
        conv2d_bwd(x, W(0), br, 1, 1, g1, gx, G(0), G(1));
    }
    // Branch 2: 1x1 reduce (r2) then k1 conv.
    {
        const Tensor g2 = branch_grad(1);
        Tensor gr2(x.n, rd, x.h, x.w);
        conv2d_bwd(cache.inc_r2, W(4), br, ic.k1h, ic.k1w, g2, gr2, G(4), G(5));
        Tensor gr2m(x.n, rd, x.h, x.w);
        relu_bwd(cache.inc_r2, gr2, gr2m);
        conv2d_bwd(x, W(2), rd, 1, 1, gr2m, gx, G(2), G(3));
    }
    // Branch 3.
    {
        const Tensor g3 = branch_grad(2);
        Tensor gr3(x.n, rd, x.h, x.w);
        conv2d_bwd(cache.inc_r3, W(8), br, ic.k2h, ic.k2w, g3, gr3, G(8), G(9));
        Tensor gr3m(x.n, rd, x.h, x.w);
        relu_bwd(cache.inc_r3, gr3, gr3m);
        conv2d_bwd(x, W(6), rd, 1, 1, gr3m, gx, G(6), G(7));
    }
    // Branch 4: max-pool then 1x1 conv.
    {
        const Tensor g4 = branch_grad(3);
        Tensor gp4(x.n, x.c, x.h, x.w);
        conv2d_bwd(cache.inc_p4, W(10), br, 1, 1, g4, gp4, G(10), G(11));
        maxpool3_bwd(cache.inc_argmax, gp4, gx);
    }
}

Tensor run_forward(Model& model, const Runtime& rt, const Tensor& input, bool train,
                   ForwardCache& cache) {
    require(input.c == rt.arch.in_ch && input.h == rt.arch.in_h &&
                input.w == rt.arch.in_w,
            "forward: input shape mismatch");
    cache.input = input;
    cache.layers.assign(rt.arch.layers.size(), LayerCache{});

    const Tensor* cur = &cache.input;
    for (int l = 0; l < static_cast<int>(rt.arch.layers.size()); ++l) {
        LayerCache& lc = cache.layers[l];
        const LayerSpec& spec = rt.arch.layers[l];
        const int p0 = rt.offsets[l];
        if (const auto* cv = std::get_if<ConvSpec>(&spec)) {
            conv2d_fwd(*cur, model.params[p0].v.data(), model.params[p0 + 1].v.data(),
                       cv->out_ch, cv->kh, cv->kw, lc.y);
        } else if (const auto* dn = std::get_if<DenseSpec>(&spec)) {
            dense_fwd(*cur, model.params[p0].v.data(), model.params[p0 + 1].v.data(),
                      dn->out, lc.y);
        } else if (std::get_if<BatchNormSpec>(&spec)) {
            bn_forward(model, l, rt, *cur, train, lc);
        } else if (std::get_if<ReluSpec>(&spec)) {
            relu_fwd(*cur, lc.y);
        } else if (std::get_if<InceptionSpec>(&spec)) {
            inception_fwd(model, l, rt, *cur, lc);
        } else if (const auto* sk = std::get_if<SkipConcatSpec>(&spec)) {
            concat_fwd(*cur, cache.layers[sk->from].y, lc.y);
        } else if (const auto* ap = std::get_if<AdaptiveAvgPoolSpec>(&spec)) {
            adaptive_pool_fwd(*cur, ap->out_h, ap->out_w, lc.y);
        }
        cur = &lc.y;
    }

    // Reshape to the class grid.
    Tensor logits(cur->n, 1, rt.arch.class_rows, rt.arch.class_cols);
    logits.v = cur->v;
    return logits;
}

void run_backward(const Model& model, const Runtime& rt, const ForwardCache& cache,
                  const Tensor& grad_logits, Gradients& grads) {
    const int L = static_cast<int>(rt.arch.layers.size());
    std::vector<Tensor> gout(L);

    // Seed the last layer's gradient (reshape back from the class grid).
    const Tensor& last = cache.layers[L - 1].y;
    gout[L - 1] = Tensor(last.n, last.c, last.h, last.w);
    gout[L - 1].v = grad_logits.v;

    Tensor ginput(cache.input.n, cache.input.c, cache.input.h, cache.input.w);

    for (int l = L - 1; l >= 0; --l) {
        if (gout[l].v.empty()) continue;  // dead branch
        const Tensor& x = l == 0 ? cache.input : cache.layers[l - 1].y;
        Tensor& gx_prev = l == 0 ? ginput : gout[l - 1];
        if (gx_prev.v.empty())
            gx_prev = Tensor(x.n, x.c, x.h, x.w);

        const LayerCache& lc = cache.layers[l];
        const Tensor& gy = gout[l];
        const LayerSpec& spec = rt.arch.layers[l];
        const int p0 = rt.offsets[l];
        if (const auto* cv = std::get_if<ConvSpec>(&spec)) {
            conv2d_bwd(x, model.params[p0].v.data(), cv->out_ch, cv->kh, cv->kw, gy,
                       gx_prev, grads.g[p0].data(), grads.g[p0 + 1].data());
        } else if (const auto* dn = std::get_if<DenseSpec>(&spec)) {
            dense_bwd(x, model.params[p0].v.data(), dn->out, gy, gx_prev,
                      grads.g[p0].data(), grads.g[p0 + 1].data());
        } else if (std::get_if<BatchNormSpec>(&spec)) {
            bn_backward(model, l, rt, lc, gy, gx_prev, grads);
        } else if (std::get_if<ReluSpec>(&spec)) {
            relu_bwd(lc.y, gy, gx_prev);
        } else if (std::get_if<InceptionSpec>(&spec)) {
            inception_bwd(model, l, rt, x, lc, gy, gx_prev, grads);
        } else if (const auto* sk = std::get_if<SkipConcatSpec>(&spec)) {
            Tensor& gskip = gout[sk->from];
            if (gskip.v.empty()) {
                const Tensor& src = cache.layers[sk->from].y;
                gskip = Tensor(src.n, src.c, src.h, src.w);
            }
            concat_bwd(gy, x.c, gx_prev, gskip);
        } else if (const auto* ap = std::get_if<AdaptiveAvgPoolSpec>(&spec)) {
            adaptive_pool_bwd(x, ap->out_h, ap->out_w, gy, gx_prev);
        }
    }
}

}  // namespace

Tensor forward(Model& model, const Tensor& input, bool train, ForwardCache* cache) {
    const Runtime rt(model.arch);
    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    return run_forward(model, rt, input, train, c);
}

Tensor forward_infer(const Model& model, const Tensor& input) {
    Model& m = const_cast<Model&>(model);  // infer mode never mutates
    return forward(m, input, false, nullptr);
}

void backward(const Model& model, const ForwardCache& cache,
              const Tensor& grad_logits, Gradients& grads) {
    const Runtime rt(model.arch);
    if (grads.g.size() != model.params.size()) {
        grads.g.resize(model.params.size());
        for (std::size_t i = 0; i < model.params.size(); ++i)
            grads.g[i].assign(model.params[i].v.size(), 0.0);
    }
    run_backward(model, rt, cache, grad_logits, grads);
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

namespace {

// Column-wise softmax of one sample's logits, written into `prob`.
void column_softmax(const double* logits, int rows, int cols, double temperature,
                    double* prob) {
    for (int c = 0; c < cols; ++c) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int r = 0; r < rows; ++r) mx = std::max(mx, logits[r * cols + c]);
        double sum = 0.0;
        for (int r = 0; r < rows; ++r) {
            const double e = std::exp((logits[r * cols + c] - mx) / temperature);
            prob[r * cols + c] = e;
            sum += e;
        }
        for (int r = 0; r < rows; ++r) prob[r * cols + c] /= sum;
    }
}

}  // namespace

double ce_loss(const Tensor& logits, const std::vector<Assignment>& labels,
               Tensor* grad) {
    const int rows = logits.h, cols = logits.w;
    require(static_cast<int>(labels.size()) == logits.n, "ce_loss: batch mismatch");
    if (grad) *grad = Tensor(logits.n, 1, rows, cols);

    double total = 0.0;
    std::vector<double> prob(static_cast<std::size_t>(rows) * cols);
    for (int s = 0; s < logits.n; ++s) {
        const double* lp = logits.v.data() + static_cast<std::size_t>(s) * rows * cols;
        column_softmax(lp, rows, cols, 1.0, prob.data());
        require(static_cast<int>(labels[s].choice.size()) == cols,
                "ce_loss: label width mismatch");
        for (int c = 0; c < cols; ++c) {
            const int r = labels[s].choice[c];
            require(r >= 0 && r < rows, "ce_loss: class out of range");
            total -= std::log(std::max(prob[r * cols + c], 1e-300));
        }
        if (grad) {
            double* gp = grad->v.data() + static_cast<std::size_t>(s) * rows * cols;
            const double scale = 1.0 / (static_cast<double>(logits.n) * cols);
            for (int c = 0; c < cols; ++c)
                for (int r = 0; r < rows; ++r) {
                    const double onehot = labels[s].choice[c] == r ? 1.0 : 0.0;
                    gp[r * cols + c] = scale * (prob[r * cols + c] - onehot);
                }
        }
    }
    return total / (static_cast<double>(logits.n) * cols);
}

double kld_loss(const Tensor& student_logits, const Tensor& teacher_logits,
                double temperature, Tensor* grad) {
    require(student_logits.same_shape(teacher_logits), "kld_loss: shape mismatch");
    const int rows = student_logits.h, cols = student_logits.w;
    if (grad) *grad = Tensor(student_logits.n, 1, rows, cols);

    double total = 0.0;
    std::vector<double> ps(static_cast<std::size_t>(rows) * cols);
    std::vector<double> pt(ps.size());
    for (int s = 0; s < student_logits.n; ++s) {
        const std::size_t off = static_cast<std::size_t>(s) * rows * cols;
        column_softmax(student_logits.v.data() + off, rows, cols, temperature,
                       ps.data());
        column_softmax(teacher_logits.v.data() + off, rows, cols, temperature,
                       pt.data());
        for (std::size_t i = 0; i < ps.size(); ++i)
            if (pt[i] > 0.0)
                total += pt[i] * std::log(pt[i] / std::max(ps[i], 1e-300));
        if (grad) {
            const double scale =
                1.0 / (static_cast<double>(student_logits.n) * cols * temperature);
            for (std::size_t i = 0; i < ps.size(); ++i)
                grad->v[off + i] = scale * (ps[i] - pt[i]);
        }
    }
    return total / (static_cast<double>(student_logits.n) * cols);
}

double distill_loss(const Tensor& student_logits, const Tensor& teacher_logits,
                    const std::vector<Assignment>& labels, double lambda1,
                    double lambda2, double temperature, Tensor* grad) {
    require(lambda1 >= 0.0 && lambda2 >= 0.0 && lambda1 + lambda2 > 0.0,
            "distill_loss: bad weights");
    Tensor gce, gkld;
    const double ce = ce_loss(student_logits, labels, grad ? &gce : nullptr);
    const double kld = lambda2 > 0.0
                           ? kld_loss(student_logits, teacher_logits, temperature,
                                      grad ? &gkld : nullptr)
                           : 0.0;
    if (grad) {
        *grad = Tensor(student_logits.n, 1, student_logits.h, student_logits.w);
        for (std::size_t i = 0; i < grad->v.size(); ++i)
            grad->v[i] = lambda1 * gce.v[i] + (lambda2 > 0.0 ? lambda2 * gkld.v[i] : 0.0);
    }
    return lambda1 * ce + lambda2 * kld;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

AdamState init_adam(const Model& model) {
    AdamState st;
    st.m.resize(model.params.size());
    st.v.resize(model.params.size());
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        st.m[i].assign(model.params[i].v.size(), 0.0);
        st.v[i].assign(model.params[i].v.size(), 0.0);
    }
    return st;
}

void adam_step(Model& model, const Gradients& grads, AdamState& state, double lr,
               double beta1, double beta2, double eps) {
    ++state.t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        std::vector<double>& w = model.params[i].v;
        const std::vector<double>& g = grads.g[i];
        std::vector<double>& m = state.m[i];
        std::vector<double>& v = state.v[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
            v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
            w[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps);
        }
    }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

Tensor to_input_tensor(const InputMatrix& raw, const DatasetMeta& meta) {
    const InputMatrix norm = normalize(raw, meta);
    Tensor t(1, 1, norm.rows, 4);
    t.v = norm.v;
    return t;
}

namespace {

// Deterministic Fisher-Yates (std::shuffle is implementation-defined).
void shuffle_indices(std::vector<int>& idx, Rng& rng) {
    for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i) {
        const unsigned __int128 prod =
            static_cast<unsigned __int128>(rng.next_u64()) *
            static_cast<unsigned __int128>(i + 1);
        const int j = static_cast<int>(prod >> 64);
        std::swap(idx[i], idx[j]);
    }
}

// Labels as class-row assignments usable by the losses; flat-class models
// collapse the per-source label into one encoded class.
std::vector<Assignment> loss_labels(const std::vector<DatasetSample>& samples,
                                    const ArchSpec& arch, int k) {
    std::vector<Assignment> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        if (arch.flat_classes)
            out.push_back(Assignment{{encode_flat_class(s.label, k)}});
        else
            out.push_back(s.label);
    }
    return out;
}

Tensor stack_inputs(const std::vector<const InputMatrix*>& inputs,
                    const DatasetMeta& meta) {
    Tensor t(static_cast<int>(inputs.size()), 1, inputs[0]->rows, 4);
    for (std::size_t s = 0; s < inputs.size(); ++s) {
        const InputMatrix norm = normalize(*inputs[s], meta);
        std::copy(norm.v.begin(), norm.v.end(),
                  t.v.begin() + static_cast<std::ptrdiff_t>(s * norm.v.size()));
    }
    return t;
}

}  // namespace

TrainResult train(const ArchSpec& arch, const TrainData& data, const TrainConfig& cfg,
                  const std::vector<Tensor>* teacher_train_logits) {
    require(data.train && !data.train->empty(), "train: missing train split");
    require(data.val && !data.val->empty(), "train: missing val split");
    require(data.meta, "train: missing dataset meta");
    require(cfg.learning_rate > 0.0 && cfg.batch_size >= 1 && cfg.epochs >= 1,
            "train: bad config");
    require(cfg.lambda1 >= 0.0 && cfg.lambda2 >= 0.0 && cfg.lambda1 + cfg.lambda2 > 0.0,
            "train: bad loss weights");
    const bool distill = cfg.lambda2 > 0.0;
    require(!distill || (teacher_train_logits &&
                         teacher_train_logits->size() == data.train->size()),
            "train: teacher logits required for distillation");

    const DatasetMeta& meta = *data.meta;
    const int k = meta.k;
    const std::vector<Assignment> train_labels = loss_labels(*data.train, arch, k);
    const std::vector<Assignment> val_labels = loss_labels(*data.val, arch, k);

    TrainResult res;
    res.model = init_model(arch, cfg.seed);
    res.model.norm_mu = meta.feature_mu;
    res.model.norm_sigma = meta.feature_sigma;
    res.model.norm_value_count = meta.value_count;

    AdamState adam = init_adam(res.model);
    const int S = static_cast<int>(data.train->size());
    std::vector<int> order(S);
    std::iota(order.begin(), order.end(), 0);

    ForwardCache cache;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch) + 1));
        shuffle_indices(order, shuffle_rng);

        double epoch_loss = 0.0;
        for (int b0 = 0; b0 < S; b0 += cfg.batch_size) {
            const int bs = std::min(cfg.batch_size, S - b0);
            std::vector<const InputMatrix*> inputs(bs);
            std::vector<Assignment> labels(bs);
            for (int i = 0; i < bs; ++i) {
                const int s = order[b0 + i];
                inputs[i] = &(*data.train)[s].input;
                labels[i] = train_labels[s];
            }
            const Tensor x = stack_inputs(inputs, meta);
            const Tensor logits = forward(res.model, x, true, &cache);

            Tensor grad;
            double loss;
            if (distill) {
                Tensor teach(bs, 1, logits.h, logits.w);
                for (int i = 0; i < bs; ++i) {
                    const Tensor& t = (*teacher_train_logits)[order[b0 + i]];
                    std::copy(t.v.begin(), t.v.end(),
                              teach.v.begin() +
                                  static_cast<std::ptrdiff_t>(i * t.v.size()));
                }
                loss = distill_loss(logits, teach, labels, cfg.lambda1, cfg.lambda2,
                                    cfg.temperature, &grad);
            } else {
                loss = ce_loss(logits, labels, &grad);
                if (cfg.lambda1 != 1.0) {
                    loss *= cfg.lambda1;
                    for (double& g : grad.v) g *= cfg.lambda1;
                }
            }
            if (!std::isfinite(loss))
                throw std::runtime_error("train: non-finite loss at epoch " +
                                         std::to_string(epoch));
            epoch_loss += loss * bs;

            Gradients grads;
            backward(res.model, cache, grad, grads);
            adam_step(res.model, grads, adam, cfg.learning_rate);
        }
        res.train_loss.push_back(epoch_loss / S);

        // Validation CE in infer mode.
        double val = 0.0;
        const int VB = 256;
        const int V = static_cast<int>(data.val->size());
        for (int b0 = 0; b0 < V; b0 += VB) {
            const int bs = std::min(VB, V - b0);
            std::vector<const InputMatrix*> inputs(bs);
            std::vector<Assignment> labels(bs);
            for (int i = 0; i < bs; ++i) {
                inputs[i] = &(*data.val)[b0 + i].input;
                labels[i] = val_labels[b0 + i];
            }
            const Tensor x = stack_inputs(inputs, meta);
            const Tensor logits = forward(res.model, x, false, nullptr);
            val += ce_loss(logits, labels, nullptr) * bs;
        }
        res.val_loss.push_back(val / V);
    }
    return res;
}

// ---------------------------------------------------------------------------
// Prediction / evaluation
// ---------------------------------------------------------------------------

namespace {

DatasetMeta model_meta(const Model& model) {
    DatasetMeta meta;
    meta.feature_mu = model.norm_mu;
    meta.feature_sigma = model.norm_sigma;
    meta.value_count = model.norm_value_count;
    meta.rows = model.arch.in_h;
    return meta;
}

}  // namespace

Assignment predict(const Model& model, const InputMatrix& raw_input) {
    const Tensor x = to_input_tensor(raw_input, model_meta(model));
    const Tensor logits = forward_infer(model, x);
    const int rows = logits.h, cols = logits.w;

    if (model.arch.flat_classes) {
        int best = 0;
        for (int r = 1; r < rows; ++r)
            if (logits.v[r] > logits.v[best]) best = r;
        return decode_flat_class(best, model.arch.flat_n, model.arch.flat_k);
    }

    Assignment a;
    a.choice.resize(cols);
    for (int c = 0; c < cols; ++c) {
        int best = 0;
        for (int r = 1; r < rows; ++r)
            if (logits.v[static_cast<std::size_t>(r) * cols + c] >
                logits.v[static_cast<std::size_t>(best) * cols + c])
                best = r;
        a.choice[c] = best;
    }
    return a;
}

Tensor model_logits(const Model& model, const std::vector<InputMatrix>& raw_inputs) {
    require(!raw_inputs.empty(), "model_logits: empty batch");
    const DatasetMeta meta = model_meta(model);
    Tensor out(static_cast<int>(raw_inputs.size()), 1, model.arch.class_rows,
               model.arch.class_cols);
    const int B = 256;
    const int S = static_cast<int>(raw_inputs.size());
    for (int b0 = 0; b0 < S; b0 += B) {
        const int bs = std::min(B, S - b0);
        std::vector<const InputMatrix*> inputs(bs);
        for (int i = 0; i < bs; ++i) inputs[i] = &raw_inputs[b0 + i];
        const Tensor x = stack_inputs(inputs, meta);
        const Tensor logits = forward_infer(model, x);
        std::copy(logits.v.begin(), logits.v.end(),
                  out.v.begin() + static_cast<std::ptrdiff_t>(
                                      static_cast<std::size_t>(b0) * logits.per_sample()));
    }
    return out;
}

double evaluate_ce(const Model& model, const std::vector<DatasetSample>& samples,
                   const DatasetMeta& meta) {
    require(!samples.empty(), "evaluate_ce: empty sample set");
    std::vector<InputMatrix> inputs;
    inputs.reserve(samples.size());
    for (const auto& s : samples) inputs.push_back(s.input);
    const Tensor logits = model_logits(model, inputs);
    const std::vector<Assignment> labels = loss_labels(samples, model.arch, meta.k);
    return ce_loss(logits, labels, nullptr);
}

// ---------------------------------------------------------------------------
// Architectures
// ---------------------------------------------------------------------------

namespace {

std::pair<int, int> sc_net_kernel(int n) {
    switch (n) {
        case 1: return {2, 2};
        case 2: return {3, 2};
        case 3: return {3, 3};
        case 4: return {4, 4};
        case 5: return {5, 4};
        default: throw std::invalid_argument("sc-net: unsupported source count");
    }
}

std::pair<int, int> skin_net_kernel(int n) {
    switch (n) {
        case 1: return {2, 2};
        case 2: return {3, 2};
        case 3: return {3, 3};
        case 4: return {4, 4};
        case 5: return {5, 5};
        default: throw std::invalid_argument("skin-net: unsupported source count");
    }
}

int input_rows(int n, int k) { return (encoded_value_count(n, k) + 3) / 4; }

}  // namespace

ArchSpec make_conv_stack(int n, int k, const std::vector<int>& nodes,
                         std::pair<int, int> mid_kernel, const std::string& name) {
    require(n >= 1 && k >= 0, "make_conv_stack: bad network size");
    require(nodes.size() >= 2, "make_conv_stack: need stem and head nodes");
    for (int m : nodes) require(m > 0, "make_conv_stack: node counts must be positive");

    ArchSpec a;
    a.name = name;
    a.in_ch = 1;
    a.in_h = input_rows(n, k);
    a.in_w = 4;
    a.class_rows = k + 1;
    a.class_cols = n;

    a.layers.push_back(ConvSpec{nodes.front(), 4, 4});
    a.layers.push_back(BatchNormSpec{});
    a.layers.push_back(ReluSpec{});
    const int stem_out = 2;
    for (std::size_t i = 1; i + 1 < nodes.size(); ++i) {
        a.layers.push_back(ConvSpec{nodes[i], mid_kernel.first, mid_kernel.second});
        a.layers.push_back(BatchNormSpec{});
        a.layers.push_back(ReluSpec{});
    }
    a.layers.push_back(ConvSpec{nodes.back(), 1, 1});
    a.layers.push_back(BatchNormSpec{});
    a.layers.push_back(ReluSpec{});
    a.layers.push_back(SkipConcatSpec{stem_out});
    a.layers.push_back(AdaptiveAvgPoolSpec{k + 1, n});
    return a;
}

ArchSpec make_sc_net(int n, int k) {
    require(k == 2, "sc-net: configured for two-relay networks");
    ArchSpec a = make_conv_stack(n, k, {16, 64, 64, 32, 32, 16, 10},
                                 sc_net_kernel(n), "sc-net");
    return a;
}

ArchSpec make_skin_net(int n, int k) {
    require(k == 2, "skin-net: configured for two-relay networks");
    const auto [kh, kw] = skin_net_kernel(n);

    ArchSpec a;
    a.name = "skin-net";
    a.in_ch = 1;
    a.in_h = input_rows(n, k);
    a.in_w = 4;
    a.class_rows = k + 1;
    a.class_cols = n;

    a.layers.push_back(ConvSpec{32, 4, 4});
    a.layers.push_back(BatchNormSpec{});
    a.layers.push_back(ReluSpec{});
    for (int m : {64, 64, 32, 24, 16}) {
        a.layers.push_back(InceptionSpec{m, 4, 4, kh, kw});
        a.layers.push_back(BatchNormSpec{});
    }
    a.layers.push_back(ConvSpec{10, 1, 1});
    a.layers.push_back(BatchNormSpec{});
    a.layers.push_back(ReluSpec{});
    a.layers.push_back(SkipConcatSpec{2});
    a.layers.push_back(AdaptiveAvgPoolSpec{k + 1, n});
    return a;
}

ArchSpec make_rel_net(int n, int k) {
    double classes = std::pow(static_cast<double>(k + 1), n);
    require(classes <= 4096.0, "rel-net: class count too large");

    ArchSpec a;
    a.name = "rel-net";
    a.in_ch = 1;
    a.in_h = input_rows(n, k);
    a.in_w = 4;
    a.class_rows = static_cast<int>(classes);
    a.class_cols = 1;
    a.flat_classes = true;
    a.flat_n = n;
    a.flat_k = k;

    a.layers.push_back(DenseSpec{128});
    a.layers.push_back(ReluSpec{});
    a.layers.push_back(DenseSpec{128});
    a.layers.push_back(ReluSpec{});
    a.layers.push_back(DenseSpec{static_cast<int>(classes)});
    return a;
}

ArchSpec make_student(int n, int k, const std::vector<int>& nodes) {
    return make_conv_stack(n, k, nodes, {2, 2}, "stu-sc-net");
}

Assignment decode_flat_class(int cls, int n, int k) {
    Assignment a;
    a.choice.resize(n);
    for (int i = 0; i < n; ++i) {
        a.choice[i] = cls % (k + 1);
        cls /= (k + 1);
    }
    return a;
}

int encode_flat_class(const Assignment& a, int k) {
    int cls = 0;
    for (int i = static_cast<int>(a.choice.size()) - 1; i >= 0; --i)
        cls = cls * (k + 1) + a.choice[i];
    return cls;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

const char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string b64_encode(const std::vector<double>& v) {
    const unsigned char* data = reinterpret_cast<const unsigned char*>(v.data());
    const std::size_t len = v.size() * sizeof(double);
    std::string out;
    out.reserve((len + 2) / 3 * 4);
    for (std::size_t i = 0; i < len; i += 3) {
        unsigned int b = data[i] << 16;
        if (i + 1 < len) b |= data[i + 1] << 8;
        if (i + 2 < len) b |= data[i + 2];
        out.push_back(kB64[(b >> 18) & 63]);
        out.push_back(kB64[(b >> 12) & 63]);
        out.push_back(i + 1 < len ? kB64[(b >> 6) & 63] : '=');
        out.push_back(i + 2 < len ? kB64[b & 63] : '=');
    }
    return out;
}

std::vector<double> b64_decode(const std::string& s) {
    static int table[256];
    static bool init = [] {
        std::fill(std::begin(table), std::end(table), -1);
        for (int i = 0; i < 64; ++i) table[static_cast<unsigned char>(kB64[i])] = i;
        return true;
    }();
    (void)init;
    std::vector<unsigned char> bytes;
    bytes.reserve(s.size() / 4 * 3);
    unsigned int buf = 0;
    int bits = 0;
    for (char ch : s) {
        if (ch == '=') break;
        const int v = table[static_cast<unsigned char>(ch)];
        if (v < 0) continue;
        buf = (buf << 6) | static_cast<unsigned int>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            bytes.push_back(static_cast<unsigned char>((buf >> bits) & 0xff));
        }
    }
    require(bytes.size() % sizeof(double) == 0, "b64_decode: bad payload size");
    std::vector<double> out(bytes.size() / sizeof(double));
    std::memcpy(out.data(), bytes.data(), bytes.size());
    return out;
}

json layer_to_json(const LayerSpec& spec) {
    if (const auto* cv = std::get_if<ConvSpec>(&spec))
        return json{{"type", "conv"}, {"out", cv->out_ch}, {"kh", cv->kh}, {"kw", cv->kw}};
    if (const auto* ic = std::get_if<InceptionSpec>(&spec))
        return json{{"type", "inception"}, {"out", ic->out_ch}, {"k1h", ic->k1h},
                    {"k1w", ic->k1w}, {"k2h", ic->k2h}, {"k2w", ic->k2w}};
    if (const auto* dn = std::get_if<DenseSpec>(&spec))
        return json{{"type", "dense"}, {"out", dn->out}};
    if (std::get_if<BatchNormSpec>(&spec)) return json{{"type", "batchnorm"}};
    if (std::get_if<ReluSpec>(&spec)) return json{{"type", "relu"}};
    if (const auto* sk = std::get_if<SkipConcatSpec>(&spec))
        return json{{"type", "skip_concat"}, {"from", sk->from}};
    const auto* ap = std::get_if<AdaptiveAvgPoolSpec>(&spec);
    return json{{"type", "adaptive_avg_pool"}, {"out_h", ap->out_h}, {"out_w", ap->out_w}};
}

LayerSpec layer_from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "conv")
        return ConvSpec{j.at("out").get<int>(), j.at("kh").get<int>(),
                        j.at("kw").get<int>()};
    if (type == "inception")
        return InceptionSpec{j.at("out").get<int>(), j.at("k1h").get<int>(),
                             j.at("k1w").get<int>(), j.at("k2h").get<int>(),
                             j.at("k2w").get<int>()};
    if (type == "dense") return DenseSpec{j.at("out").get<int>()};
    if (type == "batchnorm") return BatchNormSpec{};
    if (type == "relu") return ReluSpec{};
    if (type == "skip_concat") return SkipConcatSpec{j.at("from").get<int>()};
    if (type == "adaptive_avg_pool")
        return AdaptiveAvgPoolSpec{j.at("out_h").get<int>(), j.at("out_w").get<int>()};
    throw std::runtime_error("unknown layer type: " + type);
}

json arch_to_json(const ArchSpec& a) {
    json layers = json::array();
    for (const auto& l : a.layers) layers.push_back(layer_to_json(l));
    return json{{"name", a.name},       {"in_ch", a.in_ch},
                {"in_h", a.in_h},       {"in_w", a.in_w},
                {"layers", layers},     {"class_rows", a.class_rows},
                {"class_cols", a.class_cols}, {"flat_classes", a.flat_classes},
                {"flat_n", a.flat_n},   {"flat_k", a.flat_k}};
}

ArchSpec arch_from_json(const json& j) {
    ArchSpec a;
    a.name = j.at("name").get<std::string>();
    a.in_ch = j.at("in_ch").get<int>();
    a.in_h = j.at("in_h").get<int>();
    a.in_w = j.at("in_w").get<int>();
    a.class_rows = j.at("class_rows").get<int>();
    a.class_cols = j.at("class_cols").get<int>();
    a.flat_classes = j.at("flat_classes").get<bool>();
    a.flat_n = j.at("flat_n").get<int>();
    a.flat_k = j.at("flat_k").get<int>();
    for (const auto& l : j.at("layers")) a.layers.push_back(layer_from_json(l));
    return a;
}

json tensors_to_json(const std::vector<ParamTensor>& ts) {
    json out = json::array();
    for (const auto& t : ts)
        out.push_back(json{{"name", t.name}, {"shape", t.shape},
                           {"data", b64_encode(t.v)}});
    return out;
}

std::vector<ParamTensor> tensors_from_json(const json& j) {
    std::vector<ParamTensor> out;
    for (const auto& t : j) {
        ParamTensor p;
        p.name = t.at("name").get<std::string>();
        p.shape = t.at("shape").get<std::vector<int>>();
        p.v = b64_decode(t.at("data").get<std::string>());
        require(p.v.size() == shape_count(p.shape), "model load: shape mismatch");
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace

void save_model(const Model& model, const std::string& path) {
    json j{{"arch", arch_to_json(model.arch)},
           {"init_seed", model.init_seed},
           {"norm", {{"mu", model.norm_mu},
                     {"sigma", model.norm_sigma},
                     {"value_count", model.norm_value_count}}},
           {"params", tensors_to_json(model.params)},
           {"buffers", tensors_to_json(model.buffers)}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << j.dump() << "\n";
}

Model load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    json j;
    in >> j;
    Model m;
    m.arch = arch_from_json(j.at("arch"));
    m.init_seed = j.at("init_seed").get<std::uint64_t>();
    m.norm_mu = j.at("norm").at("mu").get<std::vector<double>>();
    m.norm_sigma = j.at("norm").at("sigma").get<std::vector<double>>();
    m.norm_value_count = j.at("norm").at("value_count").get<int>();
    m.params = tensors_from_json(j.at("params"));
    m.buffers = tensors_from_json(j.at("buffers"));
    return m;
}

}  // namespace wpcn
