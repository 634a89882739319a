#pragma once

#include <cstddef>
#include <vector>

#include "wpcn/common.hpp"

namespace wpcn {

// Dense batch tensor, layout (n, c, h, w) row-major.
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_),
          v(static_cast<std::size_t>(n_) * c_ * h_ * w_, 0.0) {}

    std::size_t size() const { return v.size(); }
    std::size_t per_sample() const { return static_cast<std::size_t>(c) * h * w; }

    std::size_t idx(int in, int ic, int iy, int ix) const {
        return ((static_cast<std::size_t>(in) * c + ic) * h + iy) * w + ix;
    }
    double& at(int in, int ic, int iy, int ix) { return v[idx(in, ic, iy, ix)]; }
    double at(int in, int ic, int iy, int ix) const { return v[idx(in, ic, iy, ix)]; }

    bool same_shape(const Tensor& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
};

}  // namespace wpcn
