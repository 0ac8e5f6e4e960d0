#pragma once

#include <cstddef>
#include <vector>

namespace mebm {

// Dense row-major matrix of doubles. Rows index channels/features, columns
// index time frames throughout this codebase.
struct Mat {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), v(r * c, fill) {}

    double& operator()(size_t r, size_t c) { return v[r * cols + c]; }
    double operator()(size_t r, size_t c) const { return v[r * cols + c]; }

    double* row(size_t r) { return v.data() + r * cols; }
    const double* row(size_t r) const { return v.data() + r * cols; }

    bool empty() const { return v.empty(); }
};

}  // namespace mebm
