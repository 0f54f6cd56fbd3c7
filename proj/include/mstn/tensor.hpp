#pragma once

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "mstn/common.hpp"

namespace mstn {

// Dense double-precision arrays. Rank-1 values are 1xN rows, per-head rank-3
// data is stored head-blocked along columns (head h owns columns
// [h*Dh, (h+1)*Dh)).
using RealArray = Eigen::MatrixXd;

inline void check_finite(const RealArray& a, const std::string& context) {
    if (!a.allFinite()) throw DivergedLoss("non-finite values in " + context);
}

// Row-wise masked softmax. mask(i, j) == true means position i may attend to
// position j; masked entries are exactly zero and each row is normalized over
// its unmasked entries (stabilized by subtracting the row max).
inline RealArray softmax_rows(const RealArray& m,
                              const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>& mask) {
    if (m.rows() != mask.rows() || m.cols() != mask.cols()) {
        throw ShapeMismatch("softmax_rows: mask shape does not match input");
    }
    RealArray out = RealArray::Zero(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (mask(i, j) && m(i, j) > mx) mx = m(i, j);
        }
        if (!std::isfinite(mx)) continue;  // fully masked row stays zero
        double z = 0.0;
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (mask(i, j)) {
                out(i, j) = std::exp(m(i, j) - mx);
                z += out(i, j);
            }
        }
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (mask(i, j)) out(i, j) /= z;
        }
    }
    return out;
}

inline Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> causal_mask(Eigen::Index n) {
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) mask(i, j) = j <= i;
    }
    return mask;
}

}  // namespace mstn
