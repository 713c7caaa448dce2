#pragma once

#include <Eigen/Core>

#include <stdexcept>

namespace loopdet {

/// Weights of a convolution (flattened to a matrix acting on unrolled k*k
/// input patches) together with the affine layer that follows it.
struct ConvFoldInput {
    Eigen::MatrixXd w_conv; // C x (C_prev * k^2)
    Eigen::VectorXd b_conv; // C
    Eigen::MatrixXd w_bn;   // C x C
    Eigen::VectorXd b_bn;   // C
};

struct FoldedConv {
    Eigen::MatrixXd w;
    Eigen::VectorXd b;
};

/// Collapses an affine (batch-norm style) layer into the preceding
/// convolution: w = w_bn * w_conv, b = w_bn * b_conv + b_bn, so that
/// w * f + b == w_bn * (w_conv * f + b_conv) + b_bn for every patch f.
inline FoldedConv fold_batchnorm(const ConvFoldInput& in) {
    const auto c = in.w_conv.rows();
    if (in.b_conv.size() != c || in.w_bn.rows() != c || in.w_bn.cols() != c ||
        in.b_bn.size() != c)
        throw std::invalid_argument("fold_batchnorm: inconsistent dimensions");
    if (!in.w_conv.allFinite() || !in.b_conv.allFinite() || !in.w_bn.allFinite() ||
        !in.b_bn.allFinite())
        throw std::invalid_argument("fold_batchnorm: non-finite input");
    FoldedConv out;
    out.w = in.w_bn * in.w_conv;
    out.b = in.w_bn * in.b_conv + in.b_bn;
    return out;
}

} // namespace loopdet
