#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace loopdet {

using FrameId = std::uint32_t;

/// One whole-image feature vector with its cached Euclidean norm.
struct GlobalDescriptor {
    std::vector<float> values;
    double norm = 0.0;
};

/// One keypoint-level feature vector plus its pixel location.
struct LocalDescriptor {
    std::vector<float> values;
    float x = 0.0f;
    float y = 0.0f;
};

inline double l2_norm(std::span<const float> v) {
    Eigen::Map<const Eigen::VectorXf> m(v.data(), static_cast<Eigen::Index>(v.size()));
    return std::sqrt(m.cast<double>().dot(m.cast<double>()));
}

inline GlobalDescriptor make_global(std::vector<float> values) {
    GlobalDescriptor g{std::move(values), 0.0};
    g.norm = l2_norm(g.values);
    return g;
}

/// Normalized scalar product of two feature vectors, in [-1, 1].
/// Accumulates in double so that self-similarity lands within 1e-9 of 1.
inline double cosine_similarity(const GlobalDescriptor& a, const GlobalDescriptor& b) {
    if (a.values.size() != b.values.size())
        throw std::invalid_argument("cosine_similarity: dimension mismatch (" +
                                    std::to_string(a.values.size()) + " vs " +
                                    std::to_string(b.values.size()) + ")");
    if (!(a.norm > 0.0) || !(b.norm > 0.0))
        throw std::invalid_argument("cosine_similarity: zero-norm descriptor");
    Eigen::Map<const Eigen::VectorXf> ma(a.values.data(),
                                         static_cast<Eigen::Index>(a.values.size()));
    Eigen::Map<const Eigen::VectorXf> mb(b.values.data(),
                                         static_cast<Eigen::Index>(b.values.size()));
    const double dot = ma.cast<double>().dot(mb.cast<double>());
    double s = dot / (a.norm * b.norm);
    if (s > 1.0) s = 1.0;
    if (s < -1.0) s = -1.0;
    return s;
}

} // namespace loopdet
