#pragma once

#include "loopdet/rng.hpp"

#include <Eigen/Core>

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <vector>

namespace loopdet {

// Packed binary descriptor code. Bit s lives in bytes[s >> 3] at position
// (s & 7), low bit first, so serialized codes compare equal across platforms.
struct BinaryCode {
    std::vector<std::uint8_t> bytes;
    int bits = 0;

    bool bit(int s) const { return (bytes[s >> 3] >> (s & 7)) & 1u; }
    void set_bit(int s) { bytes[s >> 3] |= std::uint8_t(1u << (s & 7)); }
};

/// Population count of the XOR of two equal-length codes.
inline int hamming(const BinaryCode& a, const BinaryCode& b) {
    if (a.bits != b.bits || a.bytes.size() != b.bytes.size())
        throw std::invalid_argument("hamming: code length mismatch");
    int dist = 0;
    std::size_t i = 0;
    const std::size_t n = a.bytes.size();
    for (; i + 8 <= n; i += 8) {
        std::uint64_t wa, wb;
        std::memcpy(&wa, a.bytes.data() + i, 8);
        std::memcpy(&wb, b.bytes.data() + i, 8);
        dist += std::popcount(wa ^ wb);
    }
    for (; i < n; ++i)
        dist += std::popcount(static_cast<unsigned>(a.bytes[i] ^ b.bytes[i]));
    return dist;
}

// Seeded random-hyperplane hash family. The first `fine_bits` hyperplanes
// produce the code used for Hamming ranking; the remaining tables*bucket_bits
// hyperplanes produce the coarse bucket keys used for shortlist lookup.
// Sign tests are taken against (descriptor - center); the center defaults to
// zero and is supplied by the caller so the family itself stays immutable.
class HashFamily {
public:
    HashFamily(int dim, int fine_bits, int tables, int bucket_bits, std::uint64_t seed)
        : dim_(dim), fine_bits_(fine_bits), tables_(tables), bucket_bits_(bucket_bits),
          seed_(seed) {
        if (dim < 1) throw std::invalid_argument("HashFamily: dim must be positive");
        if (fine_bits < 1 || fine_bits % 8 != 0)
            throw std::invalid_argument("HashFamily: fine bits must be a positive multiple of 8");
        if (tables < 1 || bucket_bits < 1 || bucket_bits > 24)
            throw std::invalid_argument("HashFamily: bad coarse table configuration");
        const int rows = fine_bits + tables * bucket_bits;
        projections_.resize(static_cast<std::size_t>(rows) * dim);
        Rng rng(seed);
        for (int r = 0; r < rows; ++r) {
            float* row = projections_.data() + static_cast<std::size_t>(r) * dim;
            double norm2 = 0.0;
            do {
                norm2 = 0.0;
                for (int j = 0; j < dim; ++j) {
                    row[j] = static_cast<float>(rng.normal());
                    norm2 += double(row[j]) * row[j];
                }
            } while (!(norm2 > 0.0));
        }
    }

    // Test-only: family from explicit hyperplanes, row-major (rows x dim).
    HashFamily(int dim, int fine_bits, int tables, int bucket_bits,
               std::vector<float> projections)
        : dim_(dim), fine_bits_(fine_bits), tables_(tables), bucket_bits_(bucket_bits),
          seed_(0), projections_(std::move(projections)) {
        const std::size_t rows = static_cast<std::size_t>(fine_bits) + std::size_t(tables) * bucket_bits;
        if (projections_.size() != rows * dim)
            throw std::invalid_argument("HashFamily: projection matrix size mismatch");
    }

    int dim() const { return dim_; }
    int fine_bits() const { return fine_bits_; }
    int tables() const { return tables_; }
    int bucket_bits() const { return bucket_bits_; }
    std::uint64_t seed() const { return seed_; }
    std::size_t bucket_count() const { return std::size_t(1) << bucket_bits_; }
    std::span<const float> projection(int row) const {
        return {projections_.data() + static_cast<std::size_t>(row) * dim_,
                static_cast<std::size_t>(dim_)};
    }

    BinaryCode encode(std::span<const float> desc, std::span<const float> center = {}) const {
        check_desc(desc, center);
        BinaryCode code;
        code.bits = fine_bits_;
        code.bytes.assign(static_cast<std::size_t>(fine_bits_) / 8, 0);
        for (int s = 0; s < fine_bits_; ++s)
            if (sign_test(s, desc, center)) code.set_bit(s);
        return code;
    }

    /// Coarse key of table `l`: bucket_bits sign tests packed low bit first.
    std::uint32_t bucket_key(std::span<const float> desc, int table,
                             std::span<const float> center = {}) const {
        if (table < 0 || table >= tables_)
            throw std::out_of_range("bucket_key: table index out of range");
        check_desc(desc, center);
        std::uint32_t key = 0;
        const int base = fine_bits_ + table * bucket_bits_;
        for (int j = 0; j < bucket_bits_; ++j)
            if (sign_test(base + j, desc, center)) key |= (1u << j);
        return key;
    }

private:
    void check_desc(std::span<const float> desc, std::span<const float> center) const {
        if (desc.size() != static_cast<std::size_t>(dim_))
            throw std::invalid_argument("HashFamily: descriptor dimension mismatch");
        if (!center.empty() && center.size() != static_cast<std::size_t>(dim_))
            throw std::invalid_argument("HashFamily: center dimension mismatch");
    }

    bool sign_test(int row, std::span<const float> desc, std::span<const float> center) const {
        const float* p = projections_.data() + static_cast<std::size_t>(row) * dim_;
        Eigen::Map<const Eigen::VectorXf> mp(p, dim_);
        Eigen::Map<const Eigen::VectorXf> md(desc.data(), dim_);
        float dot = mp.dot(md);
        if (!center.empty()) {
            Eigen::Map<const Eigen::VectorXf> mc(center.data(), dim_);
            dot -= mp.dot(mc);
        }
        return dot >= 0.0f;
    }

    int dim_;
    int fine_bits_;
    int tables_;
    int bucket_bits_;
    std::uint64_t seed_;
    std::vector<float> projections_;
};

// Running mean of the first `limit` descriptors seen on a stream. Once the
// limit is reached the estimate never moves again, so codes stay reproducible
// no matter how long the stream runs.
class CenterEstimator {
public:
    explicit CenterEstimator(int dim, std::size_t limit = 10000)
        : sum_(dim, 0.0), mean_(dim, 0.0f), limit_(limit) {}

    void observe(std::span<const float> desc) {
        if (frozen()) return;
        if (desc.size() != sum_.size())
            throw std::invalid_argument("CenterEstimator: dimension mismatch");
        for (std::size_t i = 0; i < sum_.size(); ++i) sum_[i] += desc[i];
        ++count_;
        for (std::size_t i = 0; i < sum_.size(); ++i)
            mean_[i] = static_cast<float>(sum_[i] / double(count_));
    }

    bool frozen() const { return count_ >= limit_; }
    std::size_t count() const { return count_; }
    /// Current estimate; all zeros until the first observation.
    std::span<const float> center() const { return {mean_.data(), mean_.size()}; }

private:
    std::vector<double> sum_;
    std::vector<float> mean_;
    std::size_t count_ = 0;
    std::size_t limit_;
};

} // namespace loopdet
