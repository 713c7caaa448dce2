#pragma once

#include "loopdet/descriptor.hpp"
#include "loopdet/hashing.hpp"

#include <cmath>
#include <cstdint>
#include <deque>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace loopdet {

/// One parsed per-frame record, before it is admitted to the store.
struct IngestRecord {
    double timestamp = 0.0;
    std::vector<float> global;
    std::vector<LocalDescriptor> locals;
};

// One time step of the stream. `codes` and `bucket_keys` are filled by the
// hashing stage (one code and `tables` keys per local descriptor); after that
// the frame is published and treated as immutable.
struct Frame {
    FrameId id = 0;
    double timestamp = 0.0;
    GlobalDescriptor global;
    std::vector<LocalDescriptor> locals;
    std::vector<BinaryCode> codes;
    std::vector<std::uint32_t> bucket_keys; // locals.size() * tables, table-major per local

    bool hashed() const { return codes.size() == locals.size(); }
};

// Append-only archive of frames. Ids are dense 0,1,2,... in arrival order.
// Single writer; frames already appended never change, so readers may hold
// references across later appends (std::deque keeps them stable).
class FrameStore {
public:
    FrameStore(int global_dim, int local_dim)
        : global_dim_(global_dim), local_dim_(local_dim) {
        if (global_dim < 1 || local_dim < 1)
            throw std::invalid_argument("FrameStore: dimensions must be positive");
    }

    int global_dim() const { return global_dim_; }
    int local_dim() const { return local_dim_; }
    std::size_t size() const { return frames_.size(); }
    bool empty() const { return frames_.empty(); }

    const Frame& frame(FrameId id) const { return frames_.at(id); }

    Frame& ingest(IngestRecord rec) {
        const std::string at = " (frame index " + std::to_string(frames_.size()) + ")";
        if (rec.global.size() != static_cast<std::size_t>(global_dim_))
            throw std::invalid_argument("ingest: global dimension mismatch, got " +
                                        std::to_string(rec.global.size()) + " expected " +
                                        std::to_string(global_dim_) + at);
        for (const auto& l : rec.locals) {
            if (l.values.size() != static_cast<std::size_t>(local_dim_))
                throw std::invalid_argument("ingest: local dimension mismatch" + at);
            if (!std::isfinite(l.x) || !std::isfinite(l.y) || l.x < 0.0f || l.y < 0.0f)
                throw std::invalid_argument("ingest: bad keypoint coordinates" + at);
        }
        for (float v : rec.global)
            if (!std::isfinite(v))
                throw std::invalid_argument("ingest: non-finite global value" + at);

        Frame f;
        f.id = static_cast<FrameId>(frames_.size());
        f.timestamp = rec.timestamp;
        f.global = make_global(std::move(rec.global));
        if (!(f.global.norm > 0.0))
            throw std::invalid_argument("ingest: zero global vector" + at);
        f.locals = std::move(rec.locals);
        frames_.push_back(std::move(f));
        return frames_.back();
    }

private:
    int global_dim_;
    int local_dim_;
    std::deque<Frame> frames_;
};

/// Fills a frame's binary codes and coarse bucket keys from its locals.
inline void hash_frame(Frame& frame, const HashFamily& family,
                       std::span<const float> center = {}) {
    frame.codes.clear();
    frame.bucket_keys.clear();
    frame.codes.reserve(frame.locals.size());
    frame.bucket_keys.reserve(frame.locals.size() * family.tables());
    for (const auto& l : frame.locals) {
        frame.codes.push_back(family.encode(l.values, center));
        for (int t = 0; t < family.tables(); ++t)
            frame.bucket_keys.push_back(family.bucket_key(l.values, t, center));
    }
}

} // namespace loopdet
