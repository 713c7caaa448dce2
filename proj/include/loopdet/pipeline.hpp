#pragma once

#include "loopdet/frame.hpp"
#include "loopdet/geometry.hpp"
#include "loopdet/hashing.hpp"
#include "loopdet/hnsw.hpp"
#include "loopdet/matcher.hpp"
#include "loopdet/rng.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace loopdet {

struct PipelineConfig {
    double psi = 40.0;           // exclusion horizon, seconds
    double fps = 1.0;            // stream rate, frames per second
    int top_n = 1;               // retrieved candidates verified per frame
    int beta = 2;                // consecutive agreeing frames required to emit
    int consistency_window = 10; // max id gap between agreeing candidates
    double epsilon = 0.7;        // binary ratio-test threshold
    HnswParams hnsw;
    RansacParams ransac;
    int hash_fine_bits = 256;
    int hash_tables = 6;
    int hash_bucket_bits = 8;
    std::uint64_t hash_seed = 0x5a17b0cULL;
    std::size_t center_warmup = 10000; // locals averaged before the center freezes
    std::optional<double> min_similarity; // optional retrieval floor, off by default

    void validate() const {
        if (!(psi * fps >= 1.0))
            throw std::invalid_argument("PipelineConfig: psi * fps must be >= 1");
        if (top_n < 1) throw std::invalid_argument("PipelineConfig: top_n must be >= 1");
        if (beta < 1) throw std::invalid_argument("PipelineConfig: beta must be >= 1");
        if (consistency_window < 0)
            throw std::invalid_argument("PipelineConfig: consistency_window must be >= 0");
        if (!(epsilon > 0.0 && epsilon < 1.0))
            throw std::invalid_argument("PipelineConfig: epsilon must lie in (0,1)");
        hnsw.validate();
        ransac.validate();
    }

    /// FIFO capacity: psi * fps rounded to nearest. A frame becomes
    /// searchable only after leaving the FIFO, so the gap between a query
    /// and any returned id is at least capacity + 1 frames, which stays
    /// at or above ceil(psi * fps) for every fractional product.
    std::size_t window_capacity() const {
        return static_cast<std::size_t>(std::llround(psi * fps));
    }
};

struct LoopDetection {
    FrameId query_id = 0;
    FrameId match_id = 0;
    double similarity = 0.0;
    int inlier_count = 0;
    FundamentalMatrix model;
};

// One retrieval candidate put through matching + verification; kept as an
// audit trail so tests can assert ordering and short-circuiting.
struct VerifyAttempt {
    FrameId query_id = 0;
    FrameId candidate_id = 0;
    double similarity = 0.0;
    std::size_t match_count = 0;
    int inlier_count = 0;
    bool accepted = false;
};

// Accumulated wall time per stage, seconds. `total` covers whole feed calls.
struct StageTimings {
    double ingest = 0.0;
    double hashing = 0.0;
    double indexing = 0.0;
    double search = 0.0;
    double matching = 0.0;
    double verification = 0.0;
    double total = 0.0;
};

// Requires a verified candidate on beta consecutive frames, with consecutive
// candidate ids at most `window` apart, before anything is emitted. A frame
// without a verified candidate resets the run.
class TemporalGate {
public:
    TemporalGate(int beta, int window) : beta_(beta), window_(window) {}

    bool step(std::optional<FrameId> candidate) {
        if (!candidate) {
            run_ = 0;
            prev_.reset();
            return false;
        }
        if (prev_) {
            std::int64_t gap = std::int64_t(*candidate) - std::int64_t(*prev_);
            if (gap < 0) gap = -gap;
            run_ = (gap <= window_) ? run_ + 1 : 1;
        } else {
            run_ = 1;
        }
        prev_ = candidate;
        return run_ >= beta_;
    }

    int run_length() const { return run_; }

private:
    int beta_;
    int window_;
    int run_ = 0;
    std::optional<FrameId> prev_;
};

// Per-frame streaming loop detector: hash the frame's locals, search the
// graph for the nearest past frame outside the exclusion window, verify the
// top candidates geometrically, and pass verdicts through the temporal gate.
// A new frame waits in a FIFO sized to psi * fps and enters the graph only
// when it falls out, which is what keeps recent frames unsearchable.
class Pipeline {
public:
    Pipeline(PipelineConfig cfg, int global_dim, int local_dim)
        : cfg_(cfg),
          store_(global_dim, local_dim),
          family_(local_dim, cfg.hash_fine_bits, cfg.hash_tables, cfg.hash_bucket_bits,
                  cfg.hash_seed),
          center_(local_dim, cfg.center_warmup),
          index_(global_dim, cfg.hnsw) {
        cfg_.validate();
    }

    const PipelineConfig& config() const { return cfg_; }
    const FrameStore& store() const { return store_; }
    const HnswIndex& index() const { return index_; }
    const HashFamily& hash_family() const { return family_; }
    const StageTimings& timings() const { return timings_; }
    std::size_t pending() const { return fifo_.size(); }

    void enable_trace(bool on) { trace_enabled_ = on; }
    const std::vector<VerifyAttempt>& trace() const { return trace_; }

    /// Ingest one raw frame and run the full per-frame loop.
    std::optional<LoopDetection> feed(IngestRecord record) {
        const auto t_begin = Clock::now();
        Frame& frame = store_.ingest(std::move(record));
        const auto t_ingest = Clock::now();
        for (const auto& l : frame.locals) center_.observe(l.values);
        hash_frame(frame, family_, center_.center());
        const auto t_hash = Clock::now();
        timings_.ingest += seconds(t_begin, t_ingest);
        timings_.hashing += seconds(t_ingest, t_hash);
        auto out = process_frame(frame);
        timings_.total += seconds(t_begin, Clock::now());
        return out;
    }

    /// The per-frame loop for an already ingested and hashed frame:
    /// search, verify, gate, then push (and index whatever the FIFO evicts).
    std::optional<LoopDetection> process_frame(const Frame& frame) {
        std::optional<LoopDetection> detection;
        std::optional<FrameId> verified;

        if (!index_.empty()) {
            const auto t0 = Clock::now();
            auto results = index_.knn_search(frame.global, cfg_.top_n, cfg_.hnsw.ef_search);
            const auto t1 = Clock::now();
            timings_.search += seconds(t0, t1);

            for (const auto& r : results) {
                if (cfg_.min_similarity && r.similarity < *cfg_.min_similarity) continue;
                auto attempt = verify_candidate(frame, r);
                if (attempt.accepted) {
                    verified = attempt.candidate_id;
                    LoopDetection d;
                    d.query_id = frame.id;
                    d.match_id = attempt.candidate_id;
                    d.similarity = attempt.similarity;
                    d.inlier_count = attempt.inlier_count;
                    d.model = std::move(pending_model_);
                    detection = std::move(d);
                    break;
                }
            }
        }

        const bool emit = gate_.step(verified);

        const auto t2 = Clock::now();
        fifo_.emplace_back(frame.id, frame.global);
        if (fifo_.size() > cfg_.window_capacity()) {
            auto& [id, g] = fifo_.front();
            index_.insert(id, g);
            fifo_.pop_front();
        }
        timings_.indexing += seconds(t2, Clock::now());

        if (emit && detection) return detection;
        return std::nullopt;
    }

private:
    using Clock = std::chrono::steady_clock;

    static double seconds(Clock::time_point a, Clock::time_point b) {
        return std::chrono::duration<double>(b - a).count();
    }

    VerifyAttempt verify_candidate(const Frame& frame, const SearchResult& r) {
        VerifyAttempt attempt;
        attempt.query_id = frame.id;
        attempt.candidate_id = r.frame_id;
        attempt.similarity = r.similarity;

        const Frame& cand = store_.frame(r.frame_id);
        if (cand.locals.size() >= 2 && !frame.locals.empty()) {
            const auto t0 = Clock::now();
            MatchSet ms = match_frames(frame, cand, cfg_.epsilon, family_);
            const auto t1 = Clock::now();
            timings_.matching += seconds(t0, t1);
            attempt.match_count = ms.matches.size();

            if (ms.matches.size() >= 8) {
                auto pts = correspondences_from_matches(frame, cand, ms);
                RansacParams rp = cfg_.ransac;
                rp.rng_seed = mix64(mix64(rp.rng_seed ^ frame.id) ^ cand.id);
                const auto t2 = Clock::now();
                auto model = ransac_verify(pts, rp);
                timings_.verification += seconds(t2, Clock::now());
                if (model) {
                    attempt.inlier_count = model->inlier_count;
                    attempt.accepted = true;
                    pending_model_ = std::move(*model);
                }
            }
        }
        if (trace_enabled_) trace_.push_back(attempt);
        return attempt;
    }

    PipelineConfig cfg_;
    FrameStore store_;
    HashFamily family_;
    CenterEstimator center_;
    HnswIndex index_;
    std::deque<std::pair<FrameId, GlobalDescriptor>> fifo_;
    TemporalGate gate_{cfg_.beta, cfg_.consistency_window};
    StageTimings timings_;
    FundamentalMatrix pending_model_;
    std::vector<VerifyAttempt> trace_;
    bool trace_enabled_ = false;
};

} // namespace loopdet
