#pragma once

#include "loopdet/pipeline.hpp"
#include "loopdet/scoring.hpp"
#include "loopdet/synthetic.hpp"

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace loopdet {

/// Streams a dataset through a pipeline and collects the emitted detections,
/// already sorted by query id because emission is.
inline std::vector<DetectionRecord> run_stream(Pipeline& pipeline,
                                               const std::vector<IngestRecord>& frames) {
    std::vector<DetectionRecord> out;
    for (const auto& rec : frames) {
        if (auto det = pipeline.feed(rec)) {
            out.push_back(DetectionRecord{det->query_id, det->match_id, det->similarity,
                                          det->inlier_count});
        }
    }
    return out;
}

enum class SweepAxis { M, EfSearch, HashBits, Epsilon, TopN };

struct SweepRow {
    double value = 0.0;
    std::size_t detection_count = 0;
    PRReport pr;
    StageTimings timings;
};

/// One full pipeline run per axis value, everything else held at `base`.
inline std::vector<SweepRow> sweep(SweepAxis axis, std::span<const double> values,
                                   const SyntheticDataset& data, const PipelineConfig& base,
                                   std::uint32_t tolerance = 10) {
    std::vector<SweepRow> rows;
    rows.reserve(values.size());
    for (double v : values) {
        PipelineConfig cfg = base;
        cfg.fps = data.fps;
        switch (axis) {
        case SweepAxis::M:
            cfg.hnsw.M = static_cast<int>(std::llround(v));
            break;
        case SweepAxis::EfSearch:
            cfg.hnsw.ef_search = static_cast<int>(std::llround(v));
            break;
        case SweepAxis::HashBits:
            cfg.hash_fine_bits = static_cast<int>(std::llround(v));
            break;
        case SweepAxis::Epsilon:
            cfg.epsilon = v;
            break;
        case SweepAxis::TopN:
            cfg.top_n = static_cast<int>(std::llround(v));
            break;
        }
        Pipeline pipeline(cfg, data.global_dim, data.local_dim);
        SweepRow row;
        row.value = v;
        auto detections = run_stream(pipeline, data.frames);
        row.detection_count = detections.size();
        row.pr = score(detections, data.truth, tolerance);
        row.timings = pipeline.timings();
        rows.push_back(row);
    }
    return rows;
}

} // namespace loopdet
