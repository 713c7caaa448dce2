#pragma once

#include "loopdet/io.hpp"

#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

namespace loopdet {

struct PRReport {
    std::size_t true_positives = 0;
    std::size_t false_positives = 0;
    std::size_t false_negatives = 0;
    double precision = 1.0;
    double recall = 1.0;
};

// Scores detections against per-query ground truth. A detection counts as
// correct when an annotation exists for its query and the match id falls
// within `tolerance` frames of the annotated range; every annotation can be
// credited at most once, and extra correct detections of an already-credited
// query are ignored rather than penalized. Empty denominators score 1
// (vacuously perfect), so empty detections against nonempty truth give
// precision 1 and recall 0.
inline PRReport score(const std::vector<DetectionRecord>& detections,
                      const std::vector<GroundTruthEntry>& truth,
                      std::uint32_t tolerance = 10) {
    for (std::size_t i = 1; i < detections.size(); ++i)
        if (detections[i].query_id < detections[i - 1].query_id)
            throw std::invalid_argument("score: detections not sorted by query id");
    for (std::size_t i = 1; i < truth.size(); ++i)
        if (truth[i].query_id < truth[i - 1].query_id)
            throw std::invalid_argument("score: ground truth not sorted by query id");

    std::map<std::uint32_t, const GroundTruthEntry*> annotated;
    for (const auto& t : truth)
        if (!annotated.emplace(t.query_id, &t).second)
            throw std::invalid_argument("score: duplicate ground-truth query id");

    PRReport r;
    std::map<std::uint32_t, bool> credited;
    for (const auto& d : detections) {
        const auto it = annotated.find(d.query_id);
        bool correct = false;
        if (it != annotated.end()) {
            const GroundTruthEntry& gt = *it->second;
            const std::uint32_t lo = gt.match_start > tolerance ? gt.match_start - tolerance : 0;
            const std::uint32_t hi = gt.match_end + tolerance;
            correct = d.match_id >= lo && d.match_id <= hi;
        }
        if (!correct) {
            ++r.false_positives;
        } else if (!credited[d.query_id]) {
            credited[d.query_id] = true;
            ++r.true_positives;
        }
    }
    r.false_negatives = truth.size() - r.true_positives;

    const std::size_t p_den = r.true_positives + r.false_positives;
    const std::size_t r_den = r.true_positives + r.false_negatives;
    r.precision = p_den ? static_cast<double>(r.true_positives) / static_cast<double>(p_den)
                        : 1.0;
    r.recall = r_den ? static_cast<double>(r.true_positives) / static_cast<double>(r_den)
                     : 1.0;
    return r;
}

} // namespace loopdet
