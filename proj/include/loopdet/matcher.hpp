#pragma once

#include "loopdet/frame.hpp"
#include "loopdet/hashing.hpp"

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace loopdet {

struct Match {
    std::uint32_t query_idx = 0; // position in the query frame's locals
    std::uint32_t cand_idx = 0;  // position in the candidate frame's locals
    int d1 = 0;                  // Hamming distance to the best candidate
    int d2 = 0;                  // Hamming distance to the second best
};

struct MatchSet {
    FrameId query_id = 0;
    FrameId candidate_id = 0;
    std::vector<Match> matches;          // at most one per query_idx, ascending
    std::size_t shortlisted_queries = 0; // query locals whose shortlist had >= 2 entries
};

// Coarse-to-fine binary matching. For each query descriptor the candidate
// descriptors sharing any bucket across the hash tables form a shortlist;
// the shortlist is ranked by fine-code Hamming distance and the best match
// survives only if d1/d2 <= epsilon^2. A second-place distance of zero means
// two candidates carry the query's exact code, which the ratio cannot
// disambiguate, so such queries yield nothing. The shortlist does not depend
// on epsilon, so the match set grows monotonically with it.
inline MatchSet match_frames(const Frame& query, const Frame& candidate, double epsilon,
                             const HashFamily& family) {
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw std::invalid_argument("match_frames: epsilon must lie in (0,1)");
    if (!query.hashed() || !candidate.hashed())
        throw std::invalid_argument("match_frames: frames must be hashed first");
    if (candidate.locals.size() < 2)
        throw std::invalid_argument("match_frames: candidate needs at least 2 locals");

    const int tables = family.tables();
    const double threshold = epsilon * epsilon;

    // bucket -> candidate local indices, one map per table
    std::vector<std::unordered_map<std::uint32_t, std::vector<std::uint32_t>>> buckets(tables);
    for (std::uint32_t i = 0; i < candidate.locals.size(); ++i)
        for (int t = 0; t < tables; ++t)
            buckets[t][candidate.bucket_keys[i * tables + t]].push_back(i);

    MatchSet out;
    out.query_id = query.id;
    out.candidate_id = candidate.id;

    std::vector<std::uint8_t> seen(candidate.locals.size(), 0);
    std::vector<std::uint32_t> shortlist;
    for (std::uint32_t qi = 0; qi < query.locals.size(); ++qi) {
        shortlist.clear();
        for (int t = 0; t < tables; ++t) {
            auto it = buckets[t].find(query.bucket_keys[qi * tables + t]);
            if (it == buckets[t].end()) continue;
            for (std::uint32_t ci : it->second) {
                if (seen[ci]) continue;
                seen[ci] = 1;
                shortlist.push_back(ci);
            }
        }
        for (std::uint32_t ci : shortlist) seen[ci] = 0;
        if (shortlist.size() < 2) continue;
        ++out.shortlisted_queries;

        int d1 = family.fine_bits() + 1, d2 = family.fine_bits() + 1;
        std::uint32_t best = 0;
        std::sort(shortlist.begin(), shortlist.end());
        for (std::uint32_t ci : shortlist) {
            const int d = hamming(query.codes[qi], candidate.codes[ci]);
            if (d < d1) {
                d2 = d1;
                d1 = d;
                best = ci;
            } else if (d < d2) {
                d2 = d;
            }
        }
        if (d2 == 0) continue;
        if (static_cast<double>(d1) <= threshold * static_cast<double>(d2))
            out.matches.push_back(Match{qi, best, d1, d2});
    }
    return out;
}

} // namespace loopdet
