#pragma once

#include "loopdet/descriptor.hpp"
#include "loopdet/rng.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <queue>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace loopdet {

struct SearchResult {
    FrameId frame_id = 0;
    double similarity = 0.0;
};

struct HnswParams {
    int M = 48;               // max out-degree per layer above ground
    int ef_construction = 200;
    int ef_search = 40;
    double level_scale = 0.0; // <= 0 selects 1/ln(M)
    std::uint64_t rng_seed = 0x100d5eedULL;

    void validate() const {
        if (M < 2) throw std::invalid_argument("HnswParams: M must be >= 2");
        if (ef_construction < M)
            throw std::invalid_argument("HnswParams: ef_construction must be >= M");
        if (ef_search < 1) throw std::invalid_argument("HnswParams: ef_search must be >= 1");
    }

    double effective_level_scale() const {
        return level_scale > 0.0 ? level_scale : 1.0 / std::log(static_cast<double>(M));
    }
};

// Incremental hierarchical navigable small world graph under cosine distance
// (1 - normalized scalar product). Elements are inserted one at a time; each
// gets a maximum layer drawn from an exponentially decaying distribution, is
// connected greedily from the entry point down, and neighbor lists are kept
// diverse with the closer-to-target-than-to-any-selected heuristic. Layers
// above ground hold at most M links per node, the ground layer at most 2*M.
//
// The writer must be serialized with searches; between insertions the graph
// is immutable and safe for concurrent read-only searches.
class HnswIndex {
public:
    HnswIndex(int dim, HnswParams params)
        : dim_(dim), params_(params), rng_(params.rng_seed) {
        if (dim < 1) throw std::invalid_argument("HnswIndex: dim must be positive");
        params_.validate();
    }

    int dim() const { return dim_; }
    const HnswParams& params() const { return params_; }
    std::size_t size() const { return nodes_.size(); }
    bool empty() const { return nodes_.empty(); }
    bool contains(FrameId id) const { return slot_of_.count(id) != 0; }
    int max_level() const { return max_level_; }

    FrameId entry_point() const {
        if (empty()) throw std::runtime_error("HnswIndex: empty graph has no entry point");
        return nodes_[static_cast<std::size_t>(entry_slot_)].id;
    }

    static int level_for_uniform(double u, double scale) {
        return static_cast<int>(std::floor(-std::log(u) * scale));
    }

    /// Draws the maximum layer for the next inserted element. Deterministic
    /// given the seed and the number of prior draws.
    int assign_level() {
        return level_for_uniform(rng_.uniform01_positive(), params_.effective_level_scale());
    }

    void insert(FrameId id, const GlobalDescriptor& g) {
        if (contains(id))
            throw std::invalid_argument("HnswIndex: duplicate id " + std::to_string(id));
        if (g.values.size() != static_cast<std::size_t>(dim_))
            throw std::invalid_argument("HnswIndex: descriptor dimension mismatch");
        if (!(g.norm > 0.0))
            throw std::invalid_argument("HnswIndex: zero-norm descriptor");

        const int level = assign_level();
        const std::uint32_t slot = static_cast<std::uint32_t>(nodes_.size());
        data_.insert(data_.end(), g.values.begin(), g.values.end());
        inv_norm_.push_back(static_cast<float>(1.0 / g.norm));
        Node node;
        node.id = id;
        node.level = level;
        node.links.resize(static_cast<std::size_t>(level) + 1);
        nodes_.push_back(std::move(node));
        slot_of_.emplace(id, slot);

        if (slot == 0) {
            entry_slot_ = 0;
            max_level_ = level;
            return;
        }

        const float* q = vec(slot);
        const float qn = inv_norm_[slot];
        std::uint32_t cur = static_cast<std::uint32_t>(entry_slot_);

        if (level < max_level_) {
            float cur_dist = dist(cur, q, qn);
            for (int lc = max_level_; lc > level; --lc)
                greedy_step(cur, cur_dist, q, qn, lc);
        }

        for (int lc = std::min(level, max_level_); lc >= 0; --lc) {
            auto candidates = search_layer_slots({&cur, 1}, q, qn, params_.ef_construction, lc);
            auto selected = select_neighbors(candidates, params_.M, slot);
            nodes_[slot].links[lc].clear();
            for (const auto& [d, s] : selected) nodes_[slot].links[lc].push_back(s);

            const std::size_t cap = lc == 0 ? 2 * static_cast<std::size_t>(params_.M)
                                            : static_cast<std::size_t>(params_.M);
            for (const auto& [d, s] : selected) {
                auto& peer_links = nodes_[s].links[lc];
                peer_links.push_back(slot);
                if (peer_links.size() > cap) {
                    // Re-run the selection heuristic from the peer's view.
                    std::vector<std::pair<float, std::uint32_t>> peer_cands;
                    peer_cands.reserve(peer_links.size());
                    const float* pv = vec(s);
                    const float pn = inv_norm_[s];
                    for (std::uint32_t t : peer_links)
                        peer_cands.emplace_back(dist(t, pv, pn), t);
                    std::sort(peer_cands.begin(), peer_cands.end());
                    auto kept = select_neighbors(peer_cands, static_cast<int>(cap), s);
                    peer_links.clear();
                    for (const auto& [kd, ks] : kept) peer_links.push_back(ks);
                }
            }
            cur = selected.front().second; // closest selected seeds the next layer
        }

        if (level > max_level_) {
            max_level_ = level;
            entry_slot_ = static_cast<std::int64_t>(slot);
        }
    }

    /// Best-first candidate search restricted to one layer, exposed with
    /// frame ids. Returns up to ef (id, distance) pairs, nearest first.
    std::vector<std::pair<FrameId, double>>
    search_layer(const GlobalDescriptor& query, std::span<const FrameId> enter_points,
                 int ef, int layer) const {
        if (enter_points.empty())
            throw std::invalid_argument("search_layer: no enter points");
        if (ef < 1) throw std::invalid_argument("search_layer: ef must be >= 1");
        check_query(query);
        std::vector<std::uint32_t> eps;
        eps.reserve(enter_points.size());
        for (FrameId id : enter_points) {
            auto it = slot_of_.find(id);
            if (it == slot_of_.end())
                throw std::invalid_argument("search_layer: unknown enter point " +
                                            std::to_string(id));
            if (nodes_[it->second].level < layer)
                throw std::invalid_argument("search_layer: enter point below layer");
            eps.push_back(it->second);
        }
        const float qn = static_cast<float>(1.0 / query.norm);
        auto found = search_layer_slots(eps, query.values.data(), qn, ef, layer);
        std::vector<std::pair<FrameId, double>> out;
        out.reserve(found.size());
        for (const auto& [d, s] : found) out.emplace_back(nodes_[s].id, double(d));
        return out;
    }

    /// Up to k nearest stored elements, most similar first; equal scores
    /// break toward the smaller frame id.
    std::vector<SearchResult> knn_search(const GlobalDescriptor& query, int k,
                                         int ef_search) const {
        if (empty()) throw std::runtime_error("knn_search: empty graph");
        if (k < 1) throw std::invalid_argument("knn_search: k must be >= 1");
        check_query(query);
        const int ef = std::max(ef_search, k);
        const float* q = query.values.data();
        const float qn = static_cast<float>(1.0 / query.norm);

        std::uint32_t cur = static_cast<std::uint32_t>(entry_slot_);
        float cur_dist = dist(cur, q, qn);
        for (int lc = max_level_; lc > 0; --lc) greedy_step(cur, cur_dist, q, qn, lc);

        auto found = search_layer_slots({&cur, 1}, q, qn, ef, 0);
        if (found.size() > static_cast<std::size_t>(k)) found.resize(k);
        std::vector<SearchResult> out;
        out.reserve(found.size());
        for (const auto& [d, s] : found) {
            double sim = 1.0 - double(d);
            if (sim > 1.0) sim = 1.0;
            if (sim < -1.0) sim = -1.0;
            out.push_back(SearchResult{nodes_[s].id, sim});
        }
        std::sort(out.begin(), out.end(), [](const SearchResult& a, const SearchResult& b) {
            if (a.similarity != b.similarity) return a.similarity > b.similarity;
            return a.frame_id < b.frame_id;
        });
        return out;
    }

    // --- structural access, used by audits and serialization ---

    std::vector<FrameId> ids() const {
        std::vector<FrameId> out;
        out.reserve(nodes_.size());
        for (const auto& n : nodes_) out.push_back(n.id);
        return out;
    }

    int node_level(FrameId id) const { return nodes_[slot_checked(id)].level; }

    std::vector<FrameId> neighbors(FrameId id, int layer) const {
        const Node& n = nodes_[slot_checked(id)];
        if (layer < 0 || layer > n.level)
            throw std::out_of_range("neighbors: layer out of range");
        std::vector<FrameId> out;
        out.reserve(n.links[layer].size());
        for (std::uint32_t s : n.links[layer]) out.push_back(nodes_[s].id);
        return out;
    }

    /// Canonical byte serialization: parameters, then nodes in id order with
    /// per-layer neighbor lists sorted ascending. Equal graphs serialize to
    /// equal bytes.
    void serialize(std::ostream& os) const {
        os.write("LDG1", 4);
        put_i32(os, params_.M);
        put_i32(os, params_.ef_construction);
        put_i32(os, params_.ef_search);
        put_f64(os, params_.level_scale);
        put_u64(os, params_.rng_seed);
        put_i32(os, dim_);
        put_u64(os, nodes_.size());
        put_i32(os, max_level_);
        put_u32(os, empty() ? 0xFFFFFFFFu : nodes_[static_cast<std::size_t>(entry_slot_)].id);
        std::vector<std::uint32_t> order(nodes_.size());
        for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [this](std::uint32_t a, std::uint32_t b) {
            return nodes_[a].id < nodes_[b].id;
        });
        for (std::uint32_t s : order) {
            const Node& n = nodes_[s];
            put_u32(os, n.id);
            put_i32(os, n.level);
            for (int lc = 0; lc <= n.level; ++lc) {
                std::vector<std::uint32_t> link_ids;
                link_ids.reserve(n.links[lc].size());
                for (std::uint32_t t : n.links[lc]) link_ids.push_back(nodes_[t].id);
                std::sort(link_ids.begin(), link_ids.end());
                put_u32(os, static_cast<std::uint32_t>(link_ids.size()));
                for (std::uint32_t v : link_ids) put_u32(os, v);
            }
        }
    }

private:
    struct Node {
        FrameId id = 0;
        int level = 0;
        std::vector<std::vector<std::uint32_t>> links; // per layer, slot indices
    };

    // min-heap orders by (distance, slot) so equal distances pop low slot first
    struct FurtherFirst {
        bool operator()(const std::pair<float, std::uint32_t>& a,
                        const std::pair<float, std::uint32_t>& b) const {
            return a < b;
        }
    };
    struct CloserFirst {
        bool operator()(const std::pair<float, std::uint32_t>& a,
                        const std::pair<float, std::uint32_t>& b) const {
            return a > b;
        }
    };

    const float* vec(std::uint32_t slot) const {
        return data_.data() + static_cast<std::size_t>(slot) * dim_;
    }

    float dist(std::uint32_t slot, const float* q, float q_inv_norm) const {
        Eigen::Map<const Eigen::VectorXf> a(vec(slot), dim_);
        Eigen::Map<const Eigen::VectorXf> b(q, dim_);
        return 1.0f - a.dot(b) * inv_norm_[slot] * q_inv_norm;
    }

    void check_query(const GlobalDescriptor& q) const {
        if (q.values.size() != static_cast<std::size_t>(dim_))
            throw std::invalid_argument("HnswIndex: query dimension mismatch");
        if (!(q.norm > 0.0)) throw std::invalid_argument("HnswIndex: zero-norm query");
    }

    std::uint32_t slot_checked(FrameId id) const {
        auto it = slot_of_.find(id);
        if (it == slot_of_.end())
            throw std::invalid_argument("HnswIndex: unknown id " + std::to_string(id));
        return it->second;
    }

    void greedy_step(std::uint32_t& cur, float& cur_dist, const float* q, float qn,
                     int layer) const {
        bool changed = true;
        while (changed) {
            changed = false;
            for (std::uint32_t nb : nodes_[cur].links[layer]) {
                const float d = dist(nb, q, qn);
                if (d < cur_dist) {
                    cur_dist = d;
                    cur = nb;
                    changed = true;
                }
            }
        }
    }

    // Best-first search with a bounded result heap. A candidate is expanded
    // until the nearest unexpanded one is farther than the worst kept result,
    // so nothing closer than the current worst is ever discarded.
    std::vector<std::pair<float, std::uint32_t>>
    search_layer_slots(std::span<const std::uint32_t> eps, const float* q, float qn,
                       int ef, int layer) const {
        std::priority_queue<std::pair<float, std::uint32_t>,
                            std::vector<std::pair<float, std::uint32_t>>, FurtherFirst>
            top;
        std::priority_queue<std::pair<float, std::uint32_t>,
                            std::vector<std::pair<float, std::uint32_t>>, CloserFirst>
            cand;
        std::vector<std::uint8_t> visited(nodes_.size(), 0);

        for (std::uint32_t ep : eps) {
            if (visited[ep]) continue;
            visited[ep] = 1;
            const float d = dist(ep, q, qn);
            top.emplace(d, ep);
            cand.emplace(d, ep);
        }
        while (top.size() > static_cast<std::size_t>(ef)) top.pop();
        float lower_bound = top.top().first;

        while (!cand.empty()) {
            const auto [d, c] = cand.top();
            if (d > lower_bound && top.size() == static_cast<std::size_t>(ef)) break;
            cand.pop();
            for (std::uint32_t nb : nodes_[c].links[layer]) {
                if (visited[nb]) continue;
                visited[nb] = 1;
                const float dn = dist(nb, q, qn);
                if (top.size() < static_cast<std::size_t>(ef) || dn < lower_bound) {
                    cand.emplace(dn, nb);
                    top.emplace(dn, nb);
                    if (top.size() > static_cast<std::size_t>(ef)) top.pop();
                    lower_bound = top.top().first;
                }
            }
        }

        std::vector<std::pair<float, std::uint32_t>> out(top.size());
        for (std::size_t i = out.size(); i-- > 0;) {
            out[i] = top.top();
            top.pop();
        }
        return out;
    }

    // Diversified neighbor selection: walking candidates nearest first, keep
    // one only if it is closer to the target than to everything already kept.
    std::vector<std::pair<float, std::uint32_t>>
    select_neighbors(const std::vector<std::pair<float, std::uint32_t>>& candidates,
                     int m, std::uint32_t target) const {
        if (candidates.size() < static_cast<std::size_t>(m)) return candidates;
        std::vector<std::pair<float, std::uint32_t>> kept;
        kept.reserve(m);
        for (const auto& [d_target, c] : candidates) {
            if (kept.size() == static_cast<std::size_t>(m)) break;
            const float* cv = vec(c);
            const float cn = inv_norm_[c];
            bool good = true;
            for (const auto& [kd, k] : kept) {
                if (dist(k, cv, cn) < d_target) {
                    good = false;
                    break;
                }
            }
            if (good) kept.emplace_back(d_target, c);
        }
        (void)target;
        return kept;
    }

    static void put_i32(std::ostream& os, std::int32_t v) {
        os.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
    static void put_u32(std::ostream& os, std::uint32_t v) {
        os.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
    static void put_u64(std::ostream& os, std::uint64_t v) {
        os.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
    static void put_f64(std::ostream& os, double v) {
        os.write(reinterpret_cast<const char*>(&v), sizeof v);
    }

    int dim_;
    HnswParams params_;
    Rng rng_;
    std::vector<Node> nodes_;
    std::unordered_map<FrameId, std::uint32_t> slot_of_;
    std::vector<float> data_;
    std::vector<float> inv_norm_;
    std::int64_t entry_slot_ = -1;
    int max_level_ = -1;
};

} // namespace loopdet
