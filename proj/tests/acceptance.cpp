// Acceptance gate: each check prints exactly one PASS/FAIL line for one
// shipped guarantee, with the measured numbers alongside the pinned bounds.
// `--only N` runs a single check; the exit code is zero iff everything that
// ran passed.

#include "loopdet/batchnorm_fold.hpp"
#include "loopdet/descriptor.hpp"
#include "loopdet/geometry.hpp"
#include "loopdet/hashing.hpp"
#include "loopdet/hnsw.hpp"
#include "loopdet/io.hpp"
#include "loopdet/matcher.hpp"
#include "loopdet/pipeline.hpp"
#include "loopdet/rng.hpp"
#include "loopdet/scoring.hpp"
#include "loopdet/sweep.hpp"
#include "loopdet/synthetic.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace loopdet;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------- check 1

// Folding the batchnorm affine into the convolution must reproduce the
// two-stage output to 1e-6 relative, over 1000 random instances x 50 probes,
// in under 5 seconds.
bool check_fold_equivalence() {
    const auto t0 = Clock::now();
    Rng rng(0xC1);
    double max_rel = 0.0;
    for (int inst = 0; inst < 1000; ++inst) {
        const int out_dim = 1 + static_cast<int>(rng.uniform_index(32));
        const int in_dim = 1 + static_cast<int>(rng.uniform_index(64));
        ConvFoldInput in;
        in.w_conv.resize(out_dim, in_dim);
        in.b_conv.resize(out_dim);
        in.w_bn = Eigen::MatrixXd::Zero(out_dim, out_dim);
        in.b_bn.resize(out_dim);
        for (int r = 0; r < out_dim; ++r) {
            for (int c = 0; c < in_dim; ++c) in.w_conv(r, c) = rng.normal();
            in.b_conv(r) = rng.normal();
            in.w_bn(r, r) = rng.normal() + (rng.uniform01() < 0.5 ? -2.0 : 2.0);
            in.b_bn(r) = rng.normal();
        }
        const FoldedConv folded = fold_batchnorm(in);
        for (int probe = 0; probe < 50; ++probe) {
            Eigen::VectorXd x(in_dim);
            for (int c = 0; c < in_dim; ++c) x(c) = rng.normal();
            const Eigen::VectorXd two_stage = in.w_bn * (in.w_conv * x + in.b_conv) + in.b_bn;
            const Eigen::VectorXd one_stage = folded.w * x + folded.b;
            for (int r = 0; r < out_dim; ++r) {
                const double rel = std::abs(one_stage(r) - two_stage(r)) /
                                   std::max(std::abs(two_stage(r)), 1e-6);
                max_rel = std::max(max_rel, rel);
            }
        }
    }
    const double elapsed = seconds_since(t0);
    const bool pass = max_rel <= 1e-6 && elapsed < 5.0;
    std::printf("%s  1  folded convolution-batchnorm equivalence: max relative error %.3e "
                "(<= 1e-6), %.2fs (< 5s)\n",
                pass ? "PASS" : "FAIL", max_rel, elapsed);
    return pass;
}

// ---------------------------------------------------------------- check 2

// Unit vectors shaped like conv-layer embeddings: nonnegative, low intrinsic
// dimension. Isotropic sphere samples make every point equidistant, which no
// beam search can navigate at this beam width; the index serves descriptor
// streams, so the benchmark data models them.
Eigen::MatrixXf embedding_like(Rng& rng, const Eigen::MatrixXf& basis, int rows) {
    const int dim = static_cast<int>(basis.rows());
    const int latent = static_cast<int>(basis.cols());
    Eigen::MatrixXf m(rows, dim);
    Eigen::VectorXf z(latent);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < latent; ++j) z(j) = static_cast<float>(rng.normal());
        Eigen::VectorXf x = (basis * z).cwiseMax(0.0f);
        if (x.norm() == 0.0f) x(0) = 1.0f;
        m.row(i) = x.normalized();
    }
    return m;
}

// Retrieval on 10k indexed unit vectors (D=1280) with M=48, ef_construction
// 200, ef_search 40: recall@10 against exact scan >= 0.95 and mean query
// under 5 ms single-threaded.
bool check_graph_recall() {
    const int D = 1280, N = 10000, Q = 1000, K = 10, LATENT = 24;
    Rng rng(0xC2);
    Eigen::MatrixXf basis(D, LATENT);
    for (int i = 0; i < D; ++i)
        for (int j = 0; j < LATENT; ++j) basis(i, j) = static_cast<float>(rng.normal());
    const Eigen::MatrixXf base = embedding_like(rng, basis, N);
    const Eigen::MatrixXf queries = embedding_like(rng, basis, Q);

    HnswParams params;
    params.M = 48;
    params.ef_construction = 200;
    params.ef_search = 40;
    HnswIndex index(D, params);
    for (int i = 0; i < N; ++i) {
        std::vector<float> v(D);
        for (int j = 0; j < D; ++j) v[j] = base(i, j);
        index.insert(static_cast<FrameId>(i), make_global(std::move(v)));
    }

    const Eigen::MatrixXf sims = queries * base.transpose();
    double hits = 0.0;
    double query_seconds = 0.0;
    for (int qi = 0; qi < Q; ++qi) {
        std::vector<int> idx(N);
        for (int i = 0; i < N; ++i) idx[i] = i;
        std::partial_sort(idx.begin(), idx.begin() + K, idx.end(), [&](int a, int b) {
            if (sims(qi, a) != sims(qi, b)) return sims(qi, a) > sims(qi, b);
            return a < b;
        });
        std::vector<float> v(D);
        for (int j = 0; j < D; ++j) v[j] = queries(qi, j);
        const auto g = make_global(std::move(v));
        const auto t0 = Clock::now();
        const auto ann = index.knn_search(g, K, params.ef_search);
        query_seconds += seconds_since(t0);
        for (const auto& r : ann)
            if (std::find(idx.begin(), idx.begin() + K, static_cast<int>(r.frame_id)) !=
                idx.begin() + K)
                hits += 1.0;
    }
    const double recall = hits / (double(Q) * K);
    const double mean_ms = query_seconds * 1000.0 / Q;
    const bool pass = recall >= 0.95 && mean_ms < 5.0;
    std::printf("%s  2  graph retrieval recall: recall@10 %.4f (>= 0.95), mean query "
                "%.3f ms (< 5 ms)\n",
                pass ? "PASS" : "FAIL", recall, mean_ms);
    return pass;
}

// ---------------------------------------------------------------- check 3

// 50 random stream configurations, 10k frames each: no detection may ever
// point inside the exclusion window ceil(psi * fps).
bool check_exclusion_soundness() {
    Rng master(0xC3);
    std::size_t total_detections = 0;
    std::size_t violations = 0;
    for (int trial = 0; trial < 50; ++trial) {
        SyntheticConfig sc;
        sc.n_frames = 10000;
        sc.global_dim = 16;
        sc.local_dim = 8;
        sc.locals_per_frame = 12;
        sc.psi = master.uniform(2.0, 60.0);
        sc.fps = master.uniform(0.2, 8.0);
        double window_f = sc.psi * sc.fps;
        while (window_f < 1.0 || window_f > 350.0) {
            sc.fps = master.uniform(0.2, 8.0);
            window_f = sc.psi * sc.fps;
        }
        sc.seed = master.next_u64();
        sc.walk_alpha = master.uniform(0.0, 0.95);
        sc.global_noise = master.uniform(0.0, 0.05);
        sc.local_noise = master.uniform(0.02, 0.2);
        const auto window = static_cast<std::uint32_t>(std::ceil(window_f));

        sc.segments.clear();
        if (trial % 5 != 0) { // every fifth stream carries no planted loops
            const int want = 1 + static_cast<int>(master.uniform_index(3));
            for (int k = 0; k < want; ++k) {
                RevisitSegment seg;
                seg.length = 20 + static_cast<std::uint32_t>(master.uniform_index(100));
                seg.offset = window + 1 + static_cast<std::uint32_t>(master.uniform_index(200));
                const std::uint32_t lo = seg.offset;
                const std::uint32_t hi = sc.n_frames - seg.length;
                seg.start = lo + static_cast<std::uint32_t>(master.uniform_index(hi - lo));
                auto probe = sc;
                probe.segments.push_back(seg);
                try {
                    probe.validate();
                    sc.segments.push_back(seg);
                } catch (const std::invalid_argument&) {
                    // collision with an earlier segment; skip this one
                }
            }
        }

        PipelineConfig pc;
        pc.psi = sc.psi;
        pc.fps = sc.fps;
        pc.beta = 1 + static_cast<int>(master.uniform_index(2));
        pc.top_n = 1 + static_cast<int>(master.uniform_index(2));
        pc.epsilon = master.uniform(0.5, 0.8);
        pc.hnsw.M = 8;
        pc.hnsw.ef_construction = 32;
        pc.hnsw.ef_search = 10;
        pc.hnsw.rng_seed = master.next_u64();
        pc.hash_fine_bits = 32;
        pc.hash_tables = 4;
        pc.hash_bucket_bits = 6;
        pc.hash_seed = master.next_u64();
        pc.ransac.max_iterations = 60;
        pc.ransac.min_inliers = 10;
        pc.ransac.rng_seed = master.next_u64();

        const auto data = generate_synthetic(sc);
        Pipeline pipeline(pc, sc.global_dim, sc.local_dim);
        const auto detections = run_stream(pipeline, data.frames);
        total_detections += detections.size();
        for (const auto& d : detections)
            if (d.query_id - d.match_id < window) ++violations;
    }
    const bool pass = violations == 0 && total_detections > 0;
    std::printf("%s  3  exclusion-window soundness: %zu violations (= 0) across %zu "
                "detections in 50 fuzzed streams\n",
                pass ? "PASS" : "FAIL", violations, total_detections);
    return pass;
}

// ---------------------------------------------------------------- check 4

// The bucket-shortlist matcher must agree bit for bit with an exhaustive
// Hamming oracle restricted to co-bucketed pairs, and planted 5%-noise copies
// must land in the shortlist over 95% of the time at 6 tables.
bool check_matcher_oracle() {
    const int d = 128;
    const double flip_rate = 0.05;
    const double rel_noise = std::tan(flip_rate * 3.14159265358979323846);
    HashFamily family(d, 256, 6, 8, 0xC4C4);
    Rng rng(0xC4);

    std::size_t mismatched_pairs = 0;
    std::size_t planted_total = 0, planted_missed = 0;
    for (int pair = 0; pair < 100; ++pair) {
        Frame cand;
        cand.id = 1;
        cand.locals.resize(200);
        for (auto& l : cand.locals) {
            l.values.resize(d);
            for (auto& v : l.values) v = static_cast<float>(rng.normal());
        }
        Frame query;
        query.id = 2;
        query.locals.resize(60);
        std::vector<int> planted_partner(60, -1);
        for (int i = 0; i < 60; ++i) {
            auto& l = query.locals[i];
            if (i < 40) {
                const int src = static_cast<int>(rng.uniform_index(200));
                planted_partner[i] = src;
                l.values = cand.locals[src].values;
                const double scale = rel_noise * l2_norm(l.values) / std::sqrt(double(d));
                for (auto& v : l.values) v += static_cast<float>(scale * rng.normal());
            } else {
                l.values.resize(d);
                for (auto& v : l.values) v = static_cast<float>(rng.normal());
            }
        }
        hash_frame(cand, family);
        hash_frame(query, family);

        const double epsilon = 0.7;
        const MatchSet got = match_frames(query, cand, epsilon, family);

        // independent oracle: recompute buckets and codes straight from the
        // family, rank every co-bucketed candidate exhaustively
        std::vector<Match> expected;
        for (std::uint32_t qi = 0; qi < query.locals.size(); ++qi) {
            std::set<std::uint32_t> cobucketed;
            for (int t = 0; t < family.tables(); ++t) {
                const auto qkey = family.bucket_key(query.locals[qi].values, t);
                for (std::uint32_t ci = 0; ci < cand.locals.size(); ++ci)
                    if (family.bucket_key(cand.locals[ci].values, t) == qkey)
                        cobucketed.insert(ci);
            }
            if (planted_partner[qi] >= 0) {
                ++planted_total;
                if (!cobucketed.count(static_cast<std::uint32_t>(planted_partner[qi])))
                    ++planted_missed;
            }
            if (cobucketed.size() < 2) continue;
            const BinaryCode qcode = family.encode(query.locals[qi].values);
            std::vector<std::pair<int, std::uint32_t>> ranked;
            for (std::uint32_t ci : cobucketed)
                ranked.emplace_back(hamming(qcode, family.encode(cand.locals[ci].values)), ci);
            std::sort(ranked.begin(), ranked.end());
            const int d1 = ranked[0].first;
            const int d2 = ranked[1].first;
            if (d2 == 0) continue;
            if (double(d1) <= epsilon * epsilon * double(d2))
                expected.push_back(Match{qi, ranked[0].second, d1, d2});
        }

        bool equal = got.matches.size() == expected.size();
        for (std::size_t i = 0; equal && i < expected.size(); ++i)
            equal = got.matches[i].query_idx == expected[i].query_idx &&
                    got.matches[i].cand_idx == expected[i].cand_idx &&
                    got.matches[i].d1 == expected[i].d1 && got.matches[i].d2 == expected[i].d2;
        if (!equal) ++mismatched_pairs;
    }
    const double miss_rate = double(planted_missed) / double(planted_total);
    const bool pass = mismatched_pairs == 0 && miss_rate < 0.05;
    std::printf("%s  4  bucket matcher oracle equivalence: %zu/100 mismatched pairs (= 0), "
                "shortlist miss rate %.4f (< 0.05)\n",
                pass ? "PASS" : "FAIL", mismatched_pairs, miss_rate);
    return pass;
}

// ---------------------------------------------------------------- check 5

// Recall must be non-decreasing in the ratio threshold.
bool check_ratio_monotonicity() {
    SyntheticConfig sc;
    sc.n_frames = 600;
    sc.segments = {{400, 150, 300}};
    sc.psi = 40.0;
    sc.fps = 2.0;
    sc.global_dim = 256;
    sc.local_dim = 128;
    sc.locals_per_frame = 100;
    sc.local_noise = 0.35;
    sc.seed = 0xC5;
    const auto data = generate_synthetic(sc);

    PipelineConfig pc;
    pc.psi = sc.psi;
    pc.fps = sc.fps;
    const double values[] = {0.4, 0.5, 0.6, 0.7, 0.8};
    const auto rows = sweep(SweepAxis::Epsilon, values, data, pc);

    bool monotone = true;
    std::string curve;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%s%.3f", i ? " " : "", rows[i].pr.recall);
        curve += buf;
        if (i > 0 && rows[i].pr.recall < rows[i - 1].pr.recall) monotone = false;
    }
    const bool increased = rows.back().pr.recall > rows.front().pr.recall;
    const bool pass = monotone && increased;
    std::printf("%s  5  ratio-threshold recall monotonicity: recall over thresholds "
                "{0.4 0.5 0.6 0.7 0.8} = {%s}\n",
                pass ? "PASS" : "FAIL", curve.c_str());
    return pass;
}

// ---------------------------------------------------------------- check 6

// 70 planted correspondences at 0.5 px noise plus 30 uniform outliers:
// over 100 seeds, at least 95 runs must recover >= 63 planted inliers while
// admitting <= 3 outliers.
bool check_verification_recovery() {
    Rng rng(0xC6);
    int successes = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const double f = 500.0, cx = 320.0, cy = 320.0;
        const double yaw = rng.uniform(-0.08, 0.08);
        const double c = std::cos(yaw), s = std::sin(yaw);
        Eigen::Matrix3d R;
        R << c, 0, s, 0, 1, 0, -s, 0, c;
        const Eigen::Vector3d t(rng.uniform01() < 0.5 ? -0.5 : 0.5, rng.uniform(-0.1, 0.1),
                                rng.uniform(-0.1, 0.1));

        std::vector<Correspondence> pts;
        pts.reserve(100);
        for (int i = 0; i < 70; ++i) {
            const Eigen::Vector3d X(rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2),
                                    rng.uniform(5.0, 9.0));
            const Eigen::Vector3d Xb = R * X + t;
            Correspondence corr;
            corr.a = Eigen::Vector2d(f * X.x() / X.z() + cx + 0.5 * rng.normal(),
                                     f * X.y() / X.z() + cy + 0.5 * rng.normal());
            corr.b = Eigen::Vector2d(f * Xb.x() / Xb.z() + cx + 0.5 * rng.normal(),
                                     f * Xb.y() / Xb.z() + cy + 0.5 * rng.normal());
            pts.push_back(corr);
        }
        for (int i = 0; i < 30; ++i) {
            Correspondence corr;
            corr.a = Eigen::Vector2d(rng.uniform(0.0, 640.0), rng.uniform(0.0, 640.0));
            corr.b = Eigen::Vector2d(rng.uniform(0.0, 640.0), rng.uniform(0.0, 640.0));
            pts.push_back(corr);
        }

        RansacParams params;
        params.max_iterations = 500;
        params.min_inliers = 20;
        params.rng_seed = mix64(0xC6C6 + std::uint64_t(trial));
        const auto model = ransac_verify(pts, params);
        if (!model) continue;
        int planted = 0, outliers = 0;
        for (std::uint32_t idx : model->inliers)
            (idx < 70 ? planted : outliers) += 1;
        if (planted >= 63 && outliers <= 3) ++successes;
    }
    const bool pass = successes >= 95;
    std::printf("%s  6  verification model recovery: %d/100 seeds recovered >= 63/70 planted "
                "with <= 3 outliers (need >= 95)\n",
                pass ? "PASS" : "FAIL", successes);
    return pass;
}

// ---------------------------------------------------------------- check 7

// Default parameters on the 2000-frame planted-loop stream: perfect
// precision, recall at least 0.9, under 60 seconds end to end.
bool check_end_to_end() {
    const auto t0 = Clock::now();
    SyntheticConfig sc; // defaults: 2000 frames, one 500-frame revisit segment
    const auto data = generate_synthetic(sc);

    PipelineConfig pc; // defaults mirror the shipped parameter table
    pc.psi = sc.psi;
    pc.fps = data.fps;
    Pipeline pipeline(pc, data.global_dim, data.local_dim);
    const auto detections = run_stream(pipeline, data.frames);
    const auto pr = score(detections, data.truth);
    const double elapsed = seconds_since(t0);
    const bool pass = pr.precision == 1.0 && pr.recall >= 0.9 && elapsed < 60.0;
    std::printf("%s  7  end-to-end planted-loop detection: precision %.4f (= 1.0), recall "
                "%.4f (>= 0.9), %.1fs (< 60s), %zu detections\n",
                pass ? "PASS" : "FAIL", pr.precision, pr.recall, elapsed, detections.size());
    return pass;
}

// ---------------------------------------------------------------- check 8

// Two runs with the same seeds must produce byte-identical detection CSVs
// and byte-identical graph serializations.
bool check_determinism() {
    SyntheticConfig sc;
    sc.n_frames = 500;
    sc.segments = {{350, 100, 200}};
    sc.psi = 40.0;
    sc.fps = 1.0;
    sc.global_dim = 64;
    sc.local_dim = 32;
    sc.locals_per_frame = 40;
    sc.seed = 0xC8;
    const auto data = generate_synthetic(sc);

    auto one_run = [&](std::string& csv, std::string& graph) {
        PipelineConfig pc;
        pc.psi = sc.psi;
        pc.fps = sc.fps;
        pc.hnsw.M = 12;
        pc.hnsw.ef_construction = 60;
        pc.ransac.min_inliers = 15;
        Pipeline pipeline(pc, sc.global_dim, sc.local_dim);
        const auto detections = run_stream(pipeline, data.frames);
        std::ostringstream cs;
        write_detections(cs, detections);
        csv = cs.str();
        std::ostringstream gs;
        pipeline.index().serialize(gs);
        graph = gs.str();
        return detections.size();
    };
    std::string csv_a, graph_a, csv_b, graph_b;
    const std::size_t n_a = one_run(csv_a, graph_a);
    const std::size_t n_b = one_run(csv_b, graph_b);
    const bool pass = n_a > 0 && csv_a == csv_b && graph_a == graph_b;
    std::printf("%s  8  bitwise determinism: %zu detections, CSV %s, graph bytes %s\n",
                pass ? "PASS" : "FAIL", n_a, csv_a == csv_b ? "identical" : "DIFFER",
                graph_a == graph_b ? "identical" : "DIFFER");
    return pass;
}

// ---------------------------------------------------------------- check 9

// A stored code costs exactly m/8 bytes; at m = 128 that is 1/32 of the
// 128-float descriptor it replaces.
bool check_memory_footprint() {
    const int d = 128, m = 128;
    HashFamily family(d, m, 6, 8, 0xC9);
    Frame frame;
    frame.locals.resize(10);
    Rng rng(0xC9);
    for (auto& l : frame.locals) {
        l.values.resize(d);
        for (auto& v : l.values) v = static_cast<float>(rng.normal());
    }
    hash_frame(frame, family);

    bool sizes_ok = true;
    for (const auto& code : frame.codes) sizes_ok = sizes_ok && code.bytes.size() == m / 8;
    const std::size_t code_bytes = frame.codes[0].bytes.size();
    const std::size_t float_bytes = d * sizeof(float);
    const bool pass = sizes_ok && float_bytes == 32 * code_bytes;
    std::printf("%s  9  code storage footprint: %zu code bytes per descriptor (= m/8 = %d), "
                "descriptor/code ratio %zu (= 32)\n",
                pass ? "PASS" : "FAIL", code_bytes, m / 8, float_bytes / code_bytes);
    return pass;
}

} // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
            only = std::atoi(argv[i + 1]);
            ++i;
        } else {
            std::fprintf(stderr, "usage: %s [--only N]\n", argv[0]);
            return 2;
        }
    }
    bool (*checks[])() = {check_fold_equivalence, check_graph_recall,
                          check_exclusion_soundness, check_matcher_oracle,
                          check_ratio_monotonicity, check_verification_recovery,
                          check_end_to_end, check_determinism, check_memory_footprint};
    const int n = static_cast<int>(sizeof(checks) / sizeof(checks[0]));
    if (only < 0 || only > n) {
        std::fprintf(stderr, "no such check %d\n", only);
        return 2;
    }
    bool all = true;
    for (int i = 0; i < n; ++i) {
        if (only != 0 && only != i + 1) continue;
        all = checks[i]() && all;
    }
    return all ? 0 : 1;
}
