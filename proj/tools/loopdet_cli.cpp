// Command-line front end: generate synthetic streams, run the detector over a
// descriptor container, score detections against ground truth, and sweep one
// parameter axis. Subcommand flags follow the conventional parameter names
// (psi, M, ef, m, epsilon, tau, beta, n).

#include "loopdet/io.hpp"
#include "loopdet/pipeline.hpp"
#include "loopdet/scoring.hpp"
#include "loopdet/sweep.hpp"
#include "loopdet/synthetic.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace loopdet;

std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
    std::ifstream f(path, mode);
    if (!f) throw std::runtime_error("cannot open " + path);
    return f;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
    std::ofstream f(path, mode);
    if (!f) throw std::runtime_error("cannot write " + path);
    return f;
}

RevisitSegment parse_segment(const std::string& s) {
    RevisitSegment seg;
    char colon1, colon2, extra;
    std::istringstream ss(s);
    if (!(ss >> seg.start >> colon1 >> seg.length >> colon2 >> seg.offset) ||
        colon1 != ':' || colon2 != ':' || (ss >> extra))
        throw std::runtime_error("bad segment '" + s + "', expected start:length:offset");
    return seg;
}

double fps_from_timestamps(const std::vector<IngestRecord>& frames) {
    if (frames.size() < 2)
        throw std::runtime_error("cannot infer fps from fewer than 2 frames; pass --fps");
    std::vector<double> gaps;
    gaps.reserve(frames.size() - 1);
    for (std::size_t i = 1; i < frames.size(); ++i)
        gaps.push_back(frames[i].timestamp - frames[i - 1].timestamp);
    std::sort(gaps.begin(), gaps.end());
    const double median = gaps[gaps.size() / 2];
    if (!(median > 0.0))
        throw std::runtime_error("non-increasing timestamps; pass --fps explicitly");
    return 1.0 / median;
}

struct RunFlags {
    double psi = 40.0;
    double fps = 0.0; // 0 = derive from timestamps
    int M = 48;
    int ef_construction = 200;
    int ef = 40;
    int m = 256;
    int tables = 6;
    int bucket_bits = 8;
    double epsilon = 0.7;
    int tau = 20;
    int beta = 2;
    int n = 1;
    int window = 10;
    int ransac_iterations = 500;
    std::uint64_t seed = 7;
    double min_similarity = -2.0; // below -1 disables the floor
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
    cmd->add_option("--psi", f.psi, "exclusion horizon in seconds");
    cmd->add_option("--fps", f.fps, "stream frame rate (default: inferred from timestamps)");
    cmd->add_option("--M", f.M, "graph out-degree bound");
    cmd->add_option("--ef-construction", f.ef_construction, "construction beam width");
    cmd->add_option("--ef", f.ef, "search beam width");
    cmd->add_option("--m", f.m, "fine hash bits per local descriptor");
    cmd->add_option("--tables", f.tables, "coarse hash tables");
    cmd->add_option("--bucket-bits", f.bucket_bits, "bits per coarse bucket key");
    cmd->add_option("--epsilon", f.epsilon, "binary ratio-test threshold");
    cmd->add_option("--tau", f.tau, "minimum verified inliers");
    cmd->add_option("--beta", f.beta, "consecutive consistent frames required");
    cmd->add_option("--n", f.n, "retrieved candidates verified per frame");
    cmd->add_option("--window", f.window, "consistency window in frames");
    cmd->add_option("--ransac-iterations", f.ransac_iterations, "RANSAC hypothesis budget");
    cmd->add_option("--seed", f.seed, "base seed for hashing and verification");
    cmd->add_option("--min-similarity", f.min_similarity,
                    "discard retrievals below this cosine similarity (off by default)");
}

PipelineConfig to_config(const RunFlags& f, double fps) {
    PipelineConfig cfg;
    cfg.psi = f.psi;
    cfg.fps = fps;
    cfg.top_n = f.n;
    cfg.beta = f.beta;
    cfg.consistency_window = f.window;
    cfg.epsilon = f.epsilon;
    cfg.hnsw.M = f.M;
    cfg.hnsw.ef_construction = f.ef_construction;
    cfg.hnsw.ef_search = f.ef;
    cfg.hnsw.rng_seed = mix64(f.seed ^ 0x1);
    cfg.hash_fine_bits = f.m;
    cfg.hash_tables = f.tables;
    cfg.hash_bucket_bits = f.bucket_bits;
    cfg.hash_seed = mix64(f.seed ^ 0x2);
    cfg.ransac.max_iterations = f.ransac_iterations;
    cfg.ransac.min_inliers = f.tau;
    cfg.ransac.rng_seed = mix64(f.seed ^ 0x3);
    if (f.min_similarity >= -1.0) cfg.min_similarity = f.min_similarity;
    return cfg;
}

void print_timings(const StageTimings& t, std::size_t n_frames) {
    const double per = n_frames ? 1000.0 / static_cast<double>(n_frames) : 0.0;
    std::printf("stage,total_s,mean_ms_per_frame\n");
    std::printf("ingest,%.6f,%.6f\n", t.ingest, t.ingest * per);
    std::printf("hashing,%.6f,%.6f\n", t.hashing, t.hashing * per);
    std::printf("indexing,%.6f,%.6f\n", t.indexing, t.indexing * per);
    std::printf("search,%.6f,%.6f\n", t.search, t.search * per);
    std::printf("matching,%.6f,%.6f\n", t.matching, t.matching * per);
    std::printf("verification,%.6f,%.6f\n", t.verification, t.verification * per);
    std::printf("total,%.6f,%.6f\n", t.total, t.total * per);
}

int cmd_generate(const std::string& out_path, const std::string& gt_path, bool text,
                 SyntheticConfig& sc, const std::vector<std::string>& segment_specs) {
    if (!segment_specs.empty()) {
        sc.segments.clear();
        for (const auto& s : segment_specs) sc.segments.push_back(parse_segment(s));
    }
    auto data = generate_synthetic(sc);
    auto os = open_out(out_path, std::ios::binary);
    ContainerWriter writer(os, static_cast<std::uint32_t>(data.global_dim),
                           static_cast<std::uint32_t>(data.local_dim), text);
    for (const auto& rec : data.frames) writer.add(rec);
    if (!gt_path.empty()) {
        auto gs = open_out(gt_path);
        write_ground_truth(gs, data.truth);
    }
    std::fprintf(stderr, "wrote %zu frames (%zu annotated) to %s\n", data.frames.size(),
                 data.truth.size(), out_path.c_str());
    return 0;
}

int cmd_run(const std::string& in_path, const std::string& out_path, const RunFlags& flags,
            const std::string& graph_path, bool timings) {
    auto is = open_in(in_path, std::ios::binary);
    ContainerReader reader(is);
    auto frames = reader.read_all();
    const double fps = flags.fps > 0.0 ? flags.fps : fps_from_timestamps(frames);

    Pipeline pipeline(to_config(flags, fps), static_cast<int>(reader.global_dim()),
                      static_cast<int>(reader.local_dim()));
    auto detections = run_stream(pipeline, frames);

    auto os = open_out(out_path);
    write_detections(os, detections);
    if (!graph_path.empty()) {
        auto gs = open_out(graph_path, std::ios::binary);
        pipeline.index().serialize(gs);
    }
    if (timings) print_timings(pipeline.timings(), frames.size());
    std::fprintf(stderr, "%zu detections over %zu frames (fps %.3f)\n", detections.size(),
                 frames.size(), fps);
    return 0;
}

int cmd_score(const std::string& det_path, const std::string& gt_path,
              std::uint32_t tolerance) {
    auto ds = open_in(det_path);
    auto gs = open_in(gt_path);
    const auto detections = read_detections(ds);
    const auto truth = read_ground_truth(gs);
    const auto r = score(detections, truth, tolerance);
    std::printf("tp,fp,fn,precision,recall\n");
    std::printf("%zu,%zu,%zu,%.6f,%.6f\n", r.true_positives, r.false_positives,
                r.false_negatives, r.precision, r.recall);
    return 0;
}

int cmd_sweep(const std::string& in_path, const std::string& gt_path,
              const std::string& axis_name, const std::vector<double>& values,
              const RunFlags& flags, const std::string& out_path, std::uint32_t tolerance) {
    SweepAxis axis;
    if (axis_name == "M") axis = SweepAxis::M;
    else if (axis_name == "ef") axis = SweepAxis::EfSearch;
    else if (axis_name == "m") axis = SweepAxis::HashBits;
    else if (axis_name == "epsilon") axis = SweepAxis::Epsilon;
    else if (axis_name == "n") axis = SweepAxis::TopN;
    else throw std::runtime_error("unknown axis '" + axis_name + "' (M, ef, m, epsilon, n)");
    if (values.empty()) throw std::runtime_error("no --values given");

    auto is = open_in(in_path, std::ios::binary);
    ContainerReader reader(is);
    SyntheticDataset data;
    data.global_dim = static_cast<int>(reader.global_dim());
    data.local_dim = static_cast<int>(reader.local_dim());
    data.frames = reader.read_all();
    data.fps = flags.fps > 0.0 ? flags.fps : fps_from_timestamps(data.frames);
    auto gs = open_in(gt_path);
    data.truth = read_ground_truth(gs);

    const auto rows = sweep(axis, values, data, to_config(flags, data.fps), tolerance);

    std::ostream* out = &std::cout;
    std::ofstream file;
    if (!out_path.empty()) {
        file = open_out(out_path);
        out = &file;
    }
    (*out) << "axis,value,detections,tp,fp,fn,precision,recall,"
              "ingest_s,hashing_s,indexing_s,search_s,matching_s,verification_s,total_s\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf,
                      "%s,%g,%zu,%zu,%zu,%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                      axis_name.c_str(), r.value, r.detection_count, r.pr.true_positives,
                      r.pr.false_positives, r.pr.false_negatives, r.pr.precision,
                      r.pr.recall, r.timings.ingest, r.timings.hashing, r.timings.indexing,
                      r.timings.search, r.timings.matching, r.timings.verification,
                      r.timings.total);
        (*out) << buf;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"streaming loop-closure detector over descriptor containers"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "write a synthetic descriptor container");
    std::string gen_out, gen_gt;
    bool gen_text = false;
    SyntheticConfig sc;
    std::vector<std::string> segment_specs;
    gen->add_option("--out", gen_out, "container path")->required();
    gen->add_option("--gt", gen_gt, "ground-truth path");
    gen->add_flag("--text", gen_text, "write the text container variant");
    gen->add_option("--frames", sc.n_frames, "stream length");
    gen->add_option("--segment", segment_specs, "revisit segment start:length:offset");
    gen->add_option("--psi", sc.psi, "exclusion horizon the stream targets");
    gen->add_option("--fps", sc.fps, "frame rate");
    gen->add_option("--global-dim", sc.global_dim, "global descriptor dimension");
    gen->add_option("--local-dim", sc.local_dim, "local descriptor dimension");
    gen->add_option("--locals-per-frame", sc.locals_per_frame, "local descriptors per frame");
    gen->add_option("--global-noise", sc.global_noise, "relative revisit global noise");
    gen->add_option("--local-noise", sc.local_noise, "relative revisit local noise");
    gen->add_option("--walk-alpha", sc.walk_alpha, "latent walk correlation");
    gen->add_option("--seed", sc.seed, "generator seed");

    // run
    auto* run = app.add_subcommand("run", "stream a container through the detector");
    std::string run_in, run_out, run_graph;
    bool run_timings = false;
    RunFlags run_flags;
    run->add_option("--in", run_in, "container path")->required();
    run->add_option("--out", run_out, "detections CSV path")->required();
    run->add_option("--dump-graph", run_graph, "write the final graph serialization here");
    run->add_flag("--timings", run_timings, "print per-stage timing table");
    add_run_flags(run, run_flags);

    // score
    auto* sco = app.add_subcommand("score", "precision/recall of detections vs ground truth");
    std::string sco_det, sco_gt;
    std::uint32_t sco_tol = 10;
    sco->add_option("--detections", sco_det, "detections CSV path")->required();
    sco->add_option("--gt", sco_gt, "ground-truth path")->required();
    sco->add_option("--tolerance", sco_tol, "match-id tolerance in frames");

    // sweep
    auto* swp = app.add_subcommand("sweep", "rerun the detector across one parameter axis");
    std::string swp_in, swp_gt, swp_axis, swp_out;
    std::vector<double> swp_values;
    std::uint32_t swp_tol = 10;
    RunFlags swp_flags;
    swp->add_option("--in", swp_in, "container path")->required();
    swp->add_option("--gt", swp_gt, "ground-truth path")->required();
    swp->add_option("--axis", swp_axis, "one of M, ef, m, epsilon, n")->required();
    swp->add_option("--values", swp_values, "axis values")->required()->delimiter(',');
    swp->add_option("--out", swp_out, "result CSV path (default stdout)");
    swp->add_option("--tolerance", swp_tol, "match-id tolerance in frames");
    add_run_flags(swp, swp_flags);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_generate(gen_out, gen_gt, gen_text, sc, segment_specs);
        if (run->parsed()) return cmd_run(run_in, run_out, run_flags, run_graph, run_timings);
        if (sco->parsed()) return cmd_score(sco_det, sco_gt, sco_tol);
        if (swp->parsed())
            return cmd_sweep(swp_in, swp_gt, swp_axis, swp_values, swp_flags, swp_out, swp_tol);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
