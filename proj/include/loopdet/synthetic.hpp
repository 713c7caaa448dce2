#pragma once

#include "loopdet/descriptor.hpp"
#include "loopdet/frame.hpp"
#include "loopdet/io.hpp"
#include "loopdet/rng.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace loopdet {

// Frames [start, start + length) replay the scenes of frames `offset` earlier.
struct RevisitSegment {
    std::uint32_t start = 0;
    std::uint32_t length = 0;
    std::uint32_t offset = 0;
};

// Pinhole pair for planted scenes: the source frame sees its cloud through
// the identity camera, the revisit through a nearby rotated + translated one.
// Bounds on baseline and yaw keep every projection inside the image so the
// emitted keypoints are always valid.
struct TwoViewConfig {
    double focal = 500.0;
    double cx = 320.0;
    double cy = 320.0;
    double baseline = 0.6; // camera separation; zero would mean coincident cameras
    double max_yaw = 0.08; // radians
};

struct SyntheticConfig {
    std::uint32_t n_frames = 2000;
    std::vector<RevisitSegment> segments{{1500, 500, 1000}};
    double psi = 40.0; // exclusion horizon the dataset is meant to be run with
    double fps = 2.0;
    int global_dim = 1280;
    int local_dim = 128;
    int locals_per_frame = 100;
    double global_noise = 0.02;  // relative perturbation of revisited globals
    double local_noise = 0.1;    // relative perturbation of revisited locals
    double walk_alpha = 0.9;     // frame-to-frame correlation of the latent walk
    TwoViewConfig view;
    std::uint64_t seed = 424242;

    void validate() const {
        if (n_frames == 0) throw std::invalid_argument("SyntheticConfig: n_frames is zero");
        if (global_dim < 1 || local_dim < 1)
            throw std::invalid_argument("SyntheticConfig: dimensions must be positive");
        if (locals_per_frame < 0)
            throw std::invalid_argument("SyntheticConfig: negative locals_per_frame");
        if (!(psi * fps >= 1.0))
            throw std::invalid_argument("SyntheticConfig: psi * fps must be >= 1");
        if (!(walk_alpha >= 0.0 && walk_alpha < 1.0))
            throw std::invalid_argument("SyntheticConfig: walk_alpha must lie in [0,1)");
        if (!(global_noise >= 0.0) || !(local_noise >= 0.0))
            throw std::invalid_argument("SyntheticConfig: negative noise");
        if (!(view.baseline > 0.0))
            throw std::invalid_argument("SyntheticConfig: cameras coincident");
        if (view.baseline > 0.8 || view.max_yaw < 0.0 || view.max_yaw > 0.1)
            throw std::invalid_argument(
                "SyntheticConfig: view too wide, projections could leave the image");
        if (!(view.focal > 0.0) || view.focal * 0.62 > view.cx || view.focal * 0.3 > view.cy)
            throw std::invalid_argument("SyntheticConfig: implausible camera intrinsics");
        const auto window = static_cast<std::uint32_t>(std::ceil(psi * fps));
        for (const auto& s : segments) {
            if (s.length == 0) throw std::invalid_argument("SyntheticConfig: empty segment");
            if (s.offset <= window)
                throw std::invalid_argument(
                    "SyntheticConfig: revisit offset " + std::to_string(s.offset) +
                    " must exceed the exclusion window " + std::to_string(window));
            if (s.start < s.offset)
                throw std::invalid_argument("SyntheticConfig: segment precedes its source");
            if (std::uint64_t(s.start) + s.length > n_frames)
                throw std::invalid_argument("SyntheticConfig: segment exceeds n_frames");
        }
        // Revisit ranges may not collide, and no revisit may serve as another
        // segment's source (scenes exist only for ordinary frames).
        std::map<std::uint32_t, int> role; // 1 = revisit, 2 = source
        for (const auto& s : segments)
            for (std::uint32_t i = 0; i < s.length; ++i) {
                if (!role.emplace(s.start + i, 1).second)
                    throw std::invalid_argument("SyntheticConfig: overlapping segments");
            }
        for (const auto& s : segments)
            for (std::uint32_t i = 0; i < s.length; ++i) {
                const std::uint32_t src = s.start + i - s.offset;
                if (role.count(src) && role[src] == 1)
                    throw std::invalid_argument(
                        "SyntheticConfig: a revisit frame cannot be another segment's source");
            }
    }
};

struct SyntheticDataset {
    int global_dim = 0;
    int local_dim = 0;
    double fps = 0.0;
    std::vector<IngestRecord> frames;
    std::vector<GroundTruthEntry> truth; // one entry per planted revisit frame
};

namespace detail {

struct PlantedScene {
    std::vector<Eigen::Vector3d> points;   // in the source camera's frame
    std::vector<std::vector<float>> descs; // source local descriptors
};

inline std::vector<float> perturbed(const std::vector<float>& base, double rel_noise,
                                    Rng& rng) {
    std::vector<float> out = base;
    if (rel_noise <= 0.0) return out; // bitwise copy, similarity exactly 1
    const double scale =
        rel_noise * l2_norm(base) / std::sqrt(static_cast<double>(base.size()));
    for (auto& v : out) v += static_cast<float>(scale * rng.normal());
    return out;
}

inline std::vector<LocalDescriptor> fresh_locals(const SyntheticConfig& cfg, Rng& rng) {
    std::vector<LocalDescriptor> out(static_cast<std::size_t>(cfg.locals_per_frame));
    for (auto& l : out) {
        l.x = static_cast<float>(rng.uniform(0.0, 2.0 * cfg.view.cx));
        l.y = static_cast<float>(rng.uniform(0.0, 2.0 * cfg.view.cy));
        l.values.resize(static_cast<std::size_t>(cfg.local_dim));
        for (auto& v : l.values) v = static_cast<float>(rng.normal());
    }
    return out;
}

inline void check_on_screen(const SyntheticConfig& cfg, double u, double v) {
    if (u < 0.0 || v < 0.0 || u > 2.0 * cfg.view.cx || v > 2.0 * cfg.view.cy)
        throw std::runtime_error("generate_synthetic: planted projection left the image");
}

// Turns a source frame's fresh locals into views of a 3D cloud: keypoints are
// replaced by identity-camera projections, descriptors are kept and retained
// together with the points for the later replay.
inline void plant_scene(const SyntheticConfig& cfg, Rng& rng,
                        std::vector<LocalDescriptor>& locals, PlantedScene& scene) {
    scene.points.reserve(locals.size());
    scene.descs.reserve(locals.size());
    for (auto& l : locals) {
        const Eigen::Vector3d X(rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2),
                                rng.uniform(5.0, 9.0));
        const double u = cfg.view.focal * X.x() / X.z() + cfg.view.cx;
        const double v = cfg.view.focal * X.y() / X.z() + cfg.view.cy;
        check_on_screen(cfg, u, v);
        l.x = static_cast<float>(u);
        l.y = static_cast<float>(v);
        scene.points.push_back(X);
        scene.descs.push_back(l.values);
    }
}

// Second view of a planted scene: a fresh nearby camera, exact projections,
// noisy copies of the source descriptors.
inline std::vector<LocalDescriptor> replay_scene(const SyntheticConfig& cfg, Rng& rng,
                                                 const PlantedScene& scene) {
    const double yaw = rng.uniform(-cfg.view.max_yaw, cfg.view.max_yaw);
    const double c = std::cos(yaw), s = std::sin(yaw);
    Eigen::Matrix3d R;
    R << c, 0, s, 0, 1, 0, -s, 0, c;
    const double b = cfg.view.baseline;
    Eigen::Vector3d t(rng.uniform01() < 0.5 ? -b : b, rng.uniform(-0.2 * b, 0.2 * b),
                      rng.uniform(-0.2 * b, 0.2 * b));

    std::vector<LocalDescriptor> out;
    out.reserve(scene.points.size());
    for (std::size_t i = 0; i < scene.points.size(); ++i) {
        const Eigen::Vector3d X = R * scene.points[i] + t;
        const double u = cfg.view.focal * X.x() / X.z() + cfg.view.cx;
        const double v = cfg.view.focal * X.y() / X.z() + cfg.view.cy;
        check_on_screen(cfg, u, v);
        LocalDescriptor l;
        l.x = static_cast<float>(u);
        l.y = static_cast<float>(v);
        l.values = perturbed(scene.descs[i], cfg.local_noise, rng);
        out.push_back(std::move(l));
    }
    return out;
}

} // namespace detail

// Deterministic stream with planted loop closures. Globals follow a
// correlated latent walk (video-like smoothness); a revisit frame reuses the
// latent of its source frame plus relative noise, so retrieval has one true
// near-duplicate. Locals of ordinary frames are fresh random descriptors at
// random keypoints; a revisit re-projects its source's 3D cloud through a
// second camera and perturbs the source descriptors, giving the verifier a
// true epipolar model to find.
inline SyntheticDataset generate_synthetic(const SyntheticConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);

    std::map<std::uint32_t, std::uint32_t> source_of; // revisit -> source
    for (const auto& seg : cfg.segments)
        for (std::uint32_t i = 0; i < seg.length; ++i)
            source_of[seg.start + i] = seg.start + i - seg.offset;
    std::map<std::uint32_t, detail::PlantedScene> scenes;
    for (const auto& [q, src] : source_of) scenes.emplace(src, detail::PlantedScene{});
    std::map<std::uint32_t, std::vector<float>> latents; // sources only

    SyntheticDataset out;
    out.global_dim = cfg.global_dim;
    out.local_dim = cfg.local_dim;
    out.fps = cfg.fps;
    out.frames.reserve(cfg.n_frames);

    const double fresh_scale = std::sqrt(1.0 - cfg.walk_alpha * cfg.walk_alpha);
    std::vector<float> walk(static_cast<std::size_t>(cfg.global_dim));
    for (auto& v : walk) v = static_cast<float>(rng.normal());

    for (std::uint32_t t = 0; t < cfg.n_frames; ++t) {
        if (t > 0)
            for (auto& v : walk)
                v = static_cast<float>(cfg.walk_alpha * v + fresh_scale * rng.normal());

        IngestRecord rec;
        rec.timestamp = static_cast<double>(t) / cfg.fps;

        const auto rev = source_of.find(t);
        if (rev == source_of.end()) {
            rec.global = walk;
            rec.locals = detail::fresh_locals(cfg, rng);
            const auto scene = scenes.find(t);
            if (scene != scenes.end()) {
                detail::plant_scene(cfg, rng, rec.locals, scene->second);
                latents[t] = rec.global;
            }
        } else {
            const std::uint32_t src = rev->second;
            rec.global = detail::perturbed(latents.at(src), cfg.global_noise, rng);
            rec.locals = detail::replay_scene(cfg, rng, scenes.at(src));
            out.truth.push_back(GroundTruthEntry{t, src, src});
        }
        out.frames.push_back(std::move(rec));
    }
    return out;
}

} // namespace loopdet
