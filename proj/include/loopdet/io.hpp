#pragma once

#include "loopdet/frame.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace loopdet {

static_assert(std::endian::native == std::endian::little,
              "container I/O writes native byte order and expects little-endian");

// ---------------------------------------------------------------- container

// Descriptor container. Binary layout: magic "FILD", version u16 (= 1),
// global dim u32, local dim u32, then per-frame blocks of
//   timestamp f64, global f32*D, count u32, count * (x f32, y f32, local f32*d).
// The text twin starts with the line "FILDTEXT" and carries the same fields
// as whitespace-separated decimals; it exists for hand-written fixtures.
class ContainerWriter {
public:
    ContainerWriter(std::ostream& os, std::uint32_t global_dim, std::uint32_t local_dim,
                    bool text = false)
        : os_(os), global_dim_(global_dim), local_dim_(local_dim), text_(text) {
        if (text_) {
            os_ << "FILDTEXT\n" << global_dim_ << " " << local_dim_ << "\n";
        } else {
            os_.write("FILD", 4);
            put_u16(1);
            put_u32(global_dim_);
            put_u32(local_dim_);
        }
    }

    void add(const IngestRecord& rec) {
        if (rec.global.size() != global_dim_)
            throw std::invalid_argument("ContainerWriter: global dimension mismatch");
        for (const auto& l : rec.locals)
            if (l.values.size() != local_dim_)
                throw std::invalid_argument("ContainerWriter: local dimension mismatch");
        if (text_) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.17g", rec.timestamp);
            os_ << "f " << buf << " " << rec.locals.size() << "\n";
            write_floats_text(rec.global);
            for (const auto& l : rec.locals) {
                std::snprintf(buf, sizeof buf, "%.9g %.9g", l.x, l.y);
                os_ << buf;
                for (float v : l.values) {
                    std::snprintf(buf, sizeof buf, " %.9g", v);
                    os_ << buf;
                }
                os_ << "\n";
            }
            return;
        }
        put_f64(rec.timestamp);
        os_.write(reinterpret_cast<const char*>(rec.global.data()),
                  static_cast<std::streamsize>(rec.global.size() * sizeof(float)));
        put_u32(static_cast<std::uint32_t>(rec.locals.size()));
        for (const auto& l : rec.locals) {
            put_f32(l.x);
            put_f32(l.y);
            os_.write(reinterpret_cast<const char*>(l.values.data()),
                      static_cast<std::streamsize>(l.values.size() * sizeof(float)));
        }
    }

private:
    void put_u16(std::uint16_t v) { os_.write(reinterpret_cast<const char*>(&v), sizeof v); }
    void put_u32(std::uint32_t v) { os_.write(reinterpret_cast<const char*>(&v), sizeof v); }
    void put_f32(float v) { os_.write(reinterpret_cast<const char*>(&v), sizeof v); }
    void put_f64(double v) { os_.write(reinterpret_cast<const char*>(&v), sizeof v); }

    void write_floats_text(const std::vector<float>& vals) {
        char buf[48];
        for (std::size_t i = 0; i < vals.size(); ++i) {
            std::snprintf(buf, sizeof buf, i ? " %.9g" : "%.9g", vals[i]);
            os_ << buf;
        }
        os_ << "\n";
    }

    std::ostream& os_;
    std::uint32_t global_dim_;
    std::uint32_t local_dim_;
    bool text_;
};

class ContainerReader {
public:
    explicit ContainerReader(std::istream& is) : is_(is) {
        char magic[4];
        is_.read(magic, 4);
        if (is_.gcount() != 4 || std::string(magic, 4) != "FILD")
            throw std::runtime_error("container: bad magic");
        char v[2];
        is_.read(v, 2);
        if (is_.gcount() != 2) throw std::runtime_error("container: truncated header");
        if (v[0] == 'T' && v[1] == 'E') {
            std::string rest;
            std::getline(is_, rest); // consume "XT" and the newline
            if (rest != "XT") throw std::runtime_error("container: bad magic");
            text_ = true;
            if (!(is_ >> global_dim_ >> local_dim_))
                throw std::runtime_error("container: bad text header");
        } else {
            std::uint16_t version;
            std::memcpy(&version, v, 2);
            if (version != 1) throw std::runtime_error("container: unsupported version");
            global_dim_ = get_u32();
            local_dim_ = get_u32();
        }
        if (global_dim_ == 0 || local_dim_ == 0)
            throw std::runtime_error("container: zero dimension");
    }

    std::uint32_t global_dim() const { return global_dim_; }
    std::uint32_t local_dim() const { return local_dim_; }

    /// Reads the next frame. False on clean end of file; throws on anything
    /// torn or malformed.
    bool next(IngestRecord& out) {
        return text_ ? next_text(out) : next_binary(out);
    }

    std::vector<IngestRecord> read_all() {
        std::vector<IngestRecord> out;
        IngestRecord rec;
        while (next(rec)) out.push_back(std::move(rec));
        return out;
    }

private:
    bool next_binary(IngestRecord& out) {
        double ts;
        is_.read(reinterpret_cast<char*>(&ts), sizeof ts);
        if (is_.gcount() == 0) return false;
        if (is_.gcount() != sizeof ts) throw std::runtime_error("container: torn frame");
        out.timestamp = ts;
        out.global.resize(global_dim_);
        read_exact(out.global.data(), global_dim_ * sizeof(float));
        const std::uint32_t count = get_u32();
        if (count > (1u << 24)) throw std::runtime_error("container: absurd local count");
        out.locals.assign(count, LocalDescriptor{});
        for (auto& l : out.locals) {
            read_exact(&l.x, sizeof l.x);
            read_exact(&l.y, sizeof l.y);
            l.values.resize(local_dim_);
            read_exact(l.values.data(), local_dim_ * sizeof(float));
        }
        return true;
    }

    bool next_text(IngestRecord& out) {
        std::string tag;
        if (!(is_ >> tag)) return false;
        if (tag != "f") throw std::runtime_error("container: bad text frame tag");
        std::size_t count;
        if (!(is_ >> out.timestamp >> count))
            throw std::runtime_error("container: bad text frame header");
        out.global.resize(global_dim_);
        for (auto& v : out.global)
            if (!(is_ >> v)) throw std::runtime_error("container: torn text global");
        out.locals.assign(count, LocalDescriptor{});
        for (auto& l : out.locals) {
            if (!(is_ >> l.x >> l.y)) throw std::runtime_error("container: torn text local");
            l.values.resize(local_dim_);
            for (auto& v : l.values)
                if (!(is_ >> v)) throw std::runtime_error("container: torn text local");
        }
        return true;
    }

    void read_exact(void* dst, std::size_t bytes) {
        is_.read(static_cast<char*>(dst), static_cast<std::streamsize>(bytes));
        if (static_cast<std::size_t>(is_.gcount()) != bytes)
            throw std::runtime_error("container: torn frame");
    }

    std::uint32_t get_u32() {
        std::uint32_t v;
        read_exact(&v, sizeof v);
        return v;
    }

    std::istream& is_;
    std::uint32_t global_dim_ = 0;
    std::uint32_t local_dim_ = 0;
    bool text_ = false;
};

// ---------------------------------------------------------------- detections

struct DetectionRecord {
    std::uint32_t query_id = 0;
    std::uint32_t match_id = 0;
    double similarity = 0.0;
    int inliers = 0;
};

inline void write_detections(std::ostream& os, const std::vector<DetectionRecord>& rows) {
    os << "query_id,match_id,similarity,inliers\n";
    char buf[96];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%u,%u,%.6f,%d\n", r.query_id, r.match_id,
                      r.similarity, r.inliers);
        os << buf;
    }
}

inline std::vector<DetectionRecord> read_detections(std::istream& is) {
    std::vector<DetectionRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (lineno == 1 && line.rfind("query_id", 0) == 0) continue;
        DetectionRecord r;
        char extra;
        std::istringstream ss(line);
        std::string cell;
        std::uint32_t fields[2];
        for (int i = 0; i < 2; ++i) {
            if (!std::getline(ss, cell, ',')) cell.clear();
            std::istringstream cs(cell);
            if (!(cs >> fields[i]) || (cs >> extra))
                throw std::runtime_error("detections: bad line " + std::to_string(lineno));
        }
        r.query_id = fields[0];
        r.match_id = fields[1];
        if (!std::getline(ss, cell, ','))
            throw std::runtime_error("detections: bad line " + std::to_string(lineno));
        {
            std::istringstream cs(cell);
            if (!(cs >> r.similarity) || (cs >> extra))
                throw std::runtime_error("detections: bad line " + std::to_string(lineno));
        }
        if (!std::getline(ss, cell))
            throw std::runtime_error("detections: bad line " + std::to_string(lineno));
        {
            std::istringstream cs(cell);
            if (!(cs >> r.inliers) || (cs >> extra))
                throw std::runtime_error("detections: bad line " + std::to_string(lineno));
        }
        out.push_back(r);
    }
    return out;
}

// -------------------------------------------------------------- ground truth

// One annotated loop-closing query: the query frame and the id range its
// match may legitimately fall into.
struct GroundTruthEntry {
    std::uint32_t query_id = 0;
    std::uint32_t match_start = 0;
    std::uint32_t match_end = 0; // inclusive
};

inline void write_ground_truth(std::ostream& os, const std::vector<GroundTruthEntry>& rows) {
    for (const auto& r : rows)
        os << r.query_id << " " << r.match_start << " " << r.match_end << "\n";
}

inline std::vector<GroundTruthEntry> read_ground_truth(std::istream& is) {
    std::vector<GroundTruthEntry> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        GroundTruthEntry e;
        char extra;
        if (!(ss >> e.query_id >> e.match_start >> e.match_end) || (ss >> extra))
            throw std::runtime_error("ground truth: bad line " + std::to_string(lineno));
        if (e.match_end < e.match_start)
            throw std::runtime_error("ground truth: inverted range at line " +
                                     std::to_string(lineno));
        out.push_back(e);
    }
    return out;
}

} // namespace loopdet
