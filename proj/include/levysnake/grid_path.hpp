#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace levysnake {

// A uniformly sampled real-valued path skeleton. Jumps above the small-jump
// threshold are recorded separately so that downstream consumers (the
// exploration stack) can tell the jump part of an increment from the
// continuous part.
struct GridPath {
    double dt = 0.0;
    std::vector<double> values;
    double origin_time = 0.0;
    // (index i, size s): a jump of size s happened inside step i-1 -> i.
    std::vector<std::pair<std::size_t, double>> jumps;
    std::uint64_t seed = 0;

    std::size_t size() const { return values.size(); }
    double back() const { return values.back(); }
    double duration() const {
        return values.empty() ? 0.0 : dt * static_cast<double>(values.size() - 1);
    }
    double time_at(std::size_t i) const {
        return origin_time + dt * static_cast<double>(i);
    }
};

inline GridPath running_infimum(const GridPath& path) {
    GridPath inf = path;
    inf.jumps.clear();
    double m = path.values.empty() ? 0.0 : path.values.front();
    for (std::size_t i = 0; i < inf.values.size(); ++i) {
        if (inf.values[i] < m) m = inf.values[i];
        inf.values[i] = m;
    }
    return inf;
}

// Binary column dump: one text header line, then the raw little-endian
// doubles. Jump annotations are not serialized.
inline void write_grid_path(const GridPath& path, const std::string& file) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + file);
    out << "dt=" << path.dt << ", n=" << path.values.size()
        << ", seed=" << path.seed << "\n";
    out.write(reinterpret_cast<const char*>(path.values.data()),
              static_cast<std::streamsize>(path.values.size() * sizeof(double)));
}

inline GridPath read_grid_path(const std::string& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for read: " + file);
    std::string header;
    std::getline(in, header);
    GridPath path;
    std::size_t n = 0;
    if (std::sscanf(header.c_str(), "dt=%lf, n=%zu, seed=%llu", &path.dt, &n,
                    reinterpret_cast<unsigned long long*>(&path.seed)) < 2)
        throw std::runtime_error("bad grid path header: " + header);
    path.values.resize(n);
    in.read(reinterpret_cast<char*>(path.values.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw std::runtime_error("truncated grid path file: " + file);
    return path;
}

}  // namespace levysnake
