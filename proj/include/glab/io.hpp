#pragma once

// CSV and small-file helpers. Floats are always written with shortest
// round-trip text so re-importing reproduces values bit-exactly.

#include <filesystem>
#include <fstream>
#include <sstream>

#include "glab/guidance.hpp"

namespace glab {

namespace fs = std::filesystem;

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open csv: " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        rows.push_back(split_csv_line(line));
    }
    return rows;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << content;
    if (!out) throw IoError("failed writing: " + path);
}

// Trajectory CSV: header t,z_x,z_y,w,delta_norm; one row per step and a
// terminal row carrying the final state (t = 0 for diffusion, t = 1 for
// flow) with w and delta_norm zeroed.
inline std::string trajectory_to_csv(const Trajectory& traj) {
    std::ostringstream os;
    os << "t,z_x,z_y,w,delta_norm\n";
    for (const auto& s : traj.steps) {
        os << format_double(s.t) << ',' << format_double(s.z[0]) << ',' << format_double(s.z[1]) << ','
           << format_double(s.w) << ',' << format_double(s.delta_norm) << '\n';
    }
    double t_final = traj.sampler == "flow-euler" ? 1.0 : 0.0;
    os << format_double(t_final) << ',' << format_double(traj.z0[0]) << ',' << format_double(traj.z0[1])
       << ",0,0\n";
    return os.str();
}

struct TrajectoryCsv {
    std::vector<double> t;
    std::vector<Vec> z;
    std::vector<double> w;
    std::vector<double> delta_norm;
    Vec endpoint;  // from the terminal row

    std::size_t step_count() const { return t.size(); }
};

inline TrajectoryCsv parse_trajectory_csv(const std::string& path) {
    auto rows = read_csv(path);
    if (rows.size() < 2 || rows[0].size() != 5 || rows[0][0] != "t")
        throw IoError("bad trajectory csv: " + path);
    TrajectoryCsv tc;
    for (std::size_t i = 1; i + 1 < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() != 5) throw IoError("bad trajectory row in " + path);
        tc.t.push_back(parse_double(r[0]));
        tc.z.push_back({parse_double(r[1]), parse_double(r[2])});
        tc.w.push_back(parse_double(r[3]));
        tc.delta_norm.push_back(parse_double(r[4]));
    }
    const auto& last = rows.back();
    tc.endpoint = {parse_double(last[1]), parse_double(last[2])};
    return tc;
}

inline std::string matrix_to_csv(const std::vector<Vec>& m) {
    std::ostringstream os;
    for (const auto& row : m) {
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j) os << ',';
            os << format_double(row[j]);
        }
        os << '\n';
    }
    return os.str();
}

inline std::vector<Vec> parse_matrix_csv(const std::string& path) {
    auto rows = read_csv(path);
    std::vector<Vec> m;
    for (const auto& r : rows) {
        Vec row;
        row.reserve(r.size());
        for (const auto& cell : r) row.push_back(parse_double(cell));
        m.push_back(std::move(row));
    }
    if (m.empty()) throw IoError("empty matrix csv: " + path);
    return m;
}

}  // namespace glab
