#pragma once

// SVG emitters for run directories: endpoint scatter with the ring annulus
// and the +-pi/64 wedge, guidance-scale-over-time polylines, and heatmap
// rasters. CSV stays the canonical data artifact; these are presentation
// only. Everything is rendered to strings first, files are written last.

#include "glab/runs.hpp"

namespace glab {

namespace detail {

inline std::string svg_header(double w, double h) {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
       << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
    return os.str();
}

// linear two-stop color map (dark blue -> yellow)
inline std::string heat_color(double v, double lo, double hi) {
    double u = hi > lo ? (v - lo) / (hi - lo) : 0.0;
    u = std::clamp(u, 0.0, 1.0);
    int r = static_cast<int>(20 + 235 * u);
    int g = static_cast<int>(30 + 200 * u);
    int b = static_cast<int>(120 * (1.0 - u) + 40);
    std::ostringstream os;
    os << "rgb(" << r << ',' << g << ',' << b << ')';
    return os.str();
}

}  // namespace detail

// Endpoint scatter over [-1.6, 1.6]^2 with annulus circles at mu_r +- 3
// sigma_r and the adherence wedge at c +- pi/64.
inline std::string scatter_svg(const std::vector<Vec>& endpoints, const RingSpec& ring, double c_angle,
                               double tol = kAdherenceTol) {
    const double size = 480.0;
    const double extent = 1.6;
    auto px = [&](double x) { return (x + extent) / (2.0 * extent) * size; };
    auto py = [&](double y) { return (extent - y) / (2.0 * extent) * size; };

    std::ostringstream os;
    os << detail::svg_header(size, size);
    os << "<rect width=\"" << size << "\" height=\"" << size << "\" fill=\"white\"/>\n";
    for (double r : {ring.mu_r - 3.0 * ring.sigma_r, ring.mu_r + 3.0 * ring.sigma_r}) {
        os << "<circle cx=\"" << px(0) << "\" cy=\"" << py(0) << "\" r=\"" << r / (2.0 * extent) * size
           << "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";
    }
    double r_out = ring.mu_r + 4.0 * ring.sigma_r;
    for (double a : {c_angle - tol, c_angle + tol}) {
        os << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(r_out * std::cos(a))
           << "\" y2=\"" << py(r_out * std::sin(a))
           << "\" stroke=\"blue\" stroke-dasharray=\"4 3\" stroke-width=\"1\"/>\n";
    }
    for (const auto& p : endpoints) {
        os << "<circle cx=\"" << px(p[0]) << "\" cy=\"" << py(p[1])
           << "\" r=\"2.2\" fill=\"crimson\" fill-opacity=\"0.6\"/>\n";
    }
    os << "</svg>\n";
    return os.str();
}

// One polyline per trajectory of w against step index.
inline std::string wplot_svg(const std::vector<TrajectoryCsv>& trajs) {
    const double width = 560.0, height = 360.0, pad = 40.0;
    double w_lo = 0.0, w_hi = 1e-9;
    std::size_t n_steps = 1;
    for (const auto& tr : trajs) {
        n_steps = std::max(n_steps, tr.step_count());
        for (double w : tr.w) {
            w_lo = std::min(w_lo, w);
            w_hi = std::max(w_hi, w);
        }
    }
    auto px = [&](double i) { return pad + i / std::max<double>(1.0, n_steps - 1) * (width - 2 * pad); };
    auto py = [&](double w) { return height - pad - (w - w_lo) / (w_hi - w_lo) * (height - 2 * pad); };

    const char* colors[] = {"crimson", "steelblue", "seagreen", "darkorange", "purple", "teal"};
    std::ostringstream os;
    os << detail::svg_header(width, height);
    os << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    os << "<line x1=\"" << pad << "\" y1=\"" << height - pad << "\" x2=\"" << width - pad << "\" y2=\""
       << height - pad << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\"" << height - pad
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << pad << "\" y=\"" << pad - 8 << "\" font-size=\"11\">w over steps (max "
       << format_double(w_hi) << ", min " << format_double(w_lo) << ")</text>\n";
    for (std::size_t k = 0; k < trajs.size(); ++k) {
        os << "<polyline fill=\"none\" stroke=\"" << colors[k % 6] << "\" stroke-width=\"1.2\" points=\"";
        for (std::size_t i = 0; i < trajs[k].step_count(); ++i)
            os << px(static_cast<double>(i)) << ',' << py(trajs[k].w[i]) << ' ';
        os << "\"/>\n";
    }
    os << "</svg>\n";
    return os.str();
}

// Raster of an nx-by-ny matrix with a linear color map; min and max are
// annotated below the raster.
inline std::string heatmap_svg(const std::vector<Vec>& m) {
    if (m.empty() || m[0].empty()) throw ConfigError("heatmap_svg: empty matrix");
    std::size_t ny = m.size(), nx = m[0].size();
    double lo = m[0][0], hi = m[0][0];
    for (const auto& row : m)
        for (double v : row) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    const double cell = std::max(2.0, 512.0 / std::max(nx, ny));
    double width = nx * cell, height = ny * cell + 24.0;
    std::ostringstream os;
    os << detail::svg_header(width, height);
    for (std::size_t i = 0; i < ny; ++i)
        for (std::size_t j = 0; j < nx; ++j) {
            os << "<rect x=\"" << j * cell << "\" y=\"" << (ny - 1 - i) * cell << "\" width=\"" << cell
               << "\" height=\"" << cell << "\" fill=\"" << detail::heat_color(m[i][j], lo, hi)
               << "\"/>\n";
        }
    os << "<text x=\"4\" y=\"" << ny * cell + 16 << "\" font-size=\"11\">min " << format_double(lo)
       << "  max " << format_double(hi) << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

// Reads a run directory and emits plots/*.svg. Missing inputs raise before
// any file is created.
inline std::vector<std::string> export_plots(const std::string& run_dir) {
    fs::path dir(run_dir);
    if (!fs::exists(dir)) throw IoError("run directory not found: " + run_dir);

    std::vector<TrajectoryCsv> trajs;
    for (int i = 0;; ++i) {
        fs::path csv = dir / ("traj_" + std::to_string(i) + ".csv");
        if (!fs::exists(csv)) break;
        trajs.push_back(parse_trajectory_csv(csv.string()));
    }

    std::vector<std::pair<std::string, std::vector<Vec>>> heatmaps;
    for (const auto& entry : fs::directory_iterator(dir)) {
        std::string name = entry.path().filename().string();
        if (entry.path().extension() == ".csv" && name.find("heatmap") != std::string::npos)
            heatmaps.emplace_back(entry.path().stem().string(), parse_matrix_csv(entry.path().string()));
    }
    std::sort(heatmaps.begin(), heatmaps.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    if (trajs.empty() && heatmaps.empty())
        throw IoError("export_plots: no trajectory or heatmap CSVs in " + run_dir);

    RingSpec ring;
    double c_angle = 3.0 * kPi / 4.0;
    fs::path run_json_path = dir / "run.json";
    if (fs::exists(run_json_path)) {
        Json rj;
        std::ifstream in(run_json_path);
        in >> rj;
        ring = ring_from_json(rj.value("ring", Json::object()));
        c_angle = rj.value("c", c_angle);
    }

    // render everything, then write
    std::vector<std::pair<std::string, std::string>> files;
    if (!trajs.empty()) {
        std::vector<Vec> endpoints;
        for (const auto& tr : trajs) endpoints.push_back(tr.endpoint);
        files.emplace_back("scatter.svg", scatter_svg(endpoints, ring, c_angle));
        files.emplace_back("wplot.svg", wplot_svg(trajs));
    }
    for (const auto& [stem, m] : heatmaps) files.emplace_back(stem + ".svg", heatmap_svg(m));

    fs::path plot_dir = dir / "plots";
    fs::create_directories(plot_dir);
    std::vector<std::string> written;
    for (const auto& [name, content] : files) {
        std::string path = (plot_dir / name).string();
        write_text_file(path, content);
        written.push_back(path);
    }
    return written;
}

}  // namespace glab
