#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ngsvar/common.hpp"
#include "ngsvar/estimator.hpp"
#include "ngsvar/inference.hpp"
#include "ngsvar/simulation.hpp"
#include "ngsvar/tuning.hpp"
#include "ngsvar/var.hpp"

namespace ngsvar {

enum class ColumnTransform { None, Log100 };

inline ColumnTransform parse_transform(const std::string& s) {
    if (s == "none" || s.empty()) return ColumnTransform::None;
    if (s == "log100") return ColumnTransform::Log100;
    throw ValidationError("unknown transform '" + s + "' (expected none|log100)");
}

struct CsvLoadResult {
    SeriesPanel panel;
    std::vector<std::string> timestamps;
    std::vector<std::string> warnings;
};

// First column is a time stamp, the rest are numeric series. Rows with a
// missing or unparseable cell are rejected with the offending line number.
inline CsvLoadResult load_csv(const std::string& path,
                              const std::vector<ColumnTransform>& transforms = {}) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open data file: " + path);

    auto split = [](const std::string& line) {
        std::vector<std::string> out;
        std::string cell;
        std::stringstream ss(line);
        while (std::getline(ss, cell, ',')) out.push_back(cell);
        if (!line.empty() && line.back() == ',') out.emplace_back();
        return out;
    };
    auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return std::string();
        const auto b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
    };

    std::string line;
    if (!std::getline(in, line)) throw ValidationError("empty data file: " + path);
    const auto header = split(line);
    if (header.size() < 2)
        throw ValidationError("need a time stamp column plus at least one series");
    const std::size_t ncols = header.size() - 1;
    if (!transforms.empty() && transforms.size() != ncols)
        throw ValidationError("transform list does not match column count");

    CsvLoadResult out;
    for (std::size_t j = 1; j < header.size(); ++j)
        out.panel.names.push_back(trim(header[j]));

    std::vector<std::vector<double>> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto cells = split(line);
        if (cells.size() != header.size())
            throw ValidationError("line " + std::to_string(lineno) + ": expected " +
                                  std::to_string(header.size()) + " cells, got " +
                                  std::to_string(cells.size()));
        out.timestamps.push_back(trim(cells[0]));
        std::vector<double> row(ncols);
        for (std::size_t j = 1; j < cells.size(); ++j) {
            const std::string c = trim(cells[j]);
            if (c.empty() || c == "NA" || c == "nan" || c == "NaN" || c == ".")
                throw ValidationError("line " + std::to_string(lineno) +
                                      ", column " + std::to_string(j + 1) +
                                      " (" + out.panel.names[j - 1] +
                                      "): missing value");
            std::size_t pos = 0;
            double v;
            try {
                v = std::stod(c, &pos);
            } catch (const std::exception&) {
                pos = 0;
            }
            if (pos != c.size())
                throw ValidationError("line " + std::to_string(lineno) +
                                      ", column " + std::to_string(j + 1) +
                                      ": cannot parse '" + c + "'");
            if (!transforms.empty() &&
                transforms[j - 1] == ColumnTransform::Log100) {
                if (v <= 0.0)
                    throw ValidationError("line " + std::to_string(lineno) +
                                          ", column " + std::to_string(j + 1) +
                                          ": log transform needs positive values");
                v = 100.0 * std::log(v);
            }
            row[j - 1] = v;
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ValidationError("no data rows in " + path);

    for (std::size_t t = 1; t < out.timestamps.size(); ++t)
        if (out.timestamps[t] <= out.timestamps[t - 1]) {
            out.warnings.push_back("time stamps not strictly increasing near row " +
                                   std::to_string(t + 2));
            break;
        }

    out.panel.values.resize(static_cast<int>(rows.size()), static_cast<int>(ncols));
    for (std::size_t t = 0; t < rows.size(); ++t)
        for (std::size_t j = 0; j < ncols; ++j)
            out.panel.values(static_cast<int>(t), static_cast<int>(j)) = rows[t][j];
    return out;
}

// Run-wide configuration, JSON on disk, CLI flags override. Restriction
// cells are 1-based in configs and reports; the library uses 0-based.
struct RunConfig {
    std::string data_path;
    std::string dgp_preset;  // mc | mc-lagged | proxy | a-type
    int T = 1000;
    int p = 0;
    std::string restriction_preset;  // r1 | r2 | proxy | a-r1 | a-r2 | application
    std::vector<std::pair<int, int>> restriction_cells;  // 1-based
    std::string restriction_target = "B";
    double grid_lo = 1e-4, grid_hi = 1e3;
    int grid_count = 40;
    int cv_repetitions = 10;
    int bootstrap_draws = 0;
    int horizons = 12;
    double selection_threshold = 0.0;
    int replications = 100;
    std::uint64_t seed = 1;
    int threads = 0;
    std::string output_dir = "out";
    std::vector<std::string> transforms;

    void validate() const {
        if (data_path.empty() == dgp_preset.empty())
            throw ValidationError("exactly one of data path / DGP preset required");
        if (T <= 0 || grid_count <= 0 || cv_repetitions <= 0 || replications <= 0)
            throw ValidationError("counts must be positive");
        if (p < 0 || bootstrap_draws < 0 || horizons < 0)
            throw ValidationError("counts must be non-negative");
        if (restriction_target != "B" && restriction_target != "A")
            throw ValidationError("restriction target must be B or A");
        for (const auto& [i, j] : restriction_cells)
            if (i < 1 || j < 1)
                throw ValidationError("restriction cells are 1-based");
    }

    // Oil-market style monthly system: p = 12, 50 CV repetitions, threshold
    // 0.5, zeros b12 = b14 = 0 and b21 = b23 = b24 = 0.
    void apply_application_preset() {
        p = 12;
        cv_repetitions = 50;
        selection_threshold = 0.5;
        restriction_preset = "application";
        restriction_cells = {{1, 2}, {1, 4}, {2, 1}, {2, 3}, {2, 4}};
        restriction_target = "B";
    }

    RestrictionSet restrictions(int n) const {
        RestrictionSet rs;
        if (restriction_preset == "r1") rs = presets::restrictions_r1();
        else if (restriction_preset == "r2") rs = presets::restrictions_r2();
        else if (restriction_preset == "proxy") rs = presets::proxy_restrictions();
        else if (restriction_preset == "a-r1") rs = presets::a_type_r1();
        else if (restriction_preset == "a-r2") rs = presets::a_type_r2();
        else if (!restriction_preset.empty() && restriction_preset != "application")
            throw ValidationError("unknown restriction preset: " + restriction_preset);
        for (const auto& [i, j] : restriction_cells)
            rs.cells.emplace_back(i - 1, j - 1);
        if (restriction_target == "A") rs.type = PenaltyType::AMatrix;
        rs.validate(n);
        return rs;
    }

    DgpSpec dgp() const {
        if (dgp_preset == "mc") return presets::mc_dgp(T);
        if (dgp_preset == "mc-lagged") return presets::lagged_common_volatility_dgp(T);
        if (dgp_preset == "proxy") return presets::proxy_dgp(T);
        if (dgp_preset == "a-type") return presets::a_type_dgp(T);
        throw ValidationError("unknown DGP preset: " + dgp_preset);
    }

    std::vector<double> grid() const {
        return make_lambda_grid(grid_lo, grid_hi, grid_count);
    }
};

inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j;
    j["data_path"] = c.data_path;
    j["dgp_preset"] = c.dgp_preset;
    j["T"] = c.T;
    j["p"] = c.p;
    j["restriction_preset"] = c.restriction_preset;
    j["restriction_cells"] = c.restriction_cells;
    j["restriction_target"] = c.restriction_target;
    j["grid_lo"] = c.grid_lo;
    j["grid_hi"] = c.grid_hi;
    j["grid_count"] = c.grid_count;
    j["cv_repetitions"] = c.cv_repetitions;
    j["bootstrap_draws"] = c.bootstrap_draws;
    j["horizons"] = c.horizons;
    j["selection_threshold"] = c.selection_threshold;
    j["replications"] = c.replications;
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["output_dir"] = c.output_dir;
    j["transforms"] = c.transforms;
    return j;
}

inline RunConfig config_from_json(const nlohmann::json& j) {
    RunConfig c;
    auto get = [&](const char* key, auto& dst) {
        if (j.contains(key)) dst = j.at(key).get<std::decay_t<decltype(dst)>>();
    };
    get("data_path", c.data_path);
    get("dgp_preset", c.dgp_preset);
    get("T", c.T);
    get("p", c.p);
    get("restriction_preset", c.restriction_preset);
    get("restriction_cells", c.restriction_cells);
    get("restriction_target", c.restriction_target);
    get("grid_lo", c.grid_lo);
    get("grid_hi", c.grid_hi);
    get("grid_count", c.grid_count);
    get("cv_repetitions", c.cv_repetitions);
    get("bootstrap_draws", c.bootstrap_draws);
    get("horizons", c.horizons);
    get("selection_threshold", c.selection_threshold);
    get("replications", c.replications);
    get("seed", c.seed);
    get("threads", c.threads);
    get("output_dir", c.output_dir);
    get("transforms", c.transforms);
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("config parse error: ") + e.what());
    }
    return config_from_json(j);
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
    std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p);
    if (!out) throw ValidationError("cannot write " + p.string());
    out << std::setprecision(12);
    return out;
}

}  // namespace detail

// CSV schemas (also documented in the README):
//   matrix:       row,col,value                       (1-based indices)
//   irf:          variable,shock,horizon,value[,lo68,hi68,lo90,hi90]
//   fevd:         variable,shock,horizon,share
//   hd:           variable,t,shock,contribution        (shock 0 = baseline)
//   cv:           lambda,median,q40,q60,selected
//   experiment:   estimator,row,col,average,mse,coverage,width
//   diagnostics:  shock,skewness,excess_kurtosis,jb,jb_pvalue
//   a-report:     equation,variable,coefficient        (impact multipliers)

inline void write_matrix_csv(const std::filesystem::path& p, const Matrix& m) {
    auto out = detail::open_out(p);
    out << "row,col,value\n";
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j)
            out << i + 1 << ',' << j + 1 << ',' << m(i, j) << '\n';
}

inline void write_irf_csv(const std::filesystem::path& p, const ImpulseResponses& irf,
                          const BootstrapBands* bands = nullptr,
                          const std::vector<std::string>& names = {}) {
    auto out = detail::open_out(p);
    out << "variable,shock,horizon,value";
    if (bands)
        for (double lvl : bands->levels) {
            const int pct = static_cast<int>(std::lround(lvl * 100));
            out << ",lo" << pct << ",hi" << pct;
        }
    out << '\n';
    const int n = irf.n();
    auto label = [&](int i) {
        return i < static_cast<int>(names.size()) ? names[static_cast<std::size_t>(i)]
                                                  : "v" + std::to_string(i + 1);
    };
    for (std::size_t h = 0; h < irf.psi.size(); ++h)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                out << label(i) << ',' << j + 1 << ',' << h << ','
                    << irf.psi[h](i, j);
                if (bands)
                    for (std::size_t l = 0; l < bands->levels.size(); ++l)
                        out << ',' << bands->lower[l][h](i, j) << ','
                            << bands->upper[l][h](i, j);
                out << '\n';
            }
}

inline void write_fevd_csv(const std::filesystem::path& p,
                           const std::vector<Matrix>& shares,
                           const std::vector<std::string>& names = {}) {
    auto out = detail::open_out(p);
    out << "variable,shock,horizon,share\n";
    for (std::size_t h = 0; h < shares.size(); ++h) {
        const auto& m = shares[h];
        for (int i = 0; i < m.rows(); ++i)
            for (int j = 0; j < m.cols(); ++j) {
                const std::string v =
                    i < static_cast<int>(names.size())
                        ? names[static_cast<std::size_t>(i)]
                        : "v" + std::to_string(i + 1);
                out << v << ',' << j + 1 << ',' << h << ',' << m(i, j) << '\n';
            }
    }
}

inline void write_hd_csv(const std::filesystem::path& p,
                         const HistoricalDecomposition& hd) {
    auto out = detail::open_out(p);
    out << "variable,t,shock,contribution\n";
    const int T = static_cast<int>(hd.baseline.rows());
    const int n = static_cast<int>(hd.baseline.cols());
    for (int i = 0; i < n; ++i)
        for (int t = 0; t < T; ++t) {
            out << i + 1 << ',' << t + 1 << ",0," << hd.baseline(t, i) << '\n';
            for (std::size_t j = 0; j < hd.contributions.size(); ++j)
                out << i + 1 << ',' << t + 1 << ',' << j + 1 << ','
                    << hd.contributions[j](t, i) << '\n';
        }
}

inline void write_cv_csv(const std::filesystem::path& p, const CvReport& cv) {
    auto out = detail::open_out(p);
    out << "lambda,median,q40,q60,selected\n";
    for (std::size_t g = 0; g < cv.grid.size(); ++g)
        out << cv.grid[g] << ',' << cv.median_curve[g] << ',' << cv.q40_curve[g]
            << ',' << cv.q60_curve[g] << ','
            << (static_cast<int>(g) == cv.selected_index ? 1 : 0) << '\n';
}

inline void write_diagnostics_csv(const std::filesystem::path& p,
                                  const ShockDiagnostics& d) {
    auto out = detail::open_out(p);
    out << "shock,skewness,excess_kurtosis,jb,jb_pvalue\n";
    for (int i = 0; i < d.skewness.size(); ++i)
        out << i + 1 << ',' << d.skewness(i) << ',' << d.excess_kurtosis(i) << ','
            << d.jb_statistic(i) << ',' << d.jb_pvalue(i) << '\n';
}

inline void write_comoment_csv(const std::filesystem::path& p,
                               const ShockDiagnostics& d) {
    auto out = detail::open_out(p);
    out << "shock_i,shock_j,e2e2\n";
    for (int i = 0; i < d.squared_comoment.rows(); ++i)
        for (int j = i + 1; j < d.squared_comoment.cols(); ++j)
            out << i + 1 << ',' << j + 1 << ',' << d.squared_comoment(i, j)
                << '\n';
}

inline void write_a_type_csv(const std::filesystem::path& p, const ATypeReport& r,
                             const std::vector<std::string>& names = {}) {
    auto out = detail::open_out(p);
    out << "equation,variable,coefficient\n";
    const int n = static_cast<int>(r.coefficients.rows());
    auto label = [&](int i) {
        return i < static_cast<int>(names.size()) ? names[static_cast<std::size_t>(i)]
                                                  : "v" + std::to_string(i + 1);
    };
    for (int w = 0; w < n; ++w)
        for (int v = 0; v < n; ++v)
            out << label(w) << ',' << label(v) << ',' << r.coefficients(w, v)
                << '\n';
}

inline void write_experiment_csv(const std::filesystem::path& p,
                                 const ExperimentReport& rep) {
    auto out = detail::open_out(p);
    out << "estimator,row,col,average,mse,coverage,width\n";
    for (const auto& rr : rep.recipes)
        for (int i = 0; i < rr.average.rows(); ++i)
            for (int j = 0; j < rr.average.cols(); ++j)
                out << rr.name << ',' << i + 1 << ',' << j + 1 << ','
                    << rr.average(i, j) << ',' << rr.mse(i, j) << ','
                    << rr.coverage(i, j) << ',' << rr.mean_width(i, j) << '\n';
}

inline void write_lambda_histogram_csv(const std::filesystem::path& p,
                                       const ExperimentReport& rep) {
    auto out = detail::open_out(p);
    out << "estimator,lambda,count\n";
    for (const auto& rr : rep.recipes)
        for (const auto& [lam, cnt] : rr.lambda_histogram)
            out << rr.name << ',' << lam << ',' << cnt << '\n';
}

inline nlohmann::json experiment_to_json(const ExperimentReport& rep) {
    nlohmann::json j;
    j["replications"] = rep.replications;
    j["seed"] = rep.seed;
    j["valid"] = rep.valid;
    for (const auto& rr : rep.recipes) {
        nlohmann::json jr;
        jr["name"] = rr.name;
        jr["failures"] = rr.failures;
        jr["successes"] = rr.successes;
        jr["lambda_at_grid_max"] = rr.lambda_at_grid_max;
        jr["lambda_at_grid_min"] = rr.lambda_at_grid_min;
        jr["kept_false_restriction"] = rr.kept_false_restriction;
        auto mat = [](const Matrix& m) {
            std::vector<std::vector<double>> v;
            for (int i = 0; i < m.rows(); ++i) {
                std::vector<double> row;
                for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
                v.push_back(std::move(row));
            }
            return v;
        };
        jr["average"] = mat(rr.average);
        jr["mse"] = mat(rr.mse);
        jr["coverage"] = mat(rr.coverage);
        jr["width"] = mat(rr.mean_width);
        j["recipes"].push_back(std::move(jr));
    }
    return j;
}

}  // namespace ngsvar
