#pragma once

#include <cctype>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ssio/annealer.hpp"
#include "ssio/extensions.hpp"
#include "ssio/types.hpp"

namespace ssio {

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline double parse_number(const std::string& tok, const std::string& where) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(tok, &pos);
    } catch (const std::exception&) {
        throw ParseError(where + ": malformed number '" + tok + "'");
    }
    if (pos != tok.size()) throw ParseError(where + ": malformed number '" + tok + "'");
    return v;
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(trim(tok));
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

} // namespace detail

/// CSV matrix format: each cell is a decimal number or the token NA; an
/// optional directive line "#bounds lo hi" supplies global bounds for NA
/// cells; other #-lines are comments. A sidecar bounds file holds rows
/// "i,j,lo,hi" with 0-based coordinates overriding the global bounds.
/// Every NA cell must end up with bounds from one of the two sources.
inline IncompleteMatrix parse_matrix(const std::string& path,
                                     const std::string& bounds_path = "") {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open matrix file: " + path);

    std::optional<Bounds> global_bounds;
    std::vector<std::vector<std::string>> grid;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        if (t[0] == '#') {
            std::stringstream ss(t);
            std::string word;
            ss >> word;
            if (word == "#bounds") {
                double lo, hi;
                if (!(ss >> lo >> hi))
                    throw ParseError(path + ":" + std::to_string(lineno) +
                                     ": #bounds needs two numbers");
                if (lo > hi)
                    throw ParseError(path + ":" + std::to_string(lineno) + ": #bounds lo > hi");
                global_bounds = Bounds{lo, hi};
            }
            continue;
        }
        grid.push_back(detail::split_csv(t));
        if (grid.back().size() != grid.front().size())
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected " +
                             std::to_string(grid.front().size()) + " cells, got " +
                             std::to_string(grid.back().size()));
    }
    if (grid.empty()) throw ParseError(path + ": no data rows");

    const int n = static_cast<int>(grid.size());
    const int p = static_cast<int>(grid.front().size());
    Matrix X(n, p);
    std::vector<Cell> missing;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) {
            const std::string& tok = grid[i][j];
            if (tok == "NA") {
                X(i, j) = 0.0;   // placeholder, replaced below
                missing.push_back(Cell{i, j});
            } else {
                X(i, j) = detail::parse_number(tok, path + ": cell (" + std::to_string(i + 1) +
                                                        "," + std::to_string(j + 1) + ")");
            }
        }

    // Sidecar bounds, one row per cell: i,j,lo,hi (0-based coordinates).
    std::vector<std::optional<Bounds>> cell_bounds(missing.size());
    if (!bounds_path.empty()) {
        std::ifstream bin(bounds_path);
        if (!bin) throw IoError("cannot open bounds file: " + bounds_path);
        int bl = 0;
        while (std::getline(bin, line)) {
            ++bl;
            const std::string t = detail::trim(line);
            if (t.empty() || t[0] == '#') continue;
            const auto toks = detail::split_csv(t);
            const std::string where = bounds_path + ":" + std::to_string(bl);
            if (toks.size() != 4) throw ParseError(where + ": expected i,j,lo,hi");
            const int bi = static_cast<int>(detail::parse_number(toks[0], where));
            const int bj = static_cast<int>(detail::parse_number(toks[1], where));
            const double lo = detail::parse_number(toks[2], where);
            const double hi = detail::parse_number(toks[3], where);
            std::size_t k = 0;
            for (; k < missing.size(); ++k)
                if (missing[k].row == bi && missing[k].col == bj) break;
            if (k == missing.size())
                throw ParseError(where + ": cell (" + std::to_string(bi) + "," +
                                 std::to_string(bj) + ") is not missing in " + path);
            if (cell_bounds[k])
                throw ParseError(where + ": duplicate bounds for cell (" + std::to_string(bi) +
                                 "," + std::to_string(bj) + ")");
            if (lo > hi) throw ParseError(where + ": lo > hi");
            cell_bounds[k] = Bounds{lo, hi};
        }
    }

    std::vector<Bounds> bounds;
    bounds.reserve(missing.size());
    for (std::size_t k = 0; k < missing.size(); ++k) {
        if (cell_bounds[k]) {
            bounds.push_back(*cell_bounds[k]);
        } else if (global_bounds) {
            bounds.push_back(*global_bounds);
        } else {
            throw ParseError(path + ": cell (" + std::to_string(missing[k].row + 1) + "," +
                             std::to_string(missing[k].col + 1) +
                             ") is NA but has no bounds (add '#bounds lo hi' or a sidecar row)");
        }
    }
    return IncompleteMatrix(std::move(X), std::move(missing), std::move(bounds));
}

/// Companion writer; parse_matrix(write_matrix(m)) reproduces the in-memory
/// representation. Bounds always go to the sidecar file.
inline void write_matrix(const IncompleteMatrix& inc, const std::string& path,
                         const std::string& bounds_path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    char buf[40];
    for (int i = 0; i < inc.rows(); ++i) {
        for (int j = 0; j < inc.cols(); ++j) {
            if (j) out << ',';
            if (inc.is_missing(i, j)) {
                out << "NA";
            } else {
                std::snprintf(buf, sizeof(buf), "%.17g", inc.raw()(i, j));
                out << buf;
            }
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
    std::ofstream bout(bounds_path);
    if (!bout) throw IoError("cannot open for writing: " + bounds_path);
    for (std::size_t k = 0; k < inc.missing_count(); ++k) {
        const Cell c = inc.missing()[k];
        const Bounds b = inc.bounds()[k];
        std::snprintf(buf, sizeof(buf), "%.17g", b.lo);
        bout << c.row << ',' << c.col << ',' << buf << ',';
        std::snprintf(buf, sizeof(buf), "%.17g", b.hi);
        bout << buf << '\n';
    }
    if (!bout) throw IoError("write failed: " + bounds_path);
}

/// Budget file: first non-comment row holds the p caps, then one row of p
/// per-feature costs for each of the n experiments.
inline BudgetSpec parse_budget(const std::string& path, int n, int p) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open budget file: " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto toks = detail::split_csv(t);
        if (static_cast<int>(toks.size()) != p)
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected " +
                             std::to_string(p) + " values");
        std::vector<double> vals;
        for (const auto& tok : toks)
            vals.push_back(detail::parse_number(tok, path + ":" + std::to_string(lineno)));
        rows.push_back(std::move(vals));
    }
    if (static_cast<int>(rows.size()) != n + 1)
        throw ParseError(path + ": expected 1 caps row + " + std::to_string(n) +
                         " cost rows, got " + std::to_string(rows.size()));
    BudgetSpec budget;
    budget.caps = Vector(p);
    for (int j = 0; j < p; ++j) budget.caps[j] = rows[0][j];
    budget.costs = Matrix(n, p);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) budget.costs(i, j) = rows[i + 1][j];
    budget.validate(n, p);
    return budget;
}

/// Solver result as JSON: selection bitstring, sparse imputed cells (only
/// formerly missing coordinates), cost, and optionally the free-energy trace.
inline nlohmann::ordered_json solution_json(const HardDesign& design,
                                            const IncompleteMatrix& inst,
                                            const std::string& method, bool converged,
                                            const std::vector<TracePoint>* trace = nullptr) {
    nlohmann::ordered_json j;
    j["method"] = method;
    j["s"] = design.bitstring();
    j["cost"] = design.cost;
    j["converged"] = converged;
    j["imputed_cells"] = nlohmann::ordered_json::array();
    for (const Cell c : inst.missing())
        j["imputed_cells"].push_back({c.row, c.col, design.imputed(c.row, c.col)});
    if (trace) {
        j["free_energy_trace"] = nlohmann::ordered_json::array();
        for (const TracePoint& tp : *trace)
            j["free_energy_trace"].push_back({tp.temperature, tp.free_energy, tp.entropy});
    }
    return j;
}

} // namespace ssio
