#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "distrn/analysis.hpp"
#include "distrn/epidemic.hpp"
#include "distrn/reproduction.hpp"

// Plain comma-separated files without quoting. Doubles are written with 17
// significant digits so that write-then-read is lossless.
namespace distrn::csv {

inline std::string format(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_double(std::string_view cell, std::string_view where)
{
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    while (first < last && *first == ' ')
        ++first;
    while (last > first && (last[-1] == ' ' || last[-1] == '\r'))
        --last;
    if (first < last && *first == '+')
        ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || first == last)
        throw ConfigError(std::string(where) + ": non-numeric cell '" + std::string(cell) + "'");
    return v;
}

inline std::size_t parse_index(std::string_view cell, std::string_view where)
{
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty())
        throw ConfigError(std::string(where) + ": expected a non-negative integer, got '" + std::string(cell) + "'");
    return v;
}

inline std::vector<std::string> split(std::string_view line)
{
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        cells.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos)
            break;
        start = comma + 1;
    }
    if (!cells.empty() && !cells.back().empty() && cells.back().back() == '\r')
        cells.back().pop_back();
    return cells;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

/// Reads a header plus rows; every row must have as many cells as the header.
inline Table read_table(std::istream& in, std::string_view name)
{
    Table t;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r")
            continue;
        auto cells = split(line);
        if (t.header.empty()) {
            t.header = std::move(cells);
            continue;
        }
        if (cells.size() != t.header.size())
            throw ConfigError(std::string(name) + ":" + std::to_string(line_no) + ": ragged row with " +
                              std::to_string(cells.size()) + " cells, expected " +
                              std::to_string(t.header.size()));
        t.rows.push_back(std::move(cells));
    }
    if (t.header.empty())
        throw ConfigError(std::string(name) + ": empty file");
    return t;
}

inline void expect_header(const Table& t, std::span<const std::string_view> names, std::string_view file)
{
    bool ok = t.header.size() == names.size();
    for (std::size_t i = 0; ok && i < names.size(); ++i)
        ok = t.header[i] == names[i];
    if (!ok) {
        std::string want;
        for (auto n : names)
            want += (want.empty() ? "" : ",") + std::string(n);
        throw ConfigError(std::string(file) + ": expected header '" + want + "'");
    }
}

inline std::ifstream open_input(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open '" + path + "' for reading");
    return in;
}

// --- matrix: header j1..jn, one row per i ---------------------------------

inline void write_matrix(std::ostream& out, const Matrix& m)
{
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        out << (j ? "," : "") << 'j' << (j + 1);
    out << '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            out << (j ? "," : "") << format(m(i, j));
        out << '\n';
    }
}

inline Matrix read_matrix(std::istream& in, std::string_view name = "matrix")
{
    const Table t = read_table(in, name);
    for (std::size_t j = 0; j < t.header.size(); ++j)
        if (t.header[j] != "j" + std::to_string(j + 1))
            throw ConfigError(std::string(name) + ": matrix header must be j1..jn");
    Matrix m(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(t.header.size()));
    for (std::size_t i = 0; i < t.rows.size(); ++i)
        for (std::size_t j = 0; j < t.header.size(); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                parse_double(t.rows[i][j], std::string(name) + " row " + std::to_string(i + 1));
    return m;
}

// --- vector: header "value", one row per node ------------------------------

inline void write_vector(std::ostream& out, const Vector& v)
{
    out << "value\n";
    for (Eigen::Index i = 0; i < v.size(); ++i)
        out << format(v(i)) << '\n';
}

inline Vector read_vector(std::istream& in, std::string_view name = "vector")
{
    const Table t = read_table(in, name);
    constexpr std::string_view cols[] = {"value"};
    expect_header(t, cols, name);
    Vector v(static_cast<Eigen::Index>(t.rows.size()));
    for (std::size_t i = 0; i < t.rows.size(); ++i)
        v(static_cast<Eigen::Index>(i)) = parse_double(t.rows[i][0], std::string(name) + " row " + std::to_string(i + 1));
    return v;
}

// --- states: t,node,s,x,r --------------------------------------------------

inline void write_states(std::ostream& out, std::span<const EpidemicState> states)
{
    out << "t,node,s,x,r\n";
    for (const EpidemicState& st : states)
        for (Eigen::Index i = 0; i < st.x.size(); ++i)
            out << format(st.t) << ',' << i << ',' << format(st.s(i)) << ',' << format(st.x(i)) << ','
                << format(st.r(i)) << '\n';
}

/// Groups consecutive rows with equal t into states; nodes must appear in
/// order 0..n-1 and fractions must lie in [0,1].
inline std::vector<EpidemicState> read_states(std::istream& in, std::string_view name = "states")
{
    const Table t = read_table(in, name);
    constexpr std::string_view cols[] = {"t", "node", "s", "x", "r"};
    expect_header(t, cols, name);
    if (t.rows.empty())
        throw ConfigError(std::string(name) + ": no state rows");

    std::vector<EpidemicState> out;
    std::vector<double> s, x, r;
    std::optional<double> cur_t;
    auto flush = [&] {
        EpidemicState st;
        st.t = *cur_t;
        st.s = Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(s.size()));
        st.x = Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size()));
        st.r = Eigen::Map<const Vector>(r.data(), static_cast<Eigen::Index>(r.size()));
        if (!out.empty() && out.front().size() != st.size())
            throw ConfigError(std::string(name) + ": states at different times have different node counts");
        out.push_back(std::move(st));
        s.clear();
        x.clear();
        r.clear();
    };
    for (std::size_t k = 0; k < t.rows.size(); ++k) {
        const auto& row = t.rows[k];
        const std::string where = std::string(name) + " row " + std::to_string(k + 1);
        const double time = parse_double(row[0], where);
        if (cur_t && time != *cur_t)
            flush();
        cur_t = time;
        if (parse_index(row[1], where) != x.size())
            throw ConfigError(where + ": nodes must be listed in order starting at 0");
        const double sv = parse_double(row[2], where);
        const double xv = parse_double(row[3], where);
        const double rv = parse_double(row[4], where);
        for (double v : {sv, xv, rv})
            if (!(v >= 0.0 && v <= 1.0))
                throw ConfigError(where + ": fraction outside [0,1]");
        s.push_back(sv);
        x.push_back(xv);
        r.push_back(rv);
    }
    flush();
    return out;
}

// --- local reproduction matrices: t,i,j,value,kind --------------------------

inline void write_rn(std::ostream& out, std::span<const LocalRnMatrix> mats)
{
    out << "t,i,j,value,kind\n";
    for (const LocalRnMatrix& m : mats)
        for (Eigen::Index i = 0; i < m.values.rows(); ++i)
            for (Eigen::Index j = 0; j < m.values.cols(); ++j)
                out << (m.t ? format(*m.t) : std::string()) << ',' << i << ',' << j << ','
                    << format(m.values(i, j)) << ',' << to_string(m.kind) << '\n';
}

/// Inverse of write_rn. Consecutive rows with equal (t, kind) form one matrix;
/// an empty t denotes the time-independent basic matrix.
inline std::vector<LocalRnMatrix> read_rn(std::istream& in, std::string_view name = "rn")
{
    const Table t = read_table(in, name);
    constexpr std::string_view cols[] = {"t", "i", "j", "value", "kind"};
    expect_header(t, cols, name);

    struct Cell {
        std::size_t i, j;
        double v;
    };
    std::vector<LocalRnMatrix> out;
    std::vector<Cell> cells;
    std::optional<std::string> key;
    auto flush = [&] {
        std::size_t n = 0;
        for (const Cell& c : cells)
            n = std::max({n, c.i + 1, c.j + 1});
        if (cells.size() != n * n)
            throw ConfigError(std::string(name) + ": incomplete matrix block");
        out.back().values = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        for (const Cell& c : cells)
            out.back().values(static_cast<Eigen::Index>(c.i), static_cast<Eigen::Index>(c.j)) = c.v;
        cells.clear();
    };
    for (std::size_t k = 0; k < t.rows.size(); ++k) {
        const auto& row = t.rows[k];
        const std::string where = std::string(name) + " row " + std::to_string(k + 1);
        const std::string this_key = row[0] + "|" + row[4];
        if (!key || this_key != *key) {
            if (key)
                flush();
            key = this_key;
            LocalRnMatrix m;
            m.kind = rn_kind_from_string(row[4]);
            if (!row[0].empty())
                m.t = parse_double(row[0], where);
            out.push_back(std::move(m));
        }
        cells.push_back({parse_index(row[1], where), parse_index(row[2], where), parse_double(row[3], where)});
    }
    if (key)
        flush();
    if (out.empty())
        throw ConfigError(std::string(name) + ": no matrix rows");
    return out;
}

// --- cluster matrices: t,q,r,value,kind -------------------------------------

inline void write_cluster_rn(std::ostream& out, std::span<const ClusterRnMatrix> mats)
{
    out << "t,q,r,value,kind\n";
    for (const ClusterRnMatrix& m : mats)
        for (Eigen::Index q = 0; q < m.values.rows(); ++q)
            for (Eigen::Index r = 0; r < m.values.cols(); ++r)
                out << format(m.t) << ',' << q << ',' << r << ',' << format(m.values(q, r)) << ','
                    << (m.is_private ? "private" : "exact") << '\n';
}

// --- accuracy: epoch,eps,q,r,exact,mean_private,var_private,rmse,pct_error --

inline void write_accuracy(std::ostream& out, std::span<const AccuracyRow> rows)
{
    out << "epoch,eps,q,r,exact,mean_private,var_private,rmse,pct_error\n";
    for (const AccuracyRow& a : rows)
        out << a.epoch << ',' << format(a.eps) << ',' << a.q << ',' << a.r << ',' << format(a.exact) << ','
            << format(a.mean_private) << ',' << format(a.var_private) << ',' << format(a.rmse) << ','
            << format(a.pct_error) << '\n';
}

inline void write_accuracy_summary(std::ostream& out, std::span<const EpsilonSummary> rows)
{
    out << "eps,rmse,pct_error,status\n";
    for (const EpsilonSummary& s : rows) {
        if (s.error)
            out << format(s.eps) << ",,,infeasible\n";
        else
            out << format(s.eps) << ',' << format(s.rmse) << ',' << format(s.pct_error) << ",ok\n";
    }
}

} // namespace distrn::csv
