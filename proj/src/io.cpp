#include "zits/io.hpp"

#include "zits/errors.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <tuple>

namespace zits {

namespace {

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    return in;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    return out;
}

bool next_content_line(std::istream& in, std::string& line, int& lineno) {
    while (std::getline(in, line)) {
        ++lineno;
        auto pos = line.find_first_not_of(" \t\r");
        if (pos == std::string::npos) continue;
        return true;
    }
    return false;
}

std::vector<std::string> split(const std::string& line) {
    std::istringstream is(line);
    std::vector<std::string> out;
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

long long to_int(const std::string& s, const std::string& path, int lineno) {
    try {
        std::size_t used = 0;
        long long v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::logic_error&) {
        throw DataError(path + ":" + std::to_string(lineno) + ": expected an integer, got '" + s + "'");
    }
}

double to_real(const std::string& s, const std::string& path, int lineno) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::logic_error&) {
        throw DataError(path + ":" + std::to_string(lineno) + ": expected a number, got '" + s + "'");
    }
}

} // namespace

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

CountTensor read_count_tensor(const std::string& path, bool ingest_1based) {
    auto in = open_in(path);
    std::string line;
    int lineno = 0;
    long long n = -1, kk = -1;
    bool have_line = next_content_line(in, line, lineno);
    if (have_line && line.rfind("#", 0) == 0) {
        if (line.find("zits-tensor v1") == std::string::npos)
            throw DataError(path + ": unsupported header '" + line + "'");
        have_line = next_content_line(in, line, lineno);
    } else if (!ingest_1based) {
        throw DataError(path + ": missing '# zits-tensor v1' header");
    }
    if (have_line) {
        auto tok = split(line);
        if (tok.size() == 2) {
            n = to_int(tok[0], path, lineno);
            kk = to_int(tok[1], path, lineno);
            have_line = next_content_line(in, line, lineno);
        } else if (!ingest_1based) {
            throw DataError(path + ":" + std::to_string(lineno) + ": expected 'N K'");
        }
    } else if (!ingest_1based) {
        throw DataError(path + ": missing 'N K' line");
    }

    std::vector<CountEntry> entries;
    long long max_locus = -1, max_cell = -1;
    const long long off = ingest_1based ? 1 : 0;
    while (have_line) {
        if (line.rfind("#", 0) != 0) {
            auto tok = split(line);
            if (tok.size() != 4)
                throw DataError(path + ":" + std::to_string(lineno) + ": expected 'i j k c'");
            long long i = to_int(tok[0], path, lineno) - off;
            long long j = to_int(tok[1], path, lineno) - off;
            long long k = to_int(tok[2], path, lineno) - off;
            long long c = to_int(tok[3], path, lineno);
            if (i < 0 || j < 0 || k < 0)
                throw DataError(path + ":" + std::to_string(lineno) + ": negative index");
            if (c < 0) throw DataError(path + ":" + std::to_string(lineno) + ": negative count");
            if (ingest_1based && i > j) std::swap(i, j);
            if (i > j) throw DataError(path + ":" + std::to_string(lineno) + ": entry with i > j");
            max_locus = std::max(max_locus, j);
            max_cell = std::max(max_cell, k);
            if (ingest_1based) {
                if (c == 0) {
                    have_line = next_content_line(in, line, lineno);
                    continue;
                }
            }
            entries.push_back({static_cast<int>(i), static_cast<int>(j), static_cast<int>(k), c});
        }
        have_line = next_content_line(in, line, lineno);
    }
    if (n < 0) n = max_locus + 1;
    if (kk < 0) kk = max_cell + 1;
    if (max_locus >= n || max_cell >= kk)
        throw DataError(path + ": entry index exceeds the declared dims " + std::to_string(n) +
                        " x " + std::to_string(kk));
    if (ingest_1based) {
        // Symmetric dumps may list both (i, j) and (j, i); keep one copy when they agree.
        std::sort(entries.begin(), entries.end(), [](const CountEntry& a, const CountEntry& b) {
            return std::tie(a.k, a.i, a.j, a.c) < std::tie(b.k, b.i, b.j, b.c);
        });
        std::vector<CountEntry> uniq;
        for (const auto& e : entries) {
            if (!uniq.empty() && uniq.back().i == e.i && uniq.back().j == e.j && uniq.back().k == e.k) {
                if (uniq.back().c != e.c)
                    throw DataError(path + ": conflicting counts for a symmetric pair");
                continue;
            }
            uniq.push_back(e);
        }
        entries = std::move(uniq);
    }
    return CountTensor(static_cast<int>(n), static_cast<int>(kk), std::move(entries));
}

void write_count_tensor(const std::string& path, const CountTensor& t) {
    auto out = open_out(path);
    out << "# zits-tensor v1\n" << t.n_loci() << " " << t.n_cells() << "\n";
    for (const auto& e : t.entries()) out << e.i << " " << e.j << " " << e.k << " " << e.c << "\n";
    if (!out) throw DataError("write failed: " + path);
}

DenseTensor3 read_real_tensor(const std::string& path) {
    auto in = open_in(path);
    std::string line;
    int lineno = 0;
    if (!next_content_line(in, line, lineno) || line.find("zits-rtensor v1") == std::string::npos)
        throw DataError(path + ": missing '# zits-rtensor v1' header");
    if (!next_content_line(in, line, lineno)) throw DataError(path + ": missing 'N K' line");
    auto dims = split(line);
    if (dims.size() != 2) throw DataError(path + ": expected 'N K'");
    long long n = to_int(dims[0], path, lineno), kk = to_int(dims[1], path, lineno);
    if (n < 1 || kk < 1) throw DataError(path + ": dims must be positive");
    DenseTensor3 t(n, n, kk);
    while (next_content_line(in, line, lineno)) {
        if (line.rfind("#", 0) == 0) continue;
        auto tok = split(line);
        if (tok.size() != 4) throw DataError(path + ":" + std::to_string(lineno) + ": expected 'i j k v'");
        long long i = to_int(tok[0], path, lineno), j = to_int(tok[1], path, lineno),
                  k = to_int(tok[2], path, lineno);
        double v = to_real(tok[3], path, lineno);
        if (i < 0 || j < i || j >= n || k < 0 || k >= kk)
            throw DataError(path + ":" + std::to_string(lineno) + ": index out of range");
        t(i, j, k) = v;
        t(j, i, k) = v;
    }
    return t;
}

void write_real_tensor(const std::string& path, const DenseTensor3& t) {
    if (t.d1() != t.d2()) throw DimensionError("real tensor file needs a symmetric tensor");
    auto out = open_out(path);
    out << "# zits-rtensor v1\n" << t.d1() << " " << t.d3() << "\n";
    for (Index k = 0; k < t.d3(); ++k)
        for (Index i = 0; i < t.d1(); ++i)
            for (Index j = i; j < t.d2(); ++j)
                if (t(i, j, k) != 0.0)
                    out << i << " " << j << " " << k << " " << format_double(t(i, j, k)) << "\n";
    if (!out) throw DataError("write failed: " + path);
}

void write_bundle(const std::string& path, const MatrixBundle& bundle) {
    auto out = open_out(path);
    for (const auto& [name, m] : bundle) {
        out << name << " " << m.rows() << " " << m.cols() << "\n";
        for (Index r = 0; r < m.rows(); ++r) {
            for (Index c = 0; c < m.cols(); ++c) out << (c ? " " : "") << format_double(m(r, c));
            out << "\n";
        }
    }
    if (!out) throw DataError("write failed: " + path);
}

MatrixBundle read_bundle(const std::string& path) {
    auto in = open_in(path);
    MatrixBundle out;
    std::string line;
    int lineno = 0;
    while (next_content_line(in, line, lineno)) {
        auto head = split(line);
        if (head.size() != 3) throw DataError(path + ":" + std::to_string(lineno) + ": expected 'name rows cols'");
        long long rows = to_int(head[1], path, lineno), cols = to_int(head[2], path, lineno);
        if (rows < 0 || cols < 0) throw DataError(path + ": negative matrix size");
        Matrix m(rows, cols);
        for (long long r = 0; r < rows; ++r) {
            if (!next_content_line(in, line, lineno))
                throw DataError(path + ": truncated matrix '" + head[0] + "'");
            auto tok = split(line);
            if (static_cast<long long>(tok.size()) != cols)
                throw DataError(path + ":" + std::to_string(lineno) + ": wrong column count");
            for (long long c = 0; c < cols; ++c) m(r, c) = to_real(tok[c], path, lineno);
        }
        out.emplace_back(head[0], std::move(m));
    }
    return out;
}

const Matrix& bundle_get(const MatrixBundle& bundle, const std::string& name) {
    for (const auto& [n, m] : bundle)
        if (n == name) return m;
    throw DataError("bundle has no matrix named '" + name + "'");
}

MatrixBundle params_to_bundle(const ModelParams& m) {
    Matrix meta(1, 3);
    meta << static_cast<double>(static_cast<int>(m.basis.kind)), m.n_clusters, m.block_rank;
    return {{"meta", meta},
            {"basis", m.basis.h},
            {"gamma", m.gamma},
            {"w_beta", m.w_beta},
            {"w_xi", m.w_xi}};
}

ModelParams params_from_bundle(const MatrixBundle& bundle) {
    ModelParams m;
    const Matrix& meta = bundle_get(bundle, "meta");
    if (meta.rows() != 1 || meta.cols() != 3) throw DataError("malformed params meta");
    m.basis.h = bundle_get(bundle, "basis");
    m.basis.kind = static_cast<BasisKind>(static_cast<int>(meta(0, 0)));
    m.basis.n_loci = static_cast<int>(m.basis.h.rows());
    m.basis.n_basis = static_cast<int>(m.basis.h.cols());
    m.n_clusters = static_cast<int>(meta(0, 1));
    m.block_rank = static_cast<int>(meta(0, 2));
    m.gamma = bundle_get(bundle, "gamma");
    m.w_beta = bundle_get(bundle, "w_beta");
    m.w_xi = bundle_get(bundle, "w_xi");
    m.validate();
    return m;
}

void write_flags(const std::string& path, const std::vector<CellIndex>& flags, int n_loci,
                 int n_cells) {
    std::vector<CountEntry> entries;
    entries.reserve(flags.size());
    for (const auto& f : flags) entries.push_back({f.i, f.j, f.k, 1});
    write_count_tensor(path, CountTensor(n_loci, n_cells, std::move(entries)));
}

std::vector<CellIndex> read_flags(const std::string& path, int n_loci, int n_cells) {
    CountTensor t = read_count_tensor(path);
    if (t.n_loci() != n_loci || t.n_cells() != n_cells)
        throw DimensionError(path + ": flag dims do not match the tensor");
    std::vector<CellIndex> flags;
    for (const auto& e : t.entries()) {
        if (e.c != 1) throw DataError(path + ": flag entries must have c = 1");
        flags.push_back({e.i, e.j, e.k});
    }
    return flags;
}

void write_text(const std::string& path, const std::string& text) {
    auto out = open_out(path);
    out << text;
    if (!out) throw DataError("write failed: " + path);
}

std::string read_text(const std::string& path) {
    auto in = open_in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace zits
