#pragma once

#include "zits/detect_impute.hpp"
#include "zits/model_core.hpp"

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace zits {

/// Formats a double with 17 significant digits (round-trip exact).
std::string format_double(double v);

/**
 * Count tensor text file: "# zits-tensor v1", "N K", then "i j k c" lines,
 * 0-based with i <= j. With `ingest_1based` the header is optional, indices are
 * 1-based, i > j is swapped, zero counts are dropped, and missing dims are
 * inferred from the largest indices.
 */
CountTensor read_count_tensor(const std::string& path, bool ingest_1based = false);
void write_count_tensor(const std::string& path, const CountTensor& t);

/// Real tensor file: "# zits-rtensor v1", "N K", then "i j k v" for nonzero i <= j entries.
DenseTensor3 read_real_tensor(const std::string& path);
void write_real_tensor(const std::string& path, const DenseTensor3& t);

using MatrixBundle = std::vector<std::pair<std::string, Matrix>>;

/// Sections "name rows cols" followed by `rows` lines of values.
void write_bundle(const std::string& path, const MatrixBundle& bundle);
MatrixBundle read_bundle(const std::string& path);
const Matrix& bundle_get(const MatrixBundle& bundle, const std::string& name);

MatrixBundle params_to_bundle(const ModelParams& m);
ModelParams params_from_bundle(const MatrixBundle& bundle);

/// Flags use the count tensor format with c = 1 at each flagged cell.
void write_flags(const std::string& path, const std::vector<CellIndex>& flags, int n_loci,
                 int n_cells);
std::vector<CellIndex> read_flags(const std::string& path, int n_loci, int n_cells);

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

} // namespace zits
