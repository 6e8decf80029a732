#pragma once

#include <map>
#include <string>
#include <vector>

#include "iac/tensor.hpp"

namespace iac {

// One table row: a model identified by "dataset/backbone" (or any stable
// key), its baseline Dice, and Dice at each snapshot column.
struct ResultsRow {
  std::string key;
  real baseline = 0.0;
  std::vector<real> values;  // absolute Dice per column
  std::vector<real> deltas;  // values[i] - baseline, unrounded
};

struct ResultsTable {
  std::vector<std::string> columns;  // snapshot labels, e.g. EP25
  std::vector<ResultsRow> rows;
  std::vector<real> delta_mean;  // per-column mean of deltas over rows
  std::vector<real> delta_var;   // per-column sample variance (0 if 1 row)
};

// Joins baseline scores with per-snapshot scores. Every key must appear in
// both maps and every row must carry the same column labels; anything
// missing is reported by name. Columns are ordered naturally (EP25 < EP100).
ResultsTable improvement_table(
    const std::map<std::string, real>& baselines,
    const std::map<std::string, std::map<std::string, real>>& results);

// Full precision, stable layout; last two records hold the per-column delta
// mean and sample variance.
std::string render_csv(const ResultsTable& t);

// Aligned view with a marker per cell: ^ better than baseline, v worse,
// = unchanged.
std::string render_text(const ResultsTable& t);

}  // namespace iac
