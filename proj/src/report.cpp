#include "iac/report.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

namespace iac {
namespace {

// Natural order: digit runs compare numerically, so EP25 < EP100.
bool natural_less(const std::string& a, const std::string& b) {
  size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const bool da = std::isdigit(static_cast<unsigned char>(a[i])) != 0;
    const bool db = std::isdigit(static_cast<unsigned char>(b[j])) != 0;
    if (da && db) {
      size_t ia = i, jb = j;
      while (ia < a.size() && std::isdigit(static_cast<unsigned char>(a[ia])))
        ++ia;
      while (jb < b.size() && std::isdigit(static_cast<unsigned char>(b[jb])))
        ++jb;
      const long long va = std::stoll(a.substr(i, ia - i));
      const long long vb = std::stoll(b.substr(j, jb - j));
      if (va != vb) return va < vb;
      i = ia;
      j = jb;
    } else {
      if (a[i] != b[j]) return a[i] < b[j];
      ++i;
      ++j;
    }
  }
  return a.size() < b.size();
}

std::string g17(real v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string f3(real v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

std::string f3s(real v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%+.3f", v);
  return buf;
}

char mark_of(real delta) { return delta > 0 ? '^' : (delta < 0 ? 'v' : '='); }

const char* mark_word(real delta) {
  return delta > 0 ? "better" : (delta < 0 ? "worse" : "equal");
}

}  // namespace

ResultsTable improvement_table(
    const std::map<std::string, real>& baselines,
    const std::map<std::string, std::map<std::string, real>>& results) {
  std::string missing;
  for (const auto& [k, v] : results) {
    (void)v;
    if (!baselines.count(k)) missing += " baseline:" + k;
  }
  for (const auto& [k, v] : baselines) {
    (void)v;
    if (!results.count(k)) missing += " results:" + k;
  }
  if (!missing.empty())
    throw std::invalid_argument("improvement_table: missing keys:" + missing);
  if (results.empty())
    throw std::invalid_argument("improvement_table: no rows");

  ResultsTable t;
  for (const auto& [label, v] : results.begin()->second) {
    (void)v;
    t.columns.push_back(label);
  }
  std::sort(t.columns.begin(), t.columns.end(), natural_less);
  for (const auto& [key, per_label] : results) {
    for (const auto& label : t.columns)
      if (!per_label.count(label))
        throw std::invalid_argument("improvement_table: row " + key +
                                    " missing column " + label);
    if (per_label.size() != t.columns.size())
      throw std::invalid_argument("improvement_table: row " + key +
                                  " has extra columns");
    ResultsRow row;
    row.key = key;
    row.baseline = baselines.at(key);
    for (const auto& label : t.columns) {
      const real v = per_label.at(label);
      row.values.push_back(v);
      row.deltas.push_back(v - row.baseline);
    }
    t.rows.push_back(std::move(row));
  }

  const size_t n = t.rows.size();
  for (size_t c = 0; c < t.columns.size(); ++c) {
    real mean = 0.0;
    for (const auto& row : t.rows) mean += row.deltas[c];
    mean /= static_cast<real>(n);
    real var = 0.0;
    if (n > 1) {
      for (const auto& row : t.rows) {
        const real d = row.deltas[c] - mean;
        var += d * d;
      }
      var /= static_cast<real>(n - 1);
    }
    t.delta_mean.push_back(mean);
    t.delta_var.push_back(var);
  }
  return t;
}

std::string render_csv(const ResultsTable& t) {
  std::ostringstream out;
  out << "key,baseline";
  for (const auto& c : t.columns)
    out << "," << c << "," << c << "_delta," << c << "_mark";
  out << "\n";
  for (const auto& row : t.rows) {
    out << row.key << "," << g17(row.baseline);
    for (size_t c = 0; c < t.columns.size(); ++c)
      out << "," << g17(row.values[c]) << "," << g17(row.deltas[c]) << ","
          << mark_word(row.deltas[c]);
    out << "\n";
  }
  out << "delta_mean,";
  for (size_t c = 0; c < t.columns.size(); ++c)
    out << ",," << g17(t.delta_mean[c]) << ",";
  out << "\n";
  out << "delta_variance,";
  for (size_t c = 0; c < t.columns.size(); ++c)
    out << ",," << g17(t.delta_var[c]) << ",";
  out << "\n";
  return out.str();
}

std::string render_text(const ResultsTable& t) {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"model", "bsln"};
  for (const auto& c : t.columns) header.push_back(c);
  cells.push_back(header);
  for (const auto& row : t.rows) {
    std::vector<std::string> line{row.key, f3(row.baseline)};
    for (size_t c = 0; c < t.columns.size(); ++c)
      line.push_back(f3(row.values[c]) + " " + f3s(row.deltas[c]) +
                     mark_of(row.deltas[c]));
    cells.push_back(std::move(line));
  }
  std::vector<std::string> summary{"mean+-var", ""};
  for (size_t c = 0; c < t.columns.size(); ++c)
    summary.push_back(f3s(t.delta_mean[c]) + "+-" + f3(t.delta_var[c]));
  cells.push_back(std::move(summary));

  std::vector<size_t> widths(cells[0].size(), 0);
  for (const auto& line : cells)
    for (size_t c = 0; c < line.size(); ++c)
      widths[c] = std::max(widths[c], line[c].size());
  std::ostringstream out;
  for (const auto& line : cells) {
    for (size_t c = 0; c < line.size(); ++c) {
      if (c) out << "  ";
      out << line[c];
      if (c + 1 < line.size())
        out << std::string(widths[c] - line[c].size(), ' ');
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace iac
