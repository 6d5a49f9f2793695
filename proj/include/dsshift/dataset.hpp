#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsshift {

// Immutable table of sampled units. Column order follows the CSV layout:
// domain_d, domain_theta_id, x, yhat, pivot/auxiliary columns, s_sample,
// s_label, y (empty field when unobserved).
struct Dataset {
  std::vector<std::string> value_cols;  // x..., yhat, then aux/pivot in schema order
  std::vector<std::vector<double>> data;
  std::vector<std::uint8_t> s_sample, s_label;
  std::vector<double> y;
  std::vector<std::uint8_t> y_obs;
  int domain_d = 0;
  std::string theta_id;
  std::uint64_t seed = 0;

  std::size_t rows() const { return s_sample.size(); }

  bool has(const std::string& name) const {
    for (const auto& c : value_cols)
      if (c == name) return true;
    return false;
  }

  const std::vector<double>& col(const std::string& name) const {
    for (std::size_t j = 0; j < value_cols.size(); ++j)
      if (value_cols[j] == name) return data[j];
    throw std::invalid_argument("dataset: no column '" + name + "'");
  }

  // Guarded label access: reading y from an unlabeled row is a bug.
  double y_at(std::size_t i) const {
    if (!y_obs[i]) throw std::logic_error("dataset: y read from row with s_label=0");
    return y[i];
  }

  void check_invariants() const {
    for (std::size_t i = 0; i < rows(); ++i) {
      if (y_obs[i] != (s_label[i] != 0))
        throw std::logic_error("dataset: y present iff s_label=1 violated at row " +
                               std::to_string(i));
      if (y_obs[i] && !std::isfinite(y[i]))
        throw std::logic_error("dataset: non-finite y at row " + std::to_string(i));
    }
    for (const auto& c : data)
      for (double v : c)
        if (!std::isfinite(v)) throw std::logic_error("dataset: non-finite value");
  }
};

inline void write_csv(const Dataset& ds, std::ostream& os) {
  os << "domain_d,domain_theta_id";
  for (const auto& c : ds.value_cols) os << ',' << c;
  os << ",s_sample,s_label,y\n";
  os.precision(17);
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    os << ds.domain_d << ',' << ds.theta_id;
    for (const auto& c : ds.data) os << ',' << c[i];
    os << ',' << static_cast<int>(ds.s_sample[i]) << ',' << static_cast<int>(ds.s_label[i]) << ',';
    if (ds.y_obs[i]) os << ds.y[i];
    os << '\n';
  }
}

inline void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  write_csv(ds, f);
}

inline Dataset read_csv(std::istream& is) {
  Dataset ds;
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("csv: empty file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) header.push_back(tok);
  }
  if (header.size() < 5 || header[0] != "domain_d" || header[1] != "domain_theta_id")
    throw std::runtime_error("csv: unexpected header");
  std::size_t nv = header.size() - 5;  // minus domain cols and flags/y
  ds.value_cols.assign(header.begin() + 2, header.begin() + 2 + nv);
  ds.data.assign(nv, {});
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> tok;
    std::stringstream ss(line);
    std::string t;
    while (std::getline(ss, t, ',')) tok.push_back(t);
    if (line.back() == ',') tok.push_back("");
    if (tok.size() != header.size()) throw std::runtime_error("csv: ragged row");
    if (first) {
      ds.domain_d = std::stoi(tok[0]);
      ds.theta_id = tok[1];
      first = false;
    }
    for (std::size_t j = 0; j < nv; ++j) ds.data[j].push_back(std::stod(tok[2 + j]));
    ds.s_sample.push_back(static_cast<std::uint8_t>(std::stoi(tok[2 + nv])));
    ds.s_label.push_back(static_cast<std::uint8_t>(std::stoi(tok[3 + nv])));
    if (tok[4 + nv].empty()) {
      ds.y.push_back(0.0);
      ds.y_obs.push_back(0);
    } else {
      ds.y.push_back(std::stod(tok[4 + nv]));
      ds.y_obs.push_back(1);
    }
  }
  return ds;
}

inline Dataset read_csv_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  return read_csv(f);
}

}  // namespace dsshift
