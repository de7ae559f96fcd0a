#pragma once

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "expr.hpp"
#include "filter_bank.hpp"
#include "grid.hpp"
#include "moment_space.hpp"
#include "spectra.hpp"

namespace specmoment {
namespace io {

// 17 significant digits round-trip IEEE doubles exactly.
inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf);
}

inline std::string json_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 2);
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out;
}

inline std::string json_array(const Vector& v) {
  std::string s = "[";
  for (int i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += fmt(v(i));
  }
  return s + "]";
}

inline std::string json_matrix(const Matrix& m) {
  std::string s = "[";
  for (int i = 0; i < m.rows(); ++i) {
    if (i) s += ",";
    s += "[";
    for (int j = 0; j < m.cols(); ++j) {
      if (j) s += ",";
      s += fmt(m(i, j));
    }
    s += "]";
  }
  return s + "]";
}

// Key-ordered JSON emitter; guarantees byte-identical reports across runs.
class JsonBuilder {
 public:
  JsonBuilder& field(const std::string& k, double v) { return raw(k, fmt(v)); }
  JsonBuilder& field(const std::string& k, int v) { return raw(k, std::to_string(v)); }
  JsonBuilder& field(const std::string& k, bool v) { return raw(k, v ? "true" : "false"); }
  JsonBuilder& field(const std::string& k, const std::string& v) {
    return raw(k, "\"" + json_escape(v) + "\"");
  }
  JsonBuilder& field(const std::string& k, const Vector& v) { return raw(k, json_array(v)); }
  JsonBuilder& field(const std::string& k, const Matrix& v) { return raw(k, json_matrix(v)); }
  JsonBuilder& raw(const std::string& k, const std::string& json) {
    if (!first_) body_ += ",";
    first_ = false;
    body_ += "\"" + json_escape(k) + "\":" + json;
    return *this;
  }
  std::string str() const { return "{" + body_ + "}"; }

 private:
  std::string body_;
  bool first_ = true;
};

inline nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::InvalidInput, "cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::InvalidInput, path + ": " + e.what());
  }
  return j;
}

inline Matrix parse_matrix(const nlohmann::json& j, const std::string& name) {
  if (!j.is_array() || j.empty() || !j.front().is_array())
    throw Error(ErrorCode::InvalidInput, name + " must be an array of rows");
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j.front().size());
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (static_cast<int>(j[i].size()) != cols)
      throw Error(ErrorCode::InvalidInput, name + ": ragged rows");
    for (int k = 0; k < cols; ++k) {
      if (!j[i][k].is_number())
        throw Error(ErrorCode::InvalidInput, name + ": entries must be numbers");
      m(i, k) = j[i][k].get<double>();
    }
  }
  return m;
}

inline FilterBank read_model(const std::string& path) {
  const nlohmann::json j = load_json(path);
  if (!j.contains("A") || !j.contains("B"))
    throw Error(ErrorCode::InvalidInput, path + ": model needs keys \"A\" and \"B\"");
  return new_filter_bank(parse_matrix(j["A"], "A"), parse_matrix(j["B"], "B"));
}

inline StateCovariance read_sigma(const std::string& path) {
  const nlohmann::json j = load_json(path);
  if (!j.contains("Sigma"))
    throw Error(ErrorCode::InvalidInput, path + ": covariance needs key \"Sigma\"");
  return StateCovariance(parse_matrix(j["Sigma"], "Sigma"));
}

// SpectrumFile: header "theta,re_11,im_11,..." over the upper triangle in
// row-major order, one row per node, theta ascending; values %.17g.
inline void write_spectrum(const std::string& path, const SpectralDensity& phi) {
  std::ofstream out(path);
  if (!out)
    throw Error(ErrorCode::InvalidInput, "cannot write " + path);
  const int m = phi.dim();
  out << "theta";
  for (int i = 0; i < m; ++i)
    for (int j = i; j < m; ++j)
      out << ",re_" << (i + 1) << (j + 1) << ",im_" << (i + 1) << (j + 1);
  out << "\n";
  for (int k = 0; k < phi.grid().size(); ++k) {
    out << fmt(phi.grid().node(k));
    for (int i = 0; i < m; ++i)
      for (int j = i; j < m; ++j) {
        const Complex v = phi.samples.values[k](i, j);
        out << "," << fmt(v.real()) << "," << fmt(v.imag());
      }
    out << "\n";
  }
  if (!out)
    throw Error(ErrorCode::InvalidInput, "write failed on " + path);
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string tok;
  std::stringstream ss(line);
  while (std::getline(ss, tok, ',')) {
    size_t a = 0, b = tok.size();
    while (a < b && std::isspace(static_cast<unsigned char>(tok[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(tok[b - 1]))) --b;
    out.push_back(tok.substr(a, b - a));
  }
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidInput, where + ": bad number '" + s + "'");
  }
}

}  // namespace detail

inline SpectralDensity read_spectrum(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::InvalidInput, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorCode::InvalidInput, path + ": empty spectrum file");
  const std::vector<std::string> header = detail::split_csv(line);
  if (header.empty() || header[0] != "theta" || header.size() < 3 || header.size() % 2 == 0)
    throw Error(ErrorCode::InvalidInput, path + ": header must be theta,re_11,im_11,...");
  const int pairs = static_cast<int>(header.size() - 1) / 2;
  int m = 0;
  while (m * (m + 1) / 2 < pairs) ++m;
  if (m * (m + 1) / 2 != pairs)
    throw Error(ErrorCode::InvalidInput, path + ": column count is not an upper triangle");

  std::vector<double> thetas;
  std::vector<CMatrix> vals;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> tok = detail::split_csv(line);
    if (static_cast<int>(tok.size()) != 1 + 2 * pairs)
      throw Error(ErrorCode::InvalidInput, path + ": wrong field count on a data row");
    thetas.push_back(detail::parse_double(tok[0], path));
    CMatrix s(m, m);
    int c = 1;
    for (int i = 0; i < m; ++i)
      for (int j = i; j < m; ++j) {
        const double re = detail::parse_double(tok[c++], path);
        const double im = detail::parse_double(tok[c++], path);
        s(i, j) = Complex(re, im);
        if (j != i) s(j, i) = Complex(re, -im);
      }
    vals.push_back(std::move(s));
  }
  const int n = static_cast<int>(vals.size());
  if (n < 4 || !is_power_of_two(n))
    throw Error(ErrorCode::InvalidInput,
                path + ": node count must be a power of two >= 4, got " + std::to_string(n));
  const CircleGrid grid(n);
  for (int j = 0; j < n; ++j)
    if (std::abs(thetas[j] - grid.node(j)) > 1e-9)
      throw Error(ErrorCode::InvalidInput,
                  path + ": theta column does not match the uniform grid at row " +
                      std::to_string(j));
  return make_density(GridHermitianFunction(grid, std::move(vals)));
}

inline PriorSpec sampled_from_expr(const std::string& text, const CircleGrid& grid) {
  const Expr e = Expr::parse(text);
  std::vector<CMatrix> vals;
  vals.reserve(grid.size());
  for (int j = 0; j < grid.size(); ++j) {
    CMatrix s(1, 1);
    s(0, 0) = Complex(e.eval(grid.node(j)), 0.0);
    vals.push_back(std::move(s));
  }
  return PriorSpec::sampled(std::move(vals));
}

// constant:<c> | allpole:identity | ma:<c0,c1,...> | file:<path> | expr:<...>
inline PriorSpec parse_prior(const std::string& spec, int n_states, int grid_size) {
  const size_t colon = spec.find(':');
  const std::string kind = spec.substr(0, colon == std::string::npos ? spec.size() : colon);
  const std::string arg = colon == std::string::npos ? "" : spec.substr(colon + 1);
  if (kind == "constant")
    return PriorSpec::constant(detail::parse_double(arg, "prior constant"));
  if (kind == "allpole") {
    if (arg != "identity")
      throw Error(ErrorCode::InvalidInput, "only allpole:identity is supported");
    if (n_states < 1)
      throw Error(ErrorCode::InvalidInput, "allpole prior requires a model");
    return PriorSpec::all_pole(Matrix::Identity(n_states, n_states));
  }
  if (kind == "ma") {
    std::vector<double> w;
    for (const std::string& t : detail::split_csv(arg))
      w.push_back(detail::parse_double(t, "prior ma coefficients"));
    if (w.empty())
      throw Error(ErrorCode::InvalidInput, "ma: prior needs at least one coefficient");
    return PriorSpec::moving_average(std::move(w));
  }
  if (kind == "file") return PriorSpec::sampled(read_spectrum(arg).samples.values);
  if (kind == "expr") return sampled_from_expr(arg, CircleGrid(grid_size));
  throw Error(ErrorCode::InvalidInput,
              "unknown prior '" + spec +
                  "' (expected constant:, allpole:identity, ma:, file:, or expr:)");
}

// Realize a prior against a target dimension/grid when no filter bank is in
// play (cmd_divergence); all-pole priors still need the model.
inline SpectralDensity realize_prior_standalone(const PriorSpec& prior, int m,
                                                const CircleGrid& grid,
                                                const FilterBank* bank) {
  if (bank) return realize_prior(prior, *bank, grid);
  if (std::holds_alternative<PriorSpec::AllPole>(prior.spec))
    throw Error(ErrorCode::InvalidInput, "allpole prior requires --model");
  SpectralDensity d = [&] {
    if (const auto* c = std::get_if<PriorSpec::Constant>(&prior.spec))
      return constant_density(c->c, m, grid);
    if (const auto* ma = std::get_if<PriorSpec::MovingAverage>(&prior.spec)) {
      if (m != 1)
        throw Error(ErrorCode::InvalidInput, "moving-average prior is scalar (needs m = 1)");
      return scalar_density(ma_power(ma->w, grid), grid);
    }
    const auto& sa = std::get<PriorSpec::Sampled>(prior.spec);
    if (static_cast<int>(sa.values.size()) != grid.size())
      throw Error(ErrorCode::InvalidInput, "sampled prior: need one matrix per grid node");
    for (const CMatrix& v : sa.values)
      if (v.rows() != m || v.cols() != m)
        throw Error(ErrorCode::InvalidInput, "sampled prior: matrix size mismatch");
    return make_density(GridHermitianFunction(grid, sa.values));
  }();
  if (!d.coercive())
    throw Error(ErrorCode::NotCoercive, "prior density is not coercive on the grid");
  return d;
}

}  // namespace io
}  // namespace specmoment
