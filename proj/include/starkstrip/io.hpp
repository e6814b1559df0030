#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "starkstrip/lattice.hpp"

namespace starkstrip {

inline constexpr const char* version_string = "starkstrip 1.0.0";

/// Fixed 17-significant-digit formatting: shortest round-trippable doubles,
/// identical across runs and thread counts.
inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string fmt_int(long v) { return std::to_string(v); }

// ---------------------------------------------------------------------------
// CSV

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> columns)
      : columns_(std::move(columns)) {}

  void row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_.size())
      throw DimensionError("csv row width mismatch");
    rows_.push_back(cells);
  }

  std::string str() const {
    std::ostringstream os;
    for (size_t i = 0; i < columns_.size(); ++i)
      os << columns_[i] << (i + 1 < columns_.size() ? "," : "");
    os << "\n";
    for (const auto& r : rows_) {
      for (size_t i = 0; i < r.size(); ++i)
        os << r[i] << (i + 1 < r.size() ? "," : "");
      os << "\n";
    }
    return os.str();
  }

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

// ---------------------------------------------------------------------------
// Flat key-value config file for LatticeConfig

inline std::string serialize_config(const LatticeConfig& cfg) {
  std::ostringstream os;
  os << "alpha=" << cfg.alpha_num << "/" << cfg.alpha_den << "\n"
     << "J=" << fmt_g17(cfg.J) << "\n"
     << "F=" << fmt_g17(cfg.F) << "\n"
     << "Lx=" << cfg.Lx << "\n"
     << "y_min=" << cfg.m_min << "\n"
     << "y_max=" << cfg.m_max << "\n"
     << "bc_x=" << to_string(cfg.bc_x) << "\n";
  return os.str();
}

inline std::pair<int, int> parse_alpha(const std::string& text) {
  auto slash = text.find('/');
  try {
    if (slash == std::string::npos) {
      int r = std::stoi(text);
      if (r != 0) throw ConfigError("alpha must be rational r/q or 0");
      return {0, 1};
    }
    int r = std::stoi(text.substr(0, slash));
    int q = std::stoi(text.substr(slash + 1));
    return {r, q};
  } catch (const std::exception&) {
    throw ConfigError("cannot parse alpha value '" + text + "'");
  }
}

inline LatticeConfig parse_config(const std::string& text) {
  LatticeConfig cfg;
  bool seen_alpha = false;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(" \t\r");
      size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line without '=': " + line);
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    try {
      if (key == "alpha") {
        auto [r, q] = parse_alpha(val);
        cfg.alpha_num = r;
        cfg.alpha_den = q;
        seen_alpha = true;
      } else if (key == "J") {
        cfg.J = std::stod(val);
      } else if (key == "F") {
        cfg.F = std::stod(val);
      } else if (key == "Lx") {
        cfg.Lx = std::stoi(val);
      } else if (key == "y_min") {
        cfg.m_min = std::stoi(val);
      } else if (key == "y_max") {
        cfg.m_max = std::stoi(val);
      } else if (key == "bc_x") {
        if (val == "periodic")
          cfg.bc_x = BoundaryX::Periodic;
        else if (val == "dirichlet")
          cfg.bc_x = BoundaryX::Dirichlet;
        else
          throw ConfigError("bc_x must be periodic or dirichlet");
      } else {
        throw ConfigError("unknown config key '" + key + "'");
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("cannot parse config value for '" + key + "'");
    }
  }
  if (!seen_alpha) throw ConfigError("config lacks an alpha entry");
  cfg.normalize_alpha();
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Expression sugar for caption parameters: numbers combined with J, wc,
// Fcr, F, TB, Tc, alpha and pi, e.g. "-2J+wc/2" or "400Tc".

struct ExprContext {
  double J = 1.0;
  double alpha = 0.0;
  double F = 0.0;

  double lookup(const std::string& name) const {
    if (name == "J") return J;
    if (name == "alpha") return alpha;
    if (name == "F") return F;
    if (name == "pi") return pi;
    if (name == "wc" || name == "Fcr") return 2.0 * pi * alpha * J;
    if (name == "TB") {
      if (F <= 0.0) throw ConfigError("TB undefined at F = 0");
      return 2.0 * pi / F;
    }
    if (name == "Tc") {
      if (alpha <= 0.0 || J <= 0.0)
        throw ConfigError("Tc undefined without a magnetic field");
      return 2.0 * pi / (2.0 * pi * alpha * J);
    }
    throw ConfigError("unknown symbol '" + name + "' in expression");
  }
};

namespace detail {

class ExprParser {
 public:
  ExprParser(const std::string& text, const ExprContext& ctx)
      : text_(text), ctx_(ctx) {}

  double parse() {
    double v = expr();
    skip_ws();
    if (pos_ != text_.size())
      throw ConfigError("trailing characters in expression '" + text_ + "'");
    return v;
  }

 private:
  double expr() {
    double v = term();
    for (;;) {
      skip_ws();
      if (match('+'))
        v += term();
      else if (match('-'))
        v -= term();
      else
        return v;
    }
  }
  double term() {
    double v = factor();
    for (;;) {
      skip_ws();
      if (match('*'))
        v *= factor();
      else if (match('/')) {
        double d = factor();
        if (d == 0.0) throw ConfigError("division by zero in expression");
        v /= d;
      } else
        return v;
    }
  }
  double factor() {
    skip_ws();
    if (match('-')) return -factor();
    if (match('+')) return factor();
    return primary();
  }
  double primary() {
    skip_ws();
    if (match('(')) {
      double v = expr();
      skip_ws();
      if (!match(')')) throw ConfigError("missing ')' in expression");
      return v;
    }
    if (pos_ < text_.size() &&
        (std::isdigit(static_cast<unsigned char>(text_[pos_])) ||
         text_[pos_] == '.')) {
      size_t end = pos_;
      while (end < text_.size() &&
             (std::isdigit(static_cast<unsigned char>(text_[end])) ||
              text_[end] == '.' || text_[end] == 'e' || text_[end] == 'E' ||
              ((text_[end] == '+' || text_[end] == '-') && end > pos_ &&
               (text_[end - 1] == 'e' || text_[end - 1] == 'E'))))
        ++end;
      double v = std::stod(text_.substr(pos_, end - pos_));
      pos_ = end;
      // implicit multiplication: 2J, 400Tc
      if (pos_ < text_.size() &&
          std::isalpha(static_cast<unsigned char>(text_[pos_])))
        return v * primary();
      return v;
    }
    if (pos_ < text_.size() &&
        std::isalpha(static_cast<unsigned char>(text_[pos_]))) {
      size_t end = pos_;
      while (end < text_.size() &&
             std::isalnum(static_cast<unsigned char>(text_[end])))
        ++end;
      std::string name = text_.substr(pos_, end - pos_);
      pos_ = end;
      return ctx_.lookup(name);
    }
    throw ConfigError("cannot parse expression '" + text_ + "'");
  }
  void skip_ws() {
    while (pos_ < text_.size() &&
           std::isspace(static_cast<unsigned char>(text_[pos_])))
      ++pos_;
  }
  bool match(char c) {
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  const std::string& text_;
  const ExprContext& ctx_;
  size_t pos_ = 0;
};

}  // namespace detail

inline double eval_expression(const std::string& text,
                              const ExprContext& ctx) {
  return detail::ExprParser(text, ctx).parse();
}

// ---------------------------------------------------------------------------
// Run manifest

inline std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hash_hex(const std::string& data) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(data)));
  return buf;
}

class RunManifest {
 public:
  RunManifest(std::string subcommand, std::uint64_t seed)
      : subcommand_(std::move(subcommand)), seed_(seed) {}

  void set_param(const std::string& key, const std::string& value) {
    params_[key] = value;
  }
  void set_param(const std::string& key, double value) {
    params_[key] = fmt_g17(value);
  }
  void set_param(const std::string& key, long value) {
    params_[key] = std::to_string(value);
  }

  /// Write a file and record it (name, size, content hash). Only the file
  /// name is recorded so manifests compare equal across output directories.
  void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open output file " + path);
    out << content;
    out.close();
    auto slash = path.find_last_of("/\\");
    nlohmann::json rec;
    rec["path"] = slash == std::string::npos ? path : path.substr(slash + 1);
    rec["bytes"] = content.size();
    rec["fnv1a64"] = hash_hex(content);
    outputs_.push_back(rec);
  }

  std::string str() const {
    nlohmann::json j;
    j["tool"] = version_string;
    j["subcommand"] = subcommand_;
    j["seed"] = seed_;
    j["parameters"] = params_;
    j["outputs"] = outputs_;
    return j.dump(2) + "\n";
  }

  void write(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open manifest file " + path);
    out << str();
  }

 private:
  std::string subcommand_;
  std::uint64_t seed_;
  std::map<std::string, std::string> params_;
  std::vector<nlohmann::json> outputs_;
};

// ---------------------------------------------------------------------------
// NDJSON state records

inline std::string state_record(const LandauStarkState& st) {
  const LatticeConfig& cfg = st.psi.cfg;
  nlohmann::json j;
  j["nu"] = st.nu;
  j["n"] = st.ladder_index;
  j["energy"] = st.energy;
  j["grid_dims"] = {cfg.Lx, cfg.ny()};
  j["l_min"] = cfg.l_min();
  j["m_min"] = cfg.m_min;
  std::vector<double> re(cfg.n_sites()), im(cfg.n_sites());
  for (long i = 0; i < cfg.n_sites(); ++i) {
    re[i] = st.psi.amps[i].real();
    im[i] = st.psi.amps[i].imag();
  }
  j["amplitudes_re"] = re;
  j["amplitudes_im"] = im;
  return j.dump();
}

inline std::string snapshot_record(const WaveFunction& psi, double t) {
  LandauStarkState st;
  st.psi = psi;
  nlohmann::json j = nlohmann::json::parse(state_record(st));
  j.erase("nu");
  j.erase("n");
  j.erase("energy");
  j["t"] = t;
  return j.dump();
}

}  // namespace starkstrip
