#include "subdiff/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "subdiff/errors.hpp"

namespace subdiff {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

const std::set<std::string> known_keys = {
    "subordinator.kappa", "subordinator.law", "subordinator.rate", "subordinator.jump",
    "subordinator.jump_mean", "subordinator.jump_size", "subordinator.jump_lo",
    "subordinator.jump_hi", "subordinator.alpha", "subordinator.scale",
    "subordinator.eps_trunc", "subordinator.compensate", "grid.T", "grid.n_steps", "model.a",
    "model.x0", "model.id", "solver.basis_degree", "solver.beta", "solver.tol",
    "solver.max_iter", "solver.tol_flat", "mc.n_paths", "mc.seed", "output.dir",
};

double get_double(const std::map<std::string, std::string>& kv, const std::string& key,
                  double fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        std::size_t pos = 0;
        double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw SpecError("config: " + key + " is not a number: '" + it->second + "'");
    }
}

long long get_int(const std::map<std::string, std::string>& kv, const std::string& key,
                  long long fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        std::size_t pos = 0;
        long long v = std::stoll(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw SpecError("config: " + key + " is not an integer: '" + it->second + "'");
    }
}

std::string get_str(const std::map<std::string, std::string>& kv, const std::string& key,
                    const std::string& fallback) {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
}

bool get_bool(const std::map<std::string, std::string>& kv, const std::string& key,
              bool fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw SpecError("config: " + key + " must be true/false, got '" + it->second + "'");
}

} // namespace

std::map<std::string, std::string> parse_config_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw SpecError("config: line " + std::to_string(lineno) + " has no '='");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw SpecError("config: line " + std::to_string(lineno) + " empty key");
        kv[key] = value;
    }
    return kv;
}

std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SpecError("config: cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

ExperimentConfig ExperimentConfig::from_map(const std::map<std::string, std::string>& kv) {
    for (const auto& [k, v] : kv)
        if (!known_keys.count(k)) throw SpecError("config: unknown key '" + k + "'");

    ExperimentConfig c;
    c.kappa = get_double(kv, "subordinator.kappa", c.kappa);
    c.law = get_str(kv, "subordinator.law", c.law);
    c.rate = get_double(kv, "subordinator.rate", c.rate);
    c.jump = get_str(kv, "subordinator.jump", c.jump);
    c.jump_mean = get_double(kv, "subordinator.jump_mean", c.jump_mean);
    c.jump_size = get_double(kv, "subordinator.jump_size", c.jump_size);
    c.jump_lo = get_double(kv, "subordinator.jump_lo", c.jump_lo);
    c.jump_hi = get_double(kv, "subordinator.jump_hi", c.jump_hi);
    c.alpha = get_double(kv, "subordinator.alpha", c.alpha);
    c.scale = get_double(kv, "subordinator.scale", c.scale);
    c.eps_trunc = get_double(kv, "subordinator.eps_trunc", c.eps_trunc);
    c.compensate = get_bool(kv, "subordinator.compensate", c.compensate);
    c.T = get_double(kv, "grid.T", c.T);
    c.n_steps = static_cast<int>(get_int(kv, "grid.n_steps", c.n_steps));
    c.a = get_double(kv, "model.a", c.a);
    c.x0 = get_double(kv, "model.x0", c.x0);
    c.model_id = get_str(kv, "model.id", c.model_id);
    c.basis_degree = static_cast<int>(get_int(kv, "solver.basis_degree", c.basis_degree));
    c.beta = get_double(kv, "solver.beta", c.beta);
    c.tol = get_double(kv, "solver.tol", c.tol);
    c.max_iter = static_cast<int>(get_int(kv, "solver.max_iter", c.max_iter));
    c.tol_flat = get_double(kv, "solver.tol_flat", c.tol_flat);
    c.n_paths = static_cast<int>(get_int(kv, "mc.n_paths", c.n_paths));
    c.master_seed = static_cast<std::uint64_t>(get_int(kv, "mc.seed", (long long)c.master_seed));
    c.out_dir = get_str(kv, "output.dir", c.out_dir);

    if (!(c.kappa > 0.0)) throw SpecError("config: subordinator.kappa must be > 0");
    if (c.law != "none" && c.law != "compound_poisson" && c.law != "truncated_stable")
        throw SpecError("config: subordinator.law must be none|compound_poisson|truncated_stable");
    if (c.law == "compound_poisson") {
        if (!(c.rate > 0.0)) throw SpecError("config: subordinator.rate must be > 0");
        if (c.jump != "exp" && c.jump != "fixed" && c.jump != "uniform")
            throw SpecError("config: subordinator.jump must be exp|fixed|uniform");
        if (c.jump == "exp" && !(c.jump_mean > 0.0))
            throw SpecError("config: subordinator.jump_mean must be > 0");
        if (c.jump == "fixed" && !(c.jump_size > 0.0))
            throw SpecError("config: subordinator.jump_size must be > 0");
        if (c.jump == "uniform" && !(c.jump_hi > c.jump_lo && c.jump_lo >= 0.0))
            throw SpecError("config: subordinator.jump_lo/jump_hi must satisfy 0 <= lo < hi");
    }
    if (c.law == "truncated_stable") {
        if (!(c.alpha > 0.0 && c.alpha < 1.0))
            throw SpecError("config: subordinator.alpha must lie in (0, 1)");
        if (!(c.scale > 0.0)) throw SpecError("config: subordinator.scale must be > 0");
        if (!(c.eps_trunc > 0.0)) throw SpecError("config: subordinator.eps_trunc must be > 0");
    }
    if (!(c.T > 0.0)) throw SpecError("config: grid.T must be > 0");
    if (c.n_steps < 2) throw SpecError("config: grid.n_steps must be >= 2");
    if (c.a < 0.0 || c.a >= c.T) throw SpecError("config: model.a must satisfy 0 <= a < T");
    if (c.model_id != "lq" && c.model_id != "lq_sigma_u")
        throw SpecError("config: model.id must be lq|lq_sigma_u");
    if (c.basis_degree < 1) throw SpecError("config: solver.basis_degree must be >= 1");
    if (c.beta < 0.0) throw SpecError("config: solver.beta must be >= 0");
    if (!(c.tol > 0.0)) throw SpecError("config: solver.tol must be > 0");
    if (c.max_iter < 1) throw SpecError("config: solver.max_iter must be >= 1");
    if (c.tol_flat < 0.0) throw SpecError("config: solver.tol_flat must be >= 0");
    if (c.n_paths < 2) throw SpecError("config: mc.n_paths must be >= 2");
    return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    return from_map(parse_config_file(path));
}

SubordinatorSpec ExperimentConfig::subordinator() const {
    SubordinatorSpec spec;
    spec.kappa = kappa;
    if (law == "none") {
        spec.jump_law = NoJumps{};
    } else if (law == "compound_poisson") {
        CompoundPoisson cp;
        cp.rate = rate;
        if (jump == "exp")
            cp.sizes = ExpJumps{jump_mean};
        else if (jump == "fixed")
            cp.sizes = FixedJumps{jump_size};
        else
            cp.sizes = UniformJumps{jump_lo, jump_hi};
        spec.jump_law = cp;
    } else {
        spec.jump_law = TruncatedStable{alpha, scale, eps_trunc, compensate};
    }
    spec.validate();
    return spec;
}

std::vector<double> ExperimentConfig::grid() const {
    std::vector<double> g(n_steps + 1);
    for (int i = 0; i <= n_steps; ++i) g[i] = T * i / n_steps;
    g.back() = T;
    return g;
}

std::string ExperimentConfig::echo() const {
    std::ostringstream s;
    s << "grid.T = " << format_double(T) << "\n"
      << "grid.n_steps = " << n_steps << "\n"
      << "mc.n_paths = " << n_paths << "\n"
      << "mc.seed = " << master_seed << "\n"
      << "model.a = " << format_double(a) << "\n"
      << "model.id = " << model_id << "\n"
      << "model.x0 = " << format_double(x0) << "\n"
      << "output.dir = " << out_dir << "\n"
      << "solver.basis_degree = " << basis_degree << "\n"
      << "solver.beta = " << format_double(beta) << "\n"
      << "solver.max_iter = " << max_iter << "\n"
      << "solver.tol = " << format_double(tol) << "\n"
      << "solver.tol_flat = " << format_double(tol_flat) << "\n"
      << "subordinator.kappa = " << format_double(kappa) << "\n"
      << "subordinator.law = " << law << "\n";
    if (law == "compound_poisson") {
        s << "subordinator.jump = " << jump << "\n";
        if (jump == "exp") s << "subordinator.jump_mean = " << format_double(jump_mean) << "\n";
        if (jump == "fixed") s << "subordinator.jump_size = " << format_double(jump_size) << "\n";
        if (jump == "uniform")
            s << "subordinator.jump_hi = " << format_double(jump_hi) << "\n"
              << "subordinator.jump_lo = " << format_double(jump_lo) << "\n";
        s << "subordinator.rate = " << format_double(rate) << "\n";
    }
    if (law == "truncated_stable") {
        s << "subordinator.alpha = " << format_double(alpha) << "\n"
          << "subordinator.compensate = " << (compensate ? "true" : "false") << "\n"
          << "subordinator.eps_trunc = " << format_double(eps_trunc) << "\n"
          << "subordinator.scale = " << format_double(scale) << "\n";
    }
    return s.str();
}

std::string ExperimentConfig::hash() const {
    const std::string e = echo();
    std::uint64_t h = 1469598103934665603ull; // FNV-1a offset basis
    for (unsigned char c : e) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : out_(path, std::ios::trunc | std::ios::binary) {
    if (!out_) throw SpecError("csv: cannot open '" + path + "' for writing");
    raw_row(header);
}

void CsvWriter::row(const std::vector<double>& values) {
    std::vector<std::string> cells;
    cells.reserve(values.size());
    for (double v : values) cells.push_back(format_double(v));
    raw_row(cells);
}

void CsvWriter::raw_row(const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) line += ',';
        const std::string& c = cells[i];
        if (c.find_first_of(",\"\n") != std::string::npos) {
            line += '"';
            for (char ch : c) {
                if (ch == '"') line += '"';
                line += ch;
            }
            line += '"';
        } else {
            line += c;
        }
    }
    line += "\r\n";
    out_ << line;
}

} // namespace subdiff
