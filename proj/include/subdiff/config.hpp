#pragma once
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "subdiff/subordinator.hpp"

namespace subdiff {

// Flat key=value configuration with dotted sections, e.g.
//   subordinator.kappa = 1.0
// Lines starting with '#' and blank lines are ignored.
std::map<std::string, std::string> parse_config_file(const std::string& path);
std::map<std::string, std::string> parse_config_text(const std::string& text);

struct ExperimentConfig {
    // subordinator
    double kappa = 1.0;
    std::string law = "compound_poisson"; // none | compound_poisson | truncated_stable
    double rate = 1.0;
    std::string jump = "exp"; // exp | fixed | uniform
    double jump_mean = 1.0;
    double jump_size = 1.0;
    double jump_lo = 0.0;
    double jump_hi = 1.0;
    double alpha = 0.5;
    double scale = 1.0;
    double eps_trunc = 1e-3;
    bool compensate = true;

    // grid and model
    double T = 1.0;
    int n_steps = 400;
    double a = 0.25;
    double x0 = 0.0;
    std::string model_id = "lq"; // lq | lq_sigma_u

    // solver
    int basis_degree = 3;
    double beta = 0.0; // 0 means the module default
    double tol = 1e-8;
    int max_iter = 12;
    double tol_flat = 0.0; // 0 means the module default

    // monte carlo and output
    int n_paths = 20000;
    std::uint64_t master_seed = 12345;
    std::string out_dir = ".";

    static ExperimentConfig from_map(const std::map<std::string, std::string>& kv);
    static ExperimentConfig from_file(const std::string& path);

    SubordinatorSpec subordinator() const;
    std::vector<double> grid() const; // uniform, n_steps+1 nodes on [0, T]

    // canonical sorted key=value echo of the resolved config
    std::string echo() const;
    // FNV-1a hash of the echo, hex
    std::string hash() const;
};

// full-precision decimal formatting (17 significant digits, lossless)
std::string format_double(double v);

// RFC-4180 style CSV writer; numeric cells via format_double
class CsvWriter {
  public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header);
    void row(const std::vector<double>& values);
    void raw_row(const std::vector<std::string>& cells);

  private:
    std::ofstream out_;
};

} // namespace subdiff
