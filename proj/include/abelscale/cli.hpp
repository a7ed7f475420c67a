#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace abelscale {

enum class Command { Forward, Invert, RateStudy, DiagnoseKernel, MakeMatrix };

struct RunConfig {
  Command command = Command::Forward;
  double a = 1.0;
  std::optional<int> r;  ///< default ceil(a)
  double p = 1.0;
  int n = 100;
  std::string kernel = "constant";  ///< constant, stereology or file
  std::string kernel_file;
  std::string alpha_rule = "oracle";  ///< fixed, oracle, discrepancy, apriori
  std::optional<double> alpha;
  double apriori_c = 1.0;
  double q = 0.0;  ///< smoothness for the a-priori rule; 0 means 2p + a
  double tau = 1.1;
  int quiet_prefix = 0;
  double delta = 0.0;
  std::uint64_t seed = 0;
  std::string solver;  ///< direct or cg; empty picks by size
  double cg_tol = 1e-10;
  int cg_max_iter = 10000;
  std::string input;
  std::string truth;  ///< reference solution for the oracle rule
  std::string output;
  std::string summary;
  std::string plan;
  std::string matrix = "B";  ///< make-matrix target: B or P
  int fine_n = 2000;
  std::string samples;  ///< diagnose-kernel h samples CSV
  int max_nodes = 5000;
};

enum ExitCode { kExitOk = 0, kExitValidation = 1, kExitNumerical = 2, kExitIo = 3 };

/// Executes one command. Errors are reported on stderr and mapped to exit codes.
int run(const RunConfig& config);

/// Parses argv into a RunConfig and runs it.
int main_entry(int argc, char** argv);

}  // namespace abelscale
