#pragma once

#include <stdexcept>
#include <string>

#include "config.hpp"

namespace stlab::cli {

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure

void cmd_simulate(const ExperimentConfig& cfg, const std::string& out_dir, int threads);
void cmd_train(const ExperimentConfig& cfg, const std::string& data_dir,
               const std::string& out_dir, int threads);
void cmd_eval_transfer(const ExperimentConfig& cfg, const std::string& model_path,
                       const std::string& out_dir, int threads);
void cmd_bound(const ExperimentConfig& cfg, const std::string& model_path,
               const std::string& data_dir, const std::string& out_dir, int threads);
void cmd_mid(const ExperimentConfig& cfg, const std::string& out_dir, int threads);

}  // namespace stlab::cli
