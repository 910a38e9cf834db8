#pragma once

#include <cstdint>
#include <string>

#include "specrf/dataset.hpp"
#include "specrf/train.hpp"

namespace specrf {

// One run = one config file. The file is plain "key = value" lines with '#'
// comments; the full key list lives in parse_run_config's table (and in the
// README). Unknown and duplicate keys are errors, as is a value that fails
// to parse. out_dir/data_dir are resolved relative to the file's directory.
struct RunConfig {
    DatasetConfig dataset;
    TrainConfig train;
    uint64_t eval_seed = 1;
    std::string scene = "desk";
    std::string out_dir = "out";
    std::string data_dir = "data";

    std::string source_path;  // file the config was loaded from, if any
    std::string source_text;  // verbatim bytes, echoed into output dirs
};

RunConfig parse_run_config(const std::string& text, const std::string& base_dir);
RunConfig load_run_config(const std::string& path);

// Applies the master seed to every sub-seed the run derives streams from.
void set_run_seed(RunConfig& cfg, uint64_t seed);

// Copies the config bytes verbatim into dir/run.cfg.
void echo_config(const RunConfig& cfg, const std::string& dir);

}  // namespace specrf
