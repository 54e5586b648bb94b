#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "cenhdr/model.hpp"
#include "cenhdr/training.hpp"

namespace cenhdr::cli {

/// Runs one invocation; `args` excludes the program name. Returns 0 on
/// success, 2 on a usage error and 1 on a runtime failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct ConfigFile {
    ModelConfig model;
    TrainConfig train;
};

/// Flat `key = value` lines naming ModelConfig / TrainConfig fields. Blank
/// lines and `#` comments are ignored. Unknown keys or bad values raise ConfigError.
ConfigFile parse_config(const std::string& text);
ConfigFile read_config(const std::filesystem::path& path);

}  // namespace cenhdr::cli
