#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "secovarc/train.hpp"

namespace secovarc {

// Contents of a key=value experiment file: every TrainConfig field plus the
// input and output locations.
struct CliConfig {
  TrainConfig train;
  std::optional<std::filesystem::path> train_path;
  std::optional<std::filesystem::path> dev_path;
  std::optional<std::filesystem::path> test_path;
  std::optional<std::filesystem::path> embeddings_path;
  std::optional<std::filesystem::path> encoder_bundle;
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::filesystem::path> pretrain_corpus;
  std::size_t pretrain_epochs = 10;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Applies one key; unknown keys and bad values raise ConfigError naming the key.
void set_cli_field(CliConfig& config, std::string_view key, std::string_view value);

// Blank lines and lines starting with '#' are skipped. Whitespace around keys
// and values is trimmed.
CliConfig parse_config_text(std::string_view text, const std::string& source = "<text>");
CliConfig parse_config_file(const std::filesystem::path& path);

// The configuration back in key=value form, paths included when set.
std::string format_config(const CliConfig& config);

// Entry point of the secovarc tool. args[0] is the subcommand.
int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace secovarc
