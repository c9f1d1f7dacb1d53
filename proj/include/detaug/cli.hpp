#pragma once

#include "detaug/pipelines.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace detaug {

// Settings shared by the subcommands, read from an INI file:
//
//   [data]      root, split, palette, ppa_drop_fraction, ppa_seed
//   [pipeline]  input_size, steps, depth, base_channels, d_layers, d_base_channels,
//               batch_size, learning_rate, l1_weight, stage1_seed, stage2_seed,
//               ground_truth_detail
//   [canny]     sigma, low, high
//   [segmentation] scale, min_region_size
//   [output]    bundles          (directory holding <method>/ bundle dirs)
//   [service]   host, port, max_dimension, max_in_flight, timeout_ms
//
// Relative paths resolve against the file's directory.
struct CliSettings {
  std::filesystem::path data_root = "data";
  Split split = Split::Train;
  std::optional<std::filesystem::path> palette;
  double ppa_drop_fraction = 0.0;
  std::uint64_t ppa_seed = 0;
  PipelineConfig pipeline = PipelineConfig::toy();
  std::filesystem::path bundles = "bundles";
  std::string host = "127.0.0.1";
  int port = 8080;
  int max_dimension = 1024;
  int max_in_flight = 4;
  int timeout_ms = 30000;

  static CliSettings load(const std::filesystem::path& ini);
  ClassPalette load_palette() const;
  // DETAUG_CACHE_DIR when set, else the data root.
  std::filesystem::path cache_root() const;
};

// Exit codes: 0 success, 1 usage error (synopsis on `err`), 2 runtime failure.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace detaug
