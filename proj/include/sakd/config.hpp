#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sakd {

enum class KdMode { logit, feature };
enum class Method { sakd, kd, ce };  // kd / ce: full-data baselines
enum class ShuffleFraction { eta, beta };

/// Synthetic sequence-classification generator parameters (`data.*` keys).
struct DataSpec {
  std::size_t num_classes = 10;
  std::size_t modes_per_class = 4;
  std::size_t motif_length = 4;
  std::size_t num_frames = 8;
  std::size_t frame_dim = 20;
  double noise = 0.1;
  std::size_t n_train = 2000;
  std::size_t n_test = 1000;
};

/// Every hyperparameter of the method plus run control. Immutable once
/// validated; construct through `load_config` or call `validate()`.
struct RunConfig {
  // Method hyperparameters.
  double lambda = 0.1;  // EMA weight for strength and fused features
  double gamma = 0.5;   // quality/diversity tradeoff
  double epsilon = 1.0;
  double eta = 0.5;
  double theta = 0.9;
  double tau = 4.0;
  double selection_ratio = 0.1;
  std::size_t selection_period = 1;
  std::size_t n_epoch = 100;
  KdMode kd_mode = KdMode::logit;
  double alpha_init = 0.5;
  double alpha_min = 0.01;
  double alpha_max = 0.99;
  double zeta_min = 1e-6;
  double zeta_max = 1e6;
  double kernel_jitter = 1e-6;
  std::uint64_t seed = 1;

  // Run control.
  Method method = Method::sakd;
  double kd_alpha = 0.5;  // fixed strength for the `kd` baseline
  std::size_t batch_size = 32;
  std::size_t eval_batch_size = 128;
  double lr = 0.05;
  double lr_decay = 0.99;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t teacher_hidden = 64;
  std::size_t student_hidden = 16;
  std::size_t pretrain_epochs = 100;
  bool normalize_kernel = true;
  bool clean_train = false;
  ShuffleFraction shuffle_fraction = ShuffleFraction::eta;

  DataSpec data;

  /// Throws ConfigError naming the first field outside its range.
  void validate() const;
};

using Override = std::pair<std::string, std::string>;

/// Parse a `key=value` override as given on the command line.
Override parse_override(std::string_view text);

/// Apply one `key = value` assignment; throws ConfigError for unknown keys
/// or unparsable values. Does not validate ranges.
void assign_field(RunConfig& cfg, std::string_view key, std::string_view value);

/// Defaults <- file <- overrides, then validate. An empty path skips the file.
RunConfig load_config(const std::filesystem::path& path, const std::vector<Override>& overrides = {});

/// Parse config text directly (used by load_config and tests).
RunConfig parse_config(std::string_view text, const std::vector<Override>& overrides = {});

/// Flat `key = value` text with every field, lossless for doubles.
std::string serialize_config(const RunConfig& cfg);

std::vector<std::string> config_keys();

std::string_view to_string(KdMode m);
std::string_view to_string(Method m);
std::string_view to_string(ShuffleFraction s);

}  // namespace sakd
