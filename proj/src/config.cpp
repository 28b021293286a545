#include "sakd/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "sakd/errors.hpp"

namespace sakd {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

double parse_real(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || ptr != end || !std::isfinite(out)) {
    throw ConfigError("field '" + std::string(key) + "': cannot parse '" + std::string(v) + "' as a real");
  }
  return out;
}

std::uint64_t parse_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError("field '" + std::string(key) + "': cannot parse '" + std::string(v) +
                      "' as a nonnegative integer");
  }
  return out;
}

std::size_t parse_size(std::string_view key, std::string_view v) {
  return static_cast<std::size_t>(parse_u64(key, v));
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("field '" + std::string(key) + "': expected true/false, got '" + std::string(v) + "'");
}

std::string format_real(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

struct Field {
  std::string_view key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define SAKD_REAL(name, member)                                                  \
  Field {                                                                        \
    name, [](RunConfig& c, std::string_view v) { c.member = parse_real(name, v); }, \
        [](const RunConfig& c) { return format_real(c.member); }                 \
  }
#define SAKD_SIZE(name, member)                                                  \
  Field {                                                                        \
    name, [](RunConfig& c, std::string_view v) { c.member = parse_size(name, v); }, \
        [](const RunConfig& c) { return std::to_string(c.member); }              \
  }
#define SAKD_BOOL(name, member)                                                  \
  Field {                                                                        \
    name, [](RunConfig& c, std::string_view v) { c.member = parse_bool(name, v); }, \
        [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      SAKD_REAL("lambda", lambda),
      SAKD_REAL("gamma", gamma),
      SAKD_REAL("epsilon", epsilon),
      SAKD_REAL("eta", eta),
      SAKD_REAL("theta", theta),
      SAKD_REAL("tau", tau),
      SAKD_REAL("selection_ratio", selection_ratio),
      SAKD_SIZE("selection_period", selection_period),
      SAKD_SIZE("n_epoch", n_epoch),
      Field{"kd_mode",
            [](RunConfig& c, std::string_view v) {
              if (v == "logit") c.kd_mode = KdMode::logit;
              else if (v == "feature") c.kd_mode = KdMode::feature;
              else throw ConfigError("field 'kd_mode': expected logit|feature, got '" + std::string(v) + "'");
            },
            [](const RunConfig& c) { return std::string(to_string(c.kd_mode)); }},
      SAKD_REAL("alpha_init", alpha_init),
      SAKD_REAL("alpha_min", alpha_min),
      SAKD_REAL("alpha_max", alpha_max),
      SAKD_REAL("zeta_min", zeta_min),
      SAKD_REAL("zeta_max", zeta_max),
      SAKD_REAL("kernel_jitter", kernel_jitter),
      Field{"seed", [](RunConfig& c, std::string_view v) { c.seed = parse_u64("seed", v); },
            [](const RunConfig& c) { return std::to_string(c.seed); }},
      Field{"method",
            [](RunConfig& c, std::string_view v) {
              if (v == "sakd") c.method = Method::sakd;
              else if (v == "kd") c.method = Method::kd;
              else if (v == "ce") c.method = Method::ce;
              else throw ConfigError("field 'method': expected sakd|kd|ce, got '" + std::string(v) + "'");
            },
            [](const RunConfig& c) { return std::string(to_string(c.method)); }},
      SAKD_REAL("kd_alpha", kd_alpha),
      SAKD_SIZE("batch_size", batch_size),
      SAKD_SIZE("eval_batch_size", eval_batch_size),
      SAKD_REAL("lr", lr),
      SAKD_REAL("lr_decay", lr_decay),
      SAKD_REAL("momentum", momentum),
      SAKD_REAL("weight_decay", weight_decay),
      SAKD_SIZE("teacher_hidden", teacher_hidden),
      SAKD_SIZE("student_hidden", student_hidden),
      SAKD_SIZE("pretrain_epochs", pretrain_epochs),
      SAKD_BOOL("normalize_kernel", normalize_kernel),
      SAKD_BOOL("clean_train", clean_train),
      Field{"shuffle_fraction",
            [](RunConfig& c, std::string_view v) {
              if (v == "eta") c.shuffle_fraction = ShuffleFraction::eta;
              else if (v == "beta") c.shuffle_fraction = ShuffleFraction::beta;
              else throw ConfigError("field 'shuffle_fraction': expected eta|beta, got '" + std::string(v) + "'");
            },
            [](const RunConfig& c) { return std::string(to_string(c.shuffle_fraction)); }},
      SAKD_SIZE("data.k", data.num_classes),
      SAKD_SIZE("data.modes", data.modes_per_class),
      SAKD_SIZE("data.motif_len", data.motif_length),
      SAKD_SIZE("data.t", data.num_frames),
      SAKD_SIZE("data.d", data.frame_dim),
      SAKD_REAL("data.noise", data.noise),
      SAKD_SIZE("data.n_train", data.n_train),
      SAKD_SIZE("data.n_test", data.n_test),
  };
  return table;
}

#undef SAKD_REAL
#undef SAKD_SIZE
#undef SAKD_BOOL

[[noreturn]] void out_of_range(std::string_view field, double value, std::string_view bound) {
  throw ConfigError("field '" + std::string(field) + "' = " + format_real(value) + " is outside " +
                    std::string(bound));
}

void check_open_unit(std::string_view f, double v) {
  if (!(v > 0.0 && v < 1.0)) out_of_range(f, v, "(0, 1)");
}
void check_positive(std::string_view f, double v) {
  if (!(v > 0.0)) out_of_range(f, v, "(0, inf)");
}

}  // namespace

void RunConfig::validate() const {
  check_open_unit("lambda", lambda);
  if (!(gamma >= 0.0 && gamma <= 1.0)) out_of_range("gamma", gamma, "[0, 1]");
  check_positive("epsilon", epsilon);
  if (!(eta > 0.0 && eta <= 1.0)) out_of_range("eta", eta, "(0, 1]");
  check_positive("theta", theta);
  check_positive("tau", tau);
  if (!(selection_ratio > 0.0 && selection_ratio <= 1.0)) out_of_range("selection_ratio", selection_ratio, "(0, 1]");
  if (selection_period < 1) out_of_range("selection_period", 0, "[1, inf)");
  if (n_epoch < 1) out_of_range("n_epoch", 0, "[1, inf)");
  check_open_unit("alpha_init", alpha_init);
  check_open_unit("alpha_min", alpha_min);
  check_open_unit("alpha_max", alpha_max);
  if (!(alpha_min < alpha_max)) out_of_range("alpha_min", alpha_min, "(0, alpha_max)");
  check_positive("zeta_min", zeta_min);
  if (!(zeta_min < zeta_max)) out_of_range("zeta_max", zeta_max, "(zeta_min, inf)");
  check_positive("kernel_jitter", kernel_jitter);
  if (!(kd_alpha >= 0.0 && kd_alpha <= 1.0)) out_of_range("kd_alpha", kd_alpha, "[0, 1]");
  if (batch_size < 1) out_of_range("batch_size", 0, "[1, inf)");
  if (eval_batch_size < 1) out_of_range("eval_batch_size", 0, "[1, inf)");
  check_positive("lr", lr);
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) out_of_range("lr_decay", lr_decay, "(0, 1]");
  if (!(momentum >= 0.0 && momentum < 1.0)) out_of_range("momentum", momentum, "[0, 1)");
  if (!(weight_decay >= 0.0)) out_of_range("weight_decay", weight_decay, "[0, inf)");
  if (student_hidden < 1) out_of_range("student_hidden", 0, "[1, inf)");
  if (teacher_hidden <= student_hidden) {
    out_of_range("teacher_hidden", static_cast<double>(teacher_hidden), "(student_hidden, inf)");
  }
  if (pretrain_epochs < 1) out_of_range("pretrain_epochs", 0, "[1, inf)");

  if (data.num_classes < 2) out_of_range("data.k", static_cast<double>(data.num_classes), "[2, inf)");
  if (data.modes_per_class < 1) out_of_range("data.modes", 0, "[1, inf)");
  if (data.num_frames < 4) out_of_range("data.t", static_cast<double>(data.num_frames), "[4, inf)");
  if (data.frame_dim < 4) out_of_range("data.d", static_cast<double>(data.frame_dim), "[4, inf)");
  if (data.motif_length < 1 || data.motif_length > data.num_frames) {
    out_of_range("data.motif_len", static_cast<double>(data.motif_length), "[1, data.t]");
  }
  if (!(data.noise >= 0.0)) out_of_range("data.noise", data.noise, "[0, inf)");
  if (data.n_train < data.num_classes) out_of_range("data.n_train", static_cast<double>(data.n_train), "[data.k, inf)");
  if (data.n_test < data.num_classes) out_of_range("data.n_test", static_cast<double>(data.n_test), "[data.k, inf)");
}

Override parse_override(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override '" + std::string(text) + "' is not of the form key=value");
  }
  return {std::string(trim(text.substr(0, eq))), std::string(trim(text.substr(eq + 1)))};
}

void assign_field(RunConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

RunConfig parse_config(std::string_view text, const std::vector<Override>& overrides) {
  RunConfig cfg;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    try {
      assign_field(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  for (const auto& [k, v] : overrides) assign_field(cfg, k, v);
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<Override>& overrides) {
  if (path.empty()) return parse_config({}, overrides);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides);
}

std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) {
    out += f.key;
    out += " = ";
    out += f.get(cfg);
    out += '\n';
  }
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.emplace_back(f.key);
  return keys;
}

std::string_view to_string(KdMode m) { return m == KdMode::logit ? "logit" : "feature"; }

std::string_view to_string(Method m) {
  switch (m) {
    case Method::sakd: return "sakd";
    case Method::kd: return "kd";
    case Method::ce: return "ce";
  }
  return "?";
}

std::string_view to_string(ShuffleFraction s) { return s == ShuffleFraction::eta ? "eta" : "beta"; }

}  // namespace sakd
