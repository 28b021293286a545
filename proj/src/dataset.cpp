#include "sakd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sakd/errors.hpp"
#include "sakd/io.hpp"
#include "sakd/rng.hpp"

namespace sakd {
namespace {

constexpr char kDataMagic[8] = {'S', 'A', 'K', 'D', 'D', 'A', 'T', 'A'};
constexpr std::uint32_t kDataVersion = 1;
constexpr int kMotifAttempts = 64;

std::string canonical_spec(const DataSpec& spec) {
  RunConfig cfg;
  cfg.data = spec;
  std::string out;
  std::istringstream all(serialize_config(cfg));
  for (std::string line; std::getline(all, line);) {
    if (line.rfind("data.", 0) == 0) out += line + "\n";
  }
  return out;
}

// Box-Muller on our own uniforms so the stream is library independent.
class Gaussian {
 public:
  explicit Gaussian(Rng& rng) : rng_(rng) {}
  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform_unit(rng_);
    } while (u1 <= 0.0);
    const double u2 = uniform_unit(rng_);
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

 private:
  Rng& rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// motif[m][l] = signed basis direction index in [0, 2d): j < d is +e_j, else -e_{j-d}.
using MotifTable = std::vector<std::vector<std::size_t>>;

void add_direction(std::span<double> v, std::size_t dir, std::size_t d, double scale) {
  if (dir < d) v[dir] += scale;
  else v[dir - d] -= scale;
}

Matrix pooled_centers(const MotifTable& motifs, const DataSpec& spec) {
  Matrix c(motifs.size(), spec.frame_dim);
  const double inv_t = 1.0 / static_cast<double>(spec.num_frames);
  for (std::size_t m = 0; m < motifs.size(); ++m) {
    for (std::size_t dir : motifs[m]) add_direction(c.row(m), dir, spec.frame_dim, inv_t);
  }
  return c;
}

bool classes_separated(const Matrix& centers, const std::vector<std::size_t>& owner, double min_dist) {
  for (std::size_t a = 0; a < centers.rows(); ++a) {
    for (std::size_t b = a + 1; b < centers.rows(); ++b) {
      if (owner[a] == owner[b]) continue;
      double sq = 0.0;
      for (std::size_t k = 0; k < centers.cols(); ++k) {
        const double diff = centers(a, k) - centers(b, k);
        sq += diff * diff;
      }
      if (std::sqrt(sq) < min_dist) return false;
    }
  }
  return true;
}

std::vector<SequenceSample> draw_samples(std::size_t count, std::uint64_t first_id, const DataSpec& spec,
                                         const MotifTable& motifs, Rng& rng) {
  const std::size_t k = spec.num_classes;
  std::vector<std::size_t> labels(count);
  for (std::size_t i = 0; i < count; ++i) labels[i] = i % k;
  for (std::size_t i = count; i > 1; --i) std::swap(labels[i - 1], labels[uniform_index(rng, i)]);

  Gaussian normal(rng);
  std::vector<SequenceSample> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    SequenceSample& s = out[i];
    s.id = first_id + i;
    s.label = labels[i];
    s.num_frames = spec.num_frames;
    s.frame_dim = spec.frame_dim;
    s.frames.resize(spec.num_frames * spec.frame_dim);
    for (double& x : s.frames) x = spec.noise * normal();
    const std::size_t mode = s.label * spec.modes_per_class + uniform_index(rng, spec.modes_per_class);
    const std::size_t offset = uniform_index(rng, spec.num_frames - spec.motif_length + 1);
    for (std::size_t l = 0; l < spec.motif_length; ++l) {
      add_direction(s.frame(offset + l), motifs[mode][l], spec.frame_dim, 1.0);
    }
  }
  return out;
}

std::string manifest_text(const SyntheticDataset& ds, const std::string& train_bytes, const std::string& test_bytes) {
  std::ostringstream m;
  m << "# synthetic dataset manifest\n"
    << "seed = " << ds.seed << "\n"
    << canonical_spec(ds.spec) << "spec_hash = " << spec_hash(ds.spec, ds.seed) << "\n"
    << "train_hash = " << io::hex64(io::fnv1a(train_bytes)) << "\n"
    << "test_hash = " << io::hex64(io::fnv1a(test_bytes)) << "\n";
  return m.str();
}

std::string encode_samples(std::span<const SequenceSample> samples, std::size_t num_classes) {
  std::ostringstream out(std::ios::binary);
  out.write(kDataMagic, sizeof kDataMagic);
  io::write_pod<std::uint32_t>(out, kDataVersion);
  io::write_pod<std::uint64_t>(out, samples.size());
  const std::size_t t = samples.empty() ? 0 : samples.front().num_frames;
  const std::size_t d = samples.empty() ? 0 : samples.front().frame_dim;
  io::write_pod<std::uint64_t>(out, t);
  io::write_pod<std::uint64_t>(out, d);
  io::write_pod<std::uint64_t>(out, num_classes);
  for (const auto& s : samples) {
    if (s.num_frames != t || s.frame_dim != d) throw std::invalid_argument("save_samples: samples differ in shape");
    io::write_pod<std::uint64_t>(out, s.id);
    io::write_pod<std::uint64_t>(out, s.label);
    io::write_doubles(out, s.frames);
  }
  return out.str();
}

}  // namespace

std::string spec_hash(const DataSpec& spec, std::uint64_t seed) {
  return io::hex64(io::fnv1a(canonical_spec(spec) + "seed = " + std::to_string(seed) + "\n"));
}

SyntheticDataset generate_dataset(const DataSpec& spec, std::uint64_t seed) {
  if (spec.num_classes < 2) throw ConfigError("infeasible data spec: need data.k >= 2");
  if (spec.num_frames < 4 || spec.frame_dim < 4) throw ConfigError("infeasible data spec: need data.t >= 4 and data.d >= 4");
  if (spec.motif_length < 1 || spec.motif_length > spec.num_frames) {
    throw ConfigError("infeasible data spec: data.motif_len must be in [1, data.t]");
  }
  if (spec.modes_per_class < 1) throw ConfigError("infeasible data spec: need data.modes >= 1");
  const std::size_t n_modes = spec.num_classes * spec.modes_per_class;
  const std::size_t n_dirs = 2 * spec.frame_dim;
  if (n_modes > n_dirs) {
    throw ConfigError("infeasible data spec: " + std::to_string(n_modes) + " motifs need distinct signatures but only " +
                      std::to_string(n_dirs) + " signed directions exist in d = " + std::to_string(spec.frame_dim));
  }
  if (spec.n_train < spec.num_classes || spec.n_test < spec.num_classes) {
    throw ConfigError("infeasible data spec: each split needs at least one sample per class");
  }

  Rng rng = make_rng(seed, Stream::data);
  std::vector<std::size_t> owner(n_modes);
  for (std::size_t m = 0; m < n_modes; ++m) owner[m] = m / spec.modes_per_class;

  // Each motif starts with a signature direction unique to it, so distinct
  // classes never share a pooled center unless the tails cancel it; redraw
  // the tails until different-class centers are at least sqrt(2)/T apart.
  const double min_dist = std::sqrt(2.0) / static_cast<double>(spec.num_frames) * (1.0 - 1e-9);
  MotifTable motifs;
  Matrix centers;
  bool ok = false;
  for (int attempt = 0; attempt < kMotifAttempts && !ok; ++attempt) {
    std::vector<std::size_t> dirs(n_dirs);
    std::iota(dirs.begin(), dirs.end(), std::size_t{0});
    for (std::size_t i = 0; i < n_modes; ++i) std::swap(dirs[i], dirs[i + uniform_index(rng, n_dirs - i)]);
    motifs.assign(n_modes, std::vector<std::size_t>(spec.motif_length));
    for (std::size_t m = 0; m < n_modes; ++m) {
      motifs[m][0] = dirs[m];
      for (std::size_t l = 1; l < spec.motif_length; ++l) motifs[m][l] = uniform_index(rng, n_dirs);
    }
    centers = pooled_centers(motifs, spec);
    ok = classes_separated(centers, owner, min_dist);
  }
  if (!ok) throw ConfigError("infeasible data spec: could not draw separated motifs");

  SyntheticDataset ds;
  ds.spec = spec;
  ds.seed = seed;
  ds.mode_centers = std::move(centers);
  ds.mode_class = std::move(owner);
  ds.train = draw_samples(spec.n_train, 0, spec, motifs, rng);
  ds.test = draw_samples(spec.n_test, spec.n_train, spec, motifs, rng);
  return ds;
}

void save_samples(const std::filesystem::path& path, std::span<const SequenceSample> samples, std::size_t num_classes) {
  io::write_file(path, encode_samples(samples, num_classes));
}

SampleFile load_samples(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path), std::ios::binary);
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::string_view(magic, 8) != std::string_view(kDataMagic, 8)) {
    throw IoError("'" + path.string() + "' is not a sample file (bad magic)");
  }
  const auto version = io::read_pod<std::uint32_t>(in, "sample file version");
  if (version != kDataVersion) throw IoError("unsupported sample file version " + std::to_string(version));
  const auto count = io::read_pod<std::uint64_t>(in, "sample count");
  const auto t = io::read_pod<std::uint64_t>(in, "frame count");
  const auto d = io::read_pod<std::uint64_t>(in, "frame dim");
  SampleFile file;
  file.num_classes = io::read_pod<std::uint64_t>(in, "class count");
  if (count > (std::uint64_t{1} << 32) || t * d > (std::uint64_t{1} << 24)) {
    throw IoError("sample file header has implausible sizes");
  }
  file.samples.resize(count);
  for (auto& s : file.samples) {
    s.id = io::read_pod<std::uint64_t>(in, "sample id");
    s.label = io::read_pod<std::uint64_t>(in, "sample label");
    if (s.label >= file.num_classes) throw IoError("sample " + std::to_string(s.id) + " has an out-of-range label");
    s.num_frames = t;
    s.frame_dim = d;
    s.frames.resize(t * d);
    io::read_doubles(in, s.frames, "sample frames");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw IoError("trailing bytes in '" + path.string() + "'");
  return file;
}

void save_dataset(const std::filesystem::path& dir, const SyntheticDataset& ds) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  const std::string train = encode_samples(ds.train, ds.num_classes());
  const std::string test = encode_samples(ds.test, ds.num_classes());
  io::write_file(dir / "train.bin", train);
  io::write_file(dir / "test.bin", test);
  io::write_file(dir / "manifest.txt", manifest_text(ds, train, test));
}

SyntheticDataset load_dataset(const std::filesystem::path& dir) {
  SyntheticDataset ds;
  SampleFile train = load_samples(dir / "train.bin");
  SampleFile test = load_samples(dir / "test.bin");
  if (train.num_classes != test.num_classes) throw IoError("train/test class counts differ");
  ds.train = std::move(train.samples);
  ds.test = std::move(test.samples);
  ds.spec.num_classes = train.num_classes;
  if (!ds.train.empty()) {
    ds.spec.num_frames = ds.train.front().num_frames;
    ds.spec.frame_dim = ds.train.front().frame_dim;
  }
  ds.spec.n_train = ds.train.size();
  ds.spec.n_test = ds.test.size();

  const auto manifest = dir / "manifest.txt";
  if (std::filesystem::exists(manifest)) {
    RunConfig cfg;
    cfg.data = ds.spec;
    std::istringstream lines(io::read_file(manifest));
    for (std::string line; std::getline(lines, line);) {
      const auto eq = line.find('=');
      if (line.empty() || line[0] == '#' || eq == std::string::npos) continue;
      std::string key = line.substr(0, eq);
      std::string value = line.substr(eq + 1);
      key.erase(key.find_last_not_of(' ') + 1);
      value.erase(0, value.find_first_not_of(' '));
      if (key == "seed" || key.rfind("data.", 0) == 0) assign_field(cfg, key, value);
    }
    ds.spec = cfg.data;
    ds.seed = cfg.seed;
  }
  return ds;
}

}  // namespace sakd
