#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sakd/config.hpp"
#include "sakd/dataset.hpp"
#include "sakd/errors.hpp"
#include "sakd/model.hpp"
#include "sakd/rng.hpp"
#include "sakd/trainer.hpp"

namespace fs = std::filesystem;
using namespace sakd;

namespace {

enum Exit : int { ok = 0, other = 1, config_error = 2, io_error = 3, numeric_error = 4 };

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 0;
  bool force = false;
  bool clean_train = false;
  std::string shuffle_fraction;
};

struct Inputs {
  std::string data;
  std::string teacher;
  std::string student;
  std::size_t epoch = 0;
};

void add_common(CLI::App* sub, Common& c, bool wants_out) {
  sub->add_option("--config", c.config_path, "config file (key = value lines)");
  sub->add_option("--set", c.sets, "override key=value (repeatable)")->take_all();
  if (wants_out) sub->add_option("--out", c.out, "output directory")->required();
  sub->add_option("--seed", c.seed, "master seed override");
  sub->add_option("--workers", c.workers, "cap on worker threads (0 = runtime default)");
  sub->add_flag("--force", c.force, "allow a non-empty output directory");
  sub->add_flag("--clean-train", c.clean_train, "no interruption on training forward passes");
  sub->add_option("--shuffle-fraction", c.shuffle_fraction, "shuffle fraction source")
      ->check(CLI::IsMember({"eta", "beta"}));
}

RunConfig resolve(const Common& c) {
  std::vector<Override> overrides;
  for (const auto& s : c.sets) overrides.push_back(parse_override(s));
  if (c.seed) overrides.emplace_back("seed", std::to_string(*c.seed));
  if (c.clean_train) overrides.emplace_back("clean_train", "true");
  if (!c.shuffle_fraction.empty()) overrides.emplace_back("shuffle_fraction", c.shuffle_fraction);
  if (c.config_path.empty()) return parse_config("", overrides);
  return load_config(c.config_path, overrides);
}

void prepare_out(const Common& c) {
  const fs::path dir(c.out);
  std::error_code ec;
  if (fs::exists(dir, ec)) {
    if (!fs::is_directory(dir, ec)) throw IoError("output path '" + c.out + "' is not a directory");
    if (!fs::is_empty(dir, ec) && !c.force) {
      throw IoError("output directory '" + c.out + "' is not empty (use --force)");
    }
  }
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + c.out + "': " + ec.message());
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw IoError(std::string("missing --") + what);
  if (!fs::exists(path)) throw IoError(std::string(what) + " '" + path + "' does not exist");
}

void check_shape(const MlpNet& net, const SyntheticDataset& data, const char* what) {
  if (net.dims().input != data.spec.frame_dim || net.dims().output != data.num_classes()) {
    throw ConfigError(std::string(what) + " checkpoint does not match the dataset (input " +
                      std::to_string(net.dims().input) + ", classes " + std::to_string(net.dims().output) + ")");
  }
}

double seconds(std::chrono::steady_clock::duration d) { return std::chrono::duration<double>(d).count(); }

int gen_data(const Common& c) {
  const RunConfig cfg = resolve(c);
  prepare_out(c);
  const SyntheticDataset ds = generate_dataset(cfg.data, cfg.seed);
  save_dataset(c.out, ds);
  std::printf("wrote %zu train / %zu test samples to %s (spec_hash %s)\n", ds.train.size(), ds.test.size(),
              c.out.c_str(), spec_hash(ds.spec, ds.seed).c_str());
  return ok;
}

int pretrain(const Common& c, const Inputs& in) {
  RunConfig cfg = resolve(c);
  require_file(in.data, "data");
  const SyntheticDataset data = load_dataset(in.data);
  cfg.data = data.spec;
  prepare_out(c);
  const TeacherReport rep = pretrain_teacher(data, cfg);
  const fs::path ckpt = fs::path(c.out) / "teacher.ckpt";
  save_checkpoint(ckpt, rep.net, nullptr, {"teacher", cfg.seed, spec_hash(data.spec, data.seed), cfg.pretrain_epochs});
  std::printf("teacher train_top1=%.4f test_top1=%.4f -> %s\n", rep.train_top1, rep.test_top1, ckpt.c_str());
  return ok;
}

int distill(const Common& c, const Inputs& in) {
  RunConfig cfg = resolve(c);
  require_file(in.data, "data");
  require_file(in.teacher, "teacher");
  const auto t0 = std::chrono::steady_clock::now();
  const SyntheticDataset data = load_dataset(in.data);
  cfg.data = data.spec;
  LoadedCheckpoint teacher = load_checkpoint(in.teacher);
  check_shape(teacher.net, data, "teacher");
  if (teacher.net.dims().hidden != cfg.teacher_hidden) {
    cfg.teacher_hidden = teacher.net.dims().hidden;
    cfg.validate();
  }
  prepare_out(c);
  const RunResult res = run(cfg, data, teacher.net, c.out, {}, in.teacher);
  double selection_s = 0.0;
  for (const auto& r : res.records) selection_s += r.times.difficulty_eval_s + r.times.selection_s;
  const EpochRecord& last = res.records.back();
  std::printf("final epoch=%zu top1=%.4f top5=%.4f wall_s=%.3f selection_s=%.3f\n", last.epoch, last.top1, last.top5,
              seconds(std::chrono::steady_clock::now() - t0), selection_s);
  return ok;
}

int select_cmd(const Common& c, const Inputs& in) {
  RunConfig cfg = resolve(c);
  require_file(in.data, "data");
  require_file(in.teacher, "teacher");
  require_file(in.student, "student");
  const SyntheticDataset data = load_dataset(in.data);
  cfg.data = data.spec;
  const LoadedCheckpoint teacher = load_checkpoint(in.teacher);
  LoadedCheckpoint loaded = load_checkpoint(in.student);
  check_shape(teacher.net, data, "teacher");
  check_shape(loaded.net, data, "student");
  Student student;
  student.net = std::move(loaded.net);
  if (loaded.projection) {
    student.projection = std::move(*loaded.projection);
  } else {
    Rng rng = make_rng(cfg.seed, Stream::student_init);
    student.projection = Projection::initialized(student.net.dims().hidden, teacher.net.dims().hidden, rng);
  }
  if (cfg.kd_mode == KdMode::feature && student.projection.out_dim() != teacher.net.dims().hidden) {
    throw ConfigError("student projection width does not match the teacher feature width");
  }
  if (in.epoch >= cfg.n_epoch) throw ConfigError("--epoch must be below n_epoch");
  prepare_out(c);
  std::vector<SampleState> states;
  const SelectionResult sel = dry_run_selection(cfg, data, teacher.net, student, in.epoch, c.out, &states);
  std::printf("selected %zu of %zu samples, objective=%.17g%s\n", sel.indices.size(), states.size(),
              sel.objective_value, sel.degenerate_fill ? " (degenerate fill)" : "");
  return ok;
}

int eval_cmd(const Common& c, const Inputs& in) {
  (void)resolve(c);
  require_file(in.data, "data");
  require_file(in.student, "student");
  const SyntheticDataset data = load_dataset(in.data);
  const LoadedCheckpoint net = load_checkpoint(in.student);
  check_shape(net.net, data, "model");
  const Accuracy acc = evaluate(net.net, data.test);
  std::printf("top1=%.4f top5=%.4f n=%zu\n", acc.top1, acc.top5, data.test.size());
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sample-level adaptive distillation at desk scale"};
  app.require_subcommand(1, 1);

  Common c;
  Inputs in;
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
  add_common(gen, c, true);

  auto* pre = app.add_subcommand("pretrain", "train the teacher with cross-entropy");
  add_common(pre, c, true);
  pre->add_option("--data", in.data, "dataset directory")->required();

  auto* dis = app.add_subcommand("distill", "run selection + distillation");
  add_common(dis, c, true);
  dis->add_option("--data", in.data, "dataset directory")->required();
  dis->add_option("--teacher", in.teacher, "teacher checkpoint")->required();

  auto* sel = app.add_subcommand("select", "one difficulty evaluation and selection round, no training");
  add_common(sel, c, true);
  sel->add_option("--data", in.data, "dataset directory")->required();
  sel->add_option("--teacher", in.teacher, "teacher checkpoint")->required();
  sel->add_option("--student", in.student, "student checkpoint")->required();
  sel->add_option("--epoch", in.epoch, "epoch whose interruption plan is used");

  auto* ev = app.add_subcommand("eval", "top-1 / top-5 on the test split");
  add_common(ev, c, false);
  ev->add_option("--data", in.data, "dataset directory")->required();
  ev->add_option("--student", in.student, "model checkpoint")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? ok : config_error;
  }

  try {
    set_worker_count(c.workers);
    if (gen->parsed()) return gen_data(c);
    if (pre->parsed()) return pretrain(c, in);
    if (dis->parsed()) return distill(c, in);
    if (sel->parsed()) return select_cmd(c, in);
    return eval_cmd(c, in);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return config_error;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return io_error;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return numeric_error;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return other;
  }
}
