#include "cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "sosr/error.hpp"
#include "sosr/vmf.hpp"

#ifndef SOSR_VERSION
#define SOSR_VERSION "0.0.0"
#endif

namespace sosr::cli {

std::string tool_version() { return SOSR_VERSION; }

namespace {

using nlohmann::json;

// Reads a flat JSON object of option values, or the "config" object of a run
// manifest, and attaches it to whichever subcommand was given.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App* root) : root_(root) {}

  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return {}; }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw CLI::ConversionError("config file is not a JSON object");
    if (j.contains("config") && j["config"].is_object()) j = j["config"];
    std::vector<std::string> parents;
    const auto subs = root_->get_subcommands();
    if (!subs.empty()) parents.push_back(subs.front()->get_name());

    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      if (value.is_null()) continue;
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      items.push_back(std::move(item));
    }
    return items;
  }

 private:
  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw CLI::ConversionError("config values must be scalars or arrays of scalars");
  }

  const CLI::App* root_;
};

// Option registry of one subcommand: CLI11 options plus their resolved values
// for the manifest, keyed by the long flag name.
class Command {
 public:
  Command(CLI::App& root, const std::string& name, const std::string& description)
      : app_(root.add_subcommand(name, description)) {}

  template <class T>
  CLI::Option* option(const std::string& name, T& var, const std::string& description) {
    fields_.emplace_back(name, [&var] { return json(var); });
    return app_->add_option("--" + name, var, description)->capture_default_str();
  }

  CLI::Option* choice(const std::string& name, std::string& var, std::vector<std::string> allowed,
                      const std::string& description) {
    return option(name, var, description)->check(CLI::IsMember(std::move(allowed)));
  }

  json resolved() const {
    json j = json::object();
    for (const auto& [name, get] : fields_) j[name] = get();
    return j;
  }

  bool parsed() const { return app_->parsed(); }
  CLI::App* app() { return app_; }

 private:
  CLI::App* app_;
  std::vector<std::pair<std::string, std::function<json()>>> fields_;
};

struct LossFlags {
  std::size_t k = 8;
  double margin = 1.0;
  std::string fos = "qht";
  std::string sosr = "on";
  std::string neighbor_mode = "same-side";

  void add(Command& c) {
    c.option("k", k, "neighbours per side for the second-order term");
    c.option("margin", margin, "hinge margin t");
    c.choice("fos", fos, {"ht", "qht"}, "first-order loss variant");
    c.choice("sosr", sosr, {"on", "off"}, "second-order similarity regularization");
    c.choice("neighbor-mode", neighbor_mode, {"same-side", "full-batch"}, "neighbour set for the second-order term");
  }

  LossConfig config() const {
    LossConfig cfg;
    cfg.k = k;
    cfg.margin = margin;
    cfg.fos_variant = fos == "ht" ? FosVariant::kHT : FosVariant::kQHT;
    cfg.enable_sosr = sosr == "on";
    cfg.sos_neighbor_mode = neighbor_mode == "full-batch" ? SosNeighborMode::kFullBatch : SosNeighborMode::kSameSide;
    return cfg;
  }
};

struct OptimFlags {
  std::string optimizer = "adam";
  std::size_t epochs = 100;
  double lr = 0.01;
  std::size_t decay_epoch = 50;
  double decay_factor = 10.0;
  double alpha = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void add(Command& c) {
    c.choice("optimizer", optimizer, {"sgd", "adam"}, "optimizer");
    c.option("epochs", epochs, "training epochs");
    c.option("lr", lr, "SGD initial learning rate");
    c.option("decay-epoch", decay_epoch, "epoch at which the SGD rate is divided");
    c.option("decay-factor", decay_factor, "SGD rate divisor");
    c.option("alpha", alpha, "Adam step size");
    c.option("beta1", beta1, "Adam first-moment decay");
    c.option("beta2", beta2, "Adam second-moment decay");
    c.option("adam-eps", adam_eps, "Adam denominator epsilon");
  }

  TrainConfig config(const LossFlags& loss, std::size_t n, std::uint64_t seed) const {
    TrainConfig cfg;
    cfg.optimizer = optimizer == "sgd" ? OptimizerKind::kSGD : OptimizerKind::kAdam;
    cfg.epochs = epochs;
    cfg.sgd = {lr, decay_epoch, decay_factor};
    cfg.adam = {alpha, beta1, beta2, adam_eps};
    cfg.pairs_per_batch = n;
    cfg.loss = loss.config();
    cfg.seed = seed;
    return cfg;
  }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path);
}

void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

LabeledDescriptorSet load_input(const std::string& path) {
  try {
    return load_descriptors(path);
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.what());
  }
}

class Manifest {
 public:
  Manifest(std::string subcommand, json config, std::uint64_t seed)
      : start_(std::chrono::steady_clock::now()),
        j_{{"subcommand", std::move(subcommand)},
           {"tool_version", tool_version()},
           {"seed", seed},
           {"config", std::move(config)},
           {"inputs", json::array()},
           {"outputs", json::array()}} {}

  void input(const std::string& path) { j_["inputs"].push_back(path); }
  void output(const std::string& path) { j_["outputs"].push_back(path); }
  json& operator[](const std::string& key) { return j_[key]; }

  std::string write(const std::string& primary_output) {
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start_;
    j_["wall_clock_seconds"] = elapsed.count();
    const std::string path = primary_output + ".manifest.json";
    write_json(path, j_);
    return path;
  }

 private:
  std::chrono::steady_clock::time_point start_;
  json j_;
};

std::string provenance(const std::string& subcommand, std::uint64_t seed) {
  return "sosr " + tool_version() + " " + subcommand + " seed=" + std::to_string(seed);
}

template <class T>
std::vector<T> dedupe(const std::vector<T>& values, const std::string& what, std::ostream& err) {
  std::vector<T> out;
  std::set<T> seen;
  for (const T& v : values) {
    if (seen.insert(v).second) {
      out.push_back(v);
    } else {
      err << "warning: duplicate " << what << " entry " << v << " ignored\n";
    }
  }
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App root{"Hypersphere descriptor toolkit: triplet losses with second-order similarity regularization"};
  root.name("sosr");
  root.require_subcommand(1);
  root.fallthrough();
  root.allow_config_extras(CLI::config_extras_mode::error);
  root.config_formatter(std::make_shared<JsonConfig>(&root));
  root.set_config("--config", "", "JSON file of option values, or a run manifest to replay");
  root.set_version_flag("--version", tool_version());

  // gen
  Command gen(root, "gen", "generate a synthetic vMF-mixture descriptor set");
  SyntheticSpec spec;
  std::string gen_out;
  gen.option("classes", spec.classes, "number of classes M");
  gen.option("per-class", spec.samples_per_class, "samples per class");
  gen.option("dim", spec.q, "descriptor dimension q");
  gen.option("kappa-intra", spec.kappa_intra, "concentration of samples around their class centre");
  gen.option("kappa-inter", spec.kappa_inter, "concentration of class centres around the first axis");
  gen.option("seed", spec.seed, "random seed");
  gen.option("out", gen_out, "output descriptor file")->required();

  // train
  Command tr(root, "train", "train free embeddings on a descriptor file's label structure");
  std::string tr_data, tr_out, tr_history, tr_init = "data";
  std::size_t tr_n = 512, tr_dim = 0, tr_val_pos = 0, tr_val_neg = 0;
  std::uint64_t tr_seed = 0;
  LossFlags tr_loss;
  OptimFlags tr_optim;
  tr.option("data", tr_data, "input descriptor file")->required()->check(CLI::ExistingFile);
  tr.option("out", tr_out, "output embeddings file")->required();
  tr.option("history", tr_history, "history CSV (default <out>.history.csv)");
  tr.option("pairs-per-batch", tr_n, "pairs per batch N");
  tr_loss.add(tr);
  tr_optim.add(tr);
  tr.choice("init", tr_init, {"data", "random"}, "start from the input descriptors or uniform random rows");
  tr.option("dim", tr_dim, "embedding dimension for random init (0: input dimension)");
  tr.option("val-pos", tr_val_pos, "positive validation pairs scored after every epoch");
  tr.option("val-neg", tr_val_neg, "negative validation pairs scored after every epoch");
  tr.option("seed", tr_seed, "random seed");

  // eval
  Command ev(root, "eval", "verification, matching and retrieval metrics of a descriptor file");
  std::string ev_data, ev_out, ev_csv;
  EvalOptions ev_opt;
  ev.option("data", ev_data, "input descriptor file")->required()->check(CLI::ExistingFile);
  ev.option("out", ev_out, "output JSON report")->required();
  ev.option("csv", ev_csv, "also write a one-row CSV");
  ev.option("n-pos", ev_opt.n_pos, "positive verification pairs");
  ev.option("n-neg", ev_opt.n_neg, "negative verification pairs");
  ev.option("seed", ev_opt.seed, "random seed for pair sampling");

  // vmf-stats
  Command vm(root, "vmf-stats", "intra- and inter-class mean resultant lengths");
  std::string vm_data, vm_out, vm_mode = "random-tests";
  HypersphereOptions vm_opt;
  vm.option("data", vm_data, "input descriptor file")->required()->check(CLI::ExistingFile);
  vm.option("out", vm_out, "output JSON report")->required();
  vm.option("random-tests", vm_opt.random_tests, "draws averaged for R_inter");
  vm.choice("inter-mode", vm_mode, {"random-tests", "direct-means"}, "R_inter estimator");
  vm.option("seed", vm_opt.seed, "random seed");

  // gradcheck
  Command gc(root, "gradcheck", "compare analytic loss gradients with central differences");
  std::string gc_out;
  GradcheckOptions gc_opt;
  gc_opt.trials = 100;
  gc.option("out", gc_out, "output JSON report")->required();
  gc.option("trials", gc_opt.trials, "random batches");
  gc.option("batch-sizes", gc_opt.batch_sizes, "batch sizes N cycled over")->delimiter(',');
  gc.option("dims", gc_opt.dims, "dimensions q cycled over")->delimiter(',');
  gc.option("step", gc_opt.h, "finite-difference step h");
  gc.option("threshold", gc_opt.threshold, "maximum relative error to pass");
  gc.option("seed", gc_opt.seed, "random seed");

  // sweep
  Command sw(root, "sweep", "train and evaluate every (N, K) cell of a grid");
  std::string sw_data, sw_out;
  std::vector<std::size_t> sw_n = {256, 512, 1024, 2048}, sw_k = {4, 8, 16, 32};
  EvalOptions sw_eval;
  std::uint64_t sw_seed = 0;
  LossFlags sw_loss;
  OptimFlags sw_optim;
  sw.option("data", sw_data, "input descriptor file")->required()->check(CLI::ExistingFile);
  sw.option("out", sw_out, "output CSV grid")->required();
  sw.option("n-grid", sw_n, "pairs-per-batch values")->delimiter(',');
  sw.option("k-grid", sw_k, "neighbour counts")->delimiter(',');
  sw_loss.add(sw);
  sw_optim.add(sw);
  sw.option("n-pos", sw_eval.n_pos, "positive verification pairs");
  sw.option("n-neg", sw_eval.n_neg, "negative verification pairs");
  sw.option("seed", sw_seed, "random seed shared by every cell");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    root.parse(reversed);
  } catch (const CLI::Success& e) {
    return root.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    root.exit(e, out, err);
    return kExitValidation;
  }

  try {
    if (gen.parsed()) {
      Manifest manifest("gen", gen.resolved(), spec.seed);
      spec.validate();
      save_descriptors(generate_synthetic(spec), gen_out, provenance("gen", spec.seed));
      manifest.output(gen_out);
      manifest.output(sidecar_path(gen_out).string());
      manifest.write(gen_out);
      out << "wrote " << gen_out << " (" << spec.classes * spec.samples_per_class << " x " << spec.q << ")\n";
    } else if (tr.parsed()) {
      Manifest manifest("train", tr.resolved(), tr_seed);
      if (tr_history.empty()) tr_history = tr_out + ".history.csv";
      const auto cfg = tr_optim.config(tr_loss, tr_n, tr_seed);
      cfg.validate();
      const auto data = load_input(tr_data);
      manifest.input(tr_data);
      if (tr_init == "data" && tr_dim != 0 && tr_dim != data.dim()) {
        throw Error(ErrorCode::kDimensionMismatch, "--dim " + std::to_string(tr_dim) +
                                                       " differs from the input dimension " +
                                                       std::to_string(data.dim()) + "; use --init random");
      }
      auto table = tr_init == "data"
                       ? EmbeddingTable::from_set(data)
                       : EmbeddingTable::random_init(data.labels, tr_dim == 0 ? data.dim() : tr_dim, tr_seed);
      if (cfg.epochs > 0 && table.classes().size() < cfg.pairs_per_batch) {
        throw Error(ErrorCode::kInfeasible, "pairs per batch N=" + std::to_string(cfg.pairs_per_batch) +
                                                " exceeds the " + std::to_string(table.classes().size()) +
                                                " classes in " + tr_data);
      }
      std::optional<ValidationPairs> val;
      if (tr_val_pos + tr_val_neg > 0) {
        EvalOptions vo{tr_val_pos, tr_val_neg, tr_seed};
        vo = clamp_pair_counts(data, vo, &err);
        val = ValidationPairs{build_verification_pairs(table.to_set(), vo.n_pos, vo.n_neg, vo.seed)};
      }
      const auto result = train(std::move(table), cfg, val ? &*val : nullptr);
      auto set = result.table.to_set();
      set.split = data.split;
      save_descriptors(set, tr_out, provenance("train", tr_seed));
      std::ostringstream csv;
      write_history_csv(csv, result.history);
      write_text(tr_history, csv.str());
      manifest.output(tr_out);
      manifest.output(sidecar_path(tr_out).string());
      manifest.output(tr_history);
      manifest.write(tr_out);
      out << "trained " << result.history.size() << " epochs";
      if (!result.history.empty()) out << ", final total loss " << result.history.back().total_loss;
      out << "\n";
    } else if (ev.parsed()) {
      Manifest manifest("eval", ev.resolved(), ev_opt.seed);
      const auto data = load_input(ev_data);
      manifest.input(ev_data);
      const auto opt = clamp_pair_counts(data, ev_opt, &err);
      const auto report = evaluate_set(data, opt);
      write_json(ev_out, to_json(report));
      manifest.output(ev_out);
      if (!ev_csv.empty()) {
        write_text(ev_csv, eval_csv_header() + "\n" + to_csv_row(report) + "\n");
        manifest.output(ev_csv);
      }
      manifest.write(ev_out);
      out << "fpr_at_95 " << report.fpr_at_95 << "\n";
    } else if (vm.parsed()) {
      Manifest manifest("vmf-stats", vm.resolved(), vm_opt.seed);
      const auto data = load_input(vm_data);
      manifest.input(vm_data);
      vm_opt.inter_mode = vm_mode == "direct-means" ? InterMode::kDirectMeans : InterMode::kRandomTests;
      const auto stats = hypersphere_stats(data.descriptors, data.labels, vm_opt);
      write_json(vm_out, to_json(stats));
      manifest.output(vm_out);
      manifest.write(vm_out);
      out << "r_intra " << stats.r_intra << " r_inter " << stats.r_inter << " rho " << stats.rho << "\n";
    } else if (gc.parsed()) {
      Manifest manifest("gradcheck", gc.resolved(), gc_opt.seed);
      const auto report = run_gradcheck(gc_opt);
      write_json(gc_out, to_json(report, gc_opt));
      manifest.output(gc_out);
      manifest["pass"] = report.pass;
      manifest.write(gc_out);
      out << (report.pass ? "PASS" : "FAIL") << " max relative error " << report.max_relative_error << " over "
          << report.trials.size() - report.skipped << " batches (" << report.skipped << " skipped)\n";
      if (!report.pass) return kExitRuntime;
    } else if (sw.parsed()) {
      Manifest manifest("sweep", sw.resolved(), sw_seed);
      const auto n_grid = dedupe(sw_n, "--n-grid", err);
      const auto k_grid = dedupe(sw_k, "--k-grid", err);
      const auto base = sw_optim.config(sw_loss, 2, sw_seed);
      base.loss.validate();
      const auto data = load_input(sw_data);
      manifest.input(sw_data);
      EvalOptions eval = sw_eval;
      eval.seed = sw_seed;
      eval = clamp_pair_counts(data, eval, &err);

      std::string csv = "n,k,fpr95,error\n";
      json cells = json::array();
      std::optional<CellResult> best;
      bool unique = false;
      std::size_t failures = 0;
      for (const auto n : n_grid) {
        for (const auto k : k_grid) {
          const auto cell = run_cell(data, base, eval, n, k);
          std::string message = cell.error;
          std::replace(message.begin(), message.end(), '"', '\'');
          char buf[64] = "";
          if (cell.fpr95) std::snprintf(buf, sizeof buf, "%.17g", *cell.fpr95);
          csv += std::to_string(n) + "," + std::to_string(k) + "," + buf + ",";
          csv += message.empty() ? "\n" : "\"" + message + "\"\n";
          cells.push_back({{"n", n}, {"k", k}, {"fpr95", cell.fpr95 ? json(*cell.fpr95) : json(nullptr)}});
          if (!cell.fpr95) {
            ++failures;
            err << "warning: cell N=" << n << " K=" << k << " failed: " << cell.error << "\n";
            continue;
          }
          if (!best || *cell.fpr95 < *best->fpr95) {
            best = cell;
            unique = true;
          } else if (*cell.fpr95 == *best->fpr95) {
            unique = false;
          }
        }
      }
      write_text(sw_out, csv);
      manifest.output(sw_out);
      manifest["cells"] = cells;
      if (best) {
        manifest["argmin"] = {{"n", best->n}, {"k", best->k}, {"fpr95", *best->fpr95}, {"unique", unique}};
      } else {
        manifest["argmin"] = nullptr;
      }
      manifest.write(sw_out);
      if (!best) {
        err << "error: every sweep cell failed\n";
        return kExitRuntime;
      }
      out << "argmin N=" << best->n << " K=" << best->k << " fpr95 " << *best->fpr95 << (unique ? "" : " (tied)")
          << "; " << failures << " of " << n_grid.size() * k_grid.size() << " cells failed\n";
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return is_validation_error(e.code()) ? kExitValidation : kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace sosr::cli
