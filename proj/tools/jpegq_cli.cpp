// Copyright (c) the jpegq Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end: corpus ingestion, table optimization, evaluation
// sweeps and table export.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "jpegq.hpp"

namespace fs = std::filesystem;
using jpegq::Error;
using nlohmann::json;

namespace {

struct Options {
  std::string dataset;
  std::string labels;
  std::string out = "out";
  std::string config;
  int steps = 1000;
  int batch = 4;
  double lr = 1e-4;
  double entropy_lr = 1e-4;
  int entropy_warmup = 0;
  double cr = 1.0, cd = 1.0, cc = 0.0;
  int qmin = 10, qmax = 90;
  std::vector<int> qlist;
  std::string layout = "420";
  std::uint64_t seed = 0;
  std::string tables;
  std::string entropy_ckpt;
  std::string classifier_ckpt;
  int size = 299;
  int q = 0;  // export-tables
  // synth-corpus
  int count = 16;
  std::string kind = "natural";
  // train-classifier
  int iterations = 400;
};

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string file_hash(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string s = ss.str();
  return hex64(fnv1a(s.data(), s.size()));
}

std::string values_hash(const std::vector<double>& v) { return hex64(fnv1a(v.data(), v.size() * sizeof(double))); }

std::vector<int> qualities(const Options& o, bool sweep_default) {
  if (!o.qlist.empty()) {
    for (int q : o.qlist) jpegq::require_quality(q);
    return o.qlist;
  }
  if (sweep_default) {
    std::vector<int> qs;
    for (int q = o.qmin; q <= o.qmax; q += 10) qs.push_back(q);
    if (qs.empty()) throw Error("empty quality list");
    for (int q : qs) jpegq::require_quality(q);
    return qs;
  }
  return jpegq::quality_range(o.qmin, o.qmax);
}

json config_json(const std::string& command, const Options& o) {
  return {{"command", command},
          {"config_file", o.config},
          {"dataset", o.dataset},
          {"labels", o.labels},
          {"out", o.out},
          {"steps", o.steps},
          {"batch", o.batch},
          {"lr", o.lr},
          {"entropy_lr", o.entropy_lr},
          {"entropy_warmup", o.entropy_warmup},
          {"cr", o.cr},
          {"cd", o.cd},
          {"cc", o.cc},
          {"qmin", o.qmin},
          {"qmax", o.qmax},
          {"qlist", o.qlist},
          {"layout", o.layout},
          {"seed", o.seed},
          {"tables", o.tables},
          {"entropy_ckpt", o.entropy_ckpt},
          {"classifier_ckpt", o.classifier_ckpt},
          {"size", o.size}};
}

class Run {
 public:
  Run(std::string command, const Options& o) : command_(std::move(command)), opt_(o), dir_(o.out) {
    fs::create_directories(dir_);
    manifest_["tool"] = "jpegq";
    manifest_["version"] = jpegq::kVersion;
    manifest_["config"] = config_json(command_, o);
    manifest_["seed"] = o.seed;
    manifest_["outputs"] = json::object();
    manifest_["parameters"] = json::object();
  }

  fs::path path(const std::string& name) const { return dir_ / name; }

  void record_output(const std::string& name) { manifest_["outputs"][name] = file_hash(path(name)); }
  void record_parameters(const std::string& name, const std::vector<double>& v) {
    manifest_["parameters"][name] = values_hash(v);
  }
  void record_corpus(const jpegq::Corpus& c) {
    json files = json::array();
    for (const auto& e : c.entries) files.push_back(e.name);
    manifest_["corpus"] = {{"images", files}, {"skipped", c.skipped}};
  }
  json& manifest() { return manifest_; }

  void finish() {
    std::ofstream f(path("manifest.json"));
    f << manifest_.dump(2) << '\n';
    if (!f) throw Error("cannot write manifest");
  }

 private:
  std::string command_;
  Options opt_;
  fs::path dir_;
  json manifest_;
};

jpegq::Corpus load_corpus(const Options& o, bool require_labels) {
  if (o.dataset.empty()) throw Error("--dataset is required");
  jpegq::IngestOptions io;
  io.size = o.size;
  io.labels_path = o.labels;
  io.require_labels = require_labels;
  auto corpus = jpegq::ingest(o.dataset, io);
  for (const auto& s : corpus.skipped) std::cerr << "skipped " << s << '\n';
  if (!corpus.skipped.empty())
    std::cerr << corpus.skipped.size() << " file(s) skipped, " << corpus.entries.size() << " loaded\n";
  return corpus;
}

jpegq::QuantTableParams initial_tables(const Options& o) {
  return o.tables.empty() ? jpegq::default_tables() : jpegq::load_tables(o.tables);
}

jpegq::TrainConfig train_config(const Options& o, jpegq::TrainMode mode) {
  jpegq::TrainConfig cfg;
  cfg.steps = o.steps;
  cfg.batch = o.batch;
  cfg.lr = o.lr;
  cfg.entropy_lr = o.entropy_lr;
  cfg.entropy_warmup_steps = o.entropy_warmup;
  cfg.qualities = jpegq::quality_range(o.qmin, o.qmax);
  if (!o.qlist.empty()) cfg.qualities = o.qlist;
  cfg.layout = jpegq::parse_layout(o.layout);
  cfg.seed = o.seed;
  cfg.mode = mode;
  cfg.train_entropy = mode == jpegq::TrainMode::kUniversal;
  if (cfg.steps < 0) throw Error("--steps must be non-negative");
  cfg.validate();
  return cfg;
}

void write_trace(const fs::path& p, const std::vector<jpegq::LossTerms>& trace) {
  std::ofstream f(p);
  f << "step,total,rate,distortion,task\n";
  f.precision(9);
  for (std::size_t i = 0; i < trace.size(); ++i)
    f << i << ',' << trace[i].total << ',' << trace[i].rate << ',' << trace[i].distortion << ',' << trace[i].task
      << '\n';
  if (!f) throw Error("cannot write loss trace");
}

std::vector<jpegq::LabeledImage> items(const jpegq::Corpus& c) { return c.items(); }

int optimize_universal(const std::string& command, const Options& o, bool task) {
  const auto corpus = load_corpus(o, task);
  const jpegq::LossWeights w{o.cr, o.cd, o.cc};
  w.validate();
  const auto cfg = train_config(o, jpegq::TrainMode::kUniversal);
  Run run(command, o);
  run.record_corpus(corpus);

  std::optional<jpegq::ToyClassifier> clf;
  if (w.task > 0.0) {
    if (o.classifier_ckpt.empty()) throw Error("--classifier-ckpt is required when --cc > 0");
    clf = jpegq::load_classifier_checkpoint(o.classifier_ckpt);
  }
  jpegq::TrainInit init;
  init.tables = initial_tables(o);
  if (!o.entropy_ckpt.empty()) init.entropy = jpegq::load_entropy_checkpoint(o.entropy_ckpt);

  const auto data = items(corpus);
  const auto res = jpegq::universal_train(data, cfg, w, clf ? &*clf : nullptr, init);

  jpegq::save_tables(run.path("tables.txt").string(), res.tables, command + " seed " + std::to_string(o.seed));
  jpegq::save_entropy_checkpoint(run.path("entropy.ckpt").string(), res.entropy);
  write_trace(run.path("loss_trace.csv"), res.trace);
  for (const char* name : {"tables.txt", "entropy.ckpt", "loss_trace.csv"}) run.record_output(name);
  run.record_parameters("tables", jpegq::flatten(res.tables));
  run.record_parameters("entropy", res.entropy.flat());
  run.finish();
  std::cout << "wrote " << run.path("tables.txt").string() << " after " << cfg.steps << " steps\n";
  return 0;
}

int optimize_per_image(const Options& o) {
  const jpegq::LossWeights w{o.cr, o.cd, o.cc};
  w.validate();
  if (o.entropy_ckpt.empty()) throw Error("--entropy-ckpt is required (pre-trained density models)");
  const auto corpus = load_corpus(o, w.task > 0.0);
  const auto cfg = train_config(o, jpegq::TrainMode::kPerImage);
  const auto entropy = jpegq::load_entropy_checkpoint(o.entropy_ckpt);
  std::optional<jpegq::ToyClassifier> clf;
  if (w.task > 0.0) {
    if (o.classifier_ckpt.empty()) throw Error("--classifier-ckpt is required when --cc > 0");
    clf = jpegq::load_classifier_checkpoint(o.classifier_ckpt);
  }
  const auto init = initial_tables(o);
  Run run("optimize-per-image", o);
  run.record_corpus(corpus);
  fs::create_directories(run.path("per_image"));
  for (const auto& e : corpus.entries) {
    const auto res = jpegq::per_image_train(e.item, cfg, w, entropy, clf ? &*clf : nullptr, init);
    const std::string name = "per_image/" + fs::path(e.name).stem().string() + ".tables.txt";
    jpegq::save_tables(run.path(name).string(), res.tables, e.name);
    run.record_output(name);
    run.record_parameters(e.name, jpegq::flatten(res.tables));
  }
  run.finish();
  std::cout << "wrote " << corpus.entries.size() << " per-image table files\n";
  return 0;
}

int eval_curve(const Options& o) {
  const bool accuracy = !o.classifier_ckpt.empty();
  const auto corpus = load_corpus(o, accuracy);
  const auto qs = qualities(o, true);
  Run run("eval-curve", o);
  run.record_corpus(corpus);
  const auto tables = initial_tables(o);
  std::optional<jpegq::EntropyEstimatorSet> entropy;
  std::optional<jpegq::ToyClassifier> clf;
  if (!o.entropy_ckpt.empty()) entropy = jpegq::load_entropy_checkpoint(o.entropy_ckpt);
  if (accuracy) clf = jpegq::load_classifier_checkpoint(o.classifier_ckpt);
  jpegq::SweepOptions so;
  so.layout = jpegq::parse_layout(o.layout);
  so.entropy = entropy ? &*entropy : nullptr;
  so.classifier = clf ? &*clf : nullptr;
  const auto data = items(corpus);
  const auto curve = jpegq::sweep(tables, data, qs, so);
  {
    std::ofstream f(run.path("curve.csv"));
    jpegq::emit_csv(curve, f);
    std::ofstream j(run.path("curve.json"));
    j << jpegq::to_json(curve).dump(2) << '\n';
  }
  run.record_output("curve.csv");
  run.record_output("curve.json");
  run.finish();
  jpegq::emit_csv(curve, std::cout);
  return 0;
}

int estimate_vs_actual(const Options& o) {
  if (o.entropy_ckpt.empty()) throw Error("--entropy-ckpt is required");
  const auto corpus = load_corpus(o, false);
  const auto qs = qualities(o, true);
  Run run("estimate-vs-actual", o);
  run.record_corpus(corpus);
  const auto entropy = jpegq::load_entropy_checkpoint(o.entropy_ckpt);
  const auto images = corpus.images();
  const auto pts =
      jpegq::estimate_vs_actual(initial_tables(o), images, qs, jpegq::parse_layout(o.layout), entropy);
  std::vector<double> est, act;
  {
    std::ofstream f(run.path("scatter.csv"));
    f << "image,q,bpp_actual,bpp_estimated\n";
    f.precision(6);
    for (const auto& p : pts) {
      f << corpus.entries[p.image].name << ',' << p.q << ',' << p.bpp_actual << ',' << p.bpp_estimated << '\n';
      est.push_back(p.bpp_estimated);
      act.push_back(p.bpp_actual);
    }
  }
  const double r = jpegq::pearson(est, act);
  run.manifest()["pearson"] = r;
  run.record_output("scatter.csv");
  run.finish();
  std::cout << "pearson " << r << " over " << pts.size() << " points\n";
  return 0;
}

int export_tables(const Options& o) {
  Run run("export-tables", o);
  const auto p = initial_tables(o);
  jpegq::save_tables(run.path("tables.txt").string(), p, "real-valued tables");
  run.record_output("tables.txt");
  if (o.q != 0) {
    const auto t = jpegq::scale_table(p, o.q);
    const std::string name = "tables_q" + std::to_string(o.q) + ".txt";
    jpegq::save_tables(run.path(name).string(), t, "scaled, rounded and clipped at q " + std::to_string(o.q));
    run.record_output(name);
  }
  run.record_parameters("tables", jpegq::flatten(p));
  run.finish();
  std::cout << "wrote " << run.path("tables.txt").string() << '\n';
  return 0;
}

int synth_corpus(const Options& o) {
  if (o.count < 1) throw Error("--count must be positive");
  if (o.size < 16) throw Error("--size must be at least 16");
  fs::create_directories(o.out);
  std::ofstream labels(fs::path(o.out) / "labels.txt");
  labels << "# file label\n";
  char name[32];
  if (o.kind == "natural") {
    const auto imgs = jpegq::synth::natural_corpus(o.count, o.size, o.size, o.seed);
    for (int i = 0; i < o.count; ++i) {
      std::snprintf(name, sizeof(name), "img%05d.ppm", i);
      jpegq::save_ppm((fs::path(o.out) / name).string(), imgs[i]);
    }
  } else if (o.kind == "pattern") {
    const auto imgs = jpegq::synth::pattern_corpus(o.count, o.size, o.seed);
    for (int i = 0; i < o.count; ++i) {
      std::snprintf(name, sizeof(name), "img%05d.ppm", i);
      jpegq::save_ppm((fs::path(o.out) / name).string(), imgs[i].image);
      labels << name << ' ' << imgs[i].label << '\n';
    }
  } else {
    throw Error("--kind must be natural or pattern");
  }
  std::cout << "wrote " << o.count << " images to " << o.out << '\n';
  return 0;
}

int train_classifier(const Options& o) {
  if (o.labels.empty()) throw Error("--labels is required");
  const auto corpus = load_corpus(o, true);
  jpegq::ClassifierTrainOptions opt;
  opt.iterations = o.iterations;
  int classes = 2;
  for (const auto& e : corpus.entries) classes = std::max(classes, e.item.label + 1);
  opt.classes = classes;
  const auto data = items(corpus);
  const auto fit = jpegq::train_toy_classifier(data, opt);
  Run run("train-classifier", o);
  run.record_corpus(corpus);
  jpegq::save_classifier_checkpoint(run.path("classifier.ckpt").string(), fit.params);
  run.record_output("classifier.ckpt");
  run.manifest()["train_accuracy"] = fit.train_accuracy;
  run.finish();
  std::cout << "train accuracy " << fit.train_accuracy << '\n';
  return 0;
}

// Splices `key = value` lines from the file named by --config into the
// argument list right after the subcommand, skipping keys that are also
// given as flags so the command line wins.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::string path;
  std::set<std::string> given;
  for (std::size_t i = 2; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("--", 0) != 0) continue;
    const auto eq = a.find('=');
    const std::string name = a.substr(2, eq == std::string::npos ? std::string::npos : eq - 2);
    given.insert(name);
    if (name == "config") path = eq != std::string::npos ? a.substr(eq + 1) : (i + 1 < args.size() ? args[i + 1] : "");
  }
  if (path.empty() || args.size() < 2) return args;
  std::ifstream f(path);
  if (!f) throw Error("cannot open config file '" + path + "'");
  std::vector<std::string> injected;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(path + ":" + std::to_string(lineno) + ": expected key = value");
    std::istringstream key_in(line.substr(0, eq)), value_in(line.substr(eq + 1));
    std::string key;
    key_in >> key;
    std::replace(key.begin(), key.end(), '_', '-');
    if (key.empty() || key == "config") throw Error(path + ":" + std::to_string(lineno) + ": bad key");
    if (given.count(key)) continue;
    injected.push_back("--" + key);
    for (std::string v; value_in >> v;) injected.push_back(v);
  }
  args.insert(args.begin() + 2, injected.begin(), injected.end());
  return args;
}

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config, "key = value configuration file; flags take precedence");
  sub->add_option("--out", o.out, "Output directory");
  sub->add_option("--layout", o.layout, "Chroma layout")->check(CLI::IsMember({"420", "444"}));
  sub->add_option("--seed", o.seed, "Random seed");
  sub->add_option("--tables", o.tables, "Input table file (defaults to the standard tables)");
}

void add_dataset(CLI::App* sub, Options& o) {
  sub->add_option("--dataset", o.dataset, "Directory of PPM/PGM images")->required();
  sub->add_option("--labels", o.labels, "Label index file (filename label)");
  sub->add_option("--size", o.size, "Square size images are resized to");
}

void add_training(CLI::App* sub, Options& o) {
  sub->add_option("--steps", o.steps, "Optimization steps");
  sub->add_option("--batch", o.batch, "Images per step");
  sub->add_option("--lr", o.lr, "Adam learning rate for the tables");
  sub->add_option("--entropy-lr", o.entropy_lr, "Adam learning rate for the density models");
  sub->add_option("--entropy-warmup", o.entropy_warmup, "Density-model-only steps before table updates");
  sub->add_option("--cr", o.cr, "Rate weight");
  sub->add_option("--cd", o.cd, "Distortion weight");
  sub->add_option("--cc", o.cc, "Task weight");
  sub->add_option("--qmin", o.qmin, "Smallest sampled quality factor");
  sub->add_option("--qmax", o.qmax, "Largest sampled quality factor");
  sub->add_option("--qlist", o.qlist, "Explicit quality factors");
  sub->add_option("--entropy-ckpt", o.entropy_ckpt, "Density model checkpoint");
  sub->add_option("--classifier-ckpt", o.classifier_ckpt, "Classifier checkpoint");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantization table optimization for baseline JPEG"};
  app.set_version_flag("--version", std::string(jpegq::kVersion));
  app.require_subcommand(1);
  Options o;

  auto* rd = app.add_subcommand("optimize-rd", "Universal rate-distortion tables");
  add_common(rd, o);
  add_dataset(rd, o);
  add_training(rd, o);

  auto* ra = app.add_subcommand("optimize-ra", "Universal rate-accuracy tables (c_r=10, c_d=0, c_c=1)");
  add_common(ra, o);
  add_dataset(ra, o);
  add_training(ra, o);

  auto* pi = app.add_subcommand("optimize-per-image", "Tables fitted to each image separately");
  add_common(pi, o);
  add_dataset(pi, o);
  add_training(pi, o);

  auto* ev = app.add_subcommand("eval-curve", "Rate-distortion (and accuracy) sweep");
  add_common(ev, o);
  add_dataset(ev, o);
  ev->add_option("--qmin", o.qmin, "Smallest quality factor");
  ev->add_option("--qmax", o.qmax, "Largest quality factor (step 10)");
  ev->add_option("--qlist", o.qlist, "Explicit quality factors");
  ev->add_option("--entropy-ckpt", o.entropy_ckpt, "Also report estimated bpp");
  ev->add_option("--classifier-ckpt", o.classifier_ckpt, "Also report accuracy (needs --labels)");

  auto* ea = app.add_subcommand("estimate-vs-actual", "Estimated versus actual bpp scatter and Pearson r");
  add_common(ea, o);
  add_dataset(ea, o);
  ea->add_option("--qmin", o.qmin, "Smallest quality factor");
  ea->add_option("--qmax", o.qmax, "Largest quality factor (step 10)");
  ea->add_option("--qlist", o.qlist, "Explicit quality factors");
  ea->add_option("--entropy-ckpt", o.entropy_ckpt, "Density model checkpoint")->required();

  auto* ex = app.add_subcommand("export-tables", "Write tables, optionally scaled to a quality factor");
  add_common(ex, o);
  ex->add_option("--q", o.q, "Also write the integer tables for this quality")->check(CLI::Range(1, 100));

  auto* sy = app.add_subcommand("synth-corpus", "Generate a synthetic PPM corpus");
  sy->add_option("--config", o.config, "key = value configuration file; flags take precedence");
  sy->add_option("--out", o.out, "Output directory")->required();
  sy->add_option("--count", o.count, "Number of images");
  sy->add_option("--size", o.size, "Image side length");
  sy->add_option("--seed", o.seed, "Random seed");
  sy->add_option("--kind", o.kind, "natural or pattern")->check(CLI::IsMember({"natural", "pattern"}));

  auto* tc = app.add_subcommand("train-classifier", "Fit the toy classifier on a labeled corpus");
  add_common(tc, o);
  add_dataset(tc, o);
  tc->add_option("--iterations", o.iterations, "Full-batch gradient steps");

  // optimize-ra changes the weight defaults before parsing.
  ra->preparse_callback([&](std::size_t) {
    o.cr = 10.0;
    o.cd = 0.0;
    o.cc = 1.0;
  });

  std::vector<std::string> args(argv, argv + argc);
  try {
    args = expand_config(std::move(args));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  std::vector<char*> cargs;
  for (auto& a : args) cargs.push_back(a.data());

  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
  }

  try {
    if (*rd) return optimize_universal("optimize-rd", o, false);
    if (*ra) {
      if (o.labels.empty()) throw Error("optimize-ra requires --labels");
      return optimize_universal("optimize-ra", o, true);
    }
    if (*pi) return optimize_per_image(o);
    if (*ev) return eval_curve(o);
    if (*ea) return estimate_vs_actual(o);
    if (*ex) return export_tables(o);
    if (*sy) return synth_corpus(o);
    if (*tc) return train_classifier(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
