// dart: command-line entry point.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dart/checkpoint.hpp"
#include "dart/crg.hpp"
#include "dart/dataset.hpp"
#include "dart/error.hpp"
#include "dart/gradcheck.hpp"
#include "dart/metrics.hpp"
#include "dart/model.hpp"
#include "dart/trainer.hpp"

#ifndef DART_VERSION
#define DART_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw dart::IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw dart::IoError("cannot write " + path.string());
  out << text;
  if (!out) throw dart::IoError("failed writing " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// Everything needed to re-run a command. Wall clock fields obviously differ
// between runs; the other outputs of a command do not.
struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  std::string config;
  std::uint64_t seed = 0;
  json inputs = json::object();
  json outputs = json::object();
  std::string started = utc_now();
  Clock::time_point t0 = Clock::now();

  void write(const fs::path& dir) const {
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    json j = {{"command", command},
              {"argv", argv},
              {"config", config.empty() ? json(nullptr) : json(config)},
              {"seed", seed},
              {"inputs", inputs},
              {"outputs", outputs},
              {"version", DART_VERSION},
              {"started_utc", started},
              {"wall_clock_seconds", secs}};
    write_json(dir / (command + ".manifest.json"), j);
  }
};

std::vector<dart::Index> parse_k_list(const std::string& text) {
  std::vector<dart::Index> ks;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      const long v = std::stol(item, &used);
      if (used != item.size() || v < 1) throw std::invalid_argument(item);
      ks.push_back(v);
    } catch (const std::exception&) {
      throw dart::ConfigError("--k: '" + item + "' is not a positive integer");
    }
  }
  if (ks.empty()) throw dart::ConfigError("--k: empty list");
  return ks;
}

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

dart::Index resolve_class(const dart::Vocabulary& vocab, const std::string& key) {
  for (dart::Index c = 0; c < vocab.size(); ++c) {
    if (vocab.names[static_cast<std::size_t>(c)] == key) return c;
  }
  try {
    std::size_t used = 0;
    const long v = std::stol(key, &used);
    if (used == key.size() && v >= 0 && v < vocab.size()) return v;
  } catch (const std::exception&) {
  }
  throw dart::LookupError("unknown class '" + key + "'");
}

// gen-data ------------------------------------------------------------------

struct GenArgs {
  dart::SyntheticSpec spec;
  dart::Index d = 32;
  std::uint64_t backbone_seed = 7;
  std::string out = "data";
};

int run_gen(const GenArgs& a, Manifest& m) {
  const auto grid = static_cast<dart::Index>(std::llround(std::sqrt(static_cast<double>(a.spec.patches))));
  if (grid * grid != a.spec.patches) {
    throw dart::ConfigError("gen-data: --patches must be a square grid, got " + std::to_string(a.spec.patches));
  }
  dart::BackboneConfig bc;
  bc.d = a.d;
  bc.d_in = a.spec.d_in;
  bc.grid_h = grid;
  bc.grid_w = grid;
  bc.seed = a.backbone_seed;
  const dart::Backbone backbone(bc);
  const dart::SyntheticData synth = dart::gen_synthetic_dataset(a.spec, &backbone.embedding());

  const fs::path dir(a.out);
  ensure_dir(dir);
  synth.data.save(dir / "dataset.jsonl");
  synth.vocab.save(dir / "vocab.json");
  dart::crg::write_query_logs(dir / "llm_fixtures.jsonl", synth.llm_fixtures);

  m.seed = a.spec.seed;
  m.outputs = {{"dataset", (dir / "dataset.jsonl").string()},
               {"vocab", (dir / "vocab.json").string()},
               {"fixtures", (dir / "llm_fixtures.jsonl").string()}};
  m.write(dir);
  std::printf("wrote %zu bags, %ld classes (%ld unseen) to %s\n", synth.data.bags.size(),
              static_cast<long>(synth.vocab.size()), static_cast<long>(synth.vocab.num_unseen()),
              dir.string().c_str());
  return 0;
}

// build-crg -----------------------------------------------------------------

struct CrgArgs {
  std::string vocab;
  std::string backend = "replay";
  std::string fixtures;
  dart::crg::MiningOptions opts;
  std::string out = "crg";
};

int run_crg(const CrgArgs& a, Manifest& m) {
  const dart::Vocabulary vocab = dart::Vocabulary::load(a.vocab);
  std::unique_ptr<dart::crg::LlmBackend> backend;
  if (a.backend == "replay") {
    if (a.fixtures.empty()) throw dart::ConfigError("build-crg: replay backend needs --fixtures");
    auto replay = std::make_unique<dart::crg::ReplayBackend>(dart::crg::ReplayBackend::from_file(a.fixtures));
    const auto missing = replay->missing(vocab.names, a.opts.queries);
    if (!missing.empty()) {
      std::string msg = "replay fixtures lack " + std::to_string(missing.size()) + " responses:";
      for (const auto& [name, q] : missing) msg += " " + name + "#" + std::to_string(q);
      throw dart::FixtureError(msg);
    }
    backend = std::move(replay);
  } else if (a.backend == "live") {
    backend = std::make_unique<dart::crg::LiveBackend>(dart::crg::LiveBackendConfig::from_env());
  } else {
    throw dart::ConfigError("build-crg: unknown backend '" + a.backend + "'");
  }

  const auto mined = dart::crg::mine_all(vocab.names, vocab.seen_mask, *backend, a.opts);
  for (const auto& log : mined.logs) {
    if (log.status != "ok") {
      std::fprintf(stderr, "warning: %s query %ld parsed as %s\n", log.class_name.c_str(),
                   static_cast<long>(log.query_index), log.status.c_str());
    }
  }

  const fs::path dir(a.out);
  ensure_dir(dir);
  mined.graph.save(dir / "graph.json");
  dart::crg::write_relations(dir / "relations.jsonl", mined.records);
  dart::crg::write_query_logs(dir / "query_log.jsonl", mined.logs);

  std::size_t edges = 0;
  for (const auto& n : mined.graph.in_neighbors) edges += n.size();
  m.inputs = {{"vocab", a.vocab}, {"fixtures", a.fixtures}, {"backend", a.backend}};
  m.outputs = {{"graph", (dir / "graph.json").string()},
               {"relations", (dir / "relations.jsonl").string()},
               {"query_log", (dir / "query_log.jsonl").string()}};
  m.write(dir);
  std::printf("mined %zu relations (%ld skipped), %zu edges\n", mined.records.size(),
              static_cast<long>(mined.skipped), edges);
  return 0;
}

// train ---------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string vocab;
  std::string graph;
  std::string config;
  std::string resume;
  std::string out = "run";
  long steps = -1;
};

void check_names(const dart::Vocabulary& vocab, const dart::ClassGraph& graph) {
  if (vocab.names != graph.names) throw dart::ConfigError("graph class names do not match the vocabulary");
}

int run_train(const TrainArgs& a, Manifest& m) {
  const dart::Dataset data = dart::Dataset::load(a.data);
  std::unique_ptr<dart::DartModel> owned;
  if (!a.resume.empty()) {
    dart::LoadedRun run = dart::load_model(a.resume);
    owned = std::move(run.model);
    if (a.steps >= 0) {
      dart::ModelConfig cfg = owned->config();
      cfg.steps = a.steps;
      auto fresh = std::make_unique<dart::DartModel>(cfg, owned->vocab(), owned->graph());
      auto& dst = fresh->params().items();
      const auto& src = owned->params().items();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i].tensor.mutable_value() = src[i].tensor.value();
      owned = std::move(fresh);
    }
  } else {
    if (a.vocab.empty() || a.graph.empty()) throw dart::ConfigError("train: --vocab and --graph are required");
    dart::ModelConfig cfg = a.config.empty() ? dart::ModelConfig{} : dart::ModelConfig::load(a.config);
    if (a.steps >= 0) cfg.steps = a.steps;
    dart::Vocabulary vocab = dart::Vocabulary::load(a.vocab);
    dart::ClassGraph graph = dart::ClassGraph::load(a.graph);
    check_names(vocab, graph);
    owned = std::make_unique<dart::DartModel>(cfg, std::move(vocab), std::move(graph));
  }
  dart::DartModel& model = *owned;
  const dart::ModelConfig& cfg = model.config();
  const std::uint64_t frozen_before = model.backbone().checksum();

  const fs::path dir(a.out);
  ensure_dir(dir);
  dart::Trainer trainer(model, data);
  if (!a.resume.empty()) dart::restore_trainer(a.resume, trainer);

  std::ofstream log(dir / "train_log.csv", std::ios::binary);
  if (!log) throw dart::IoError("cannot write " + (dir / "train_log.csv").string());
  log << "step,lr,lambda,total,clsf,wps,penalty,mean_abs_delta\n";
  char line[256];
  dart::StepLog last;
  const auto t0 = Clock::now();
  if (cfg.train) {
    trainer.run([&](const dart::StepLog& s) {
      std::snprintf(line, sizeof(line), "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                    static_cast<long>(s.step), s.lr, s.lambda, s.total, s.clsf, s.wps, s.penalty,
                    s.mean_abs_delta);
      log << line;
      last = s;
      const dart::Index done = s.step + 1;
      if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done < cfg.steps) {
        char name[64];
        std::snprintf(name, sizeof(name), "checkpoint_step%06ld.bin", static_cast<long>(done));
        dart::save_checkpoint(dir / name, model, &trainer);
      }
      if (done % 100 == 0) {
        std::fprintf(stderr, "step %ld loss %.4f (clsf %.4f wps %.4f pen %.4f)\n", static_cast<long>(done),
                     s.total, s.clsf, s.wps, s.penalty);
      }
    });
  }
  if (!log) throw dart::IoError("failed writing train log");
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();

  if (model.backbone().checksum() != frozen_before) {
    throw dart::ContractError("frozen backbone changed during training");
  }
  dart::save_checkpoint(dir / "checkpoint.bin", model, &trainer);

  json report = {{"steps", trainer.state().step},
                 {"trained", cfg.train},
                 {"final",
                  {{"total", last.total},
                   {"clsf", last.clsf},
                   {"wps", last.wps},
                   {"penalty", last.penalty},
                   {"mean_abs_delta", last.mean_abs_delta}}},
                 {"trainable_parameters", model.params().trainable_count()},
                 {"backbone_checksum", std::to_string(frozen_before)},
                 {"train_seconds", secs}};
  write_json(dir / "report.json", report);

  m.seed = cfg.seed;
  m.inputs = {{"data", a.data}, {"vocab", a.vocab}, {"graph", a.graph}, {"resume", a.resume}};
  m.outputs = {{"checkpoint", (dir / "checkpoint.bin").string()},
               {"log", (dir / "train_log.csv").string()},
               {"report", (dir / "report.json").string()}};
  m.write(dir);
  std::printf("trained %ld steps in %.1fs\n", static_cast<long>(trainer.state().step), secs);
  return 0;
}

// eval ----------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string vocab;
  std::string mode = "gzsl";
  std::string k = "3,5";
  std::string split = "test";
  bool oracle = false;
  std::string out = "eval";
};

int run_eval(const EvalArgs& a, Manifest& m) {
  const std::vector<dart::Index> ks = parse_k_list(a.k);
  std::vector<dart::EvalMode> modes;
  for (const auto& s : split_csv(a.mode)) modes.push_back(dart::parse_eval_mode(s));
  if (modes.empty()) throw dart::ConfigError("eval: empty --mode");

  const dart::Dataset data = dart::Dataset::load(a.data);
  const auto bags = data.split(a.split);
  if (bags.empty()) throw dart::ConfigError("eval: split '" + a.split + "' has no images");

  std::unique_ptr<dart::DartModel> model;
  dart::Vocabulary vocab;
  if (!a.checkpoint.empty()) {
    model = dart::load_model(a.checkpoint).model;
    vocab = model->vocab();
  } else if (a.oracle && !a.vocab.empty()) {
    vocab = dart::Vocabulary::load(a.vocab);
  } else {
    throw dart::ConfigError("eval: need --checkpoint, or --oracle with --vocab");
  }
  for (auto mode : modes) {
    if (mode == dart::EvalMode::kZsl && vocab.num_unseen() == 0) {
      throw dart::ConfigError("eval: zsl mode needs unseen classes");
    }
  }

  const dart::EvalTable table = a.oracle ? dart::oracle_table(bags, vocab.size()) : dart::score_table(*model, bags);
  json reports = json::object();
  std::string csv = "mode,k,precision,recall,f1,map\n";
  char row[256];
  for (auto mode : modes) {
    const dart::EvalTable sub = dart::split_eval(table, mode, vocab.seen_mask);
    const dart::EvalReport r = dart::make_report(sub, mode, ks);
    reports[r.mode] = r.to_json();
    for (std::size_t i = 0; i < r.k.size(); ++i) {
      std::snprintf(row, sizeof(row), "%s,%ld,%.17g,%.17g,%.17g,%.17g\n", r.mode.c_str(),
                    static_cast<long>(r.k[i]), r.precision[i], r.recall[i], r.f1[i], r.map);
      csv += row;
    }
    std::printf("%s: mAP %.4f", r.mode.c_str(), r.map);
    for (std::size_t i = 0; i < r.k.size(); ++i) {
      std::printf("  F1@%ld %.4f", static_cast<long>(r.k[i]), r.f1[i]);
    }
    std::printf("\n");
  }

  const fs::path dir(a.out);
  ensure_dir(dir);
  write_json(dir / "eval.json", {{"split", a.split}, {"images", bags.size()}, {"oracle", a.oracle},
                                 {"reports", reports}});
  write_text(dir / "eval.csv", csv);
  if (model) m.seed = model->config().seed;
  m.inputs = {{"checkpoint", a.checkpoint}, {"data", a.data}, {"vocab", a.vocab}};
  m.outputs = {{"report", (dir / "eval.json").string()}, {"csv", (dir / "eval.csv").string()}};
  m.write(dir);
  return 0;
}

// gradcheck -----------------------------------------------------------------

struct GradArgs {
  std::string config;
  double tolerance = -1.0;
  std::string out;
};

int run_gradcheck(const GradArgs& a, Manifest& m) {
  json j = json::object();
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw dart::IoError("cannot read " + a.config);
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw dart::ConfigError(a.config + ": " + e.what());
    }
  }
  if (a.tolerance > 0) j["tolerance"] = a.tolerance;
  const dart::GradcheckConfig cfg = dart::GradcheckConfig::from_json(j);
  const dart::GradcheckReport r = dart::run_gradcheck(cfg);

  for (const auto& g : r.groups) {
    std::printf("%-34s %5ld  %.3e\n", g.name.c_str(), static_cast<long>(g.count), g.max_rel);
  }
  std::printf("max rel err %.3e (%s) in %.1fs: %s\n", r.max_rel, r.worst_group.c_str(), r.seconds,
              r.pass ? "PASS" : "FAIL");
  if (!r.pass) {
    for (const auto& g : r.groups) {
      if (g.name == r.worst_group) {
        std::fprintf(stderr, "worst: %s[%ld] analytic %.10e numeric %.10e rel %.3e > %.1e\n", g.name.c_str(),
                     static_cast<long>(g.worst_index), g.analytic, g.numeric, g.max_rel, cfg.tolerance);
      }
    }
  }
  if (!a.out.empty()) {
    const fs::path dir(a.out);
    ensure_dir(dir);
    write_json(dir / "gradcheck.json", r.to_json());
    m.seed = cfg.seed;
    m.outputs = {{"report", (dir / "gradcheck.json").string()}};
    m.write(dir);
  }
  return r.pass ? 0 : 1;
}

// export-maps ---------------------------------------------------------------

struct MapArgs {
  std::string checkpoint;
  std::string data;
  std::string image_id;
  std::string cls;
  std::string out = "maps";
};

int run_export(const MapArgs& a, Manifest& m) {
  const dart::LoadedRun run = dart::load_model(a.checkpoint);
  const dart::DartModel& model = *run.model;
  const dart::Dataset data = dart::Dataset::load(a.data);
  const dart::PatchBag& bag = data.find(a.image_id);
  const dart::Index c = resolve_class(model.vocab(), a.cls);

  const dart::BackboneOutput frozen = model.encode(bag.patches);
  dart::AttentionTrace trace;
  const dart::Tensor h_txt = model.text_features(&trace);
  const dart::ImageForward f = model.forward(frozen, h_txt, nullptr, &trace);
  const dart::Vector s = f.s_tilde.value().col(c);
  const dart::Vector s0 = f.s_star.col(c);

  const dart::Index gh = model.config().backbone.grid_h;
  const dart::Index gw = model.config().backbone.grid_w;
  const fs::path dir(a.out);
  ensure_dir(dir);

  std::string csv = "patch,row,col,score,frozen_score\n";
  char line[256];
  for (dart::Index i = 0; i < s.size(); ++i) {
    std::snprintf(line, sizeof(line), "%ld,%ld,%ld,%.17g,%.17g\n", static_cast<long>(i), static_cast<long>(i / gw),
                  static_cast<long>(i % gw), s(i), s0(i));
    csv += line;
  }
  write_text(dir / "patch_scores.csv", csv);

  // 8-bit min-max normalized grid; a flat map comes out black.
  const double lo = s.minCoeff();
  const double hi = s.maxCoeff();
  std::string pgm = "P5 " + std::to_string(gw) + " " + std::to_string(gh) + " 255\n";
  for (dart::Index i = 0; i < s.size(); ++i) {
    const double v = hi > lo ? (s(i) - lo) / (hi - lo) : 0.0;
    pgm.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
  }
  write_text(dir / "patch_scores.pgm", pgm);

  const dart::GraphEdges& edges = model.edges();
  const auto& names = model.vocab().names;
  std::string att = "stage,layer,head,c,j,alpha\n";
  for (const auto& rec : trace) {
    for (dart::Index e = 0; e < edges.size(); ++e) {
      std::snprintf(line, sizeof(line), "%s,%ld,%ld,%s,%s,%.17g\n", rec.stage.c_str(), static_cast<long>(rec.layer),
                    static_cast<long>(rec.head), names[static_cast<std::size_t>(edges.target[e])].c_str(),
                    names[static_cast<std::size_t>(edges.source[e])].c_str(), rec.alpha(e, 0));
      att += line;
    }
  }
  write_text(dir / "attention.csv", att);

  m.seed = model.config().seed;
  m.inputs = {{"checkpoint", a.checkpoint}, {"data", a.data}, {"image_id", a.image_id}, {"class", a.cls}};
  m.outputs = {{"scores", (dir / "patch_scores.csv").string()},
               {"map", (dir / "patch_scores.pgm").string()},
               {"attention", (dir / "attention.csv").string()}};
  m.write(dir);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dart: adaptive patch refinement and class-relation graphs for open-vocabulary multi-label recognition"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(DART_VERSION));

  Manifest manifest;
  manifest.argv.assign(argv, argv + argc);

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen-data", "Generate a seeded synthetic multi-label patch dataset");
  c_gen->add_option("--classes", gen.spec.classes, "Number of classes")->capture_default_str();
  c_gen->add_option("--unseen", gen.spec.unseen, "Classes held out of training")->capture_default_str();
  c_gen->add_option("--images", gen.spec.images, "Number of images")->capture_default_str();
  c_gen->add_option("--patches", gen.spec.patches, "Patches per image (a square grid)")->capture_default_str();
  c_gen->add_option("--d-in", gen.spec.d_in, "Raw patch width")->capture_default_str();
  c_gen->add_option("--d", gen.d, "Feature width of the backbone the text is anchored to")->capture_default_str();
  c_gen->add_option("--noise", gen.spec.noise, "Std of the noise on planted patches")->capture_default_str();
  c_gen->add_option("--group-share", gen.spec.group_share, "Shared group direction in prototypes, [0, 1)")
      ->capture_default_str();
  c_gen->add_option("--test-fraction", gen.spec.test_fraction, "Share of images in the test split")
      ->capture_default_str();
  c_gen->add_option("--seed", gen.spec.seed, "Dataset seed")->capture_default_str();
  c_gen->add_option("--backbone-seed", gen.backbone_seed, "Backbone seed used for text anchoring")
      ->capture_default_str();
  c_gen->add_option("--out", gen.out, "Output directory")->capture_default_str();

  CrgArgs crg;
  auto* c_crg = app.add_subcommand("build-crg", "Mine the class relation graph from an LLM or replay fixtures");
  c_crg->add_option("--vocab", crg.vocab, "Vocabulary JSON")->required();
  c_crg->add_option("--backend", crg.backend, "live or replay")
      ->check(CLI::IsMember({"live", "replay"}))
      ->capture_default_str();
  c_crg->add_option("--fixtures", crg.fixtures, "Query-log JSONL served by the replay backend");
  c_crg->add_option("--queries", crg.opts.queries, "Queries per class")->capture_default_str();
  c_crg->add_option("--top-p", crg.opts.top_p, "Nucleus sampling parameter")->capture_default_str();
  c_crg->add_option("--neighbors", crg.opts.neighbors, "Neighbors kept per class")->capture_default_str();
  c_crg->add_option("--max-in-flight", crg.opts.max_in_flight, "Concurrent backend calls")->capture_default_str();
  c_crg->add_option("--out", crg.out, "Output directory")->capture_default_str();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train the adapters and graph modules");
  c_train->add_option("--data", tr.data, "Dataset JSONL")->required();
  c_train->add_option("--vocab", tr.vocab, "Vocabulary JSON");
  c_train->add_option("--graph", tr.graph, "Class graph JSON");
  c_train->add_option("--config", tr.config, "Model/training config JSON (defaults if omitted)");
  c_train->add_option("--resume", tr.resume, "Checkpoint to continue from");
  c_train->add_option("--steps", tr.steps, "Override the total step count");
  c_train->add_option("--out", tr.out, "Output directory")->capture_default_str();

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Evaluate a checkpoint (or the planted-truth oracle)");
  c_eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint file");
  c_eval->add_option("--data", ev.data, "Dataset JSONL")->required();
  c_eval->add_option("--vocab", ev.vocab, "Vocabulary JSON, for --oracle without a checkpoint");
  c_eval->add_option("--mode", ev.mode, "zsl, gzsl, or a comma list")->capture_default_str();
  c_eval->add_option("--k", ev.k, "Comma-separated K values, order kept")->capture_default_str();
  c_eval->add_option("--split", ev.split, "Dataset split")->capture_default_str();
  c_eval->add_flag("--oracle", ev.oracle, "Score with planted-truth indicators");
  c_eval->add_option("--out", ev.out, "Output directory")->capture_default_str();

  GradArgs gc;
  auto* c_grad = app.add_subcommand("gradcheck", "Finite-difference check of the full training loss");
  c_grad->add_option("--config", gc.config, "Micro-instance JSON (defaults if omitted)");
  c_grad->add_option("--tolerance", gc.tolerance, "Max relative error (default 1e-3)");
  c_grad->add_option("--out", gc.out, "Directory for the JSON report and manifest");

  MapArgs mp;
  auto* c_map = app.add_subcommand("export-maps", "Export patch-score maps and graph attention");
  c_map->add_option("--checkpoint", mp.checkpoint, "Checkpoint file")->required();
  c_map->add_option("--data", mp.data, "Dataset JSONL")->required();
  c_map->add_option("--image-id", mp.image_id, "Image id")->required();
  c_map->add_option("--class", mp.cls, "Class name or index")->required();
  c_map->add_option("--out", mp.out, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (c_gen->parsed()) {
      manifest.command = "gen-data";
      return run_gen(gen, manifest);
    }
    if (c_crg->parsed()) {
      manifest.command = "build-crg";
      return run_crg(crg, manifest);
    }
    if (c_train->parsed()) {
      manifest.command = "train";
      manifest.config = tr.config;
      return run_train(tr, manifest);
    }
    if (c_eval->parsed()) {
      manifest.command = "eval";
      return run_eval(ev, manifest);
    }
    if (c_grad->parsed()) {
      manifest.command = "gradcheck";
      manifest.config = gc.config;
      return run_gradcheck(gc, manifest);
    }
    if (c_map->parsed()) {
      manifest.command = "export-maps";
      return run_export(mp, manifest);
    }
  } catch (const dart::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return dart::exit_code(e.kind());
  } catch (const json::exception& e) {
    std::fprintf(stderr, "error: malformed JSON: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
