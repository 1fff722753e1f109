#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "compshape/compshape.hpp"

namespace fs = std::filesystem;
using namespace compshape;

namespace {

std::vector<PartCount> parseCounts(const std::string& text) {
  std::vector<PartCount> counts;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw InvalidArgument("--landmarks: expected label=count, got '" + item + "'");
    }
    PartCount pc{item.substr(0, eq), 0};
    try {
      pc.count = std::stoi(item.substr(eq + 1));
    } catch (const std::exception&) {
      throw InvalidArgument("--landmarks: count for '" + pc.label + "' is not an integer");
    }
    counts.push_back(pc);
  }
  if (counts.empty()) throw InvalidArgument("--landmarks: no parts given");
  return counts;
}

void writeJson(const std::string& path, const Json& j) {
  if (!fs::path(path).parent_path().empty()) fs::create_directories(fs::path(path).parent_path());
  writeTextFile(path, j.dump(1) + "\n");
}

std::string datasetIndexPath(const std::string& dataset) {
  return fs::is_directory(dataset) ? (fs::path(dataset) / "dataset.json").string() : dataset;
}

std::string padded(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", i);
  return buf;
}

struct DemoArgs {
  int poses = 3;
  int grid = 128;
  int channels = 2;
  int squareSide = 11;
  std::string out;
  std::string annotations;
};

void runDemo(const DemoArgs& a) {
  const MixtureModel model = demoModel(a.poses, a.grid, a.channels, a.squareSide);
  saveModel(a.out, model, WeightVector::initial(a.channels));
  if (!a.annotations.empty()) writeJson(a.annotations, annotationsToJson(demoAnnotations(a.poses, a.grid)));
}

struct SynthArgs {
  std::string model;
  int count = 30;
  double noise = 0.0;
  std::uint64_t seed = 0;
  std::string out;
  int negatives = -1;
  double negativeNoise = 0.3;
  int negativeShapes = 4;
};

void runSynth(const SynthArgs& a) {
  const ModelFile file = loadModel(a.model);
  const SynthDataset data = synthDataset(file.model, a.count, a.noise, a.seed);
  const fs::path dir(a.out);
  fs::create_directories(dir / "stacks");
  fs::create_directories(dir / "truth");
  Json index = Json::array();
  Json examples = Json::array();
  for (std::size_t i = 0; i < data.instances.size(); ++i) {
    const EvalInstance& e = data.instances[i];
    const std::string stackRel = "stacks/" + e.id + ".json";
    const std::string truthRel = "truth/" + e.id + ".json";
    saveStack((dir / stackRel).string(), e.stack);
    writeJson((dir / truthRel).string(), truthToJson(e, data.mixtures[i]));
    index.push_back({{"id", e.id}, {"stack", stackRel}, {"truth", truthRel}});
    examples.push_back({{"stack", stackRel}, {"label", 1}});
  }
  const int negatives = a.negatives < 0 ? a.count : a.negatives;
  const std::vector<FeatureStack> negs =
      synthNegatives(file.model, negatives, a.negativeShapes, a.negativeNoise, a.seed);
  for (std::size_t i = 0; i < negs.size(); ++i) {
    const std::string rel = "stacks/neg-" + padded(static_cast<int>(i)) + ".json";
    saveStack((dir / rel).string(), negs[i]);
    examples.push_back({{"stack", rel}, {"label", -1}});
  }
  writeJson((dir / "dataset.json").string(), Json{{"version", 1}, {"instances", index}});
  writeJson((dir / "annotations.json").string(), annotationsToJson(data.annotations));
  writeJson((dir / "train.json").string(), Json{{"examples", examples}});
}

struct LearnArgs {
  std::string annotations;
  int k = 1;
  std::string landmarks = "head=8,neck=8,torso=16";
  int grid = 160;
  std::uint64_t seed = 0;
  int channels = 2;
  int squareSide = 11;
  std::string out;
  std::string report;
};

void runLearn(const LearnArgs& a) {
  StructureOptions options;
  options.k = a.k;
  options.counts = parseCounts(a.landmarks);
  options.gridSize = a.grid;
  options.seed = a.seed;
  options.channels = a.channels;
  options.squareSide = a.squareSide;
  const std::vector<PartAnnotation> annotations = loadAnnotations(a.annotations);
  const StructureResult r = learnStructure(annotations, options);
  saveModel(a.out, r.model, WeightVector::initial(a.channels));
  if (!a.report.empty()) {
    Json medoids = Json::array();
    for (std::size_t m : r.clustering.medoids) medoids.push_back(annotations[m].id);
    writeJson(a.report, Json{{"medoids", medoids},
                             {"assignments", r.clustering.assignments},
                             {"objectiveTrace", r.clustering.objectiveTrace},
                             {"iterations", r.clustering.iterations}});
  }
}

struct TrainArgs {
  std::string model;
  std::string manifest;
  double c = 0.01;
  int epochs = 5;
  int innerIterations = 200;
  std::string solver = "interior-point";
  std::uint64_t seed = 0;
  std::string out;
  std::string report;
};

void runTrain(const TrainArgs& a) {
  const ModelFile file = loadModel(a.model);
  const std::vector<TrainingExample> examples = loadTrainingManifest(a.manifest);
  SvmOptions options;
  options.c = a.c;
  options.epochs = a.epochs;
  options.innerIterations = a.innerIterations;
  options.seed = a.seed;
  if (a.solver == "interior-point") {
    options.solver = SvmSolver::kInteriorPoint;
  } else if (a.solver == "subgradient") {
    options.solver = SvmSolver::kSubgradient;
  } else {
    throw InvalidArgument("--solver: expected interior-point or subgradient, got '" + a.solver + "'");
  }
  const SvmResult r = trainLatentSvm(file.model, examples, options, file.weights);
  saveModel(a.out, file.model, r.weights);
  for (std::size_t i = 0; i < r.rounds.size(); ++i) {
    std::printf("round %zu  objective %.6g  accuracy %.4f  duality %.2e\n", i + 1,
                r.rounds[i].convexTrace.empty() ? r.rounds[i].objectiveAfterLatent
                                                : r.rounds[i].convexTrace.back(),
                r.rounds[i].accuracy, r.rounds[i].dualityError);
  }
  std::printf("training accuracy %.4f\n", r.accuracy);
  if (!a.report.empty()) {
    Json rounds = Json::array();
    for (const SvmRound& round : r.rounds) {
      rounds.push_back({{"convexTrace", round.convexTrace},
                        {"objectiveAfterLatent", round.objectiveAfterLatent},
                        {"accuracy", round.accuracy},
                        {"dualityError", round.dualityError},
                        {"cachedNegatives", round.cachedNegatives}});
    }
    writeJson(a.report, Json{{"rounds", rounds},
                             {"accuracy", r.accuracy},
                             {"degenerate", r.degenerate},
                             {"weights", weightsToJson(r.weights)}});
  }
}

struct InferArgs {
  std::string model;
  std::string stack;
  std::string out;
  std::string overlay;
  std::string truth;
};

void runInfer(const InferArgs& a) {
  const ModelFile file = loadModel(a.model);
  EvalInstance inst;
  if (!a.truth.empty()) inst = loadTruth(a.truth);
  inst.stack = loadStack(a.stack);
  const ParseResult r = parse(file.model, inst.stack, file.weights);
  Json j = parseResultToJson(r);
  if (!a.truth.empty()) {
    const InstanceEval e = evaluateInstance(r, inst, evalRows(file.model));
    j["evaluation"] = instanceEvalToJson(e);
    if (e.landmarkPx) std::printf("landmark error %.3f px\n", *e.landmarkPx);
  }
  writeJson(a.out, j);
  if (!a.overlay.empty()) {
    std::vector<Polygon> predicted;
    for (const PartPolygon& p : landmarksToPolygons(r)) predicted.push_back(p.polygon);
    std::vector<Polygon> truth;
    for (const AnnotatedPart& p : inst.truth) truth.push_back(p.polygon);
    writeTextFile(a.overlay, renderOverlay(inst.stack, predicted, truth));
  }
}

struct EvalArgs {
  std::string model;
  std::string dataset;
  std::string out;
  std::string table;
  std::vector<std::string> merged{"neck+torso"};
  bool noMerged = false;
  std::string overlayDir;
};

void runEval(const EvalArgs& a) {
  const ModelFile file = loadModel(a.model);
  const std::vector<EvalInstance> data = loadDataset(datasetIndexPath(a.dataset));
  EvalOptions options;
  options.merged.clear();
  if (!a.noMerged) {
    for (const std::string& group : a.merged) {
      std::vector<std::string> labels;
      std::stringstream in(group);
      std::string l;
      while (std::getline(in, l, '+')) labels.push_back(l);
      options.merged.push_back(labels);
    }
  }
  const EvalReport report = evalDataset(file.model, file.weights, data, options);
  writeJson(a.out, evalReportToJson(report));
  const std::string table = formatEvalTable(report);
  if (a.table.empty()) {
    std::cout << table;
  } else {
    writeTextFile(a.table, table);
  }
  if (!a.overlayDir.empty()) {
    fs::create_directories(a.overlayDir);
    parallelFor(data.size(), [&](std::size_t i) {
      const ParseResult r = parse(file.model, data[i].stack, file.weights);
      std::vector<Polygon> predicted;
      for (const PartPolygon& p : landmarksToPolygons(r)) predicted.push_back(p.polygon);
      std::vector<Polygon> truth;
      for (const AnnotatedPart& p : data[i].truth) truth.push_back(p.polygon);
      writeTextFile((fs::path(a.overlayDir) / (data[i].id + ".ppm")).string(),
                    renderOverlay(data[i].stack, predicted, truth));
    });
  }
}

struct BenchArgs {
  std::string mode;
  int instances = 200;
  int grid = 12;
  int levels = 3;
  double noise = 0.3;
  std::uint64_t seed = 1000;
  std::string model;
  std::string dataset;
  std::vector<int> approxSizes{40, 80, 160, 320};
  std::vector<int> exactSizes{8, 12, 16, 20, 24};
  int repetitions = 5;
  double minSeconds = 0.02;
  std::string out;
  std::string timings;
};

void runBench(const BenchArgs& a) {
  if (a.mode == "approx-error") {
    ApproxReport report;
    if (!a.model.empty() || !a.dataset.empty()) {
      if (a.model.empty() || a.dataset.empty()) {
        throw InvalidArgument("bench: --model and --dataset must be given together");
      }
      const ModelFile file = loadModel(a.model);
      const std::vector<EvalInstance> data = loadDataset(datasetIndexPath(a.dataset));
      std::vector<ParseInstance> instances;
      for (const EvalInstance& e : data) {
        for (const CompTree& tree : file.model.mixtures) {
          instances.push_back({tree, e.stack, file.weights, file.model.squareSide, {}});
        }
      }
      report = approxErrorReport(instances);
    } else {
      report = oracleCheck(a.instances, a.seed, a.grid, a.levels, a.noise);
    }
    writeJson(a.out, approxReportToJson(report));
    std::cout << approxReportToJson(report, false).dump(1) << "\n";
  } else if (a.mode == "complexity") {
    ComplexityOptions o;
    o.approxSizes = a.approxSizes;
    o.exactSizes = a.exactSizes;
    o.repetitions = a.repetitions;
    o.levels = a.levels;
    o.minSeconds = a.minSeconds;
    o.seed = a.seed;
    const ComplexityReport report = complexityBench(o);
    writeJson(a.out, complexityReportToJson(report, false));
    std::int64_t violations = 0;
    for (const ComplexityRow& row : report.rows) violations += row.boundViolations;
    std::printf("rows %zu  bound violations %lld\n", report.rows.size(),
                static_cast<long long>(violations));
    if (!a.timings.empty()) {
      writeJson(a.timings, complexityReportToJson(report, true));
      std::printf("approx slope %.3f  exact slope %.3f\n", report.approxSlope, report.exactSlope);
    }
  } else {
    throw InvalidArgument("--mode: expected approx-error or complexity, got '" + a.mode + "'");
  }
}

struct OracleArgs {
  int grid = 12;
  int levels = 3;
  int instances = 200;
  std::uint64_t seed = 1000;
  double noise = 0.3;
  std::string out;
};

void runOracle(const OracleArgs& a) {
  const ApproxReport report = oracleCheck(a.instances, a.seed, a.grid, a.levels, a.noise);
  if (!a.out.empty()) writeJson(a.out, approxReportToJson(report));
  std::cout << approxReportToJson(report, false).dump(1) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compositional shape models: synthesis, learning, parsing and evaluation"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker cap, 0 = one per hardware thread")
      ->check(CLI::NonNegativeNumber);

  DemoArgs demo;
  auto* demoCmd = app.add_subcommand("demo-shapes", "Write the built-in horse-like demo model");
  demoCmd->add_option("--poses", demo.poses, "Number of poses (1-6)")->capture_default_str();
  demoCmd->add_option("--grid", demo.grid, "Grid side")->capture_default_str();
  demoCmd->add_option("--channels", demo.channels, "Appearance channels")->capture_default_str();
  demoCmd->add_option("--square-side", demo.squareSide, "Appearance window side")->capture_default_str();
  demoCmd->add_option("--out", demo.out, "Model file")->required();
  demoCmd->add_option("--annotations", demo.annotations, "Also write the pose annotations");

  SynthArgs synth;
  auto* synthCmd = app.add_subcommand("synth", "Render feature stacks with ground truth");
  synthCmd->add_option("--model", synth.model, "Generating model")->required();
  synthCmd->add_option("--count", synth.count, "Positive instances")->capture_default_str();
  synthCmd->add_option("--noise", synth.noise, "Gaussian noise sigma")->capture_default_str();
  synthCmd->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
  synthCmd->add_option("--out", synth.out, "Output directory")->required();
  synthCmd->add_option("--negatives", synth.negatives, "Negative stacks (default: --count)");
  synthCmd->add_option("--negative-noise", synth.negativeNoise, "Noise on negatives")
      ->capture_default_str();
  synthCmd->add_option("--negative-shapes", synth.negativeShapes,
                       "Random outlines per negative, 0 = plain background")
      ->capture_default_str();

  LearnArgs learn;
  auto* learnCmd = app.add_subcommand("learn-structure", "Cluster annotations and build mixtures");
  learnCmd->add_option("--annotations", learn.annotations, "Annotation file")->required();
  learnCmd->add_option("--k", learn.k, "Number of mixtures")->capture_default_str();
  learnCmd->add_option("--landmarks", learn.landmarks, "Landmarks per part")->capture_default_str();
  learnCmd->add_option("--grid", learn.grid, "Working grid side")->capture_default_str();
  learnCmd->add_option("--seed", learn.seed, "Random seed")->capture_default_str();
  learnCmd->add_option("--channels", learn.channels, "Appearance channels")->capture_default_str();
  learnCmd->add_option("--square-side", learn.squareSide, "Appearance window side")
      ->capture_default_str();
  learnCmd->add_option("--out", learn.out, "Model file")->required();
  learnCmd->add_option("--report", learn.report, "Clustering report");

  TrainArgs train;
  auto* trainCmd = app.add_subcommand("train", "Latent SVM weight learning");
  trainCmd->add_option("--model", train.model, "Model file (weights used as the start)")->required();
  trainCmd->add_option("--manifest", train.manifest, "Training manifest")->required();
  trainCmd->add_option("--c", train.c, "Hinge weight C")->capture_default_str();
  trainCmd->add_option("--epochs", train.epochs, "Outer rounds")->capture_default_str();
  trainCmd->add_option("--inner", train.innerIterations, "Inner iterations per round")
      ->capture_default_str();
  trainCmd->add_option("--solver", train.solver, "interior-point or subgradient")
      ->capture_default_str();
  trainCmd->add_option("--seed", train.seed, "Random seed")->capture_default_str();
  trainCmd->add_option("--out", train.out, "Trained model file")->required();
  trainCmd->add_option("--report", train.report, "Per-round training report");

  InferArgs infer;
  auto* inferCmd = app.add_subcommand("infer", "Parse one feature stack");
  inferCmd->add_option("--model", infer.model, "Trained model")->required();
  inferCmd->add_option("--stack", infer.stack, "Stack manifest")->required();
  inferCmd->add_option("--out", infer.out, "Parse result")->required();
  inferCmd->add_option("--overlay", infer.overlay, "PPM overlay of the parse");
  inferCmd->add_option("--truth", infer.truth, "Truth record to score against");

  EvalArgs eval;
  auto* evalCmd = app.add_subcommand("eval", "Per-part IOU over a dataset");
  evalCmd->add_option("--model", eval.model, "Trained model")->required();
  evalCmd->add_option("--dataset", eval.dataset, "Dataset directory or index")->required();
  evalCmd->add_option("--out", eval.out, "Report file")->required();
  evalCmd->add_option("--table", eval.table, "Aligned text table (default: stdout)");
  evalCmd->add_option("--merged", eval.merged, "Merged row, labels joined by '+'")
      ->capture_default_str();
  evalCmd->add_flag("--no-merged", eval.noMerged, "Split rows only");
  evalCmd->add_option("--overlay-dir", eval.overlayDir, "PPM overlay per instance");

  BenchArgs bench;
  auto* benchCmd = app.add_subcommand("bench", "Approximation error or complexity benchmark");
  benchCmd->add_option("--mode", bench.mode, "approx-error or complexity")->required();
  benchCmd->add_option("--instances", bench.instances, "Random instances")->capture_default_str();
  benchCmd->add_option("--grid", bench.grid, "Grid side of random instances")->capture_default_str();
  benchCmd->add_option("--tree-levels", bench.levels, "Tree levels")->capture_default_str();
  benchCmd->add_option("--noise", bench.noise, "Noise of random instances")->capture_default_str();
  benchCmd->add_option("--seed", bench.seed, "First seed")->capture_default_str();
  benchCmd->add_option("--model", bench.model, "Model for approx-error on a dataset");
  benchCmd->add_option("--dataset", bench.dataset, "Dataset for approx-error");
  benchCmd->add_option("--approx-sizes", bench.approxSizes, "Grid sides, approximate path")
      ->delimiter(',')
      ->capture_default_str();
  benchCmd->add_option("--exact-sizes", bench.exactSizes, "Grid sides, exact path")
      ->delimiter(',')
      ->capture_default_str();
  benchCmd->add_option("--repetitions", bench.repetitions, "Timings per size")->capture_default_str();
  benchCmd->add_option("--min-seconds", bench.minSeconds, "Minimum duration of one timing")
      ->capture_default_str();
  benchCmd->add_option("--out", bench.out, "Report file (no timings)")->required();
  benchCmd->add_option("--timings", bench.timings, "Report with timings and slopes");

  OracleArgs oracle;
  auto* oracleCmd = app.add_subcommand("oracle-check", "Approximate versus exact parse statistics");
  oracleCmd->add_option("--grid", oracle.grid, "Grid side")->capture_default_str();
  oracleCmd->add_option("--tree-levels", oracle.levels, "Tree levels")->capture_default_str();
  oracleCmd->add_option("--instances", oracle.instances, "Instances")->capture_default_str();
  oracleCmd->add_option("--seed", oracle.seed, "First seed")->capture_default_str();
  oracleCmd->add_option("--noise", oracle.noise, "Feature noise")->capture_default_str();
  oracleCmd->add_option("--out", oracle.out, "Full report with per-instance rows");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorCategory::kInvalidArgument);
  }

  try {
    setThreadCount(threads);
    if (*demoCmd) runDemo(demo);
    if (*synthCmd) runSynth(synth);
    if (*learnCmd) runLearn(learn);
    if (*trainCmd) runTrain(train);
    if (*inferCmd) runInfer(infer);
    if (*evalCmd) runEval(eval);
    if (*benchCmd) runBench(bench);
    if (*oracleCmd) runOracle(oracle);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.category());
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(ErrorCategory::kIo);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
