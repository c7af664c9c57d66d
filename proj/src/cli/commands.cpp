#include "cli/commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "dna/data_io.hpp"
#include "dna/metrics.hpp"
#include "dna/model_io.hpp"
#include "dna/training.hpp"

namespace dnacli {

namespace fs = std::filesystem;
using Real = float;

namespace {

std::vector<std::string> list_images(const std::string& dir) {
  std::vector<std::string> out;
  if (!fs::is_directory(dir)) throw std::runtime_error(dir + " is not a directory");
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    if (ext == ".raw" || ext == ".pgm") out.push_back(entry.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

dna::GeometryConfig span_geo(long size, long views, double span_degrees) {
  dna::GeometryConfig geo;
  geo.image_size = size;
  geo.num_views = views;
  geo.angular_span = span_degrees * dna::kPi / 180.0;
  return geo;
}

}  // namespace

int cmd_phantom(const PhantomArgs& args) {
  fs::create_directories(args.out_dir);
  nlohmann::json manifest;
  manifest["kind"] = args.kind;
  manifest["size"] = args.size;
  manifest["seed"] = args.seed;
  manifest["images"] = nlohmann::json::array();

  for (int i = 0; i < args.count; ++i) {
    const dna::Rng item_rng = dna::Rng(args.seed).stream(std::uint64_t(i));
    dna::Tensor<Real> img;
    if (args.kind == "ellipse") {
      img = dna::render_phantom<Real>(dna::random_phantom_spec(item_rng), args.size);
    } else if (args.kind == "texture") {
      img = dna::texture_image<Real>(args.size, item_rng);
    } else {
      throw std::invalid_argument("phantom: unknown kind '" + args.kind +
                                  "' (expected ellipse or texture)");
    }
    std::ostringstream stem;
    stem << "phantom_" << std::setw(4) << std::setfill('0') << i;
    const std::string raw = (fs::path(args.out_dir) / (stem.str() + ".raw")).string();
    const std::string pgm = (fs::path(args.out_dir) / (stem.str() + ".pgm")).string();
    dna::save_raw(raw, img, "IMG1");
    dna::save_pgm(pgm, img);
    manifest["images"].push_back(stem.str() + ".raw");
  }
  std::ofstream mf(fs::path(args.out_dir) / "manifest.json", std::ios::binary);
  mf << manifest.dump(2) << '\n';
  return 0;
}

int cmd_project(const ProjectArgs& args) {
  dna::Tensor<Real> img = dna::load_any_image<Real>(args.input);
  dna::require(img.dim(0) == img.dim(1), "project: input image must be square");
  const dna::GeometryConfig geo = span_geo(img.dim(0), args.views, args.span_degrees);
  dna::Tensor<Real> masked = dna::circle_mask(img);
  dna::Tensor<Real> sino = dna::radon_forward(masked, geo);
  dna::save_raw(args.output, sino, "SIN1");
  return 0;
}

int cmd_fbp(const FbpArgs& args) {
  auto [magic, sino] = dna::load_raw<Real>(args.input);
  dna::require(magic == "SIN1", "fbp: " + args.input + " is not a sinogram (magic " + magic + ")");
  const long detectors = sino.dim(1);
  if (args.size != 0 && args.size != detectors)
    throw std::invalid_argument("fbp: --size " + std::to_string(args.size) +
                                " does not match the sinogram's " + std::to_string(detectors) +
                                " detectors");
  const dna::GeometryConfig geo = span_geo(detectors, sino.dim(0), args.span_degrees);
  dna::Tensor<Real> img = dna::fbp_reconstruct(sino, geo);
  dna::save_raw(args.output, img, "IMG1");
  const fs::path preview = fs::path(args.output).replace_extension(".pgm");
  dna::save_pgm(preview.string(), img);
  return 0;
}

int cmd_train(const TrainArgs& args) {
  RunConfig cfg;
  if (!args.config_file.empty()) apply_kv(cfg, parse_kv_file(args.config_file));
  for (const auto& [k, v] : args.overrides) apply_key(cfg, k, v);
  cfg.geo.num_detectors = 0;
  cfg.geo.validate();

  dna::DatasetManifest manifest;
  manifest.geo = cfg.geo;
  for (const auto& p : list_images(args.data_dir))
    manifest.entries.push_back({p, dna::DataRole::train});
  dna::Dataset<Real> ct = dna::build_dataset<Real>(manifest);

  dna::Dataset<Real> natural;
  if (!args.pretrain_dir.empty()) {
    dna::DatasetManifest nat_manifest;
    nat_manifest.geo = cfg.geo;
    for (const auto& p : list_images(args.pretrain_dir))
      nat_manifest.entries.push_back({p, dna::DataRole::train});
    natural = dna::build_dataset<Real>(nat_manifest);
  } else {
    dna::require(cfg.train.pretrain_iterations == 0,
                 "train: pretrain_iterations set but no --pretrain-dir given");
  }

  dna::DnaParams<Real> params =
      dna::DnaParams<Real>::init(cfg.geo, cfg.arch, dna::Rng(cfg.train.seed));
  auto art = dna::pretrain_then_finetune(params, args.pretrain_dir.empty() ? nullptr : &natural,
                                         ct, cfg.geo, cfg.train, args.out_dir);

  // echo the effective configuration into the run manifest
  {
    std::ifstream in(art.manifest_path);
    nlohmann::json m = nlohmann::json::parse(in);
    nlohmann::json eff;
    for (const auto& [k, v] : effective_kv(cfg)) eff[k] = v;
    m["effective_config"] = eff;
    std::ofstream out(art.manifest_path, std::ios::binary);
    out << m.dump(2) << '\n';
  }
  std::cout << "trained " << art.rows.size() << " iterations; final checkpoint at "
            << art.final_checkpoint_path << "\n";
  return 0;
}

int cmd_reconstruct(const ReconstructArgs& args) {
  dna::ModelSnapshot<Real> snap = dna::load_model<Real>(args.checkpoint);
  auto [magic, sino] = dna::load_raw<Real>(args.input);
  dna::require(magic == "SIN1",
               "reconstruct: " + args.input + " is not a sinogram (magic " + magic + ")");
  dna::require(sino.dim(0) == snap.geo.num_views && sino.dim(1) == snap.geo.detectors(),
               "reconstruct: sinogram is " + std::to_string(sino.dim(0)) + "x" +
                   std::to_string(sino.dim(1)) + " but the checkpoint expects " +
                   std::to_string(snap.geo.num_views) + "x" +
                   std::to_string(snap.geo.detectors()));

  const dna::Index N = snap.geo.image_size, V = snap.geo.num_views;
  dna::Tensor<Real> sino4 = sino.reshaped({1, 1, V, snap.geo.detectors()});
  dna::Tensor<Real> fbp = dna::fbp_reconstruct_batch(sino4, snap.geo);
  dna::Tensor<Real> i1 = dna::g1_forward(sino4, snap.params, snap.geo);
  dna::Tensor<Real> i2 = dna::g2_forward(fbp, i1, snap.params);

  dna::save_raw(args.output, i2.reshaped({N, N}), "IMG1");
  if (args.emit_intermediate) {
    const fs::path base = fs::path(args.output);
    fs::path stem = base;
    stem.replace_extension("");
    dna::save_raw(stem.string() + "_fbp.raw", fbp.reshaped({N, N}), "IMG1");
    dna::save_raw(stem.string() + "_g1.raw", i1.reshaped({N, N}), "IMG1");
  }
  return 0;
}

int cmd_eval(const EvalArgs& args) {
  auto preds = list_images(args.pred_dir);
  auto truths = list_images(args.truth_dir);
  auto stem_of = [](const std::string& p) { return fs::path(p).stem().string(); };

  std::vector<std::pair<std::string, std::string>> pairs;
  std::vector<std::string> unmatched;
  for (const auto& p : preds) {
    const std::string stem = stem_of(p);
    auto it = std::find_if(truths.begin(), truths.end(),
                           [&](const std::string& t) { return stem_of(t) == stem; });
    if (it == truths.end())
      unmatched.push_back("prediction without truth: " + p);
    else
      pairs.emplace_back(p, *it);
  }
  for (const auto& t : truths) {
    const std::string stem = stem_of(t);
    const bool found = std::any_of(preds.begin(), preds.end(), [&](const std::string& p) {
      return stem_of(p) == stem;
    });
    if (!found) unmatched.push_back("truth without prediction: " + t);
  }
  if (!unmatched.empty()) {
    std::string msg = "eval: unmatched files:";
    for (const auto& u : unmatched) msg += "\n  " + u;
    throw std::runtime_error(msg);
  }
  dna::require(!pairs.empty(), "eval: no image pairs found");

  dna::MetricsReport report;
  for (const auto& [p, t] : pairs) {
    dna::Tensor<Real> pred = dna::load_any_image<Real>(p);
    dna::Tensor<Real> truth = dna::load_any_image<Real>(t);
    dna::check_same_shape(pred, truth, "eval");
    report.rows.push_back(dna::evaluate_pair(stem_of(p), pred, truth));
  }
  report.save_csv(args.output);
  return 0;
}

}  // namespace dnacli
