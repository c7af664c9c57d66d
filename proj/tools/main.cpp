// dna: few-view CT reconstruction pipeline.
//
//   dna phantom      generate a phantom or texture corpus
//   dna project      simulate a sinogram from an image
//   dna fbp          analytic filtered backprojection
//   dna train        train the dual-generator model (optional pretraining)
//   dna reconstruct  run a trained model on a sinogram
//   dna eval         SSIM/PSNR/RMSE report over matched directories

#include <CLI11.hpp>

#include <iostream>

#include "cli/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"few-view CT reconstruction (learned filtered backprojection)"};
  app.require_subcommand(1);

  dnacli::PhantomArgs phantom;
  auto* cmd_ph = app.add_subcommand("phantom", "generate phantom images");
  cmd_ph->add_option("--count", phantom.count, "number of images");
  cmd_ph->add_option("--size", phantom.size, "image size in pixels");
  cmd_ph->add_option("--seed", phantom.seed, "random seed");
  cmd_ph->add_option("--kind", phantom.kind, "ellipse | texture");
  cmd_ph->add_option("--out-dir", phantom.out_dir, "output directory")->required();

  dnacli::ProjectArgs project;
  auto* cmd_pr = app.add_subcommand("project", "simulate a sinogram from an image");
  cmd_pr->add_option("--views", project.views, "number of view angles");
  cmd_pr->add_option("--span", project.span_degrees, "angular span in degrees");
  cmd_pr->add_option("--in", project.input, "input image (.raw IMG1 or .pgm)")->required();
  cmd_pr->add_option("--out", project.output, "output sinogram (.raw SIN1)")->required();

  dnacli::FbpArgs fbp;
  auto* cmd_fb = app.add_subcommand("fbp", "filtered backprojection");
  cmd_fb->add_option("--in", fbp.input, "input sinogram (.raw SIN1)")->required();
  cmd_fb->add_option("--out", fbp.output, "output image (.raw IMG1; .pgm preview alongside)")
      ->required();
  cmd_fb->add_option("--span", fbp.span_degrees, "angular span in degrees");
  cmd_fb->add_option("--size", fbp.size, "image size (must match the detector count)");

  dnacli::TrainArgs train;
  std::vector<std::string> train_set;
  auto* cmd_tr = app.add_subcommand("train", "train the model");
  cmd_tr->add_option("--config", train.config_file, "key=value config file");
  cmd_tr->add_option("--data-dir", train.data_dir, "training image directory")->required();
  cmd_tr->add_option("--pretrain-dir", train.pretrain_dir, "natural-image directory");
  cmd_tr->add_option("--out-dir", train.out_dir, "run output directory")->required();
  cmd_tr->add_option("--set", train_set, "override a config key, e.g. --set max_iterations=100");

  dnacli::ReconstructArgs rec;
  auto* cmd_re = app.add_subcommand("reconstruct", "reconstruct from a sinogram");
  cmd_re->add_option("--checkpoint", rec.checkpoint, "model checkpoint (.dna)")->required();
  cmd_re->add_option("--in", rec.input, "input sinogram (.raw SIN1)")->required();
  cmd_re->add_option("--out", rec.output, "output image (.raw IMG1)")->required();
  cmd_re->add_flag("--emit-intermediate", rec.emit_intermediate,
                   "also write the FBP and first-generator images");

  dnacli::EvalArgs eval;
  auto* cmd_ev = app.add_subcommand("eval", "quality metrics over matched directories");
  cmd_ev->add_option("--pred-dir", eval.pred_dir, "reconstructed images")->required();
  cmd_ev->add_option("--truth-dir", eval.truth_dir, "ground-truth images")->required();
  cmd_ev->add_option("--out", eval.output, "output CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*cmd_ph) return dnacli::cmd_phantom(phantom);
    if (*cmd_pr) return dnacli::cmd_project(project);
    if (*cmd_fb) return dnacli::cmd_fbp(fbp);
    if (*cmd_tr) {
      for (const auto& kv : train_set) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
          throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
        train.overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
      }
      return dnacli::cmd_train(train);
    }
    if (*cmd_re) return dnacli::cmd_reconstruct(rec);
    if (*cmd_ev) return dnacli::cmd_eval(eval);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
