// Subcommand entry points. Each takes a plain argument struct so tests can
// drive them in-process; the CLI front end maps flags onto these.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cli/run_config.hpp"

namespace dnacli {

struct PhantomArgs {
  int count = 5;
  long size = 64;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::string kind = "ellipse";  // ellipse | texture
};
int cmd_phantom(const PhantomArgs& args);

struct ProjectArgs {
  long views = 16;
  double span_degrees = 180.0;
  std::string input;
  std::string output;
};
int cmd_project(const ProjectArgs& args);

struct FbpArgs {
  std::string input;
  std::string output;
  double span_degrees = 180.0;
  long size = 0;  // 0: follow the sinogram's detector count
};
int cmd_fbp(const FbpArgs& args);

struct TrainArgs {
  std::string config_file;  // optional key=value file
  std::string data_dir;
  std::string pretrain_dir;  // optional
  std::string out_dir;
  // flag overrides, applied after the config file
  std::vector<std::pair<std::string, std::string>> overrides;
};
int cmd_train(const TrainArgs& args);

struct ReconstructArgs {
  std::string checkpoint;
  std::string input;
  std::string output;
  bool emit_intermediate = false;
};
int cmd_reconstruct(const ReconstructArgs& args);

struct EvalArgs {
  std::string pred_dir;
  std::string truth_dir;
  std::string output;
};
int cmd_eval(const EvalArgs& args);

}  // namespace dnacli
