#include "cli/run_config.hpp"

#include <fstream>
#include <sstream>

namespace dnacli {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long x = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key + "' expects an integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key + "' expects a number, got '" + v + "'");
  }
}

}  // namespace

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  long line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: " + path + ":" + std::to_string(line_no) +
                               ": expected key=value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error("config: " + path + ":" + std::to_string(line_no) + ": empty key");
    kv[key] = value;
  }
  return kv;
}

void apply_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "size") cfg.geo.image_size = to_int(key, value);
  else if (key == "views") cfg.geo.num_views = to_int(key, value);
  else if (key == "span_degrees") cfg.geo.angular_span = to_double(key, value) * dna::kPi / 180.0;
  else if (key == "branches") cfg.arch.branches = to_int(key, value);
  else if (key == "unet_width") cfg.arch.unet_width = to_int(key, value);
  else if (key == "unet_groups") cfg.arch.unet_groups = to_int(key, value);
  else if (key == "critic_base") cfg.arch.critic_base = to_int(key, value);
  else if (key == "batch_size") cfg.train.batch_size = to_int(key, value);
  else if (key == "lr") cfg.train.adam.lr = to_double(key, value);
  else if (key == "beta1") cfg.train.adam.beta1 = to_double(key, value);
  else if (key == "beta2") cfg.train.adam.beta2 = to_double(key, value);
  else if (key == "adam_eps") cfg.train.adam.eps = to_double(key, value);
  else if (key == "critic_updates_per_gen") cfg.train.critic_updates_per_gen = to_int(key, value);
  else if (key == "max_iterations") cfg.train.max_iterations = to_int(key, value);
  else if (key == "pretrain_iterations") cfg.train.pretrain_iterations = to_int(key, value);
  else if (key == "seed") cfg.train.seed = std::uint64_t(to_int(key, value));
  else if (key == "checkpoint_every") cfg.train.checkpoint_every = to_int(key, value);
  else if (key == "lambda_q") cfg.train.loss_weights.lambda_q = to_double(key, value);
  else if (key == "lambda_p") cfg.train.loss_weights.lambda_p = to_double(key, value);
  else if (key == "lambda_r") cfg.train.loss_weights.lambda_r = to_double(key, value);
  else if (key == "lambda_gp") cfg.train.loss_weights.lambda_gp = to_double(key, value);
  else
    throw std::invalid_argument("config: unknown key '" + key + "'");
}

std::map<std::string, std::string> effective_kv(const RunConfig& cfg) {
  auto num = [](double v) {
    std::ostringstream os;
    os << std::setprecision(12) << v;
    return os.str();
  };
  std::map<std::string, std::string> kv;
  kv["size"] = std::to_string(cfg.geo.image_size);
  kv["views"] = std::to_string(cfg.geo.num_views);
  kv["span_degrees"] = num(cfg.geo.angular_span * 180.0 / dna::kPi);
  kv["branches"] = std::to_string(cfg.arch.branches);
  kv["unet_width"] = std::to_string(cfg.arch.unet_width);
  kv["unet_groups"] = std::to_string(cfg.arch.unet_groups);
  kv["critic_base"] = std::to_string(cfg.arch.critic_base);
  kv["batch_size"] = std::to_string(cfg.train.batch_size);
  kv["lr"] = num(cfg.train.adam.lr);
  kv["beta1"] = num(cfg.train.adam.beta1);
  kv["beta2"] = num(cfg.train.adam.beta2);
  kv["adam_eps"] = num(cfg.train.adam.eps);
  kv["critic_updates_per_gen"] = std::to_string(cfg.train.critic_updates_per_gen);
  kv["max_iterations"] = std::to_string(cfg.train.max_iterations);
  kv["pretrain_iterations"] = std::to_string(cfg.train.pretrain_iterations);
  kv["seed"] = std::to_string(cfg.train.seed);
  kv["checkpoint_every"] = std::to_string(cfg.train.checkpoint_every);
  kv["lambda_q"] = num(cfg.train.loss_weights.lambda_q);
  kv["lambda_p"] = num(cfg.train.loss_weights.lambda_p);
  kv["lambda_r"] = num(cfg.train.loss_weights.lambda_r);
  kv["lambda_gp"] = num(cfg.train.loss_weights.lambda_gp);
  return kv;
}

}  // namespace dnacli
